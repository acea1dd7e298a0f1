"""CTC loss, forced alignment, and greedy per-frame prediction.

All trellis computation runs in log space; probability-space recursions
underflow once sequences grow past a few dozen frames, so they are not
offered at all.  The loss is the exact negative log of the summed path
probability over every frame path that collapses (remove repeats, then
blanks) to the transcript.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleAlignmentError,
    InvalidShapeError,
    InvalidTranscriptError,
)

NEG_INF = -np.inf


@dataclass(frozen=True)
class CharSet:
    """Ordered character inventory with a designated blank symbol.

    Symbols are single characters; the blank never appears in transcripts.
    """

    symbols: tuple[str, ...]
    blank_index: int

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise InvalidTranscriptError("character set symbols must be unique")
        if not 0 <= self.blank_index < len(self.symbols):
            raise InvalidTranscriptError(f"blank index {self.blank_index} out of range")
        for s in self.symbols:
            if len(s) != 1:
                raise InvalidTranscriptError(f"symbols must be single characters, got {s!r}")

    @classmethod
    def from_letters(cls, letters: str, blank_symbol: str = "-") -> "CharSet":
        """Blank at index 0 followed by the given letters."""
        if blank_symbol in letters:
            raise InvalidTranscriptError("blank symbol collides with a letter")
        return cls(symbols=(blank_symbol,) + tuple(letters), blank_index=0)

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def blank_symbol(self) -> str:
        return self.symbols[self.blank_index]

    def non_blank_indices(self) -> list[int]:
        return [i for i in range(len(self.symbols)) if i != self.blank_index]

    def to_indices(self, text: str) -> np.ndarray:
        """Transcript string to symbol indices; rejects unknown and blank."""
        lookup = {s: i for i, s in enumerate(self.symbols)}
        out = np.empty(len(text), dtype=np.intp)
        for pos, ch in enumerate(text):
            idx = lookup.get(ch)
            if idx is None:
                raise InvalidTranscriptError(f"unknown character {ch!r}")
            if idx == self.blank_index:
                raise InvalidTranscriptError("blank may not appear in a transcript")
            out[pos] = idx
        return out

    def to_text(self, indices) -> str:
        return "".join(self.symbols[int(i)] for i in indices)


@dataclass(frozen=True)
class LogProbLattice:
    """Per-frame log probabilities over the character vocabulary."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise InvalidShapeError(f"lattice must be N x V with N >= 1, got {arr.shape}")
        sums = np.exp(arr).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise InvalidShapeError("lattice rows must exponentiate to 1 within 1e-9")
        object.__setattr__(self, "values", arr)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def vocab(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FrameLabelAssignment:
    """Per-frame character labels plus a keep/drop mask.

    Dropped frames (mask false) must never be used downstream.
    """

    labels: np.ndarray
    keep_mask: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.intp)
        mask = np.asarray(self.keep_mask, dtype=bool)
        if labels.shape != mask.shape or labels.ndim != 1:
            raise InvalidShapeError("labels and keep_mask must be parallel 1-D arrays")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "keep_mask", mask)

    @property
    def frames(self) -> int:
        return self.labels.shape[0]

    def kept_labels(self) -> np.ndarray:
        return self.labels[self.keep_mask]


def extend_with_blanks(labels, cs: CharSet) -> np.ndarray:
    """Interleave blanks before, between, and after every label.

    "ab" becomes "-a-b-"; the result has length 2M + 1.
    """
    labels = np.asarray(labels, dtype=np.intp)
    if labels.ndim != 1:
        raise InvalidShapeError("labels must be a 1-D sequence")
    if np.any(labels == cs.blank_index):
        raise InvalidTranscriptError("blank may not appear inside a label sequence")
    ext = np.full(2 * labels.shape[0] + 1, cs.blank_index, dtype=np.intp)
    ext[1::2] = labels
    return ext


def min_frames_required(labels) -> int:
    """Fewest frames that can realize the labels: M plus adjacent repeats."""
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0:
        return 0
    repeats = int(np.sum(labels[1:] == labels[:-1]))
    return int(labels.size) + repeats


def _check_feasible(lattice: LogProbLattice, labels: np.ndarray) -> None:
    need = min_frames_required(labels)
    if need > lattice.frames:
        raise InfeasibleAlignmentError(
            f"{labels.size} labels need {need} frames, lattice has {lattice.frames}")


def _skip_allowed(ext: np.ndarray, blank: int) -> np.ndarray:
    """States reachable by the skip transition s-2 -> s."""
    allowed = np.zeros(ext.shape[0], dtype=bool)
    if ext.shape[0] > 2:
        allowed[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return allowed


def _shift1(row: np.ndarray) -> np.ndarray:
    out = np.full_like(row, NEG_INF)
    out[1:] = row[:-1]
    return out


def _shift2(row: np.ndarray) -> np.ndarray:
    out = np.full_like(row, NEG_INF)
    out[2:] = row[:-2]
    return out


def ctc_loss(lattice: LogProbLattice, labels, cs: CharSet) -> tuple[float, np.ndarray]:
    """Negative log likelihood of the transcript and its lattice gradient.

    Runs the forward-backward algorithm over the blank-extended trellis.
    The gradient is with respect to the lattice log probabilities treated
    as free variables.  Raises InfeasibleAlignmentError when the transcript
    cannot fit in the available frames (never returns an infinite loss).
    """
    labels = np.asarray(labels, dtype=np.intp)
    ext = extend_with_blanks(labels, cs)
    _check_feasible(lattice, labels)
    n, _ = lattice.values.shape
    s = ext.shape[0]
    emit = lattice.values[:, ext]  # n x s
    skip_ok = _skip_allowed(ext, cs.blank_index)

    alpha = np.full((n, s), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s > 1:
        alpha[0, 1] = emit[0, 1]
    with np.errstate(invalid="ignore"):
        for t in range(1, n):
            prev = alpha[t - 1]
            acc = np.logaddexp(prev, _shift1(prev))
            skip = _shift2(prev)
            acc = np.where(skip_ok, np.logaddexp(acc, skip), acc)
            alpha[t] = acc + emit[t]

    final = alpha[n - 1, s - 1]
    if s > 1:
        final = np.logaddexp(final, alpha[n - 1, s - 2])
    if not np.isfinite(final):
        raise InfeasibleAlignmentError("no feasible path has positive probability")

    # beta excludes the emission at its own frame, so alpha + beta sums the
    # probability of complete paths through each (frame, state) cell.
    beta = np.full((n, s), NEG_INF)
    beta[n - 1, s - 1] = 0.0
    if s > 1:
        beta[n - 1, s - 2] = 0.0
    with np.errstate(invalid="ignore"):
        for t in range(n - 2, -1, -1):
            nxt = beta[t + 1] + emit[t + 1]
            acc = np.logaddexp(nxt, _shift1_rev(nxt))
            skip = _shift2_rev(np.where(skip_ok, nxt, NEG_INF))
            acc = np.logaddexp(acc, skip)
            beta[t] = acc

    with np.errstate(invalid="ignore"):
        posterior = np.exp(alpha + beta - final)
    grad = np.zeros_like(lattice.values)
    np.add.at(grad, (np.arange(n)[:, None], ext[None, :]), posterior)
    return float(-final), -grad


def _shift1_rev(row: np.ndarray) -> np.ndarray:
    out = np.full_like(row, NEG_INF)
    out[:-1] = row[1:]
    return out


def _shift2_rev(row: np.ndarray) -> np.ndarray:
    out = np.full_like(row, NEG_INF)
    out[:-2] = row[2:]
    return out


def ctc_forced_align(lattice: LogProbLattice, labels, cs: CharSet) -> FrameLabelAssignment:
    """Most probable frame labeling among paths collapsing to the transcript.

    Viterbi over the extended trellis; score ties are broken toward the
    lower extended state index so alignments are deterministic.  Blank
    frames come back with keep_mask false.
    """
    labels = np.asarray(labels, dtype=np.intp)
    ext = extend_with_blanks(labels, cs)
    _check_feasible(lattice, labels)
    n, _ = lattice.values.shape
    s = ext.shape[0]
    emit = lattice.values[:, ext]
    skip_ok = _skip_allowed(ext, cs.blank_index)

    score = np.full((n, s), NEG_INF)
    back = np.zeros((n, s), dtype=np.intp)
    score[0, 0] = emit[0, 0]
    if s > 1:
        score[0, 1] = emit[0, 1]
    back[0] = np.arange(s)
    for t in range(1, n):
        prev = score[t - 1]
        # candidate order s-2, s-1, s: argmax picks the first (lowest) on ties
        cand = np.stack([
            np.where(skip_ok, _shift2(prev), NEG_INF),
            _shift1(prev),
            prev,
        ])
        pick = np.argmax(cand, axis=0)
        best = cand[pick, np.arange(s)]
        score[t] = best + emit[t]
        back[t] = np.arange(s) - 2 + pick

    if s > 1 and score[n - 1, s - 2] >= score[n - 1, s - 1]:
        state = s - 2
    else:
        state = s - 1
    if not np.isfinite(score[n - 1, state]):
        raise InfeasibleAlignmentError("no feasible path has positive probability")

    path = np.empty(n, dtype=np.intp)
    for t in range(n - 1, -1, -1):
        path[t] = ext[state]
        state = back[t, state]
    return FrameLabelAssignment(labels=path, keep_mask=path != cs.blank_index)


def ctc_greedy_predict(lattice: LogProbLattice, threshold: float,
                       cs: CharSet) -> FrameLabelAssignment:
    """Per-frame argmax labels, kept only above threshold and non-blank.

    A frame is kept iff its argmax softmax score strictly exceeds the
    threshold and the winning label is not blank.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    best = np.argmax(lattice.values, axis=1)
    conf = np.exp(lattice.values[np.arange(lattice.frames), best])
    keep = (conf > threshold) & (best != cs.blank_index)
    return FrameLabelAssignment(labels=best, keep_mask=keep)


def collapse_path(path, cs: CharSet) -> np.ndarray:
    """Collapse a frame path: merge repeats, then drop blanks."""
    path = np.asarray(path, dtype=np.intp)
    out = []
    prev = -1
    for p in path:
        if p != prev and p != cs.blank_index:
            out.append(int(p))
        prev = p
    return np.asarray(out, dtype=np.intp)
