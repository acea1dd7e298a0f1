"""Synthetic speech-like corpora with parameterized domain shifts.

Each character owns a fixed random prototype vector; an utterance's frames
are its transcript's prototypes repeated for a random per-character
duration plus i.i.d. jitter.  Device shifts multiply every frame by a
well-conditioned channel matrix and add a bias; environment shifts add
seeded Gaussian noise.  All randomness flows from explicit seeds.

On-disk layout (the interchange contract for the CLI):

    manifest.tsv      #domain<TAB><tag> header line, then one row per
                      utterance: id, relative frame path, transcript or
                      "-", domain tag
    frames/<id>.txt   first line "N D", then N lines of D decimals
                      (17 significant digits, exact float64 round trip)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .ctc import CharSet
from .errors import InvalidShapeError, ParseError

DEVICE = "device"
ENVIRONMENT = "environment"
_COND_LIMIT = 100.0


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    frames: np.ndarray  # N x D_in
    transcript: str | None
    domain: str

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise InvalidShapeError(f"utterance frames must be N x D with N >= 1, got {arr.shape}")
        object.__setattr__(self, "frames", arr)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class DomainCorpus:
    """Utterances sharing a domain tag.

    ``transcripts_hidden`` marks a corpus whose transcripts exist only for
    evaluation (a shifted target domain); training code refuses to read
    them.  The flag is transport metadata and does not persist to disk or
    participate in equality.
    """

    utterances: tuple[Utterance, ...]
    domain_tag: str
    transcripts_hidden: bool = False

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))

    def __len__(self) -> int:
        return len(self.utterances)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DomainCorpus):
            return NotImplemented
        if self.domain_tag != other.domain_tag or len(self) != len(other):
            return False
        for a, b in zip(self.utterances, other.utterances):
            if (a.utt_id != b.utt_id or a.transcript != b.transcript
                    or a.domain != b.domain or not np.array_equal(a.frames, b.frames)):
                return False
        return True

    def reveal_transcripts(self) -> "DomainCorpus":
        """Evaluation-only view with transcripts readable."""
        return replace(self, transcripts_hidden=False)


@dataclass(frozen=True)
class GeneratorSpec:
    """Corpus shape and seeding.

    ``seed`` fixes the domain geometry (character prototypes);
    ``utterance_seed`` varies the sampled utterances within that domain
    and falls back to ``seed`` when None.  Two specs sharing ``seed`` but
    not ``utterance_seed`` describe fresh samples from the same domain.
    """

    charset: CharSet
    num_utterances: int
    transcript_len: tuple[int, int] = (3, 6)
    frames_per_char: tuple[int, int] = (2, 4)
    input_dim: int = 10
    jitter: float = 0.25
    seed: int = 0
    utterance_seed: int | None = None
    min_prototype_distance: float = 2.0

    def __post_init__(self):
        if self.transcript_len[0] < 1 or self.transcript_len[0] > self.transcript_len[1]:
            raise ValueError(f"bad transcript length range {self.transcript_len}")
        if self.frames_per_char[0] < 1 or self.frames_per_char[0] > self.frames_per_char[1]:
            raise ValueError(f"bad frames-per-character range {self.frames_per_char}")
        if self.input_dim < 2:
            raise ValueError("input_dim must be >= 2")
        if self.num_utterances < 0:
            raise ValueError("num_utterances must be >= 0")


@dataclass(frozen=True)
class DomainShiftSpec:
    """A device channel (matrix + bias) or an additive noise environment."""

    kind: str
    tag: str
    channel_matrix: np.ndarray | None = None
    channel_bias: np.ndarray | None = None
    noise_amplitude: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.kind not in (DEVICE, ENVIRONMENT):
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if self.kind == DEVICE:
            a = np.asarray(self.channel_matrix, dtype=np.float64)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise InvalidShapeError(f"channel matrix must be square, got {a.shape}")
            if np.linalg.cond(a) > _COND_LIMIT:
                raise ValueError(f"channel matrix condition number exceeds {_COND_LIMIT}")
            b = (np.zeros(a.shape[0]) if self.channel_bias is None
                 else np.asarray(self.channel_bias, dtype=np.float64).ravel())
            if b.shape[0] != a.shape[0]:
                raise InvalidShapeError("channel bias length must match the matrix")
            object.__setattr__(self, "channel_matrix", a)
            object.__setattr__(self, "channel_bias", b)
        else:
            if self.noise_amplitude < 0:
                raise ValueError("noise amplitude must be >= 0")


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFF, *stream]))


def character_prototypes(spec: GeneratorSpec) -> np.ndarray:
    """One prototype vector per non-blank character, distinct by rejection."""
    rng = _rng(spec.seed, 0)
    chars = spec.charset.non_blank_indices()
    for _ in range(1000):
        protos = rng.normal(0.0, 1.0, size=(len(chars), spec.input_dim))
        d2 = ((protos[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        if np.sqrt(d2.min()) >= spec.min_prototype_distance:
            return protos
    raise ValueError("could not sample distinct prototypes; lower min_prototype_distance")


def generate(spec: GeneratorSpec) -> DomainCorpus:
    """Clean reference-domain corpus, fully determined by the seed."""
    protos = character_prototypes(spec)
    chars = spec.charset.non_blank_indices()
    char_row = {c: i for i, c in enumerate(chars)}
    utt_seed = spec.seed if spec.utterance_seed is None else spec.utterance_seed
    rng = _rng(utt_seed, 1)
    lo, hi = spec.transcript_len
    dlo, dhi = spec.frames_per_char
    utts = []
    for k in range(spec.num_utterances):
        m = int(rng.integers(lo, hi + 1))
        # no adjacent repeats: the frame-local toy encoder cannot place the
        # separating blank two identical runs would require
        idx = []
        for _ in range(m):
            c = int(rng.integers(0, len(chars)))
            while idx and c == idx[-1] and len(chars) > 1:
                c = int(rng.integers(0, len(chars)))
            idx.append(c)
        transcript = "".join(spec.charset.symbols[chars[i]] for i in idx)
        rows = []
        for i in idx:
            dur = int(rng.integers(dlo, dhi + 1))
            base = protos[char_row[chars[i]]]
            rows.append(base + spec.jitter * rng.normal(size=(dur, spec.input_dim)))
        frames = np.concatenate(rows, axis=0)
        utts.append(Utterance(utt_id=f"utt{k:04d}", frames=frames,
                              transcript=transcript, domain="clean"))
    return DomainCorpus(utterances=tuple(utts), domain_tag="clean")


def sample_device_shift(dim: int, strength: float, bias_scale: float,
                        seed: int, tag: str) -> DomainShiftSpec:
    """Random channel of deterministic magnitude.

    The matrix is the identity plus a random perturbation normalized to
    spectral norm ``strength`` (rejection-sampled to the condition bound);
    the bias direction is random with norm ``bias_scale * sqrt(dim)``.
    Fixing both magnitudes keeps the degradation level comparable across
    seeds; only the shift's direction varies.
    """
    rng = _rng(seed, 2)
    for _ in range(1000):
        g = rng.normal(size=(dim, dim))
        a = np.eye(dim) + strength * g / np.linalg.norm(g, 2)
        if np.linalg.cond(a) <= _COND_LIMIT:
            direction = rng.normal(size=dim)
            bias = bias_scale * np.sqrt(dim) * direction / np.linalg.norm(direction)
            return DomainShiftSpec(kind=DEVICE, tag=tag, channel_matrix=a, channel_bias=bias)
    raise ValueError("could not sample a well-conditioned channel; lower strength")


def apply_shift(corpus: DomainCorpus, shift: DomainShiftSpec) -> DomainCorpus:
    """Shifted copy of the corpus; transcripts carried over but hidden."""
    out = []
    for k, utt in enumerate(corpus.utterances):
        if shift.kind == DEVICE:
            a = shift.channel_matrix
            if utt.frames.shape[1] != a.shape[0]:
                raise InvalidShapeError(
                    f"frames have dim {utt.frames.shape[1]}, channel expects {a.shape[0]}")
            frames = utt.frames @ a.T + shift.channel_bias
        else:
            noise_rng = _rng(shift.noise_seed, 3, k)
            frames = utt.frames + shift.noise_amplitude * noise_rng.normal(size=utt.frames.shape)
        out.append(Utterance(utt_id=utt.utt_id, frames=frames,
                             transcript=utt.transcript, domain=shift.tag))
    return DomainCorpus(utterances=tuple(out), domain_tag=shift.tag,
                        transcripts_hidden=True)


# ---------------------------------------------------------------------------
# On-disk format
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def write_corpus(corpus: DomainCorpus, directory) -> None:
    directory = os.fspath(directory)
    frames_dir = os.path.join(directory, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    lines = [f"#domain\t{corpus.domain_tag}"]
    for utt in corpus.utterances:
        rel = f"frames/{utt.utt_id}.txt"
        n, d = utt.frames.shape
        with open(os.path.join(directory, rel), "w") as fh:
            fh.write(f"{n} {d}\n")
            for row in utt.frames:
                fh.write(" ".join(_fmt(x) for x in row) + "\n")
        transcript = "-" if utt.transcript is None else utt.transcript
        lines.append(f"{utt.utt_id}\t{rel}\t{transcript}\t{utt.domain}")
    with open(os.path.join(directory, "manifest.tsv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_corpus(directory) -> DomainCorpus:
    directory = os.fspath(directory)
    manifest = os.path.join(directory, "manifest.tsv")
    if not os.path.exists(manifest):
        raise ParseError(manifest, 0, "manifest not found")
    with open(manifest) as fh:
        raw = fh.read().splitlines()
    tag = ""
    utts = []
    for lineno, line in enumerate(raw, start=1):
        if not line.strip():
            continue
        if line.startswith("#domain\t"):
            tag = line.split("\t", 1)[1]
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(manifest, lineno, f"expected 4 tab-separated fields, got {len(parts)}")
        utt_id, rel, transcript, domain = parts
        frames = _read_frames(os.path.join(directory, rel))
        utts.append(Utterance(utt_id=utt_id, frames=frames,
                              transcript=None if transcript == "-" else transcript,
                              domain=domain))
    return DomainCorpus(utterances=tuple(utts), domain_tag=tag)


def _read_frames(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise ParseError(path, 0, "frame file not found")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty frame file")
    head = lines[0].split()
    if len(head) != 2:
        raise ParseError(path, 1, "header must be 'N D'")
    try:
        n, d = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError(path, 1, f"bad header {lines[0]!r}") from None
    if len(lines) < n + 1:
        raise ParseError(path, len(lines), f"expected {n} frame rows")
    out = np.empty((n, d))
    for i in range(n):
        parts = lines[1 + i].split()
        if len(parts) != d:
            raise ParseError(path, 2 + i, f"expected {d} values, got {len(parts)}")
        try:
            out[i] = [float(p) for p in parts]
        except ValueError:
            raise ParseError(path, 2 + i, "non-numeric frame value") from None
    return out
