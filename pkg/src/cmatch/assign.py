"""Frame-level label assignment strategies behind one interface.

Three ways to attach a character label to every encoder frame: forced
alignment against a transcript, a uniform partition of frames over the
transcript, or the CTC head's own thresholded per-frame predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import CharSet, FrameLabelAssignment, LogProbLattice, ctc_forced_align, ctc_greedy_predict
from .errors import MissingTranscriptError

CTC_ALIGN = "ctc-align"
FRAME_AVERAGE = "frame-average"
PSEUDO_CTC = "pseudo-ctc"
STRATEGY_KINDS = (CTC_ALIGN, FRAME_AVERAGE, PSEUDO_CTC)


@dataclass(frozen=True)
class AssignmentStrategy:
    """Strategy kind plus the confidence threshold used by pseudo-ctc."""

    kind: str = PSEUDO_CTC
    confidence_threshold: float = 0.9

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(f"confidence threshold must be in [0, 1], got {self.confidence_threshold}")

    @property
    def needs_transcript(self) -> bool:
        return self.kind in (CTC_ALIGN, FRAME_AVERAGE)


def assign_labels(strategy: AssignmentStrategy, lattice: LogProbLattice,
                  transcript, cs: CharSet) -> FrameLabelAssignment:
    """Assign one character label per frame under the chosen strategy.

    ``transcript`` is a sequence of character indices; required by
    ctc-align and frame-average, ignored by pseudo-ctc.
    """
    if strategy.kind == PSEUDO_CTC:
        return ctc_greedy_predict(lattice, strategy.confidence_threshold, cs)
    if transcript is None:
        raise MissingTranscriptError(f"strategy {strategy.kind} requires a transcript")
    transcript = np.asarray(transcript, dtype=np.intp)
    if strategy.kind == CTC_ALIGN:
        return ctc_forced_align(lattice, transcript, cs)
    return _frame_average(lattice.frames, transcript, cs)


def _frame_average(n: int, transcript: np.ndarray, cs: CharSet) -> FrameLabelAssignment:
    """Uniform partition: frame i gets transcript char floor(i*M/N).

    Every frame is kept; with an empty transcript every frame is dropped.
    """
    m = transcript.shape[0]
    if m == 0:
        return FrameLabelAssignment(labels=np.full(n, cs.blank_index, dtype=np.intp),
                                    keep_mask=np.zeros(n, dtype=bool))
    pos = (np.arange(n) * m) // n
    return FrameLabelAssignment(labels=transcript[pos], keep_mask=np.ones(n, dtype=bool))
