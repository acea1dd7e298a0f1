import numpy as np
import pytest

import oracles
from cmatch.assign import (
    CTC_ALIGN,
    FRAME_AVERAGE,
    PSEUDO_CTC,
    AssignmentStrategy,
    assign_labels,
)
from cmatch.ctc import CharSet, LogProbLattice
from cmatch.errors import MissingTranscriptError

CS = CharSet.from_letters("ab")


def peaked_lattice(symbol_per_frame, vocab=3, peak=0.98):
    probs = np.full((len(symbol_per_frame), vocab), (1 - peak) / (vocab - 1))
    for t, s in enumerate(symbol_per_frame):
        probs[t, s] = peak
    return LogProbLattice(np.log(probs))


def test_strategy_validates_kind():
    with pytest.raises(ValueError):
        AssignmentStrategy(kind="viterbi")


def test_strategy_validates_threshold():
    with pytest.raises(ValueError):
        AssignmentStrategy(confidence_threshold=1.5)


def test_frame_average_even_split():
    lat = peaked_lattice([0] * 6)
    fla = assign_labels(AssignmentStrategy(FRAME_AVERAGE), lat, CS.to_indices("ab"), CS)
    assert fla.labels.tolist() == [1, 1, 1, 2, 2, 2]
    assert fla.keep_mask.all()


def test_frame_average_floor_rule():
    lat = peaked_lattice([0] * 5)
    fla = assign_labels(AssignmentStrategy(FRAME_AVERAGE), lat, CS.to_indices("ab"), CS)
    # floor(i*2/5) for i = 0..4 -> [0, 0, 1, 1, 1] -> a a b b b? No:
    # floor([0,2,4,6,8]/5) = [0,0,0,1,1] -> a a a b b
    assert fla.labels.tolist() == [1, 1, 1, 2, 2]


def test_frame_average_empty_transcript_drops_everything():
    lat = peaked_lattice([0, 0, 0])
    fla = assign_labels(AssignmentStrategy(FRAME_AVERAGE), lat, np.array([], dtype=int), CS)
    assert not fla.keep_mask.any()


def test_missing_transcript_errors():
    lat = peaked_lattice([0, 1])
    for kind in (CTC_ALIGN, FRAME_AVERAGE):
        with pytest.raises(MissingTranscriptError):
            assign_labels(AssignmentStrategy(kind), lat, None, CS)


def test_pseudo_ctc_needs_no_transcript():
    lat = peaked_lattice([1, 0, 2])
    fla = assign_labels(AssignmentStrategy(PSEUDO_CTC, 0.9), lat, None, CS)
    assert fla.labels.tolist() == [1, 0, 2]
    assert fla.keep_mask.tolist() == [True, False, True]


def test_frame_average_equals_ctc_align_on_uniform_durations():
    # Equal-length peaked segments: both strategies agree on kept frames.
    lat = peaked_lattice([1, 1, 1, 2, 2, 2])
    tr = CS.to_indices("ab")
    avg = assign_labels(AssignmentStrategy(FRAME_AVERAGE), lat, tr, CS)
    ali = assign_labels(AssignmentStrategy(CTC_ALIGN), lat, tr, CS)
    keep_both = avg.keep_mask & ali.keep_mask
    assert keep_both.sum() >= 4
    assert np.array_equal(avg.labels[keep_both], ali.labels[keep_both])


def test_frame_average_invariants_on_random_instances():
    rng = np.random.default_rng(23)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        m = int(rng.integers(1, min(n, 6) + 1))
        tr = rng.integers(1, 3, size=m)
        lat = LogProbLattice(oracles.random_lattice(rng, n, 3))
        fla = assign_labels(AssignmentStrategy(FRAME_AVERAGE), lat, tr, CS)
        # every char gets at least floor(n/m) frames
        counts = np.bincount((np.arange(n) * m) // n, minlength=m)
        assert counts.min() >= n // m
        # label positions are non-decreasing in character position
        pos = (np.arange(n) * m) // n
        assert np.all(np.diff(pos) >= 0)
        assert fla.keep_mask.all()


def test_kept_labels_are_in_charset_and_never_blank():
    from cmatch.ctc import min_frames_required

    rng = np.random.default_rng(29)
    for kind in (CTC_ALIGN, FRAME_AVERAGE, PSEUDO_CTC):
        for _ in range(20):
            n = int(rng.integers(2, 8))
            m = int(rng.integers(1, 3))
            tr = rng.integers(1, 3, size=m)
            if min_frames_required(tr) > n:
                continue
            lat = LogProbLattice(oracles.random_lattice(rng, n, 3))
            fla = assign_labels(AssignmentStrategy(kind, 0.2), lat, tr, CS)
            kept = fla.kept_labels()
            assert np.all(kept != CS.blank_index)
            assert np.all((kept >= 0) & (kept < CS.size))


def test_pseudo_ctc_keeps_exactly_confident_non_blanks():
    lat = peaked_lattice([1, 0, 2, 2], peak=0.95)
    fla = assign_labels(AssignmentStrategy(PSEUDO_CTC, 0.9), lat, None, CS)
    assert fla.keep_mask.tolist() == [True, False, True, True]
