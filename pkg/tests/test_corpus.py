import os

import numpy as np
import pytest

from cmatch.corpus import (
    DomainCorpus,
    DomainShiftSpec,
    GeneratorSpec,
    Utterance,
    apply_shift,
    character_prototypes,
    generate,
    read_corpus,
    sample_device_shift,
    write_corpus,
)
from cmatch.ctc import CharSet
from cmatch.errors import InvalidShapeError, ParseError

CS = CharSet.from_letters("abcd")


def spec(**kw):
    base = dict(charset=CS, num_utterances=6, transcript_len=(2, 4),
                frames_per_char=(2, 3), input_dim=5, seed=11)
    base.update(kw)
    return GeneratorSpec(**base)


class TestGenerate:
    def test_same_seed_identical(self):
        a, b = generate(spec()), generate(spec())
        assert a == b

    def test_different_seed_differs(self):
        assert generate(spec()) != generate(spec(seed=12))

    def test_frame_count_is_duration_sum(self):
        c = generate(spec())
        lo, hi = 2, 4
        for utt in c.utterances:
            assert 2 * len(utt.transcript) <= utt.num_frames <= 3 * len(utt.transcript)
            assert lo <= len(utt.transcript) <= hi

    def test_prototypes_distinct(self):
        protos = character_prototypes(spec())
        d = np.sqrt(((protos[:, None] - protos[None, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 2.0

    def test_transcripts_use_charset_only(self):
        for utt in generate(spec()).utterances:
            CS.to_indices(utt.transcript)

    def test_bad_ranges_rejected(self):
        with pytest.raises(ValueError):
            spec(transcript_len=(0, 3))
        with pytest.raises(ValueError):
            spec(frames_per_char=(4, 2))


class TestApplyShift:
    def test_identity_device_shift_is_noop(self):
        c = generate(spec())
        shift = DomainShiftSpec(kind="device", tag="same",
                                channel_matrix=np.eye(5), channel_bias=np.zeros(5))
        shifted = apply_shift(c, shift)
        assert shifted.transcripts_hidden
        for a, b in zip(c.utterances, shifted.utterances):
            assert np.array_equal(a.frames, b.frames)

    def test_zero_amplitude_environment_is_noop(self):
        c = generate(spec())
        shift = DomainShiftSpec(kind="environment", tag="quiet", noise_amplitude=0.0, noise_seed=3)
        for a, b in zip(c.utterances, apply_shift(c, shift).utterances):
            assert np.array_equal(a.frames, b.frames)

    def test_shift_is_reproducible(self):
        c = generate(spec())
        shift = DomainShiftSpec(kind="environment", tag="noisy", noise_amplitude=0.5, noise_seed=7)
        assert apply_shift(c, shift) == apply_shift(c, shift)

    def test_device_shift_changes_frames_and_keeps_transcripts(self):
        c = generate(spec())
        shift = sample_device_shift(dim=5, strength=0.5, bias_scale=0.3, seed=9, tag="mic-b")
        shifted = apply_shift(c, shift)
        assert shifted.domain_tag == "mic-b"
        for a, b in zip(c.utterances, shifted.utterances):
            assert a.transcript == b.transcript
            assert not np.allclose(a.frames, b.frames)

    def test_dimension_mismatch(self):
        c = generate(spec())
        shift = DomainShiftSpec(kind="device", tag="bad", channel_matrix=np.eye(4))
        with pytest.raises(InvalidShapeError):
            apply_shift(c, shift)

    def test_condition_bound_enforced(self):
        singularish = np.eye(3)
        singularish[0, 0] = 1e-9
        with pytest.raises(ValueError):
            DomainShiftSpec(kind="device", tag="x", channel_matrix=singularish)


class TestRoundTrip:
    def test_write_read_equal(self, tmp_path):
        c = generate(spec())
        write_corpus(c, tmp_path / "c")
        assert read_corpus(tmp_path / "c") == c

    def test_write_read_write_byte_identical(self, tmp_path):
        c = generate(spec())
        write_corpus(c, tmp_path / "a")
        write_corpus(read_corpus(tmp_path / "a"), tmp_path / "b")
        for name in ["manifest.tsv"] + [f"frames/{u.utt_id}.txt" for u in c.utterances]:
            with open(tmp_path / "a" / name, "rb") as fa, open(tmp_path / "b" / name, "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_empty_corpus_round_trip(self, tmp_path):
        c = DomainCorpus(utterances=(), domain_tag="void")
        write_corpus(c, tmp_path / "e")
        back = read_corpus(tmp_path / "e")
        assert back == c
        assert back.domain_tag == "void"

    def test_missing_transcript_round_trip(self, tmp_path):
        u = Utterance(utt_id="u0", frames=np.ones((2, 3)), transcript=None, domain="d")
        c = DomainCorpus(utterances=(u,), domain_tag="d")
        write_corpus(c, tmp_path / "m")
        assert read_corpus(tmp_path / "m").utterances[0].transcript is None

    def test_missing_frame_file_is_parse_error(self, tmp_path):
        c = generate(spec(num_utterances=2))
        write_corpus(c, tmp_path / "x")
        os.remove(tmpfile := tmp_path / "x" / "frames" / "utt0001.txt")
        with pytest.raises(ParseError) as ei:
            read_corpus(tmp_path / "x")
        assert "utt0001" in str(ei.value)

    def test_malformed_manifest_names_line(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        (d / "manifest.tsv").write_text("#domain\tt\nonly-two\tfields\n")
        with pytest.raises(ParseError) as ei:
            read_corpus(d)
        assert ":2:" in str(ei.value)

    def test_malformed_frame_value_names_line(self, tmp_path):
        d = tmp_path / "badf"
        (d / "frames").mkdir(parents=True)
        (d / "manifest.tsv").write_text("#domain\tt\nu0\tframes/u0.txt\tab\tt\n")
        (d / "frames" / "u0.txt").write_text("2 2\n1.0 2.0\n1.0 oops\n")
        with pytest.raises(ParseError) as ei:
            read_corpus(d)
        assert ":3:" in str(ei.value)
