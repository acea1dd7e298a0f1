import pytest

from cmatch.config import default_config, load_config, parse_config_text
from cmatch.errors import ConfigError


def test_default_settings():
    cfg = default_config()
    assert cfg["ctc_weight"] == 0.3
    assert cfg["match_weight"] == 10.0
    assert cfg["confidence_threshold"] == 0.9
    assert cfg["keep_ratio"] == 0.7
    assert cfg["beam_width"] == 10
    assert cfg["strategy"] == "pseudo-ctc"
    assert cfg["kernel"] == "linear"
    assert len(cfg["charset"]) == 8


def test_parse_overrides_and_comments():
    cfg = parse_config_text("""
# comment line
utterances = 12
charset=abc
step_size=0.25
""")
    assert cfg["utterances"] == 12
    assert cfg["charset"] == "abc"
    assert cfg["step_size"] == 0.25
    assert cfg["ctc_weight"] == 0.3  # untouched default


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as ei:
        parse_config_text("learning_rate=0.1")
    assert "learning_rate" in str(ei.value)


def test_bad_type_reports_key_and_line():
    with pytest.raises(ConfigError) as ei:
        parse_config_text("utterances=twelve", path="run.cfg")
    assert "run.cfg:1" in str(ei.value)
    assert "utterances" in str(ei.value)


def test_range_validation():
    with pytest.raises(ConfigError):
        parse_config_text("keep_ratio=0.0")
    with pytest.raises(ConfigError):
        parse_config_text("ctc_weight=1.5")
    with pytest.raises(ConfigError):
        parse_config_text("strategy=oracle")


def test_cross_field_validation():
    with pytest.raises(ConfigError):
        parse_config_text("transcript_len_min=5\ntranscript_len_max=3")


def test_builders_produce_consistent_objects():
    cfg = parse_config_text("charset=abcd\ninput_dim=6\nseed=9")
    spec = cfg.generator_spec(utterance_stream=5)
    assert spec.input_dim == 6
    assert spec.seed == 9
    assert spec.utterance_seed == 9 * 31 + 5
    assert spec.charset.size == 5  # blank + 4 letters
    ac = cfg.adapt_config("pretrain")
    assert ac.dims.input_dim == 6
    assert ac.charset.size == 5
    assert ac.epochs == cfg["epochs"]
    ad = cfg.adapt_config("adapt")
    assert ad.epochs == cfg["adapt_epochs"]
    assert ad.step_size == cfg["adapt_step_size"]


def test_environment_shift_spec():
    cfg = parse_config_text("shift_kind=environment\nnoise_amplitude=0.7")
    shift = cfg.shift_spec()
    assert shift.kind == "environment"
    assert shift.noise_amplitude == 0.7


def test_device_shift_spec_condition_bounded():
    import numpy as np
    cfg = parse_config_text("shift_strength=0.5\ninput_dim=6")
    shift = cfg.shift_spec()
    assert shift.kind == "device"
    assert np.linalg.cond(shift.channel_matrix) <= 100.0


def test_load_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("utterances=7\n")
    cfg = load_config(p)
    assert cfg["utterances"] == 7
    assert cfg.base_dir == str(tmp_path)


def test_with_overrides_rejects_unknown():
    with pytest.raises(ConfigError):
        default_config().with_overrides(bogus=1)


def test_data_seed_decouples_task_from_pipeline():
    fixed = parse_config_text("data_seed=7\nseed=1")
    assert fixed.data_seed() == 7
    assert fixed.generator_spec().seed == 7
    follow = parse_config_text("seed=3")
    assert follow.data_seed() == 3
