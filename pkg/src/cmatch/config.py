"""Flat key=value run configuration.

One text file drives every command: corpus generation, the domain shift,
model dimensions, and both training phases.  Unknown keys are rejected by
name; all keys are optional and fall back to the defaults below.  Lines
starting with '#' and blank lines are ignored.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .adapt import AdaptConfig
from .assign import STRATEGY_KINDS, AssignmentStrategy
from .corpus import DomainShiftSpec, GeneratorSpec, sample_device_shift
from .ctc import CharSet
from .errors import ConfigError
from .mmd import KernelSpec
from .model import ModelDims


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


def _fraction(x):
    return 0.0 < x <= 1.0


def _unit(x):
    return 0.0 <= x <= 1.0


# name -> (type, default, validator or None)
SCHEMA = {
    # corpus generator
    "charset": (str, "abcdefgh", lambda s: len(s) >= 1),
    "utterances": (int, 400, _positive),
    "transcript_len_min": (int, 3, _positive),
    "transcript_len_max": (int, 6, _positive),
    "frames_per_char_min": (int, 2, _positive),
    "frames_per_char_max": (int, 4, _positive),
    "input_dim": (int, 10, lambda v: v >= 2),
    "frame_jitter": (float, 0.25, _non_negative),
    # domain shift
    "shift_kind": (str, "device", lambda s: s in ("device", "environment")),
    "shift_strength": (float, 0.4, _non_negative),
    "shift_bias": (float, 0.3, _non_negative),
    "noise_amplitude": (float, 0.5, _non_negative),
    "shift_tag": (str, "shifted", lambda s: bool(s) and "/" not in s),
    # model dimensions
    "hidden_dim": (int, 24, _positive),
    "feature_dim": (int, 16, _positive),
    "embed_dim": (int, 8, _positive),
    "attn_dim": (int, 16, _positive),
    "subsample": (int, 1, _positive),
    # training
    "ctc_weight": (float, 0.3, _unit),
    "match_weight": (float, 10.0, _non_negative),
    "confidence_threshold": (float, 0.9, _unit),
    "keep_ratio": (float, 0.7, _fraction),
    "beam_width": (int, 10, _positive),
    "strategy": (str, "pseudo-ctc", lambda s: s in STRATEGY_KINDS),
    "kernel": (str, "linear", None),
    "epochs": (int, 30, _positive),
    "adapt_epochs": (int, 20, _positive),
    "batch_size": (int, 20, _positive),
    "adapt_batch_size": (int, 64, _positive),
    "step_size": (float, 0.5, _positive),
    "adapt_step_size": (float, 0.05, _positive),
    "grad_clip": (float, 5.0, _positive),
    "pretrain_patience": (int, 5, _positive),
    "adapt_patience": (int, 5, _positive),
    "seed": (int, 1234, None),
    # fixes the task (corpora + shift) independently of the pipeline seed;
    # -1 means "follow seed"
    "data_seed": (int, -1, None),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict
    base_dir: str = "."

    def __getitem__(self, key):
        return self.values[key]

    def charset(self) -> CharSet:
        return CharSet.from_letters(self.values["charset"])

    def data_seed(self) -> int:
        ds = self.values["data_seed"]
        return self.values["seed"] if ds < 0 else ds

    def generator_spec(self, utterance_stream: int = 0) -> GeneratorSpec:
        v = self.values
        ds = self.data_seed()
        return GeneratorSpec(
            charset=self.charset(),
            num_utterances=v["utterances"],
            transcript_len=(v["transcript_len_min"], v["transcript_len_max"]),
            frames_per_char=(v["frames_per_char_min"], v["frames_per_char_max"]),
            input_dim=v["input_dim"],
            jitter=v["frame_jitter"],
            seed=ds,
            utterance_seed=ds * 31 + utterance_stream,
        )

    def shift_spec(self) -> DomainShiftSpec:
        v = self.values
        ds = self.data_seed()
        if v["shift_kind"] == "device":
            return sample_device_shift(dim=v["input_dim"], strength=v["shift_strength"],
                                       bias_scale=v["shift_bias"], seed=ds,
                                       tag=v["shift_tag"])
        return DomainShiftSpec(kind="environment", tag=v["shift_tag"],
                               noise_amplitude=v["noise_amplitude"],
                               noise_seed=ds + 1)

    def dims(self) -> ModelDims:
        v = self.values
        return ModelDims(input_dim=v["input_dim"], hidden_dim=v["hidden_dim"],
                         feature_dim=v["feature_dim"], embed_dim=v["embed_dim"],
                         attn_dim=v["attn_dim"], subsample=v["subsample"])

    def adapt_config(self, phase: str = "pretrain") -> AdaptConfig:
        """AdaptConfig for 'pretrain' (full budget) or 'adapt' (gentler pass)."""
        v = self.values
        try:
            kernel = KernelSpec.parse(v["kernel"])
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return AdaptConfig(
            ctc_weight=v["ctc_weight"],
            match_weight=v["match_weight"],
            confidence_threshold=v["confidence_threshold"],
            keep_ratio=v["keep_ratio"],
            beam_width=v["beam_width"],
            strategy=AssignmentStrategy(v["strategy"], v["confidence_threshold"]),
            kernel=kernel,
            epochs=v["epochs"] if phase == "pretrain" else v["adapt_epochs"],
            batch_size=v["batch_size"] if phase == "pretrain" else v["adapt_batch_size"],
            step_size=v["step_size"] if phase == "pretrain" else v["adapt_step_size"],
            seed=v["seed"],
            grad_clip=v["grad_clip"],
            pretrain_patience=v["pretrain_patience"],
            adapt_patience=v["adapt_patience"],
            dims=self.dims(),
            charset=self.charset(),
        )

    def with_overrides(self, **kw) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            vals[k] = v
        return RunConfig(values=vals, base_dir=self.base_dir)


def default_config() -> RunConfig:
    return RunConfig(values={k: d for k, (_, d, _) in SCHEMA.items()})


def parse_config_text(text: str, path: str = "<string>", base_dir: str = ".") -> RunConfig:
    values = {k: d for k, (_, d, _) in SCHEMA.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        typ, _, check = SCHEMA[key]
        try:
            value = typ(raw)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: key {key!r} expects {typ.__name__}, got {raw!r}") from None
        if check is not None and not check(value):
            raise ConfigError(f"{path}:{lineno}: key {key!r} rejects value {raw!r}")
        values[key] = value
    if values["transcript_len_min"] > values["transcript_len_max"]:
        raise ConfigError(f"{path}: transcript_len_min exceeds transcript_len_max")
    if values["frames_per_char_min"] > values["frames_per_char_max"]:
        raise ConfigError(f"{path}: frames_per_char_min exceeds frames_per_char_max")
    return RunConfig(values=values, base_dir=base_dir)


def load_config(path) -> RunConfig:
    path = os.fspath(path)
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, path=path, base_dir=os.path.dirname(os.path.abspath(path)))
