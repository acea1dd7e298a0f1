import numpy as np
import pytest

from cmatch.adapt import AdaptConfig, pretrain
from cmatch.corpus import GeneratorSpec, generate
from cmatch.ctc import CharSet
from cmatch.model import ModelDims

MINI_CS = CharSet.from_letters("abcd")
MINI_DIMS = ModelDims(input_dim=6, hidden_dim=12, feature_dim=8, embed_dim=6, attn_dim=8)


def mini_config(seed=0, **overrides):
    base = dict(
        ctc_weight=0.3,
        match_weight=10.0,
        confidence_threshold=0.9,
        keep_ratio=0.7,
        beam_width=6,
        epochs=14,
        batch_size=10,
        step_size=0.5,
        seed=seed,
        dims=MINI_DIMS,
        charset=MINI_CS,
    )
    base.update(overrides)
    return AdaptConfig(**base)


def mini_corpus(seed, n=40, domain_seed=1):
    """Fresh utterances (by ``seed``) from the shared mini domain geometry."""
    spec = GeneratorSpec(charset=MINI_CS, num_utterances=n, transcript_len=(2, 4),
                         frames_per_char=(2, 3), input_dim=6, jitter=0.2,
                         seed=domain_seed, utterance_seed=seed)
    return generate(spec)


@pytest.fixture(scope="session")
def trained_clean():
    """A model pretrained to (near) zero error on a small clean corpus."""
    cfg = mini_config(seed=0)
    source = mini_corpus(seed=1, n=50)
    result = pretrain(source, cfg)
    return source, result.params, cfg
