"""Joint CTC-attention beam search on a quickly memorized toy task.

The decoder proposes continuations; every expansion is re-scored with the
exact CTC prefix probability, so the ranking blends both views:
joint = 0.7 * attention + 0.3 * ctc.

Run: python demos/joint_decoding.py  (about 10 seconds)
"""

import numpy as np

from cmatch import (
    AdaptConfig,
    CharSet,
    GeneratorSpec,
    ModelDims,
    beam_search,
    generate,
    pretrain,
)

cs = CharSet.from_letters("abc")
spec = GeneratorSpec(charset=cs, num_utterances=40, transcript_len=(2, 4),
                     frames_per_char=(2, 3), input_dim=6, jitter=0.2, seed=3)
corpus = generate(spec)
cfg = AdaptConfig(charset=cs, epochs=18, batch_size=10, step_size=0.5, seed=0,
                  dims=ModelDims(input_dim=6, hidden_dim=14, feature_dim=10,
                                 embed_dim=6, attn_dim=10))
print("pretraining on", len(corpus), "utterances ...")
params = pretrain(corpus, cfg).params

utt = corpus.utterances[5]
print(f"\nreference transcript: {utt.transcript!r} ({utt.num_frames} frames)")
print(f"{'rank':<5} {'tokens':<8} {'joint':>9} {'attention':>10} {'ctc':>9} {'confidence':>11}")
for rank, hyp in enumerate(beam_search(params, utt.frames, cfg.joint, beam_width=5)):
    print(f"{rank:<5} {hyp.text(cs)!r:<8} {hyp.joint_score:>9.3f} "
          f"{hyp.att_score:>10.3f} {hyp.ctc_score:>9.3f} {hyp.confidence:>11.3f}")

print("\nthe joint column is exactly 0.7*attention + 0.3*ctc;")
print("confidence divides the joint score by the number of decoding steps.")
