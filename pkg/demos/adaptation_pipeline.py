"""The whole recipe on a small device-shift task.

Pretrain on the clean domain, pseudo-label the shifted domain, filter the
least confident 30%, then adapt with character-level matching.  Prints the
target error rate before and after, plus the per-character centroid
distances the matching term is minimizing.

Run: python demos/adaptation_pipeline.py  (about a minute)
"""

from cmatch import (
    AssignmentStrategy,
    adapt,
    centroid_distances,
    character_centroids,
    corpus_cer,
    filter_pseudo,
    pretrain,
    pseudo_label,
)
from cmatch.config import default_config
from cmatch.experiments import generate_domain_pair

cfg = default_config().with_overrides(
    utterances=120, epochs=20, adapt_epochs=12, batch_size=12, adapt_batch_size=40,
    charset="abcdef", input_dim=8, hidden_dim=18, feature_dim=12,
    embed_dim=6, attn_dim=12, beam_width=6,
    frames_per_char_min=3, frames_per_char_max=3,
    shift_strength=1.0, shift_bias=0.25, seed=4)

source, target = generate_domain_pair(cfg)
print(f"source: {len(source)} labeled utterances; "
      f"target: {len(target)} utterances, transcripts hidden={target.transcripts_hidden}")

pre_cfg = cfg.adapt_config("pretrain")
run_cfg = cfg.adapt_config("adapt")
print("\n[1] pretraining on the source domain ...")
pre = pretrain(source, pre_cfg)

target_eval = target.reveal_transcripts()
base = corpus_cer(pre.params, target_eval.utterances, run_cfg)
print(f"    source-only target CER: {base:.1%}")

print("[2] pseudo labeling the target domain ...")
pseudo = filter_pseudo(pseudo_label(pre.params, target, run_cfg), run_cfg.keep_ratio)
print(f"    kept {len(pseudo)} of {len(target)} utterances after the 30% confidence cut")

print("[3] joint optimization with character-level matching ...")
res = adapt(pre.params, source, target, pseudo, run_cfg)
after = corpus_cer(res.params, target_eval.utterances, run_cfg)
print(f"    adapted target CER: {after:.1%}  "
      f"({(base - after) / base:.0%} relative reduction)")

print("\n[4] per-character source/target centroid distances (before -> after):")
strategy = AssignmentStrategy("pseudo-ctc", run_cfg.confidence_threshold)
cs = pre.params.charset
before_rows = centroid_distances(
    character_centroids(pre.params, source, strategy, cs),
    character_centroids(pre.params, target, strategy, cs), cs)
after_rows = centroid_distances(
    character_centroids(res.params, source, strategy, cs),
    character_centroids(res.params, target, strategy, cs), cs)
for (sym, b), (_, a) in zip(before_rows, after_rows):
    if b is not None and a is not None:
        print(f"    {sym}: {b:.3f} -> {a:.3f}")
