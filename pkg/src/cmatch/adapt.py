"""Source pretraining, pseudo labeling, and matched adaptation.

The full recipe: train on the labeled source domain, decode the unlabeled
target domain into pseudo labels, drop the least confident tail, then
jointly optimize ``0.5 * (source_loss + target_loss) + gamma * match_loss``
where the matching term pulls per-character feature distributions (or the
whole-domain feature means, for the domain-level baseline) together.  The
self-training pass runs once.

Per-epoch metrics go to CSV when a path is supplied:
``epoch,source_loss,target_loss,match_loss,total_loss,dev_cer``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import numkit as nk
from .assign import AssignmentStrategy, assign_labels
from .corpus import DomainCorpus, Utterance
from .ctc import CharSet, LogProbLattice
from .errors import EmptyDomainError, InfeasibleAlignmentError, InvalidTranscriptError, NoOverlapError
from .metrics import corpus_error_rates
from .mmd import KernelSpec, LabeledFeatureBag, cmatch_loss, mmd_sq_biased
from .model import (
    PARAM_NAMES,
    Hypothesis,
    JointLossConfig,
    ModelDims,
    ModelParams,
    beam_search,
    forward_pass,
    init_params,
    sgd_step,
)

_STREAM_SRC = 11
_STREAM_TGT = 12


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFF, *stream]))


@dataclass(frozen=True)
class AdaptConfig:
    """Every scalar knob of the pipeline in one place."""

    ctc_weight: float = 0.3            # CTC share of the joint recognizer loss
    match_weight: float = 10.0         # weight of the distribution-matching term
    confidence_threshold: float = 0.9  # frame filter for pseudo-ctc labels
    keep_ratio: float = 0.7            # utterance filter after pseudo labeling
    beam_width: int = 10
    strategy: AssignmentStrategy = AssignmentStrategy()
    kernel: KernelSpec = KernelSpec()
    epochs: int = 30
    batch_size: int = 20
    step_size: float = 0.5
    seed: int = 0
    grad_clip: float = 5.0
    pretrain_patience: int = 5
    adapt_patience: int = 5
    dims: ModelDims = ModelDims()
    charset: CharSet = CharSet.from_letters("abcdefgh")

    def __post_init__(self):
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ValueError(f"keep_ratio must be in (0, 1], got {self.keep_ratio}")
        if self.match_weight < 0:
            raise ValueError("match_weight must be >= 0")
        if self.batch_size < 1 or self.epochs < 1 or self.beam_width < 1:
            raise ValueError("batch_size, epochs, and beam_width must be >= 1")

    @property
    def joint(self) -> JointLossConfig:
        return JointLossConfig(ctc_weight=self.ctc_weight)


@dataclass(frozen=True)
class PseudoLabel:
    utt_id: str
    transcript: str
    confidence: float


@dataclass(frozen=True)
class PseudoLabelSet:
    """Pseudo transcripts sorted by confidence, best first."""

    entries: tuple[PseudoLabel, ...]

    def __post_init__(self):
        confs = [e.confidence for e in self.entries]
        if any(not math.isfinite(c) for c in confs):
            raise ValueError("pseudo label confidences must be finite")
        if any(a < b for a, b in zip(confs, confs[1:])):
            raise ValueError("pseudo labels must be sorted by descending confidence")

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self) -> dict[str, PseudoLabel]:
        return {e.utt_id: e for e in self.entries}


@dataclass
class EpochRow:
    epoch: int
    source_loss: float
    target_loss: float
    match_loss: float
    total_loss: float
    dev_cer: float | None


@dataclass
class TrainResult:
    params: ModelParams
    epoch_rows: list[EpochRow] = field(default_factory=list)
    step_rows: list[tuple[float, float, float, float]] = field(default_factory=list)
    skipped_utterances: int = 0
    steps_without_overlap: int = 0


def split_train_dev(corpus: DomainCorpus) -> tuple[list[Utterance], list[Utterance]]:
    """Hold out the last tenth of the utterances (at least one) for development."""
    utts = list(corpus.utterances)
    if len(utts) < 2:
        return utts, []
    n_dev = max(1, len(utts) // 10)
    return utts[:-n_dev], utts[-n_dev:]


def _require_visible_transcripts(corpus: DomainCorpus, role: str) -> None:
    if corpus.transcripts_hidden:
        raise InvalidTranscriptError(
            f"{role} corpus has hidden transcripts; target-domain labels may not be used")
    missing = [u.utt_id for u in corpus.utterances if u.transcript is None]
    if missing:
        raise InvalidTranscriptError(f"{role} corpus lacks transcripts for {missing[:3]}...")


def decode_corpus(params: ModelParams, corpus: DomainCorpus,
                  cfg: AdaptConfig) -> list[tuple[str, Hypothesis]]:
    """Top beam hypothesis per utterance, ordered by utterance id."""
    out = []
    for utt in sorted(corpus.utterances, key=lambda u: u.utt_id):
        hyp = beam_search(params, utt.frames, cfg.joint, beam_width=cfg.beam_width)[0]
        out.append((utt.utt_id, hyp))
    return out


def corpus_cer(params: ModelParams, utterances, cfg: AdaptConfig) -> float | None:
    """Aggregate character error rate of top-1 decodes against transcripts."""
    pairs = []
    for utt in utterances:
        hyp = beam_search(params, utt.frames, cfg.joint, beam_width=cfg.beam_width)[0]
        pairs.append((utt.transcript or "", hyp.text(params.charset)))
    cer, _ = corpus_error_rates(pairs)
    return cer


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    steps = len(order) // size
    return [order[i * size:(i + 1) * size] for i in range(steps)]


def _mean_node(nodes: list[nk.Matrix]) -> nk.Matrix:
    total = nodes[0]
    for node in nodes[1:]:
        total = nk.add(total, node)
    return nk.scale(total, 1.0 / len(nodes))


def pretrain(source: DomainCorpus, cfg: AdaptConfig,
             metrics_path=None) -> TrainResult:
    """Joint-loss training on the labeled source domain.

    Early-stops when held-out loss fails to improve for
    ``pretrain_patience`` epochs and returns the best held-out checkpoint.
    """
    if len(source) == 0:
        raise EmptyDomainError("cannot pretrain on an empty corpus")
    _require_visible_transcripts(source, "source")
    params = init_params(cfg.charset, cfg.dims, cfg.seed)
    train, dev = split_train_dev(source)
    result = TrainResult(params=params)
    best_dev = math.inf
    best_params = params
    stale = 0
    for epoch in range(cfg.epochs):
        order = _rng(cfg.seed, _STREAM_SRC, epoch).permutation(len(train))
        size = min(cfg.batch_size, len(train))
        epoch_losses = []
        for batch in _batches(order, size):
            with nk.GradTape() as tape:
                nodes = []
                for i in batch:
                    utt = train[i]
                    try:
                        fp = forward_pass(params, utt.frames,
                                          params.charset.to_indices(utt.transcript), cfg.joint)
                    except InfeasibleAlignmentError:
                        result.skipped_utterances += 1
                        continue
                    nodes.append(fp.loss)
                if not nodes:
                    continue
                loss_node = _mean_node(nodes)
            grads = dict(zip(PARAM_NAMES, tape.gradients(loss_node, params.matrices())))
            params = sgd_step(params, grads, cfg.step_size, cfg.grad_clip)
            epoch_losses.append(loss_node.item())
        train_loss = float(np.mean(epoch_losses)) if epoch_losses else math.nan
        dev_loss = _dev_loss(params, dev, cfg)
        result.epoch_rows.append(EpochRow(epoch, train_loss, 0.0, 0.0, train_loss,
                                          None if dev_loss is None else dev_loss))
        if dev_loss is not None:
            if dev_loss < best_dev - 1e-12:
                best_dev, best_params, stale = dev_loss, params, 0
            else:
                stale += 1
                if stale >= cfg.pretrain_patience:
                    break
        else:
            best_params = params
    result.params = best_params
    if metrics_path is not None:
        lines = ["epoch,train_loss,dev_loss"]
        for r in result.epoch_rows:
            lines.append(",".join(_fmt_cell(v) for v in (r.epoch, r.source_loss, r.dev_cer)))
        with open(metrics_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return result


def _dev_loss(params: ModelParams, dev: list[Utterance], cfg: AdaptConfig) -> float | None:
    if not dev:
        return None
    vals = []
    for utt in dev:
        try:
            with nk.GradTape():
                fp = forward_pass(params, utt.frames,
                                  params.charset.to_indices(utt.transcript), cfg.joint)
            vals.append(fp.loss.item())
        except InfeasibleAlignmentError:
            continue
    return float(np.mean(vals)) if vals else None


def pseudo_label(params: ModelParams, target: DomainCorpus,
                 cfg: AdaptConfig) -> PseudoLabelSet:
    """Beam-decode the target corpus into confidence-ranked pseudo labels."""
    entries = []
    for utt_id, hyp in decode_corpus(params, target, cfg):
        entries.append(PseudoLabel(utt_id=utt_id, transcript=hyp.text(params.charset),
                                   confidence=hyp.confidence))
    entries.sort(key=lambda e: (-e.confidence, e.utt_id))
    return PseudoLabelSet(entries=tuple(entries))


def filter_pseudo(pseudo: PseudoLabelSet, keep_ratio: float) -> PseudoLabelSet:
    """Keep the top ceil(keep_ratio * n) entries by confidence."""
    if not 0.0 < keep_ratio <= 1.0:
        raise ValueError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    kept = math.ceil(keep_ratio * len(pseudo.entries))
    return PseudoLabelSet(entries=pseudo.entries[:kept])


def _matching_assignment(lattice_values: np.ndarray, transcript_idx, cfg: AdaptConfig,
                         cs: CharSet):
    """Frame labels used for distribution matching, per the configured strategy."""
    lattice = LogProbLattice(lattice_values)
    if cfg.strategy.needs_transcript:
        return assign_labels(cfg.strategy, lattice, transcript_idx, cs)
    return assign_labels(cfg.strategy, lattice, None, cs)


def adapt(params: ModelParams, source: DomainCorpus, target: DomainCorpus,
          pseudo: PseudoLabelSet, cfg: AdaptConfig, *, domain_level: bool = False,
          metrics_path=None) -> TrainResult:
    """One joint optimization pass over both domains.

    Each step draws one source batch and one size-matched target batch and
    minimizes ``0.5 * (src + tgt) + match_weight * match``.  Target
    utterances train against their (already filtered) pseudo labels only.
    With an empty target the loss degenerates to the plain source loss, so
    the update rule matches pretraining exactly.  Steps whose batches share
    no character skip the matching term and are counted.
    """
    _require_visible_transcripts(source, "source")
    cs = params.charset
    src_train, src_dev = split_train_dev(source)
    by_id = {u.utt_id: u for u in target.utterances}
    tgt_items = []
    for entry in pseudo.entries:
        utt = by_id.get(entry.utt_id)
        if utt is not None:
            tgt_items.append((utt, entry.transcript))

    result = TrainResult(params=params)
    best_total = math.inf
    stale = 0
    for epoch in range(cfg.epochs):
        src_order = _rng(cfg.seed, _STREAM_SRC, epoch).permutation(len(src_train))
        if tgt_items:
            tgt_order = _rng(cfg.seed, _STREAM_TGT, epoch).permutation(len(tgt_items))
            size = min(cfg.batch_size, len(src_train), len(tgt_items))
            src_batches = _batches(src_order, size)
            tgt_batches = _batches(tgt_order, size)
            steps = min(len(src_batches), len(tgt_batches))
        else:
            size = min(cfg.batch_size, len(src_train))
            src_batches = _batches(src_order, size)
            tgt_batches = [None] * len(src_batches)
            steps = len(src_batches)

        epoch_rows = []
        for step in range(steps):
            row = _adapt_step(params, cfg, cs,
                              [src_train[i] for i in src_batches[step]],
                              None if tgt_batches[step] is None
                              else [tgt_items[i] for i in tgt_batches[step]],
                              domain_level, result)
            if row is None:
                continue
            params, src_l, tgt_l, match_l, total_l = row
            result.step_rows.append((src_l, tgt_l, match_l, total_l))
            epoch_rows.append((src_l, tgt_l, match_l, total_l))
        if epoch_rows:
            means = [float(np.mean([r[i] for r in epoch_rows])) for i in range(4)]
        else:
            means = [math.nan] * 4
        dev_cer = corpus_cer(params, src_dev, cfg) if src_dev else None
        result.epoch_rows.append(EpochRow(epoch, means[0], means[1], means[2], means[3], dev_cer))
        if means[3] < best_total - 1e-12:
            best_total, stale = means[3], 0
        else:
            stale += 1
            if stale >= cfg.adapt_patience:
                break
    result.params = params
    if metrics_path is not None:
        _write_metrics(metrics_path, result.epoch_rows,
                       header="epoch,source_loss,target_loss,match_loss,total_loss,dev_cer")
    return result


def _adapt_step(params, cfg, cs, src_batch, tgt_batch, domain_level, result):
    """One optimization step; returns (new_params, src, tgt, match, total)."""
    with nk.GradTape() as tape:
        src_nodes, src_feats = _forward_batch(
            params, cfg, cs, [(u, u.transcript) for u in src_batch], result)
        if not src_nodes:
            return None
        src_node = _mean_node(src_nodes)

        tgt_node = None
        tgt_feats = []
        if tgt_batch is not None:
            tgt_nodes, tgt_feats = _forward_batch(params, cfg, cs, tgt_batch, result)
            if tgt_nodes:
                tgt_node = _mean_node(tgt_nodes)

        match_value = 0.0
        match_node = None
        if cfg.match_weight > 0.0 and tgt_feats and src_feats:
            if domain_level:
                match_value, match_node = _domain_match_node(src_feats, tgt_feats, cfg)
            else:
                try:
                    match_value, match_node = _char_match_node(src_feats, tgt_feats, cfg, cs)
                except NoOverlapError:
                    result.steps_without_overlap += 1

        if tgt_node is None:
            total = src_node
            tgt_l = 0.0
        else:
            total = nk.add(nk.scale(src_node, 0.5), nk.scale(tgt_node, 0.5))
            tgt_l = tgt_node.item()
        if match_node is not None:
            total = nk.add(total, nk.scale(match_node, cfg.match_weight))
    grads = dict(zip(PARAM_NAMES, tape.gradients(total, params.matrices())))
    new_params = sgd_step(params, grads, cfg.step_size, cfg.grad_clip)
    return new_params, src_node.item(), tgt_l, match_value, total.item()


def _forward_batch(params, cfg, cs, items, result):
    """Forward passes for (utterance, transcript) pairs; skips infeasible ones."""
    nodes = []
    feats = []
    for utt, transcript in items:
        try:
            idx = cs.to_indices(transcript)
            fp = forward_pass(params, utt.frames, idx, cfg.joint)
        except InfeasibleAlignmentError:
            result.skipped_utterances += 1
            continue
        nodes.append(fp.loss)
        feats.append((fp, idx))
    return nodes, feats


def _char_match_node(src_feats, tgt_feats, cfg, cs):
    """Character-level matching term as an injected scalar with gradients."""
    bags = []
    for group in (src_feats, tgt_feats):
        rows, labels, spans = [], [], []
        for fp, idx in group:
            try:
                fla = _matching_assignment(fp.lattice.data, idx, cfg, cs)
            except InfeasibleAlignmentError:
                spans.append((fp, np.zeros(0, dtype=np.intp)))
                continue
            kept = np.flatnonzero(fla.keep_mask)
            spans.append((fp, kept))
            if kept.size:
                rows.append(fp.feats.data[kept])
                labels.append(fla.labels[kept])
        if rows:
            bag = LabeledFeatureBag(np.concatenate(rows), np.concatenate(labels))
        else:
            dim = group[0][0].feats.cols
            bag = LabeledFeatureBag.empty(dim)
        bags.append((bag, spans))

    (src_bag, src_spans), (tgt_bag, tgt_spans) = bags
    if len(src_bag) == 0 or len(tgt_bag) == 0:
        raise NoOverlapError("no kept frames on one side")
    value, (gs, gt) = cmatch_loss(src_bag, tgt_bag, cs, cfg.kernel)
    pairs = []
    for (grad, spans) in ((gs, src_spans), (gt, tgt_spans)):
        offset = 0
        for fp, kept in spans:
            if kept.size == 0:
                continue
            full = np.zeros(fp.feats.shape)
            full[kept] = grad[offset:offset + kept.size]
            offset += kept.size
            pairs.append((fp.feats, full))
    return value, nk.external_scalar(value, pairs)


def _domain_match_node(src_feats, tgt_feats, cfg):
    """Domain-level baseline: squared MMD between per-utterance mean features."""
    src_means = np.stack([fp.feats.data.mean(axis=0) for fp, _ in src_feats])
    tgt_means = np.stack([fp.feats.data.mean(axis=0) for fp, _ in tgt_feats])
    value, (gs, gt) = mmd_sq_biased(src_means, tgt_means, cfg.kernel)
    pairs = []
    for grad, group in ((gs, src_feats), (gt, tgt_feats)):
        for vec, (fp, _) in zip(grad, group):
            n = fp.feats.rows
            pairs.append((fp.feats, np.tile(vec / n, (n, 1))))
    return value, nk.external_scalar(value, pairs)


def adapt_domain_mmd(params: ModelParams, source: DomainCorpus, target: DomainCorpus,
                     pseudo: PseudoLabelSet, cfg: AdaptConfig,
                     metrics_path=None) -> TrainResult:
    """Domain-level MMD baseline: match time-averaged encoder outputs."""
    return adapt(params, source, target, pseudo, cfg, domain_level=True,
                 metrics_path=metrics_path)


# ---------------------------------------------------------------------------
# Centroid diagnostic
# ---------------------------------------------------------------------------

def character_centroids(params: ModelParams, corpus: DomainCorpus,
                        strategy: AssignmentStrategy, cs: CharSet,
                        confidence_threshold: float | None = None) -> dict[int, np.ndarray]:
    """Mean encoder feature of the kept frames of each character.

    Characters with zero kept frames are absent from the result rather
    than mapped to zero vectors.
    """
    if confidence_threshold is not None:
        strategy = replace(strategy, confidence_threshold=confidence_threshold)
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for utt in corpus.utterances:
        fp = forward_pass(params, utt.frames, None, JointLossConfig())
        transcript = None
        if strategy.needs_transcript:
            if utt.transcript is None:
                continue
            transcript = cs.to_indices(utt.transcript)
        try:
            fla = assign_labels(strategy, LogProbLattice(fp.lattice.data), transcript, cs)
        except InfeasibleAlignmentError:
            continue
        for c in np.unique(fla.kept_labels()):
            rows = fp.feats.data[fla.keep_mask & (fla.labels == c)]
            sums[int(c)] = sums.get(int(c), 0.0) + rows.sum(axis=0)
            counts[int(c)] = counts.get(int(c), 0) + rows.shape[0]
    return {c: sums[c] / counts[c] for c in sums}


def centroid_distances(src_centroids: dict[int, np.ndarray],
                       tgt_centroids: dict[int, np.ndarray],
                       cs: CharSet) -> list[tuple[str, float | None]]:
    """(symbol, distance) per non-blank character; None when absent on a side."""
    out = []
    for c in cs.non_blank_indices():
        if c in src_centroids and c in tgt_centroids:
            out.append((cs.symbols[c], float(np.linalg.norm(src_centroids[c] - tgt_centroids[c]))))
        else:
            out.append((cs.symbols[c], None))
    return out


def mean_centroid_distance(rows: list[tuple[str, float | None]]) -> float | None:
    vals = [d for _, d in rows if d is not None]
    return float(np.mean(vals)) if vals else None


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def _fmt_cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_metrics(path, rows: list[EpochRow], header: str) -> None:
    lines = [header]
    for r in rows:
        lines.append(",".join(_fmt_cell(v) for v in
                              (r.epoch, r.source_loss, r.target_loss,
                               r.match_loss, r.total_loss, r.dev_cer)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
