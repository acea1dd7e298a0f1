"""Toy CTC-attention recognizer.

Encoder: two affine layers with tanh, one feature row per (optionally
stacked) input frame.  CTC head: affine to the full character vocabulary
including blank.  Decoder: character embeddings, a single single-head
cross-attention block, and an output affine over the blank-free
vocabulary plus end-of-sequence; each step conditions on the previous
token only.

Training combines the two losses as
``(1 - w) * attention_nll + w * ctc_nll`` with ``w`` the CTC weight, and
decoding re-scores beam expansions the same way using exact CTC prefix
probabilities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import numkit as nk
from .ctc import CharSet, LogProbLattice, ctc_loss
from .errors import InvalidShapeError, ParseError

PARAM_NAMES = (
    "enc_w1", "enc_b1", "enc_w2", "enc_b2",
    "ctc_w", "ctc_b",
    "dec_emb", "dec_wq", "dec_wk", "dec_wv",
    "dec_wctx", "dec_wemb", "dec_bout",
)


@dataclass(frozen=True)
class ModelDims:
    input_dim: int = 10
    hidden_dim: int = 24
    feature_dim: int = 16
    embed_dim: int = 8
    attn_dim: int = 16
    subsample: int = 1

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")


@dataclass(frozen=True)
class JointLossConfig:
    """Mixing weight of the CTC loss against the attention loss."""

    ctc_weight: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.ctc_weight <= 1.0:
            raise ValueError(f"ctc_weight must be in [0, 1], got {self.ctc_weight}")


@dataclass(frozen=True)
class ModelParams:
    """All trainable weights plus the structure needed to use them."""

    charset: CharSet
    dims: ModelDims
    weights: dict[str, nk.Matrix] = field(repr=False)

    def __post_init__(self):
        missing = [n for n in PARAM_NAMES if n not in self.weights]
        if missing:
            raise InvalidShapeError(f"missing parameter blocks: {missing}")

    def matrices(self) -> list[nk.Matrix]:
        return [self.weights[n] for n in PARAM_NAMES]

    def with_weights(self, weights: dict[str, nk.Matrix]) -> "ModelParams":
        return replace(self, weights=weights)

    @property
    def num_classes(self) -> int:
        """Decoder output classes: blank-free characters plus end-of-sequence."""
        return self.charset.size  # (size - 1 characters) + eos

    def char_to_class(self) -> dict[int, int]:
        return {c: k for k, c in enumerate(self.charset.non_blank_indices())}

    def class_to_char(self) -> list[int]:
        return self.charset.non_blank_indices()


def init_params(charset: CharSet, dims: ModelDims, seed: int) -> ModelParams:
    """Deterministic uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] initialization."""
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 97]))
    d_in = dims.input_dim * dims.subsample
    n_cls = charset.size  # characters without blank, plus eos
    shapes = {
        "enc_w1": (d_in, dims.hidden_dim, d_in),
        "enc_b1": (1, dims.hidden_dim, d_in),
        "enc_w2": (dims.hidden_dim, dims.feature_dim, dims.hidden_dim),
        "enc_b2": (1, dims.feature_dim, dims.hidden_dim),
        "ctc_w": (dims.feature_dim, charset.size, dims.feature_dim),
        "ctc_b": (1, charset.size, dims.feature_dim),
        "dec_emb": (n_cls, dims.embed_dim, dims.embed_dim),
        "dec_wq": (dims.embed_dim, dims.attn_dim, dims.embed_dim),
        "dec_wk": (dims.feature_dim, dims.attn_dim, dims.feature_dim),
        "dec_wv": (dims.feature_dim, dims.attn_dim, dims.feature_dim),
        "dec_wctx": (dims.attn_dim, n_cls, dims.attn_dim),
        "dec_wemb": (dims.embed_dim, n_cls, dims.embed_dim),
        "dec_bout": (1, n_cls, dims.attn_dim),
    }
    weights = {name: nk.uniform_init(rng, r, c, fan_in)
               for name, (r, c, fan_in) in shapes.items()}
    return ModelParams(charset=charset, dims=dims, weights=weights)


def stack_frames(frames: np.ndarray, factor: int) -> np.ndarray:
    """Frame stacking for subsample factors > 1; pads by repeating the tail."""
    if factor == 1:
        return frames
    n, d = frames.shape
    pad = (-n) % factor
    if pad:
        frames = np.concatenate([frames, np.repeat(frames[-1:], pad, axis=0)])
    return frames.reshape(-1, factor * d)


def encode(params: ModelParams, frames: np.ndarray) -> nk.Matrix:
    """Final-layer encoder features, one row per (stacked) frame."""
    frames = np.asarray(frames, dtype=np.float64)
    stacked = stack_frames(frames, params.dims.subsample)
    if stacked.shape[1] != params.dims.input_dim * params.dims.subsample:
        raise InvalidShapeError(
            f"frames have dim {frames.shape[1]}, model expects {params.dims.input_dim}")
    w = params.weights
    h = nk.tanh(nk.add(nk.matmul(nk.Matrix(stacked), w["enc_w1"]), w["enc_b1"]))
    return nk.tanh(nk.add(nk.matmul(h, w["enc_w2"]), w["enc_b2"]))


def ctc_lattice_node(params: ModelParams, feats: nk.Matrix) -> nk.Matrix:
    w = params.weights
    return nk.log_softmax_rows(nk.add(nk.matmul(feats, w["ctc_w"]), w["ctc_b"]))


def compute_lattice(params: ModelParams, frames: np.ndarray) -> LogProbLattice:
    """CTC head output as a validated lattice (no tape interaction needed)."""
    return LogProbLattice(ctc_lattice_node(params, encode(params, frames)).data)


def decoder_logprobs_node(params: ModelParams, feats: nk.Matrix,
                          inputs: list[int]) -> nk.Matrix:
    """Teacher-forced per-step log probabilities over decoder classes.

    ``inputs`` are embedding rows: previous-token classes with the
    start-of-sequence row (the eos index) first.
    """
    w = params.weights
    e = nk.take_rows(w["dec_emb"], inputs)
    q = nk.matmul(e, w["dec_wq"])
    k = nk.matmul(feats, w["dec_wk"])
    v = nk.matmul(feats, w["dec_wv"])
    scores = nk.scale(nk.matmul(q, nk.transpose(k)), 1.0 / np.sqrt(params.dims.attn_dim))
    attn = nk.exp(nk.log_softmax_rows(scores))
    ctx = nk.matmul(attn, v)
    logits = nk.add(nk.add(nk.matmul(ctx, w["dec_wctx"]), nk.matmul(e, w["dec_wemb"])),
                    w["dec_bout"])
    return nk.log_softmax_rows(logits)


@dataclass
class ForwardPass:
    """Tape-aware nodes from one utterance forward pass."""

    feats: nk.Matrix
    lattice: nk.Matrix
    loss: nk.Matrix | None = None
    att_nll: float | None = None
    ctc_nll: float | None = None


def forward_pass(params: ModelParams, frames: np.ndarray, transcript,
                 cfg: JointLossConfig) -> ForwardPass:
    """Encoder, CTC head, and (when a transcript is given) the joint loss.

    Raises InfeasibleAlignmentError when the transcript cannot be aligned,
    so callers can skip the utterance visibly.
    """
    feats = encode(params, frames)
    lattice = ctc_lattice_node(params, feats)
    fp = ForwardPass(feats=feats, lattice=lattice)
    if transcript is None:
        return fp
    transcript = np.asarray(transcript, dtype=np.intp)

    ctc_nll, ctc_grad = ctc_loss(LogProbLattice(lattice.data), transcript, params.charset)
    ctc_node = nk.external_scalar(ctc_nll, [(lattice, ctc_grad)])

    cls = params.char_to_class()
    eos = params.num_classes - 1
    targets = [cls[int(c)] for c in transcript] + [eos]
    inputs = [eos] + targets[:-1]  # the eos row doubles as start-of-sequence
    logp = decoder_logprobs_node(params, feats, inputs)
    onehot = np.zeros((len(targets), params.num_classes))
    onehot[np.arange(len(targets)), targets] = 1.0
    att_node = nk.scale(nk.sum_all(nk.mul(logp, nk.Matrix(onehot))), -1.0 / len(targets))

    lam = cfg.ctc_weight
    fp.loss = nk.add(nk.scale(att_node, 1.0 - lam), nk.scale(ctc_node, lam))
    fp.att_nll = att_node.item()
    fp.ctc_nll = ctc_nll
    return fp


def joint_loss(params: ModelParams, frames: np.ndarray, transcript,
               cfg: JointLossConfig) -> tuple[float, dict[str, np.ndarray]]:
    """Joint loss value and gradients for every named parameter."""
    with nk.GradTape() as tape:
        fp = forward_pass(params, frames, transcript, cfg)
    grads = tape.gradients(fp.loss, params.matrices())
    return fp.loss.item(), dict(zip(PARAM_NAMES, grads))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients so the global norm is at most ``max_norm``."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}


def sgd_step(params: ModelParams, grads: dict[str, np.ndarray], step_size: float,
             clip_norm: float = 5.0) -> ModelParams:
    grads = clip_gradients(grads, clip_norm)
    new = {name: nk.Matrix(params.weights[name].data - step_size * grads[name])
           for name in PARAM_NAMES}
    return params.with_weights(new)


# ---------------------------------------------------------------------------
# Joint-rescored beam search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hypothesis:
    """A decoded character sequence with its scores (log domain).

    ``joint_score == (1 - w) * att_score + w * ctc_score`` by construction;
    confidence is the joint score divided by the number of decoding steps
    (token count plus the end-of-sequence step).
    """

    tokens: tuple[int, ...]  # charset indices, blank-free
    joint_score: float
    att_score: float
    ctc_score: float

    @property
    def confidence(self) -> float:
        return self.joint_score / (len(self.tokens) + 1)

    def text(self, cs: CharSet) -> str:
        return cs.to_text(self.tokens)


class _PrefixScorer:
    """Exact CTC prefix probabilities over a fixed lattice.

    State per hypothesis: log mass of paths emitting exactly the prefix,
    split by whether the last frame so far is the prefix's final character
    (``r_n``) or blank (``r_b``).
    """

    def __init__(self, lattice: np.ndarray, blank: int, char_cols: np.ndarray):
        self.lp_char = lattice[:, char_cols]       # N x C
        self.lp_blank = lattice[:, blank]          # N
        self.n = lattice.shape[0]
        self.c = char_cols.shape[0]

    def initial(self) -> tuple[np.ndarray, np.ndarray, int]:
        r_n = np.full(self.n, -np.inf)
        r_b = np.cumsum(self.lp_blank)
        return (r_n, r_b, -1)

    def exact_logprob(self, state) -> float:
        r_n, r_b, _ = state
        return float(np.logaddexp(r_n[-1], r_b[-1]))

    def extend_all(self, state):
        """Scores and states for every one-character extension.

        Returns (psi, r_n_new, r_b_new): psi[c] is the log prefix
        probability of the extended hypothesis; columns of the arrays are
        per-candidate states.
        """
        r_n, r_b, last = state
        phi = np.tile(np.logaddexp(r_b, r_n)[:, None], (1, self.c))
        if last >= 0:
            phi[:, last] = r_b  # repeated character must cross a blank
        rn_new = np.empty((self.n, self.c))
        rb_new = np.empty((self.n, self.c))
        psi_terms = np.empty((self.n, self.c))
        prev_phi = np.full(self.c, 0.0 if last < 0 else -np.inf)
        prev_rn = np.full(self.c, -np.inf)
        prev_rb = np.full(self.c, -np.inf)
        for t in range(self.n):
            rn_new[t] = self.lp_char[t] + np.logaddexp(prev_phi, prev_rn)
            rb_new[t] = self.lp_blank[t] + np.logaddexp(prev_rb, prev_rn)
            psi_terms[t] = self.lp_char[t] + prev_phi
            prev_phi = phi[t]
            prev_rn = rn_new[t]
            prev_rb = rb_new[t]
        psi = np.logaddexp.reduce(psi_terms, axis=0)
        return psi, rn_new, rb_new


def _mix(lam: float, att: float, ctc: float) -> float:
    """(1-lam)*att + lam*ctc without 0 * inf pitfalls at the endpoints."""
    if lam == 0.0:
        return att
    if lam == 1.0:
        return ctc
    return (1.0 - lam) * att + lam * ctc


def _decode_step(params: ModelParams, keys: np.ndarray, values: np.ndarray,
                 prev_row: int) -> np.ndarray:
    """Log probabilities over decoder classes given the previous token row."""
    w = params.weights
    e = w["dec_emb"].data[prev_row]
    q = e @ w["dec_wq"].data
    scores = (keys @ q) / np.sqrt(params.dims.attn_dim)
    scores = scores - scores.max()
    attn = np.exp(scores - np.log(np.exp(scores).sum()))
    ctx = attn @ values
    logits = ctx @ w["dec_wctx"].data + e @ w["dec_wemb"].data + w["dec_bout"].data[0]
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def beam_search(params: ModelParams, frames: np.ndarray, cfg: JointLossConfig,
                beam_width: int = 10, max_len: int | None = None) -> list[Hypothesis]:
    """Length-synchronous beam search re-scored by exact CTC prefix probabilities.

    Every expansion is scored by ``(1 - w) * att + w * ctc``; end-of-sequence
    expansions use the exact CTC probability of the finished sequence.  At
    the length cap only end-of-sequence is allowed, so at least one finished
    hypothesis always exists.  Returns up to ``beam_width`` hypotheses
    sorted by joint score.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    feats = encode(params, frames)
    lattice = ctc_lattice_node(params, feats).data
    if max_len is None:
        max_len = lattice.shape[0]
    w = params.weights
    keys = feats.data @ w["dec_wk"].data
    values = feats.data @ w["dec_wv"].data
    class_chars = np.asarray(params.class_to_char(), dtype=np.intp)
    eos = params.num_classes - 1
    scorer = _PrefixScorer(lattice, params.charset.blank_index, class_chars)
    lam = cfg.ctc_weight

    # beams: (tokens, att_cum, ctc_prefix, state)
    beams = [((), 0.0, 0.0, scorer.initial())]
    finished: list[tuple[float, tuple[int, ...], float, float]] = []
    for step in range(max_len + 1):
        candidates = []
        for tokens, att_cum, _, state in beams:
            prev_row = tokens[-1] if tokens else eos
            dist = _decode_step(params, keys, values, prev_row)
            att_eos = att_cum + dist[eos]
            ctc_eos = scorer.exact_logprob(state)
            joint = _mix(lam, att_eos, ctc_eos)
            if joint > -np.inf:
                finished.append((joint, tokens, att_eos, ctc_eos))
            if step == max_len:
                continue
            psi, rn_new, rb_new = scorer.extend_all(state)
            for c in range(scorer.c):
                att_c = att_cum + dist[c]
                joint_c = _mix(lam, att_c, psi[c])
                if joint_c == -np.inf:
                    continue
                candidates.append((joint_c, tokens + (c,), att_c, psi[c],
                                   (rn_new[:, c], rb_new[:, c], c)))
        if not candidates:
            break
        candidates.sort(key=lambda x: (-x[0], x[1]))
        beams = [(t, a, p, s) for _, t, a, p, s in candidates[:beam_width]]

    finished.sort(key=lambda x: (-x[0], x[1]))
    out = []
    for joint, tokens, att, ctc in finished[:beam_width]:
        out.append(Hypothesis(tokens=tuple(int(class_chars[c]) for c in tokens),
                              joint_score=joint, att_score=att, ctc_score=ctc))
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MAGIC = "cmatch-model v1"


def save_checkpoint(params: ModelParams, path, meta: dict | None = None) -> None:
    """Text checkpoint with exact float64 round trip (write-read-write stable)."""
    lines = [_MAGIC]
    lines.append("charset " + json.dumps(
        {"symbols": "".join(params.charset.symbols), "blank_index": params.charset.blank_index},
        sort_keys=True))
    lines.append("dims " + json.dumps(
        {k: getattr(params.dims, k) for k in
         ("input_dim", "hidden_dim", "feature_dim", "embed_dim", "attn_dim", "subsample")},
        sort_keys=True))
    lines.append("meta " + json.dumps(meta or {}, sort_keys=True))
    for name in PARAM_NAMES:
        m = params.weights[name]
        lines.append(f"param {name} {m.rows} {m.cols}")
        for row in m.data:
            lines.append(" ".join(repr(float(x)) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ParseError(path, 1, f"expected header {_MAGIC!r}")
    try:
        cs_info = json.loads(lines[1].split(" ", 1)[1])
        dims_info = json.loads(lines[2].split(" ", 1)[1])
        meta = json.loads(lines[3].split(" ", 1)[1])
    except (IndexError, json.JSONDecodeError) as e:
        raise ParseError(path, 2, f"bad checkpoint metadata: {e}") from None
    charset = CharSet(symbols=tuple(cs_info["symbols"]), blank_index=cs_info["blank_index"])
    dims = ModelDims(**dims_info)
    weights = {}
    i = 4
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if len(head) != 4 or head[0] != "param":
            raise ParseError(path, i + 1, f"expected a param header, got {lines[i]!r}")
        name, rows, cols = head[1], int(head[2]), int(head[3])
        block = np.empty((rows, cols))
        for r in range(rows):
            parts = lines[i + 1 + r].split()
            if len(parts) != cols:
                raise ParseError(path, i + 2 + r, f"expected {cols} values")
            block[r] = [float(p) for p in parts]
        weights[name] = nk.Matrix(block)
        i += 1 + rows
    return ModelParams(charset=charset, dims=dims, weights=weights), meta
