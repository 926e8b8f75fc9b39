"""The conditional translation model and its checkpoint format."""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import numerics as nx
from .attention import AlignmentTensor, AnnotationSet, AttentionKeys, Variant, attend
from .errors import ContractError, DataError, VocabularyError
from .layers import (
    EmbeddingMatrix,
    FeedForwardParams,
    LSTMCellParams,
    bidirectional_encode,
    embed,
    ffnn,
    glorot,
    lstm_step,
)
from .numerics import Tensor

EOS, BOS, UNK = 0, 1, 2
N_RESERVED = 3

CHECKPOINT_MAGIC = b"FGNMT\x00"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    variant: Variant = Variant.ATTY2D
    contextualization: bool = False
    src_vocab: int = 30000
    tgt_vocab: int = 30000
    emb_dim: int = 620
    hidden_dim: int = 1000
    align_hidden_dim: int = 2000
    ctx_hidden_dim: int = 0  # 0 means emb_dim
    learn_initial_states: bool = False
    seed: int = 0

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        if self.ctx_hidden_dim == 0:
            self.ctx_hidden_dim = self.emb_dim
        sizes = (self.src_vocab, self.tgt_vocab, self.emb_dim, self.hidden_dim, self.align_hidden_dim)
        if min(sizes) < 1:
            raise ContractError(f"model sizes must be positive: {self}")
        if min(self.src_vocab, self.tgt_vocab) <= N_RESERVED:
            raise ContractError("vocabularies must hold more than the three reserved ids")

    @property
    def annotation_dim(self) -> int:
        return 2 * self.hidden_dim

    @classmethod
    def toy(cls, variant="atty2d", src_vocab=23, tgt_vocab=23, emb_dim=32, hidden_dim=48, **kw) -> "ModelConfig":
        """Desk-scale sizes, keeping the alignment width at twice the hidden size."""
        kw.setdefault("align_hidden_dim", 2 * hidden_dim)
        return cls(variant=variant, src_vocab=src_vocab, tgt_vocab=tgt_vocab, emb_dim=emb_dim, hidden_dim=hidden_dim, **kw)

    def to_lines(self) -> list[str]:
        out = []
        for k, v in asdict(self).items():
            if isinstance(v, Variant):
                v = v.value
            elif isinstance(v, bool):
                v = int(v)
            out.append(f"{k}={v}")
        return out

    @classmethod
    def from_lines(cls, lines) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for line in lines:
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            if key not in types:
                raise DataError(f"unknown config field {key!r}")
            if key == "variant":
                kw[key] = Variant.parse(value)
            elif types[key] in (bool, "bool"):
                kw[key] = bool(int(value))
            else:
                kw[key] = int(value)
        return cls(**kw)


@dataclass
class DecoderState:
    z: Tensor
    cell: Tensor
    step: int = 0


@dataclass
class StepOutput:
    log_probs: Tensor
    alpha: Tensor
    state: DecoderState


def contextualize(N: FeedForwardParams, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Add the mean of ``N(x_t)`` over the sentence to every embedding.

    ``x`` is (..., T, E).  With a padding ``mask`` the mean runs over real
    positions only.
    """
    T = x.shape[-2]
    if T == 0:
        raise ContractError("contextualize: empty sentence")
    proj = ffnn(N, x)
    if mask is None:
        cx = nx.mean(proj, axis=-2, keepdims=True)
    else:
        m = np.asarray(mask, dtype=np.float64)
        inv = 1.0 / m.sum(axis=-1)
        cx = nx.tsum(proj * Tensor(m[..., None]), axis=-2, keepdims=True) * Tensor(inv[..., None, None])
    return x + cx


class NMTModel:
    """Bidirectional LSTM encoder, attention, LSTM decoder, softmax output.

    Parameters live in ``self.params`` keyed by name; every other view of
    them (embedding matrices, LSTM cells, score network) is assembled on
    access so the dict stays the single owner.
    """

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        missing = set(self.param_shapes(config)) - set(params)
        if missing:
            raise DataError(f"missing parameters: {sorted(missing)}")

    @staticmethod
    def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
        E, H, D, A = cfg.emb_dim, cfg.hidden_dim, cfg.annotation_dim, cfg.align_hidden_dim
        v = cfg.variant
        att_in = H + D + (E if v.uses_target else 0)
        att_out = D if v.fine_grained else 1
        shapes = {
            "src_emb": (E, cfg.src_vocab),
            "tgt_emb": (E, cfg.tgt_vocab),
        }
        for name in ("enc_fwd", "enc_bwd"):
            shapes[f"{name}.wx"] = (4 * H, E)
            shapes[f"{name}.wh"] = (4 * H, H)
            shapes[f"{name}.b"] = (4 * H,)
            if cfg.learn_initial_states:
                shapes[f"{name}.h0"] = (H,)
        if cfg.contextualization:
            C = cfg.ctx_hidden_dim
            shapes.update({"ctx.w1": (C, E), "ctx.b1": (C,), "ctx.w2": (E, C), "ctx.b2": (E,)})
        shapes.update(
            {
                "dec_init.w": (H, D),
                "dec_init.b": (H,),
                "dec.wx": (4 * H, E + D),
                "dec.wh": (4 * H, H),
                "dec.b": (4 * H,),
                "att.w1": (A, att_in),
                "att.b1": (A,),
                "att.w2": (att_out, A),
                "att.b2": (att_out,),
                "out.w": (cfg.tgt_vocab, H),
                "out.b": (cfg.tgt_vocab,),
            }
        )
        return shapes

    @classmethod
    def init(cls, config: ModelConfig) -> "NMTModel":
        """Uniform Glorot matrices, zero vectors, all drawn from ``config.seed``."""
        rng = np.random.default_rng(config.seed)
        params = {}
        for name, shape in cls.param_shapes(config).items():
            data = glorot(rng, *shape) if len(shape) == 2 else np.zeros(shape)
            params[name] = Tensor(data, requires_grad=True)
        return cls(config, params)

    # -- views ------------------------------------------------------------

    def _lstm(self, name: str) -> LSTMCellParams:
        p = self.params
        return LSTMCellParams(p[f"{name}.wx"], p[f"{name}.wh"], p[f"{name}.b"])

    def _ff(self, name: str) -> FeedForwardParams:
        p = self.params
        return FeedForwardParams(p[f"{name}.w1"], p[f"{name}.b1"], p[f"{name}.w2"], p[f"{name}.b2"])

    @property
    def src_embedding(self) -> EmbeddingMatrix:
        return EmbeddingMatrix(self.params["src_emb"])

    @property
    def tgt_embedding(self) -> EmbeddingMatrix:
        return EmbeddingMatrix(self.params["tgt_emb"])

    @property
    def scorer(self) -> FeedForwardParams:
        return self._ff("att")

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def copy(self) -> "NMTModel":
        return NMTModel(self.config, {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.params.items()})

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for line in self.config.to_lines():
            h.update(line.encode())
        for name, p in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    # -- encoder ----------------------------------------------------------

    def encode_source(self, ids, mask: np.ndarray | None = None) -> AnnotationSet:
        """Annotations for a sentence (T,) or a padded batch (B, T)."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape[-1] < 1:
            raise ContractError("encode_source: empty source sentence")
        x = embed(self.src_embedding, ids)
        if self.config.contextualization:
            x = contextualize(self._ff("ctx"), x, mask)
        h0 = None
        if self.config.learn_initial_states:
            h0 = (self.params["enc_fwd.h0"], self.params["enc_bwd.h0"])
        return bidirectional_encode(self._lstm("enc_fwd"), self._lstm("enc_bwd"), x, mask, h0)

    # -- decoder ----------------------------------------------------------

    def initial_state(self, C: AnnotationSet) -> DecoderState:
        """``z_0 = tanh(W mean_t(h_t) + b)``, zero memory cell."""
        if C.mask is None:
            pooled = nx.mean(C.h, axis=-2)
        else:
            m = np.asarray(C.mask, dtype=np.float64)
            pooled = nx.tsum(C.h * Tensor(m[..., None]), axis=-2) * Tensor((1.0 / m.sum(axis=-1))[..., None])
        z = nx.tanh(nx.linear(pooled, self.params["dec_init.w"], self.params["dec_init.b"]))
        return DecoderState(z, Tensor(np.zeros(z.shape)), 0)

    def attention_keys(self, C: AnnotationSet) -> AttentionKeys:
        cfg = self.config
        return AttentionKeys.build(cfg.variant, self.scorer, C, cfg.hidden_dim, cfg.emb_dim)

    def decoder_step(
        self,
        state: DecoderState,
        y_prev_ids,
        C: AnnotationSet,
        keys: AttentionKeys | None = None,
    ) -> StepOutput:
        """Attend, update the decoder LSTM, and score the next target word.

        ``y_prev_ids`` is a scalar id or a (B,) array matching the leading
        shape of ``state.z``.
        """
        ids = np.asarray(y_prev_ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.tgt_vocab):
            raise VocabularyError(f"target id outside vocabulary of size {self.config.tgt_vocab}")
        keys = keys if keys is not None else self.attention_keys(C)
        y = embed(self.tgt_embedding, ids)
        ctx, alpha = attend(keys, C, state.z, y if self.config.variant.uses_target else None)
        z, cell = lstm_step(self._lstm("dec"), nx.concat([y, ctx], axis=-1), (state.z, state.cell))
        logits = nx.linear(z, self.params["out.w"], self.params["out.b"])
        return StepOutput(nx.log_softmax(logits, axis=-1), alpha, DecoderState(z, cell, state.step + 1))

    # -- likelihood -------------------------------------------------------

    def batch_log_likelihood(self, src, src_mask, tgt, tgt_mask) -> Tensor:
        """Summed teacher-forced log-likelihood of a padded batch.

        ``src`` (B, T) and ``tgt`` (B, T') are id arrays; masks are 1 on real
        tokens.  Every target row must end (before padding) with EOS.
        """
        src = np.asarray(src, dtype=np.int64)
        tgt = np.asarray(tgt, dtype=np.int64)
        if tgt.shape[-1] < 1:
            raise ContractError("empty target sentence")
        src_mask = None if src_mask is None or np.all(src_mask) else np.asarray(src_mask, dtype=np.float64)
        C = self.encode_source(src, src_mask)
        keys = self.attention_keys(C)
        state = self.initial_state(C)
        y_prev = np.concatenate([np.full(tgt.shape[:-1] + (1,), BOS), tgt[..., :-1]], axis=-1)
        zs = []
        for t in range(tgt.shape[-1]):
            y = embed(self.tgt_embedding, y_prev[..., t])
            ctx, _ = attend(keys, C, state.z, y if self.config.variant.uses_target else None)
            z, cell = lstm_step(self._lstm("dec"), nx.concat([y, ctx], axis=-1), (state.z, state.cell))
            state = DecoderState(z, cell, state.step + 1)
            zs.append(z)
        logits = nx.linear(nx.stack(zs, axis=-2), self.params["out.w"], self.params["out.b"])
        logp = nx.log_softmax(logits, axis=-1)
        lead = np.indices(tgt.shape)
        picked = logp[tuple(lead) + (tgt,)]
        if tgt_mask is not None and not np.all(tgt_mask):
            picked = picked * Tensor(np.asarray(tgt_mask, dtype=np.float64))
        return nx.tsum(picked)

    def sequence_log_prob(self, src_ids, tgt_ids) -> Tensor:
        """``sum_t log p(y_t | y_<t, x)`` for any target sequence."""
        return self.batch_log_likelihood(np.asarray(src_ids)[None], None, np.asarray(tgt_ids)[None], None)

    def sentence_log_likelihood(self, src_ids, tgt_ids) -> Tensor:
        tgt_ids = list(tgt_ids)
        if not tgt_ids:
            raise ContractError("sentence_log_likelihood: empty target")
        if tgt_ids[-1] != EOS:
            raise ContractError("sentence_log_likelihood: target must end with EOS")
        return self.sequence_log_prob(src_ids, tgt_ids)

    def step_alignments(self, src_ids, tgt_ids) -> AlignmentTensor:
        """Teacher-forced attention weights, one slice per target token."""
        with nx.no_grad():
            C = self.encode_source(np.asarray(src_ids, dtype=np.int64))
            keys = self.attention_keys(C)
            state = self.initial_state(C)
            prev = BOS
            slices = []
            for y in tgt_ids:
                out = self.decoder_step(state, prev, C, keys)
                slices.append(out.alpha.data)
                state, prev = out.state, y
        return AlignmentTensor(np.stack(slices), self.config.variant)


def collapse_to_atty(model: NMTModel) -> NMTModel:
    """An AttY model equivalent to a dimension-constant AttY2D model.

    The fine-grained scorer of ``model`` is first overwritten so that every
    output row equals row 0 and every output bias equals bias 0; the returned
    AttY model shares all other weights and uses that row as its only output.
    """
    cfg = model.config
    if cfg.variant is not Variant.ATTY2D:
        raise ContractError("collapse_to_atty needs an atty2d model")
    w2, b2 = model.params["att.w2"], model.params["att.b2"]
    w2.data[:] = w2.data[0]
    b2.data[:] = b2.data[0]
    new_cfg = ModelConfig(**{**asdict(cfg), "variant": Variant.ATTY})
    params = {k: Tensor(v.data.copy(), requires_grad=True) for k, v in model.params.items()}
    params["att.w2"] = Tensor(w2.data[:1].copy(), requires_grad=True)
    params["att.b2"] = Tensor(b2.data[:1].copy(), requires_grad=True)
    return NMTModel(new_cfg, params)


# -- checkpoint format -------------------------------------------------------


def checkpoint_bytes(model: NMTModel) -> bytes:
    header = ("\n".join(model.config.to_lines()) + "\n").encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), struct.pack("<I", len(header)), header]
    for name, p in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", p.ndim))
        parts.append(struct.pack(f"<{p.ndim}I", *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model: NMTModel, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def checkpoint_from_bytes(buf: bytes) -> NMTModel:
    if buf[:6] != CHECKPOINT_MAGIC:
        raise DataError("not an FGNMT checkpoint")
    version, hlen = struct.unpack_from("<II", buf, 6)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    pos = 14
    config = ModelConfig.from_lines(buf[pos : pos + hlen].decode("utf-8").splitlines())
    pos += hlen
    params = {}
    while pos < len(buf):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * count
        params[name] = Tensor(data, requires_grad=True)
    expected = NMTModel.param_shapes(config)
    for name, shape in expected.items():
        if name in params and params[name].shape != shape:
            raise DataError(f"parameter {name} has shape {params[name].shape}, config implies {shape}")
    return NMTModel(config, params)


def load_checkpoint(path) -> NMTModel:
    return checkpoint_from_bytes(Path(path).read_bytes())
