"""Byte-level encoder-decoder transformer.

Pre-norm residual blocks with RMS normalization, gated GELU feedforward,
bucketed relative-position bias shared across layers (one table for
encoder self-attention, one for decoder self-attention, none for
cross-attention), and an output projection tied to the byte embedding.

Attention masking is additive: masked positions get a large negative
constant whose softmax weight underflows to exactly zero, so masked
bytes cannot influence any unmasked output bit.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .tokenizer import EOS_ID, PAD_ID, VOCAB_SIZE

MASK_VALUE = -1e9


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    enc_layers: int = 6
    dec_layers: int = 2
    dropout_rate: float = 0.1
    rel_pos_buckets: int = 32
    rel_pos_max_distance: int = 128
    vocab_size: int = VOCAB_SIZE
    max_seq_len: int = 512

    def __post_init__(self):
        for name in ("d_model", "n_heads", "d_ff", "enc_layers", "dec_layers",
                     "rel_pos_buckets", "rel_pos_max_distance", "vocab_size", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.rel_pos_buckets % 2 != 0:
            raise ValueError(f"rel_pos_buckets must be even, got {self.rel_pos_buckets}")
        if self.rel_pos_max_distance <= self.rel_pos_buckets // 4:
            raise ValueError("rel_pos_max_distance must exceed rel_pos_buckets/4")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def to_dict(self) -> dict:
        return {
            "d_model": self.d_model, "n_heads": self.n_heads, "d_ff": self.d_ff,
            "enc_layers": self.enc_layers, "dec_layers": self.dec_layers,
            "dropout_rate": self.dropout_rate, "rel_pos_buckets": self.rel_pos_buckets,
            "rel_pos_max_distance": self.rel_pos_max_distance,
            "vocab_size": self.vocab_size, "max_seq_len": self.max_seq_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_shapes(config: ModelConfig) -> dict[str, tuple]:
    """Every parameter name and shape, in the canonical (checkpoint) order."""
    d, h, ff = config.d_model, config.n_heads, config.d_ff
    shapes: dict[str, tuple] = {"embedding": (config.vocab_size, d)}
    shapes["enc.rel_bias"] = (h, config.rel_pos_buckets)
    for i in range(config.enc_layers):
        shapes[f"enc.{i}.attn.norm_gain"] = (d,)
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"enc.{i}.attn.{w}"] = (d, d)
        shapes[f"enc.{i}.ff.norm_gain"] = (d,)
        shapes[f"enc.{i}.ff.w_in"] = (d, ff)
        shapes[f"enc.{i}.ff.w_gate"] = (d, ff)
        shapes[f"enc.{i}.ff.w_out"] = (ff, d)
    shapes["enc.final_norm_gain"] = (d,)
    shapes["dec.rel_bias"] = (h, config.rel_pos_buckets)
    for i in range(config.dec_layers):
        for block in ("self_attn", "cross_attn"):
            shapes[f"dec.{i}.{block}.norm_gain"] = (d,)
            for w in ("wq", "wk", "wv", "wo"):
                shapes[f"dec.{i}.{block}.{w}"] = (d, d)
        shapes[f"dec.{i}.ff.norm_gain"] = (d,)
        shapes[f"dec.{i}.ff.w_in"] = (d, ff)
        shapes[f"dec.{i}.ff.w_gate"] = (d, ff)
        shapes[f"dec.{i}.ff.w_out"] = (ff, d)
    shapes["dec.final_norm_gain"] = (d,)
    return shapes


class ModelParams:
    """Named parameter tensors in canonical order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        expected = param_shapes(config)
        if list(tensors.keys()) != list(expected.keys()):
            raise ValueError("parameter names do not match the config's canonical layout")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise ValueError(f"parameter {name} has shape {tensors[name].shape}, expected {shape}")
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors.keys())

    def items(self):
        return self.tensors.items()

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def zero_grads(self):
        for t in self.tensors.values():
            t.zero_grad()


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    """Seeded init: normal(0, 1/sqrt(d_model)) weights, unit gains, zero bias tables."""
    rng = np.random.default_rng(seed)
    std = 1.0 / math.sqrt(config.d_model)
    tensors = {}
    for name, shape in param_shapes(config).items():
        if name.endswith("norm_gain"):
            data = np.ones(shape, dtype=dtype)
        elif name.endswith("rel_bias"):
            data = np.zeros(shape, dtype=dtype)
        else:
            data = rng.normal(0.0, std, size=shape).astype(dtype)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(config, tensors)


def relative_position_bucket(rel_pos: int, bidirectional: bool,
                             num_buckets: int = 32, max_distance: int = 128) -> int:
    """Bucket a signed key-minus-query offset.

    Bidirectional attention reserves half the buckets for positive offsets;
    within each direction, small offsets get exact buckets and larger ones
    share logarithmically sized buckets up to max_distance.
    """
    offset = 0
    if bidirectional:
        buckets = num_buckets // 2
        if rel_pos > 0:
            offset = buckets
        n = abs(rel_pos)
    else:
        buckets = num_buckets
        n = max(-rel_pos, 0)
    exact = buckets // 2
    if n < exact:
        return offset + n
    log_bucket = exact + int(math.floor(
        exact * math.log(n / exact) / math.log(max_distance / exact)))
    return offset + min(buckets - 1, log_bucket)


@functools.lru_cache(maxsize=256)
def _bucket_matrix(q_len: int, k_len: int, bidirectional: bool,
                   num_buckets: int, max_distance: int) -> np.ndarray:
    mat = np.empty((q_len, k_len), dtype=np.int64)
    for q in range(q_len):
        for k in range(k_len):
            mat[q, k] = relative_position_bucket(k - q, bidirectional, num_buckets, max_distance)
    mat.setflags(write=False)
    return mat


def _position_bias(table: Tensor, q_len: int, k_len: int, bidirectional: bool,
                   config: ModelConfig) -> Tensor:
    buckets = _bucket_matrix(q_len, k_len, bidirectional,
                             config.rel_pos_buckets, config.rel_pos_max_distance)
    looked = ad.embedding(ad.swapaxes(table, 0, 1), buckets)  # [q, k, h]
    return ad.swapaxes(ad.swapaxes(looked, 0, 2), 1, 2)       # [h, q, k]


def _attention(params, prefix: str, q_in: Tensor, kv_in: Tensor, additive: Tensor,
               n_heads: int, rng, rate: float) -> Tensor:
    b, t_q, d = q_in.shape
    t_k = kv_in.shape[1]
    d_h = d // n_heads
    scale = 1.0 / math.sqrt(d_h)

    def heads(x, t):
        return ad.swapaxes(ad.reshape(x, (b, t, n_heads, d_h)), 1, 2)  # [b, h, t, d_h]

    q = heads(ad.matmul(q_in, params[f"{prefix}.wq"]), t_q)
    k = heads(ad.matmul(kv_in, params[f"{prefix}.wk"]), t_k)
    v = heads(ad.matmul(kv_in, params[f"{prefix}.wv"]), t_k)
    scores = ad.mul(ad.matmul(q, ad.swapaxes(k, -1, -2)), scale)
    scores = ad.add(scores, additive)
    weights = ad.softmax(scores)
    mixed = ad.matmul(weights, v)                            # [b, h, t_q, d_h]
    merged = ad.reshape(ad.swapaxes(mixed, 1, 2), (b, t_q, d))
    return ad.dropout(ad.matmul(merged, params[f"{prefix}.wo"]), rate, rng)


def _feedforward(params, prefix: str, x: Tensor, rng, rate: float) -> Tensor:
    gate = ad.gelu(ad.matmul(x, params[f"{prefix}.w_gate"]))
    lin = ad.matmul(x, params[f"{prefix}.w_in"])
    return ad.dropout(ad.matmul(ad.mul(gate, lin), params[f"{prefix}.w_out"]), rate, rng)


def _key_mask(lengths: np.ndarray, k_len: int, dtype) -> Tensor:
    # [b, 1, 1, k]: 0 where the key is real, MASK_VALUE where it is padding
    pos = np.arange(k_len)
    masked = pos[None, :] >= np.asarray(lengths)[:, None]
    return Tensor((masked[:, None, None, :] * MASK_VALUE).astype(dtype))


def _causal_mask(t: int, dtype) -> Tensor:
    upper = np.triu(np.full((t, t), MASK_VALUE, dtype=dtype), k=1)
    return Tensor(upper[None, None, :, :])


def _check_ids(ids: np.ndarray, config: ModelConfig, what: str):
    if ids.shape[-1] > config.max_seq_len:
        raise ValueError(f"{what} length {ids.shape[-1]} exceeds max_seq_len {config.max_seq_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise ValueError(f"{what} contains ids outside 0..{config.vocab_size - 1}")


def encode_batch(params: ModelParams, src_ids: np.ndarray, src_lengths: np.ndarray,
                 rng=None, rate: float = 0.0) -> Tensor:
    """Run the encoder stack. Returns hidden states [b, s, d_model]."""
    config = params.config
    _check_ids(src_ids, config, "source")
    b, s = src_ids.shape
    dtype = params["embedding"].dtype
    x = ad.dropout(ad.embedding(params["embedding"], src_ids), rate, rng)
    additive = ad.add(_position_bias(params["enc.rel_bias"], s, s, True, config),
                      _key_mask(src_lengths, s, dtype))
    for i in range(config.enc_layers):
        h = ad.rms_norm(x, params[f"enc.{i}.attn.norm_gain"])
        x = ad.add(x, _attention(params, f"enc.{i}.attn", h, h,
                                 additive, config.n_heads, rng, rate))
        h = ad.rms_norm(x, params[f"enc.{i}.ff.norm_gain"])
        x = ad.add(x, _feedforward(params, f"enc.{i}.ff", h, rng, rate))
    return ad.rms_norm(x, params["enc.final_norm_gain"])


def decode_batch(params: ModelParams, enc_out: Tensor, src_lengths: np.ndarray,
                 tgt_in_ids: np.ndarray, rng=None, rate: float = 0.0) -> Tensor:
    """Run the decoder stack over shifted target ids. Returns logits [b, t, vocab]."""
    config = params.config
    _check_ids(tgt_in_ids, config, "target")
    b, t = tgt_in_ids.shape
    s = enc_out.shape[1]
    dtype = params["embedding"].dtype
    x = ad.dropout(ad.embedding(params["embedding"], tgt_in_ids), rate, rng)
    self_additive = ad.add(_position_bias(params["dec.rel_bias"], t, t, False, config),
                           _causal_mask(t, dtype))
    cross_mask = _key_mask(src_lengths, s, dtype)
    for i in range(config.dec_layers):
        h = ad.rms_norm(x, params[f"dec.{i}.self_attn.norm_gain"])
        x = ad.add(x, _attention(params, f"dec.{i}.self_attn", h, h,
                                 self_additive, config.n_heads, rng, rate))
        h = ad.rms_norm(x, params[f"dec.{i}.cross_attn.norm_gain"])
        x = ad.add(x, _attention(params, f"dec.{i}.cross_attn", h, enc_out,
                                 cross_mask, config.n_heads, rng, rate))
        h = ad.rms_norm(x, params[f"dec.{i}.ff.norm_gain"])
        x = ad.add(x, _feedforward(params, f"dec.{i}.ff", h, rng, rate))
    x = ad.rms_norm(x, params["dec.final_norm_gain"])
    return ad.matmul(x, ad.swapaxes(params["embedding"], 0, 1))


def forward_batch(params: ModelParams, src_ids: np.ndarray, src_lengths: np.ndarray,
                  tgt_in_ids: np.ndarray, rng=None, rate: float = 0.0) -> Tensor:
    enc_out = encode_batch(params, src_ids, src_lengths, rng, rate)
    return decode_batch(params, enc_out, src_lengths, tgt_in_ids, rng, rate)


def forward(params: ModelParams, src_ids, tgt_in_ids, src_length: int | None = None) -> Tensor:
    """Single-example forward pass. Returns logits [len(tgt_in_ids), vocab].

    Positions at or beyond ``src_length`` (default: the full source) are
    treated as padding: masked out of attention and free to hold any id.
    """
    src = np.asarray(src_ids, dtype=np.int64).reshape(1, -1)
    tgt = np.asarray(tgt_in_ids, dtype=np.int64).reshape(1, -1)
    length = src.shape[1] if src_length is None else int(src_length)
    logits = forward_batch(params, src, np.array([length]), tgt)
    return ad.reshape(logits, (tgt.shape[1], params.config.vocab_size))


def _log_softmax_row(row: np.ndarray) -> np.ndarray:
    shifted = row - row.max()
    return shifted - math.log(np.exp(shifted).sum())


@dataclass
class _Hypothesis:
    tokens: tuple = ()
    logp: float = 0.0
    finished: bool = False

    def score(self, alpha: float) -> float:
        length = len(self.tokens) + (1 if self.finished else 0)
        if length == 0:
            return self.logp
        return self.logp / (length ** alpha)


def _beam_search(step_logprobs, beam_width: int, max_len: int, alpha: float,
                 vocab_size: int) -> list[int]:
    """Generic beam search over a prefix -> log-prob-vector function.

    Scores are logprob / length^alpha where length counts generated tokens,
    eos included. Ties break toward earlier beam entries and lower token
    ids, which makes beam_width=1 reproduce greedy decoding exactly.
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    beams = [_Hypothesis()]
    for _ in range(max_len):
        if all(h.finished for h in beams):
            break
        candidates = []
        for h in beams:
            if h.finished:
                candidates.append(h)
                continue
            logprobs = step_logprobs(h.tokens)
            for tok in range(vocab_size):
                lp = h.logp + float(logprobs[tok])
                if tok == EOS_ID:
                    candidates.append(_Hypothesis(h.tokens, lp, True))
                else:
                    candidates.append(_Hypothesis(h.tokens + (tok,), lp, False))
        candidates.sort(key=lambda h: -h.score(alpha))  # stable: ties keep (beam, token) order
        beams = candidates[:beam_width]
    best = max(beams, key=lambda h: h.score(alpha))
    return list(best.tokens)


def greedy_decode(params: ModelParams, src_ids, max_len: int,
                  src_length: int | None = None) -> list[int]:
    """Argmax decoding from the pad start symbol; stops at eos or max_len.

    Ties break toward the lowest token id. The returned ids contain neither
    the start symbol nor the final eos.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    src = np.asarray(src_ids, dtype=np.int64).reshape(1, -1)
    length = src.shape[1] if src_length is None else int(src_length)
    generated: list[int] = []
    with ad.no_grad():
        enc_out = encode_batch(params, src, np.array([length]))
        while len(generated) < max_len:
            dec_in = np.asarray([[PAD_ID] + generated], dtype=np.int64)
            logits = decode_batch(params, enc_out, np.array([length]), dec_in)
            nxt = int(np.argmax(logits.data[0, -1]))
            if nxt == EOS_ID:
                break
            generated.append(nxt)
    return generated


def beam_decode(params: ModelParams, src_ids, beam_width: int, max_len: int,
                length_penalty: float = 0.0, src_length: int | None = None) -> list[int]:
    """Beam search decoding; beam_width=1 matches greedy_decode exactly."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    src = np.asarray(src_ids, dtype=np.int64).reshape(1, -1)
    length = src.shape[1] if src_length is None else int(src_length)
    with ad.no_grad():
        enc_out = encode_batch(params, src, np.array([length]))

        def step_logprobs(prefix):
            dec_in = np.asarray([[PAD_ID] + list(prefix)], dtype=np.int64)
            logits = decode_batch(params, enc_out, np.array([length]), dec_in)
            return _log_softmax_row(logits.data[0, -1])

        return _beam_search(step_logprobs, beam_width, max_len, length_penalty,
                            params.config.vocab_size)
