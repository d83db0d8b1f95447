"""Transformer autoencoder with a compressed latent (KAE / conditional KAE).

Layout of one forward pass::

    tokens -> embed (+pos) [+ condition row] -> encoder stack -> zero pads
           -> compression along the sequence axis -> latent (L x E)
           -> [+ gaussian noise] [+ condition row] -> expansion to M rows
           -> decoder stack (causal self-attention + memory attention) -> log-probs

Training uses the autodiff tape. Inference goes through :class:`DecoderCache`,
a pure-numpy incremental decoder that reuses the same parameter arrays.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import ndiff as nd
from .ndiff import Tensor
from .ndiff.functional import _log_softmax_np, attention_weights


@dataclass
class ModelConfig:
    vocab_size: int
    max_len: int
    embedding_size: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    latent_positions: int = 4
    ff_width: int | None = None  # defaults to 4 * embedding_size
    conditional: bool = False
    dropout: float = 0.1
    kl_mode: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.embedding_size % self.heads:
            raise ValueError("embedding_size must be divisible by heads")
        if not 0 < self.latent_positions < self.max_len:
            raise ValueError("need 0 < latent_positions < max_len")
        if self.ff_width is None:
            self.ff_width = 4 * self.embedding_size
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def latent_dim(self) -> int:
        return self.latent_positions * self.embedding_size

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @classmethod
    def full_preset(cls, vocab_size: int, max_len: int, **kw) -> "ModelConfig":
        base = dict(embedding_size=128, heads=4, encoder_layers=6, decoder_layers=6, latent_positions=10)
        base.update(kw)
        return cls(vocab_size=vocab_size, max_len=max_len, **base)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatentCode:
    values: np.ndarray  # (batch, latent_positions, E)
    noisy: bool = False

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.values.shape[0], -1)


def causal_mask(n: int) -> np.ndarray:
    return np.triu(np.ones((n, n), dtype=bool), k=1)


class KAEModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        self._init_params(rng)

    # ------------------------------------------------------------ parameters
    def _add(self, name: str, arr: np.ndarray):
        self.params[name] = nd.parameter(arr.astype(self.cfg.np_dtype), name=name)

    def _init_params(self, rng: np.random.Generator):
        c = self.cfg
        E, F, T, M, L = c.embedding_size, c.ff_width, c.vocab_size, c.max_len, c.latent_positions
        enc_rows = M + (1 if c.conditional else 0)
        lat_rows = L + (1 if c.conditional else 0)

        def lin(n_in, n_out):
            bound = np.sqrt(6.0 / (n_in + n_out))
            return rng.uniform(-bound, bound, size=(n_in, n_out))

        self._add("enc.tok", rng.normal(0, E**-0.5, (T, E)))
        self._add("enc.pos", rng.normal(0, E**-0.5, (enc_rows, E)))
        self._add("dec.tok", rng.normal(0, E**-0.5, (T, E)))
        self._add("dec.pos", rng.normal(0, E**-0.5, (M, E)))
        if c.conditional:
            self._add("cond", rng.normal(0, E**-0.5, (E,)))

        def block(prefix: str, cross: bool):
            subs = ["self"] + (["cross"] if cross else [])
            for s in subs:
                self._add(f"{prefix}.{s}.ln.g", np.ones(E))
                self._add(f"{prefix}.{s}.ln.b", np.zeros(E))
                for w in "qkvo":
                    self._add(f"{prefix}.{s}.w{w}", lin(E, E))
                    self._add(f"{prefix}.{s}.b{w}", np.zeros(E))
            self._add(f"{prefix}.ff.ln.g", np.ones(E))
            self._add(f"{prefix}.ff.ln.b", np.zeros(E))
            self._add(f"{prefix}.ff.w1", lin(E, F))
            self._add(f"{prefix}.ff.b1", np.zeros(F))
            self._add(f"{prefix}.ff.w2", lin(F, E))
            self._add(f"{prefix}.ff.b2", np.zeros(E))

        for i in range(c.encoder_layers):
            block(f"enc.{i}", cross=False)
        self._add("enc.ln.g", np.ones(E))
        self._add("enc.ln.b", np.zeros(E))

        self._add("compress.w", rng.normal(0, enc_rows**-0.5, (L, enc_rows)))
        self._add("compress.b", np.zeros((L, E)))
        if c.kl_mode:
            self._add("logvar.w", rng.normal(0, enc_rows**-0.5, (L, enc_rows)) * 0.1)
            self._add("logvar.b", np.zeros((L, E)))
        self._add("expand.w", rng.normal(0, lat_rows**-0.5, (M, lat_rows)))
        self._add("expand.b", np.zeros((M, E)))

        for i in range(c.decoder_layers):
            block(f"dec.{i}", cross=True)
        self._add("dec.ln.g", np.ones(E))
        self._add("dec.ln.b", np.zeros(E))
        self._add("out.w", lin(E, T))
        self._add("out.b", np.zeros(T))

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    # ------------------------------------------------------------ tape ops
    def _mha(self, prefix: str, xq: Tensor, xkv: Tensor, mask: np.ndarray | None) -> Tensor:
        p = self.params
        b, sq, E = xq.shape
        sk = xkv.shape[1]
        h = self.cfg.heads
        dh = E // h

        def proj(x, w, n):
            y = x @ p[f"{prefix}.w{w}"] + p[f"{prefix}.b{w}"]
            return nd.transpose(y.reshape(b, n, h, dh), (0, 2, 1, 3))

        q = proj(xq, "q", sq)
        k = proj(xkv, "k", sk)
        v = proj(xkv, "v", sk)
        a = nd.scaled_dot_attention(q, k, v, mask)
        a = nd.transpose(a, (0, 2, 1, 3)).reshape(b, sq, E)
        return a @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"]

    def _ln(self, prefix: str, x: Tensor) -> Tensor:
        return nd.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _ff(self, prefix: str, x: Tensor) -> Tensor:
        p = self.params
        hdn = nd.relu(x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"])
        return hdn @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]

    def _drop(self, x: Tensor, rng, training: bool) -> Tensor:
        return nd.dropout(x, self.cfg.dropout, rng, training)

    def _cond_row(self, condition, batch: int) -> Tensor:
        c = np.asarray(condition, dtype=self.cfg.np_dtype).reshape(batch, 1, 1)
        return Tensor(c) * self.params["cond"].reshape(1, 1, -1)

    def _check_condition(self, condition, batch: int):
        if self.cfg.conditional:
            if condition is None:
                raise ValueError("conditional model needs a condition value")
            if np.asarray(condition).size != batch:
                raise ValueError("need one condition value per sequence")
            if not np.all(np.isfinite(condition)):
                raise ValueError("condition values must be finite")
        elif condition is not None and np.any(np.asarray(condition) != 0):
            raise ValueError("unconditional model only accepts condition 0")

    def encode_tensor(self, ids: np.ndarray, pad_mask: np.ndarray, condition=None, rng=None, training=False):
        """Return (latent, logvar-or-None) as tape tensors of shape (b, L, E)."""
        c = self.cfg
        p = self.params
        ids = np.asarray(ids)
        b, m = ids.shape
        if m != c.max_len:
            raise ValueError(f"token matrix has {m} columns, model expects max_len={c.max_len}")
        if ids.min() < 0 or ids.max() >= c.vocab_size:
            raise ValueError("token id out of range")
        self._check_condition(condition, b)
        x = nd.embedding(p["enc.tok"], ids) + p["enc.pos"][:m]
        key_mask = np.asarray(pad_mask, dtype=bool)
        if c.conditional:
            row = self._cond_row(condition, b) + p["enc.pos"][m : m + 1]
            x = nd.concat([x, row], axis=1)
            key_mask = np.concatenate([key_mask, np.zeros((b, 1), dtype=bool)], axis=1)
        x = self._drop(x, rng, training)
        attn_mask = key_mask[:, None, None, :]
        for i in range(c.encoder_layers):
            pre = f"enc.{i}"
            hdn = self._ln(f"{pre}.self.ln", x)
            x = x + self._drop(self._mha(f"{pre}.self", hdn, hdn, attn_mask), rng, training)
            hdn = self._ln(f"{pre}.ff.ln", x)
            x = x + self._drop(self._ff(f"{pre}.ff", hdn), rng, training)
        hdn = self._ln("enc.ln", x)
        hdn = hdn * (~key_mask)[:, :, None].astype(c.np_dtype)
        z = p["compress.w"] @ hdn + p["compress.b"]
        logvar = None
        if c.kl_mode:
            logvar = p["logvar.w"] @ hdn + p["logvar.b"]
        return z, logvar

    def expand_tensor(self, z: Tensor, condition=None) -> Tensor:
        c = self.cfg
        b = z.shape[0]
        self._check_condition(condition, b)
        if c.conditional:
            z = nd.concat([z, self._cond_row(condition, b)], axis=1)
        return self.params["expand.w"] @ z + self.params["expand.b"]

    def decode_tensor(self, memory: Tensor, prefix: np.ndarray, rng=None, training=False) -> Tensor:
        """Log-probabilities (b, S, T) for every prefix position."""
        c = self.cfg
        p = self.params
        prefix = np.asarray(prefix)
        b, s = prefix.shape
        if s > c.max_len:
            raise ValueError(f"prefix length {s} exceeds max_len {c.max_len}")
        y = nd.embedding(p["dec.tok"], prefix) + p["dec.pos"][:s]
        y = self._drop(y, rng, training)
        pad = prefix == c.vocab_size - 1  # pad is the last id
        self_mask = causal_mask(s)[None, None] | pad[:, None, None, :]
        for i in range(c.decoder_layers):
            pre = f"dec.{i}"
            hdn = self._ln(f"{pre}.self.ln", y)
            y = y + self._drop(self._mha(f"{pre}.self", hdn, hdn, self_mask), rng, training)
            hdn = self._ln(f"{pre}.cross.ln", y)
            y = y + self._drop(self._mha(f"{pre}.cross", hdn, memory, None), rng, training)
            hdn = self._ln(f"{pre}.ff.ln", y)
            y = y + self._drop(self._ff(f"{pre}.ff", hdn), rng, training)
        y = self._ln("dec.ln", y)
        logits = y @ p["out.w"] + p["out.b"]
        return nd.log_softmax(logits, axis=-1)

    def forward_train(self, ids, pad_mask, condition=None, rng=None, training=True, noise_scale: float = 1.0):
        """Teacher-forced dual pass sharing one encoding.

        Returns (log_probs_noisy, log_probs_clean, latents, logvar) where
        latents is the un-noised (b, D) flattened code (the mean in KL mode).
        """
        c = self.cfg
        ids = np.asarray(ids)
        b = ids.shape[0]
        if rng is None:
            rng = np.random.default_rng(0)
        z, logvar = self.encode_tensor(ids, pad_mask, condition, rng, training)
        eps = nd.constant(rng.standard_normal(z.shape).astype(c.np_dtype))
        if c.kl_mode:
            z_noisy = z + nd.exp(logvar * 0.5) * eps * noise_scale
        else:
            z_noisy = z + eps * noise_scale
        cond2 = None if condition is None else np.concatenate([np.ravel(condition)] * 2)
        memory = self.expand_tensor(nd.concat([z_noisy, z], axis=0), cond2)
        dec_in = np.concatenate([ids[:, :-1]] * 2, axis=0)
        logp = self.decode_tensor(memory, dec_in, rng, training)
        logp_noisy = logp[:b]
        logp_clean = logp[b:]
        latents = z.reshape(b, -1)
        lv = None if logvar is None else logvar.reshape(b, -1)
        return logp_noisy, logp_clean, latents, lv

    # ------------------------------------------------------------ inference
    def encode(self, ids, pad_mask, condition=None) -> LatentCode:
        with nd.no_grad():
            z, _ = self.encode_tensor(ids, pad_mask, condition)
        return LatentCode(z.data.copy(), noisy=False)

    def kl_variant_encode(self, ids, pad_mask) -> tuple[np.ndarray, np.ndarray]:
        if not self.cfg.kl_mode:
            raise ValueError("kl_variant_encode needs a model built with kl_mode=True")
        with nd.no_grad():
            z, logvar = self.encode_tensor(ids, pad_mask)
        return z.data.copy(), np.exp(0.5 * logvar.data)

    def expand(self, z: LatentCode | np.ndarray, condition=None) -> np.ndarray:
        vals = z.values if isinstance(z, LatentCode) else np.asarray(z)
        vals = vals.reshape(vals.shape[0], self.cfg.latent_positions, self.cfg.embedding_size)
        with nd.no_grad():
            mem = self.expand_tensor(nd.constant(vals.astype(self.cfg.np_dtype)), condition)
        return mem.data

    def decode_logits(self, memory: np.ndarray, prefix: np.ndarray) -> np.ndarray:
        """Per-position probability rows over the vocabulary."""
        with nd.no_grad():
            logp = self.decode_tensor(nd.constant(memory), prefix)
        return np.exp(logp.data)

    def decoder_cache(self, memory: np.ndarray) -> "DecoderCache":
        return DecoderCache(self, memory)

    def with_config(self, **changes) -> "KAEModel":
        """Copy sharing parameter arrays, e.g. to switch dropout off."""
        other = KAEModel.__new__(KAEModel)
        other.cfg = replace(self.cfg, **changes)
        other.params = self.params
        return other

    def astype(self, dtype: str) -> "KAEModel":
        """Copy with parameters cast to ``dtype`` (not shared)."""
        other = KAEModel.__new__(KAEModel)
        other.cfg = replace(self.cfg, dtype=dtype)
        other.params = {k: nd.parameter(v.data.astype(dtype), name=k) for k, v in self.params.items()}
        return other


def add_noise(z: LatentCode, rng: np.random.Generator, scale: float = 1.0) -> LatentCode:
    if z.noisy:
        raise ValueError("latent code is already noisy")
    eps = rng.standard_normal(z.values.shape).astype(z.values.dtype, copy=False)
    return LatentCode(z.values + scale * eps, noisy=True)


class DecoderCache:
    """Incremental decoder: feeds one token per sequence per call and keeps the
    self-attention keys/values, so a full decode costs O(M) steps instead of
    O(M^2)."""

    def __init__(self, model: KAEModel, memory: np.ndarray):
        self.model = model
        cfg = model.cfg
        self.p = {k: v.data for k, v in model.params.items()}
        self.h = cfg.heads
        self.dh = cfg.embedding_size // cfg.heads
        memory = np.asarray(memory, dtype=cfg.np_dtype)
        self.b = memory.shape[0]
        self.t = 0
        self.cross = []
        for i in range(cfg.decoder_layers):
            pre = f"dec.{i}.cross"
            self.cross.append((self._heads(memory @ self.p[f"{pre}.wk"] + self.p[f"{pre}.bk"]),
                               self._heads(memory @ self.p[f"{pre}.wv"] + self.p[f"{pre}.bv"])))
        self.keys: list[np.ndarray | None] = [None] * cfg.decoder_layers
        self.values: list[np.ndarray | None] = [None] * cfg.decoder_layers

    def _heads(self, x: np.ndarray) -> np.ndarray:
        b, n, _ = x.shape
        return x.reshape(b, n, self.h, self.dh).transpose(0, 2, 1, 3)

    @staticmethod
    def _ln(x, g, b, eps=1e-5):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        return xc / np.sqrt(var + eps) * g + b

    def _attend(self, pre, hdn, k, v):
        p = self.p
        q = self._heads(hdn @ p[f"{pre}.wq"] + p[f"{pre}.bq"])
        a = attention_weights(q, k, None) @ v
        b = a.shape[0]
        a = a.transpose(0, 2, 1, 3).reshape(b, 1, -1)
        return a @ p[f"{pre}.wo"] + p[f"{pre}.bo"]

    def step(self, tokens: np.ndarray) -> np.ndarray:
        """Feed the next token of every sequence; return (b, T) log-probs for
        the following position."""
        cfg = self.model.cfg
        p = self.p
        if self.t >= cfg.max_len:
            raise ValueError("decoder cache is full")
        tokens = np.asarray(tokens).reshape(-1)
        y = (p["dec.tok"][tokens] + p["dec.pos"][self.t])[:, None, :]
        for i in range(cfg.decoder_layers):
            pre = f"dec.{i}"
            hdn = self._ln(y, p[f"{pre}.self.ln.g"], p[f"{pre}.self.ln.b"])
            k_new = self._heads(hdn @ p[f"{pre}.self.wk"] + p[f"{pre}.self.bk"])
            v_new = self._heads(hdn @ p[f"{pre}.self.wv"] + p[f"{pre}.self.bv"])
            if self.keys[i] is None:
                self.keys[i], self.values[i] = k_new, v_new
            else:
                self.keys[i] = np.concatenate([self.keys[i], k_new], axis=2)
                self.values[i] = np.concatenate([self.values[i], v_new], axis=2)
            y = y + self._attend(f"{pre}.self", hdn, self.keys[i], self.values[i])
            hdn = self._ln(y, p[f"{pre}.cross.ln.g"], p[f"{pre}.cross.ln.b"])
            y = y + self._attend(f"{pre}.cross", hdn, *self.cross[i])
            hdn = self._ln(y, p[f"{pre}.ff.ln.g"], p[f"{pre}.ff.ln.b"])
            ff = np.maximum(hdn @ p[f"{pre}.ff.w1"] + p[f"{pre}.ff.b1"], 0) @ p[f"{pre}.ff.w2"] + p[f"{pre}.ff.b2"]
            y = y + ff
        y = self._ln(y, p["dec.ln.g"], p["dec.ln.b"])
        logits = (y @ p["out.w"] + p["out.b"])[:, 0, :]
        self.t += 1
        return _log_softmax_np(logits, -1)

    def reorder(self, index: np.ndarray):
        """Select/duplicate sequences (beam bookkeeping)."""
        index = np.asarray(index)
        for i in range(len(self.keys)):
            if self.keys[i] is not None:
                self.keys[i] = self.keys[i][index]
                self.values[i] = self.values[i][index]
            k, v = self.cross[i]
            self.cross[i] = (k[index], v[index])
        self.b = len(index)
