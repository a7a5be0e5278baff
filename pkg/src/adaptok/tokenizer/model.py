"""Diffusion autoencoder: encoder -> FSQ bottleneck -> flow-matching decoder.

Decoder input layout, per example::

    [ token slots (K) | SEP | coordinate slots (L) ]

Token slots carry Linear(M -> C) of the quantized values plus a learned
slot embedding; unused slots (beyond the dropout cutoff, or all of them for
the unconditional branch) are removed from attention by a key-padding mask.
Rotary positions are 0..L-1 on coordinate slots and 0 on token slots and
SEP, so token keys are position-free; coordinate slots also receive a fixed
sinusoidal absolute position. Time conditions every block through one
shared adaLN-zero modulation.

By default the network output is read as the clean chain x_hat and turned
into the velocity (x_hat - x_t) / max(1 - t, min_gap); the training loss is
still the velocity regression against x - eps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import numerics as N
from ..geometry.coords import MAX_LENGTH
from ..numerics import Tensor, nn
from ..numerics.checkpoint import load as load_ckpt
from ..numerics.checkpoint import save as save_ckpt
from ..quantizer import FsqConfig, TokenSequence, code_index, quantize
from ..rng import stream


@dataclass
class EncoderConfig:
    layers: int = 2
    channels: int = 128
    heads: int = 4


@dataclass
class DecoderConfig:
    layers: int = 6
    channels: int = 256
    heads: int = 8
    time_dim: int = 128
    abs_pos: bool = True
    predict: str = "x"
    min_gap: float = 0.05


@dataclass
class TokenizerConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    fsq: FsqConfig = field(default_factory=FsqConfig)
    lambda_size: float = 0.01
    cond_dropout: float = 0.1
    t_dist: str = "logit_normal"
    rotate: bool = True
    max_len: int = MAX_LENGTH
    size_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if isinstance(self.decoder, dict):
            self.decoder = DecoderConfig(**self.decoder)
        if isinstance(self.fsq, dict):
            self.fsq = FsqConfig(tuple(self.fsq["levels"]), self.fsq["k_max"])
        if self.lambda_size < 0:
            raise ValueError("lambda_size must be >= 0")
        if self.t_dist not in ("logit_normal", "uniform"):
            raise ValueError(f"unknown t distribution {self.t_dist!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fsq"] = {"levels": list(self.fsq.levels), "k_max": self.fsq.k_max}
        return d


class Block(nn.Module):
    def __init__(self, dim, heads, rng):
        self.attn = nn.Attention(dim, heads, rng)
        self.mlp = nn.MLP(dim, 4 * dim, dim, rng)


class Encoder(nn.Module):
    def __init__(self, cfg: EncoderConfig, m: int, max_len: int, rng):
        c = cfg.channels
        self.inp = nn.Linear(3, c, rng)
        self.pos = nn.sinusoidal_table(max_len, c)
        self.blocks = [Block(c, cfg.heads, rng) for _ in range(cfg.layers)]
        self.ln1 = [nn.LayerNorm(c) for _ in range(cfg.layers)]
        self.ln2 = [nn.LayerNorm(c) for _ in range(cfg.layers)]
        self.ln_out = nn.LayerNorm(c)
        self.out = nn.Linear(c, m, rng)

    def __call__(self, x: np.ndarray, valid: np.ndarray) -> Tensor:
        L = x.shape[1]
        h = self.inp(Tensor(x)) + Tensor(self.pos[:L])
        mask = nn.key_padding_mask(valid)
        for blk, l1, l2 in zip(self.blocks, self.ln1, self.ln2):
            h = h + blk.attn(l1(h), mask)
            h = h + blk.mlp(l2(h))
        return self.out(self.ln_out(h))


class Decoder(nn.Module):
    def __init__(self, cfg: DecoderConfig, m: int, k_max: int, rng):
        c = cfg.channels
        self.c = c
        self.time_dim = cfg.time_dim
        self.tok_in = nn.Linear(m, c, rng)
        self.tok_pos = nn.parameter(rng.normal(0, 0.02, size=(k_max, c)))
        self.sep = nn.parameter(rng.normal(0, 0.02, size=(c,)))
        self.coord_in = nn.Linear(3, c, rng)
        self.coord_type = nn.parameter(rng.normal(0, 0.02, size=(c,)))
        self.t_mlp = nn.MLP(cfg.time_dim, c, c, rng)
        # one modulation shared by every block, zero-initialised (adaLN-zero)
        self.mod = nn.Linear(c, 6 * c, rng, scale=0.0)
        self.final_mod = nn.Linear(c, 2 * c, rng, scale=0.0)
        self.blocks = [Block(c, cfg.heads, rng) for _ in range(cfg.layers)]
        self.head = nn.Linear(c, 3, rng, scale=0.0)
        self.head_dim = c // cfg.heads
        self.abs_pos = nn.sinusoidal_table(MAX_LENGTH, c) if cfg.abs_pos else None
        if cfg.predict not in ("x", "v"):
            raise ValueError(f"decoder must predict 'x' or 'v', got {cfg.predict!r}")
        self.predict = cfg.predict
        self.min_gap = cfg.min_gap

    def __call__(self, x_t: np.ndarray, t: np.ndarray, tok: Tensor | None, tok_valid: np.ndarray,
                 coord_valid: np.ndarray) -> Tensor:
        B, L, _ = x_t.shape
        K = 0 if tok is None else tok.shape[1]
        c = self.c
        parts = []
        if K:
            parts.append(self.tok_in(tok) + self.tok_pos[:K])
        parts.append((self.sep + Tensor(np.zeros((B, 1, c), dtype=np.float32))))
        coord = self.coord_in(Tensor(x_t)) + self.coord_type
        if self.abs_pos is not None:
            coord = coord + Tensor(self.abs_pos[:L])
        parts.append(coord)
        h = N.concat(parts, axis=1)
        valid = np.concatenate([tok_valid[:, :K], np.ones((B, 1), bool), coord_valid], axis=1)
        mask = nn.key_padding_mask(valid)
        pos = np.concatenate([np.zeros(K + 1), np.arange(L)])
        rot = nn.rope_angles(pos, self.head_dim)

        temb = N.silu(self.t_mlp(Tensor(nn.timestep_features(t, self.time_dim))))
        mod = self.mod(temb).reshape(B, 1, 6 * c)
        sh1, sc1, g1, sh2, sc2, g2 = (mod[:, :, i * c : (i + 1) * c] for i in range(6))
        for blk in self.blocks:
            a = N.layer_norm(h) * (sc1 + 1.0) + sh1
            h = h + g1 * blk.attn(a, mask, rot)
            a = N.layer_norm(h) * (sc2 + 1.0) + sh2
            h = h + g2 * blk.mlp(a)
        fm = self.final_mod(temb).reshape(B, 1, 2 * c)
        h = N.layer_norm(h) * (fm[:, :, c:] + 1.0) + fm[:, :, :c]
        out = self.head(h[:, K + 1 :])
        if self.predict == "v":
            return out
        # clean-coordinate prediction turned into a velocity: v = (x_hat - x_t) / (1 - t)
        gap = np.maximum(1.0 - np.asarray(t, dtype=np.float64), self.min_gap).astype(np.float32)
        return (out - Tensor(x_t)) * Tensor((1.0 / gap)[:, None, None])


def pad_batch(coords: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    L = max(len(c) for c in coords)
    x = np.zeros((len(coords), L, 3), dtype=np.float32)
    valid = np.zeros((len(coords), L), bool)
    for i, c in enumerate(coords):
        x[i, : len(c)] = c
        valid[i, : len(c)] = True
    return x, valid


def flow_target(x, eps, t):
    """Linear interpolant x_t = (1 - t) eps + t x and its velocity x - eps."""
    t = np.asarray(t, dtype=np.float64).reshape(np.shape(t) + (1,) * (np.ndim(x) - np.ndim(t)))
    return (1 - t) * eps + t * x, x - eps


def sample_times(n: int, rng, dist: str = "logit_normal") -> np.ndarray:
    if dist == "uniform":
        return rng.uniform(0, 1, n)
    return 1.0 / (1.0 + np.exp(-rng.normal(0, 1, n)))


class Tokenizer(nn.Module):
    """Encoder, quantizer, decoder and size head."""

    def __init__(self, cfg: TokenizerConfig | None = None):
        cfg = cfg or TokenizerConfig()
        self.cfg = cfg
        rng = stream(cfg.seed, "tokenizer-init")
        m = cfg.fsq.channels
        self.encoder = Encoder(cfg.encoder, m, cfg.max_len, rng)
        self.decoder = Decoder(cfg.decoder, m, cfg.fsq.k_max, rng)
        self.size_head = nn.MLP(m, cfg.size_hidden, cfg.max_len, rng)

    # ---------------------------------------------------------------- encoding

    def _check_lengths(self, coords):
        for c in coords:
            if len(c) > self.cfg.max_len:
                raise ValueError(f"chain length {len(c)} exceeds maximum {self.cfg.max_len}")
            if len(c) < 1:
                raise ValueError("empty chain")

    def encode_latent(self, coords: list[np.ndarray]) -> tuple[Tensor, np.ndarray]:
        """Continuous latents (B, L, M) for a list of chains (centered here), and validity."""
        from ..geometry import center

        self._check_lengths(coords)
        x, valid = pad_batch([center(c) for c in coords])
        return self.encoder(x, valid), valid

    def encode(self, c: np.ndarray) -> np.ndarray:
        with N.no_grad():
            z, _ = self.encode_latent([np.asarray(c)])
        return z.data[0]

    def tokenize(self, coords: list[np.ndarray] | np.ndarray) -> list[TokenSequence] | TokenSequence:
        single = isinstance(coords, np.ndarray) and coords.ndim == 2
        batch = [coords] if single else list(coords)
        with N.no_grad():
            z, _ = self.encode_latent(batch)
            _, idx = quantize(z, self.cfg.fsq)
        out = []
        for i, c in enumerate(batch):
            k = min(len(c), self.cfg.fsq.k_max)
            out.append(TokenSequence(code_index(idx[i, :k], self.cfg.fsq), self.cfg.fsq))
        return out[0] if single else out

    # ---------------------------------------------------------------- decoding

    def token_batch(self, tokens: list[TokenSequence | None]) -> tuple[Tensor | None, np.ndarray]:
        k = [0 if t is None else len(t) for t in tokens]
        for n in k:
            if n > self.cfg.fsq.k_max:
                raise ValueError(f"token prefix length {n} exceeds k_max {self.cfg.fsq.k_max}")
        K = max(k)
        valid = np.zeros((len(tokens), K), bool)
        if K == 0:
            return None, valid
        vals = np.zeros((len(tokens), K, self.cfg.fsq.channels), dtype=np.float32)
        for i, t in enumerate(tokens):
            if t is not None and len(t):
                vals[i, : len(t)] = t.values
                valid[i, : len(t)] = True
        return Tensor(vals), valid

    def velocity(self, x_t: np.ndarray, t, tokens: list[TokenSequence | None], coord_valid=None) -> np.ndarray:
        """v(x_t, t | tokens) for a padded batch of chains (no gradients)."""
        x_t = np.asarray(x_t, dtype=np.float32)
        B, L, _ = x_t.shape
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
        cv = np.ones((B, L), bool) if coord_valid is None else np.asarray(coord_valid, bool)
        with N.no_grad():
            tok, tv = self.token_batch(tokens)
            v = self.decoder(x_t, t, tok, tv, cv)
        return v.data

    def size_logits(self, first_values: Tensor) -> Tensor:
        return self.size_head(first_values)

    def predict_size(self, tokens: TokenSequence) -> tuple[np.ndarray, int]:
        """Distribution over lengths 1..max_len and its argmax length."""
        if len(tokens) < 1:
            raise ValueError("size prediction needs at least one token")
        with N.no_grad():
            logits = self.size_logits(Tensor(tokens.values[:1]))
            p = N.softmax(logits, axis=-1).data[0].astype(np.float64)
        return p, int(np.argmax(p)) + 1

    # ---------------------------------------------------------------- training

    def loss(self, coords: list[np.ndarray], rng: np.random.Generator) -> tuple[Tensor, dict]:
        """Combined loss for one batch following the per-example recipe."""
        from ..geometry import center, random_rotation
        from ..quantizer import sample_cutoffs

        cfg = self.cfg
        prepped = []
        for c in coords:
            c = center(c)
            if cfg.rotate:
                c = c @ random_rotation(rng).T
            prepped.append(c.astype(np.float32))
        lengths = np.array([len(c) for c in prepped])
        z, valid = self.encode_latent(prepped)
        vals, _ = quantize(z, cfg.fsq)
        k = sample_cutoffs(lengths, cfg.fsq.k_max, rng)
        k[rng.random(len(k)) < cfg.cond_dropout] = 0
        K = int(k.max())
        tok_valid = np.arange(K)[None, :] < k[:, None]
        tok = vals[:, :K] if K else None

        x, _ = pad_batch(prepped)
        eps = rng.normal(size=x.shape).astype(np.float32)
        t = sample_times(len(coords), rng, cfg.t_dist)
        x_t, v_star = flow_target(x, eps, t)
        # teacher forcing: the decoder always sees the true length
        v = self.decoder(x_t.astype(np.float32), t, tok, tok_valid, valid)
        flow = N.mse(v, v_star.astype(np.float32), valid[..., None])
        size = N.cross_entropy(self.size_logits(vals[:, 0]), lengths - 1)
        total = flow + size * cfg.lambda_size if cfg.lambda_size else flow
        return total, {"flow": flow.item(), "size": size.item(), "total": total.item()}

    # ---------------------------------------------------------------- persistence

    def save(self, path, extra: dict | None = None, arrays: dict | None = None) -> None:
        meta = {"kind": "tokenizer", "config": self.cfg.to_dict(), **(extra or {})}
        tensors = {f"param.{k}": v for k, v in self.state_dict().items()}
        tensors.update(arrays or {})
        save_ckpt(path, tensors, meta)

    @classmethod
    def load(cls, path) -> tuple["Tokenizer", dict, dict]:
        tensors, meta = load_ckpt(path)
        if meta.get("kind") != "tokenizer":
            raise ValueError(f"{path} is not a tokenizer checkpoint (kind={meta.get('kind')!r})")
        model = cls(TokenizerConfig(**meta["config"]))
        model.load_state_dict({k[6:]: v for k, v in tensors.items() if k.startswith("param.")})
        rest = {k: v for k, v in tensors.items() if not k.startswith("param.")}
        return model, meta, rest


def config_hash(cfg: TokenizerConfig) -> str:
    import hashlib

    return hashlib.sha1(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


def manifest(path) -> dict:
    _, meta = load_ckpt(path)
    return meta

