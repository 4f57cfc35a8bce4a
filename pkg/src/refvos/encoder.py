"""Frame encoding with adapter tuning, and referring-expression embedding."""

import hashlib
from dataclasses import dataclass

import numpy as np

from .autodiff import DimensionError, Tensor, layer_norm, linear, softmax


class ConfigurationError(ValueError):
    pass


@dataclass
class VisualEncoderConfig:
    patch_size: int = 8
    block_count: int = 4
    token_width: int = 64
    out_channels: int = 256          # channel width shared with the decoder
    adapter_width: int = 8           # bottleneck of each adapter
    mlp_ratio: int = 2
    tap_indices: tuple = None        # 3 block indices whose outputs become mid maps

    def __post_init__(self):
        if self.block_count < 2 or self.block_count % 2 != 0:
            raise ConfigurationError("block_count must be even and >= 2")
        if self.tap_indices is None:
            b = self.block_count
            self.tap_indices = tuple(sorted({max(0, b // 4), b // 2, min(b - 1, 3 * b // 4)}))
            while len(self.tap_indices) < 3:
                self.tap_indices = (self.tap_indices[0],) + self.tap_indices
        self.tap_indices = tuple(self.tap_indices)
        if len(self.tap_indices) != 3 or any(i >= self.block_count or i < 0 for i in self.tap_indices):
            raise ConfigurationError("tap_indices must be 3 block indices < block_count")
        if list(self.tap_indices) != sorted(self.tap_indices):
            raise ConfigurationError("tap_indices must be non-decreasing")
        if self.adapter_width >= self.token_width:
            raise ConfigurationError("adapter_width must be < token_width")

    @property
    def mid_channels(self):
        return self.token_width

    @property
    def adapter_blocks(self):
        # latter half of the blocks carries adapters
        return tuple(range(self.block_count // 2, self.block_count))


@dataclass
class FrameFeatures:
    final: Tensor      # (C_v, H0, W0)
    mids: list         # 3 x (C_mid, H0, W0)


@dataclass
class ReferringExpression:
    words: list
    max_words: int = 32

    def __post_init__(self):
        if not self.words:
            raise ValueError("referring expression must contain at least one word")
        if len(self.words) > self.max_words:
            raise ValueError("referring expression too long")
        for w in self.words:
            if not w or w != w.lower():
                raise ValueError(f"tokens must be nonempty lowercase strings: {w!r}")


@dataclass
class TextEmbeddings:
    words: Tensor      # (L, C_e)
    sentence: Tensor   # (C_e,)


def _xavier(rng, fan_in, fan_out, shape=None, dtype=np.float64):
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, (fan_in, fan_out) if shape is None else shape).astype(dtype)


def init_visual_params(cfg, rng, dtype=np.float64, with_adapters=True):
    """Flat parameter dict for the visual encoder, keys prefixed 'encoder.'."""
    d, cv, r = cfg.token_width, cfg.out_channels, cfg.adapter_width
    p = {}

    def par(name, arr):
        p[name] = Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)

    pdim = 3 * cfg.patch_size ** 2
    par("encoder.patch.weight", _xavier(rng, pdim, d))
    par("encoder.patch.bias", np.zeros(d))
    for i in range(cfg.block_count):
        pre = f"encoder.block{i}."
        par(pre + "ln1.gamma", np.ones(d))
        par(pre + "ln1.beta", np.zeros(d))
        for nm in ("wq", "wk", "wv", "wo"):
            par(pre + f"attn.{nm}.weight", _xavier(rng, d, d))
            par(pre + f"attn.{nm}.bias", np.zeros(d))
        par(pre + "ln2.gamma", np.ones(d))
        par(pre + "ln2.beta", np.zeros(d))
        hid = d * cfg.mlp_ratio
        par(pre + "mlp.fc1.weight", _xavier(rng, d, hid))
        par(pre + "mlp.fc1.bias", np.zeros(hid))
        par(pre + "mlp.fc2.weight", _xavier(rng, hid, d))
        par(pre + "mlp.fc2.bias", np.zeros(d))
        if with_adapters and i in cfg.adapter_blocks:
            for a in ("adapter1", "adapter2"):
                par(pre + f"{a}.down.weight", _xavier(rng, d, r))
                par(pre + f"{a}.down.bias", np.zeros(r))
                # zero-init up projection: adapters start as the identity
                par(pre + f"{a}.up.weight", np.zeros((r, d)))
                par(pre + f"{a}.up.bias", np.zeros(d))
    par("encoder.neck.proj.weight", _xavier(rng, d, cv))
    par("encoder.neck.proj.bias", np.zeros(cv))
    par("encoder.neck.ln.gamma", np.ones(cv))
    par("encoder.neck.ln.beta", np.zeros(cv))
    return p


def sinusoidal_grid(width, h, w, dtype=np.float64):
    """Fixed 2-D sin/cos positional table, shape (h*w, width)."""
    if width % 4 != 0:
        raise ConfigurationError("positional width must be divisible by 4")
    quarter = width // 4
    freq = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ys = ys.reshape(-1, 1) * freq
    xs = xs.reshape(-1, 1) * freq
    return np.concatenate([np.sin(ys), np.cos(ys), np.sin(xs), np.cos(xs)], axis=1).astype(dtype)


def adapter_forward(tokens, params, prefix):
    """tokens + Up(ReLU(Down(tokens))); Up is zero-initialized."""
    h = linear(tokens, params[prefix + "down.weight"], params[prefix + "down.bias"]).relu()
    return tokens + linear(h, params[prefix + "up.weight"], params[prefix + "up.bias"])


def _self_attention(tokens, params, prefix):
    d = tokens.shape[-1]
    q = linear(tokens, params[prefix + "wq.weight"], params[prefix + "wq.bias"])
    k = linear(tokens, params[prefix + "wk.weight"], params[prefix + "wk.bias"])
    v = linear(tokens, params[prefix + "wv.weight"], params[prefix + "wv.bias"])
    att = softmax(q @ k.T * (1.0 / np.sqrt(d)), axis=-1)
    return linear(att @ v, params[prefix + "wo.weight"], params[prefix + "wo.bias"])


def encode_frame(frame, cfg, params, use_adapter=True):
    """Run one frame (3, H, W ndarray in [0, 1]) through the encoder."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise DimensionError("frame must be (3, H, W)")
    _, h, w = frame.shape
    ps = cfg.patch_size
    if h % ps or w % ps:
        raise DimensionError(f"frame dims must be divisible by patch size {ps}")
    h0, w0 = h // ps, w // ps
    d = cfg.token_width
    patches = (frame.reshape(3, h0, ps, w0, ps)
               .transpose(1, 3, 0, 2, 4)
               .reshape(h0 * w0, 3 * ps * ps))
    dtype = params["encoder.patch.weight"].dtype
    tokens = linear(Tensor(patches.astype(dtype)),
                    params["encoder.patch.weight"], params["encoder.patch.bias"])
    tokens = tokens + Tensor(sinusoidal_grid(d, h0, w0, dtype))

    taps = {}
    for i in range(cfg.block_count):
        pre = f"encoder.block{i}."
        x = layer_norm(tokens, params[pre + "ln1.gamma"], params[pre + "ln1.beta"])
        tokens = tokens + _self_attention(x, params, pre + "attn.")
        if use_adapter and i in cfg.adapter_blocks:
            tokens = adapter_forward(tokens, params, pre + "adapter1.")
        x = layer_norm(tokens, params[pre + "ln2.gamma"], params[pre + "ln2.beta"])
        x = linear(x, params[pre + "mlp.fc1.weight"], params[pre + "mlp.fc1.bias"]).relu()
        tokens = tokens + linear(x, params[pre + "mlp.fc2.weight"], params[pre + "mlp.fc2.bias"])
        if use_adapter and i in cfg.adapter_blocks:
            tokens = adapter_forward(tokens, params, pre + "adapter2.")
        if i in cfg.tap_indices:
            taps[i] = tokens

    mids = [taps[i].transpose(1, 0).reshape(cfg.mid_channels, h0, w0) for i in cfg.tap_indices]
    neck = linear(tokens, params["encoder.neck.proj.weight"], params["encoder.neck.proj.bias"])
    neck = layer_norm(neck, params["encoder.neck.ln.gamma"], params["encoder.neck.ln.beta"])
    final = neck.transpose(1, 0).reshape(cfg.out_channels, h0, w0)
    return FrameFeatures(final=final, mids=mids)


# ---- text -----------------------------------------------------------------

def _bucket(token, vocab_size):
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab_size


class ToyTextProvider:
    """Seeded-hash vocabulary table; out-of-vocabulary is impossible since
    every token hashes into a bucket."""

    def __init__(self, embed_width=64, vocab_size=4096, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.embed_width = embed_width
        self.vocab_size = vocab_size
        self.table = Tensor(
            (rng.normal(0.0, 1.0, (vocab_size, embed_width)) / np.sqrt(embed_width)).astype(dtype))

    def lookup(self, token):
        return self.table.data[_bucket(token, self.vocab_size)]

    def params(self):
        return {"text.table": self.table}


class FileTextProvider:
    """Embeddings loaded from an external embedding file (see io.read_embeddings)."""

    def __init__(self, vectors):
        if not vectors:
            raise ValueError("empty embedding table")
        self.vectors = vectors
        self.embed_width = len(next(iter(vectors.values())))

    def lookup(self, token):
        if token not in self.vectors:
            raise LookupError(f"embedding file has no entry for token {token!r}")
        return self.vectors[token]

    def params(self):
        return {}


def pool_sentence(words):
    """Mean over the word axis."""
    if words.shape[0] < 1:
        raise DimensionError("pool_sentence needs at least one word")
    return words.mean(axis=0)


def encode_text(expr, provider):
    rows = np.stack([np.asarray(provider.lookup(w), dtype=np.float64) for w in expr.words])
    words = Tensor(rows)
    return TextEmbeddings(words=words, sentence=pool_sentence(words))


# ---- freezing -------------------------------------------------------------

TRAINABLE_PREFIXES = ("cmm.", "hda.", "decoder.", "itm.")


def freeze_partition(params):
    """Split parameter names into (frozen, trainable) sets."""
    frozen, trainable = set(), set()
    for name in params:
        if name.startswith("encoder."):
            (trainable if ".adapter" in name else frozen).add(name)
        elif name.startswith("text."):
            frozen.add(name)
        elif name.startswith(TRAINABLE_PREFIXES):
            trainable.add(name)
        else:
            raise ConfigurationError(f"parameter {name!r} has no module tag")
    return frozen, trainable
