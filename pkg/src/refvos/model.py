"""Full model assembly: configuration, parameter initialization, and the
per-frame forward path shared by inference and training."""

from dataclasses import dataclass

import numpy as np

from .decoder import decode, init_decoder_params
from .encoder import (ConfigurationError, ToyTextProvider, VisualEncoderConfig,
                      encode_frame, encode_text, freeze_partition)
from .fusion import (cross_modal_project, dense_attention,
                     hierarchical_dense_attention, init_cross_modal_params,
                     init_hda_params, init_linear_project_params)
from .tracking import init_itm_params

# sub-seed offsets derived from the top-level seed
SEED_ENCODER, SEED_TEXT, SEED_FUSION, SEED_DECODER, SEED_ITM, SEED_DATA, SEED_SAMPLER = (
    1, 2, 3, 4, 5, 1000, 2000)


@dataclass
class ModelConfig:
    patch_size: int = 8
    blocks: int = 4
    token_width: int = 64
    channels: int = 256            # C_v, shared prompt/decoder width
    adapter_width: int = 8
    mlp_ratio: int = 2
    tap_indices: tuple = None
    text_width: int = 64           # C_e of the toy text encoder
    vocab_size: int = 4096
    hidden: int = 256              # cross-modal MLP hidden width
    use_cross_modal_mlp: bool = True
    use_da: bool = True
    use_hda: bool = True
    use_itm: bool = True
    use_adapter: bool = True
    include_sentence_token: bool = True
    detach_track: bool = False

    def __post_init__(self):
        if self.use_hda and not self.use_da:
            raise ConfigurationError("hda requires the dense-attention machinery")
        if self.channels % 4 or self.token_width % 4:
            raise ConfigurationError("channel widths must be divisible by 4")


class Model:
    def __init__(self, cfg, seed=0, dtype=np.float64, text_provider=None):
        self.cfg = cfg
        self.dtype = dtype
        self.vcfg = VisualEncoderConfig(
            patch_size=cfg.patch_size, block_count=cfg.blocks,
            token_width=cfg.token_width, out_channels=cfg.channels,
            adapter_width=cfg.adapter_width, mlp_ratio=cfg.mlp_ratio,
            tap_indices=cfg.tap_indices)
        self.params = {}
        self.params.update(init_params_visual(self.vcfg, seed, dtype,
                                              with_adapters=cfg.use_adapter))
        self.text_provider = text_provider or ToyTextProvider(
            cfg.text_width, cfg.vocab_size, seed + SEED_TEXT, dtype)
        self.params.update(self.text_provider.params())
        rng_f = np.random.default_rng(seed + SEED_FUSION)
        if cfg.use_cross_modal_mlp:
            self.params.update(init_cross_modal_params(
                cfg.text_width, cfg.hidden, cfg.channels, rng_f, dtype))
        else:
            self.params.update(init_linear_project_params(
                cfg.text_width, cfg.channels, rng_f, dtype))
        if cfg.use_da:
            self.params.update(init_hda_params(
                cfg.channels, self.vcfg.mid_channels, rng_f, dtype))
        self.params.update(init_decoder_params(
            cfg.channels, np.random.default_rng(seed + SEED_DECODER), dtype))
        if cfg.use_itm:
            self.params.update(init_itm_params(
                cfg.channels, np.random.default_rng(seed + SEED_ITM), dtype))

    # ---- forward pieces --------------------------------------------------

    def encode_text(self, expr):
        return encode_text(expr, self.text_provider)

    def sparse_embeddings(self, text):
        return cross_modal_project(text, self.params)

    def encode_frame(self, frame):
        return encode_frame(frame, self.vcfg, self.params,
                            use_adapter=self.cfg.use_adapter)

    def dense_embeddings(self, ff, sparse):
        if self.cfg.use_hda:
            return hierarchical_dense_attention(ff, sparse, self.params)
        if self.cfg.use_da:
            return dense_attention(ff.final, sparse, self.params)[0]
        return None

    def decode(self, ff, sparse, dense, track):
        return decode(ff.final, sparse, dense, track, self.params,
                      include_sentence_token=self.cfg.include_sentence_token)

    # ---- state -----------------------------------------------------------

    def partition(self):
        return freeze_partition(self.params)

    def trainable_params(self):
        _, names = self.partition()
        return {n: self.params[n] for n in sorted(names)}

    def state_arrays(self):
        return {n: p.data for n, p in sorted(self.params.items())}

    def load_state(self, arrays):
        for name, p in self.params.items():
            if name not in arrays:
                raise ConfigurationError(f"checkpoint missing parameter {name!r}")
            arr = np.asarray(arrays[name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ConfigurationError(
                    f"checkpoint shape mismatch for {name!r}: {arr.shape} vs {p.data.shape}")
            p.data = arr
            p.grad = None


def init_params_visual(vcfg, seed, dtype, with_adapters=True):
    from .encoder import init_visual_params
    return init_visual_params(vcfg, np.random.default_rng(seed + SEED_ENCODER), dtype,
                              with_adapters=with_adapters)


def config_from_params(arrays):
    """Reconstruct a ModelConfig from checkpoint parameter shapes, so that
    inference needs nothing but the checkpoint."""
    pdim, token_width = arrays["encoder.patch.weight"].shape
    patch_size = int(round(np.sqrt(pdim / 3)))
    blocks = 1 + max(int(k.split(".")[1][5:]) for k in arrays if k.startswith("encoder.block"))
    channels = arrays["encoder.neck.proj.weight"].shape[1]
    mlp_ratio = arrays["encoder.block0.mlp.fc1.weight"].shape[1] // token_width
    adapter_keys = [k for k in arrays if ".adapter1.down.weight" in k]
    use_adapter = bool(adapter_keys)
    adapter_width = arrays[adapter_keys[0]].shape[1] if adapter_keys else max(1, token_width // 8)
    use_cmm = "cmm.fc1.weight" in arrays
    if use_cmm:
        text_width, hidden = arrays["cmm.fc1.weight"].shape
    else:
        text_width = arrays["cmm.proj.weight"].shape[0]
        hidden = 1
    vocab_size = arrays["text.table"].shape[0] if "text.table" in arrays else 4096
    return ModelConfig(
        patch_size=patch_size, blocks=blocks, token_width=token_width,
        channels=channels, adapter_width=adapter_width, mlp_ratio=mlp_ratio,
        text_width=text_width, vocab_size=vocab_size, hidden=hidden,
        use_cross_modal_mlp=use_cmm,
        use_da="hda.da0.conv.weight" in arrays,
        use_hda="hda.reduce1.weight" in arrays,
        use_itm="itm.fc1.weight" in arrays,
        use_adapter=use_adapter)


def model_from_checkpoint(arrays, dtype=np.float64):
    cfg = config_from_params(arrays)
    model = Model(cfg, seed=0, dtype=dtype)
    model.load_state(arrays)
    return model
