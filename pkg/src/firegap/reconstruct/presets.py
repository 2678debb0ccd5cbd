"""Architecture presets: the full-size configuration and a CPU-sized one."""

from dataclasses import asdict, dataclass, replace

from firegap.gradcore.tensor import ConfigError


@dataclass(frozen=True)
class ArchPreset:
    name: str
    size: int = 64
    # focal loss shared by the focal-trained models
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    # MaskUNet
    unet_channels: tuple = (64, 128, 256, 512)
    unet_blocks: int = 2
    unet_attn_heads: int = 8
    # MaskCVAE
    cvae_channels: tuple = (64, 128, 256)
    cvae_latent: int = 128
    cvae_beta: float = 0.1
    # MaskViT
    vit_patch: int = 4
    vit_dim: int = 256
    vit_depth: int = 6
    vit_heads: int = 8
    vit_mlp_ratio: int = 4
    # MaskD3PM
    d3pm_steps: int = 100
    d3pm_time_dim: int = 256
    d3pm_channels: tuple = (64, 128, 256)
    d3pm_sample_steps: int = 100
    # Stage-II U-TAE
    utae_channels: tuple = (64, 128, 128, 128)
    utae_heads: int = 4
    utae_key_dim: int = 16
    utae_dropout: float = 0.1
    utae_scalar_alpha: bool = False
    # Stage II is scored by AP (threshold-free), so its class weight is set separately
    utae_focal_alpha: float = 0.25
    history: int = 5

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = {k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()}
        return cls(**obj)

    def with_size(self, size):
        return replace(self, size=size)


PAPER = ArchPreset("paper")

DESK = ArchPreset(
    "desk",
    focal_alpha=0.7,
    unet_channels=(8, 16, 32),
    unet_blocks=1,
    unet_attn_heads=2,
    cvae_channels=(8, 16, 32),
    cvae_latent=16,
    vit_dim=32,
    vit_depth=2,
    vit_heads=4,
    d3pm_time_dim=32,
    d3pm_channels=(8, 16, 16),
    d3pm_sample_steps=10,
    utae_channels=(8, 16, 16, 16),
    utae_key_dim=8,
    utae_focal_alpha=0.5,
)

PRESETS = {"paper": PAPER, "desk": DESK}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
