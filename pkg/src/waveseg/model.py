"""Tri-branch UNet with frequency-specific encoders and bottleneck fusion.

Three encoders ingest the low-frequency, raw and high-frequency companion
images. The low/high bottlenecks are each fused with the raw bottleneck by
concatenation plus one conv-norm-act reduction; the raw decoder branch sees
the reduction of both fused features, while the low/high branches decode
their own fused feature with skip connections from their own encoder. Any
subset of auxiliary branches can be disabled, down to a plain single-branch
UNet whose parameters match a vanilla UNet exactly.
"""

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .errors import ConfigError, ShapeError

BRANCHES = ("L", "M", "H")


@dataclass
class ModelConfig:
    spatial_rank: int = 2
    in_channels: int = 1
    num_classes: int = 4
    base_width: int = 16
    depth: int = 4
    branches: str = "LMH"

    def __post_init__(self):
        if self.spatial_rank not in (2, 3):
            raise ConfigError(f"spatial_rank must be 2 or 3, got {self.spatial_rank}")
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if self.base_width < 4:
            raise ConfigError(f"base_width must be >= 4, got {self.base_width}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        wanted = set(self.branches)
        if not wanted <= set(BRANCHES) or len(self.branches) != len(wanted):
            raise ConfigError(f"branches must be a subset of 'LMH', got {self.branches!r}")
        if "M" not in wanted:
            raise ConfigError("the raw-image branch 'M' is always required")
        self.branches = "".join(b for b in BRANCHES if b in wanted)

    @property
    def downsample_factor(self):
        return 2 ** (self.depth - 1)


def _layers(rank):
    if rank == 2:
        return nn.Conv2d, nn.BatchNorm2d, nn.MaxPool2d
    return nn.Conv3d, nn.BatchNorm3d, nn.MaxPool3d


class ConvBlock(nn.Module):
    """Two conv-norm-act units, the standard UNet stage."""

    def __init__(self, rank, in_ch, out_ch):
        super().__init__()
        conv, norm, _ = _layers(rank)
        self.body = nn.Sequential(
            conv(in_ch, out_ch, kernel_size=3, padding=1),
            norm(out_ch),
            nn.ReLU(inplace=True),
            conv(out_ch, out_ch, kernel_size=3, padding=1),
            norm(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.body(x)


class FuseBlock(nn.Module):
    """Concatenate two same-width features and reduce back to one width."""

    def __init__(self, rank, width):
        super().__init__()
        conv, norm, _ = _layers(rank)
        self.body = nn.Sequential(
            conv(2 * width, width, kernel_size=3, padding=1),
            norm(width),
            nn.ReLU(inplace=True),
        )

    def forward(self, a, b):
        return self.body(torch.cat([a, b], dim=1))


class Encoder(nn.Module):
    def __init__(self, rank, in_ch, widths):
        super().__init__()
        _, _, pool = _layers(rank)
        self.stages = nn.ModuleList()
        prev = in_ch
        for w in widths:
            self.stages.append(ConvBlock(rank, prev, w))
            prev = w
        self.pool = pool(kernel_size=2)

    def forward(self, x):
        skips = []
        for i, stage in enumerate(self.stages):
            if i > 0:
                x = self.pool(x)
            x = stage(x)
            if i < len(self.stages) - 1:
                skips.append(x)
        return skips, x


class UpBlock(nn.Module):
    """Nearest-neighbour upsample followed by a channel-halving conv."""

    def __init__(self, rank, in_ch):
        super().__init__()
        conv, norm, _ = _layers(rank)
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.reduce = nn.Sequential(
            conv(in_ch, in_ch // 2, kernel_size=3, padding=1),
            norm(in_ch // 2),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.reduce(self.up(x))


class Decoder(nn.Module):
    def __init__(self, rank, widths, num_classes):
        super().__init__()
        conv, _, _ = _layers(rank)
        self.ups = nn.ModuleList()
        self.stages = nn.ModuleList()
        for w in reversed(widths[:-1]):
            self.ups.append(UpBlock(rank, 2 * w))
            self.stages.append(ConvBlock(rank, 2 * w, w))
        self.head = conv(widths[0], num_classes, kernel_size=1)

    def forward(self, bottleneck, skips):
        x = bottleneck
        for up, stage, skip in zip(self.ups, self.stages, reversed(skips)):
            x = stage(torch.cat([up(x), skip], dim=1))
        return self.head(x)


class TriBranchNet(nn.Module):
    """Multi-input / multi-output segmentation network.

    ``forward`` takes the (low, raw, high) companion tensors and returns a
    dict of per-branch probability maps; disabled branches are absent from
    both the module tree and the output.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        rank = config.spatial_rank
        widths = [config.base_width * 2 ** i for i in range(config.depth)]
        top = widths[-1]

        self.encoders = nn.ModuleDict(
            {b: Encoder(rank, config.in_channels, widths) for b in config.branches}
        )
        self.fusions = nn.ModuleDict(
            {b: FuseBlock(rank, top) for b in config.branches if b != "M"}
        )
        # The raw branch reduces both fused features when both exist.
        self.raw_reduce = (
            FuseBlock(rank, top) if len(self.fusions) == 2 else None
        )
        self.decoders = nn.ModuleDict(
            {b: Decoder(rank, widths, config.num_classes) for b in config.branches}
        )

    def _check_spatial(self, shape):
        factor = self.config.downsample_factor
        for i, n in enumerate(shape):
            if n % factor:
                raise ShapeError(
                    f"spatial dim {i} of size {n} not divisible by {factor} "
                    f"(depth {self.config.depth})"
                )

    def forward(self, low, raw, high):
        self._check_spatial(raw.shape[2:])
        inputs = {"L": low, "M": raw, "H": high}
        skips, bottoms = {}, {}
        for b, enc in self.encoders.items():
            skips[b], bottoms[b] = enc(inputs[b])

        fused = {b: fuse(bottoms[b], bottoms["M"]) for b, fuse in self.fusions.items()}
        if self.raw_reduce is not None:
            raw_bottom = self.raw_reduce(fused["L"], fused["H"])
        elif fused:
            raw_bottom = next(iter(fused.values()))
        else:
            raw_bottom = bottoms["M"]

        out = {}
        for b, dec in self.decoders.items():
            bottom = raw_bottom if b == "M" else fused[b]
            out[b] = torch.softmax(dec(bottom, skips[b]), dim=1)
        return out


def _init_parameters(module):
    if isinstance(module, (nn.Conv2d, nn.Conv3d)):
        nn.init.kaiming_normal_(module.weight, nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm2d, nn.BatchNorm3d)):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def build(config, seed=0):
    """Deterministically construct and initialize the network."""
    torch.manual_seed(seed)
    model = TriBranchNet(config)
    model.apply(_init_parameters)
    return model


def parameter_count(model):
    return sum(p.numel() for p in model.parameters())
