"""The four computational graphs: shape completion, colorization classifier,
refiner, and the global-local discriminator.

Layer stacks are driven by machine-readable fixture tables shipped under
fixtures/ (arch_*.json); the builders construct exactly what the tables
say, so architecture drift shows up as a fixture mismatch. All hidden
activations are LeakyReLU(0.2). Stride-1 convolutions are zero-padded to
preserve spatial dims; stride-2 convolutions (k=3, p=1) halve them;
transposed convolutions (k=4, s=2, p=1) double them.

`channel_scale` shrinks hidden widths for toy-scale CPU training; the
default of 1.0 matches the fixtures (and the frozen parameter counts).
"""

from __future__ import annotations

import hashlib
import json
import importlib.resources
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

LEAKY_SLOPE = 0.2

GRAPH_NAMES = ("snet", "tcolor", "trefine", "disc")

TCOLOR_INPUT = 128
TCOLOR_OUTPUT = 8
LOCAL_PATCH = 64
GLOBAL_H = 180
GLOBAL_W = 320


def _load_fixture(name: str) -> dict:
    text = (
        importlib.resources.files("vehiclegen")
        .joinpath("fixtures", f"arch_{name}.json")
        .read_text()
    )
    return json.loads(text)


def _scaled(ch: int, scale: float, is_head: bool) -> int:
    if is_head or scale == 1.0:
        return ch
    return max(4, int(round(ch * scale)))


class _PadConv2d(nn.Module):
    """Conv with asymmetric right/bottom padding for even kernels."""

    def __init__(self, in_ch, out_ch, k, stride=1, dilation=1):
        super().__init__()
        if k % 2 == 1:
            pad = dilation * (k - 1) // 2
            self.pre_pad = None
            self.conv = nn.Conv2d(in_ch, out_ch, k, stride=stride, padding=pad, dilation=dilation)
        else:
            self.pre_pad = (0, k - 1, 0, k - 1) if stride == 1 else None
            self.conv = nn.Conv2d(in_ch, out_ch, k, stride=stride, padding=(k // 2 - 1) if stride > 1 else 0, dilation=dilation)

    def forward(self, x):
        if self.pre_pad is not None:
            x = F.pad(x, self.pre_pad)
        return self.conv(x)


def _init_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, a=LEAKY_SLOPE, nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def _build_stack(layers: list[dict], in_ch: int, scale: float) -> tuple[nn.Sequential, int]:
    mods: list[nn.Module] = []
    ch = in_ch
    for l in layers:
        kind = l["kind"]
        if kind == "maxpool":
            mods.append(nn.MaxPool2d(kernel_size=l["kernel"], stride=l["stride"]))
            continue
        out_ch = _scaled(l["out_channels"], scale, l.get("head", False))
        k, s, d = l["kernel"], l["stride"], l.get("dilation", 1)
        if kind == "conv":
            mods.append(_PadConv2d(ch, out_ch, k, stride=s, dilation=d))
        elif kind == "tconv":
            mods.append(nn.ConvTranspose2d(ch, out_ch, k, stride=s, padding=(k - s) // 2))
        else:
            raise ValueError(f"unknown layer kind {kind}")
        act = l.get("activation", "leaky_relu")
        if act == "leaky_relu":
            mods.append(nn.LeakyReLU(LEAKY_SLOPE, inplace=True))
        elif act == "none":
            pass
        else:
            raise ValueError(f"unknown activation {act}")
        ch = out_ch
    return nn.Sequential(*mods), ch


class ShapeNet(nn.Module):
    """Gray completion: (N, 2, H, W) masked-gray+mask -> (N, 1, H, W) in [0,1].

    H and W must be divisible by 4 (two stride-2 downsamples).
    """

    def __init__(self, channel_scale: float = 1.0):
        super().__init__()
        spec = _load_fixture("snet")
        self.body, _ = _build_stack(spec["layers"], spec["in_channels"], channel_scale)
        _init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != 2:
            raise ValueError(f"expected 2 input channels, got {x.shape[1]}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ValueError(f"input dims {tuple(x.shape[2:])} must be divisible by 4")
        return torch.sigmoid(self.body(x))


class ColorClassifier(nn.Module):
    """Colorization classifier: (N, 1, 128, 128) L patch -> (N, 313, 8, 8) simplex."""

    def __init__(self, channel_scale: float = 1.0):
        super().__init__()
        spec = _load_fixture("tcolor")
        self.body, _ = _build_stack(spec["layers"], spec["in_channels"], channel_scale)
        _init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != 1 or x.shape[2] != TCOLOR_INPUT or x.shape[3] != TCOLOR_INPUT:
            raise ValueError(
                f"expected (N, 1, {TCOLOR_INPUT}, {TCOLOR_INPUT}) input, got {tuple(x.shape)}"
            )
        logits = self.body(x)
        return torch.softmax(logits, dim=1)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)

    def load_vgg19_features(self, path: str) -> int:
        """Copy matching conv weights from a VGG-19 features state dict.

        Returns the number of tensors copied. The first conv (1-channel
        input here vs 3 there) takes the channel-mean of the source kernel.
        """
        state = torch.load(path, map_location="cpu")
        src = [v for k, v in state.items() if v.ndim == 4]
        src_b = [v for k, v in state.items() if v.ndim == 1]
        copied = 0
        i = 0
        for m in self.body.modules():
            if isinstance(m, nn.Conv2d) and i < len(src):
                w = src[i]
                if m.weight.shape == w.shape:
                    m.weight.data.copy_(w)
                    m.bias.data.copy_(src_b[i])
                    copied += 1
                elif (
                    m.weight.shape[0] == w.shape[0]
                    and m.weight.shape[1] == 1
                    and w.shape[1] == 3
                    and m.weight.shape[2:] == w.shape[2:]
                ):
                    m.weight.data.copy_(w.mean(dim=1, keepdim=True))
                    m.bias.data.copy_(src_b[i])
                    copied += 1
                else:
                    break
                i += 1
        return copied


class Refiner(nn.Module):
    """Full-image refinement: (N, 3, H, W) -> (N, 3, H, W) in [-1, 1] (tanh)."""

    def __init__(self, channel_scale: float = 1.0):
        super().__init__()
        spec = _load_fixture("trefine")
        self.body, _ = _build_stack(spec["layers"], spec["in_channels"], channel_scale)
        _init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != 3:
            raise ValueError(f"expected 3 input channels, got {x.shape[1]}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ValueError(f"input dims {tuple(x.shape[2:])} must be divisible by 4")
        return torch.tanh(self.body(x))

    @staticmethod
    def to_unit(y: torch.Tensor) -> torch.Tensor:
        """Affine map from the tanh range [-1,1] to [0,1]."""
        return (y + 1.0) * 0.5


class GlobalLocalDiscriminator(nn.Module):
    """Two-branch real/fake critic.

    The global branch consumes the full image, the local branch the 64x64
    ROI patch; each branch ends in a 512-wide fully connected layer, the
    concatenated 1024-vector feeds a single linear unit with sigmoid.
    """

    def __init__(
        self,
        channel_scale: float = 1.0,
        global_hw: tuple[int, int] = (GLOBAL_H, GLOBAL_W),
        local_hw: int = LOCAL_PATCH,
    ):
        super().__init__()
        spec = _load_fixture("disc")
        self.global_hw = global_hw
        self.local_hw = local_hw
        self.global_stack, g_ch = _build_stack(spec["global_layers"], 3, channel_scale)
        self.local_stack, l_ch = _build_stack(spec["local_layers"], 3, channel_scale)
        fc_dim = _scaled(spec["fc_dim"], channel_scale, False)

        def _out_hw(hw, n_down):
            h, w = hw
            for _ in range(n_down):
                h = (h + 1) // 2
                w = (w + 1) // 2
            return h, w

        gh, gw = _out_hw(global_hw, len(spec["global_layers"]))
        lh, lw = _out_hw((local_hw, local_hw), len(spec["local_layers"]))
        self.global_fc = nn.Linear(g_ch * gh * gw, fc_dim)
        self.local_fc = nn.Linear(l_ch * lh * lw, fc_dim)
        self.head = nn.Linear(2 * fc_dim, 1)
        _init_weights(self)

    def forward(self, image: torch.Tensor, patch: torch.Tensor) -> torch.Tensor:
        if tuple(image.shape[2:]) != self.global_hw:
            raise ValueError(
                f"global input {tuple(image.shape[2:])} != expected {self.global_hw}"
            )
        if tuple(patch.shape[2:]) != (self.local_hw, self.local_hw):
            raise ValueError(
                f"local input {tuple(patch.shape[2:])} != expected {self.local_hw}"
            )
        g = F.leaky_relu(self.global_fc(self.global_stack(image).flatten(1)), LEAKY_SLOPE)
        l = F.leaky_relu(self.local_fc(self.local_stack(patch).flatten(1)), LEAKY_SLOPE)
        return torch.sigmoid(self.head(torch.cat([g, l], dim=1))).squeeze(1)


def build_snet(channel_scale: float = 1.0) -> ShapeNet:
    return ShapeNet(channel_scale)


def build_tcolor(channel_scale: float = 1.0) -> ColorClassifier:
    return ColorClassifier(channel_scale)


def build_trefine(channel_scale: float = 1.0) -> Refiner:
    return Refiner(channel_scale)


def build_discriminator(
    channel_scale: float = 1.0,
    global_hw: tuple[int, int] = (GLOBAL_H, GLOBAL_W),
    local_hw: int = LOCAL_PATCH,
) -> GlobalLocalDiscriminator:
    return GlobalLocalDiscriminator(channel_scale, global_hw, local_hw)


_BUILDERS = {
    "snet": build_snet,
    "tcolor": build_tcolor,
    "trefine": build_trefine,
    "disc": build_discriminator,
}


def build_all(channel_scale: float = 1.0, global_hw=(GLOBAL_H, GLOBAL_W), local_hw=LOCAL_PATCH) -> dict[str, nn.Module]:
    return {
        "snet": build_snet(channel_scale),
        "tcolor": build_tcolor(channel_scale),
        "trefine": build_trefine(channel_scale),
        "disc": build_discriminator(channel_scale, global_hw, local_hw),
    }


def param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def frozen_param_counts() -> dict[str, int]:
    text = (
        importlib.resources.files("vehiclegen")
        .joinpath("fixtures", "param_counts.json")
        .read_text()
    )
    return json.loads(text)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    version: int
    step: int
    config_hash: str
    meta: dict
    graphs: dict[str, dict[str, np.ndarray]]

    def apply_to(self, modules: dict[str, nn.Module]) -> None:
        for name, module in modules.items():
            if name not in self.graphs:
                raise KeyError(f"checkpoint has no graph '{name}'")
            state = {
                k: torch.from_numpy(v.copy()) for k, v in self.graphs[name].items()
            }
            module.load_state_dict(state)


def checkpoint_from_modules(
    modules: dict[str, nn.Module], step: int = 0, config_hash: str = "", meta: dict | None = None
) -> Checkpoint:
    graphs = {}
    for name, module in modules.items():
        graphs[name] = {
            k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()
        }
    return Checkpoint(
        version=CHECKPOINT_VERSION,
        step=step,
        config_hash=config_hash,
        meta=meta or {},
        graphs=graphs,
    )


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    """Write a portable container: JSON header + little-endian npz payload."""
    arrays = {}
    for gname, state in ckpt.graphs.items():
        for k, v in state.items():
            arrays[f"{gname}/{k}"] = np.ascontiguousarray(v).astype(v.dtype.newbyteorder("<"))
    header = json.dumps(
        {
            "version": ckpt.version,
            "step": ckpt.step,
            "config_hash": ckpt.config_hash,
            "meta": ckpt.meta,
            "graphs": sorted(ckpt.graphs.keys()),
        }
    )
    arrays["__header__"] = np.frombuffer(header.encode("utf-8"), dtype=np.uint8).copy()
    np.savez(path, **arrays)


def load_checkpoint(path: str) -> Checkpoint:
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        graphs: dict[str, dict[str, np.ndarray]] = {g: {} for g in header["graphs"]}
        for key in data.files:
            if key == "__header__":
                continue
            gname, pname = key.split("/", 1)
            graphs[gname][pname] = data[key]
    return Checkpoint(
        version=header["version"],
        step=header["step"],
        config_hash=header["config_hash"],
        meta=header["meta"],
        graphs=graphs,
    )


def checkpoint_hash(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
