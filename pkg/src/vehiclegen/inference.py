"""End-to-end generation: mask, gray completion, colorization, refinement,
composition with bit-exact pixel preservation outside the box, optional
alpha blending.

The lightness of the colorized patch comes from the completed gray image;
the classifier supplies ab only. The 313-channel probability map is
bilinearly upsampled to patch resolution first and argmax-decoded after
(sharper class boundaries than interpolating ab values). Images whose dims
are not divisible by 4 are reflect-padded internally and cropped back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from . import networks
from .codec import ColorBinCodec, build_codec, decode_classes
from .data import AnnotatedScene, box_passes_filter, MIN_SIZE, MAX_W, MAX_H
from .imaging import (
    Box,
    alpha_blend,
    erase,
    lab_to_rgb,
    make_mask,
    rgb_to_gray,
)


class BoxFilterError(ValueError):
    """Requested box violates the training size filter."""


@dataclass
class GenerationRequest:
    image: np.ndarray           # RGB in [0,1]
    box: Box
    alpha_band: int = 0
    seed: int = 0
    override_size_filter: bool = False
    fill: float | None = None   # defaults to checkpoint's stored fill


@dataclass
class GenerationResult:
    composed: np.ndarray
    gray_stage: np.ndarray
    color_stage: np.ndarray
    box: Box


class GenerationEngine:
    """Frozen-checkpoint pipeline; pure, safe for concurrent calls."""

    def __init__(self, ckpt: networks.Checkpoint, codec: ColorBinCodec | None = None):
        scale = float(ckpt.meta.get("channel_scale", 1.0))
        required = {"snet", "tcolor", "trefine"}
        missing = required - set(ckpt.graphs)
        if missing:
            raise ValueError(f"checkpoint missing graphs: {sorted(missing)}")
        self.snet = networks.build_snet(scale)
        self.tcolor = networks.build_tcolor(scale)
        self.refiner = networks.build_trefine(scale)
        ckpt.apply_to({"snet": self.snet, "tcolor": self.tcolor, "trefine": self.refiner})
        for m in (self.snet, self.tcolor, self.refiner):
            m.eval()
            for p in m.parameters():
                p.requires_grad_(False)
        self.codec = codec if codec is not None else build_codec()
        self.fill = float(ckpt.meta.get("fill", 0.5))

    # -- helpers ----------------------------------------------------------

    @staticmethod
    def _pad4(t: torch.Tensor) -> tuple[torch.Tensor, int, int]:
        h, w = t.shape[-2:]
        ph = (-h) % 4
        pw = (-w) % 4
        if ph or pw:
            t = F.pad(t, (0, pw, 0, ph), mode="reflect")
        return t, ph, pw

    def _complete_gray(self, gray: np.ndarray, box: Box, fill: float) -> np.ndarray:
        mask = make_mask(box, gray.shape[0], gray.shape[1])
        masked = erase(gray, mask, fill)
        x = torch.from_numpy(np.stack([masked, mask])[None]).float()
        x, ph, pw = self._pad4(x)
        with torch.no_grad():
            out = self.snet(x)[0, 0].numpy()
        out = out[: gray.shape[0], : gray.shape[1]]
        # paste generated content inside the box only
        result = gray.copy()
        ys, xs = box.slices
        result[ys, xs] = out[ys, xs]
        return result

    def _colorize_patch(self, gray_full: np.ndarray, box: Box) -> np.ndarray:
        ys, xs = box.slices
        l_patch = gray_full[ys, xs]
        t = torch.from_numpy(l_patch[None, None].copy()).float()
        t = F.interpolate(
            t, size=(networks.TCOLOR_INPUT, networks.TCOLOR_INPUT),
            mode="bilinear", align_corners=False,
        )
        with torch.no_grad():
            dist = self.tcolor(t)
        probs = F.interpolate(dist, size=(box.h, box.w), mode="bilinear", align_corners=False)
        cls = probs[0].argmax(dim=0).numpy()
        ab = decode_classes(cls, self.codec)
        lab = np.concatenate([l_patch[..., None] * 100.0, ab], axis=-1)
        return lab_to_rgb(lab)

    def _refine(self, colorized: np.ndarray) -> np.ndarray:
        t = torch.from_numpy(colorized.transpose(2, 0, 1)[None]).float()
        t, ph, pw = self._pad4(t)
        with torch.no_grad():
            out = networks.Refiner.to_unit(self.refiner(t))[0].numpy().transpose(1, 2, 0)
        return out[: colorized.shape[0], : colorized.shape[1]]

    # -- public API -------------------------------------------------------

    def generate(self, req: GenerationRequest) -> GenerationResult:
        image = np.asarray(req.image, dtype=np.float64)
        box = req.box
        box.validate_inside(image.shape[0], image.shape[1])
        if not req.override_size_filter and not box_passes_filter(box.w, box.h):
            raise BoxFilterError(
                f"box {box.w}x{box.h} outside allowed size "
                f"[{MIN_SIZE}..{MAX_W}]x[{MIN_SIZE}..{MAX_H}] "
                "(pass override_size_filter to force)"
            )
        fill = self.fill if req.fill is None else req.fill
        gray = rgb_to_gray(image)
        gray_stage = self._complete_gray(gray, box, fill)
        patch_rgb = self._colorize_patch(gray_stage, box)
        color_stage = image.copy()
        ys, xs = box.slices
        color_stage[ys, xs] = patch_rgb
        refined = self._refine(color_stage)
        composed = image.copy()
        composed[ys, xs] = refined[ys, xs]
        if req.alpha_band > 0:
            composed = alpha_blend(composed, image, box, req.alpha_band)
        return GenerationResult(
            composed=composed, gray_stage=gray_stage, color_stage=color_stage, box=box
        )

    def generate_batch(self, requests: list[GenerationRequest]) -> list[GenerationResult]:
        if not requests:
            return []
        dims = {r.image.shape for r in requests}
        if len(dims) > 1:
            raise ValueError(f"mixed image sizes in batch: {sorted(dims)}")
        return [self.generate(r) for r in requests]

    def substitute_existing(self, scene: AnnotatedScene, box_index: int) -> GenerationResult:
        if not 0 <= box_index < len(scene.boxes):
            raise IndexError(
                f"box index {box_index} out of range (scene has {len(scene.boxes)} boxes)"
            )
        return self.generate(
            GenerationRequest(image=scene.image, box=scene.boxes[box_index])
        )
