"""Losses and the phased optimization schedule.

Phases: (1) pretrain the shape network on masked-gray L1, (2) pretrain the
colorization classifier on real gray patches vs quantized ab targets,
(3) joint adversarial phase where the discriminator and the refiner
alternate updates while the two pretrained generators stay frozen
(opt-in flag to fine-tune them end to end).

The generator adversarial term uses the non-saturating -log D(fake) form.
Discriminator scores are clamped to [eps, 1-eps] before any log.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn.functional as F

from . import networks
from .codec import ColorBinCodec, ce_target
from .data import TrainingSample, iterate_batches
from .imaging import Box, rgb_to_lab

SCORE_EPS = 1e-7
PROB_EPS = 1e-12


@dataclass
class TrainingConfig:
    lr_s: float = 1e-4
    lr_tcolor: float = 1e-4
    lr_refine: float = 1e-4
    lr_disc: float = 1e-4
    lambda_l1: float = 0.1
    adv_weight: float = 1.0
    batch_size: int = 16
    snet_steps: int = 1000
    tcolor_steps: int = 1000
    joint_steps: int = 1000
    seed: int = 0
    fill: float = 0.5
    channel_scale: float = 1.0
    deterministic: bool = True
    finetune_pretrained: bool = False

    def __post_init__(self):
        for name in ("lr_s", "lr_tcolor", "lr_refine", "lr_disc"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.lambda_l1 < 0 or self.adv_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def from_toml(path: str, **overrides) -> "TrainingConfig":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return TrainingConfig(**values)


@dataclass
class LossRecord:
    step: int
    l_s: float = float("nan")
    ce: float = float("nan")
    l1_refine: float = float("nan")
    d_loss: float = float("nan")
    g_adv: float = float("nan")


def write_loss_log(path: str, records: list[LossRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_s", "ce", "l1_refine", "d_loss", "g_adv"])
        for r in records:
            writer.writerow([r.step, r.l_s, r.ce, r.l1_refine, r.d_loss, r.g_adv])


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def loss_snet(pred, target) -> torch.Tensor:
    """Mean absolute difference between two gray images."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def loss_color(dist, target_classes) -> torch.Tensor:
    """Mean cross-entropy of a per-pixel class distribution vs hard targets.

    `dist` has the class axis last: (..., H, W, C); targets are (..., H, W).
    """
    dist = _as_tensor(dist)
    target = torch.as_tensor(np.asarray(target_classes), dtype=torch.long)
    if dist.shape[:-1] != target.shape:
        raise ValueError(
            f"distribution {tuple(dist.shape)} does not match targets {tuple(target.shape)}"
        )
    picked = torch.gather(dist, -1, target.unsqueeze(-1)).squeeze(-1)
    return -(picked.clamp_min(PROB_EPS)).log().mean()


def loss_refine(pred, target, d_score, lambda_l1: float, adv_weight: float) -> torch.Tensor:
    """Non-saturating adversarial term plus weighted L1 reconstruction."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    d_score = _as_tensor(d_score).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    adv = -(d_score.log()).mean()
    return adv_weight * adv + lambda_l1 * (pred - target).abs().mean()


def loss_disc(d_real, d_fake) -> torch.Tensor:
    """Standard GAN discriminator loss, scores clamped away from {0,1}."""
    d_real = _as_tensor(d_real).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    d_fake = _as_tensor(d_fake).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    return (-(d_real.log()) - (1.0 - d_fake).log()).mean()


def _check_finite(value: torch.Tensor, what: str, step: int) -> None:
    if not torch.isfinite(value).all():
        raise RuntimeError(f"{what} diverged (non-finite) at step {step}")


# ---------------------------------------------------------------------------
# differentiable color plumbing for the joint phase
# ---------------------------------------------------------------------------

_WHITE = torch.tensor([0.95047, 1.0, 1.08883], dtype=torch.float64)
_XYZ2RGB_T = torch.tensor(
    np.linalg.inv(
        np.array(
            [
                [0.4124564, 0.3575761, 0.1804375],
                [0.2126729, 0.7151522, 0.0721750],
                [0.0193339, 0.1191920, 0.9503041],
            ]
        )
    ),
    dtype=torch.float64,
)
_DELTA = 6.0 / 29.0


def lab_to_rgb_torch(L: torch.Tensor, ab: torch.Tensor) -> torch.Tensor:
    """Differentiable Lab -> sRGB. L is (N,1,H,W) in [0,100]; ab is (N,2,H,W).

    Out-of-gamut results are clamped to [0,1] (matches the numpy path).
    """
    fy = (L[:, 0] + 16.0) / 116.0
    fx = fy + ab[:, 0] / 500.0
    fz = fy - ab[:, 1] / 200.0
    f = torch.stack([fx, fy, fz], dim=-1)
    t = torch.where(f > _DELTA, f**3, 3.0 * _DELTA**2 * (f - 4.0 / 29.0))
    xyz = t * _WHITE.to(f.dtype)
    lin = xyz @ _XYZ2RGB_T.to(f.dtype).T
    srgb = torch.where(
        lin <= 0.0031308,
        12.92 * lin,
        1.055 * torch.sign(lin) * lin.abs().clamp_min(1e-12) ** (1.0 / 2.4) - 0.055,
    )
    return srgb.clamp(0.0, 1.0).permute(0, 3, 1, 2)


def expected_ab(dist: torch.Tensor, codec: ColorBinCodec) -> torch.Tensor:
    """Probability-weighted mean of bin centers: (N,313,H,W) -> (N,2,H,W).

    The argmax decode used at inference is not differentiable; the joint
    phase trains through this soft decode instead.
    """
    centers = torch.as_tensor(codec.centers, dtype=dist.dtype)
    return torch.einsum("nchw,cd->ndhw", dist, centers)


# ---------------------------------------------------------------------------
# batch assembly
# ---------------------------------------------------------------------------

def _stack_gray_batch(batch: list[TrainingSample]):
    x = torch.stack(
        [torch.from_numpy(s.masked_gray.transpose(2, 0, 1).copy()) for s in batch]
    ).float()
    y = torch.stack(
        [torch.from_numpy(s.gray_target[None].copy()) for s in batch]
    ).float()
    return x, y


def _tcolor_batch(batch: list[TrainingSample], codec: ColorBinCodec):
    """Real gray patches resized to 128 plus quantized ab class targets at 8x8."""
    xs, ts = [], []
    for s in batch:
        ys, xs_ = s.box.slices
        patch = s.gray_target[ys, xs_]
        t = torch.from_numpy(patch[None, None].copy()).float()
        t = F.interpolate(
            t, size=(networks.TCOLOR_INPUT, networks.TCOLOR_INPUT),
            mode="bilinear", align_corners=False,
        )
        xs.append(t[0])
        lab_patch = rgb_to_lab(s.rgb_target[ys, xs_])
        ts.append(ce_target(lab_patch, networks.TCOLOR_OUTPUT, networks.TCOLOR_OUTPUT, codec))
    return torch.stack(xs), torch.from_numpy(np.stack(ts)).long()


def _infinite_batches(samples, batch_size, seed):
    epoch = 0
    while True:
        yield from iterate_batches(samples, batch_size, seed + epoch)
        epoch += 1


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------

def pretrain_snet(
    samples: list[TrainingSample], config: TrainingConfig
) -> tuple[networks.Checkpoint, list[LossRecord]]:
    if config.deterministic:
        set_determinism(config.seed)
    snet = networks.build_snet(config.channel_scale)
    opt = torch.optim.Adam(snet.parameters(), lr=config.lr_s)
    records = []
    stream = _infinite_batches(samples, config.batch_size, config.seed)
    for step in range(config.snet_steps):
        x, y = _stack_gray_batch(next(stream))
        pred = snet(x)
        loss = loss_snet(pred, y)
        _check_finite(loss, "snet loss", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        records.append(LossRecord(step=step, l_s=float(loss.detach())))
    ckpt = networks.checkpoint_from_modules(
        {"snet": snet}, step=config.snet_steps, config_hash=config.config_hash(),
        meta={"phase": "snet", "channel_scale": config.channel_scale},
    )
    return ckpt, records


def pretrain_tcolor(
    samples: list[TrainingSample], config: TrainingConfig, codec: ColorBinCodec
) -> tuple[networks.Checkpoint, list[LossRecord]]:
    if config.deterministic:
        set_determinism(config.seed)
    tcolor = networks.build_tcolor(config.channel_scale)
    opt = torch.optim.Adam(tcolor.parameters(), lr=config.lr_tcolor)
    records = []
    stream = _infinite_batches(samples, config.batch_size, config.seed)
    for step in range(config.tcolor_steps):
        x, targets = _tcolor_batch(next(stream), codec)
        logits = tcolor.logits(x)
        loss = F.cross_entropy(logits, targets)
        _check_finite(loss, "tcolor loss", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        records.append(LossRecord(step=step, ce=float(loss.detach())))
    ckpt = networks.checkpoint_from_modules(
        {"tcolor": tcolor}, step=config.tcolor_steps, config_hash=config.config_hash(),
        meta={"phase": "tcolor", "channel_scale": config.channel_scale},
    )
    return ckpt, records


def _roi_to(img: torch.Tensor, box: Box, size: int) -> torch.Tensor:
    patch = img[..., box.y : box.y + box.h, box.x : box.x + box.w]
    return F.interpolate(patch, size=(size, size), mode="bilinear", align_corners=False)


def forward_pipeline(
    batch: list[TrainingSample],
    snet: networks.ShapeNet,
    tcolor: networks.ColorClassifier,
    refiner: networks.Refiner,
    codec: ColorBinCodec,
):
    """One differentiable pass masked-gray -> composed refined image.

    Returns (composed, real, composed_patches64, real_patches64).
    Composition keeps every pixel outside the box equal to the real image.
    """
    x, _ = _stack_gray_batch(batch)
    gray_hat = snet(x)
    real = torch.stack(
        [torch.from_numpy(s.rgb_target.transpose(2, 0, 1).copy()) for s in batch]
    ).float()
    real_gray = torch.stack(
        [torch.from_numpy(s.gray_target[None].copy()) for s in batch]
    ).float()
    composed_list, fake_p, real_p = [], [], []
    for i, s in enumerate(batch):
        box = s.box
        mask = torch.from_numpy(s.mask[None].copy()).float()
        # completed gray: generated content inside the box only
        g = real_gray[i] * (1 - mask) + gray_hat[i] * mask
        patch_l = _roi_to(g[None], box, networks.TCOLOR_INPUT)
        dist = tcolor(patch_l)
        ab_small = expected_ab(dist, codec)
        ab = F.interpolate(ab_small, size=(box.h, box.w), mode="bilinear", align_corners=False)
        l_patch = g[None, :, box.y : box.y + box.h, box.x : box.x + box.w] * 100.0
        rgb_patch = lab_to_rgb_torch(l_patch.double(), ab.double()).float()
        colorized = real[i].clone()
        colorized[:, box.y : box.y + box.h, box.x : box.x + box.w] = rgb_patch[0]
        refined = networks.Refiner.to_unit(refiner(colorized[None]))
        composed = real[i] * (1 - mask) + refined[0] * mask
        composed_list.append(composed)
        fake_p.append(_roi_to(composed[None], box, networks.LOCAL_PATCH)[0])
        real_p.append(_roi_to(real[i][None], box, networks.LOCAL_PATCH)[0])
    return (
        torch.stack(composed_list),
        real,
        torch.stack(fake_p),
        torch.stack(real_p),
    )


def train_joint(
    samples: list[TrainingSample],
    config: TrainingConfig,
    snet_ckpt: networks.Checkpoint,
    tcolor_ckpt: networks.Checkpoint,
) -> tuple[networks.Checkpoint, list[LossRecord]]:
    if config.deterministic:
        set_determinism(config.seed)
    h, w = samples[0].gray_target.shape
    snet = networks.build_snet(config.channel_scale)
    tcolor = networks.build_tcolor(config.channel_scale)
    refiner = networks.build_trefine(config.channel_scale)
    disc = networks.build_discriminator(config.channel_scale, global_hw=(h, w))
    snet_ckpt.apply_to({"snet": snet})
    tcolor_ckpt.apply_to({"tcolor": tcolor})
    if not config.finetune_pretrained:
        for p in snet.parameters():
            p.requires_grad_(False)
        for p in tcolor.parameters():
            p.requires_grad_(False)
    gen_params = list(refiner.parameters())
    if config.finetune_pretrained:
        gen_params += list(snet.parameters()) + list(tcolor.parameters())
    opt_g = torch.optim.Adam(gen_params, lr=config.lr_refine)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr_disc)
    records = []
    stream = _infinite_batches(samples, config.batch_size, config.seed)
    for step in range(config.joint_steps):
        batch = next(stream)
        composed, real, fake_p, real_p = forward_pipeline(batch, snet, tcolor, refiner, codec=_joint_codec())
        # discriminator update on detached fakes
        d_real = disc(real, real_p)
        d_fake = disc(composed.detach(), fake_p.detach())
        dl = loss_disc(d_real, d_fake)
        _check_finite(dl, "discriminator loss", step)
        opt_d.zero_grad()
        dl.backward()
        opt_d.step()
        # generator update to deceive the discriminator
        d_fake_g = disc(composed, fake_p)
        gl = loss_refine(composed, real, d_fake_g, config.lambda_l1, config.adv_weight)
        _check_finite(gl, "generator loss", step)
        opt_g.zero_grad()
        gl.backward()
        opt_g.step()
        with torch.no_grad():
            l1 = float((composed - real).abs().mean())
            adv = float(-(d_fake_g.clamp(SCORE_EPS, 1 - SCORE_EPS).log()).mean())
        records.append(
            LossRecord(step=step, l1_refine=l1, d_loss=float(dl.detach()), g_adv=adv)
        )
    ckpt = networks.checkpoint_from_modules(
        {"snet": snet, "tcolor": tcolor, "trefine": refiner, "disc": disc},
        step=config.joint_steps,
        config_hash=config.config_hash(),
        meta={"phase": "joint", "channel_scale": config.channel_scale},
    )
    return ckpt, records


_CODEC_CACHE: ColorBinCodec | None = None


def _joint_codec() -> ColorBinCodec:
    global _CODEC_CACHE
    if _CODEC_CACHE is None:
        from .codec import build_codec

        _CODEC_CACHE = build_codec()
    return _CODEC_CACHE
