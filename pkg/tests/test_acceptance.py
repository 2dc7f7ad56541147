"""Acceptance suite: one test per top-level criterion, at stated tolerance.

The heavyweight learning-capacity check uses the hyperparameters frozen in
docs/pilot_runs.md (small channel widths, 10 synthetic scenes); expect a few
minutes of CPU time for the full module.
"""

import json
import math

import numpy as np
import pytest
import torch

from conftest import smooth_image, toy_samples
from test_training import fd_check
from vehiclegen import codec as C
from vehiclegen import data as D
from vehiclegen import evaluation as E
from vehiclegen import networks as N
from vehiclegen import training as T
from vehiclegen.imaging import Box, lab_to_rgb, rgb_to_lab, save_image
from vehiclegen.inference import GenerationRequest


def test_acceptance_pixel_preservation(toy_engine):
    """100 random (image, box) pairs: outside-box pixels bit-exact."""
    rng = np.random.default_rng(0)
    for trial in range(100):
        h = int(rng.integers(52, 72))
        w = int(rng.integers(52, 72))
        img = smooth_image(rng, h, w)
        bw = int(rng.integers(10, min(40, w - 2)))
        bh = int(rng.integers(10, min(36, h - 2)))
        box = Box(int(rng.integers(0, w - bw)), int(rng.integers(0, h - bh)), bw, bh)
        out = toy_engine.generate(GenerationRequest(image=img, box=box))
        mask = np.ones((h, w), bool)
        ys, xs = box.slices
        mask[ys, xs] = False
        assert np.array_equal(out.composed[mask], img[mask]), trial


def test_acceptance_codec(codec):
    """Exactly 313 classes; encode == linear-scan oracle on 1e4 pairs;
    quantization error <= 5*sqrt(2) for in-gamut inputs."""
    assert codec.count == 313 and len(codec.centers) == 313
    rng = np.random.default_rng(1)
    ab = rgb_to_lab(rng.random((10_000, 1, 3)))[:, 0, 1:]
    cls = C.encode(ab.reshape(1, -1, 2), codec)[0]
    d2 = ((ab[:, None, :] - codec.centers[None]) ** 2).sum(-1)
    assert np.array_equal(cls, np.argmin(d2, axis=1))
    err = np.linalg.norm(ab - codec.centers[cls], axis=-1)
    assert err.max() <= 5.0 * math.sqrt(2.0) + 1e-9


def test_acceptance_colorimetry():
    """Round trip <= 1/255 per channel on 1e4 pixels; anchors within 0.1."""
    rng = np.random.default_rng(2)
    rgb = rng.random((100, 100, 3))
    assert np.abs(lab_to_rgb(rgb_to_lab(rgb)) - rgb).max() <= 1.0 / 255.0
    anchors = {
        (1.0, 1.0, 1.0): (100.0, 0.0, 0.0),
        (0.0, 0.0, 0.0): (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.0): (53.24, 80.09, 67.20),
    }
    for rgb_v, lab_v in anchors.items():
        got = rgb_to_lab(np.array([[rgb_v]]))[0, 0]
        assert np.abs(got - np.array(lab_v)).max() <= 0.1, rgb_v


def test_acceptance_shape_contracts():
    """I/O contracts for all four graphs; parameter counts match fixtures."""
    torch.manual_seed(0)
    nets = N.build_all(channel_scale=0.25, global_hw=(64, 64))
    s = nets["snet"](torch.rand(1, 2, 180, 320))
    assert s.shape == (1, 1, 180, 320) and s.min() >= 0 and s.max() <= 1
    t = nets["tcolor"](torch.rand(1, 1, 128, 128))
    assert t.shape == (1, 313, 8, 8)
    assert torch.allclose(t.sum(dim=1), torch.ones(1, 8, 8), atol=1e-5)
    r = nets["trefine"](torch.rand(1, 3, 64, 64))
    assert r.shape == (1, 3, 64, 64) and r.min() >= -1 and r.max() <= 1
    d = nets["disc"](torch.rand(2, 3, 64, 64), torch.rand(2, 3, 64, 64))
    assert d.shape == (2,) and (d > 0).all() and (d < 1).all()
    counts = N.frozen_param_counts()
    full = N.build_all()
    for name, module in full.items():
        assert N.param_count(module) == counts[name], name


def test_acceptance_gradient_checks():
    """Analytic vs central finite differences, rel err <= 1e-3, float64."""
    import torch.nn as nn

    torch.manual_seed(1)
    mini = nn.Sequential(
        nn.Conv2d(2, 4, 3, padding=1), nn.LeakyReLU(0.2),
        nn.Conv2d(4, 4, 3, padding=2, dilation=2), nn.LeakyReLU(0.2),
        nn.Conv2d(4, 6, 3, padding=1),
    ).double()
    x = torch.rand(1, 2, 6, 6, dtype=torch.float64)
    tgt_img = torch.rand(1, 1, 6, 6, dtype=torch.float64)
    tgt_cls = np.random.default_rng(0).integers(0, 6, (1, 6, 6))
    critic = nn.Sequential(nn.Flatten(), nn.Linear(6 * 6 * 6, 1)).double()

    fd_check(lambda: T.loss_snet(torch.sigmoid(mini(x))[:, :1], tgt_img),
             list(mini.parameters()))
    fd_check(
        lambda: T.loss_color(torch.softmax(mini(x), dim=1).permute(0, 2, 3, 1), tgt_cls),
        list(mini.parameters()),
    )

    def refine_fn():
        pred = (torch.tanh(mini(x)) + 1) / 2
        d = torch.sigmoid(critic(pred)).squeeze()
        return T.loss_refine(pred[:, :3], tgt_img.expand(1, 3, 6, 6), d, 0.1, 1.0)

    fd_check(refine_fn, list(mini.parameters()) + list(critic.parameters()))

    def disc_fn():
        dr = torch.sigmoid(critic(mini(x))).squeeze(1)
        df = torch.sigmoid(critic(mini(1.0 - x))).squeeze(1)
        return T.loss_disc(dr, df)

    fd_check(disc_fn, list(critic.parameters()))


def test_acceptance_loss_unit_values():
    """L_S(x,x)=0; uniform CE = ln 313; balanced disc loss = 2 ln 2."""
    x = np.random.default_rng(3).random((8, 8))
    assert float(T.loss_snet(x, x)) == 0.0
    dist = np.full((4, 4, 313), 1.0 / 313)
    ce = float(T.loss_color(dist, np.zeros((4, 4), dtype=int)))
    assert abs(ce - math.log(313)) <= 1e-6
    assert abs(float(T.loss_disc(0.5, 0.5)) - 2.0 * math.log(2.0)) <= 1e-6


@pytest.mark.slow
def test_acceptance_toy_learning_capacity(codec):
    """Overfit 10 samples: L_S < 0.05 in 500 steps; CE < 0.5 in 1000 steps;
    disc real/fake accuracy > 0.95 in 200 steps (pilot hyperparameters)."""
    samples = toy_samples(10, seed=1)
    cfg = T.TrainingConfig(
        lr_s=2e-3, lr_tcolor=1e-3, lr_disc=1e-3,
        snet_steps=500, tcolor_steps=1000,
        batch_size=10, channel_scale=0.25, seed=0,
    )
    _, rec = T.pretrain_snet(samples, cfg)
    assert rec[-1].l_s < 0.05, rec[-1].l_s

    _, rec = T.pretrain_tcolor(samples, cfg, codec)
    assert rec[-1].ce < 0.5, rec[-1].ce

    # discriminator separation: real scenes vs zero-filled-patch fakes
    T.set_determinism(0)
    disc = N.build_discriminator(0.25, global_hw=(64, 64))
    opt = torch.optim.Adam(disc.parameters(), lr=1e-3)
    import torch.nn.functional as F

    real = torch.stack(
        [torch.from_numpy(s.rgb_target.transpose(2, 0, 1)).float() for s in samples]
    )
    real_p = torch.cat(
        [
            F.interpolate(
                torch.from_numpy(
                    np.ascontiguousarray(
                        s.rgb_target[s.box.slices[0], s.box.slices[1]].transpose(2, 0, 1)
                    )
                ).float()[None],
                size=(64, 64), mode="bilinear", align_corners=False,
            )
            for s in samples
        ]
    )
    fake = real.clone()
    for i, s in enumerate(samples):
        ys, xs = s.box.slices
        fake[i][:, ys, xs] = 0.0
    fake_p = torch.zeros_like(real_p)
    for _ in range(200):
        loss = T.loss_disc(disc(real, real_p), disc(fake, fake_p))
        opt.zero_grad()
        loss.backward()
        opt.step()
    with torch.no_grad():
        acc = (
            (disc(real, real_p) > 0.5).float().mean()
            + (disc(fake, fake_p) < 0.5).float().mean()
        ) / 2.0
    assert float(acc) > 0.95, float(acc)


def test_acceptance_dataset_rules():
    """Filter equals brute force over [1..80]x[1..60]; x0.25 scaling exact."""
    for w in range(1, 81):
        for h in range(1, 61):
            expected = 10 <= w <= 64 and 10 <= h <= 50
            assert D.box_passes_filter(w, h) == expected, (w, h)
    scene = D.AnnotatedScene(
        "s", np.zeros((720, 1280, 3)), [Box(128, 72, 64, 36), Box(400, 300, 128, 100)],
        (720, 1280),
    )
    out = D.prepare_scene(scene)
    assert out.image.shape == (180, 320, 3)
    assert out.boxes == [Box(32, 18, 16, 9), Box(100, 75, 32, 25)]


def test_acceptance_fid():
    """Zero self-distance; 1-D analytic; 3-D closed form within 2%; monotone."""
    rng = np.random.default_rng(4)
    x = rng.standard_normal((500, 6))
    fs = lambda a: E.FeatureSet(features=a, extractor_id="t")
    assert E.fid(fs(x), fs(x)) <= 1e-6
    base = rng.standard_normal(5000)
    assert abs(E.fid(fs(base.reshape(-1, 1)), fs((base + 2.0).reshape(-1, 1))) - 4.0) <= 1e-6
    n = 100_000
    mu = np.array([1.0, -0.5, 2.0])
    s = np.array([1.5, 0.7, 1.0])
    a = rng.standard_normal((n, 3))
    b = rng.standard_normal((n, 3)) * s + mu
    expect = float(mu @ mu + ((1.0 - s) ** 2).sum())
    assert abs(E.fid(fs(a), fs(b)) - expect) <= 0.02 * expect
    base = rng.standard_normal((2000, 6))
    vals = [
        E.fid(fs(base), fs(base + rng.standard_normal(base.shape) * sigma))
        for sigma in (0.0, 0.1, 0.5, 1.0)
    ]
    assert all(u < v for u, v in zip(vals, vals[1:]))


def test_acceptance_recall_harness():
    """Echo mock 100% at 0.12/0.3; hand 3-target 66.67%/0%; monotone."""
    tgts = [[Box(i * 30, 0, 20, 20)] for i in range(4)]
    dets = [[E.Detection(box=t[0], confidence=1.0)] for t in tgts]
    assert E.recall(dets, tgts, 0.12) == 100.0
    assert E.recall(dets, tgts, 0.3) == 100.0

    tgts3 = [[Box(0, 0, 20, 20), Box(40, 0, 20, 20), Box(80, 0, 20, 20)]]
    dets3 = [[
        E.Detection(box=Box(0, 0, 20, 20), confidence=0.2),
        E.Detection(box=Box(40, 0, 20, 20), confidence=0.15),
        E.Detection(box=Box(80, 0, 20, 20), confidence=0.05),
    ]]
    assert abs(E.recall(dets3, tgts3, 0.12) - 66.67) <= 0.01
    assert E.recall(dets3, tgts3, 0.3) == 0.0

    rng = np.random.default_rng(5)
    rtgts, rdets = [], []
    for _ in range(30):
        t = Box(int(rng.integers(0, 100)), int(rng.integers(0, 100)), 20, 20)
        rtgts.append([t])
        rdets.append([
            E.Detection(
                box=Box(t.x + int(rng.integers(0, 8)), t.y, 20, 20),
                confidence=float(rng.uniform(0, 1)),
            )
        ])
    for series in (
        [E.recall(rdets, rtgts, c) for c in (0.0, 0.2, 0.5, 0.8)],
        [E.recall(rdets, rtgts, 0.12, iou) for iou in (0.1, 0.3, 0.5, 0.9)],
    ):
        assert all(u >= v for u, v in zip(series, series[1:]))


@pytest.mark.slow
def test_acceptance_determinism(toy_checkpoint_path, tmp_path):
    """Same seed/config: identical loss logs and identical PNG bytes."""
    from vehiclegen import cli

    rng = np.random.default_rng(6)
    scene = tmp_path / "scene.png"
    save_image(str(scene), smooth_image(rng))

    prepared = tmp_path / "prepared"
    prepared.mkdir()
    records = []
    for i in range(2):
        name = f"d{i}.png"
        save_image(str(prepared / name), smooth_image(rng, 180, 320))
        records.append(
            {"image": name,
             "labels": [{"category": "car",
                         "box2d": {"x1": 30, "y1": 40, "x2": 62, "y2": 64}}]}
        )
    (prepared / "annotations.json").write_text(json.dumps(records))
    (prepared / "stats.json").write_text(D.DatasetStats(2, 2, 2, 0.5).to_json())
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "snet_steps = 3\nbatch_size = 2\nchannel_scale = 0.25\ndeterministic = true\n"
    )

    logs, pngs = [], []
    for run in ("r1", "r2"):
        ck = tmp_path / run / "snet.npz"
        ck.parent.mkdir()
        rc = cli.main(["--config", str(cfg), "--seed", "11", "train-snet",
                       "--data", str(prepared), "--out", str(ck)])
        assert rc == 0
        logs.append((tmp_path / run / "snet_loss.csv").read_bytes())

        out = tmp_path / run / "gen"
        rc = cli.main(["--seed", "11", "generate", "--image", str(scene),
                       "--box", "10,10,24,18", "--ckpt", toy_checkpoint_path,
                       "--out", str(out)])
        assert rc == 0
        pngs.append((out / "composed.png").read_bytes())
    assert logs[0] == logs[1]
    assert pngs[0] == pngs[1]
