import cv2
import numpy as np
import pytest
import torch

from vehiclegen import networks, training
from vehiclegen.codec import build_codec
from vehiclegen.data import AnnotatedScene, make_sample
from vehiclegen.imaging import Box


@pytest.fixture(scope="session")
def codec():
    return build_codec()


def smooth_image(rng, h=64, w=64):
    img = cv2.GaussianBlur(rng.random((h, w, 3)), (0, 0), 3)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def toy_samples(n=10, seed=1, h=64, w=64):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        img = smooth_image(rng, h, w)
        box = Box(
            int(rng.integers(4, w // 2 - 2)),
            int(rng.integers(4, h // 2 - 2)),
            int(rng.integers(12, 30)),
            int(rng.integers(12, 20)),
        )
        scene = AnnotatedScene(f"s{i}", img, [box], (h, w))
        samples.append(make_sample(scene, box, 0.5))
    return samples


@pytest.fixture(scope="session")
def toy_checkpoint_path(tmp_path_factory):
    """Random-init small-width checkpoint with all four graphs."""
    torch.manual_seed(0)
    mods = networks.build_all(channel_scale=0.25, global_hw=(64, 64))
    ckpt = networks.checkpoint_from_modules(
        mods, step=0, config_hash="toy", meta={"channel_scale": 0.25, "fill": 0.5}
    )
    path = tmp_path_factory.mktemp("ckpt") / "toy.npz"
    networks.save_checkpoint(str(path), ckpt)
    return str(path)


@pytest.fixture(scope="session")
def toy_engine(toy_checkpoint_path, codec):
    from vehiclegen.inference import GenerationEngine

    return GenerationEngine(networks.load_checkpoint(toy_checkpoint_path), codec)
