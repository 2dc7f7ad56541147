"""Ingestion and sample assembly for box-annotated driving scenes.

Annotation files are JSON arrays mirroring the public BDD label shape:

    [{"image": "path/to.jpg",
      "labels": [{"category": "car",
                  "box2d": {"x1": ..., "y1": ..., "x2": ..., "y2": ...}}]}]

Only "car" boxes are kept. Scenes are resized to 320x180 and boxes scaled
accordingly (round-half-up, then clipped). The training size filter keeps a
box iff 10 <= w <= 64 and 10 <= h <= 50, applied after the resize.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

from .imaging import Box, crop_patch, erase, make_mask, resize_bilinear, rgb_to_gray, load_image

TARGET_W = 320
TARGET_H = 180

MIN_SIZE = 10
MAX_W = 64
MAX_H = 50


@dataclass
class AnnotatedScene:
    image_id: str
    image: np.ndarray           # RGB in [0,1]
    boxes: list[Box]
    source_dims: tuple[int, int]  # original (h, w)
    dropped_boxes: int = 0


@dataclass
class TrainingSample:
    image_id: str
    masked_gray: np.ndarray     # (H, W, 2): fill-erased gray + mask channel
    gray_target: np.ndarray     # (H, W)
    rgb_target: np.ndarray      # (H, W, 3)
    box: Box
    mask: np.ndarray            # (H, W)


@dataclass
class DatasetStats:
    n_scenes: int
    n_boxes_total: int
    n_boxes_kept: int
    mean_gray: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @staticmethod
    def from_json(text: str) -> "DatasetStats":
        return DatasetStats(**json.loads(text))


class AnnotationError(ValueError):
    pass


def _parse_box2d(image_id: str, rec: dict) -> Box:
    try:
        b = rec["box2d"]
        x1, y1, x2, y2 = float(b["x1"]), float(b["y1"]), float(b["x2"]), float(b["y2"])
    except (KeyError, TypeError) as exc:
        raise AnnotationError(f"{image_id}: malformed box2d record: {rec!r}") from exc
    if x2 <= x1 or y2 <= y1:
        raise AnnotationError(
            f"{image_id}: degenerate box2d (x1={x1}, y1={y1}, x2={x2}, y2={y2})"
        )
    x, y = int(round(x1)), int(round(y1))
    w, h = max(1, int(round(x2 - x1))), max(1, int(round(y2 - y1)))
    return Box(x=max(0, x), y=max(0, y), w=w, h=h)


def load_annotations(path: str, load_images: bool = True) -> list[AnnotatedScene]:
    """Read an annotation file; returns unscaled scenes with car boxes only."""
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise AnnotationError(f"{path}: expected a JSON array of scene records")
    root = os.path.dirname(os.path.abspath(path))
    scenes = []
    for rec in records:
        image_rel = rec.get("image")
        if not image_rel:
            raise AnnotationError(f"{path}: record missing 'image': {rec!r}")
        image_path = image_rel if os.path.isabs(image_rel) else os.path.join(root, image_rel)
        boxes = []
        for label in rec.get("labels", []):
            if str(label.get("category", "")).lower() != "car":
                continue
            boxes.append(_parse_box2d(image_rel, label))
        if load_images:
            if not os.path.exists(image_path):
                raise AnnotationError(f"{image_rel}: image file not found at {image_path}")
            image = load_image(image_path)
        else:
            image = None
        h, w = (image.shape[0], image.shape[1]) if image is not None else (0, 0)
        scenes.append(
            AnnotatedScene(
                image_id=os.path.splitext(os.path.basename(image_rel))[0],
                image=image,
                boxes=boxes,
                source_dims=(h, w),
            )
        )
    return scenes


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def prepare_scene(scene: AnnotatedScene, target_h: int = TARGET_H, target_w: int = TARGET_W) -> AnnotatedScene:
    """Resize to the working resolution and rescale boxes onto it."""
    src_h, src_w = scene.image.shape[:2]
    image = resize_bilinear(scene.image, target_h, target_w)
    sx = target_w / src_w
    sy = target_h / src_h
    boxes = []
    dropped = 0
    for b in scene.boxes:
        x = _round_half_up(b.x * sx)
        y = _round_half_up(b.y * sy)
        w = _round_half_up(b.w * sx)
        h = _round_half_up(b.h * sy)
        x = min(max(x, 0), target_w - 1)
        y = min(max(y, 0), target_h - 1)
        w = min(w, target_w - x)
        h = min(h, target_h - y)
        if w < 1 or h < 1:
            dropped += 1
            continue
        boxes.append(Box(x=x, y=y, w=w, h=h))
    return AnnotatedScene(
        image_id=scene.image_id,
        image=image,
        boxes=boxes,
        source_dims=(src_h, src_w),
        dropped_boxes=scene.dropped_boxes + dropped,
    )


def box_passes_filter(w: int, h: int) -> bool:
    """Training size rule: at least 10px each side, at most 64 wide / 50 tall."""
    return w >= MIN_SIZE and h >= MIN_SIZE and w <= MAX_W and h <= MAX_H


def filter_boxes(scene: AnnotatedScene) -> AnnotatedScene:
    kept = [b for b in scene.boxes if box_passes_filter(b.w, b.h)]
    return AnnotatedScene(
        image_id=scene.image_id,
        image=scene.image,
        boxes=kept,
        source_dims=scene.source_dims,
        dropped_boxes=scene.dropped_boxes,
    )


def make_sample(scene: AnnotatedScene, box: Box, fill: float) -> TrainingSample:
    gray = rgb_to_gray(scene.image)
    mask = make_mask(box, gray.shape[0], gray.shape[1])
    masked = erase(gray, mask, fill)
    return TrainingSample(
        image_id=scene.image_id,
        masked_gray=np.stack([masked, mask], axis=-1),
        gray_target=gray,
        rgb_target=scene.image,
        box=box,
        mask=mask,
    )


def compute_stats(scenes_total_boxes: int, prepared: list[AnnotatedScene]) -> DatasetStats:
    kept = sum(len(s.boxes) for s in prepared)
    grays = [rgb_to_gray(s.image) for s in prepared]
    mean_gray = float(np.mean([g.mean() for g in grays])) if grays else 0.5
    return DatasetStats(
        n_scenes=len(prepared),
        n_boxes_total=scenes_total_boxes,
        n_boxes_kept=kept,
        mean_gray=mean_gray,
    )


def all_samples(prepared: list[AnnotatedScene], fill: float) -> list[TrainingSample]:
    samples = []
    for scene in prepared:
        for box in scene.boxes:
            samples.append(make_sample(scene, box, fill))
    return samples


def iterate_batches(
    samples: list[TrainingSample], batch_size: int, seed: int
) -> Iterator[list[TrainingSample]]:
    """One epoch of shuffled batches; deterministic under a fixed seed."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        yield [samples[i] for i in order[start : start + batch_size]]
