"""Quantitative assessment: detector recall over generated regions and FID
between generated and real patch feature sets.

Recall matching: detections sorted by confidence descending are greedily
assigned to the unmatched target with highest IoU >= threshold (standard
detection-benchmark convention); each detection matches at most one
target. Detections that match no target are ignored - no precision is
computed.

FID: ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)) with unbiased
covariances; the matrix square root is symmetrized and tiny negative
eigenvalues are clipped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
import scipy.linalg

from .data import AnnotatedScene
from .imaging import Box, crop_patch, resize_bilinear

DEFAULT_CONF_THRESHOLDS = (0.12, 0.3)
DEFAULT_IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class Detection:
    box: Box
    confidence: float
    category: str = "car"

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0,1]")


@dataclass
class FeatureSet:
    features: np.ndarray  # (n, dim)
    extractor_id: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.features.shape[0] < 2:
            raise ValueError("need at least 2 feature rows for covariance")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class EvalReport:
    recall_by_threshold: dict[float, float]
    fid: float
    n_targets: int
    n_matched_by_threshold: dict[float, int]
    iou_threshold: float
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "recall_by_threshold": {str(k): v for k, v in self.recall_by_threshold.items()},
                "fid": self.fid,
                "n_targets": self.n_targets,
                "n_matched_by_threshold": {
                    str(k): v for k, v in self.n_matched_by_threshold.items()
                },
                "iou_threshold": self.iou_threshold,
                "config": self.config,
            },
            indent=2,
        )

    def render_table(self) -> str:
        lines = ["Recall of generated regions (%)", "conf_threshold  recall"]
        for t in sorted(self.recall_by_threshold):
            lines.append(f"{t:<15} {self.recall_by_threshold[t]:.2f}")
        lines.append("")
        lines.append(f"FID (generated vs real patches): {self.fid:.2f}")
        return "\n".join(lines)


def iou(a: Box, b: Box) -> float:
    x1 = max(a.x, b.x)
    y1 = max(a.y, b.y)
    x2 = min(a.x + a.w, b.x + b.w)
    y2 = min(a.y + a.h, b.y + b.h)
    inter = max(0, x2 - x1) * max(0, y2 - y1)
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def match_targets(
    detections: Sequence[Detection],
    targets: Sequence[Box],
    conf_threshold: float,
    iou_threshold: float,
) -> list[int | None]:
    """Greedy confidence-descending assignment; returns per-target detection index."""
    matched: list[int | None] = [None] * len(targets)
    order = sorted(
        range(len(detections)), key=lambda i: (-detections[i].confidence, i)
    )
    for di in order:
        det = detections[di]
        if det.confidence < conf_threshold:
            continue
        best_ti, best_iou = None, iou_threshold
        for ti, tgt in enumerate(targets):
            if matched[ti] is not None:
                continue
            v = iou(det.box, tgt)
            if v >= best_iou:
                best_ti, best_iou = ti, v
        if best_ti is not None:
            matched[best_ti] = di
    return matched


def recall(
    detections_per_image: Sequence[Sequence[Detection]],
    targets_per_image: Sequence[Sequence[Box]],
    conf_threshold: float,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> float:
    """Percentage of target boxes matched by a confident enough detection."""
    if not 0.0 <= conf_threshold <= 1.0 or not 0.0 <= iou_threshold <= 1.0:
        raise ValueError("thresholds must lie in [0,1]")
    total = sum(len(t) for t in targets_per_image)
    if total == 0:
        raise ValueError("recall is undefined with zero targets")
    hit = 0
    for dets, tgts in zip(detections_per_image, targets_per_image):
        matched = match_targets(dets, tgts, conf_threshold, iou_threshold)
        hit += sum(1 for m in matched if m is not None)
    return 100.0 * hit / total


def _stable_sqrtm(mat: np.ndarray) -> np.ndarray:
    root = scipy.linalg.sqrtm(mat)
    if np.iscomplexobj(root):
        root = root.real
    root = (root + root.T) / 2.0
    w, v = np.linalg.eigh(root)
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T


def fid(a: FeatureSet, b: FeatureSet) -> float:
    if a.dim != b.dim:
        raise ValueError(f"feature dims differ: {a.dim} vs {b.dim}")
    if a.extractor_id != b.extractor_id:
        raise ValueError(
            f"extractor mismatch: {a.extractor_id!r} vs {b.extractor_id!r}"
        )
    mu_a = a.features.mean(axis=0)
    mu_b = b.features.mean(axis=0)
    cov_a = np.cov(a.features, rowvar=False).reshape(a.dim, a.dim)
    cov_b = np.cov(b.features, rowvar=False).reshape(b.dim, b.dim)
    diff = mu_a - mu_b
    covmean = _stable_sqrtm(cov_a @ cov_b)
    return float(diff @ diff + np.trace(cov_a + cov_b - 2.0 * covmean))


class FeatureExtractor(Protocol):
    """Adapter for a pooled-feature backbone."""

    extractor_id: str
    input_size: int

    def __call__(self, patches: np.ndarray) -> np.ndarray:
        """(n, input_size, input_size, 3) in [0,1] -> (n, dim) features."""
        ...


class RandomProjectionExtractor:
    """Deterministic mock: flatten a downsized crop through a fixed random
    projection. Stands in for Inception pool features in desk-scale tests."""

    def __init__(self, input_size: int = 16, dim: int = 64, seed: int = 0):
        self.input_size = input_size
        self.dim = dim
        self.extractor_id = f"randproj-{input_size}-{dim}-{seed}"
        rng = np.random.default_rng(seed)
        self._proj = rng.standard_normal((input_size * input_size * 3, dim)) / np.sqrt(
            input_size * input_size * 3
        )

    def __call__(self, patches: np.ndarray) -> np.ndarray:
        flat = np.asarray(patches, dtype=np.float64).reshape(len(patches), -1)
        return flat @ self._proj


def extract_patch_features(
    images: Sequence[np.ndarray],
    boxes: Sequence[Box],
    extractor: FeatureExtractor,
) -> FeatureSet:
    """Crop each box exactly (no context), resize, run the extractor."""
    crops = []
    for i, (img, box) in enumerate(zip(images, boxes)):
        try:
            patch = crop_patch(img, box)
            crops.append(resize_bilinear(patch, extractor.input_size, extractor.input_size))
        except Exception as exc:
            raise RuntimeError(f"feature extraction failed on image {i}: {exc}") from exc
    features = extractor(np.stack(crops))
    return FeatureSet(features=features, extractor_id=extractor.extractor_id)


DetectorAdapter = Callable[[np.ndarray], list[Detection]]
"""Given an RGB image in [0,1], return detections."""


def run_eval(
    scenes: Sequence[AnnotatedScene],
    engine,
    detector: DetectorAdapter,
    extractor: FeatureExtractor,
    conf_thresholds: Sequence[float] = DEFAULT_CONF_THRESHOLDS,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> EvalReport:
    """Substitute every kept box, detect on composed images, report recall
    at each confidence threshold plus FID between generated and real patches.
    """
    detections_per_image: list[list[Detection]] = []
    targets_per_image: list[list[Box]] = []
    gen_images, gen_boxes, real_images, real_boxes = [], [], [], []
    done = 0
    for scene in scenes:
        for bi, box in enumerate(scene.boxes):
            try:
                result = engine.substitute_existing(scene, bi)
                dets = detector(result.composed)
            except Exception as exc:
                raise RuntimeError(
                    f"evaluation aborted at scene {scene.image_id} box {bi} "
                    f"({done} boxes done): {exc}"
                ) from exc
            detections_per_image.append(
                [d for d in dets if d.category.lower() == "car"]
            )
            targets_per_image.append([box])
            gen_images.append(result.composed)
            gen_boxes.append(box)
            real_images.append(scene.image)
            real_boxes.append(box)
            done += 1
    recalls = {}
    matched = {}
    n_targets = sum(len(t) for t in targets_per_image)
    for t in conf_thresholds:
        r = recall(detections_per_image, targets_per_image, t, iou_threshold)
        recalls[t] = r
        matched[t] = round(r * n_targets / 100.0)
    gen_feats = extract_patch_features(gen_images, gen_boxes, extractor)
    real_feats = extract_patch_features(real_images, real_boxes, extractor)
    return EvalReport(
        recall_by_threshold=recalls,
        fid=fid(gen_feats, real_feats),
        n_targets=n_targets,
        n_matched_by_threshold=matched,
        iou_threshold=iou_threshold,
        config={
            "conf_thresholds": list(conf_thresholds),
            "extractor_id": extractor.extractor_id,
        },
    )
