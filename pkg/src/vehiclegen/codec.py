"""The 313-class ab quantization used by the colorization classifier.

The ab plane is divided into 10x10 cells with edges on multiples of 10
over [-110, 110). A cell is strictly in-gamut when at least one 8-bit sRGB
color lands in it (exhaustive 256^3 sweep). That sweep yields fewer than
313 cells, so the class set is completed deterministically: boundary cells
are added in order of increasing distance from the swept gamut until the
class count reaches exactly 313. The result is a versioned text fixture;
all builds share it.

Class ids are assigned in row-major (a, then b) cell order. Ties anywhere
(equidistant centers, argmax ties) break toward the lowest class id.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np

from .imaging import rgb_to_lab, resize_area

NUM_CLASSES = 313
GRID_STEP = 10
GRID_MIN = -110
GRID_MAX = 110
FIXTURE_NAME = "ab_bins_v1.txt"


@dataclass(frozen=True)
class ColorBinCodec:
    """Immutable ab-bin table: 313 cell centers plus a grid lookup."""

    centers: np.ndarray        # (313, 2) float, cell centers (a, b)
    cell_index: np.ndarray     # (22, 22) int, class id per grid cell, -1 if absent
    in_gamut_count: int        # cells occupied by the strict sRGB sweep

    @property
    def count(self) -> int:
        return len(self.centers)

    def class_of_cell(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
        return self.cell_index[ia, ib]


def _cell_indices(ab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.floor((np.asarray(ab, dtype=np.float64) - GRID_MIN) / GRID_STEP).astype(int)
    n = (GRID_MAX - GRID_MIN) // GRID_STEP
    idx = np.clip(idx, 0, n - 1)
    return idx[..., 0], idx[..., 1]


def sweep_gamut_cells(step: int = 1) -> np.ndarray:
    """Mark every ab grid cell touched by the 8-bit sRGB cube.

    Returns a boolean (22, 22) occupancy grid. `step` subsamples the cube
    axis (step=1 is the exhaustive 256^3 sweep used for the fixture).
    """
    vals = np.arange(0, 256, step)
    if vals[-1] != 255:
        vals = np.append(vals, 255)
    n = (GRID_MAX - GRID_MIN) // GRID_STEP
    occupied = np.zeros((n, n), dtype=bool)
    r = vals[:, None, None]
    for gv in vals:
        g = np.full_like(r, gv)
        b = vals[None, None, :]
        rgb = np.stack(np.broadcast_arrays(r, g, b), axis=-1).reshape(-1, 3) / 255.0
        ab = rgb_to_lab(rgb)[:, 1:]
        ia, ib = _cell_indices(ab)
        occupied[ia, ib] = True
    return occupied


def build_bin_table(occupied: np.ndarray) -> tuple[np.ndarray, int]:
    """Complete the strict-gamut occupancy grid to exactly NUM_CLASSES cells.

    Returns (selected boolean grid, strict in-gamut count). Raises if the
    strict sweep already exceeds NUM_CLASSES.
    """
    n = occupied.shape[0]
    strict = int(occupied.sum())
    if strict > NUM_CLASSES:
        raise RuntimeError(
            f"gamut sweep produced {strict} cells, more than {NUM_CLASSES}"
        )
    selected = occupied.copy()
    if strict < NUM_CLASSES:
        centers = GRID_MIN + GRID_STEP * (np.indices((n, n)).transpose(1, 2, 0) + 0.5)
        occ_pts = centers[occupied].reshape(-1, 2)
        cand = ~occupied
        cand_pts = centers[cand].reshape(-1, 2)
        d = np.sqrt(((cand_pts[:, None, :] - occ_pts[None, :, :]) ** 2).sum(-1)).min(1)
        cand_ia, cand_ib = np.nonzero(cand)
        # deterministic: by distance to gamut, then row-major cell order
        order = np.lexsort((cand_ib, cand_ia, d))
        take = order[: NUM_CLASSES - strict]
        selected[cand_ia[take], cand_ib[take]] = True
    return selected, strict


def _codec_from_grid(selected: np.ndarray, strict: int) -> ColorBinCodec:
    n = selected.shape[0]
    cell_index = np.full((n, n), -1, dtype=int)
    ia, ib = np.nonzero(selected)
    count = len(ia)
    if count != NUM_CLASSES:
        raise RuntimeError(
            f"bin enumeration produced {count} classes, expected {NUM_CLASSES}"
        )
    cell_index[ia, ib] = np.arange(count)
    centers = np.stack(
        [GRID_MIN + GRID_STEP * (ia + 0.5), GRID_MIN + GRID_STEP * (ib + 0.5)], axis=-1
    ).astype(np.float64)
    return ColorBinCodec(centers=centers, cell_index=cell_index, in_gamut_count=strict)


def generate_fixture_text(step: int = 1) -> str:
    """Run the gamut sweep and render the versioned fixture file."""
    occupied = sweep_gamut_cells(step=step)
    selected, strict = build_bin_table(occupied)
    codec = _codec_from_grid(selected, strict)
    lines = [
        "# ab color bin fixture v1",
        "# 10-step grid over [-110,110); centers of selected cells, class id order",
        f"count {codec.count}",
        f"in_gamut {codec.in_gamut_count}",
    ]
    for a, b in codec.centers:
        lines.append(f"{a:.1f} {b:.1f}")
    return "\n".join(lines) + "\n"


def load_codec_text(text: str) -> ColorBinCodec:
    count = None
    strict = None
    centers = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("count "):
            count = int(line.split()[1])
        elif line.startswith("in_gamut "):
            strict = int(line.split()[1])
        else:
            a, b = line.split()
            centers.append((float(a), float(b)))
    if count is None or strict is None:
        raise ValueError("fixture missing count/in_gamut header")
    if len(centers) != count or count != NUM_CLASSES:
        raise ValueError(f"fixture has {len(centers)} centers, expected {NUM_CLASSES}")
    centers = np.array(centers, dtype=np.float64)
    n = (GRID_MAX - GRID_MIN) // GRID_STEP
    selected = np.zeros((n, n), dtype=bool)
    ia, ib = _cell_indices(centers)
    selected[ia, ib] = True
    codec = _codec_from_grid(selected, strict)
    if not np.allclose(codec.centers, centers):
        raise ValueError("fixture centers are not in canonical class-id order")
    return codec


def build_codec() -> ColorBinCodec:
    """Load the shipped gamut fixture (regenerate with the make-codec tool)."""
    text = (
        importlib.resources.files("vehiclegen")
        .joinpath("fixtures", FIXTURE_NAME)
        .read_text()
    )
    return load_codec_text(text)


def encode(ab_image: np.ndarray, codec: ColorBinCodec) -> np.ndarray:
    """Map each (a,b) pixel to the class of the nearest bin center.

    Grid lookup covers cells that own a class; pixels falling in a cell
    without a class (possible for out-of-gamut inputs) fall back to a
    linear scan over all centers.
    """
    ab = np.asarray(ab_image, dtype=np.float64)
    ia, ib = _cell_indices(ab)
    cls = codec.cell_index[ia, ib]
    missing = cls < 0
    if np.any(missing):
        pts = ab[missing].reshape(-1, 2)
        d2 = ((pts[:, None, :] - codec.centers[None, :, :]) ** 2).sum(-1)
        cls[missing] = np.argmin(d2, axis=-1)
    return cls


def decode(dist: np.ndarray, codec: ColorBinCodec) -> np.ndarray:
    """Argmax-decode a (H, W, 313) distribution to an (H, W, 2) ab plane."""
    dist = np.asarray(dist)
    if dist.shape[-1] != codec.count:
        raise ValueError(f"distribution depth {dist.shape[-1]} != {codec.count}")
    cls = np.argmax(dist, axis=-1)  # np.argmax takes the first (lowest id) on ties
    return codec.centers[cls]


def decode_classes(cls: np.ndarray, codec: ColorBinCodec) -> np.ndarray:
    return codec.centers[np.asarray(cls, dtype=int)]


def ce_target(gt_lab_patch: np.ndarray, out_h: int, out_w: int, codec: ColorBinCodec) -> np.ndarray:
    """Cross-entropy target at the classifier's native output resolution.

    Area-averages the ground-truth ab planes down to (out_h, out_w), then
    encodes the averaged colors.
    """
    ab = np.asarray(gt_lab_patch, dtype=np.float64)[..., 1:]
    small = resize_area(ab, out_h, out_w)
    return encode(small, codec)
