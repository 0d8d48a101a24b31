"""Caliper localization, square crop with margin, and bilinear resize.

Images are 2-d ``uint8`` numpy arrays indexed ``[y, x]``. Points are
``(x, y)`` pixel coordinates. Bounding boxes are ``(xmin, ymin, xmax, ymax)``
and the crop treats them as continuous extents, so a box from 100 to 150
is 50 pixels wide before the margin is added.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image
from skimage.feature import match_template

Point = Tuple[int, int]
BBox = Tuple[int, int, int, int]

NCC_THRESHOLD = 0.5


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class CaliperSet:
    points: Tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((int(x), int(y)) for x, y in self.points))
        if len(self.points) not in (2, 4):
            raise ValueError(f"expected 2 or 4 calipers, got {len(self.points)}")

    def check_inside(self, shape) -> None:
        h, w = shape
        for x, y in self.points:
            if not (0 <= x < w and 0 <= y < h):
                raise ValueError(f"caliper ({x}, {y}) outside a {w}x{h} image")

    def to_json(self) -> str:
        return json.dumps({"points": [list(p) for p in self.points]})

    @classmethod
    def from_json(cls, text: str) -> "CaliperSet":
        return cls(tuple(tuple(p) for p in json.loads(text)["points"]))


@dataclass(frozen=True)
class CropBox:
    x0: int
    y0: int
    side: int
    pad_left: bool
    pad_top: bool
    pad_right: bool
    pad_bottom: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def read_pgm(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: expected an 8-bit grayscale image, got mode {im.mode}")
        return np.array(im, dtype=np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Write binary PGM (P5, maxval 255)."""
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="L").save(path, format="PPM")


def detect_calipers(image: np.ndarray, template: np.ndarray, expected: int = 4,
                    threshold: float = NCC_THRESHOLD) -> CaliperSet:
    """Locate ``expected`` markers as the strongest normalized cross-correlation peaks.

    Peaks are taken greedily; after each pick, a square of half-width
    ``max(template.shape)`` around it is suppressed. Returns template-center
    coordinates (odd-sized templates give exact centers).
    """
    if expected not in (2, 4):
        raise ValueError("expected must be 2 or 4")
    if template.shape[0] >= image.shape[0] or template.shape[1] >= image.shape[1]:
        raise ValueError("template must be smaller than the image")
    ncc = match_template(image.astype(np.float64), template.astype(np.float64), pad_input=True)
    ncc = np.where(np.isfinite(ncc), ncc, 0.0)
    radius = max(template.shape)
    h, w = ncc.shape
    points: List[Point] = []
    for _ in range(expected):
        flat = int(np.argmax(ncc))
        y, x = divmod(flat, w)
        if ncc[y, x] < threshold:
            raise DetectionError(
                f"found {len(points)} caliper(s) with correlation >= {threshold}, expected {expected}")
        points.append((x, y))
        ncc[max(0, y - radius):y + radius + 1, max(0, x - radius):x + radius + 1] = -np.inf
    return CaliperSet(tuple(points))


def caliper_bbox(calipers) -> BBox:
    pts = calipers.points if isinstance(calipers, CaliperSet) else tuple(calipers)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return min(xs), min(ys), max(xs), max(ys)


def square_crop_with_margin(image: np.ndarray, bbox: BBox, margin: int = 32) -> Tuple[np.ndarray, CropBox]:
    """Square crop around ``bbox`` grown by ``margin``; zero-padded outside the image.

    The longer expanded side sets the square size and the shorter extent is
    centered in it (odd slack goes to the far edge).
    """
    h, w = image.shape
    xmin, ymin, xmax, ymax = bbox
    if not (0 <= xmin <= xmax < w and 0 <= ymin <= ymax < h):
        raise ValueError(f"bbox {bbox} not inside a {w}x{h} image")
    if margin < 0:
        raise ValueError("margin must be non-negative")
    x_lo, x_hi = xmin - margin, xmax + margin
    y_lo, y_hi = ymin - margin, ymax + margin
    side = max(x_hi - x_lo, y_hi - y_lo, 1)
    x0 = x_lo - (side - (x_hi - x_lo)) // 2
    y0 = y_lo - (side - (y_hi - y_lo)) // 2

    out = np.zeros((side, side), dtype=image.dtype)
    sx0, sy0 = max(x0, 0), max(y0, 0)
    sx1, sy1 = min(x0 + side, w), min(y0 + side, h)
    if sx1 > sx0 and sy1 > sy0:
        out[sy0 - y0:sy1 - y0, sx0 - x0:sx1 - x0] = image[sy0:sy1, sx0:sx1]
    box = CropBox(x0=x0, y0=y0, side=side, pad_left=x0 < 0, pad_top=y0 < 0,
                  pad_right=x0 + side > w, pad_bottom=y0 + side > h)
    return out, box


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image: np.ndarray, out_w: int = 160, out_h: int = 160) -> np.ndarray:
    """Pixel-center bilinear resize, returned as float64 scaled to [0, 1]."""
    if image.size == 0:
        raise ValueError("empty image")
    img = image.astype(np.float64)
    y0, y1, fy = _axis_weights(img.shape[0], out_h)
    x0, x1, fx = _axis_weights(img.shape[1], out_w)
    fx = fx[None, :]
    # lerp as a + (b - a) * t: exact when a == b and never overshoots [a, b]
    top = img[y0][:, x0] + (img[y0][:, x1] - img[y0][:, x0]) * fx
    bot = img[y1][:, x0] + (img[y1][:, x1] - img[y1][:, x0]) * fx
    out = top + (bot - top) * fy[:, None]
    # second pass works on non-integers; pin any 1-ulp excursion
    np.clip(out, img.min(), img.max(), out=out)
    return out / 255.0


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8)


def preprocess(image: np.ndarray, calipers: CaliperSet, margin: int = 32, size: int = 160):
    """Calipers to network input: bbox, square crop, resize. Returns ``(input, CropBox)``."""
    calipers.check_inside(image.shape)
    crop, box = square_crop_with_margin(image, caliper_bbox(calipers), margin)
    return resize_bilinear(crop, size, size), box


def load_calipers(path) -> CaliperSet:
    return CaliperSet.from_json(Path(path).read_text())
