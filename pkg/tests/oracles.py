"""Slow, independent reference implementations used only by the tests."""

import math

import numpy as np


def psi(pos, neg):
    if pos > neg:
        return 1.0
    if pos == neg:
        return 0.5
    return 0.0


def pairwise_psi_sum(labels, scores):
    """Sum of psi over all (positive, negative) pairs, plus (m, n)."""
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    return sum(psi(x, y) for x in pos for y in neg), len(pos), len(neg)


def pairwise_auc(labels, scores):
    total, m, n = pairwise_psi_sum(labels, scores)
    return total / (m * n)


def pairwise_components(labels, scores):
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    v10 = [sum(psi(x, y) for y in neg) / len(neg) for x in pos]
    v01 = [sum(psi(x, y) for x in pos) / len(pos) for y in neg]
    return v10, v01


def bilinear_reference(img, out_h, out_w):
    """Per-pixel bilinear sampling at pixel centers, edges clamped."""
    in_h, in_w = img.shape
    out = np.empty((out_h, out_w))
    for i in range(out_h):
        sy = min(max((i + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, in_h - 1)
        wy = sy - y0
        for j in range(out_w):
            sx = min(max((j + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, in_w - 1)
            wx = sx - x0
            v = ((1 - wy) * ((1 - wx) * img[y0, x0] + wx * img[y0, x1])
                 + wy * ((1 - wx) * img[y1, x0] + wx * img[y1, x1]))
            out[i, j] = v / 255.0
    return out


def crop_reference(image, bbox, margin):
    """Pixel-by-pixel square crop: copy in-bounds pixels, zero elsewhere."""
    xmin, ymin, xmax, ymax = bbox
    w = xmax - xmin + 2 * margin
    h = ymax - ymin + 2 * margin
    side = max(w, h, 1)
    x0 = xmin - margin - (side - w) // 2
    y0 = ymin - margin - (side - h) // 2
    out = np.zeros((side, side), dtype=image.dtype)
    H, W = image.shape
    for r in range(side):
        for c in range(side):
            yy, xx = y0 + r, x0 + c
            if 0 <= yy < H and 0 <= xx < W:
                out[r, c] = image[yy, xx]
    return out, x0, y0, side


def finite_difference(loss_fn, params, index, step=1e-5):
    """Central difference of ``loss_fn()`` w.r.t. ``params.flat[index]`` (restored after)."""
    old = params.flat[index]
    params.flat[index] = old + step
    up = loss_fn()
    params.flat[index] = old - step
    down = loss_fn()
    params.flat[index] = old
    return (up - down) / (2 * step)
