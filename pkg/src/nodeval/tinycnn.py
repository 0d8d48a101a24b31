"""Numpy implementation of the nodule classification network.

Six 3x3 same-padded convolutions, each followed by ReLU; 2x2/stride-2 max
pooling after the first five; inverted dropout (rate 0.5, training only) on
the flattened features; one fully connected unit; sigmoid. A 160x160 input
reaches the fully connected layer as a 5x5 map.

Pooling uses ceil mode (odd or 1-pixel maps keep their trailing row/column),
which is identical to plain 2x2 pooling on 160x160 and lets reduced models
with small inputs keep the same six-conv/five-pool topology.
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MAGIC = b"TCNN1"
DEFAULT_CHANNELS = (16, 32, 48, 64, 80, 96)
N_CONV = 6
N_POOL = 5
DROPOUT = 0.5
P_CLAMP = 1e-12


class WeightsFormatError(ValueError):
    pass


def final_size(input_size: int) -> int:
    s = input_size
    for _ in range(N_POOL):
        s = -(-s // 2)
    return s


@dataclass
class CnnModel:
    channels: tuple
    conv_w: List[np.ndarray]
    conv_b: List[np.ndarray]
    fc_w: np.ndarray
    fc_b: np.ndarray
    input_size: int = 160
    dropout: float = field(default=DROPOUT)

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.channels) != N_CONV:
            raise ValueError(f"need {N_CONV} conv widths, got {len(self.channels)}")
        c_in = 1
        for k, (w, b, c) in enumerate(zip(self.conv_w, self.conv_b, self.channels), start=1):
            if w.shape != (c, c_in, 3, 3) or b.shape != (c,):
                raise ValueError(f"conv{k}: weight {w.shape} / bias {b.shape} do not match {c} channels from {c_in}")
            c_in = c
        if self.fc_w.shape != (self.fc_in,) or self.fc_b.shape != (1,):
            raise ValueError(f"fc: weight {self.fc_w.shape} does not match input size {self.fc_in}")

    @property
    def fc_in(self) -> int:
        return self.channels[-1] * final_size(self.input_size) ** 2

    def parameters(self) -> List[np.ndarray]:
        """Tensors in declaration order: conv1 w, conv1 b, ..., conv6 b, fc w, fc b."""
        out = []
        for w, b in zip(self.conv_w, self.conv_b):
            out += [w, b]
        return out + [self.fc_w, self.fc_b]

    @classmethod
    def zeros(cls, channels: Sequence[int] = DEFAULT_CHANNELS, input_size: int = 160) -> "CnnModel":
        ins = (1,) + tuple(channels[:-1])
        return cls(
            channels=tuple(channels),
            conv_w=[np.zeros((c, ci, 3, 3)) for c, ci in zip(channels, ins)],
            conv_b=[np.zeros(c) for c in channels],
            fc_w=np.zeros(channels[-1] * final_size(input_size) ** 2),
            fc_b=np.zeros(1),
            input_size=input_size,
        )

    @classmethod
    def random(cls, channels: Sequence[int] = DEFAULT_CHANNELS, input_size: int = 160,
               seed: int = 0, bias: float = 0.01) -> "CnnModel":
        """He-normal initialization with a small positive bias."""
        rng = np.random.default_rng(seed)
        model = cls.zeros(channels, input_size)
        for w, b in zip(model.conv_w, model.conv_b):
            w[...] = rng.normal(0.0, math.sqrt(2.0 / (w.shape[1] * 9)), size=w.shape)
            b[...] = bias
        model.fc_w[...] = rng.normal(0.0, math.sqrt(1.0 / model.fc_in), size=model.fc_w.shape)
        return model


@dataclass(frozen=True)
class NoduleInference:
    p_transverse: float
    p_longitudinal: float
    p_fused: float


def _im2col(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # c, h, w, 3, 3
    return win.transpose(0, 3, 4, 1, 2).reshape(c * 9, h * w)


def _col2im(cols: np.ndarray, c: int, h: int, w: int) -> np.ndarray:
    cols = cols.reshape(c, 3, 3, h, w)
    dxp = np.zeros((c, h + 2, w + 2))
    for ky in range(3):
        for kx in range(3):
            dxp[:, ky:ky + h, kx:kx + w] += cols[:, ky, kx]
    return dxp[:, 1:-1, 1:-1]


def _pool(x: np.ndarray):
    c, h, w = x.shape
    h2, w2 = -(-h // 2), -(-w // 2)
    xp = np.full((c, 2 * h2, 2 * w2), -np.inf)
    xp[:, :h, :w] = x
    win = xp.reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    arg = win.argmax(axis=-1)
    return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0], arg


def _unpool(dy: np.ndarray, arg: np.ndarray, h: int, w: int) -> np.ndarray:
    c, h2, w2 = dy.shape
    win = np.zeros((c, h2, w2, 4))
    np.put_along_axis(win, arg[..., None], dy[..., None], axis=-1)
    dx = win.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * h2, 2 * w2)
    return dx[:, :h, :w]


def sigmoid(z: float) -> float:
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        e = math.exp(z)
        p = e / (1.0 + e)
    # keep the output strictly inside (0, 1) even for saturated logits
    return min(max(p, 5e-324), 1.0 - 2.0 ** -53)


def _check(model: CnnModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    s = model.input_size
    if x.shape != (s, s):
        raise ValueError(f"input must be {s}x{s}, got {x.shape}")
    if not all(np.isfinite(p).all() for p in model.parameters()):
        raise ValueError("model has non-finite weights")
    return x


def _dropout_mask(n: int, rate: float, seed: int) -> np.ndarray:
    keep = np.random.default_rng(seed).random(n) >= rate
    return keep / (1.0 - rate)


def _forward(model: CnnModel, x: np.ndarray, dropout_seed: Optional[int], keep_cache: bool):
    a = x[None]
    cache = []
    for k, (w, b) in enumerate(zip(model.conv_w, model.conv_b)):
        c, h, wd = a.shape
        cols = _im2col(a)
        z = (w.reshape(w.shape[0], -1) @ cols + b[:, None]).reshape(w.shape[0], h, wd)
        r = np.maximum(z, 0.0)
        arg = None
        if k < N_POOL:
            a, arg = _pool(r)
        else:
            a = r
        if keep_cache:
            cache.append((cols, z, arg, (c, h, wd)))
    feat = a.reshape(-1)
    mask = None
    if dropout_seed is not None:
        mask = _dropout_mask(feat.size, model.dropout, dropout_seed)
        feat = feat * mask
    logit = float(model.fc_w @ feat + model.fc_b[0])
    return logit, feat, mask, a.shape, cache


def forward(model: CnnModel, x: np.ndarray, dropout_seed: Optional[int] = None) -> float:
    """Malignancy probability for one preprocessed view.

    ``dropout_seed=None`` is inference mode (deterministic, no dropout);
    an integer enables training-mode inverted dropout with that mask seed.
    """
    x = _check(model, x)
    logit, *_ = _forward(model, x, dropout_seed, keep_cache=False)
    return sigmoid(logit)


def trace(model: CnnModel, x: np.ndarray) -> List[dict]:
    """Inference-mode activations per conv block: ``relu`` output and, where a pool follows, ``pooled``."""
    x = _check(model, x)
    a = x[None]
    out = []
    for k, (w, b) in enumerate(zip(model.conv_w, model.conv_b)):
        _, h, wd = a.shape
        r = np.maximum((w.reshape(w.shape[0], -1) @ _im2col(a) + b[:, None]).reshape(w.shape[0], h, wd), 0.0)
        step = {"relu": r}
        if k < N_POOL:
            step["pooled"], _ = _pool(r)
            a = step["pooled"]
        else:
            a = r
        out.append(step)
    return out


def bce_loss(p: float, target: int) -> float:
    p = min(max(p, P_CLAMP), 1.0 - P_CLAMP)
    return -(target * math.log(p) + (1 - target) * math.log(1.0 - p))


def backward(model: CnnModel, x: np.ndarray, target: int, dropout_seed: Optional[int] = None):
    """Binary cross-entropy loss and its gradients, ordered like ``model.parameters()``."""
    if target not in (0, 1):
        raise ValueError("target must be 0 or 1")
    x = _check(model, x)
    logit, feat, mask, last_shape, cache = _forward(model, x, dropout_seed, keep_cache=True)
    p = sigmoid(logit)
    loss = bce_loss(p, target)

    dlogit = p - target
    g_fc_w = dlogit * feat
    g_fc_b = np.array([dlogit])
    dfeat = dlogit * model.fc_w
    if mask is not None:
        dfeat = dfeat * mask
    da = dfeat.reshape(last_shape)

    grads = []
    for k in range(N_CONV - 1, -1, -1):
        cols, z, arg, (c, h, wd) = cache[k]
        w = model.conv_w[k]
        dr = _unpool(da, arg, h, wd) if arg is not None else da
        dz = (dr * (z > 0)).reshape(w.shape[0], -1)
        grads.append(dz.sum(axis=1))
        grads.append((dz @ cols.T).reshape(w.shape))
        da = _col2im(w.reshape(w.shape[0], -1).T @ dz, c, h, wd)
    grads.reverse()
    return loss, grads + [g_fc_w, g_fc_b]


def train_step(model: CnnModel, x: np.ndarray, target: int, lr: float = 1e-3,
               dropout_seed: Optional[int] = None) -> float:
    """One plain gradient-descent update in place; returns the pre-update loss."""
    loss, grads = backward(model, x, target, dropout_seed)
    for p, g in zip(model.parameters(), grads):
        p -= lr * g
    return loss


def fuse_views(p_transverse: float, p_longitudinal: float) -> float:
    return (p_transverse + p_longitudinal) / 2.0


def infer_nodule(model: CnnModel, transverse: np.ndarray, longitudinal: np.ndarray) -> NoduleInference:
    pt = forward(model, transverse)
    pl = forward(model, longitudinal)
    return NoduleInference(pt, pl, fuse_views(pt, pl))


def save_weights(model: CnnModel, path) -> None:
    header = struct.pack(f"<{N_CONV + 1}I", *model.channels, model.fc_in)
    payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.parameters())
    Path(path).write_bytes(MAGIC + header + payload)


def load_weights(path, input_size: Optional[int] = None) -> CnnModel:
    """Read a weights file.

    The input size is not stored; by default it is inferred from the fully
    connected width as ``32 * side`` where ``side**2 = fc_in / C6``.
    """
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    hsize = 4 * (N_CONV + 1)
    if len(data) < len(MAGIC) + hsize:
        raise WeightsFormatError(f"{path}: truncated header")
    *channels, fc_in = struct.unpack_from(f"<{N_CONV + 1}I", data, len(MAGIC))
    if any(c == 0 for c in channels):
        raise WeightsFormatError(f"{path}: zero-width conv layer")
    c6 = channels[-1]
    if input_size is None:
        side = math.isqrt(fc_in // c6) if fc_in % c6 == 0 else 0
        if side == 0 or side * side * c6 != fc_in:
            raise WeightsFormatError(
                f"{path}: conv6 declares {c6} channels but fc expects {fc_in} inputs "
                f"(not {c6} x side^2)")
        input_size = 32 * side
    elif c6 * final_size(input_size) ** 2 != fc_in:
        raise WeightsFormatError(
            f"{path}: conv6 declares {c6} channels but fc expects {fc_in} inputs "
            f"for a {input_size}x{input_size} input")

    model = CnnModel.zeros(channels, input_size)
    params = model.parameters()
    names = [f"conv{k // 2 + 1} {'weight' if k % 2 == 0 else 'bias'}" for k in range(2 * N_CONV)] + ["fc weight", "fc bias"]
    expected = sum(p.size for p in params) * 8
    body = memoryview(data)[len(MAGIC) + hsize:]
    if len(body) < expected:
        offset = 0
        for name, p in zip(names, params):
            offset += p.size * 8
            if offset > len(body):
                raise WeightsFormatError(f"{path}: truncated in {name} ({len(body)} of {expected} payload bytes)")
    if len(body) > expected:
        raise WeightsFormatError(
            f"{path}: payload has {len(body)} bytes but the declared layers need {expected}")
    offset = 0
    for p in params:
        n = p.size * 8
        p[...] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(p.shape)
        offset += n
    return model
