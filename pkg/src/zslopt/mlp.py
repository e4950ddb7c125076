"""Bias-free two-layer ReLU perceptron with hand-written backprop.

``forward(x) = relu(W2 @ relu(W1 @ x))``. Inputs are handled as row batches:
an N×in matrix maps to N×out.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError
from .tensor import as_matrix, matmul

CHECKPOINT_MAGIC = b"ZSLW"
CHECKPOINT_VERSION = 1

_HEADER = struct.Struct("<4sII")
_DIMS = struct.Struct("<QQQ")


@dataclass(eq=False)
class TwoLayerNet:
    w1: np.ndarray  # hidden × in
    w2: np.ndarray  # out × hidden

    def __post_init__(self):
        self.w1 = as_matrix(self.w1, "w1").copy()
        self.w2 = as_matrix(self.w2, "w2").copy()
        if self.w2.shape[1] != self.w1.shape[0]:
            raise ShapeError(f"w2 is {self.w2.shape} but w1 has {self.w1.shape[0]} hidden units")

    @property
    def in_dim(self):
        return self.w1.shape[1]

    @property
    def hidden(self):
        return self.w1.shape[0]

    @property
    def out_dim(self):
        return self.w2.shape[0]

    def copy(self):
        return TwoLayerNet(self.w1, self.w2)

    def __eq__(self, other):
        if not isinstance(other, TwoLayerNet):
            return NotImplemented
        return np.array_equal(self.w1, other.w1) and np.array_equal(self.w2, other.w2)


@dataclass
class GradPair:
    g1: np.ndarray
    g2: np.ndarray

    def scaled(self, factor):
        return GradPair(self.g1 * factor, self.g2 * factor)

    def __add__(self, other):
        return GradPair(self.g1 + other.g1, self.g2 + other.g2)


@dataclass
class Activations:
    """Intermediate values of one forward pass, reused by :func:`backward`."""

    x: np.ndarray
    pre1: np.ndarray
    h: np.ndarray
    pre2: np.ndarray
    out: np.ndarray


def _check_input(net, x):
    x = as_matrix(x, "x")
    if x.shape[1] != net.in_dim:
        raise ShapeError(f"net expects {net.in_dim}-dim inputs, got {x.shape[1]}")
    return x


def forward_cache(net, x):
    x = _check_input(net, x)
    pre1 = matmul(x, net.w1.T)
    h = np.maximum(pre1, 0.0)
    pre2 = matmul(h, net.w2.T)
    return Activations(x, pre1, h, pre2, np.maximum(pre2, 0.0))


def forward(net, x):
    return forward_cache(net, x).out


def backward(net, acts, d_out):
    """Parameter gradients given dLoss/dOutput for every row of the batch."""
    d_out = as_matrix(d_out, "d_out")
    if d_out.shape != acts.out.shape:
        raise ShapeError(f"d_out has shape {d_out.shape}, expected {acts.out.shape}")
    # subgradient of relu at exactly 0 is 0
    d_pre2 = d_out * (acts.pre2 > 0)
    g2 = d_pre2.T @ acts.h
    d_pre1 = (d_pre2 @ net.w2) * (acts.pre1 > 0)
    g1 = d_pre1.T @ acts.x
    return GradPair(g1, g2)


def grad_sq_target(net, x, target):
    """Loss ``sum ||forward(x) - target||^2`` over rows and its gradient."""
    acts = forward_cache(net, x)
    target = as_matrix(target, "target")
    if target.shape != acts.out.shape:
        raise ShapeError(f"target has shape {target.shape}, expected {acts.out.shape}")
    resid = acts.out - target
    return float(np.sum(resid * resid)), backward(net, acts, 2.0 * resid)


def l2_penalty(net):
    return float(np.sum(net.w1 * net.w1) + np.sum(net.w2 * net.w2))


def sgd_step(net, g, lr, l2=0.0):
    """In-place ``w <- w - lr * (g + 2 * l2 * w)`` for both layers."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if l2 < 0:
        raise ValueError(f"l2 weight must be non-negative, got {l2}")
    if g.g1.shape != net.w1.shape or g.g2.shape != net.w2.shape:
        raise ShapeError("gradient shapes do not match the network")
    net.w1 -= lr * (g.g1 + 2.0 * l2 * net.w1)
    net.w2 -= lr * (g.g2 + 2.0 * l2 * net.w2)


def rect_identity(rows, cols):
    return np.eye(rows, cols)


def init(rng, in_dim, hidden, out_dim, mode="xavier"):
    """New network; ``rect_identity`` puts ones on the (rectangular) diagonal.

    Xavier draws ``w1`` then ``w2`` row-major from ``rng``, uniform in
    ``±sqrt(6 / (fan_in + fan_out))``.
    """
    if min(in_dim, hidden, out_dim) < 1:
        raise ValueError(f"dims must be >= 1, got ({in_dim}, {hidden}, {out_dim})")
    if mode == "rect_identity":
        return TwoLayerNet(rect_identity(hidden, in_dim), rect_identity(out_dim, hidden))
    if mode != "xavier":
        raise ValueError(f"unknown init mode {mode!r}")
    b1 = math.sqrt(6.0 / (in_dim + hidden))
    b2 = math.sqrt(6.0 / (hidden + out_dim))
    w1 = rng.uniforms(hidden * in_dim, -b1, b1).reshape(hidden, in_dim)
    w2 = rng.uniforms(out_dim * hidden, -b2, b2).reshape(out_dim, hidden)
    return TwoLayerNet(w1, w2)


def fd_check(lossfn, params, analytic, eps=1e-6, probe=None):
    """Largest relative error between ``analytic`` and central differences of ``lossfn``.

    ``lossfn`` receives a perturbed copy of ``params``. The error for an entry
    is ``|analytic - fd| / max(1, |fd|)``. If ``probe`` is given it must map
    parameters to the array of values whose sign decides a kink (ReLU
    pre-activations, hinge arguments); entries whose ±10·eps perturbation
    flips any of those signs are skipped.
    """
    base = np.array(params, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != base.shape:
        raise ShapeError(f"analytic gradient shape {analytic.shape} != params shape {base.shape}")
    work = base.copy()
    flat = work.reshape(-1)
    worst = 0.0
    for i, a in enumerate(analytic.reshape(-1)):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = lossfn(work)
        flat[i] = orig - eps
        f_minus = lossfn(work)
        fd = (f_plus - f_minus) / (2 * eps)
        err = abs(a - fd) / max(1.0, abs(fd))
        # probing only matters for entries that would raise the maximum
        if err > worst and probe is not None:
            flat[i] = orig + 10 * eps
            up = np.asarray(probe(work)) > 0
            flat[i] = orig - 10 * eps
            down = np.asarray(probe(work)) > 0
            if not np.array_equal(up, down):
                err = 0.0
        flat[i] = orig
        worst = max(worst, err)
    return worst


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, nets):
    """Write nets to a "ZSLW" file: header, then per net (in, hidden, out) + w1 + w2 as f64."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(nets)))
        for net in nets:
            fh.write(_DIMS.pack(net.in_dim, net.hidden, net.out_dim))
            fh.write(np.ascontiguousarray(net.w1, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(net.w2, dtype="<f8").tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated checkpoint header")
    magic, version, count = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos = _HEADER.size
    nets = []
    for n in range(count):
        if len(raw) < pos + _DIMS.size:
            raise FormatError(f"{path}: truncated record for net {n}")
        in_dim, hidden, out_dim = _DIMS.unpack_from(raw, pos)
        pos += _DIMS.size
        n1, n2 = hidden * in_dim, out_dim * hidden
        if len(raw) < pos + 8 * (n1 + n2):
            raise FormatError(f"{path}: truncated weights for net {n}")
        w1 = np.frombuffer(raw, dtype="<f8", count=n1, offset=pos).reshape(hidden, in_dim)
        pos += 8 * n1
        w2 = np.frombuffer(raw, dtype="<f8", count=n2, offset=pos).reshape(out_dim, hidden)
        pos += 8 * n2
        nets.append(TwoLayerNet(w1, w2))
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes after {count} nets")
    return nets


__all__ = ["TwoLayerNet", "GradPair", "Activations", "forward", "forward_cache", "backward",
           "grad_sq_target", "l2_penalty", "sgd_step", "init", "fd_check",
           "save_checkpoint", "load_checkpoint"]
