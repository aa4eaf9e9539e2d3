"""Tensor-product Gauss-Legendre quadrature over batches of axis-aligned boxes."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


class QuadratureWarning(RuntimeWarning):
    """Emitted when a cell integral fails its refinement check."""


class QuadratureError(RuntimeError):
    """Raised instead of :class:`QuadratureWarning` when ``strict`` is set."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre orders and adaptive-refinement policy.

    Each box is integrated at ``order`` and ``refine_order`` nodes per axis;
    if the two estimates differ by more than ``tol`` the box is bisected along
    every axis, up to ``max_depth`` levels.
    """

    order: int = 8
    refine_order: int = 16
    tol: float = 1e-13
    max_depth: int = 30
    strict: bool = False

    def __post_init__(self):
        if self.order < 1 or self.refine_order <= self.order:
            raise ValueError("need 1 <= order < refine_order")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


DEFAULT_QUADRATURE = QuadratureSpec()


@lru_cache(maxsize=64)
def _unit_rule(order: int, d: int):
    x, w = leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    nodes = np.array(list(itertools.product(x, repeat=d)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    return nodes, weights


def gauss_legendre_nodes(lo: float, hi: float, order: int):
    """Nodes and weights of the order-``order`` rule on ``[lo, hi]``."""
    x, w = leggauss(order)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def composite_rule(breaks, order: int):
    """Concatenated Gauss-Legendre rule over consecutive panels ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = leggauss(order)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def _box_rule(func, lower, upper, order):
    """Apply the tensor rule to every box in the batch. Returns shape (k,)."""
    k, d = lower.shape
    nodes, weights = _unit_rule(order, d)
    width = upper - lower
    pts = lower[:, None, :] + width[:, None, :] * nodes[None, :, :]
    vals = np.asarray(func(pts.reshape(-1, d)), dtype=float).reshape(k, -1)
    return np.prod(width, axis=1) * (vals @ weights)


def split_at_breakpoints(lower, upper, breakpoints):
    """Cut boxes at interior breakpoints. Returns (lower, upper, parent index)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    parent = np.arange(lower.shape[0])
    if not breakpoints:
        return lower, upper, parent
    for axis, points in enumerate(breakpoints):
        for b in points:
            cut = (lower[:, axis] < b) & (upper[:, axis] > b)
            if not np.any(cut):
                continue
            lo_new = lower[cut].copy()
            up_new = upper[cut].copy()
            upper[cut, axis] = b
            lo_new[:, axis] = b
            lower = np.concatenate([lower, lo_new])
            upper = np.concatenate([upper, up_new])
            parent = np.concatenate([parent, parent[cut]])
    return lower, upper, parent


def integrate_boxes(func, lower, upper, spec: QuadratureSpec = DEFAULT_QUADRATURE,
                    breakpoints=None):
    """Integrate a vectorized ``func`` over each box ``[lower[i], upper[i]]``.

    ``func`` maps an ``(k, d)`` array of points to ``(k,)`` values. Boxes are
    first split at ``breakpoints`` (one sequence per axis) so kinks fall on
    panel edges. Returns ``(values, converged)`` arrays.
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    n_boxes, d = lower.shape
    lo, up, parent = split_at_breakpoints(lower, upper, breakpoints)
    total = np.zeros(n_boxes)
    ok = np.ones(n_boxes, dtype=bool)
    corners = np.array(list(itertools.product((0, 1), repeat=d)), dtype=float)
    depth = 0
    while lo.shape[0]:
        coarse = _box_rule(func, lo, up, spec.order)
        fine = _box_rule(func, lo, up, spec.refine_order)
        err = np.abs(fine - coarse)
        done = err <= np.maximum(spec.tol, 1e-15 * np.abs(fine))
        if depth >= spec.max_depth:
            ok[np.unique(parent[~done])] = False
            done[:] = True
        np.add.at(total, parent[done], fine[done])
        keep = ~done
        if not np.any(keep):
            break
        lo, up, parent = lo[keep], up[keep], parent[keep]
        mid = 0.5 * (lo + up)
        half = mid - lo
        lo = (lo[:, None, :] + corners[None, :, :] * half[:, None, :]).reshape(-1, d)
        up = lo + np.repeat(half, len(corners), axis=0)
        parent = np.repeat(parent, len(corners))
        depth += 1
    if not np.all(ok):
        msg = f"{int(np.sum(~ok))} cell integral(s) did not meet tol={spec.tol:g}"
        if spec.strict:
            raise QuadratureError(msg)
        warnings.warn(msg, QuadratureWarning, stacklevel=2)
    return total, ok
