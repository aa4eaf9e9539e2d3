"""The tensorized Szász–Mirakjan–Kantorovich operator and its Erlang-mixture output.

For a density ``f`` on the positive orthant and an integer scale ``n``,

    K_n f(x) = sum_m a_{m,n} prod_j tau_{m_j,n}(x_j),   a_{m,n} = int_{Q_{m,n}} f,

with ``Q_{m,n} = prod_j [(m_j - 1)/n, m_j/n)``. Three routes to the same value
live here: the mixture (:func:`build_mixture` then :func:`mixture_pdf`), the
direct Poisson-window series (:func:`operator_eval`), and the Monte Carlo
representation ``E f((N + U)/n)`` (:func:`mc_oracle`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import kernels
from ._random import BLOCK_SIZE, iter_blocks
from .densities import DensitySpec, as_density, cell_mass_grid
from .quadrature import DEFAULT_QUADRATURE, QuadratureSpec

__all__ = [
    "SCHEMA_VERSION",
    "InvariantError",
    "EnumerationCapError",
    "ErlangMixture",
    "CellMassTable",
    "IndexPolicy",
    "SupportPolicy",
    "ThresholdPolicy",
    "build_mixture",
    "mixture_pdf",
    "mixture_pdf_grid",
    "mixture_cdf",
    "poisson_window",
    "operator_eval",
    "mc_oracle",
    "DisplacementMoments",
    "displacement_moments",
    "stirling2",
    "bell_number",
    "poisson_raw_moment",
    "weighted_moment_constant",
]

SCHEMA_VERSION = 1
_WEIGHT_TOL = 1e-12


class InvariantError(ValueError):
    """A mixture or table violates one of its structural invariants."""


class EnumerationCapError(RuntimeError):
    """The threshold policy hit its index cap before reaching the residual target."""

    def __init__(self, message, achieved_residual, N):
        super().__init__(message)
        self.achieved_residual = achieved_residual
        self.N = N


@dataclass(frozen=True, eq=False)
class ErlangMixture:
    """Finite Erlang mixture with common rate ``n``.

    ``shapes`` is an ``(k, d)`` integer array of shape indices and ``weights``
    the matching nonnegative weights. ``residual`` is mass the listed
    components do not carry; it contributes nothing to the density.
    """

    shapes: np.ndarray
    weights: np.ndarray
    n: int
    residual: float = 0.0
    d: int = field(init=False)

    def __post_init__(self):
        shapes = np.asarray(self.shapes)
        if shapes.ndim != 2 or shapes.shape[1] < 1:
            raise InvariantError("shapes must be an (k, d) array with d >= 1")
        if shapes.size and not np.all(np.mod(shapes, 1) == 0):
            raise InvariantError("shape indices must be integers")
        shapes = shapes.astype(np.int64)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != shapes.shape[0]:
            raise InvariantError("one weight per component is required")
        if int(self.n) != self.n or self.n < 1:
            raise InvariantError("rate index n must be a positive integer")
        shapes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "shapes", shapes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "residual", float(self.residual))
        object.__setattr__(self, "d", int(shapes.shape[1]))

    def __len__(self):
        return self.shapes.shape[0]

    @property
    def n_components(self) -> int:
        return len(self)

    def check_invariants(self, tol: float = _WEIGHT_TOL) -> list:
        """Return ``[(name, ok, detail), ...]`` for every mixture invariant."""
        total = float(np.sum(self.weights)) + self.residual
        checks = [
            ("mass_balance", abs(total - 1.0) <= tol,
             f"sum(weights) + residual = {total!r}"),
            ("nonnegative_weights", bool(np.all(self.weights >= 0)),
             f"min weight {float(np.min(self.weights)) if len(self) else 0.0!r}"),
            ("nonnegative_residual", self.residual >= 0, f"residual {self.residual!r}"),
            ("positive_shapes", bool(np.all(self.shapes >= 1)), "all shape coordinates >= 1"),
            ("unique_shapes", np.unique(self.shapes, axis=0).shape[0] == len(self),
             "no duplicate shape indices"),
        ]
        return checks

    def validate(self, tol: float = _WEIGHT_TOL) -> "ErlangMixture":
        bad = [(name, detail) for name, ok, detail in self.check_invariants(tol) if not ok]
        if bad:
            raise InvariantError("; ".join(f"{name}: {detail}" for name, detail in bad))
        return self

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "d": self.d,
            "n": self.n,
            "components": [{"m": [int(v) for v in m], "w": float(w)}
                           for m, w in zip(self.shapes, self.weights)],
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, data: dict, validate: bool = True) -> "ErlangMixture":
        if not isinstance(data, dict):
            raise InvariantError("mixture JSON must be an object")
        version = data.get("version")
        if not isinstance(version, int):
            raise InvariantError("mixture JSON lacks an integer 'version'")
        if version > SCHEMA_VERSION:
            raise InvariantError(
                f"mixture schema version {version} is newer than supported version "
                f"{SCHEMA_VERSION}; upgrade erlangmix to read it"
            )
        unknown = set(data) - {"version", "d", "n", "components", "residual"}
        if unknown:
            raise InvariantError(f"unknown mixture fields: {sorted(unknown)}")
        try:
            d = int(data["d"])
            comps = data["components"]
            shapes = np.array([c["m"] for c in comps], dtype=float).reshape(len(comps), d)
            weights = np.array([c["w"] for c in comps], dtype=float)
            g = cls(shapes, weights, data["n"], data.get("residual", 0.0))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvariantError):
                raise
            raise InvariantError(f"malformed mixture JSON: {exc}") from None
        return g.validate() if validate else g

    def pdf(self, x):
        return mixture_pdf(self, x)

    def cdf(self, x):
        return mixture_cdf(self, x)

    def tail_sup(self, L: float) -> float:
        """Upper bound on the density at any point with some coordinate >= L."""
        if len(self) == 0:
            return 0.0
        n = self.n
        uniq, inv = np.unique(self.shapes, return_inverse=True)
        inv = inv.reshape(self.shapes.shape)
        sups = np.array([kernels.erlang_sup_norm_exact(int(m), n) for m in uniq])
        at_L = np.where((uniq - 1) / n <= L, kernels.erlang_pdf(uniq, n, float(L)), sups)
        S = sups[inv]
        T = at_L[inv]
        best = 0.0
        for j in range(self.d):
            others = np.prod(np.delete(S, j, axis=1), axis=1)
            best = max(best, float(np.sum(self.weights * T[:, j] * others)))
        return best

    def tail_quantile(self, eps: float) -> float:
        """A point L with mixture mass outside ``[0, L]^d`` below ``eps``."""
        if len(self) == 0:
            return 0.0
        m_max = int(np.max(self.shapes))
        return float(special.gammainccinv(m_max, eps / self.d)) / self.n


@dataclass(frozen=True, eq=False)
class CellMassTable:
    """Cell masses ``a_{m,n}`` over the index box ``[1, N_max]`` per axis.

    Stored densely; ``items()`` gives the sparse view of nonzero entries.
    ``residual`` is the target mass outside the box.
    """

    masses: np.ndarray
    n: int
    residual: float

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if np.any(masses < 0):
            raise InvariantError("cell masses must be nonnegative")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @property
    def d(self) -> int:
        return self.masses.ndim

    @property
    def N_max(self) -> tuple:
        return tuple(self.masses.shape)

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))

    def __getitem__(self, m):
        idx = kernels.shape_index(m, self.d)
        if any(v > s for v, s in zip(idx, self.N_max)):
            raise KeyError(f"index {idx} lies outside the covered box {self.N_max}")
        return float(self.masses[tuple(v - 1 for v in idx)])

    def items(self):
        nz = np.argwhere(self.masses > 0)
        for row in nz:
            yield tuple(int(v) + 1 for v in row), float(self.masses[tuple(row)])

    def restrict(self, N: int) -> "CellMassTable":
        """Sub-table over ``[1, N]^d``, with excluded mass moved into the residual."""
        if any(N > s for s in self.N_max):
            raise ValueError(f"table covers {self.N_max}, cannot restrict to N={N}")
        sub = self.masses[(slice(0, N),) * self.d]
        dropped = self.total - float(np.sum(sub))
        return CellMassTable(sub.copy(), self.n, self.residual + max(dropped, 0.0))

    def to_mixture(self, drop_zeros: bool = True) -> ErlangMixture:
        masses = self.masses
        idx = np.argwhere(masses > 0) if drop_zeros else np.argwhere(np.ones_like(masses, bool))
        weights = masses[tuple(idx.T)] if idx.size else np.zeros(0)
        residual = max(0.0, 1.0 - float(np.sum(weights)))
        return ErlangMixture(idx.reshape(-1, self.d) + 1, weights, self.n, residual)


@dataclass(frozen=True)
class SupportPolicy:
    """Enumerate indices with ``m_j <= floor(n M_j) + 1`` for support ``[0, M]``."""

    normalization_tol: float = 1e-8


@dataclass(frozen=True)
class ThresholdPolicy:
    """Grow a cubic index box ``[1, N]^d`` until the residual mass is below ``tol``."""

    tol: float = 1e-10
    N_start: int = 8
    max_cells: int = 4_000_000


IndexPolicy = SupportPolicy | ThresholdPolicy


def _as_spec(f, d=None) -> DensitySpec:
    if isinstance(f, DensitySpec):
        return f
    if d is None:
        raise ValueError("plain callables need an explicit dimension")
    return as_density(f, d)


def build_mixture(f: DensitySpec, n: int, policy: Optional[IndexPolicy] = None,
                  quad: QuadratureSpec = DEFAULT_QUADRATURE):
    """Return ``(ErlangMixture, CellMassTable)`` with weights equal to the cell masses.

    The default policy is :class:`SupportPolicy` when ``f`` has a support box
    and :class:`ThresholdPolicy` otherwise.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    if policy is None:
        policy = SupportPolicy() if f.support_box is not None else ThresholdPolicy()
    d = f.d
    if isinstance(policy, SupportPolicy):
        if f.support_box is None:
            raise ValueError(f"density {f.name!r} has no support box; use ThresholdPolicy")
        last = [int(math.floor(n * M)) + 1 for M in f.support_box]
        masses = cell_mass_grid(f, n, [1] * d, last, quad)
        total = float(np.sum(masses))
        if abs(total - 1.0) > policy.normalization_tol:
            raise ValueError(
                f"cell masses of {f.name!r} sum to {total:.12g}; density is not normalized "
                "or its support box is wrong"
            )
        table = CellMassTable(masses, n, max(0.0, 1.0 - total))
        return table.to_mixture(), table
    if isinstance(policy, ThresholdPolicy):
        N = max(1, int(policy.N_start))
        if f.support_box is not None:
            N = max(N, max(int(math.floor(n * M)) + 1 for M in f.support_box))
        elif f.tail_quantile is not None:
            # start at the box a known quantile certifies, instead of doubling past it
            N = max(N, int(math.ceil(n * f.tail_quantile(0.5 * policy.tol))))
        N_cap = int(math.floor(policy.max_cells ** (1.0 / d) + 1e-9))
        while (N_cap + 1) ** d <= policy.max_cells:
            N_cap += 1
        while N_cap ** d > policy.max_cells:
            N_cap -= 1
        N = min(N, N_cap)
        while True:
            masses = cell_mass_grid(f, n, [1] * d, [N] * d, quad)
            residual = max(0.0, 1.0 - float(np.sum(masses)))
            if residual < policy.tol:
                table = CellMassTable(masses, n, residual)
                return table.to_mixture(), table
            if N >= N_cap:
                raise EnumerationCapError(
                    f"residual {residual:.3e} still above {policy.tol:g} at N={N} "
                    f"({N ** d} cells); cap is {policy.max_cells} cells",
                    residual, N,
                )
            N = min(2 * N, N_cap)
    raise TypeError(f"unknown index policy {policy!r}")


def _points(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and x.size == d)
    if single:
        pts = x.reshape(1, -1)
    elif x.ndim == 1 and d == 1:
        pts = x.reshape(-1, 1)
    else:
        pts = x
    if pts.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got {pts.shape[-1]}")
    if np.any(pts < 0) or np.any(np.isnan(pts)):
        raise ValueError("points must lie in the positive orthant")
    return pts, single


def _axis_kernels(shapes_axis, n, t):
    """Kernel matrix ``tau_{m,n}(t_p)`` for sorted unique ``m`` on one axis."""
    uniq, inv = np.unique(shapes_axis, return_inverse=True)
    mat = kernels.erlang_pdf(uniq[None, :], n, t[:, None])
    return np.atleast_2d(mat), inv


def mixture_pdf(g: ErlangMixture, x, chunk: int = 2_000_000):
    """Density of ``g`` at a point ``(d,)`` or a batch ``(k, d)``.

    The residual mass is not spread anywhere, so the density integrates to
    ``1 - g.residual``.
    """
    pts, single = _points(x, g.d)
    out = np.zeros(pts.shape[0])
    if len(g):
        mats = [_axis_kernels(g.shapes[:, j], g.n, pts[:, j]) for j in range(g.d)]
        step = max(1, chunk // max(len(g), 1))
        for s in range(0, pts.shape[0], step):
            sl = slice(s, s + step)
            prod = np.broadcast_to(g.weights, (pts[sl].shape[0], len(g))).copy()
            for mat, inv in mats:
                prod *= mat[sl][:, inv]
            out[sl] = prod.sum(axis=1)
    return float(out[0]) if single else out


def _dense_masses(g: ErlangMixture, max_cells: int):
    """Scatter mixture weights into a dense array over the shapes' bounding box."""
    lo = g.shapes.min(axis=0)
    hi = g.shapes.max(axis=0)
    if np.prod(hi - lo + 1.0) > max_cells:
        return None, None
    A = np.zeros(tuple(hi - lo + 1))
    np.add.at(A, tuple((g.shapes - lo).T), g.weights)
    return A, lo


def mixture_pdf_grid(table_or_mixture, axes, max_cells: int = 4_000_000):
    """Density on the tensor grid ``axes[0] x ... x axes[d-1]``.

    The weights are laid out as a dense array and contracted against one
    kernel matrix per axis, which is far cheaper than pointwise evaluation.
    Mixtures too sparse for that fall back to :func:`mixture_pdf`.
    """
    axes = [np.atleast_1d(np.asarray(t, dtype=float)) for t in axes]
    if isinstance(table_or_mixture, CellMassTable):
        A, lo, n = table_or_mixture.masses, np.ones(table_or_mixture.d, dtype=np.int64), table_or_mixture.n
    else:
        g = table_or_mixture
        if len(axes) != g.d:
            raise ValueError(f"need {g.d} axes, got {len(axes)}")
        if len(g) == 0:
            return np.zeros(tuple(len(t) for t in axes))
        A, lo = _dense_masses(g, max_cells)
        n = g.n
        if A is None:
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([v.ravel() for v in mesh], axis=1)
            return mixture_pdf(g, pts).reshape(mesh[0].shape)
    out = A
    for j, t in enumerate(axes):
        m = np.arange(lo[j], lo[j] + A.shape[j])
        E = np.atleast_2d(kernels.erlang_pdf(m[:, None], n, t[None, :]))
        out = np.tensordot(out, E, axes=([0], [0]))
    return out


def mixture_cdf(g: ErlangMixture, x):
    """Joint CDF ``P(X <= x)`` of the mixture (residual mass excluded)."""
    pts, single = _points(x, g.d)
    out = np.zeros(pts.shape[0])
    for shape, w in zip(g.shapes, g.weights):
        term = np.full(pts.shape[0], w)
        for j in range(g.d):
            term *= kernels.erlang_cdf(int(shape[j]), g.n, pts[:, j])
        out += term
    return float(out[0]) if single else out


def poisson_window(lam: float, tol: float):
    """Smallest symmetric-growth window ``[lo, hi]`` with Poisson(lam) mass outside < tol.

    Returns ``(lo, hi, pmf, excluded)`` where ``pmf`` covers ``lo..hi``.
    """
    lam = float(lam)
    if lam == 0.0:
        return 0, 0, np.ones(1), 0.0
    c = int(math.floor(lam))
    w = int(math.ceil(4.0 * math.sqrt(lam) + 8.0))
    while True:
        lo, hi = max(0, c - w), c + w
        below = kernels.erlang_sf(lo, 1.0, lam) if lo > 0 else 0.0  # P(N <= lo - 1)
        above = kernels.erlang_cdf(hi + 1, 1.0, lam)  # P(N >= hi + 1)
        excluded = float(below + above)
        if excluded < tol:
            k = np.arange(lo, hi + 1)
            return lo, hi, np.exp(kernels.log_poisson_pmf(k, lam)), excluded
        w *= 2


def operator_eval(f, n: int, x, tail_tol: float = 1e-13,
                  quad: QuadratureSpec = DEFAULT_QUADRATURE, d: Optional[int] = None,
                  max_union_cells: int = 2_000_000):
    """Evaluate ``K_n^{(d)} f`` directly from its Poisson series.

    Each axis keeps a window of Poisson weights whose excluded mass is below
    ``tail_tol / d``; cell averages come from :func:`cell_mass_grid`. ``f`` may
    be any locally integrable function, not only a density.
    """
    if not 0 < tail_tol <= 1e-6:
        raise ValueError("tail_tol must lie in (0, 1e-6]")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    spec = _as_spec(f, d)
    dim = spec.d
    pts, single = _points(x, dim)
    per_axis_tol = tail_tol / dim
    windows = [[poisson_window(n * p[j], per_axis_tol) for j in range(dim)] for p in pts]
    lo = np.array([[w[0] for w in row] for row in windows])
    hi = np.array([[w[1] for w in row] for row in windows])
    glo, ghi = lo.min(axis=0), hi.max(axis=0)
    out = np.empty(pts.shape[0])
    scale = float(n) ** dim
    if np.prod(ghi - glo + 1.0) <= max_union_cells:
        masses = cell_mass_grid(spec, n, glo + 1, ghi + 1, quad)
        for i, row in enumerate(windows):
            sl = tuple(slice(r[0] - g0, r[1] - g0 + 1) for r, g0 in zip(row, glo))
            block = masses[sl]
            for r in row:
                block = np.tensordot(r[2], block, axes=([0], [0]))
            out[i] = scale * float(block)
    else:
        for i, row in enumerate(windows):
            block = cell_mass_grid(spec, n, [r[0] + 1 for r in row], [r[1] + 1 for r in row], quad)
            for r in row:
                block = np.tensordot(r[2], block, axes=([0], [0]))
            out[i] = scale * float(block)
    return float(out[0]) if single else out


def mc_oracle(f, n: int, x, samples: int, seed: int, block_size: int = BLOCK_SIZE):
    """Monte Carlo estimate of ``E f((N + U)/n)`` with ``N_j ~ Poisson(n x_j)``.

    Returns ``(estimate, std_error)``. ``f`` is a :class:`DensitySpec` or any
    vectorized callable on ``(k, d)`` arrays. Draws come in seeded blocks, so
    the result depends only on ``(seed, samples, block_size)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("x must lie in the positive orthant")
    d = x.size
    lam = n * x
    func = f.evaluate if isinstance(f, DensitySpec) else f
    vals = []
    for rng, count in iter_blocks(seed, samples, block_size):
        N = rng.poisson(lam, size=(block_size, d))
        U = rng.random((block_size, d))
        Y = (N[:count] + U[:count]) / n
        vals.append(np.asarray(func(Y), dtype=float).reshape(count))
    v = np.concatenate(vals)
    est = float(np.mean(v))
    se = float(np.std(v, ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    return est, se


@dataclass(frozen=True)
class DisplacementMoments:
    """Moments of ``Delta = Y_{n,x} - x`` for the operator's random displacement."""

    x: tuple
    n: int
    d: int
    mean_shift: float
    second_moment: float

    def moment_bound(self, r: float) -> float:
        """``E ||Delta||^r <= (1 + d/3)^(r/2) ((1 + ||x||_1)/n)^(r/2)`` for 0 < r <= 2."""
        if not 0 < r <= 2:
            raise ValueError("r must lie in (0, 2]")
        return (1 + self.d / 3) ** (r / 2) * ((1 + sum(self.x)) / self.n) ** (r / 2)

    def tail_bound(self, eta: float) -> float:
        """Chebyshev bound on ``P(||Delta||_2 >= eta)``."""
        if not eta > 0:
            raise ValueError("eta must be positive")
        return self.second_moment / eta ** 2


def displacement_moments(x, n: int, d: Optional[int] = None) -> DisplacementMoments:
    """Exact second moment ``||x||_1/n + d/(3 n^2)`` and the derived bounds."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if d is None:
        d = x.size
    if x.size == 1 and d > 1:
        x = np.repeat(x, d)
    if x.size != d:
        raise ValueError("x has the wrong dimension")
    if np.any(x < 0):
        raise ValueError("x must lie in the positive orthant")
    s = float(np.sum(x))
    return DisplacementMoments(tuple(float(v) for v in x), int(n), int(d),
                               1.0 / (2 * n), s / n + d / (3.0 * n * n))


@lru_cache(maxsize=None)
def _stirling_row(m: int) -> tuple:
    row = [1]
    for i in range(1, m + 1):
        nxt = [0] * (i + 1)
        for k in range(1, i + 1):
            nxt[k] = k * (row[k] if k < len(row) else 0) + row[k - 1]
        row = nxt
    return tuple(row)


def stirling2(m: int, k: int) -> int:
    """Stirling number of the second kind S(m, k), exact."""
    if m < 0 or k < 0:
        raise ValueError("arguments must be nonnegative")
    if k > m:
        return 0
    return _stirling_row(m)[k]


def bell_number(m: int) -> int:
    return sum(_stirling_row(m))


def poisson_raw_moment(lam, m: int):
    """``E[N^m]`` for ``N ~ Poisson(lam)``: the Touchard polynomial ``sum_k S(m,k) lam^k``.

    Integer and :class:`~fractions.Fraction` inputs are evaluated exactly.
    """
    if int(m) != m or m < 0:
        raise ValueError("m must be a nonnegative integer")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    row = _stirling_row(int(m))
    exact = isinstance(lam, (int, Fraction))
    acc = Fraction(0) if exact else 0.0
    for c in reversed(row):
        acc = acc * lam + c
    return acc


def weighted_moment_constant(nu: float, d: int) -> float:
    """A constant ``A`` with ``E w_nu(Y_{n,x}) <= A w_nu(x)`` for all x and n >= 1.

    With ``m = ceil(nu)``: ``(1 + ||Y||_1)^m <= (1+d)^(m-1) (1 + sum_j Y_j^m)``,
    ``Y_j^m <= 2^(m-1) (N_j^m + 1) / n^m`` and the Touchard moment of ``N_j`` is at
    most ``B_m (1 + x_j)^m`` with ``B_m`` the Bell number. Jensen's inequality
    then lowers the power from ``m`` to ``nu``.
    """
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    if nu == 0:
        return 1.0
    m = int(math.ceil(nu))
    C = 2.0 ** (m - 1) * (1.0 + d) ** m
    return float((C * (1.0 + bell_number(m))) ** (nu / m))
