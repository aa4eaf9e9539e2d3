"""Target densities on the positive orthant, cell integrals and regularity probes.

A :class:`DensitySpec` bundles a vectorized evaluator with whatever closed-form
knowledge is available (cell integrals, sup norm, Hölder constants, tail
bounds). The zoo densities are all tensor products of one-dimensional
:class:`Marginal` laws, which lets cell masses factor per axis.

The modulus and seminorm estimators here are sampled *lower* estimates of
suprema. They are meant for reporting; certified constants come from the
analytic metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from . import kernels
from ._random import iter_blocks, BLOCK_SIZE
from .quadrature import DEFAULT_QUADRATURE, QuadratureSpec, integrate_boxes

__all__ = [
    "HolderInfo",
    "Marginal",
    "DensitySpec",
    "Cell",
    "PairSampler",
    "ZOO",
    "zoo_density",
    "as_density",
    "product_density",
    "check_normalized",
    "cell_mass",
    "cell_mass_grid",
    "local_modulus",
    "intrinsic_modulus",
    "holder_seminorm_estimate",
    "certified_seminorm",
    "polynomial_weight",
]


def polynomial_weight(x, nu: float):
    """w_nu(x) = (1 + ||x||_1)^nu for points ``x`` of shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    return (1.0 + np.sum(np.abs(x), axis=-1)) ** nu


@dataclass(frozen=True)
class HolderInfo:
    """|f(y) - f(z)| <= H ||y - z||_2^alpha on ``[0, side]^d`` (everywhere if side is None)."""

    alpha: float
    H: float
    side: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("Hölder exponent must lie in (0, 1]")
        if self.H < 0:
            raise ValueError("Hölder constant must be nonnegative")


@dataclass(frozen=True)
class Marginal:
    """A one-dimensional law on [0, inf) with closed-form pieces."""

    name: str
    pdf: Callable
    cdf: Callable
    mass: Callable  # mass(a, b) over [a, b], vectorized
    sup: float
    tail_sup: Callable  # sup of pdf on [L, inf)
    quantile_upper: Callable  # point beyond which mass < eps
    support_upper: Optional[float] = None
    breakpoints: tuple = ()
    holder: Optional[tuple] = None  # (alpha, H), valid on all of [0, inf)


def _uniform_marginal(M: float) -> Marginal:
    M = float(M)
    if not M > 0:
        raise ValueError("uniform_box needs M > 0")

    def pdf(t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0) & (t <= M), 1.0 / M, 0.0)

    def cdf(t):
        return np.clip(np.asarray(t, dtype=float) / M, 0.0, 1.0)

    def mass(a, b):
        a = np.clip(np.asarray(a, dtype=float), 0.0, M)
        b = np.clip(np.asarray(b, dtype=float), 0.0, M)
        return np.maximum(b - a, 0.0) / M

    return Marginal(
        name=f"uniform(0,{M:g})", pdf=pdf, cdf=cdf, mass=mass, sup=1.0 / M,
        tail_sup=lambda L: 0.0 if L > M else 1.0 / M,
        quantile_upper=lambda eps: M, support_upper=M, breakpoints=(M,),
    )


def _exponential_marginal(rate: float) -> Marginal:
    lam = float(rate)
    if not lam > 0:
        raise ValueError("exponential rate must be positive")

    def pdf(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, lam * np.exp(-lam * np.maximum(t, 0.0)), 0.0)

    def cdf(t):
        return -np.expm1(-lam * np.maximum(np.asarray(t, dtype=float), 0.0))

    def mass(a, b):
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        return np.exp(-lam * a) * -np.expm1(-lam * (b - a))

    return Marginal(
        name=f"exp({lam:g})", pdf=pdf, cdf=cdf, mass=mass, sup=lam,
        tail_sup=lambda L: lam * math.exp(-lam * max(L, 0.0)),
        quantile_upper=lambda eps: -math.log(eps) / lam,
        holder=(1.0, lam * lam),
    )


def _erlang_marginal(m: int, rate: float) -> Marginal:
    m = int(m)
    beta = float(rate)
    kernels.ErlangParams(m, beta)
    sup = kernels.erlang_sup_norm_exact(m, beta)
    mode = (m - 1) / beta
    if m == 1:
        lip = beta * beta
    else:
        # tau' = beta (tau_{m-1} - tau_m) for m >= 2, both terms nonnegative
        lip = beta * max(kernels.erlang_sup_norm_exact(m - 1, beta), sup)

    def pdf(t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return kernels.erlang_pdf(m, beta, t)

    def cdf(t):
        return kernels.erlang_cdf(m, beta, np.maximum(np.asarray(t, dtype=float), 0.0))

    def mass(a, b):
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), a)
        return kernels.erlang_cell_mass(m, beta, a, b)

    def tail_sup(L):
        return float(kernels.erlang_pdf(m, beta, float(L))) if L >= mode else sup

    return Marginal(
        name=f"erlang({m},{beta:g})", pdf=pdf, cdf=cdf, mass=mass, sup=sup,
        tail_sup=tail_sup,
        quantile_upper=lambda eps: float(special.gammainccinv(m, eps)) / beta,
        holder=(1.0, lip),
    )


def _bump_marginal(alpha: float) -> Marginal:
    a = float(alpha)
    if not 0 < a <= 1:
        raise ValueError("holder_bump needs alpha in (0, 1]")
    c = (a + 1.0) / a

    def pdf(t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= 1)
        return np.where(inside, c * (1.0 - np.abs(2.0 * np.clip(t, 0, 1) - 1.0) ** a), 0.0)

    def cdf(t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        v = 2.0 * t - 1.0
        return c * (t - (np.sign(v) * np.abs(v) ** (a + 1.0) + 1.0) / (2.0 * (a + 1.0)))

    def mass(lo, hi):
        return np.maximum(cdf(hi) - cdf(lo), 0.0)

    return Marginal(
        name=f"bump({a:g})", pdf=pdf, cdf=cdf, mass=mass, sup=c,
        tail_sup=lambda L: 0.0 if L >= 1.0 else c,
        quantile_upper=lambda eps: 1.0, support_upper=1.0, breakpoints=(0.5, 1.0),
        holder=(a, c * 2.0 ** a),
    )


@dataclass(frozen=True)
class DensitySpec:
    """A target density (or, with ``normalized=False``, any integrable function).

    ``evaluate`` maps an ``(k, d)`` array to ``(k,)`` values. ``cell_integral``
    maps ``(lower, upper)`` arrays of shape ``(k, d)`` to box integrals.
    """

    d: int
    evaluate: Callable
    name: str = "custom"
    support_box: Optional[tuple] = None
    cell_integral: Optional[Callable] = None
    sup_bound: Optional[float] = None
    holder: Optional[HolderInfo] = None
    weight_index: Optional[float] = None
    marginals: Optional[tuple] = None
    breakpoints: tuple = ()
    tail_sup: Optional[Callable] = None
    tail_quantile: Optional[Callable] = None
    cdf: Optional[Callable] = None
    normalized: bool = True
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("dimension must be a positive integer")
        if self.support_box is not None and len(self.support_box) != self.d:
            raise ValueError("support_box needs one upper corner per axis")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[-1] != self.d:
            raise ValueError(f"expected points of dimension {self.d}, got {pts.shape[-1]}")
        vals = np.asarray(self.evaluate(pts), dtype=float)
        return float(vals[0]) if single else vals

    @property
    def is_product(self) -> bool:
        return self.marginals is not None


def product_density(marginals: Sequence[Marginal], name: str, params=None) -> DensitySpec:
    """Tensor product of one-dimensional marginals with all metadata composed."""
    margs = tuple(marginals)
    d = len(margs)
    sups = np.array([mg.sup for mg in margs])

    def evaluate(x):
        out = np.ones(x.shape[0])
        for j, mg in enumerate(margs):
            out = out * mg.pdf(x[:, j])
        return out

    def cell_integral(lower, upper):
        out = np.ones(lower.shape[0])
        for j, mg in enumerate(margs):
            out = out * mg.mass(lower[:, j], upper[:, j])
        return out

    def tail_sup(L):
        best = 0.0
        for j, mg in enumerate(margs):
            others = float(np.prod(np.delete(sups, j)))
            best = max(best, mg.tail_sup(L) * others)
        return best

    def tail_quantile(eps):
        return max(mg.quantile_upper(eps / d) for mg in margs)

    support = None
    if all(mg.support_upper is not None for mg in margs):
        support = tuple(mg.support_upper for mg in margs)

    holder = None
    if all(mg.holder is not None for mg in margs):
        alphas = {mg.holder[0] for mg in margs}
        if len(alphas) == 1:
            alpha = alphas.pop()
            coef = np.array([mg.holder[1] * float(np.prod(np.delete(sups, j)))
                             for j, mg in enumerate(margs)])
            # sum_j c_j |t_j|^a <= ||c||_{2/(2-a)} ||t||_2^a  (Hölder's inequality)
            q = 2.0 / (2.0 - alpha)
            H = float(np.sum(coef ** q) ** (1.0 / q))
            holder = HolderInfo(alpha, H)

    return DensitySpec(
        d=d, evaluate=evaluate, name=name, support_box=support,
        cell_integral=cell_integral, sup_bound=float(np.prod(sups)), holder=holder,
        weight_index=0.0, marginals=margs,
        breakpoints=tuple(mg.breakpoints for mg in margs),
        tail_sup=tail_sup, tail_quantile=tail_quantile,
        cdf=margs[0].cdf if d == 1 else None,
        params=dict(params or {}),
    )


def _per_axis(value, d, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, d)
    if arr.size != d:
        raise ValueError(f"{name} needs 1 or {d} values, got {arr.size}")
    return arr


def _zoo_uniform_box(d, M=1.0):
    Ms = _per_axis(M, d, "M")
    return product_density([_uniform_marginal(v) for v in Ms], "uniform_box",
                           {"M": Ms.tolist()})


def _zoo_product_exponential(d, rates=1.0):
    rs = _per_axis(rates, d, "rates")
    return product_density([_exponential_marginal(v) for v in rs], "product_exponential",
                           {"rates": rs.tolist()})


def _zoo_product_gamma_integer(d, shapes=2, rate=1.0):
    ms = _per_axis(shapes, d, "shapes")
    if np.any(np.mod(ms, 1) != 0) or np.any(ms < 1):
        raise ValueError("product_gamma_integer needs integer shapes >= 1")
    rs = _per_axis(rate, d, "rate")
    return product_density([_erlang_marginal(int(m), r) for m, r in zip(ms, rs)],
                           "product_gamma_integer",
                           {"shapes": [int(v) for v in ms], "rate": rs.tolist()})


def _zoo_holder_bump(d, alpha=0.5):
    return product_density([_bump_marginal(alpha)] * d, "holder_bump", {"alpha": float(alpha)})


def _zoo_erlang_mixture_reference(d, mixture=None):
    from .operator import ErlangMixture

    if mixture is None:
        raise ValueError("erlang_mixture_reference needs a 'mixture' parameter")
    if isinstance(mixture, dict):
        mixture = ErlangMixture.from_dict(mixture)
    if mixture.d != d:
        raise ValueError(f"mixture has dimension {mixture.d}, expected {d}")
    g = mixture
    if g.residual > 1e-12:
        raise ValueError("reference mixture must carry all of its mass in components")
    n = g.n
    sups = np.array([[kernels.erlang_sup_norm_exact(int(m), n) for m in row] for row in g.shapes])

    def cell_integral(lower, upper):
        out = np.zeros(lower.shape[0])
        for shape, w in zip(g.shapes, g.weights):
            term = np.full(lower.shape[0], w)
            for j in range(d):
                term = term * kernels.erlang_cell_mass(int(shape[j]), n,
                                                       np.maximum(lower[:, j], 0.0),
                                                       np.maximum(upper[:, j], 0.0))
            out += term
        return out

    def tail_sup(L):
        return g.tail_sup(L)

    lips = []
    for shape, row in zip(g.shapes, sups):
        coef = []
        for j in range(d):
            mg = _erlang_marginal(int(shape[j]), n)
            coef.append(mg.holder[1] * float(np.prod(np.delete(row, j))))
        lips.append(math.sqrt(sum(c * c for c in coef)))
    H = float(np.dot(g.weights, lips))

    def cdf1(t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        out = np.zeros(np.shape(t))
        for shape, w in zip(g.shapes, g.weights):
            out = out + w * kernels.erlang_cdf(int(shape[0]), n, t)
        return out

    return DensitySpec(
        d=d, evaluate=g.pdf, name="erlang_mixture_reference",
        cell_integral=cell_integral, sup_bound=float(np.dot(g.weights, np.prod(sups, axis=1))),
        holder=HolderInfo(1.0, H), weight_index=0.0,
        tail_sup=tail_sup, tail_quantile=g.tail_quantile,
        cdf=cdf1 if d == 1 else None,
        params={"mixture": g.to_dict()},
    )


ZOO = {
    "uniform_box": _zoo_uniform_box,
    "product_exponential": _zoo_product_exponential,
    "product_gamma_integer": _zoo_product_gamma_integer,
    "holder_bump": _zoo_holder_bump,
    "erlang_mixture_reference": _zoo_erlang_mixture_reference,
}


def zoo_density(name: str, d: int = 1, params: Optional[dict] = None) -> DensitySpec:
    """Look up a test density by identifier.

    >>> f = zoo_density("uniform_box", 1, {"M": 1})
    >>> f.support_box
    (1.0,)
    """
    if name not in ZOO:
        raise ValueError(f"unknown density {name!r}; choose from {sorted(ZOO)}")
    if int(d) != d or d < 1:
        raise ValueError("dimension must be a positive integer")
    params = dict(params or {})
    try:
        return ZOO[name](int(d), **params)
    except TypeError as exc:
        raise ValueError(f"invalid parameters for {name}: {exc}") from None


def as_density(func: Callable, d: int, *, vectorized: bool = True, normalized: bool = False,
               **metadata) -> DensitySpec:
    """Wrap a plain callable as a :class:`DensitySpec`.

    Non-vectorized callables receive one point of shape ``(d,)`` at a time.
    """
    if isinstance(func, DensitySpec):
        return func
    if vectorized:
        def evaluate(x):
            return np.broadcast_to(np.asarray(func(x), dtype=float), (x.shape[0],))
    else:
        def evaluate(x):
            return np.array([float(func(p)) for p in x])
    return DensitySpec(d=d, evaluate=evaluate, normalized=normalized, **metadata)


def check_normalized(f: DensitySpec, tol: float = 1e-8, eps_tail: float = 1e-12) -> float:
    """Return the total integral of ``f``; raise if it is not 1 within ``tol``."""
    if f.marginals is not None:
        total = float(np.prod([
            mg.mass(0.0, mg.support_upper if mg.support_upper is not None
                    else mg.quantile_upper(eps_tail)) for mg in f.marginals]))
        total_upper = total + eps_tail * f.d
    else:
        if f.support_box is not None:
            upper = np.asarray(f.support_box, dtype=float)
            tail = 0.0
        elif f.tail_quantile is not None:
            upper = np.full(f.d, f.tail_quantile(eps_tail))
            tail = eps_tail
        else:
            raise ValueError("cannot check normalization without support or tail metadata")
        if f.cell_integral is not None:
            total = float(f.cell_integral(np.zeros((1, f.d)), upper[None, :])[0])
        else:
            val, _ = integrate_boxes(f.evaluate, np.zeros((1, f.d)), upper[None, :],
                                     breakpoints=f.breakpoints)
            total = float(val[0])
        total_upper = total + tail
    if total > 1 + tol or total_upper < 1 - tol:
        raise ValueError(
            f"density {f.name!r} integrates to {total:.12g}, not 1; "
            "unnormalized densities are rejected"
        )
    return total


@dataclass(frozen=True)
class Cell:
    """Half-open box ``prod_j [lower_j, upper_j)``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("cell corners must be vectors of equal length")
        if np.any(lo < 0):
            raise ValueError("cells must lie in the positive orthant")
        if np.any(up <= lo):
            raise ValueError("cell upper corner must exceed lower corner")

    @classmethod
    def from_index(cls, m, n: int) -> "Cell":
        """The grid cell Q_{m,n} = prod_j [(m_j - 1)/n, m_j/n)."""
        m = kernels.shape_index(m)
        return cls(tuple((v - 1) / n for v in m), tuple(v / n for v in m))


def cell_mass(f: DensitySpec, cell: Cell, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Integral of ``f`` over ``cell``. Closed form when available, else quadrature."""
    lo = np.asarray(cell.lower, dtype=float)[None, :]
    up = np.asarray(cell.upper, dtype=float)[None, :]
    if lo.shape[1] != f.d:
        raise ValueError("cell dimension does not match density")
    if f.cell_integral is not None:
        return float(f.cell_integral(lo, up)[0])
    val, _ = integrate_boxes(f.evaluate, lo, up, quad, f.breakpoints)
    return float(val[0])


def cell_mass_grid(f: DensitySpec, n: int, first, last,
                   quad: QuadratureSpec = DEFAULT_QUADRATURE, method: str = "auto"):
    """Masses of all cells ``Q_{m,n}`` with ``first[j] <= m_j <= last[j]``.

    Returns a dense array of shape ``tuple(last - first + 1)``. ``method`` is
    ``"auto"`` (marginals, then closed form, then quadrature), ``"exact"`` or
    ``"quadrature"``.
    """
    first = np.atleast_1d(np.asarray(first, dtype=np.int64))
    last = np.atleast_1d(np.asarray(last, dtype=np.int64))
    if first.size != f.d or last.size != f.d:
        raise ValueError("index ranges must have one entry per axis")
    if np.any(first < 1) or np.any(last < first):
        raise ValueError("invalid index range")
    axes = [np.arange(a, b + 1) for a, b in zip(first, last)]
    if method == "auto" and f.marginals is not None:
        per_axis = [mg.mass((ax - 1) / n, ax / n) for mg, ax in zip(f.marginals, axes)]
        return reduce(np.multiply.outer, per_axis) if f.d > 1 else per_axis[0]
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([g.ravel() for g in mesh], axis=1).astype(float)
    lower, upper = (idx - 1) / n, idx / n
    shape = tuple(len(ax) for ax in axes)
    if method in ("auto", "exact") and f.cell_integral is not None:
        vals = f.cell_integral(lower, upper)
    elif method == "exact":
        raise ValueError(f"density {f.name!r} has no closed-form cell integral")
    else:
        vals, _ = integrate_boxes(f.evaluate, lower, upper, quad, f.breakpoints)
    return np.asarray(vals, dtype=float).reshape(shape)


def _shift_slices(offset, size):
    a, b = [], []
    for o in offset:
        if o >= 0:
            a.append(slice(0, size - o))
            b.append(slice(o, size))
        else:
            a.append(slice(-o, size))
            b.append(slice(0, size + o))
    return tuple(a), tuple(b)


def local_modulus(f, M: float, r: float, grid_resolution: int = 201, d: Optional[int] = None) -> float:
    """Grid lower estimate of the local modulus of continuity on ``[0, M + r]^d``.

    The maximum of |f(y) - f(z)| over grid pairs at Euclidean distance <= r.
    A lower bound of the true supremum.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    dim = d if d is not None else f.d
    G = int(grid_resolution)
    if G < 2:
        raise ValueError("grid_resolution must be >= 2")
    side = M + r
    h = side / (G - 1)
    t = np.linspace(0.0, side, G)
    mesh = np.meshgrid(*([t] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    F = np.asarray(f(pts) if not isinstance(f, DensitySpec) else f.evaluate(pts), dtype=float)
    F = F.reshape((G,) * dim)
    kmax = int(math.floor(r / h + 1e-12))
    best = 0.0
    for off in np.ndindex(*((2 * kmax + 1,) * dim)):
        o = tuple(v - kmax for v in off)
        if o <= (0,) * dim:
            continue  # each unordered pair once; includes the zero offset skip
        if math.sqrt(sum(v * v for v in o)) * h > r * (1 + 1e-12):
            continue
        if any(abs(v) >= G for v in o):
            continue
        sa, sb = _shift_slices(o, G)
        best = max(best, float(np.max(np.abs(F[sb] - F[sa]))))
    return best


@dataclass(frozen=True)
class PairSampler:
    """Seeded random pairs (x, y) for sampled suprema.

    ``x`` is uniform on ``[0, box]^d``; directions are uniform on the sphere.
    For the intrinsic modulus, radii are uniform fractions of
    ``delta_max * sqrt(1 + ||x||_1)``; for the seminorm they are log-uniform on
    ``[r_min, box] * sqrt(1 + ||x||_1)``. Samples come in seeded blocks, so a
    larger ``n_pairs`` extends (never reshuffles) a smaller one.
    """

    n_pairs: int = 100_000
    seed: int = 0
    box: float = 2.0
    delta_max: Optional[float] = None
    r_min: float = 1e-6
    block_size: int = BLOCK_SIZE

    def draw(self, d: int):
        xs, us, ss = [], [], []
        for rng, count in iter_blocks(self.seed, self.n_pairs, self.block_size):
            x = rng.random((self.block_size, d)) * self.box
            u = rng.standard_normal((self.block_size, d))
            s = rng.random(self.block_size)
            xs.append(x[:count])
            us.append(u[:count])
            ss.append(s[:count])
        x = np.concatenate(xs)
        u = np.concatenate(us)
        u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
        return x, u, np.concatenate(ss)


def _eval(f, pts):
    return np.asarray(f.evaluate(pts) if isinstance(f, DensitySpec) else f(pts), dtype=float)


def intrinsic_modulus(f, nu: float, delta: float, sampler: PairSampler = PairSampler(),
                      d: Optional[int] = None) -> float:
    """Sampled lower estimate of the intrinsic weighted modulus at scale ``delta``.

    Pairs satisfy ||y - x||_2 <= delta sqrt(1 + ||x||_1); the value is the max of
    |f(y) - f(x)| / w_nu(x). Pairs are reflected into the orthant, which only
    shortens them.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    dim = d if d is not None else f.d
    x, u, s = sampler.draw(dim)
    ref = sampler.delta_max if sampler.delta_max is not None else delta
    spread = np.sqrt(1.0 + np.sum(x, axis=1))
    radius = s * ref * spread
    y = np.abs(x + radius[:, None] * u)
    dist = np.linalg.norm(y - x, axis=1)
    ok = dist <= delta * spread
    if not np.any(ok):
        return 0.0
    diff = np.abs(_eval(f, y[ok]) - _eval(f, x[ok])) / polynomial_weight(x[ok], nu)
    return float(np.max(diff))


def holder_seminorm_estimate(f, nu: float, alpha: float, sampler: PairSampler = PairSampler(),
                             d: Optional[int] = None) -> float:
    """Sampled lower estimate of the operator-adapted weighted Hölder seminorm.

    For reporting only; never a certified constant.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    dim = d if d is not None else f.d
    x, u, s = sampler.draw(dim)
    spread = np.sqrt(1.0 + np.sum(x, axis=1))
    lo, hi = math.log(sampler.r_min), math.log(max(sampler.box, sampler.r_min * 10))
    radius = np.exp(lo + s * (hi - lo)) * spread
    y = np.abs(x + radius[:, None] * u)
    dist = np.linalg.norm(y - x, axis=1)
    ok = dist > 0
    num = np.abs(_eval(f, y[ok]) - _eval(f, x[ok]))
    den = polynomial_weight(x[ok], nu) * (dist[ok] / spread[ok]) ** alpha
    return float(np.max(num / den)) if np.any(ok) else 0.0


def certified_seminorm(f: DensitySpec, alpha: Optional[float] = None) -> Optional[float]:
    """Analytic upper bound on the weighted Hölder seminorm, valid for every nu >= 0.

    Available for compactly supported densities with a global Hölder constant.
    Near the support the ratio is at most H (1 + ||x||_1)^(alpha/2); far away
    only y in the support matters, so it is at most
    sup_f d^(alpha/2) (1 + t)^(alpha/2) / (t - d S)^alpha with t = ||x||_1.
    The first bound increases in t and the second decreases, so the supremum
    of their minimum sits at the crossing, bracketed by bisection.
    """
    if f.holder is None or f.holder.side is not None or f.support_box is None or f.sup_bound is None:
        return None
    a = f.holder.alpha if alpha is None else alpha
    if a != f.holder.alpha:
        return None
    H, F, d = f.holder.H, f.sup_bound, f.d
    dS = d * max(f.support_box)
    if H == 0:
        return 0.0

    def near(t):
        return H * (1.0 + t) ** (a / 2)

    def far(t):
        return F * d ** (a / 2) * (1.0 + t) ** (a / 2) / (t - dS) ** a

    lo, hi = dS, dS + 1.0
    while far(hi) > near(hi):
        hi = dS + 2.0 * (hi - dS)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if far(mid) > near(mid):
            lo = mid
        else:
            hi = mid
    return near(hi)
