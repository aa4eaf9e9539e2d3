"""Error norms between densities and mixtures, plus calculators for the error bounds.

Sup norms are grid maxima and therefore *lower* bounds of the true suprema;
every report carries that caveat. Comparisons of the form
``measured <= bound`` are stated in that (testable) direction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp
from scipy import integrate, special

from .densities import DensitySpec, local_modulus
from .operator import CellMassTable, ErlangMixture, mixture_pdf_grid, weighted_moment_constant
from .quadrature import composite_rule

__all__ = [
    "NormSpec",
    "NormResult",
    "ErrorReport",
    "REPORT_COLUMNS",
    "error_norm",
    "error_norm_detail",
    "holder_constant",
    "bound_compact_modulus",
    "bound_compact_holder",
    "bound_weighted_holder",
    "bound_weighted_qualitative",
    "bound_weighted_lp",
    "constant_B",
    "constant_B_quadrature",
    "probability_gap_bound",
    "lev_gap_bound",
    "lp_event_bound",
    "sup_cdf_gap",
    "symbolic_constants",
    "report_constants",
    "GRID_CAVEAT",
]

GRID_CAVEAT = "grid maximum: lower bound of the true supremum"


@dataclass(frozen=True)
class NormSpec:
    """Which error norm to measure and how finely.

    ``lp``: ``(int |f - g|^p / w_eta)^(1/p)`` by composite Gauss-Legendre with
    ``panels`` panels of ``order`` nodes per axis, on a box chosen so both
    arguments have mass below ``tail_eps`` outside.
    ``sup_box``: grid max of ``|f - g|`` on ``[0, M]^d`` with ``grid`` points per axis.
    ``weighted_sup``: grid max of ``|f - g| / w_nu``; the box grows until the
    exterior contribution is certified below ``exterior_tol``.
    """

    kind: str
    p: float = 1.0
    eta: float = 0.0
    nu: float = 0.0
    M: Optional[float] = None
    grid: int = 401
    panels: int = 64
    order: int = 8
    tail_eps: float = 1e-10
    exterior_tol: float = 1e-10
    refine_check: bool = True
    refine_rtol: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("lp", "sup_box", "weighted_sup"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.eta < 0 or self.nu < 0:
            raise ValueError("eta and nu must be nonnegative")
        if self.grid < 2:
            raise ValueError("grid resolution must be >= 2 per axis")
        if self.kind == "sup_box" and (self.M is None or not self.M > 0):
            raise ValueError("sup_box needs M > 0")

    @classmethod
    def lp(cls, p=1.0, eta=0.0, **kw):
        return cls("lp", p=p, eta=eta, **kw)

    @classmethod
    def sup_box(cls, M, grid=401, **kw):
        return cls("sup_box", M=M, grid=grid, **kw)

    @classmethod
    def weighted_sup(cls, nu=0.0, grid=401, **kw):
        return cls("weighted_sup", nu=nu, grid=grid, **kw)


@dataclass(frozen=True)
class NormResult:
    value: float
    tail_bound: float = 0.0
    domain: Optional[float] = None
    caveat: str = ""
    refined_value: Optional[float] = None


class _Evaluable:
    """Uniform view of densities, mixtures, tables and plain callables."""

    def __init__(self, obj, d=None):
        self.obj = obj
        if obj is None:
            # the zero function, so that error_norm(f, None) is the norm of f
            self.d = d
            self.breaks = ()
            self.support = 0.0
            self.tail_sup = lambda L: 0.0
            self.quantile = None
        elif isinstance(obj, DensitySpec):
            self.d = obj.d
            self.breaks = obj.breakpoints or ()
            self.support = max(obj.support_box) if obj.support_box is not None else None
            self.tail_sup = obj.tail_sup
            self.quantile = obj.tail_quantile
        elif isinstance(obj, (ErlangMixture, CellMassTable)):
            g = obj.to_mixture() if isinstance(obj, CellMassTable) else obj
            self.obj = g
            self.d = g.d
            self.breaks = ()
            self.support = None
            self.tail_sup = g.tail_sup
            self.quantile = g.tail_quantile
        elif callable(obj):
            if d is None:
                raise ValueError("plain callables need an explicit dimension")
            self.d = d
            self.breaks = ()
            self.support = None
            self.tail_sup = None
            self.quantile = None
        else:
            raise TypeError(f"cannot evaluate {type(obj).__name__}")

    def grid(self, axes):
        if self.obj is None:
            return np.zeros(tuple(len(t) for t in axes))
        if isinstance(self.obj, ErlangMixture):
            return mixture_pdf_grid(self.obj, axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([v.ravel() for v in mesh], axis=1)
        func = self.obj.evaluate if isinstance(self.obj, DensitySpec) else self.obj
        return np.asarray(func(pts), dtype=float).reshape(mesh[0].shape)

    def breakpoints_axis(self, j):
        if not self.breaks:
            return ()
        return tuple(self.breaks[j]) if j < len(self.breaks) else ()


def _weight_grid(axes, power):
    if power == 0:
        return 1.0
    mesh = np.meshgrid(*axes, indexing="ij")
    s = sum(mesh)
    return (1.0 + s) ** power


def _lp(F, G, spec):
    d = F.d
    if F.quantile is None and F.support is None:
        raise ValueError("Lp norm needs a support box or tail quantile for the first argument")
    if G.quantile is None and G.support is None:
        raise ValueError("Lp norm needs a support box or tail quantile for the second argument")
    eps = spec.tail_eps
    L = 0.0
    tails = []
    for E in (F, G):
        if E.support is not None:
            L = max(L, E.support)
            tails.append((0.0, 0.0))
        else:
            q = E.quantile(eps)
            L = max(L, q)
            tails.append((eps, None))
    L = float(L)
    core = 0.0
    for E in (F, G):
        if E.support is not None:
            core = max(core, E.support)
        elif E.quantile is not None:
            core = max(core, E.quantile(1e-4))
    core = min(core, L) if core > 0 else L

    def measure(panels):
        axes, wts = [], []
        for j in range(d):
            pts = set(np.linspace(0.0, core, panels + 1).tolist())
            if L > core:
                pts.update(np.linspace(core, L, max(panels // 4, 1) + 1).tolist())
            h = core / panels
            for E in (F, G):
                for b in E.breakpoints_axis(j):
                    if 0 < b <= L:
                        # geometric grading resolves algebraic kinks at breakpoints
                        grade = b + h * np.concatenate([-(0.5 ** np.arange(1, 30)),
                                                        0.5 ** np.arange(1, 30)])
                        pts.update(t for t in grade.tolist() + [b] if 0 < t < L)
            breaks = np.array(sorted(pts))
            x, w = composite_rule(breaks, spec.order)
            axes.append(x)
            wts.append(w)
        diff = np.abs(F.grid(axes) - G.grid(axes)) ** spec.p
        if spec.eta:
            diff = diff / _weight_grid(axes, spec.eta)
        out = diff
        for w in wts:
            out = np.tensordot(out, w, axes=([0], [0]))
        return float(out)

    integral = measure(spec.panels)
    refined = measure(2 * spec.panels) if spec.refine_check else None
    # exterior: int |f-g|^p <= 2^(p-1) (sup_f^(p-1) mass_f + sup_g^(p-1) mass_g), weight <= 1
    tail = 0.0
    for E, (mass, _) in zip((F, G), tails):
        if mass:
            s = E.tail_sup(L) if E.tail_sup is not None else math.inf
            tail += mass * (s ** (spec.p - 1) if spec.p > 1 else 1.0)
    tail *= 2 ** (spec.p - 1)
    value = integral ** (1.0 / spec.p)
    tail_root = (integral + tail) ** (1.0 / spec.p) - value
    caveat = ""
    if refined is not None:
        rv = refined ** (1.0 / spec.p)
        if abs(rv - value) > spec.refine_rtol * max(rv, 1e-300) + 1e-14:
            caveat = f"quadrature refinement disagrees: {value:.6g} vs {rv:.6g}"
        value, value_ref = rv, rv
        integral = refined
    else:
        value_ref = None
    return NormResult(value, tail_root, L, caveat, value_ref)


def _sup_box(F, G, spec):
    d = F.d

    def measure(count):
        axes = [np.linspace(0.0, spec.M, count)] * d
        return float(np.max(np.abs(F.grid(axes) - G.grid(axes))))

    value = measure(spec.grid)
    caveat = GRID_CAVEAT
    refined = None
    if spec.refine_check:
        refined = measure(2 * spec.grid - 1)
        if refined > value * (1 + spec.refine_rtol) + 1e-14:
            caveat += f"; refinement increased the max to {refined:.6g}"
        value = max(value, refined)
    return NormResult(value, 0.0, spec.M, caveat, refined)


def _weighted_sup(F, G, spec):
    d = F.d
    if F.tail_sup is None or G.tail_sup is None:
        raise ValueError("weighted sup norm needs tail metadata for both arguments")
    # core region: where almost all of the mass sits
    core = 0.0
    for E in (F, G):
        if E.support is not None:
            core = max(core, E.support)
        if E.quantile is not None:
            core = max(core, E.quantile(1e-6))
    core = max(core, 1e-3)
    L = core
    while (F.tail_sup(L) + G.tail_sup(L)) / (1.0 + L) ** spec.nu >= spec.exterior_tol:
        L *= 2.0
        if L > 1e8:
            raise RuntimeError("weighted sup exterior could not be certified")
    exterior = (F.tail_sup(L) + G.tail_sup(L)) / (1.0 + L) ** spec.nu

    def measure(count):
        inner = np.linspace(0.0, core, count)
        outer = np.linspace(core, L, max(count // 4, 2))[1:] if L > core else np.zeros(0)
        extra = set()
        for E in (F, G):
            for j in range(d):
                extra.update(b for b in E.breakpoints_axis(j) if 0 <= b <= L)
        ax = np.unique(np.concatenate([inner, outer, np.array(sorted(extra))]))
        axes = [ax] * d
        diff = np.abs(F.grid(axes) - G.grid(axes))
        if spec.nu:
            diff = diff / _weight_grid(axes, spec.nu)
        return float(np.max(diff))

    value = measure(spec.grid)
    caveat = GRID_CAVEAT + f"; exterior beyond {L:.4g} certified below {exterior:.2e}"
    refined = None
    if spec.refine_check:
        refined = measure(2 * spec.grid - 1)
        if refined > value * (1 + spec.refine_rtol) + 1e-14:
            caveat += f"; refinement increased the max to {refined:.6g}"
        value = max(value, refined)
    return NormResult(max(value, 0.0), exterior, L, caveat, refined)


def error_norm_detail(f, g, spec: NormSpec, d: Optional[int] = None) -> NormResult:
    """Measure ``||f - g||`` in the norm described by ``spec``, with caveats.

    ``g=None`` stands for the zero function.
    """
    F = _Evaluable(f, d)
    G = _Evaluable(g, d if d is not None else F.d)
    if F.d != G.d:
        raise ValueError(f"dimension mismatch: {F.d} vs {G.d}")
    if spec.kind == "lp":
        return _lp(F, G, spec)
    if spec.kind == "sup_box":
        return _sup_box(F, G, spec)
    return _weighted_sup(F, G, spec)


def error_norm(f, g, spec: NormSpec, d: Optional[int] = None) -> float:
    """``||f - g||`` in the norm ``spec``; see :func:`error_norm_detail`."""
    return error_norm_detail(f, g, spec, d).value


REPORT_COLUMNS = ("metric", "d", "n", "N", "K", "M", "r", "alpha", "nu", "eta", "p",
                  "measured", "bound", "caveat")


@dataclass
class ErrorReport:
    """A measured error with its theoretical bound and the producing parameters."""

    metric: str
    measured: float
    bound: Optional[float] = None
    bound_formula: str = ""
    caveat: str = ""
    d: Optional[int] = None
    n: Optional[int] = None
    N: Optional[int] = None
    K: Optional[int] = None
    M: Optional[float] = None
    r: Optional[float] = None
    alpha: Optional[float] = None
    nu: Optional[float] = None
    eta: Optional[float] = None
    p: Optional[float] = None
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.measured >= 0:
            raise ValueError("measured error must be nonnegative")
        if self.bound is not None and not self.bound >= 0:
            raise ValueError("bound must be nonnegative")

    @property
    def within_bound(self) -> Optional[bool]:
        return None if self.bound is None else self.measured <= self.bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["within_bound"] = self.within_bound
        return out

    def csv_row(self) -> list:
        return ["" if getattr(self, c) is None else getattr(self, c) for c in REPORT_COLUMNS]


def holder_constant(alpha: float, d: int) -> float:
    """``C_{alpha,d} = (1 + d/3)^(alpha/2)``."""
    return (1.0 + d / 3.0) ** (alpha / 2.0)


def bound_compact_modulus(f_meta, M: float, r: float, n: int, d: int,
                          grid_resolution: int = 201) -> float:
    """``omega(f; r) + (2 ||f||_inf / r^2)(d M/n + d/(3 n^2))``.

    ``f_meta`` is a mapping with ``modulus`` and ``sup`` entries, or a
    :class:`DensitySpec` (modulus then estimated by :func:`local_modulus`).
    With a sampled modulus the result is an estimate, not a certificate.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if isinstance(f_meta, DensitySpec):
        if f_meta.sup_bound is None:
            raise ValueError("density has no sup bound")
        omega = local_modulus(f_meta, M, r, grid_resolution)
        sup_f = f_meta.sup_bound
    else:
        omega = float(f_meta["modulus"])
        sup_f = float(f_meta["sup"])
    return omega + 2.0 * sup_f / r ** 2 * (d * M / n + d / (3.0 * n * n))


def bound_compact_holder(H: float, alpha: float, M: float, n: int, d: int, sup_f: float) -> float:
    """``H C_{alpha,d} ((1 + d M)/n)^(alpha/2) + 2 sup_f (d M/n + d/(3 n^2))``."""
    return (H * holder_constant(alpha, d) * ((1.0 + d * M) / n) ** (alpha / 2.0)
            + 2.0 * sup_f * (d * M / n + d / (3.0 * n * n)))


def bound_weighted_holder(seminorm: float, alpha: float, n: int, d: int) -> float:
    """``C_{alpha,d} [f]_{nu,alpha,*} n^(-alpha/2)``."""
    return holder_constant(alpha, d) * seminorm * n ** (-alpha / 2.0)


def bound_weighted_qualitative(norm_f: float, Omega_delta: float, delta: float, nu: float,
                               n: int, d: int) -> float:
    """``Omega + ||f||_{inf,nu} ((1+d/3)/(n delta^2) + sqrt(A_{2nu,d}(1+d/3))/(sqrt(n) delta))``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    c = 1.0 + d / 3.0
    A = weighted_moment_constant(2.0 * nu, d)
    return Omega_delta + norm_f * (c / (n * delta ** 2) + math.sqrt(A * c) / (math.sqrt(n) * delta))


def bound_weighted_lp(H_norm: float, alpha: float, n: int, d: int) -> float:
    """``C_{alpha,d} n^(-alpha/2) ||H||_{p,eta}``."""
    return holder_constant(alpha, d) * n ** (-alpha / 2.0) * H_norm


def _check_B_args(p, eta, nu, d):
    if p < 1 or nu < 0 or d < 1:
        raise ValueError("need p >= 1, nu >= 0, d >= 1")
    if not eta > nu * p + d:
        raise ValueError(f"need eta > nu p + d = {nu * p + d:g} for a finite constant")


def constant_B(p: float, eta: float, nu: float, d: int) -> float:
    """Closed form ``(Gamma(s - d) / Gamma(s))^(1/p)`` with ``s = eta - nu p``.

    This is ``((1/(d-1)!) int_0^inf (1+t)^(nu p - eta) t^(d-1) dt)^(1/p)`` by the
    Beta-function identity.
    """
    _check_B_args(p, eta, nu, d)
    s = eta - nu * p
    return math.exp((special.gammaln(s - d) - special.gammaln(s)) / p)


def constant_B_quadrature(p: float, eta: float, nu: float, d: int) -> float:
    """The same constant by adaptive quadrature of the radial integral."""
    _check_B_args(p, eta, nu, d)
    a = nu * p - eta

    def integrand(t):
        return (1.0 + t) ** a * t ** (d - 1)

    head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    # t = 1/u - 1 maps [1, inf) onto (0, 1/2]
    def mapped(u):
        t = 1.0 / u - 1.0
        return integrand(t) / (u * u)

    tail, _ = integrate.quad(mapped, 0.0, 0.5, epsabs=0, epsrel=1e-13, limit=200)
    return ((head + tail) / math.factorial(d - 1)) ** (1.0 / p)


def probability_gap_bound(l1_error: float) -> float:
    """``|P_f(A) - P_g(A)| <= ||f - g||_1`` for every event A."""
    return float(l1_error)


def lev_gap_bound(l1_error: float, M: float) -> float:
    """Limited expected values ``E min(X, M)`` differ by at most ``M ||f - g||_1``."""
    return float(M) * float(l1_error)


def lp_event_bound(lp_error: float, p: float, measure: float) -> float:
    """Hölder: ``|P_f(A) - P_g(A)| <= |A|^(1/q) ||f - g||_p`` with ``1/p + 1/q = 1``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return float(lp_error)
    q = p / (p - 1.0)
    return float(measure) ** (1.0 / q) * float(lp_error)


def sup_cdf_gap(cdf_f: Callable, cdf_g: Callable, xs) -> float:
    """Max of ``|F(x) - G(x)|`` over the points ``xs``."""
    xs = np.asarray(xs, dtype=float)
    return float(np.max(np.abs(np.asarray(cdf_f(xs)) - np.asarray(cdf_g(xs)))))


def symbolic_constants() -> dict:
    """Closed forms of the rate constants and exponents as sympy expressions."""
    alpha, d, p, K = sp.symbols("alpha d p K", positive=True)
    C = (1 + d / 3) ** (alpha / 2)
    gamma = 2 * d + alpha * p / (p - 1)
    return {
        "C_alpha_d": C,
        "gamma_p_alpha": gamma,
        "gamma_limit_p_inf": sp.limit(gamma, p, sp.oo),
        "scale_exponent": -alpha / 2,
        "compact_component_exponent": -alpha / (2 * d),
        "weighted_sup_component_exponent": -alpha / (2 * d * (2 * d + alpha)),
        "weighted_lp_component_exponent": -alpha / (2 * d * gamma),
        "symbols": (alpha, d, p, K),
    }


def report_constants(alpha: float, d: int, p: Optional[float] = None) -> dict:
    """Numeric instantiation of :func:`symbolic_constants`, as strings and floats."""
    sym = symbolic_constants()
    a, dd, pp, _ = sym["symbols"]
    subs = {a: sp.nsimplify(alpha), dd: int(d)}
    out = {"C_alpha_d": str(sym["C_alpha_d"]),
           "C_alpha_d_value": float(sym["C_alpha_d"].subs(subs))}
    if p is not None and p > 1:
        subs[pp] = sp.nsimplify(p)
        out["gamma_p_alpha"] = str(sym["gamma_p_alpha"])
        out["gamma_p_alpha_value"] = float(sym["gamma_p_alpha"].subs(subs))
    return out

