"""Finite truncations of the countable operator mixture and component-count schedules.

Truncating to ``F_N = {1..N}^d`` keeps the cell masses inside the box and moves
the leftover mass ``r_{n,N}`` onto a single relocation component, either
``ell_N = (N+1, ..., N+1)`` or the corner ``(1, ..., 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .operator import CellMassTable, ErlangMixture

__all__ = [
    "MODES",
    "TruncationPlan",
    "TruncationResult",
    "truncation_bound",
    "compact_tail_factor",
    "truncate",
    "ComponentSchedule",
    "ScheduleError",
    "schedule_compact",
    "schedule_weighted_sup",
    "schedule_weighted_lp",
    "default_component_constant",
    "gamma_exponent",
]

MODES = ("compact", "weighted_sup", "weighted_lp", "generic_lp")
TARGETS = ("ell_N", "one")


def compact_tail_factor(n: int, M: float, N: int) -> float:
    """``e^{-nM} (nM)^N / N!`` in log space."""
    lam = n * M
    if lam == 0:
        return 1.0 if N == 0 else 0.0
    return math.exp(-lam + N * math.log(lam) - math.lgamma(N + 1))


@dataclass(frozen=True)
class TruncationPlan:
    """How to cut the index set down to ``F_N`` and where the tail mass goes.

    ``mode`` selects the certificate: ``compact`` (sup over ``[0, M]^d``),
    ``weighted_sup`` (weighted sup norm, any ``nu >= 0``), ``weighted_lp``
    (weighted ``L^p`` with ``eta >= 0``) or ``generic_lp`` (plain ``L^p``).
    """

    mode: str
    N: int
    n: int
    M: Optional[float] = None
    nu: Optional[float] = None
    p: Optional[float] = None
    eta: Optional[float] = None
    relocation: str = "ell_N"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.relocation not in TARGETS:
            raise ValueError(f"relocation must be one of {TARGETS}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.mode == "compact":
            if self.M is None or not self.M > 0:
                raise ValueError("compact mode needs M > 0")
            if self.N < self.n * self.M:
                raise ValueError(f"compact mode needs N >= n M = {self.n * self.M:g}, got N={self.N}")
        if self.mode in ("weighted_lp", "generic_lp"):
            if self.p is None or self.p < 1:
                raise ValueError(f"{self.mode} mode needs p >= 1")
        if self.mode == "weighted_lp" and self.eta is not None and self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.mode == "weighted_sup" and self.nu is not None and self.nu < 0:
            raise ValueError("nu must be nonnegative")

    def target(self, d: int) -> tuple:
        return (self.N + 1,) * d if self.relocation == "ell_N" else (1,) * d


def truncation_bound(plan: TruncationPlan, d: int, relocated_mass: float = 1.0) -> tuple:
    """Return ``(bound, formula)`` certifying the truncation gap in ``plan.mode``.

    With ``ell_N`` relocation the gap is bounded by twice the largest tail
    kernel size, independent of the relocated mass. With relocation onto the
    corner component the corner kernel does not decay, so the certificate is
    proportional to the relocated mass instead.
    """
    n, N = plan.n, plan.N
    if plan.mode == "generic_lp":
        e = 1.0 - 1.0 / plan.p
        return 2.0 * n ** (d * e) * relocated_mass, "2 n^(d(1-1/p)) r"
    if plan.mode == "compact":
        tail = n ** d * compact_tail_factor(n, plan.M, N)
        if plan.relocation == "ell_N":
            return 2.0 * tail, "2 n^d e^(-nM) (nM)^N / N!"
        return relocated_mass * (tail + n ** d), "r (n^d e^(-nM) (nM)^N / N! + n^d)"
    if plan.mode == "weighted_sup":
        if plan.relocation == "ell_N":
            return 2.0 * n ** d * (N + 1) ** -0.5, "2 n^d (N+1)^(-1/2)"
        return 2.0 * n ** d * relocated_mass, "2 n^d r"
    e = 1.0 - 1.0 / plan.p
    if plan.relocation == "ell_N":
        return (2.0 * n ** (d * e) * (N + 1) ** (-e / 2),
                "2 n^(d(1-1/p)) (N+1)^(-(1-1/p)/2)")
    return 2.0 * n ** (d * e) * relocated_mass, "2 n^(d(1-1/p)) r"


@dataclass(frozen=True, eq=False)
class TruncationResult:
    mixture: ErlangMixture
    bound: float
    formula: str
    relocated_mass: float
    plan: TruncationPlan

    def __iter__(self):
        # unpacks as (mixture, bound)
        return iter((self.mixture, self.bound))


def truncate(table: CellMassTable, plan: TruncationPlan) -> TruncationResult:
    """Keep cell masses in ``F_N`` and relocate the rest to ``plan.target``.

    The emitted mixture has at most ``N^d + 1`` components and weights summing
    to 1. Unpacks as ``(mixture, bound)``.
    """
    if plan.n != table.n:
        raise ValueError(f"plan is for n={plan.n} but the table has n={table.n}")
    d = table.d
    N = plan.N
    if any(s < N for s in table.N_max):
        raise ValueError(
            f"table covers indices up to {table.N_max}; truncation to N={N} needs all of F_N"
        )
    kept = np.array(table.masses[(slice(0, N),) * d], dtype=float)
    outside = table.total - float(np.sum(kept))
    r = max(0.0, outside + table.residual)
    target = plan.target(d)
    idx = np.argwhere(kept > 0)
    shapes = idx + 1
    weights = kept[tuple(idx.T)] if idx.size else np.zeros(0)
    if r > 0:
        hit = np.all(shapes == np.asarray(target), axis=1) if len(shapes) else np.zeros(0, bool)
        if np.any(hit):
            weights = weights.copy()
            weights[np.argmax(hit)] += r
        else:
            shapes = np.vstack([shapes.reshape(-1, d), np.asarray(target)[None, :]])
            weights = np.append(weights, r)
    # mass balance is exact by construction; fold rounding into the residual field
    residual = max(0.0, 1.0 - float(np.sum(weights)))
    if residual < 1e-13:
        residual = 0.0
    g = ErlangMixture(shapes.reshape(-1, d), weights, table.n, residual)
    bound, formula = truncation_bound(plan, d, r)
    return TruncationResult(g, bound, formula, r, plan)


class ScheduleError(ValueError):
    """The component budget is below the schedule's threshold ``K0``."""

    def __init__(self, message, K0):
        super().__init__(message)
        self.K0 = K0


def gamma_exponent(d: int, alpha: float, p: float) -> float:
    """``gamma_{p,alpha} = 2d + alpha p / (p - 1)``; tends to ``2d + alpha`` as p grows."""
    if p == math.inf:
        return 2 * d + alpha
    if not p > 1:
        raise ValueError("p must exceed 1")
    return 2 * d + alpha * p / (p - 1)


def default_component_constant(N_of_n, growth: float, d: int, n_scan: int = 1000) -> float:
    """Smallest ``B`` with ``N_n^d + 1 <= B n^growth`` for every n >= 1.

    Scanned exactly for ``n <= n_scan``; beyond, ``N_n <= c n^e + 1`` gives a
    decreasing analytic bound evaluated at ``n_scan + 1``.
    """
    best = 0.0
    for n in range(1, n_scan + 1):
        best = max(best, (N_of_n(n) ** d + 1) / n ** growth)
    m = n_scan + 1
    tail = ((N_of_n(m) + 1) ** d + 1) / m ** growth
    return max(best, tail)


@dataclass(frozen=True)
class ComponentSchedule:
    """Link a component budget K to a scale n(K) and an index cap N(n).

    ``mode`` is ``compact``, ``weighted_sup`` or ``weighted_lp``. The budget
    relation is ``N_n^d + 1 <= B n^growth`` with ``n(K) = floor((K/B)^(1/growth))``,
    which guarantees at most K components. ``n0`` sets the threshold
    ``K0 = ceil(B (2 n0)^growth)``.
    """

    mode: str
    d: int
    alpha: float
    M: Optional[float] = None
    p: Optional[float] = None
    B: Optional[float] = None
    n0: int = 1

    def __post_init__(self):
        if self.mode not in ("compact", "weighted_sup", "weighted_lp"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.mode == "compact" and (self.M is None or not self.M > 0):
            raise ValueError("compact schedule needs M > 0")
        if self.mode == "weighted_lp" and (self.p is None or not self.p > 1):
            raise ValueError("weighted_lp schedule needs p > 1")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if self.B is None:
            object.__setattr__(self, "B",
                               default_component_constant(self.N_of_n, self.growth, self.d))
        elif not self.B > 0:
            raise ValueError("B must be positive")

    @property
    def index_exponent(self) -> float:
        """Exponent e with ``N_n ~ n^e`` (1 in compact mode)."""
        if self.mode == "compact":
            return 1.0
        if self.mode == "weighted_sup":
            return 2 * self.d + self.alpha
        return gamma_exponent(self.d, self.alpha, self.p)

    @property
    def growth(self) -> float:
        return self.d * self.index_exponent

    @property
    def predicted_exponent(self) -> float:
        """Predicted error exponent in K: ``-alpha / (2 growth)``."""
        return -self.alpha / (2.0 * self.growth)

    @property
    def K0(self) -> int:
        return int(math.ceil(self.B * (2 * self.n0) ** self.growth - 1e-9))

    def N_of_n(self, n: int) -> int:
        if self.mode == "compact":
            return int(math.ceil(n * (self.M + 1) - 1e-12))
        return int(math.ceil(n ** self.index_exponent - 1e-9))

    def n_of_K(self, K: int) -> int:
        if K < self.K0:
            raise ScheduleError(
                f"component budget K={K} is below the threshold K0={self.K0}", self.K0
            )
        n = int(math.floor((K / self.B) ** (1.0 / self.growth) + 1e-12))
        # guard the floor against rounding in the fractional power
        while self.B * n ** self.growth > K:
            n -= 1
        while self.B * (n + 1) ** self.growth <= K:
            n += 1
        return n

    def components(self, n: int) -> int:
        return self.N_of_n(n) ** self.d + 1

    def __call__(self, K: int) -> tuple:
        n = self.n_of_K(int(K))
        return n, self.N_of_n(n)


def schedule_compact(K, d, alpha, M, B_M=None, n0=1):
    """``n(K) = floor((K/B_M)^(1/d))`` and ``N = ceil(n(K)(M+1))``."""
    return ComponentSchedule("compact", d, alpha, M=M, B=B_M, n0=n0)(K)


def schedule_weighted_sup(K, d, alpha, B=None, n0=1):
    """``n(K) = floor((K/B)^(1/[d(2d+alpha)]))`` and ``N = ceil(n(K)^(2d+alpha))``."""
    return ComponentSchedule("weighted_sup", d, alpha, B=B, n0=n0)(K)


def schedule_weighted_lp(K, d, alpha, p, B=None, n0=1):
    """``n(K) = floor((K/B)^(1/(d gamma)))`` and ``N = ceil(n(K)^gamma)``."""
    return ComponentSchedule("weighted_lp", d, alpha, p=p, B=B, n0=n0)(K)
