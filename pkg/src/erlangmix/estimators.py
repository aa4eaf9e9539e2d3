"""scikit-learn style wrappers around mixture construction, truncation and schedules.

``fit`` takes a :class:`~erlangmix.densities.DensitySpec` (the target is a
known density, not a sample). After fitting, ``transform`` returns the
kernel feature matrix ``phi_m(x)`` of the fitted components, ``predict`` the
mixture density and ``score_samples`` its logarithm.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import kernels
from .densities import DensitySpec, as_density, cell_mass_grid
from .operator import CellMassTable, SupportPolicy, ThresholdPolicy, build_mixture
from .quadrature import QuadratureSpec
from .truncation import ComponentSchedule, TruncationPlan, truncate

__all__ = [
    "check_points",
    "check_density",
    "ErlangMixtureApproximator",
    "TruncatedErlangMixture",
    "ComponentBudgetApproximator",
]


def check_points(X, d: int) -> np.ndarray:
    """Validate an ``(k, d)`` array of points in the positive orthant."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != d:
        raise ValueError(f"X has {X.shape[1]} features but the mixture has dimension {d}")
    if np.any(X < 0):
        raise ValueError("points must lie in the positive orthant")
    return X


def check_density(density, d=None) -> DensitySpec:
    if isinstance(density, DensitySpec):
        return density
    if callable(density):
        if d is None:
            raise ValueError("a plain callable target needs the dimension d")
        return as_density(density, d, normalized=True)
    raise TypeError("fit expects a DensitySpec or a vectorized callable")


class _MixtureOutputMixin(TransformerMixin):
    def transform(self, X):
        """Kernel features ``phi_m(x) = prod_j tau_{m_j,n}(x_j)``, shape ``(k, n_components)``."""
        check_is_fitted(self, "mixture_")
        g = self.mixture_
        X = check_points(X, g.d)
        out = np.ones((X.shape[0], len(g)))
        for j in range(g.d):
            uniq, inv = np.unique(g.shapes[:, j], return_inverse=True)
            mat = np.atleast_2d(kernels.erlang_pdf(uniq[None, :], g.n, X[:, j][:, None]))
            out *= mat[:, inv]
        return out

    def predict(self, X):
        """Mixture density at each row of ``X``."""
        check_is_fitted(self, "mixture_")
        return self.transform(X) @ self.mixture_.weights

    def score_samples(self, X):
        with np.errstate(divide="ignore"):
            return np.log(self.predict(X))

    @property
    def n_components_(self):
        check_is_fitted(self, "mixture_")
        return len(self.mixture_)

    def __sklearn_is_fitted__(self):
        return hasattr(self, "mixture_")


class ErlangMixtureApproximator(_MixtureOutputMixin, BaseEstimator):
    """The operator's Erlang mixture ``K_n f`` for a target density ``f``.

    ``policy`` is ``"auto"`` (support box if the density has one, else mass
    threshold), ``"support"`` or ``"threshold"``.
    """

    def __init__(self, n=16, policy="auto", residual_tol=1e-10, max_cells=4_000_000,
                 quad_order=8):
        self.n = n
        self.policy = policy
        self.residual_tol = residual_tol
        self.max_cells = max_cells
        self.quad_order = quad_order

    def _policy(self, f):
        if self.policy == "support" or (self.policy == "auto" and f.support_box is not None):
            return SupportPolicy()
        if self.policy in ("threshold", "auto"):
            return ThresholdPolicy(self.residual_tol, max_cells=self.max_cells)
        raise ValueError(f"unknown policy {self.policy!r}")

    def fit(self, density, y=None, d=None):
        f = check_density(density, d)
        quad = QuadratureSpec(order=self.quad_order, refine_order=2 * self.quad_order)
        self.mixture_, self.table_ = build_mixture(f, self.n, self._policy(f), quad)
        self.residual_ = self.mixture_.residual
        self.d_ = f.d
        return self


class TruncatedErlangMixture(_MixtureOutputMixin, BaseEstimator):
    """``K_n f`` cut down to ``F_N`` with the tail mass relocated; exposes ``bound_``."""

    def __init__(self, n=16, N=32, mode="compact", M=None, nu=0.0, p=2.0, eta=0.0,
                 relocation="ell_N"):
        self.n = n
        self.N = N
        self.mode = mode
        self.M = M
        self.nu = nu
        self.p = p
        self.eta = eta
        self.relocation = relocation

    def fit(self, density, y=None, d=None):
        f = check_density(density, d)
        M = self.M
        if self.mode == "compact" and M is None:
            if f.support_box is None:
                raise ValueError("compact mode needs M")
            M = max(f.support_box)
        plan = TruncationPlan(self.mode, self.N, self.n, M=M, nu=self.nu, p=self.p,
                              eta=self.eta, relocation=self.relocation)
        masses = cell_mass_grid(f, self.n, [1] * f.d, [self.N] * f.d)
        self.table_ = CellMassTable(masses, self.n, max(0.0, 1.0 - float(np.sum(masses))))
        res = truncate(self.table_, plan)
        self.mixture_ = res.mixture
        self.bound_ = res.bound
        self.bound_formula_ = res.formula
        self.relocated_mass_ = res.relocated_mass
        self.d_ = f.d
        return self


class ComponentBudgetApproximator(_MixtureOutputMixin, BaseEstimator):
    """A mixture with at most ``K`` components chosen by a component-count schedule."""

    def __init__(self, K=64, schedule="compact", alpha=1.0, M=None, p=2.0, nu=0.0, eta=0.0,
                 B=None, n0=1):
        self.K = K
        self.schedule = schedule
        self.alpha = alpha
        self.M = M
        self.p = p
        self.nu = nu
        self.eta = eta
        self.B = B
        self.n0 = n0

    def fit(self, density, y=None, d=None):
        f = check_density(density, d)
        M = self.M
        if self.schedule == "compact" and M is None:
            if f.support_box is None:
                raise ValueError("compact schedule needs M")
            M = max(f.support_box)
        sched = ComponentSchedule(self.schedule, f.d, self.alpha, M=M,
                                  p=self.p if self.schedule == "weighted_lp" else None,
                                  B=self.B, n0=self.n0)
        n, N = sched(self.K)
        inner = TruncatedErlangMixture(n, N, self.schedule, M, self.nu, self.p, self.eta)
        inner.fit(f)
        self.schedule_ = sched
        self.n_, self.N_ = n, N
        self.mixture_ = inner.mixture_
        self.table_ = inner.table_
        self.bound_ = inner.bound_
        self.predicted_exponent_ = sched.predicted_exponent
        self.d_ = f.d
        return self
