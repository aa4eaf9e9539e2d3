"""Named property checks run by ``erlangmix verify``.

Each check is cheap (a few seconds at most), seeded and deterministic. It
returns ``(ok, detail)``; :func:`run_checks` collects ``(name, ok, detail)``.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np

from . import kernels
from .densities import as_density, zoo_density
from .metrics import (
    NormSpec,
    constant_B,
    constant_B_quadrature,
    error_norm,
    error_norm_detail,
    sup_cdf_gap,
)
from .operator import (
    ErlangMixture,
    build_mixture,
    displacement_moments,
    mc_oracle,
    mixture_cdf,
    mixture_pdf,
    operator_eval,
    poisson_raw_moment,
    weighted_moment_constant,
)
from .quadrature import composite_rule
from .truncation import ComponentSchedule, TruncationPlan, truncate, truncation_bound

CHECKS = []


def check(name):
    def deco(fn):
        CHECKS.append((name, fn))
        return fn
    return deco


@check("kernel_sup_shape_decay")
def _sup_decay(seed):
    worst = 0.0
    for n in (1, 2, 4, 8):
        for m in range(1, 10_001):
            worst = max(worst, kernels.erlang_sup_norm_exact(m, n) / kernels.erlang_sup_norm_bound(m, n))
    return worst <= 1.0, f"max exact/bound ratio {worst:.6f}"


@check("kernel_lp_shape_decay")
def _lp_decay(seed):
    worst = 0.0
    for p in (2, 3):
        for n in (1, 4):
            for m in range(1, 101):
                hi = (m + 40 * math.sqrt(m)) / n
                x, w = composite_rule(np.linspace(0, hi, 201), 10)
                val = float(np.dot(w, kernels.erlang_pdf(m, n, x) ** p)) ** (1 / p)
                worst = max(worst, val / kernels.erlang_lp_norm_bound(m, n, p))
    return worst <= 1.0, f"max quadrature/bound ratio {worst:.6f}"


@check("kernel_normalization")
def _kernel_norm(seed):
    worst = 0.0
    for m in (1, 2, 7, 50, 400):
        for n in (1, 3, 8):
            hi = (m + 40 * math.sqrt(m)) / n
            x, w = composite_rule(np.linspace(0, hi, 401), 10)
            worst = max(worst, abs(float(np.dot(w, kernels.erlang_pdf(m, n, x))) - 1))
    return worst <= 1e-10, f"max |integral - 1| = {worst:.2e}"


@check("cdf_monotone")
def _cdf_monotone(seed):
    x = np.linspace(0, 60, 3001)
    ok = True
    for m in (1, 3, 30, 200):
        c = kernels.erlang_cdf(m, 2.0, x)
        ok &= bool(np.all(np.diff(c) >= 0) and c.min() >= 0 and c.max() <= 1)
    return ok, "nondecreasing with values in [0, 1]"


def _zoo():
    return [zoo_density("uniform_box", 1, {"M": 1}), zoo_density("product_exponential", 1),
            zoo_density("holder_bump", 1, {"alpha": 0.5}),
            zoo_density("product_gamma_integer", 1, {"shapes": 3, "rate": 2})]


@check("representation_identity")
def _representation(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for f in _zoo():
        for n in (1, 4, 16):
            g, _ = build_mixture(f, n)
            x = rng.random(100) * 3
            worst = max(worst, float(np.max(np.abs(operator_eval(f, n, x[:, None])
                                                   - mixture_pdf(g, x[:, None])))))
    return worst <= 1e-10, f"max |direct - mixture| = {worst:.2e}"


@check("mass_balance")
def _mass_balance(seed):
    worst = 0.0
    for f in _zoo() + [zoo_density("product_exponential", 2, {"rates": [1, 2]})]:
        g, _ = build_mixture(f, 8)
        worst = max(worst, abs(float(np.sum(g.weights)) + g.residual - 1))
    return worst <= 1e-12, f"max |sum w + residual - 1| = {worst:.2e}"


@check("tensorization")
def _tensor(seed):
    f2 = zoo_density("product_gamma_integer", 2, {"shapes": [2, 3], "rate": 1.5})
    f1 = [zoo_density("product_gamma_integer", 1, {"shapes": s, "rate": 1.5}) for s in (2, 3)]
    rng = np.random.default_rng(seed)
    pts = rng.random((20, 2)) * 4
    joint = operator_eval(f2, 5, pts)
    prod = operator_eval(f1[0], 5, pts[:, :1]) * operator_eval(f1[1], 5, pts[:, 1:])
    err = float(np.max(np.abs(joint - prod)))
    return err <= 1e-10, f"max |joint - product| = {err:.2e}"


@check("constant_preservation")
def _constant(seed):
    one = as_density(lambda x: np.ones(x.shape[0]), 2)
    rng = np.random.default_rng(seed)
    pts = rng.random((10, 2)) * 5
    err = float(np.max(np.abs(operator_eval(one, 4, pts, tail_tol=1e-12) - 1)))
    return err <= 1e-12, f"max |K_n 1 - 1| = {err:.2e}"


@check("mc_consistency")
def _mc(seed):
    f = zoo_density("product_exponential", 1)
    ref = operator_eval(f, 8, [1.0])
    hits = 0
    trials = 40
    for t in range(trials):
        est, se = mc_oracle(f, 8, [1.0], 20_000, seed + t)
        hits += abs(est - ref) <= 4 * se
    return hits >= 0.95 * trials, f"{hits}/{trials} trials within 4 standard errors"


@check("displacement_second_moment")
def _moments(seed):
    exact = displacement_moments([1, 1], 4).second_moment
    ok = abs(exact - 13 / 24) < 1e-15
    x = np.array([0.7, 1.3])
    est, se = mc_oracle(lambda y: np.sum((y - x) ** 2, axis=1), 5, x, 200_000, seed)
    target = displacement_moments(x, 5).second_moment
    rel = abs(est - target) / target
    return ok and rel < 0.01, f"13/24 exact; MC relative error {rel:.2e}"


@check("touchard_bell")
def _touchard(seed):
    bells = [poisson_raw_moment(1, m) for m in range(8)]
    ok = bells == [1, 1, 2, 5, 15, 52, 203, 877]
    ok &= poisson_raw_moment(Fraction(1, 2), 2) == Fraction(3, 4)
    return ok, "T_m(1) are the Bell numbers"


@check("weighted_moment_constant")
def _weighted_moment(seed):
    worst = 0.0
    for nu in (0.5, 1.0, 2.0):
        A = weighted_moment_constant(nu, 1)
        for n in (1, 4):
            for x in (0.0, 0.5, 3.0):
                est, _ = mc_oracle(lambda y: (1 + np.sum(y, axis=1)) ** nu, n, [x], 20_000, seed)
                worst = max(worst, est / ((1 + x) ** nu) / A)
    return worst <= 1.0, f"max E w(Y) / (A w(x)) = {worst:.4f}"


@check("lp_contraction")
def _contraction(seed):
    worst = -math.inf
    for f in _zoo():
        for n in (2, 8):
            g, _ = build_mixture(f, n)
            for p in (1, 2):
                spec = NormSpec.lp(p, panels=128)
                lhs = error_norm(g, None, spec) ** p
                rhs = error_norm(f, None, spec) ** p
                worst = max(worst, lhs - rhs)
    return worst <= 1e-6, f"max ||K_n f||_p^p - ||f||_p^p = {worst:.2e}"


@check("truncation_certificates")
def _truncation(seed):
    b, _ = truncation_bound(TruncationPlan("compact", 4, 2, M=1.0), 1)
    ok = abs(b - 16 / 6 * math.exp(-2)) <= 1e-12
    f = zoo_density("product_exponential", 1)
    worst = 0.0
    for n, N in ((2, 4), (4, 10), (8, 20)):
        _, table = build_mixture(f, n)
        full = table.to_mixture()
        res = truncate(table, TruncationPlan("compact", N, n, M=1.0))
        gap = error_norm(full, res.mixture, NormSpec.sup_box(1.0, grid=401))
        worst = max(worst, gap / res.bound)
    return ok and worst <= 1.0, f"spot value ok={ok}; max gap/bound {worst:.3e}"


@check("schedule_component_budget")
def _schedule(seed):
    rng = np.random.default_rng(seed)
    ok = True
    for sched in (ComponentSchedule("compact", 1, 1.0, M=1.0),
                  ComponentSchedule("compact", 2, 0.5, M=2.0),
                  ComponentSchedule("weighted_sup", 1, 1.0),
                  ComponentSchedule("weighted_lp", 1, 1.0, p=2.0)):
        for K in rng.integers(sched.K0, 50 * sched.K0, 50):
            n, N = sched(int(K))
            ok &= N ** sched.d + 1 <= K
    return ok, "N^d + 1 <= K for sampled budgets"


@check("constant_B_closed_form")
def _constB(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 5))
        p = float(rng.uniform(1, 3))
        nu = float(rng.uniform(0, 1))
        eta = nu * p + d + float(rng.uniform(0.5, 3))
        worst = max(worst, abs(constant_B(p, eta, nu, d) - constant_B_quadrature(p, eta, nu, d)))
    return worst <= 1e-8, f"max |closed - quadrature| = {worst:.2e}"


@check("probability_gap")
def _prob_gap(seed):
    f = zoo_density("product_exponential", 1)
    g, _ = build_mixture(f, 8)
    l1 = error_norm(f, g, NormSpec.lp(1))
    x = np.random.default_rng(seed).random(50) * 6
    gap = sup_cdf_gap(f.cdf, lambda t: mixture_cdf(g, t[:, None]), x)
    return gap <= l1, f"sup CDF gap {gap:.3e} <= L1 error {l1:.3e}"


def check_mixture(g: ErlangMixture):
    return [(f"mixture.{name}", ok, detail) for name, ok, detail in g.check_invariants()]


def run_checks(seed: int = 0, only=None):
    """Run all registered checks; returns ``[(name, ok, detail, seconds)]``."""
    out = []
    for name, fn in CHECKS:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail, time.perf_counter() - t0))
    return out
