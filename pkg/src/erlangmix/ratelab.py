"""Rate studies: sweep the scale n or the component budget K and fit log-log slopes."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .densities import DensitySpec, cell_mass_grid, certified_seminorm, zoo_density
from .metrics import (
    NormSpec,
    bound_compact_holder,
    bound_weighted_holder,
    error_norm_detail,
    report_constants,
)
from .operator import CellMassTable, SupportPolicy, ThresholdPolicy, build_mixture
from .truncation import ComponentSchedule, ScheduleError, TruncationPlan, truncate

__all__ = [
    "RateStudyConfig",
    "RateRow",
    "RateStudy",
    "fit_loglog",
    "run_scale_sweep",
    "run_component_sweep",
    "run_study",
    "DEFAULT_SCALE_GRID",
    "SCALE_WINDOW",
    "COMPONENT_WINDOW",
    "RATE_CSV_COLUMNS",
]

DEFAULT_SCALE_GRID = (4, 8, 16, 32, 64, 128, 256)
SCALE_WINDOW = 0.15
COMPONENT_WINDOW = 0.25
RATE_CSV_COLUMNS = ("sweep_var", "value", "error", "bound", "components")

_CONFIG_KEYS = {
    "density", "d", "params", "mode", "values", "schedule", "norm", "alpha", "M", "nu",
    "p", "eta", "grid", "B", "n0", "seed", "threads", "window", "require_slope",
    "residual_tol", "out",
}


def fit_loglog(rows) -> tuple:
    """Least-squares fit of ``log error = slope log value + intercept``.

    ``rows`` is a sequence of ``(value, error)`` pairs or :class:`RateRow`.
    Returns ``(slope, intercept, r2)``.
    """
    pairs = [(r.value, r.error) if isinstance(r, RateRow) else (r[0], r[1]) for r in rows]
    if len(pairs) < 2:
        raise ValueError("need at least two rows to fit a slope")
    x = np.log(np.array([p[0] for p in pairs], dtype=float))
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.any(~(y > 0)):
        raise ValueError("all errors must be positive for a log-log fit")
    y = np.log(y)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res <= 1e-24 else 0.0)
    return float(slope), float(intercept), float(r2)


@dataclass(frozen=True)
class RateStudyConfig:
    """Parameters of one rate study.

    ``mode`` is ``scale_sweep`` (``values`` are scales n, error measured in
    ``norm``, default the sup on ``[0, M]^d``) or ``component_sweep`` (``values``
    are budgets K, ``schedule`` picks the truncation mode). ``require_slope``
    turns the fitted-slope window into a pass criterion; otherwise only the
    one-sided bound checks decide.
    """

    density: str
    d: int = 1
    params: dict = field(default_factory=dict)
    mode: str = "scale_sweep"
    values: tuple = DEFAULT_SCALE_GRID
    schedule: str = "compact"
    norm: str = "sup_box"
    alpha: Optional[float] = None
    M: Optional[float] = None
    nu: float = 0.0
    p: float = 2.0
    eta: float = 0.0
    grid: int = 401
    B: Optional[float] = None
    n0: int = 1
    seed: int = 0
    threads: int = 1
    window: Optional[float] = None
    require_slope: bool = True
    residual_tol: float = 1e-12
    out: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("scale_sweep", "component_sweep"):
            raise ValueError(f"unknown study mode {self.mode!r}")
        vals = tuple(int(v) for v in self.values)
        if any(v != w for v, w in zip(vals, self.values)):
            raise ValueError("sweep values must be integers")
        if len(vals) < 4:
            raise ValueError("a rate study needs at least 4 sweep points")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if vals[0] < 1:
            raise ValueError("sweep values must be positive")
        object.__setattr__(self, "values", vals)
        if self.norm not in ("sup_box", "weighted_sup", "lp"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.schedule not in ("compact", "weighted_sup", "weighted_lp"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "RateStudyConfig":
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown rate-study fields: {sorted(unknown)}")
        data = dict(data)
        if "values" in data:
            data["values"] = tuple(data["values"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["values"] = list(self.values)
        return out

    def target(self) -> DensitySpec:
        return zoo_density(self.density, self.d, self.params)


@dataclass(frozen=True)
class RateRow:
    sweep_var: str
    value: int
    error: float
    bound: Optional[float]
    components: int
    n: int
    N: Optional[int] = None
    note: str = ""


@dataclass
class RateStudy:
    config: RateStudyConfig
    rows: list
    predicted: float
    window: float
    slope: Optional[float] = None
    intercept: Optional[float] = None
    r2: Optional[float] = None
    fit_note: str = ""
    skipped: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    envelope_C: Optional[float] = None
    caveat: str = ""

    @property
    def slope_ok(self) -> Optional[bool]:
        if self.slope is None:
            return None
        return abs(self.slope - self.predicted) <= self.window + 1e-12

    @property
    def bounds_ok(self) -> bool:
        return all(r.bound is None or r.error <= r.bound for r in self.rows)

    @property
    def components_ok(self) -> bool:
        if self.config.mode != "component_sweep":
            return True
        return all(r.components <= r.value for r in self.rows)

    @property
    def envelope_ok(self) -> bool:
        """``error <= C K^predicted`` on every row with C the largest observed ratio."""
        if self.envelope_C is None:
            return True
        return all(r.error <= self.envelope_C * r.value ** self.predicted * (1 + 1e-12)
                   for r in self.rows)

    @property
    def passed(self) -> bool:
        ok = self.bounds_ok and self.components_ok and self.envelope_ok
        if self.config.require_slope:
            ok = ok and bool(self.slope_ok)
        return ok

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RATE_CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.sweep_var, r.value, repr(float(r.error)),
                        "" if r.bound is None else repr(float(r.bound)), r.components])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "mode": self.config.mode,
            "density": self.config.density,
            "d": self.config.d,
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "predicted": self.predicted,
            "window": [self.predicted - self.window, self.predicted + self.window],
            "slope_ok": self.slope_ok,
            "bounds_ok": self.bounds_ok,
            "components_ok": self.components_ok,
            "envelope_C": self.envelope_C,
            "envelope_ok": self.envelope_ok,
            "require_slope": self.config.require_slope,
            "pass": self.passed,
            "fit_note": self.fit_note,
            "skipped": self.skipped,
            "constants": self.constants,
            "caveat": self.caveat,
            # worker count is left out so summaries do not depend on it
            "config": {k: v for k, v in self.config.to_dict().items() if k != "threads"},
        }


def _support_side(f: DensitySpec, cfg: RateStudyConfig) -> float:
    if cfg.M is not None:
        return float(cfg.M)
    if f.support_box is not None:
        return float(max(f.support_box))
    raise ValueError("compact error needs M (the density has no support box)")


def _alpha(f: DensitySpec, cfg: RateStudyConfig) -> float:
    if cfg.alpha is not None:
        return float(cfg.alpha)
    if f.holder is None:
        raise ValueError("alpha not given and the density carries no Hölder metadata")
    return f.holder.alpha


def _norm_spec(kind: str, cfg: RateStudyConfig, M: Optional[float]) -> NormSpec:
    if kind == "sup_box":
        return NormSpec.sup_box(M, grid=cfg.grid)
    if kind == "weighted_sup":
        return NormSpec.weighted_sup(cfg.nu, grid=cfg.grid)
    return NormSpec.lp(cfg.p, cfg.eta)


def _operator_bound(kind: str, f: DensitySpec, alpha: float, M, n: int, d: int, nu: float):
    """Certified bound on ``||K_n f - f||`` in ``kind``, or None if metadata is missing."""
    h = f.holder
    if kind == "sup_box":
        if h is None or h.alpha != alpha or f.sup_bound is None:
            return None
        if h.side is not None and h.side < M + 1.0:
            return None
        return bound_compact_holder(h.H, alpha, M, n, d, f.sup_bound)
    if kind == "weighted_sup":
        sem = certified_seminorm(f, alpha)
        return None if sem is None else bound_weighted_holder(sem, alpha, n, d)
    return None


def _map(cfg, func, values):
    if cfg.threads == 1:
        return [func(v) for v in values]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(func, values))


def _finish(study: RateStudy) -> RateStudy:
    rows = study.rows
    if len(rows) >= 2 and all(r.error > 0 for r in rows):
        study.slope, study.intercept, study.r2 = fit_loglog(rows)
    elif rows:
        study.fit_note = "zero measured error on some row; slope not fitted"
    else:
        study.fit_note = "no rows"
    return study


def run_scale_sweep(cfg: RateStudyConfig) -> RateStudy:
    """Measure ``||K_n f - f||`` for each n in the sweep and fit the slope in n."""
    if cfg.mode != "scale_sweep":
        raise ValueError("configuration is not a scale sweep")
    f = cfg.target()
    alpha = _alpha(f, cfg)
    M = _support_side(f, cfg) if cfg.norm == "sup_box" else cfg.M
    spec = _norm_spec(cfg.norm, cfg, M)
    policy = SupportPolicy() if f.support_box is not None else ThresholdPolicy(cfg.residual_tol)

    def point(n):
        g, table = build_mixture(f, n, policy)
        meas = error_norm_detail(f, g, spec)
        bound = _operator_bound(cfg.norm, f, alpha, M, n, f.d, cfg.nu)
        return RateRow("n", n, meas.value, bound, len(g), n, None, meas.caveat)

    rows = _map(cfg, point, cfg.values)
    window = cfg.window if cfg.window is not None else SCALE_WINDOW
    study = RateStudy(cfg, rows, -alpha / 2.0, window,
                      constants=report_constants(alpha, f.d, cfg.p if cfg.norm == "lp" else None),
                      caveat=rows[0].note if rows else "")
    return _finish(study)


_SCHEDULE_NORM = {"compact": "sup_box", "weighted_sup": "weighted_sup", "weighted_lp": "lp"}


def run_component_sweep(cfg: RateStudyConfig) -> RateStudy:
    """For each budget K, schedule (n, N), truncate to ``F_N`` and measure ``||g_K - f||``.

    The bound on each row is the operator bound plus the truncation certificate.
    Rows with ``K < K0`` are skipped and listed with a note.
    """
    if cfg.mode != "component_sweep":
        raise ValueError("configuration is not a component sweep")
    f = cfg.target()
    alpha = _alpha(f, cfg)
    d = f.d
    M = _support_side(f, cfg) if cfg.schedule == "compact" else cfg.M
    sched = ComponentSchedule(cfg.schedule, d, alpha, M=M,
                              p=cfg.p if cfg.schedule == "weighted_lp" else None,
                              B=cfg.B, n0=cfg.n0)
    kind = _SCHEDULE_NORM[cfg.schedule]
    spec = _norm_spec(kind, cfg, M)
    valid, skipped = [], []
    for K in cfg.values:
        if K < sched.K0:
            skipped.append({"K": K, "note": f"below K0={sched.K0}"})
        else:
            valid.append(K)

    def point(K):
        n, N = sched(K)
        masses = cell_mass_grid(f, n, [1] * d, [N] * d)
        table = CellMassTable(masses, n, max(0.0, 1.0 - float(np.sum(masses))))
        plan = TruncationPlan(cfg.schedule, N, n, M=M, nu=cfg.nu, p=cfg.p, eta=cfg.eta)
        res = truncate(table, plan)
        meas = error_norm_detail(f, res.mixture, spec)
        op = _operator_bound(kind, f, alpha, M, n, d, cfg.nu)
        bound = None if op is None else op + res.bound
        return RateRow("K", K, meas.value, bound, len(res.mixture), n, N, meas.caveat)

    rows = _map(cfg, point, valid)
    window = cfg.window if cfg.window is not None else COMPONENT_WINDOW
    study = RateStudy(cfg, rows, sched.predicted_exponent, window, skipped=skipped,
                      constants={**report_constants(alpha, d, cfg.p if cfg.schedule == "weighted_lp" else None),
                                 "B": sched.B, "K0": sched.K0, "growth": sched.growth},
                      caveat=rows[0].note if rows else "")
    if rows:
        study.envelope_C = max(r.error / r.value ** study.predicted for r in rows)
    return _finish(study)


def run_study(cfg: RateStudyConfig) -> RateStudy:
    if cfg.mode == "scale_sweep":
        return run_scale_sweep(cfg)
    return run_component_sweep(cfg)
