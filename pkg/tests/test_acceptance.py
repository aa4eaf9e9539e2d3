"""Acceptance suite: one test group per criterion, each at its stated tolerance.

Every criterion is computed by a deterministic ``criterion_k(seed)`` function
that returns a JSON-ready record (and CSV text where a study is involved). The
determinism criterion reruns each of them and compares serialized bytes.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from erlangmix import kernels
from erlangmix.cli import main as cli_main
from erlangmix.densities import zoo_density
from erlangmix.io import OUTPUT_DIR_ENV, dumps_json
from erlangmix.metrics import (
    NormSpec,
    constant_B,
    constant_B_quadrature,
    error_norm,
    symbolic_constants,
    sup_cdf_gap,
)
from erlangmix.operator import (
    ThresholdPolicy,
    build_mixture,
    displacement_moments,
    mc_oracle,
    mixture_cdf,
    mixture_pdf,
    operator_eval,
    poisson_raw_moment,
)
from erlangmix.quadrature import composite_rule
from erlangmix.ratelab import RateStudyConfig, run_study
from erlangmix.truncation import TruncationPlan, truncate, truncation_bound

pytestmark = pytest.mark.acceptance

SEED = 20240601


def _zoo(d):
    if d == 1:
        return [
            zoo_density("uniform_box", 1, {"M": 1}),
            zoo_density("product_exponential", 1),
            zoo_density("product_gamma_integer", 1, {"shapes": 3, "rate": 2}),
            zoo_density("holder_bump", 1, {"alpha": 0.5}),
            zoo_density("holder_bump", 1, {"alpha": 1}),
        ]
    return [
        zoo_density("uniform_box", 2, {"M": [1, 2]}),
        zoo_density("product_exponential", 2, {"rates": [1, 2]}),
        zoo_density("product_gamma_integer", 2, {"shapes": [2, 3], "rate": 2}),
        zoo_density("holder_bump", 2, {"alpha": 0.5}),
    ]


def _label(f):
    return f"{f.name}{f.params}" if f.params else f.name


# ---------------------------------------------------------------- criterion 1

def criterion_1(seed):
    rng = np.random.default_rng(seed)
    rows = []
    for f in (zoo_density("uniform_box", 1, {"M": 1}), zoo_density("product_exponential", 1)):
        for n in (1, 4, 16):
            g, _ = build_mixture(f, n, ThresholdPolicy(tol=1e-13) if f.support_box is None else None)
            x = rng.random(100)[:, None] * 4
            diff = float(np.max(np.abs(operator_eval(f, n, x) - mixture_pdf(g, x))))
            rows.append({"density": f.name, "n": n, "weight_sum": float(np.sum(g.weights)),
                         "max_abs_diff": diff})
    return {"rows": rows}


# ---------------------------------------------------------------- criterion 2

def criterion_2(seed):
    cases = [(zoo_density("product_exponential", 1), [1.0]),
             (zoo_density("product_exponential", 2, {"rates": [1, 2]}), [0.7, 1.3])]
    rows = []
    for f, x in cases:
        ref = float(operator_eval(f, 8, x))
        hits = 0
        for t in range(100):
            est, se = mc_oracle(f, 8, x, 100_000, seed + t)
            hits += abs(est - ref) <= 4 * se
        rows.append({"d": f.d, "x": x, "reference": ref, "hits": int(hits), "trials": 100})
    return {"rows": rows}


# ---------------------------------------------------------------- criterion 3

def _exact_second_moment(x, n):
    # per axis E[(N - lam + U)^2] / n^2 with N ~ Poisson(lam), lam = n x_j, U ~ U[0,1]
    total = Fraction(0)
    for xj in x:
        lam = Fraction(n) * Fraction(xj)
        EN, EN2 = poisson_raw_moment(lam, 1), poisson_raw_moment(lam, 2)
        total += (EN2 - 2 * lam * EN + lam * lam + Fraction(1, 3)) / (n * n)
    return total


def criterion_3(seed):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(5):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 21))
        x = np.round(rng.random(d) * 3, 6)
        est, se = mc_oracle(lambda y: np.sum((y - x) ** 2, axis=1), n, x, 1_000_000, seed + 1000 + i)
        closed = displacement_moments(x, n).second_moment
        rows.append({"d": d, "n": n, "x": x.tolist(), "mc": est, "se": se, "closed_form": closed,
                     "rel_err": abs(est - closed) / closed})
    exact = _exact_second_moment([1, 1], 4)
    return {"rows": rows, "exact_x11_n4": str(exact),
            "float_x11_n4": displacement_moments([1, 1], 4, 2).second_moment}


# ---------------------------------------------------------------- criterion 4

def criterion_4(seed):
    sup_ratio = 0.0
    for n in (1, 2, 4, 8):
        for m in range(1, 10_001):
            sup_ratio = max(sup_ratio, kernels.erlang_sup_norm_exact(m, n) * math.sqrt(m) / n)
    lp_ratio = 0.0
    for p in (2, 3):
        for n in (1, 2, 4, 8):
            for mm in range(1, 101):
                hi = (mm + 40 * math.sqrt(mm)) / n
                t, w = composite_rule(np.linspace(0, hi, 201), 10)
                val = float(np.dot(w, kernels.erlang_pdf(mm, n, t) ** p)) ** (1 / p)
                e = 1 - 1 / p
                lp_ratio = max(lp_ratio, val / (n ** e * mm ** (-e / 2)))
    return {"max_sup_ratio": sup_ratio, "max_lp_ratio": lp_ratio}


# ---------------------------------------------------------------- criterion 5

def criterion_5(seed):
    rows = []
    for d in (1, 2):
        for f in _zoo(d):
            for n in (2, 8):
                g, _ = build_mixture(f, n)
                for p in (1, 2):
                    spec = NormSpec.lp(p, panels=64 if d == 1 else 32)
                    kf = error_norm(g, None, spec) ** p
                    ff = error_norm(f, None, spec) ** p
                    rows.append({"density": _label(f), "d": d, "n": n, "p": p,
                                 "Knf_p": kf, "f_p": ff, "excess": kf - ff})
    return {"rows": rows}


# ---------------------------------------------------------------- criterion 6

def _gap(full, g, plan, d):
    if plan.mode == "compact":
        return error_norm(full, g, NormSpec.sup_box(plan.M, grid=401 if d == 1 else 61))
    if plan.mode == "weighted_sup":
        return error_norm(full, g, NormSpec.weighted_sup(plan.nu, grid=401 if d == 1 else 61))
    return error_norm(full, g, NormSpec.lp(plan.p, plan.eta or 0.0, panels=64 if d == 1 else 32))


def criterion_6(seed):
    spot, _ = truncation_bound(TruncationPlan("compact", 4, 2, M=1.0), 1)
    rows = []
    n = 4
    for d in (1, 2):
        for f in _zoo(d):
            _, table = build_mixture(f, n, ThresholdPolicy(N_start=16))
            full = table.to_mixture()
            plans = []
            for N in (4, 8):
                plans += [TruncationPlan("compact", N, n, M=1.0),
                          TruncationPlan("compact", N, n, M=1.0, relocation="one")]
            for N in (2, 6, 12):
                for nu in (0.0, 1.0):
                    plans += [TruncationPlan("weighted_sup", N, n, nu=nu),
                              TruncationPlan("weighted_sup", N, n, nu=nu, relocation="one")]
                for p, eta in ((1.0, 0.0), (2.0, 0.0), (2.0, 1.5)):
                    plans += [TruncationPlan("weighted_lp", N, n, p=p, eta=eta)]
            for plan in plans:
                res = truncate(table, plan)
                gap = _gap(full, res.mixture, plan, d)
                rows.append({"density": _label(f), "d": d, "mode": plan.mode, "N": plan.N,
                             "relocation": plan.relocation, "nu": plan.nu, "p": plan.p,
                             "eta": plan.eta, "gap": gap, "bound": res.bound,
                             "components": len(res.mixture)})
    return {"compact_spot_value": spot, "rows": rows}


# ---------------------------------------------------------------- criterion 7

SCALE_D1 = RateStudyConfig("holder_bump", d=1, params={"alpha": 1.0},
                           values=(4, 8, 16, 32, 64, 128, 256), grid=2001, seed=SEED)
SCALE_D2 = RateStudyConfig("holder_bump", d=2, params={"alpha": 1.0},
                           values=(4, 8, 16, 32, 64, 128, 256), grid=201, window=0.2, seed=SEED)


def criterion_7(seed):
    out = {}
    csv = {}
    for key, cfg in (("d1", SCALE_D1), ("d2", SCALE_D2)):
        study = run_study(cfg)
        out[key] = study.summary()
        csv[key] = study.csv_text()
    return out, csv


# ---------------------------------------------------------------- criterion 8

def _geometric(K0, count):
    return tuple(K0 * 2 ** i for i in range(count))


def _component_configs():
    tent1 = dict(density="holder_bump", params={"alpha": 1.0}, require_slope=False, seed=SEED)
    from erlangmix.truncation import ComponentSchedule

    c1 = ComponentSchedule("compact", 1, 1.0, M=1.0)
    c2 = ComponentSchedule("compact", 2, 1.0, M=1.0)
    w1 = ComponentSchedule("weighted_sup", 1, 1.0)
    return {
        "compact_d1": RateStudyConfig(**tent1, d=1, mode="component_sweep", schedule="compact",
                                      M=1.0, values=_geometric(c1.K0, 8), grid=2001),
        "compact_d2": RateStudyConfig(**tent1, d=2, mode="component_sweep", schedule="compact",
                                      M=1.0, values=_geometric(c2.K0, 7), grid=161),
        "weighted_sup_d1": RateStudyConfig(**tent1, d=1, mode="component_sweep",
                                           schedule="weighted_sup", values=_geometric(w1.K0, 8),
                                           grid=801),
    }


def criterion_8(seed):
    out, csv = {}, {}
    for key, cfg in _component_configs().items():
        study = run_study(cfg)
        out[key] = study.summary()
        csv[key] = study.csv_text()
    return out, csv


# ---------------------------------------------------------------- criterion 9

def criterion_9(seed):
    sym = symbolic_constants()
    a, d, p, _ = sym["symbols"]
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(20):
        dd = int(rng.integers(1, 5))
        pp = float(rng.uniform(1, 4))
        nu = float(rng.uniform(0, 1.5))
        eta = nu * pp + dd + float(rng.uniform(0.1, 4))
        draws.append({"p": pp, "eta": eta, "nu": nu, "d": dd,
                      "closed": constant_B(pp, eta, nu, dd),
                      "quadrature": constant_B_quadrature(pp, eta, nu, dd)})
    lp_study = run_study(RateStudyConfig(
        "holder_bump", d=1, params={"alpha": 1.0}, mode="component_sweep", schedule="weighted_lp",
        p=2.0, values=(64, 128, 256, 512), require_slope=False, seed=seed))
    sup_study = run_study(RateStudyConfig("holder_bump", d=2, params={"alpha": 0.5},
                                          values=(4, 8, 16, 32), grid=41, require_slope=False))
    return {
        "C_symbolic_ok": sp.simplify(sym["C_alpha_d"] - (1 + d / 3) ** (a / 2)) == 0,
        "gamma_symbolic_ok": sp.simplify(sym["gamma_p_alpha"] - (2 * d + a * p / (p - 1))) == 0,
        "C_report": sup_study.constants,
        "gamma_report": lp_study.constants,
        "B_draws": draws,
    }


# ---------------------------------------------------------------- criterion 10

def criterion_10(seed):
    rng = np.random.default_rng(seed)
    rows = []
    for f in _zoo(1):
        approximants = []
        for n in (4, 16):
            g, table = build_mixture(f, n)
            approximants.append((f"K_{n}", g))
            N = max(int(math.ceil(n * 1.5)), 2)
            if all(s >= N for s in table.N_max):
                approximants.append((f"trunc_{n}_{N}",
                                     truncate(table, TruncationPlan("weighted_sup", N, n)).mixture))
        for tag, g in approximants:
            l1 = error_norm(f, g, NormSpec.lp(1))
            xs = rng.random(50) * 4
            gap = sup_cdf_gap(f.cdf, lambda t: mixture_cdf(g, t[:, None]), xs)
            rows.append({"density": _label(f), "approximant": tag, "sup_cdf_gap": gap, "l1": l1})
    return {"rows": rows}


CRITERION_FUNCS = {k: globals()[f"criterion_{k}"] for k in range(1, 11)}
_FIRST = {}


def _serialize(result):
    if isinstance(result, tuple):
        record, csv = result
        return dumps_json(record).encode() + b"".join(csv[k].encode() for k in sorted(csv))
    return dumps_json(result).encode()


def artifact(k):
    """First run of criterion k: ``(result, serialized bytes, seconds)``, cached."""
    if k not in _FIRST:
        t0 = time.perf_counter()
        result = CRITERION_FUNCS[k](SEED)
        secs = time.perf_counter() - t0
        _FIRST[k] = (result, _serialize(result), secs)
    return _FIRST[k]


# ====================================================================== tests


@pytest.mark.criterion(1)
def test_c1_weights_and_representation():
    result, _, secs = artifact(1)
    for row in result["rows"]:
        assert abs(row["weight_sum"] - 1) <= 1e-12, row
        assert row["max_abs_diff"] <= 1e-10, row
    assert secs < 5, f"took {secs:.2f} s"


@pytest.mark.criterion(2)
def test_c2_monte_carlo_representation():
    result, _, secs = artifact(2)
    assert {r["d"] for r in result["rows"]} == {1, 2}
    for row in result["rows"]:
        assert row["hits"] >= 95, row
    assert secs < 60, f"took {secs:.2f} s"


@pytest.mark.criterion(3)
def test_c3_displacement_moments():
    result, _, _ = artifact(3)
    assert len(result["rows"]) == 5
    for row in result["rows"]:
        assert row["d"] <= 3
        assert row["rel_err"] <= 0.01, row
    assert result["exact_x11_n4"] == "13/24"
    assert result["float_x11_n4"] == pytest.approx(13 / 24, rel=1e-15)


@pytest.mark.criterion(4)
def test_c4_shape_decay():
    result, _, secs = artifact(4)
    assert result["max_sup_ratio"] <= 1.0
    assert result["max_lp_ratio"] <= 1.0
    assert secs < 10, f"took {secs:.2f} s"


@pytest.mark.criterion(5)
def test_c5_contraction():
    result, _, _ = artifact(5)
    assert {r["d"] for r in result["rows"]} == {1, 2}
    for row in result["rows"]:
        assert row["Knf_p"] <= row["f_p"] + 1e-6, row


@pytest.mark.criterion(6)
def test_c6_truncation_certificates():
    result, _, _ = artifact(6)
    assert abs(result["compact_spot_value"] - 16 / 6 * math.exp(-2)) <= 1e-12
    assert abs(result["compact_spot_value"] - 0.360894) <= 5e-7
    modes = {r["mode"] for r in result["rows"]}
    assert modes == {"compact", "weighted_sup", "weighted_lp"}
    for row in result["rows"]:
        assert row["gap"] <= row["bound"], row
        assert row["components"] <= row["N"] ** row["d"] + 1


@pytest.mark.criterion(7)
@pytest.mark.parametrize("key,lo,hi", [("d1", -0.65, -0.35), ("d2", -0.7, -0.3)])
def test_c7_scale_rate(key, lo, hi):
    (summary, _), _, secs = artifact(7)
    s = summary[key]
    assert s["bounds_ok"], s
    assert lo <= s["slope"] <= hi, s["slope"]
    assert s["pass"]
    assert secs < 300, f"took {secs:.2f} s"


@pytest.mark.criterion(7)
def test_c7_rows_below_bound():
    (summary, csv), _, _ = artifact(7)
    for key in ("d1", "d2"):
        lines = csv[key].strip().split("\n")[1:]
        assert len(lines) == 7
        for line in lines:
            _, n, err, bound, _ = line.split(",")
            assert float(err) <= float(bound), (key, line)


@pytest.mark.criterion(8)
@pytest.mark.parametrize("key,predicted", [("compact_d1", -1 / 2), ("compact_d2", -1 / 4),
                                           ("weighted_sup_d1", -1 / 6)])
def test_c8_component_guarantee(key, predicted):
    (summary, csv), _, _ = artifact(8)
    s = summary[key]
    assert s["predicted"] == pytest.approx(predicted, rel=1e-12)
    assert s["skipped"] == []
    assert s["components_ok"], s
    assert s["envelope_ok"], s
    # the certified bound (operator + truncation) is the non-trivial one-sided check
    assert s["bounds_ok"], s
    for line in csv[key].strip().split("\n")[1:]:
        _, K, err, bound, comps = line.split(",")
        assert int(comps) <= int(K)
        assert float(err) <= s["envelope_C"] * int(K) ** s["predicted"] * (1 + 1e-12)


@pytest.mark.criterion(9)
def test_c9_constants():
    result, _, _ = artifact(9)
    assert result["C_symbolic_ok"] and result["gamma_symbolic_ok"]
    C = result["C_report"]
    assert C["C_alpha_d"] == str(symbolic_constants()["C_alpha_d"])
    assert C["C_alpha_d_value"] == pytest.approx((1 + 2 / 3) ** 0.25, rel=1e-14)
    G = result["gamma_report"]
    assert G["gamma_p_alpha_value"] == pytest.approx(2 * 1 + 1.0 * 2 / (2 - 1), rel=1e-14)
    assert len(result["B_draws"]) == 20
    for row in result["B_draws"]:
        assert row["eta"] > row["nu"] * row["p"] + row["d"]
        assert abs(row["closed"] - row["quadrature"]) <= 1e-8, row


@pytest.mark.criterion(10)
def test_c10_cdf_gap_below_l1():
    result, _, _ = artifact(10)
    assert len(result["rows"]) >= 10
    for row in result["rows"]:
        assert row["sup_cdf_gap"] <= row["l1"], row


@pytest.mark.criterion(10)
@pytest.mark.parametrize("k", range(1, 11))
def test_c10_byte_identical_reruns(k):
    _, first, _ = artifact(k)
    again = _serialize(CRITERION_FUNCS[k](SEED))
    assert again == first


@pytest.mark.criterion(10)
def test_c10_cli_outputs_byte_identical(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    cfg = tmp_path / "study.json"
    cfg.write_text(dumps_json(SCALE_D1.to_dict() | {"values": [4, 8, 16, 32]}))
    runs = [
        ["approximate", "--density", "product_exponential", "--d", "2", "--n", "3", "--out", "{}.json"],
        ["rate-study", "--config", str(cfg), "--out", "{}"],
        ["verify", "--only", "mc_consistency", "weighted_moment_constant", "--seed", "3"],
    ]
    for argv in runs:
        outs = []
        for tag in ("a", "b"):
            code = cli_main([a.format(tag) if "{}" in a else a for a in argv])
            printed = capsys.readouterr().out.replace(str(tmp_path), "").replace(f"/{tag}.", "/X.")
            assert code == 0
            outs.append(printed)
        assert outs[0] == outs[1]
    # artifacts echo their own output name, so compare with the tag normalized
    for suffix in (".json", ".csv"):
        a = (tmp_path / f"a{suffix}").read_text().replace('"a"', '"X"')
        b = (tmp_path / f"b{suffix}").read_text().replace('"b"', '"X"')
        assert a == b
