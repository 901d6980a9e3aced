"""Acceptance criteria, one check per criterion.

Each ``criterion_N`` returns ``(passed, detail)``. Under pytest every check
becomes a test and its verdict line is collected for the terminal summary;
run as a script (``python3 tests/test_acceptance.py``) it prints one
PASS/FAIL line per criterion.
"""

import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from be_stability_lab import harness
from be_stability_lab.cli import main as cli_main
from be_stability_lab.functionals import lsi_deficit
from be_stability_lab.measure import Interval, build_grid_measure, gaussian, mixture, quartic
from be_stability_lab.spectral import poincare_spectrum
from be_stability_lab.stein import (
    PiecewiseLinear,
    absolute_value,
    identity,
    lsi_el_residual,
    ou_poisson_solve,
    poincare_ibp_residual,
)
from be_stability_lab.transport import contraction_check, gaussian_reference, quantile_map

SEED = 20240521
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
SCALED_DELTAS = (0.01, 0.02, 0.05, 0.1, 0.2)


def closed_form_w1(delta):
    return SQRT_2_OVER_PI * (1.0 - math.sqrt(1.0 - delta))


def criterion_1():
    start = time.perf_counter()
    res = poincare_spectrum(gaussian_reference(2001, 8.0), 3)
    elapsed = time.perf_counter() - start
    cp_err = abs(res.poincare_constant - 1.0)
    eig_err = float(np.max(np.abs(res.eigenvalues - [1.0, 2.0, 3.0])))
    ok = cp_err <= 2e-3 and eig_err <= 1e-2 and elapsed < 2.0
    return ok, f"C_P={res.poincare_constant:.6f} max eig err={eig_err:.2e} time={elapsed:.2f}s"


def criterion_2():
    start = time.perf_counter()
    worst_slack, err_1d, err_2d = math.inf, 0.0, 0.0
    ok = True
    for dim, tol in ((1, 1e-4), (2, 3e-3)):
        rep = harness.run_poincare_stability(harness.make_family("gaussian-scaled", SCALED_DELTAS, dim=dim))
        for row, delta in zip(rep.rows, SCALED_DELTAS):
            bound = 26.0 * math.sqrt(row["eps"]) + 5e-3
            err = abs(row["w1"] - closed_form_w1(delta))
            ok &= row["w1"] <= bound and err <= tol
            worst_slack = min(worst_slack, bound - row["w1"])
            if dim == 1:
                err_1d = max(err_1d, err)
            else:
                err_2d = max(err_2d, err)
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    return ok, f"min slack={worst_slack:.4f} W1 err 1D={err_1d:.2e} 2D={err_2d:.2e} time={elapsed:.1f}s"


def criterion_3():
    # denser deltas so that at least four rows have eps <= 0.05
    deltas = (0.001, 0.002, 0.005, 0.01, 0.02, 0.04)
    rep = harness.run_poincare_stability(harness.make_family("gaussian-scaled", deltas))
    fit = rep.exponent
    rows = sorted((r for r in rep.rows if r["eps"] <= harness.RATE_EPS_MAX), key=lambda r: r["eps"])
    normalized = [r["slack"] / math.sqrt(r["eps"]) for r in rows]
    # slack / sqrt(eps) = 26 - W1 / sqrt(eps) must settle at a positive constant as eps -> 0
    settles = all(a >= b for a, b in zip(normalized, normalized[1:]))
    spread = (max(normalized) - min(normalized)) / max(normalized)
    ok = fit is not None and 0.95 <= fit.slope <= 1.05 and min(normalized) > 0 and settles and spread < 0.01
    slope = math.nan if fit is None else fit.slope
    return ok, (
        f"slope={slope:.4f} slack/sqrt(eps) in [{min(normalized):.3f}, {max(normalized):.3f}] over {len(rows)} rows"
    )


def criterion_4():
    rng = np.random.default_rng(SEED)
    worst, count = math.inf, 0
    ok = True
    for delta in (0.01, 0.05, 0.1):
        m = build_grid_measure(quartic(delta))
        u = poincare_spectrum(m, 1).eigenfunctions[0]
        for _ in range(20):
            rep = poincare_ibp_residual(u, PiecewiseLinear.random(rng), m)
            ok &= abs(rep.lhs) <= rep.rhs + 1e-6
            worst = min(worst, rep.slack)
            count += 1
    return ok and count == 60, f"{count} cases, min slack={worst:.3e}"


def criterion_5():
    start = time.perf_counter()
    y = np.linspace(-6.0, 6.0, 1201)
    residual = max(
        ou_poisson_solve(f, y).identity_residual for f in (identity(), lambda t: t**2, np.sin, absolute_value())
    )
    rng = np.random.default_rng(SEED)
    lip = max(ou_poisson_solve(PiecewiseLinear.random(rng), y).lipschitz_estimate for _ in range(500))
    elapsed = time.perf_counter() - start
    ok = residual <= 1e-5 and lip <= math.sqrt(math.pi) + 1e-6 and elapsed < 30.0
    return ok, f"max identity residual={residual:.2e} max|h'|={lip:.4f} (sqrt(pi)={math.sqrt(math.pi):.4f}) time={elapsed:.1f}s"


def criterion_6():
    gamma = gaussian_reference()
    families = [
        harness.make_family("gaussian-scaled", SCALED_DELTAS),
        harness.make_family("quartic", (0.0, 0.01, 0.05, 0.1, 0.2, 1.0)),
        harness.make_family("tilted", (-1.0, 0.5, 2.0)),
        harness.make_family("gaussian", (0.5, 0.8, 1.0)),
    ]
    worst = max(
        contraction_check(quantile_map(gamma, fam.member(v))).max_derivative for fam in families for v in fam.values
    )
    bimodal = contraction_check(quantile_map(gamma, build_grid_measure(mixture(2.0, 0.5))))
    ok = worst <= 1.0 + 1e-6 and bimodal.max_derivative > 1.0 and not bimodal.passed
    return ok, f"convex max T'={worst:.6f} bimodal max T'={bimodal.max_derivative:.3f}"


def criterion_7():
    rep = harness.run_coordinate_variant(harness.make_family("bimodal-rescaled", [1.0], s=0.8))
    row = rep.rows[0]
    bound = math.sqrt(math.pi * row["eps"]) + 5e-3
    ok = (
        not row.get("skipped")
        and abs(row["poincare_constant"] - 1.0) <= 2e-3
        and not row["log_concave"]
        and row["w1"] <= bound
    )
    return ok, (
        f"C_P={row['poincare_constant']:.6f} log-concave={row['log_concave']} eps={row['eps']:.4f} "
        f"W1={row['w1']:.4f} <= {bound:.4f}"
    )


def criterion_8():
    m = build_grid_measure(gaussian(), Interval(-12.0, 12.0, 12001))
    worst_deficit, worst_residual = 0.0, 0.0
    for p in (0.5, 1.0, 2.0):
        u = harness.tilt(m, p)
        worst_deficit = max(worst_deficit, abs(lsi_deficit(u, m).absolute))
        for h in (identity(), absolute_value(), np.sin):
            worst_residual = max(worst_residual, abs(lsi_el_residual(u, h, m).lhs))
    ok = worst_deficit <= 1e-5 and worst_residual <= 1e-5
    return ok, f"max LSI deficit={worst_deficit:.2e} max Euler-Lagrange residual={worst_residual:.2e}"


def criterion_9():
    rep = harness.run_lsi_stability(harness.make_family("gaussian-scaled", SCALED_DELTAS), (0.5, 1.0))
    ratios = [r["ratio"] for r in rep.rows]
    finite = all(r is not None and math.isfinite(r) and r > 0 for r in ratios)
    spread = max(ratios) / min(ratios) if finite else math.inf
    ok = finite and spread <= 10.0
    return ok, f"{len(ratios)} rows, ratio range [{min(ratios):.4f}, {max(ratios):.4f}] max/min={spread:.3f}"


def criterion_10():
    gamma = gaussian_reference()
    lin = harness.run_herbst(PiecewiseLinear(0.0, 1.0, np.zeros(0), np.zeros(0)), gamma, 1.0)
    # L = 2: at L = 1 the |x| input has eps > 1 and the argument does not apply
    L = 2.0
    ab = harness.run_herbst(PiecewiseLinear.from_slopes([0.0], [-L, L]), gamma, L)
    ok = (
        abs(lin.eps) <= 1e-6
        and lin.w1 <= 2e-3
        and ab.hypothesis_ok
        and ab.eps > 0
        and 0.5 <= ab.lam0 <= 1.0
        and ab.chain_ok
    )
    return ok, (
        f"Lx: eps={lin.eps:.1e} W1={lin.w1:.1e}; L|x| (L=2): eps={ab.eps:.4f} lambda0={ab.lam0:.4f} "
        f"slacks almostLSI={ab.almost_lsi_slack:.3e} monotone={ab.monotonicity_min:.3e} mgf={ab.mgf_lower_slack:.3e}"
    )


def criterion_11():
    argv = ["sweep", "--experiment", "poincare-stability", "--family", "quartic", "--deltas", "0.01,0.05,0.1",
            "--n-test-functions", "5", "--seed", "7"]
    with tempfile.TemporaryDirectory() as tmp:
        paths = [Path(tmp) / f"run{i}.json" for i in range(2)]
        codes = [cli_main(argv + ["--out", str(p)]) for p in paths]
        same = paths[0].read_bytes() == paths[1].read_bytes()
        rows = len(json.loads(paths[0].read_text())["rows"])
    return codes == [0, 0] and same, f"exit codes={codes} identical={same} rows={rows}"


CRITERIA = [globals()[f"criterion_{i}"] for i in range(1, 12)]


def _run(i):
    passed, detail = CRITERIA[i - 1]()
    return passed, f"[{'PASS' if passed else 'FAIL'}] criterion {i:2d}: {detail}"


def _record(i):
    from conftest import ACCEPTANCE_LINES

    passed, line = _run(i)
    ACCEPTANCE_LINES[i] = line
    print(line)
    assert passed, line


def test_criterion_01_gaussian_spectrum():
    _record(1)


def test_criterion_02_poincare_stability_certificate():
    _record(2)


def test_criterion_03_rate_exponent():
    _record(3)


def test_criterion_04_approximate_integration_by_parts():
    _record(4)


def test_criterion_05_poisson_solver():
    _record(5)


def test_criterion_06_transport_contraction():
    _record(6)


def test_criterion_07_coordinate_variant_nonconvex():
    _record(7)


def test_criterion_08_lsi_equality_case():
    _record(8)


def test_criterion_09_lsi_ratio_sweep():
    _record(9)


def test_criterion_10_herbst_pipeline():
    _record(10)


def test_criterion_11_determinism():
    _record(11)


if __name__ == "__main__":
    failures = 0
    for i in range(1, len(CRITERIA) + 1):
        passed, line = _run(i)
        failures += not passed
        print(line, flush=True)
    sys.exit(1 if failures else 0)
