"""Parameter sweeps checking the stability bounds, with rate fits and reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .functionals import GridFunction, dirichlet_energy, lsi_deficit, normalize_l2
from .measure import (
    Interval,
    LogConcaveMeasure1D,
    MeasureError,
    Potential,
    ProductMeasure,
    barycenter,
    build_grid_measure,
    check_uniform_convexity,
    gaussian,
    mixture,
    potential_from_spec,
    product,
    scaled,
    variance,
)
from .spectral import HypothesisError, gate_threshold, near_optimal_family, poincare_spectrum
from .stein import PiecewiseLinear, poincare_ibp_residual, tilt_vector
from .transport import best_split_search, w1_1d

SPLIT_CONSTANT = 26.0  # 18 sqrt(2) rounded up
DISCRETIZATION_SLACK = 5e-3
RATE_EPS_MAX = 0.05
POINCARE_TOL = 2e-3
ZERO_EPS = 1e-8
HERBST_GRID = 512
CHAIN_TOL = 1e-6
MONOTONE_TOL = 1e-8
RATIO_ENVELOPE = 10.0


class HarnessError(RuntimeError):
    pass


class RateFitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridOptions:
    n_points: int = 2001
    halfwidth: Optional[float] = None  # overrides the potential's default truncation

    def domain(self, pot: Potential) -> Interval:
        if self.halfwidth is None:
            return pot.default_domain(self.n_points)
        return Interval.centered(pot.mean_hint, self.halfwidth, self.n_points)

    def build(self, pot: Potential) -> LogConcaveMeasure1D:
        return build_grid_measure(pot, self.domain(pot), self.n_points)


def unit_poincare_scale(base: Potential, grid: GridOptions = GridOptions(), tol: float = 1e-10) -> float:
    """Scale ``c`` for which the law of ``c X`` has ``C_P = 1``, by bisection.

    ``C_P`` scales like ``c^2``, so the bracket around ``C_P(X)^{-1/2}`` is tight.
    """

    def cp(c):
        return poincare_spectrum(grid.build(scaled(base, c)), 1).poincare_constant - 1.0

    c0 = 1.0 / math.sqrt(poincare_spectrum(grid.build(base), 1).poincare_constant)
    lo, hi = 0.95 * c0, 1.05 * c0
    if cp(lo) > 0 or cp(hi) < 0:
        raise HarnessError("Poincare constant is not bracketed around the scaling guess")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        val = cp(mid)
        if abs(val) < tol:
            return mid
        if val < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class MeasureFamily:
    """Named one-parameter family of measures.

    ``convex`` families are uniformly log-concave for every listed parameter,
    which :meth:`member` verifies.
    """

    name: str
    parameter: str
    values: tuple
    constructor: Callable[[float], Union[LogConcaveMeasure1D, ProductMeasure]] = field(repr=False)
    convex: bool = True
    dim: int = 1

    def member(self, value: float):
        m = self.constructor(value)
        if self.convex:
            factors = [m] if isinstance(m, LogConcaveMeasure1D) else list(m.factors)
            for f in factors:
                report = check_uniform_convexity(f)
                if not report.passed:
                    raise MeasureError(
                        f"{self.name}({self.parameter}={value}) fails uniform convexity: margin {report.margin:.3e}"
                    )
        return m

    def describe(self) -> dict:
        return {"name": self.name, "parameter": self.parameter, "values": list(self.values), "dim": self.dim}


FAMILY_NAMES = ("gaussian", "gaussian-scaled", "quartic", "tilted", "bimodal-rescaled")


def make_family(
    name: str,
    values: Sequence[float],
    dim: int = 1,
    theta: float = 0.0,
    grid: GridOptions = GridOptions(),
    s: float = 0.8,
) -> MeasureFamily:
    """Built-in families.

    ``gaussian-scaled``: ``N(0, 1 - delta)``, isotropic in 2D.
    ``quartic``: ``x^2/2 + delta x^4``, tensor ``gamma`` in 2D.
    ``tilted``: ``x^2/2 + c x``, tensor ``gamma`` in 2D.
    ``gaussian``: ``N(0, variance)``.
    ``bimodal-rescaled``: mixture with centres ``+-a`` and width ``s``, scaled to ``C_P = 1`` (1D).
    """
    name = name.lower().replace("_", "-")
    values = tuple(float(v) for v in values)
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    gamma = lambda: grid.build(gaussian())

    def lift(build_1d, isotropic=False):
        if dim == 1:
            return build_1d
        return lambda v: product(build_1d(v), build_1d(v) if isotropic else gamma(), theta=theta)

    if name == "gaussian-scaled":
        return MeasureFamily(name, "delta", values, lift(lambda d: grid.build(gaussian(1.0 - d)), True), True, dim)
    if name == "gaussian":
        return MeasureFamily(name, "variance", values, lift(lambda v: grid.build(gaussian(v)), True), True, dim)
    if name == "quartic":
        if any(v < 0 for v in values):
            raise ValueError("quartic delta must be >= 0")
        return MeasureFamily(name, "delta", values, lift(lambda d: grid.build(potential_from_spec("quartic", delta=d))), True, dim)
    if name == "tilted":
        return MeasureFamily(name, "c", values, lift(lambda c: grid.build(potential_from_spec("tilted", lam=c))), True, dim)
    if name == "bimodal-rescaled":
        if dim != 1:
            raise ValueError("bimodal-rescaled is one-dimensional")

        def build(a):
            base = mixture(a, s)
            return grid.build(scaled(base, unit_poincare_scale(base, grid)))

        return MeasureFamily(name, "a", values, build, False, 1)
    raise ValueError(f"unknown family {name!r}; choose from {', '.join(FAMILY_NAMES)}")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    n: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "ci": [self.ci_low, self.ci_high], "n": self.n}


def fit_rate_exponent(eps: Sequence[float], w1: Sequence[float], level: float = 0.95) -> RateFit:
    """Least-squares slope of ``log w1`` against ``log eps`` with a t-interval."""
    eps = np.asarray(eps, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    if eps.size < 4:
        raise RateFitError(f"need at least 4 rows, got {eps.size}")
    if np.any(eps <= 0) or np.any(w1 <= 0):
        raise RateFitError("eps and W1 must be positive to fit on a log scale")
    span = math.log10(eps.max() / eps.min())
    if span < 1.0:
        raise RateFitError(f"eps spans {span:.2f} decades, need at least 1")
    x, y = np.log(eps), np.log(w1)
    fit = stats.linregress(x, y)
    half = float(stats.t.ppf(0.5 + level / 2.0, eps.size - 2) * fit.stderr)
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.slope - half), float(fit.slope + half), int(eps.size))


@dataclass
class StabilityReport:
    experiment: str
    family: dict
    rows: List[dict]
    exponent: Optional[RateFit] = None
    notes: List[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.get("certificate", True) is not False for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "family": self.family,
            "rows": self.rows,
            "exponent": None if self.exponent is None else self.exponent.to_dict(),
            "passed": self.passed,
            "notes": self.notes,
            **self.extra,
        }

    def csv_rows(self):
        slope = None if self.exponent is None else self.exponent.slope
        for r in self.rows:
            yield (
                self.family.get("name"),
                r.get("param"),
                r.get("eps"),
                r.get("w1"),
                r.get("bound"),
                r.get("slack"),
                r.get("sigma_angle"),
                slope,
            )


def _fit_rows(rows, report: StabilityReport, key_eps="eps", key_w1="w1"):
    usable = [r for r in rows if not r.get("skipped") and 0 < r[key_eps] <= RATE_EPS_MAX and r[key_w1] > 0]
    if len(usable) < 4:
        report.notes.append(f"rate fit skipped: {len(usable)} rows with 0 < eps <= {RATE_EPS_MAX}")
        return
    try:
        report.exponent = fit_rate_exponent([r[key_eps] for r in usable], [r[key_w1] for r in usable])
    except RateFitError as exc:
        report.notes.append(f"rate fit skipped: {exc}")


def _unit_gaussian_at(m: LogConcaveMeasure1D) -> LogConcaveMeasure1D:
    b = float(barycenter(m))
    return build_grid_measure(gaussian(1.0, b), Interval.centered(b, 8.0, m.n_points))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_poincare_stability(
    family: MeasureFamily, k: int = 1, seed: int = 0, n_test_functions: int = 0
) -> StabilityReport:
    """``W1`` to the best Gaussian split against ``26 k^{3/2} sqrt(eps)``.

    ``eps`` is the realized spectral deficit of the ``k`` lowest
    eigenfunctions. With ``n_test_functions > 0`` (1D only) each row also
    checks the approximate integration by parts for that many random
    1-Lipschitz test functions.
    """
    if family.dim == 1 and k != 1:
        raise HypothesisError("a one-dimensional family admits k = 1 only")
    if k > family.dim:
        raise HypothesisError(f"k = {k} exceeds n = {family.dim}")
    report = StabilityReport("poincare-stability", family.describe(), [])
    seeds = np.random.SeedSequence(seed).spawn(len(family.values))
    for value, ss in zip(family.values, seeds):
        m = family.member(value)
        try:
            fam = near_optimal_family(m, k)
        except HypothesisError as exc:
            report.rows.append({"param": value, "skipped": True, "reason": str(exc)})
            continue
        eps = fam.eps
        if family.dim == 1:
            p = float(barycenter(m))
            w1 = w1_1d(m, _unit_gaussian_at(m))
            angle, sigma = 0.0, [1.0]
        else:
            search = best_split_search(m)
            w1, p = search.w1, search.split.p
            angle, sigma = search.split.theta, search.split.sigma.tolist()
        bound = SPLIT_CONSTANT * k**1.5 * math.sqrt(eps)
        row = {
            "param": value,
            "eps": eps,
            "eigenvalues": fam.eigenvalues.tolist(),
            "w1": w1,
            "bound": bound,
            "slack": bound - w1,
            "sigma": sigma,
            "sigma_angle": angle,
            "p": p,
            "gate_regime": eps >= gate_threshold(k),
            "certificate": w1 <= bound + DISCRETIZATION_SLACK,
        }
        if n_test_functions and family.dim == 1:
            rng = np.random.default_rng(ss)
            u = fam.functions[0]
            slacks = [poincare_ibp_residual(u, PiecewiseLinear.random(rng), m).slack for _ in range(n_test_functions)]
            row["ibp_min_slack"] = float(min(slacks))
            row["ibp_passed"] = bool(min(slacks) >= -1e-6)
        report.rows.append(row)
    _fit_rows(report.rows, report)
    return report


def run_coordinate_variant(family: MeasureFamily, k: int = 1) -> StabilityReport:
    """``W1`` to the Gaussian at the barycenter against ``k sqrt(pi eps) + 5e-3``.

    Needs ``C_P <= 1`` (checked spectrally); ``eps = 1/Var - 1``. Convexity is
    not required.
    """
    if family.dim != 1:
        raise HarnessError("the coordinate variant is run on one-dimensional families")
    report = StabilityReport("coordinate-variant", family.describe(), [])
    for value in family.values:
        m = family.member(value)
        cp = poincare_spectrum(m, 1).poincare_constant
        margin = check_uniform_convexity(m).margin
        if cp > 1.0 + 5e-3:
            report.rows.append(
                {"param": value, "skipped": True, "reason": f"C_P = {cp:.6f} > 1", "poincare_constant": cp}
            )
            continue
        var = variance(m)
        eps = max(0.0, 1.0 / var - 1.0)
        w1 = w1_1d(m, _unit_gaussian_at(m))
        bound = k * math.sqrt(math.pi * eps)
        report.rows.append(
            {
                "param": value,
                "poincare_constant": cp,
                "variance": var,
                "convexity_margin": margin,
                "log_concave": margin >= -1.0,  # margin is min V'' - 1
                "eps": eps,
                "w1": w1,
                "bound": bound,
                "slack": bound - w1,
                "sigma_angle": 0.0,
                "certificate": w1 <= bound + DISCRETIZATION_SLACK,
            }
        )
    return report


def tilt(m: LogConcaveMeasure1D, p: float) -> GridFunction:
    """``e^{p x / 2}``, normalized in ``L^2(m)``."""
    x = m.x
    logu = p * x / 2.0
    return normalize_l2(GridFunction(np.exp(logu - logu.max()), m), m)


def _lsi_row(m: LogConcaveMeasure1D, u: GridFunction, w1: float) -> dict:
    deficit = lsi_deficit(u, m)
    eps = max(0.0, deficit.relative)
    energy = deficit.energy
    if eps <= ZERO_EPS and w1 > DISCRETIZATION_SLACK:
        raise HarnessError(f"eps = {eps:.2e} but W1 = {w1:.3e}; an exact optimizer must split exactly")
    ratio = w1 * math.sqrt(energy) / math.sqrt(eps) if eps > ZERO_EPS else None
    return {"eps": eps, "lsi_deficit": deficit.absolute, "energy": energy, "w1": w1, "ratio": ratio}


def run_lsi_stability(family: MeasureFamily, p_grid: Sequence[float] = (0.5, 1.0)) -> StabilityReport:
    """Exponential tilts ``e^{p x/2}`` as approximate LSI optimizers.

    The constant in front of ``sqrt(eps)`` is not explicit, so rows record the
    ratio ``W1 (int |grad u|^2)^{1/2} / sqrt(eps)``; the sweep passes when the
    ratios are finite and stay within ``10x`` of each other and of their median.
    """
    if family.dim != 1:
        raise HarnessError("the LSI sweep is run on one-dimensional families")
    report = StabilityReport("lsi-stability", family.describe(), [])
    for value in family.values:
        m = family.member(value)
        w1 = w1_1d(m, _unit_gaussian_at(m))
        for p in p_grid:
            u = tilt(m, p)
            row = {"param": value, "p": float(p), **_lsi_row(m, u, w1), "sigma_angle": 0.0}
            row["tilt"] = tilt_vector(u, m).to_dict()
            report.rows.append(row)
    ratios = np.array([r["ratio"] for r in report.rows if r["ratio"] is not None])
    finite = bool(ratios.size and np.all(np.isfinite(ratios)))
    positive = ratios[ratios > 0] if finite else ratios
    # exact splits give ratio 0 and carry no information about the constant
    spread = float(positive.max() / positive.min()) if finite and positive.size else (1.0 if finite else math.inf)
    median = float(np.median(ratios)) if finite else math.nan
    envelope_ok = finite and spread <= RATIO_ENVELOPE and float(ratios.max()) <= RATIO_ENVELOPE * median
    for r in report.rows:
        r["certificate"] = envelope_ok if r["ratio"] is not None else True
        r["bound"] = RATIO_ENVELOPE * median if finite else None
        r["slack"] = (r["bound"] - r["ratio"]) if finite and r["ratio"] is not None else None
    report.extra["ratio_spread"] = spread
    report.extra["ratio_median"] = median
    return report


@dataclass
class HerbstReport:
    L: float
    mean_F: float
    eps: float
    lam: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    dH: np.ndarray = field(repr=False)
    lam0: float = math.nan
    almost_lsi_slack: float = math.nan
    monotonicity_min: float = math.nan
    mgf_at_lam0: float = math.nan
    mgf_lower_slack: float = math.nan
    w1: float = math.nan
    lsi: dict = field(default_factory=dict)
    hypothesis_ok: bool = True
    note: str = ""

    @property
    def chain_ok(self) -> bool:
        return (
            self.almost_lsi_slack >= -CHAIN_TOL
            and self.monotonicity_min >= -MONOTONE_TOL
            and self.mgf_lower_slack >= -CHAIN_TOL
        )

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "mean_F": self.mean_F,
            "eps": self.eps,
            "lam0": self.lam0,
            "almost_lsi_slack": self.almost_lsi_slack,
            "monotonicity_min": self.monotonicity_min,
            "mgf_at_lam0": self.mgf_at_lam0,
            "mgf_lower_slack": self.mgf_lower_slack,
            "chain_ok": self.chain_ok,
            "w1": self.w1,
            "lsi": self.lsi,
            "hypothesis_ok": self.hypothesis_ok,
            "note": self.note,
        }


def _values_and_derivative(F, m: LogConcaveMeasure1D):
    if isinstance(F, GridFunction):
        return F.values, np.gradient(F.values, m.h)
    return np.asarray(F(m.x), dtype=float), np.asarray(F.derivative(m.x), dtype=float)


def run_herbst(F, m: LogConcaveMeasure1D, L: float, n_lambda: int = HERBST_GRID) -> HerbstReport:
    """Herbst argument for a Lipschitz ``F`` with near-Gaussian concentration.

    ``eps`` solves ``int e^F = exp(int F + L^2/2 (1 - eps/2))``. On the grid
    ``lambda = j/n`` the log-MGF ``H`` and its derivative (the tilted mean of
    ``F``) are exact quadratures. ``lambda_0`` maximizes
    ``lambda H' - H - (1 - eps) lambda^2 L^2 / 2`` over ``[1/2, 1]``; the
    checks are on the ``F - int F`` form, whose entropy is the same.
    """
    values, grad = _values_and_derivative(F, m)
    lip = float(np.max(np.abs(grad[1:-1])))
    if lip > L * (1.0 + 1e-9) + 1e-12:
        raise HarnessError(f"F has Lipschitz constant {lip:.6g} > L = {L}")
    mean_F = float(np.dot(m.weights, values))
    Fc = values - mean_F
    lam = np.arange(1, n_lambda + 1) / n_lambda
    logw = m.log_weights
    expo = logw[None, :] + lam[:, None] * Fc[None, :]
    H = logsumexp(expo, axis=1)
    tilted_w = np.exp(expo - H[:, None])
    dH = tilted_w @ Fc
    eps = 2.0 * (1.0 - 2.0 * H[-1] / L**2)
    report = HerbstReport(L, mean_F, eps, lam, H, dH)
    # d/dlam (lam L^2/2 - H/lam) = L^2/2 - (lam H' - H)/lam^2
    report.monotonicity_min = float(np.min(L**2 / 2.0 - (lam * dH - H) / lam**2))
    if eps >= 1.0:
        report.hypothesis_ok = False
        report.note = f"eps = {eps:.4g} >= 1: outside the range of the argument"
        return report
    G = lam * dH - H - (1.0 - eps) * lam**2 * L**2 / 2.0
    sel = lam >= 0.5
    i = int(np.argmax(np.where(sel, G, -np.inf)))
    if G[i] < -CHAIN_TOL:
        trace = ", ".join(f"{a:.3f}:{b:.6g}" for a, b in zip(lam[sel][::64], H[sel][::64]))
        raise HarnessError(f"no lambda_0 in [1/2, 1] satisfies the entropy inequality; H trace {trace}")
    lam0 = float(lam[i])
    report.lam0 = lam0
    report.almost_lsi_slack = float(G[i])
    report.mgf_at_lam0 = float(math.exp(H[i]))
    report.mgf_lower_slack = float(H[i] - L**2 / 8.0)
    u = normalize_l2(GridFunction(np.exp(lam0 * Fc / 2.0 - np.max(lam0 * Fc / 2.0)), m), m)
    w1 = w1_1d(m, _unit_gaussian_at(m))
    report.w1 = w1
    report.lsi = _lsi_row(m, u, w1)
    return report


def superlevel_mass(F_values: np.ndarray, m: LogConcaveMeasure1D, level: float) -> float:
    """``m({F >= level})`` with ``F`` piecewise linear and ``V`` piecewise linear between nodes."""
    x, V = m.x, m.potential
    f0, f1 = F_values[:-1], F_values[1:]
    h = m.h
    # portion [a, b] of each cell where the linear interpolant is >= level, as offsets from x_i
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = np.where(f1 != f0, (level - f0) / (f1 - f0) * h, np.nan)
    rising = f1 > f0
    a = np.where(rising, np.clip(cross, 0.0, h), 0.0)
    b = np.where(rising, h, np.clip(cross, 0.0, h))
    flat = f1 == f0
    a = np.where(flat, 0.0, a)
    b = np.where(flat, np.where(f0 >= level, h, 0.0), b)
    b = np.maximum(a, b)
    g = np.diff(V) / h
    small = np.abs(g) < 1e-12
    gs = np.where(small, 1.0, g)
    with np.errstate(over="ignore"):
        seg = np.where(small, b - a, (np.exp(-g * a) - np.exp(-g * b)) / gs)
    scale = -V[:-1] + V.min()
    mass = np.exp(scale) * seg
    # normalize with the same cell rule so the full line has mass exactly 1
    full = np.where(small, h, (1.0 - np.exp(-g * h)) / gs)
    return float(np.sum(mass) / np.sum(np.exp(scale) * full))


@dataclass
class TailReport:
    t: float
    tail: float
    eps: float
    eps_raw: float
    vacuous: bool
    herbst: Optional[HerbstReport]
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "tail": self.tail,
            "eps": self.eps,
            "eps_raw": self.eps_raw,
            "vacuous": self.vacuous,
            "herbst": None if self.herbst is None else self.herbst.to_dict(),
            "note": self.note,
        }


def eps_from_tail(tail: float, t: float) -> float:
    """``eps`` for which ``tail = exp(-(1 + eps/2) t^2 / 2)``."""
    return 2.0 * (-2.0 * math.log(tail) / t**2 - 1.0)


def run_tail_bound(F, m: LogConcaveMeasure1D, t: float) -> TailReport:
    """Gaussian-tail saturation as a Herbst input.

    By Markov, ``int e^{t(F - int F)} >= e^{t^2} m(F >= t + int F)``, so a tail
    ``>= exp(-(1 + eps/2) t^2/2)`` feeds ``tF`` with ``L = t`` into
    :func:`run_herbst` with the same ``eps``. The tail bound says nothing once
    ``eps >= 1``, which is reported as vacuous.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    values, grad = _values_and_derivative(F, m)
    if float(np.max(np.abs(grad[1:-1]))) > 1.0 + 1e-9:
        raise HarnessError("F must be 1-Lipschitz")
    mean_F = float(np.dot(m.weights, values))
    tail = superlevel_mass(values, m, t + mean_F)
    if not tail > 0:
        raise HarnessError(f"tail mass at t = {t} is zero at quadrature precision")
    eps_raw = eps_from_tail(tail, t)
    eps = max(0.0, eps_raw)
    vacuous = eps >= 1.0
    herbst = None
    note = ""
    if vacuous:
        note = f"eps = {eps:.4g} >= 1: the tail bound is vacuous at this t"
    else:
        herbst = run_herbst(GridFunction(t * values, m), m, t)
    return TailReport(t, tail, eps, eps_raw, vacuous, herbst, note)


def herbst_report(F_name: str, m: LogConcaveMeasure1D, L: float, family: dict) -> StabilityReport:
    F = {"linear": PiecewiseLinear(0.0, L, np.zeros(0), np.zeros(0)),
         "abs": PiecewiseLinear.from_slopes([0.0], [-L, L])}.get(F_name)
    if F is None:
        raise ValueError(f"unknown F {F_name!r}; choose linear or abs")
    r = run_herbst(F, m, L)
    row = {
        "param": L,
        "eps": r.eps,
        "w1": r.w1,
        "bound": None,
        "slack": r.almost_lsi_slack,
        "sigma_angle": 0.0,
        "certificate": bool(r.chain_ok) if r.hypothesis_ok else True,
        **r.to_dict(),
    }
    return StabilityReport("herbst", {**family, "F": F_name}, [row])


def tail_report(m: LogConcaveMeasure1D, t_values: Sequence[float], family: dict) -> StabilityReport:
    rep = StabilityReport("tail", {**family, "F": "linear"}, [])
    F = PiecewiseLinear(0.0, 1.0, np.zeros(0), np.zeros(0))
    for t in t_values:
        r = run_tail_bound(F, m, t)
        herbst_ok = r.herbst is None or (r.herbst.chain_ok or not r.herbst.hypothesis_ok)
        rep.rows.append(
            {
                "param": float(t),
                "eps": r.eps,
                "w1": None if r.herbst is None else r.herbst.w1,
                "bound": None,
                "slack": None,
                "sigma_angle": 0.0,
                "certificate": bool(herbst_ok),
                **r.to_dict(),
            }
        )
    return rep

