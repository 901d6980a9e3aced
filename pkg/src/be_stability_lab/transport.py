"""Monotone maps, Wasserstein distances and the search for a Gaussian split."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .measure import (
    Interval,
    LogConcaveMeasure1D,
    MeasureError,
    ProductMeasure,
    UnsupportedMeasureError,
    build_grid_measure,
    gaussian,
    projected_log_density,
    variance_along,
)

# POT probes optional GPU backends at import time; none are used here.
for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

MAX_ATOMS = 5000
MAX_LATTICE = 128
DEFAULT_LATTICE = 48
SCAN_LATTICE = 24
SUBCELL_NODES = 5
TAIL_QUANTILE = 1e-12
MONOTONE_TOL = 1e-10
MARGINAL_TOL = 1e-9
ANGLE_SAMPLES = 64
ANGLE_TOL = 1e-3
MAX_STARTS = 8

Measure1D = Union[LogConcaveMeasure1D, ProductMeasure]


class TransportError(ValueError):
    pass


def gaussian_reference(n_points: int = 2001, halfwidth: float = 8.0) -> LogConcaveMeasure1D:
    """Standard Gaussian on ``[-halfwidth, halfwidth]``."""
    return build_grid_measure(gaussian(), Interval(-halfwidth, halfwidth, n_points))


def _as_1d(m: Measure1D) -> LogConcaveMeasure1D:
    if isinstance(m, LogConcaveMeasure1D):
        return m
    if m.dim == 1 and not m.is_rotated:
        return m.factors[0]
    raise TransportError("expected a one-dimensional measure")


# ---------------------------------------------------------------------------
# CDFs of the piecewise log-linear density model
# ---------------------------------------------------------------------------
#
# Between nodes the potential is taken linear, so each cell carries an
# exponential density whose CDF inverts in closed form. Left cumulative
# masses are used below the median and right (survival) masses above it, both
# in log space, so quantiles far in either tail keep full relative precision.


def _cell_log_masses(m: LogConcaveMeasure1D) -> np.ndarray:
    V = m.potential
    dV = np.diff(V)
    small = np.abs(dV) < 1e-8
    safe = np.where(small, 1.0, dV)
    ratio = np.where(small, 1.0 - dV / 2.0, -np.expm1(-dV) / safe)
    return math.log(m.h) - V[:-1] + np.log(ratio)


@dataclass(frozen=True)
class _LogCDF:
    cell: np.ndarray  # log masses of cells, normalized
    lower: np.ndarray  # log P(X <= x_i)
    upper: np.ndarray  # log P(X >= x_i)
    log_total: float


def _log_cdf(m: LogConcaveMeasure1D) -> _LogCDF:
    raw = _cell_log_masses(m)
    total = float(logsumexp(raw))
    cell = raw - total
    lower = np.concatenate([[-np.inf], np.logaddexp.accumulate(cell)])
    upper = np.concatenate([np.logaddexp.accumulate(cell[::-1])[::-1], [-np.inf]])
    return _LogCDF(cell, lower, upper, total)


def _log1mexp(a: np.ndarray) -> np.ndarray:
    """``log(1 - exp(a))`` for ``a <= 0``."""
    a = np.minimum(a, 0.0)
    with np.errstate(divide="ignore"):
        return np.where(a > -math.log(2.0), np.log(-np.expm1(a)), np.log1p(-np.exp(a)))


def _solve_in_cell(remaining_log: np.ndarray, anchor_V: np.ndarray, slope_V: np.ndarray, h: float, log_total: float):
    """Distance ``s`` from the anchor node at which a cell has accumulated
    ``exp(remaining_log)`` normalized mass, with ``V`` rising by ``slope_V``
    across the cell in the direction of travel."""
    a = np.exp(remaining_log + log_total + anchor_V)  # = h (1 - e^{-dV s/h}) / dV
    flat = np.abs(slope_V) < 1e-12
    safe = np.where(flat, 1.0, slope_V)
    with np.errstate(invalid="ignore", divide="ignore"):
        curved = -h / safe * np.log1p(-a * safe / h)
    s = np.where(flat, a, curved)
    return np.clip(np.nan_to_num(s, nan=h, posinf=h), 0.0, h)


def _lower_quantile(m: LogConcaveMeasure1D, cdf: _LogCDF, log_q: np.ndarray) -> np.ndarray:
    i = np.clip(np.searchsorted(cdf.lower, log_q, side="right") - 1, 0, m.n_points - 2)
    with np.errstate(invalid="ignore"):
        remaining = log_q + _log1mexp(cdf.lower[i] - log_q)
    V = m.potential
    s = _solve_in_cell(remaining, V[i], V[i + 1] - V[i], m.h, cdf.log_total)
    return m.x[i] + s


def _upper_quantile(m: LogConcaveMeasure1D, cdf: _LogCDF, log_q: np.ndarray) -> np.ndarray:
    j = np.clip(np.searchsorted(-cdf.upper, -log_q, side="left"), 1, m.n_points - 1)
    with np.errstate(invalid="ignore"):
        remaining = log_q + _log1mexp(cdf.upper[j] - log_q)
    V = m.potential
    s = _solve_in_cell(remaining, V[j], V[j - 1] - V[j], m.h, cdf.log_total)
    return m.x[j] - s


def _quantiles(m: LogConcaveMeasure1D, log_lower: np.ndarray, log_upper: np.ndarray) -> np.ndarray:
    """Quantiles of ``m`` at levels given as log lower and log upper tail masses."""
    cdf = _log_cdf(m)
    below = log_lower < math.log(0.5)
    out = np.empty(log_lower.shape)
    out[below] = _lower_quantile(m, cdf, log_lower[below])
    out[~below] = _upper_quantile(m, cdf, log_upper[~below])
    out[np.isneginf(log_lower)] = m.x[0]
    out[np.isneginf(log_upper)] = m.x[-1]
    return out


# ---------------------------------------------------------------------------
# Monotone maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MonotoneMap1D:
    """``T = F_target^{-1} o F_source`` sampled at the source nodes.

    ``interior`` marks nodes whose source lower and upper tail masses both
    exceed ``TAIL_QUANTILE``; beyond them both truncations dominate the map.
    """

    nodes: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    interior: np.ndarray
    source: LogConcaveMeasure1D = field(repr=False)
    target: LogConcaveMeasure1D = field(repr=False)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values)

    def pushforward_cdf_error(self) -> float:
        """Max gap between the source CDF at ``x_i`` and the target CDF at ``T(x_i)``."""
        src = np.exp(_log_cdf(self.source).lower)
        tgt_nodes = self.target.x
        tgt_cdf = np.exp(_log_cdf(self.target).lower)
        return float(np.max(np.abs(np.interp(self.values, tgt_nodes, tgt_cdf) - src)))


def quantile_map(source: Measure1D, target: Measure1D) -> MonotoneMap1D:
    """Monotone rearrangement of ``source`` onto ``target``."""
    source, target = _as_1d(source), _as_1d(target)
    if not np.all(np.isfinite(target.potential)):
        raise TransportError("target density must be strictly positive on its grid")
    cdf = _log_cdf(source)
    values = _quantiles(target, cdf.lower, cdf.upper)
    derivative = np.gradient(values, source.h)
    if np.any(derivative < -MONOTONE_TOL):
        raise TransportError("quantile map failed to be monotone")
    log_q = math.log(TAIL_QUANTILE)
    interior = (cdf.lower > log_q) & (cdf.upper > log_q)
    interior[[0, -1]] = False
    for arr in (values, derivative, interior):
        arr.setflags(write=False)
    return MonotoneMap1D(source.x, values, derivative, interior, source, target)


@dataclass(frozen=True)
class ContractionResult:
    max_derivative: float
    location: float
    passed: bool
    tol: float

    def to_dict(self) -> dict:
        return {
            "max_derivative": self.max_derivative,
            "location": self.location,
            "passed": self.passed,
            "tol": self.tol,
        }


def contraction_check(T: MonotoneMap1D, tol: float = 1e-6) -> ContractionResult:
    """Max interior ``T'``; a contraction passes when it is at most ``1 + tol``."""
    d = np.where(T.interior, T.derivative, -np.inf)
    i = int(np.argmax(d))
    value = float(d[i])
    return ContractionResult(value, float(T.nodes[i]), value <= 1.0 + tol, tol)


# ---------------------------------------------------------------------------
# One-dimensional distances
# ---------------------------------------------------------------------------


def _displacement(a: Measure1D, b: Measure1D):
    a = _as_1d(a)
    T = quantile_map(a, b)
    return a.weights, T.values - a.x


def w1_1d(a: Measure1D, b: Measure1D) -> float:
    """``W_1`` as ``int_0^1 |F_a^{-1} - F_b^{-1}|``, integrated on the grid of ``a``.

    Equal to ``int |F_a - F_b| dx`` on the line.
    """
    w, d = _displacement(a, b)
    return float(np.sum(w * np.abs(d)))


def w2_1d(a: Measure1D, b: Measure1D) -> float:
    w, d = _displacement(a, b)
    return float(math.sqrt(np.sum(w * d**2)))


def w1_cdf_difference(a: Measure1D, b: Measure1D, n_points: int = 200001) -> float:
    """``int |F_a - F_b| dx`` by brute force on a fine common grid."""
    a, b = _as_1d(a), _as_1d(b)
    lo, hi = min(a.grid.lo, b.grid.lo), max(a.grid.hi, b.grid.hi)
    x = np.linspace(lo, hi, n_points)

    def cdf(m):
        c = np.exp(_log_cdf(m).lower)
        return np.interp(x, m.x, c, left=0.0, right=1.0)

    gap = np.abs(cdf(a) - cdf(b))
    return float(np.sum((gap[1:] + gap[:-1]) / 2.0) * (x[1] - x[0]))


# ---------------------------------------------------------------------------
# Exact discrete W1
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source_atoms: np.ndarray
    source_weights: np.ndarray
    target_atoms: np.ndarray
    target_weights: np.ndarray
    coupling: np.ndarray
    cost: float

    def marginal_error(self) -> float:
        return float(
            max(
                np.max(np.abs(self.coupling.sum(axis=1) - self.source_weights)),
                np.max(np.abs(self.coupling.sum(axis=0) - self.target_weights)),
            )
        )

    def entries(self, threshold: float = 0.0):
        """``(source index, target index, mass)`` for couplings above ``threshold``."""
        i, j = np.nonzero(self.coupling > threshold)
        return list(zip(i.tolist(), j.tolist(), self.coupling[i, j].tolist()))


def _atoms(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def w1_discrete(a_atoms, a_weights, b_atoms, b_weights) -> TransportPlan:
    """Exact ``W_1`` between weighted atom sets by min-cost network flow."""
    xa, xb = _atoms(a_atoms), _atoms(b_atoms)
    wa = np.asarray(a_weights, dtype=float)
    wb = np.asarray(b_weights, dtype=float)
    if len(xa) > MAX_ATOMS or len(xb) > MAX_ATOMS:
        raise TransportError(
            f"{len(xa)} x {len(xb)} atoms exceeds the {MAX_ATOMS}-atom limit; coarsen the lattice"
        )
    if xa.shape[1] != xb.shape[1]:
        raise TransportError("atom sets live in different dimensions")
    if wa.shape != (len(xa),) or wb.shape != (len(xb),):
        raise TransportError("one weight per atom is required")
    if np.any(wa < 0) or np.any(wb < 0):
        raise TransportError("weights must be nonnegative")
    if abs(wa.sum() - wb.sum()) > MARGINAL_TOL * max(1.0, wa.sum()):
        raise TransportError(f"total masses differ: {wa.sum():.12g} vs {wb.sum():.12g}")
    wb = wb * (wa.sum() / wb.sum())
    cost = ot.dist(xa, xb, metric="euclidean")
    coupling, log = ot.emd(wa, wb, cost, numItermax=10_000_000, log=True)
    if log.get("warning"):
        raise TransportError(f"network simplex did not converge: {log['warning']}")
    coupling = np.clip(coupling, 0.0, None)
    return TransportPlan(xa, wa, xb, wb, coupling, float(np.sum(coupling * cost)))


# ---------------------------------------------------------------------------
# Gaussian splits in the plane
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianSplit:
    """Standard Gaussian with mean ``p`` along ``sigma``, tensor the marginal on ``sigma``'s complement."""

    sigma: np.ndarray
    p: float
    theta: float

    def to_dict(self) -> dict:
        return {"sigma": [float(v) for v in self.sigma], "p": self.p, "theta": self.theta}


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _frame_log_density(m: ProductMeasure, points: np.ndarray) -> np.ndarray:
    y = points @ m.rotation
    return sum(f.log_density(y[..., i], extend=True) for i, f in enumerate(m.factors))


def _binned(log_density: np.ndarray, coords, area: float, gl_w: np.ndarray):
    """Cell masses and centroids from sub-cell quadrature values.

    ``log_density`` has shape ``(L, L, q, q)``; ``coords`` holds the matching
    ``s`` and ``t`` arrays.
    """
    w = np.exp(log_density) * (gl_w[:, None] * gl_w[None, :]) * area
    mass = w.sum(axis=(2, 3))
    safe = np.where(mass > 0, mass, 1.0)
    centroids = [np.where(mass > 0, (w * c).sum(axis=(2, 3)) / safe, c.mean(axis=(2, 3))) for c in coords]
    return mass, centroids


def _split_lattice(m: ProductMeasure, sigma: np.ndarray, p: float, lattice: int, q: int = SUBCELL_NODES):
    sigma_perp = np.array([-sigma[1], sigma[0]])
    bary = m.barycenter()
    sd_s = math.sqrt(variance_along(m, sigma))
    sd_t = math.sqrt(variance_along(m, sigma_perp))
    c_s, c_t = float(bary @ sigma), float(bary @ sigma_perp)
    lo_s = min(c_s - 8.0 * sd_s, p - 8.0)
    hi_s = max(c_s + 8.0 * sd_s, p + 8.0)
    lo_t, hi_t = c_t - 8.0 * sd_t, c_t + 8.0 * sd_t
    ds, dt = (hi_s - lo_s) / lattice, (hi_t - lo_t) / lattice
    gl_x, gl_w = np.polynomial.legendre.leggauss(q)
    gl_x, gl_w = (gl_x + 1.0) / 2.0, gl_w / 2.0
    s_nodes = (lo_s + ds * (np.arange(lattice)[:, None] + gl_x[None, :]))  # (L, q)
    t_nodes = (lo_t + dt * (np.arange(lattice)[:, None] + gl_x[None, :]))
    S = s_nodes[:, None, :, None] * np.ones((1, lattice, 1, q))
    T = t_nodes[None, :, None, :] * np.ones((lattice, 1, q, 1))
    points = S[..., None] * sigma + T[..., None] * sigma_perp
    log_mu = _frame_log_density(m, points)
    log_perp = projected_log_density(m, sigma_perp, t_nodes.reshape(-1)).reshape(lattice, q)
    log_nu = (
        -0.5 * (S - p) ** 2 - 0.5 * math.log(2.0 * math.pi) + log_perp[None, :, None, :] * np.ones_like(S)
    )
    area = ds * dt
    mu_mass, mu_c = _binned(log_mu, (S, T), area, gl_w)
    nu_mass, nu_c = _binned(log_nu, (S, T), area, gl_w)

    def atoms(mass, cent):
        keep = mass > 1e-15 * mass.sum()
        pts = cent[0][keep][:, None] * sigma + cent[1][keep][:, None] * sigma_perp
        w = mass[keep]
        return pts, w / w.sum()

    return atoms(mu_mass, mu_c), atoms(nu_mass, nu_c)


def w1_to_split(
    m: ProductMeasure, sigma: Sequence[float], p: Optional[float] = None, lattice: int = DEFAULT_LATTICE
) -> float:
    """``W_1(m, N(p sigma, 1 along sigma) x m_perp)`` for a planar product.

    Both measures are binned on a ``lattice x lattice`` grid aligned with
    ``sigma``; cell masses and centroids come from Gauss-Legendre quadrature of
    the exact densities, and the binned measures are compared by exact flow.
    ``p`` defaults to the barycenter projected on ``sigma``.
    """
    if m.dim != 2:
        raise UnsupportedMeasureError("w1_to_split handles planar products")
    if lattice > MAX_LATTICE:
        raise TransportError(f"lattice {lattice} exceeds {MAX_LATTICE}; the flow instance would be too large")
    sigma = np.asarray(sigma, dtype=float)
    sigma = sigma / np.linalg.norm(sigma)
    if p is None:
        p = float(m.barycenter() @ sigma)
    (xa, wa), (xb, wb) = _split_lattice(m, sigma, p, lattice)
    return w1_discrete(xa, wa, xb, wb).cost


def _golden_section(func, lo: float, hi: float, tol: float):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = func(d)
    return (c, fc) if fc <= fd else (d, fd)


def _local_minima(values: np.ndarray) -> list:
    """Indices of circular local minima, best first."""
    prev, nxt = np.roll(values, 1), np.roll(values, -1)
    idx = np.flatnonzero((values <= prev) & (values <= nxt))
    return sorted(idx.tolist(), key=lambda i: (values[i], i))


@dataclass(frozen=True)
class SplitSearch:
    split: GaussianSplit
    w1: float
    scan_angles: np.ndarray
    scan_values: np.ndarray

    def to_dict(self) -> dict:
        return {**self.split.to_dict(), "w1": self.w1}


def best_split_search(
    m: Union[ProductMeasure, LogConcaveMeasure1D],
    n_angles: int = ANGLE_SAMPLES,
    angle_tol: float = ANGLE_TOL,
    scan_lattice: int = SCAN_LATTICE,
    lattice: int = DEFAULT_LATTICE,
) -> SplitSearch:
    """Direction ``sigma`` minimizing ``W_1`` to a Gaussian split.

    Angles in ``[0, pi)`` are scanned on a coarse lattice, the best sample is
    refined by golden section on its bracketing interval, and the winner is
    re-evaluated on the fine lattice. A scan with several local minima on the
    circle is refined from up to ``MAX_STARTS`` of them. Ties go to the
    smaller angle.
    """
    if isinstance(m, LogConcaveMeasure1D) or m.dim == 1:
        m1 = _as_1d(m)
        p = float(np.sum(m1.weights * m1.x))
        ref = build_grid_measure(gaussian(1.0, p))
        w1 = w1_1d(m1, ref)
        split = GaussianSplit(np.array([1.0]), p, 0.0)
        return SplitSearch(split, w1, np.array([0.0]), np.array([w1]))
    if m.dim != 2:
        raise UnsupportedMeasureError("split search covers n <= 2")

    def objective(theta, size):
        return w1_to_split(m, _unit(theta), lattice=size)

    angles = np.arange(n_angles) * (math.pi / n_angles)
    values = np.array([objective(t, scan_lattice) for t in angles])
    step = math.pi / n_angles
    starts = _local_minima(values)[:MAX_STARTS]
    refined = []
    for i in starts:
        t, v = _golden_section(lambda t: objective(t, scan_lattice), angles[i] - step, angles[i] + step, angle_tol)
        refined.append((v, t % math.pi))
    _, theta = min(refined)
    sigma = _unit(theta)
    p = float(m.barycenter() @ sigma)
    w1 = objective(theta, lattice)
    return SplitSearch(GaussianSplit(sigma, p, theta), w1, angles, values)
