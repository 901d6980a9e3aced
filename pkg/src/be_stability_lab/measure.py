"""Grid representations of log-concave probability measures.

A one-dimensional measure ``e^{-V} dx`` is stored on a uniform grid together
with its normalized composite-trapezoid weights.  Products of up to three
such factors, optionally rotated, cover the multivariate cases.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

BOUNDARY_MASS_THRESHOLD = 1e-10
DEFAULT_TOL_CONVEXITY = 1e-6
DEFAULT_POINTS = 2001
# Gaussian tails at 8 standard deviations: V - V_min = 32.
TRUNCATION_LEVEL = 32.0


class MeasureError(ValueError):
    """Raised when a measure cannot be constructed or normalized."""


class UnsupportedMeasureError(MeasureError):
    """Raised for operations beyond the desk-scale limits (n > 2 rotations)."""


class TruncationWarning(UserWarning):
    """The truncated domain leaves non-negligible mass at its boundary."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    n_points: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise MeasureError("interval endpoints must be finite")
        if not self.lo < self.hi:
            raise MeasureError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise MeasureError(f"n_points must be an integer >= 3, got {self.n_points}")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_points)

    @classmethod
    def centered(cls, center: float, halfwidth: float, n_points: int = DEFAULT_POINTS) -> "Interval":
        return cls(center - halfwidth, center + halfwidth, n_points)


@dataclass(frozen=True, eq=False)
class Potential:
    """A named potential ``V`` with an optional analytic second derivative.

    ``mean_hint`` and ``scale_hint`` locate the bulk of ``e^{-V}`` and drive
    the default truncation ``[m - 8s, m + 8s]``.
    """

    name: str
    params: Mapping[str, float]
    func: Callable[[np.ndarray], np.ndarray]
    second_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    mean_hint: float = 0.0
    scale_hint: float = 1.0
    convex_family: bool = True

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def default_domain(self, n_points: int = DEFAULT_POINTS) -> Interval:
        return Interval.centered(self.mean_hint, 8.0 * self.scale_hint, n_points)

    def describe(self) -> dict:
        return {"family": self.name, **{k: float(v) for k, v in self.params.items()}}


def _tail_scale(func: Callable[[np.ndarray], np.ndarray], center: float) -> float:
    """Half-width ``r`` with ``V(center +- 8 r) - V(center) ~ 32``, by bisection."""
    v0 = float(func(np.array([center]))[0])

    def excess(r):
        vals = func(np.array([center - 8.0 * r, center + 8.0 * r]))
        return float(np.min(vals)) - v0 - TRUNCATION_LEVEL

    lo, hi = 1e-3, 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e4:
            raise MeasureError("potential does not grow fast enough to truncate")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def gaussian(variance: float = 1.0, mean: float = 0.0) -> Potential:
    if not variance > 0:
        raise MeasureError(f"variance must be positive, got {variance}")
    return Potential(
        "gaussian",
        {"variance": variance, "mean": mean},
        lambda x: (x - mean) ** 2 / (2.0 * variance),
        lambda x: np.full_like(x, 1.0 / variance, dtype=float),
        mean_hint=mean,
        scale_hint=math.sqrt(variance),
        convex_family=variance <= 1.0,
    )


def quartic(delta: float) -> Potential:
    """``V(x) = x^2/2 + delta x^4``; uniformly convex for ``delta >= 0``."""
    func = lambda x: 0.5 * x**2 + delta * x**4
    scale = _tail_scale(func, 0.0) if delta > 0 else 1.0
    return Potential(
        "quartic",
        {"delta": delta},
        func,
        lambda x: 1.0 + 12.0 * delta * x**2,
        scale_hint=scale,
        convex_family=delta >= 0,
    )


def tilted(lam: float) -> Potential:
    """``V(x) = x^2/2 + lam x``, a unit Gaussian translated to ``-lam``."""
    return Potential(
        "tilted",
        {"lambda": lam},
        lambda x: 0.5 * x**2 + lam * x,
        lambda x: np.ones_like(x, dtype=float),
        mean_hint=-lam,
    )


def mixture(a: float, s: float) -> Potential:
    """Symmetric mixture ``N(-a, s^2)/2 + N(a, s^2)/2``; log-concave iff ``a <= s``."""
    if not s > 0:
        raise MeasureError(f"s must be positive, got {s}")

    def func(x):
        return -np.logaddexp(-((x - a) ** 2), -((x + a) ** 2)) / (2.0 * s * s)

    def second(x):
        return 1.0 / s**2 - (a**2 / s**4) / np.cosh(a * x / s**2) ** 2

    return Potential(
        "mixture",
        {"a": a, "s": s},
        func,
        second,
        scale_hint=math.sqrt(a * a + s * s),
        convex_family=1.0 / s**2 - a**2 / s**4 >= 1.0,
    )


def cosine_perturbed(amplitude: float) -> Potential:
    """``V(x) = x^2/2 + amplitude cos(x)``; convexity margin ``-|amplitude|``."""
    return Potential(
        "cosine",
        {"amplitude": amplitude},
        lambda x: 0.5 * x**2 + amplitude * np.cos(x),
        lambda x: 1.0 - amplitude * np.cos(x),
        convex_family=amplitude == 0,
    )


def scaled(base: Potential, factor: float) -> Potential:
    """Potential of ``factor * X`` where ``X ~ e^{-base}``."""
    if not factor > 0:
        raise MeasureError("scale factor must be positive")
    second = None
    if base.second_derivative is not None:
        second = lambda x: base.second_derivative(x / factor) / factor**2
    return Potential(
        f"scaled_{base.name}",
        {**base.params, "scale": factor},
        lambda x: base.func(x / factor),
        second,
        mean_hint=factor * base.mean_hint,
        scale_hint=factor * base.scale_hint,
        convex_family=False,
    )


def potential_from_spec(family: str, **params: float) -> Potential:
    """Build a potential from a family name and its parameters."""
    family = family.replace("-", "_").lower()
    if family in ("gaussian", "gaussian_scaled"):
        if "delta" in params and "variance" not in params:
            return gaussian(1.0 - params["delta"])
        return gaussian(params.get("variance", 1.0), params.get("mean", 0.0))
    if family == "quartic":
        return quartic(params["delta"])
    if family == "tilted":
        return tilted(params.get("lambda", params.get("lam", 0.0)))
    if family in ("mixture", "bimodal"):
        return mixture(params["a"], params["s"])
    if family == "cosine":
        return cosine_perturbed(params["amplitude"])
    raise MeasureError(f"unknown potential family {family!r}")


def _trapezoid_log_coefficients(grid: Interval) -> np.ndarray:
    coef = np.full(grid.n_points, math.log(grid.h))
    coef[[0, -1]] += math.log(0.5)
    return coef


@dataclass(frozen=True, eq=False)
class LogConcaveMeasure1D:
    """``e^{-V} dx`` on a uniform grid with normalized trapezoid weights."""

    grid: Interval
    potential: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray
    log_normalizer: float
    convexity_margin: float
    potential_fn: Optional[Potential] = None
    tol_convexity: float = DEFAULT_TOL_CONVEXITY

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    @property
    def uniform(self) -> bool:
        return self.convexity_margin >= -self.tol_convexity

    @property
    def density(self) -> np.ndarray:
        return np.exp(-self.potential - self.log_normalizer)

    def potential_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.potential_fn is not None:
            return self.potential_fn(x)
        return np.interp(x, self.x, self.potential)

    def log_density(self, x, extend: bool = False) -> np.ndarray:
        """Log density at arbitrary points.

        Off the truncated support the value is ``-inf`` unless ``extend`` is set
        and an analytic potential is available.
        """
        x = np.asarray(x, dtype=float)
        out = -self.potential_at(x) - self.log_normalizer
        if extend and self.potential_fn is not None:
            return out
        outside = (x < self.grid.lo) | (x > self.grid.hi)
        return np.where(outside, -np.inf, out)

    def cdf(self) -> np.ndarray:
        """Cumulative trapezoid distribution function at the grid nodes."""
        dens = self.density
        cells = 0.5 * self.h * (dens[1:] + dens[:-1])
        out = np.concatenate([[0.0], np.cumsum(cells)])
        return out / out[-1]


def _convexity_margin(grid: Interval, values: np.ndarray, potential: Optional[Potential]) -> float:
    x = grid.nodes[1:-1]
    if potential is not None and potential.second_derivative is not None:
        second = potential.second_derivative(x)
    else:
        second = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / grid.h**2
    return float(np.min(second) - 1.0)


def build_grid_measure(
    potential_spec: Union[Potential, np.ndarray, Callable],
    domain: Optional[Interval] = None,
    n_points: int = DEFAULT_POINTS,
    tol_convexity: float = DEFAULT_TOL_CONVEXITY,
    warn_truncation: bool = True,
) -> LogConcaveMeasure1D:
    """Discretize ``e^{-V}`` on a grid and normalize it.

    Parameters
    ----------
    potential_spec : Potential, callable or array
        ``V`` as a named potential, a vectorized callable, or values sampled on
        ``domain``'s nodes.
    domain : Interval, optional
        Truncated support.  Defaults to ``[m - 8s, m + 8s]`` from the
        potential's hints; required for sampled and bare callable potentials.
    """
    potential: Optional[Potential] = None
    if isinstance(potential_spec, Potential):
        potential = potential_spec
        if domain is None:
            domain = potential.default_domain(n_points)
        values = potential(domain.nodes)
    elif callable(potential_spec):
        if domain is None:
            raise MeasureError("a domain is required for a bare callable potential")
        potential = Potential("callable", {}, potential_spec)
        values = potential(domain.nodes)
    else:
        if domain is None:
            raise MeasureError("a domain is required for a sampled potential")
        values = np.asarray(potential_spec, dtype=float)
        if values.shape != (domain.n_points,):
            raise MeasureError(
                f"sampled potential has shape {values.shape}, grid has {domain.n_points} nodes"
            )
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise MeasureError("potential must be finite on every grid node")

    log_terms = _trapezoid_log_coefficients(domain) - values
    log_z = float(logsumexp(log_terms))
    if not math.isfinite(log_z):
        raise MeasureError("e^{-V} is not normalizable on this domain")
    log_weights = log_terms - log_z
    weights = np.exp(log_weights)
    weights = weights / math.fsum(weights)

    peak = weights.max()
    if warn_truncation and max(weights[0], weights[-1]) > BOUNDARY_MASS_THRESHOLD * peak:
        warnings.warn(
            f"boundary weight {max(weights[0], weights[-1]):.3e} exceeds "
            f"{BOUNDARY_MASS_THRESHOLD:g} of the peak; widen the domain",
            TruncationWarning,
            stacklevel=2,
        )
    margin = _convexity_margin(domain, values, potential)
    # log Z of the continuous density, for off-grid evaluation.
    log_normalizer = log_z
    return LogConcaveMeasure1D(
        grid=domain,
        potential=values,
        weights=weights,
        log_weights=log_weights,
        log_normalizer=log_normalizer,
        convexity_margin=margin,
        potential_fn=potential,
        tol_convexity=tol_convexity,
    )


@dataclass(frozen=True)
class MarginReport:
    margin: float
    passed: bool
    tol: float


def check_uniform_convexity(m: LogConcaveMeasure1D, tol: float = DEFAULT_TOL_CONVEXITY) -> MarginReport:
    return MarginReport(m.convexity_margin, bool(m.convexity_margin >= -tol), tol)


def barycenter(m: Union[LogConcaveMeasure1D, "ProductMeasure"]):
    if isinstance(m, ProductMeasure):
        return m.barycenter()
    return float(np.dot(m.weights, m.x))


def variance(m: LogConcaveMeasure1D) -> float:
    b = barycenter(m)
    return float(np.dot(m.weights, (m.x - b) ** 2))


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class ProductMeasure:
    """Law of ``R Y`` where ``Y`` has independent factors.

    Functions on a product live on the tensor grid of factor coordinates
    ``y``; ambient coordinates are ``x = R y``.
    """

    factors: tuple
    rotation: Optional[np.ndarray] = None

    def __post_init__(self):
        factors = tuple(self.factors)
        if not 1 <= len(factors) <= 3:
            raise UnsupportedMeasureError("products of 1 to 3 factors are supported")
        object.__setattr__(self, "factors", factors)
        n = len(factors)
        rot = np.eye(n) if self.rotation is None else np.asarray(self.rotation, dtype=float)
        if rot.shape != (n, n):
            raise MeasureError(f"rotation must be {n}x{n}")
        if np.max(np.abs(rot.T @ rot - np.eye(n))) > 1e-10:
            raise MeasureError("rotation is not orthogonal to 1e-10")
        rot = rot.copy()
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        for f in factors:
            if abs(math.fsum(f.weights) - 1.0) > 1e-12:
                raise MeasureError("product factors must be normalized")

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def is_rotated(self) -> bool:
        return not np.allclose(self.rotation, np.eye(self.dim), atol=1e-14)

    @property
    def shape(self) -> tuple:
        return tuple(f.n_points for f in self.factors)

    def factor_barycenter(self) -> np.ndarray:
        return np.array([barycenter(f) for f in self.factors])

    def factor_variances(self) -> np.ndarray:
        return np.array([variance(f) for f in self.factors])

    def barycenter(self) -> np.ndarray:
        return self.rotation @ self.factor_barycenter()

    def covariance(self) -> np.ndarray:
        return self.rotation @ np.diag(self.factor_variances()) @ self.rotation.T

    def joint_weights(self) -> np.ndarray:
        out = self.factors[0].weights
        for f in self.factors[1:]:
            out = np.multiply.outer(out, f.weights)
        return out

    def factor_mesh(self) -> list:
        return np.meshgrid(*[f.x for f in self.factors], indexing="ij")

    def ambient_mesh(self) -> list:
        """Ambient coordinates ``x = R y`` of every tensor-grid node."""
        ys = self.factor_mesh()
        return [sum(self.rotation[i, j] * ys[j] for j in range(self.dim)) for i in range(self.dim)]

    def log_density(self, points: np.ndarray) -> np.ndarray:
        """Log density at ambient ``points`` of shape ``(..., n)``."""
        points = np.asarray(points, dtype=float)
        y = points @ self.rotation  # row-vector form of R^T x
        return sum(f.log_density(y[..., i]) for i, f in enumerate(self.factors))

    def rotate(self, theta: float) -> "ProductMeasure":
        if self.dim != 2:
            raise UnsupportedMeasureError("rotation by angle is defined for n = 2")
        return ProductMeasure(self.factors, rotation_matrix(theta) @ self.rotation)


def product(*factors: LogConcaveMeasure1D, theta: float = 0.0) -> ProductMeasure:
    rot = rotation_matrix(theta) if len(factors) == 2 and theta else None
    return ProductMeasure(tuple(factors), rot)


def variance_along(m: Union[ProductMeasure, LogConcaveMeasure1D], direction: Sequence[float]) -> float:
    """Variance of ``x . direction`` under ``m``, from factor moments."""
    d = np.asarray(direction, dtype=float).reshape(-1)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise MeasureError("direction must be a unit vector")
    if isinstance(m, LogConcaveMeasure1D):
        return variance(m) * float(d[0] ** 2)
    coeffs = m.rotation.T @ d
    return float(np.dot(coeffs**2, m.factor_variances()))


def projected_log_density(
    m: ProductMeasure, direction: Sequence[float], t: np.ndarray, n_tau: int = 2001
) -> np.ndarray:
    """Log density of ``x . direction`` at the points ``t`` for a 2D product.

    Integrates the joint density along the lines ``x . direction = t`` with a
    trapezoid rule in the orthogonal coordinate.
    """
    if m.dim != 2:
        raise UnsupportedMeasureError("projected densities are implemented for n = 2")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    r = m.rotation.T @ d
    r_perp = np.array([-r[1], r[0]])
    reach = max(max(abs(f.grid.lo), abs(f.grid.hi)) for f in m.factors) * math.sqrt(2.0)
    tau = np.linspace(-reach, reach, n_tau)
    dtau = tau[1] - tau[0]
    t = np.asarray(t, dtype=float)
    y1 = t[:, None] * r[0] + tau[None, :] * r_perp[0]
    y2 = t[:, None] * r[1] + tau[None, :] * r_perp[1]
    logs = m.factors[0].log_density(y1, extend=True) + m.factors[1].log_density(y2, extend=True)
    return logsumexp(logs, axis=1) + math.log(dtau)


def marginal(p: ProductMeasure, drop_axis: int, n_points: Optional[int] = None) -> ProductMeasure:
    """Marginal of ``p`` after integrating out ambient coordinate ``drop_axis``.

    For rotated 2D products the marginal density is integrated from the joint
    density and re-discretized; its convexity margin is re-estimated from
    second differences of ``-log`` density (reported, not enforced).
    """
    if not 0 <= drop_axis < p.dim:
        raise MeasureError(f"axis {drop_axis} out of range for a {p.dim}-dimensional product")
    if p.dim == 1:
        raise MeasureError("cannot marginalize a one-dimensional measure")
    if not p.is_rotated:
        kept = tuple(f for i, f in enumerate(p.factors) if i != drop_axis)
        return ProductMeasure(kept)
    if p.dim > 2:
        raise UnsupportedMeasureError("rotated marginals are supported for n = 2 only")
    keep = 1 - drop_axis
    e = np.zeros(2)
    e[keep] = 1.0
    center = float(p.barycenter()[keep])
    spread = math.sqrt(variance_along(p, e))
    n_points = n_points or max(f.n_points for f in p.factors)
    grid = Interval.centered(center, 8.0 * max(spread, 1e-3), n_points)
    logs = projected_log_density(p, e, grid.nodes)
    values = -(logs - logs.max())
    if not np.all(np.isfinite(values)):
        raise MeasureError("marginal density vanishes inside its domain; widen the factor grids")
    return ProductMeasure((build_grid_measure(values, grid, tol_convexity=p.factors[0].tol_convexity),))
