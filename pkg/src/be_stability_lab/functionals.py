"""Grid calculus against a measure: gradients, integrals, entropies, deficits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .measure import LogConcaveMeasure1D, ProductMeasure

Host = Union[LogConcaveMeasure1D, ProductMeasure]

ENTROPY_CLAMP = 1e-300
NEGATIVE_TOL = 1e-12


class FunctionalError(ValueError):
    pass


def _host_shape(host: Host) -> tuple:
    if isinstance(host, LogConcaveMeasure1D):
        return (host.n_points,)
    return host.shape


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a function on the grid of ``host``.

    For product hosts the values live on the tensor grid of factor
    coordinates, shape ``host.shape``.
    """

    values: np.ndarray
    host: Host

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != _host_shape(self.host):
            raise FunctionalError(
                f"values have shape {values.shape}, host grid is {_host_shape(self.host)}"
            )
        if not np.all(np.isfinite(values)):
            raise FunctionalError("grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, func: Callable, host: Host) -> "GridFunction":
        """Sample ``func`` at the nodes.

        On a 1D host ``func`` receives the node array; on a product host it
        receives the ambient coordinates ``x_1, ..., x_n`` as mesh arrays.
        """
        if isinstance(host, LogConcaveMeasure1D):
            return cls(func(host.x), host)
        return cls(func(*host.ambient_mesh()), host)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(values, self.host)

    def __add__(self, other):
        other_vals = other.values if isinstance(other, GridFunction) else other
        return self.with_values(self.values + other_vals)

    def __sub__(self, other):
        other_vals = other.values if isinstance(other, GridFunction) else other
        return self.with_values(self.values - other_vals)

    def __mul__(self, other):
        other_vals = other.values if isinstance(other, GridFunction) else other
        return self.with_values(self.values * other_vals)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _weights(m: Host) -> np.ndarray:
    if isinstance(m, LogConcaveMeasure1D):
        return m.weights
    return m.joint_weights()


def _spacings(m: Host) -> list:
    if isinstance(m, LogConcaveMeasure1D):
        return [m.h]
    return [f.h for f in m.factors]


def gradient(f: GridFunction):
    """Central differences inside, one-sided at the boundary.

    Returns a GridFunction in 1D, and a tuple of per-axis GridFunctions in
    the factor frame for products (the frame is orthonormal, so dot products
    of gradients are frame independent).
    """
    spacings = _spacings(f.host)
    if len(spacings) == 1:
        return f.with_values(np.gradient(f.values, spacings[0]))
    parts = np.gradient(f.values, *spacings)
    return tuple(f.with_values(p) for p in parts)


def _grad_arrays(f: GridFunction) -> list:
    g = gradient(f)
    return [g.values] if isinstance(g, GridFunction) else [p.values for p in g]


def _as_values(f) -> np.ndarray:
    return f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


def integrate(f, m: Host) -> float:
    return float(np.sum(_weights(m) * _as_values(f)))


def mean(f, m: Host) -> float:
    return integrate(f, m)


def variance(f, m: Host) -> float:
    vals = _as_values(f)
    mu = integrate(vals, m)
    return integrate((vals - mu) ** 2, m)


def dirichlet_energy(f: GridFunction, m: Host) -> float:
    """``int |grad f|^2 dm``, i.e. ``integrate(|gradient(f)|^2, m)``."""
    return integrate(sum(g**2 for g in _grad_arrays(f)), m)


def dirichlet_form(f: GridFunction, g: GridFunction, m: Host) -> float:
    """``int grad f . grad g dm``."""
    return integrate(sum(a * b for a, b in zip(_grad_arrays(f), _grad_arrays(g))), m)


def xlogx(g: np.ndarray) -> np.ndarray:
    g = np.where(g < ENTROPY_CLAMP, 0.0, g)
    safe = np.where(g > 0, g, 1.0)
    return np.where(g > 0, g * np.log(safe), 0.0)


def entropy(g, m: Host) -> float:
    """``Ent_m(g) = int g log g dm - (int g dm) log int g dm`` with ``0 log 0 = 0``."""
    vals = _as_values(g)
    if np.any(vals < -NEGATIVE_TOL):
        raise FunctionalError(f"entropy needs g >= 0, min is {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    total = integrate(vals, m)
    return integrate(xlogx(vals), m) - float(xlogx(np.array([total]))[0])


@dataclass(frozen=True)
class Deficit:
    absolute: float
    relative: float
    energy: float
    reference: float  # Var(u) for Poincare, Ent(u^2) for LSI


def poincare_deficit(u: GridFunction, m: Host) -> Deficit:
    """``int |grad u|^2 - Var(u)`` and the relative form ``E/Var - 1``."""
    var = variance(u, m)
    if var <= 0:
        raise FunctionalError("Var(u) = 0: constants are trivial minimizers")
    energy = dirichlet_energy(u, m)
    return Deficit(energy - var, energy / var - 1.0, energy, var)


def normalize_l2(u: GridFunction, m: Host) -> GridFunction:
    norm2 = integrate(u.values**2, m)
    if norm2 <= 0:
        raise FunctionalError("int u^2 dm = 0: constants are trivial minimizers")
    return u.with_values(u.values / math.sqrt(norm2))


def lsi_deficit(u: GridFunction, m: Host) -> Deficit:
    """``2 int |grad u|^2 - Ent(u^2)`` after normalizing ``int u^2 dm = 1``.

    The relative deficit ``eps = deficit / (2 int |grad u|^2)`` is invariant
    under ``u -> a u``.
    """
    u = normalize_l2(u, m)
    energy = dirichlet_energy(u, m)
    ent = entropy(u.values**2, m)
    absolute = 2.0 * energy - ent
    relative = absolute / (2.0 * energy) if energy > 0 else math.inf
    return Deficit(absolute, relative, energy, ent)
