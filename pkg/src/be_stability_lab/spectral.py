"""Spectral gap of the weighted Neumann problem and near-optimal test functions.

The Dirichlet form ``int f' g' e^{-V}`` is discretized in divergence form
with face weights ``exp(-(V_i + V_{i+1})/2)``.  After the similarity
transform by the square root of the (diagonal) mass matrix the generalized
problem is a symmetric tridiagonal one, solved with LAPACK.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import eigsh

from .functionals import GridFunction, dirichlet_energy, integrate
from .measure import Interval, LogConcaveMeasure1D, ProductMeasure, build_grid_measure

# Nodes with V - min V above this carry < e^-40 relative mass; they are
# excluded from the solve and receive the edge value (zero gradient).
ACTIVE_WINDOW = 40.0
ORTHO_TOL = 1e-8


class SpectralError(RuntimeError):
    pass


class HypothesisError(ValueError):
    """The measure does not admit the requested near-optimal family."""


@dataclass(frozen=True, eq=False)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenfunctions: List[GridFunction]
    poincare_constant: float
    residual_norms: np.ndarray
    measure: LogConcaveMeasure1D

    def rayleigh_quotients(self) -> np.ndarray:
        """Discrete Dirichlet form over variance, the solver's own energy."""
        return np.array([discrete_dirichlet_form(u, u, self.measure) for u in self.eigenfunctions])

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "poincare_constant": float(self.poincare_constant),
            "residual_norms": [float(r) for r in self.residual_norms],
            "n_points": self.measure.n_points,
        }


def _face_log_weights(m: LogConcaveMeasure1D) -> np.ndarray:
    V = m.potential
    return -(V[1:] + V[:-1]) / 2.0 + math.log(m.h) - m.log_normalizer


def discrete_dirichlet_form(f: GridFunction, g: GridFunction, m: LogConcaveMeasure1D) -> float:
    """The divergence-form energy the eigensolver diagonalizes."""
    df = np.diff(f.values) / m.h
    dg = np.diff(g.values) / m.h
    return float(np.sum(np.exp(_face_log_weights(m)) * df * dg))


def _active_window(m: LogConcaveMeasure1D) -> slice:
    keep = np.flatnonzero(m.potential - m.potential.min() <= ACTIVE_WINDOW)
    return slice(int(keep[0]), int(keep[-1]) + 1)


def _symmetric_operator(m: LogConcaveMeasure1D, window: slice):
    lw = m.log_weights[window]
    lc = _face_log_weights(m)[window.start : window.stop - 1] - 2.0 * math.log(m.h)
    diag = np.zeros(lw.size)
    diag[1:] += np.exp(lc - lw[1:])
    diag[:-1] += np.exp(lc - lw[:-1])
    off = -np.exp(lc - 0.5 * (lw[1:] + lw[:-1]))
    return diag, off, lw


def _fix_sign(u: np.ndarray, m: LogConcaveMeasure1D) -> np.ndarray:
    centered = m.x - np.dot(m.weights, m.x)
    for power in range(1, 6):
        moment = float(np.dot(m.weights, u * centered**power))
        if abs(moment) > 1e-10:
            return u if moment > 0 else -u
    return u


def poincare_spectrum(m: LogConcaveMeasure1D, n_eigs: int = 3) -> SpectralResult:
    """Lowest nonzero eigenpairs of ``-f'' + V' f'`` with natural boundary.

    Eigenfunctions are centered, normalized in ``L^2(m)`` and signed so that
    ``int u x dm >= 0`` (ties broken by the first nonzero higher moment).
    """
    if not 1 <= n_eigs < m.n_points / 4:
        raise ValueError(f"n_eigs must be in [1, n_points/4), got {n_eigs}")
    window = _active_window(m)
    diag, off, lw = _symmetric_operator(m, window)
    if lw.size <= n_eigs + 2:
        raise SpectralError("active window too small for the requested eigenpairs")
    try:
        vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_eigs))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SpectralError(f"tridiagonal eigensolver failed: {exc}") from exc

    residuals = []
    for j in range(vals.size):
        v = vecs[:, j]
        Sv = diag * v
        Sv[:-1] += off * v[1:]
        Sv[1:] += off * v[:-1]
        residuals.append(float(np.linalg.norm(Sv - vals[j] * v)))
    residuals = np.array(residuals)
    scale = max(1.0, float(np.max(np.abs(diag))))
    if np.any(residuals > 1e-8 * scale):
        raise SpectralError(f"eigensolver residuals too large: {residuals}")

    funcs = []
    for j in range(1, vals.size):
        u = np.empty(m.n_points)
        u[window] = vecs[:, j] * np.exp(-0.5 * lw)
        u[: window.start] = u[window.start]
        u[window.stop :] = u[window.stop - 1]
        u -= np.dot(m.weights, u)
        u /= math.sqrt(np.dot(m.weights, u * u))
        funcs.append(GridFunction(_fix_sign(u, m), m))
    eigenvalues = vals[1:]
    if eigenvalues[0] <= 0:
        raise SpectralError("non-positive spectral gap; the measure may be disconnected")
    return SpectralResult(
        eigenvalues=eigenvalues,
        eigenfunctions=funcs,
        poincare_constant=float(1.0 / eigenvalues[0]),
        residual_norms=residuals[1:],
        measure=m,
    )


@dataclass(frozen=True, eq=False)
class NearOptimalFamily:
    functions: List[GridFunction]
    eigenvalues: np.ndarray
    eps: float
    labels: List[str]
    host: Union[LogConcaveMeasure1D, ProductMeasure]

    def hypothesis_report(self) -> dict:
        """The four constraints on ``u_1..u_k``, evaluated by quadrature."""
        from .functionals import dirichlet_form

        k = len(self.functions)
        means = [integrate(u, self.host) for u in self.functions]
        norms = [integrate(u.values**2, self.host) for u in self.functions]
        energies = [dirichlet_energy(u, self.host) for u in self.functions]
        cross = [
            dirichlet_form(self.functions[i], self.functions[j], self.host)
            for i in range(k)
            for j in range(i + 1, k)
        ]
        return {
            "means": means,
            "norms": norms,
            "energies": energies,
            "gradient_cross_terms": cross,
            "eps": self.eps,
        }


def _product_candidates(m: ProductMeasure, count: int):
    """Eigenpairs of a product as sums of factor eigenpairs (at most two active factors)."""
    spectra = [poincare_spectrum(f, count) for f in m.factors]
    cands = []
    for a, spec in enumerate(spectra):
        for i, lam in enumerate(spec.eigenvalues):
            cands.append((float(lam), ((a, i),)))
    for a in range(m.dim):
        for b in range(a + 1, m.dim):
            for i, la in enumerate(spectra[a].eigenvalues):
                for j, lb in enumerate(spectra[b].eigenvalues):
                    cands.append((float(la + lb), ((a, i), (b, j))))
    cands.sort(key=lambda c: (c[0], c[1]))
    return spectra, cands


def _tensor_function(m: ProductMeasure, spectra, parts) -> np.ndarray:
    out = np.ones(m.shape)
    for axis, idx in parts:
        shape = [1] * m.dim
        shape[axis] = m.shape[axis]
        out = out * spectra[axis].eigenfunctions[idx].values.reshape(shape)
    return out


def near_optimal_family(
    m: Union[LogConcaveMeasure1D, ProductMeasure],
    k: int,
    eps_target: float = 1.0,
) -> NearOptimalFamily:
    """The ``k`` lowest eigenfunctions, provided all have ``lambda <= 1 + eps_target``.

    The realized ``eps`` is ``max_i lambda_i - 1`` clamped at zero.
    """
    if isinstance(m, LogConcaveMeasure1D):
        if k != 1:
            raise HypothesisError("a one-dimensional measure admits k = 1 only")
        spec = poincare_spectrum(m, 2)
        lams = spec.eigenvalues[:1]
        funcs = spec.eigenfunctions[:1]
        labels = ["u1"]
    else:
        if not 1 <= k <= m.dim:
            raise HypothesisError(f"need 1 <= k <= n = {m.dim}")
        spectra, cands = _product_candidates(m, max(2, k))
        chosen = cands[:k]
        lams = np.array([c[0] for c in chosen])
        funcs = [GridFunction(_tensor_function(m, spectra, c[1]), m) for c in chosen]
        labels = ["*".join(f"f{a}:u{i + 1}" for a, i in c[1]) for c in chosen]
    lams = np.asarray(lams, dtype=float)
    if np.any(lams > 1.0 + eps_target):
        raise HypothesisError(
            f"only {int(np.sum(lams <= 1.0 + eps_target))} of k={k} eigenvalues are <= "
            f"1 + {eps_target:g}; realized spectrum {np.round(lams, 6).tolist()}"
        )
    eps = max(0.0, float(lams.max()) - 1.0)
    return NearOptimalFamily(list(funcs), lams, eps, labels, m)


def joint_spectrum_2d(m: ProductMeasure, n_eigs: int = 3, n_grid: int = 161, halfwidth: Optional[float] = None) -> np.ndarray:
    """Eigenvalues from a direct solve on an ambient Cartesian grid.

    An independent check of the factor composition, valid for rotated
    products: the five-point divergence-form operator is assembled from the
    joint density and solved with shift-invert Lanczos.
    """
    if m.dim != 2:
        raise ValueError("joint solves are implemented for n = 2")
    center = m.barycenter()
    if halfwidth is None:
        halfwidth = 8.0 * math.sqrt(float(np.max(np.linalg.eigvalsh(m.covariance()))))
    ax = np.linspace(-halfwidth, halfwidth, n_grid)
    h = ax[1] - ax[0]
    X1, X2 = np.meshgrid(ax + center[0], ax + center[1], indexing="ij")
    V = -m.log_density(np.stack([X1, X2], axis=-1))
    V = np.where(np.isfinite(V), V, np.inf)
    active = V - V.min() <= ACTIVE_WINDOW
    idx = -np.ones(V.shape, dtype=int)
    idx[active] = np.arange(int(active.sum()))
    rows, cols, vals = [], [], []
    diag = np.zeros(int(active.sum()))
    for shift in ((1, 0), (0, 1)):
        a = active[: V.shape[0] - shift[0], : V.shape[1] - shift[1]]
        b = active[shift[0] :, shift[1] :]
        both = a & b
        Va = V[: V.shape[0] - shift[0], : V.shape[1] - shift[1]][both]
        Vb = V[shift[0] :, shift[1] :][both]
        ia = idx[: V.shape[0] - shift[0], : V.shape[1] - shift[1]][both]
        ib = idx[shift[0] :, shift[1] :][both]
        # Symmetrized face couplings: c_f / sqrt(M_a M_b) with c_f = e^{-(Va+Vb)/2}.
        np.add.at(diag, ia, np.exp((Va - Vb) / 2.0) / h**2)
        np.add.at(diag, ib, np.exp((Vb - Va) / 2.0) / h**2)
        rows += [ia, ib]
        cols += [ib, ia]
        vals += [-np.ones(ia.size) / h**2] * 2
    S = sparse.coo_matrix(
        (np.concatenate(vals + [diag]), (np.concatenate(rows + [np.arange(diag.size)]), np.concatenate(cols + [np.arange(diag.size)]))),
        shape=(diag.size, diag.size),
    ).tocsc()
    w = eigsh(S, k=n_eigs + 1, sigma=-0.5, which="LM", return_eigenvectors=False)
    return np.sort(w)[1:]


@dataclass(frozen=True)
class DirectionEstimate:
    """Linear part of an approximate optimizer.

    ``direction`` is ``w/|w|`` with ``w`` the first Hermite coefficient of
    ``u o T``; ``alignment`` is ``int |grad u - direction|^2 dm``.
    """

    w: np.ndarray
    direction: np.ndarray
    alignment: float
    eps: float
    k: int
    gate_ok: bool
    bound: float
    within_bound: Optional[bool]
    overlaps: tuple = ()
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "w": [float(v) for v in np.atleast_1d(self.w)],
            "direction": [float(v) for v in np.atleast_1d(self.direction)],
            "alignment": float(self.alignment),
            "eps": float(self.eps),
            "k": self.k,
            "gate_ok": self.gate_ok,
            "bound": float(self.bound),
            "within_bound": self.within_bound,
            "overlaps": [float(o) for o in self.overlaps],
            "note": self.note,
        }


def deficit_eps(u: GridFunction, m) -> float:
    """``max(0, int |grad u|^2 - 1)`` for an L^2-normalized ``u``."""
    norm2 = integrate(u.values**2, m)
    return max(0.0, dirichlet_energy(u, m) / norm2 - 1.0)


def gate_threshold(k: int) -> float:
    return (18.0 * k) ** -2


def hermite_linear_part(
    u: GridFunction, m: LogConcaveMeasure1D, k: int = 1, eps: Optional[float] = None
) -> DirectionEstimate:
    """First Hermite coefficient of ``u o T`` with ``T`` the monotone map from ``gamma``.

    The alignment bound ``9 eps`` is only claimed when ``eps < (18k)^-2``;
    outside that range the check is skipped and reported as such.
    """
    from .transport import gaussian_reference, quantile_map

    if eps is None:
        eps = deficit_eps(u, m)
    gamma = gaussian_reference(m.n_points)
    T = quantile_map(gamma, m)
    v = np.interp(T.values, m.x, u.values)
    w = float(np.dot(gamma.weights, gamma.x * v))
    gate_ok = eps < gate_threshold(k)
    grad_u = np.gradient(u.values, m.h)
    if abs(w) < 1e-8:
        if gate_ok:
            raise SpectralError(f"degenerate direction: |w| = {abs(w):.2e} < 1e-8")
        return DirectionEstimate(
            np.array([w]), np.array([math.nan]), math.nan, eps, k, False, 9.0 * eps, None,
            note="check skipped: eps >= (18k)^-2 and the linear part vanishes",
        )
    direction = math.copysign(1.0, w)
    alignment = float(np.dot(m.weights, (grad_u - direction) ** 2))
    note = "" if gate_ok else "check skipped: eps >= (18k)^-2"
    return DirectionEstimate(
        np.array([w]),
        np.array([direction]),
        alignment,
        eps,
        k,
        gate_ok,
        9.0 * eps,
        bool(alignment <= 9.0 * eps + 1e-10) if gate_ok else None,
        note=note,
    )


def hermite_linear_part_product(family: NearOptimalFamily) -> DirectionEstimate:
    """Directions for a family on a product measure, in ambient coordinates.

    ``T`` acts factorwise in the factor frame, so ``w`` is computed there from
    per-factor quantile maps and rotated back.
    """
    from .transport import gaussian_reference, quantile_map

    m = family.host
    if not isinstance(m, ProductMeasure):
        raise TypeError("expected a family on a ProductMeasure")
    k = len(family.functions)
    maps = []
    gammas = []
    for f in m.factors:
        gamma = gaussian_reference(f.n_points)
        gammas.append(gamma)
        maps.append(quantile_map(gamma, f).values)
    ws, dirs, aligns = [], [], []
    weights = m.joint_weights()
    gauss_weights = gammas[0].weights
    for g in gammas[1:]:
        gauss_weights = np.multiply.outer(gauss_weights, g.weights)
    xi = np.meshgrid(*[g.x for g in gammas], indexing="ij")
    for u in family.functions:
        # u o T on the Gaussian tensor grid, by separable linear interpolation.
        vals = u.values
        for axis, (f, T) in enumerate(zip(m.factors, maps)):
            vals = np.apply_along_axis(lambda col: np.interp(T, f.x, col), axis, vals)
        w = np.array([float(np.sum(gauss_weights * xi[a] * vals)) for a in range(m.dim)])
        w_amb = m.rotation @ w
        norm = float(np.linalg.norm(w_amb))
        if norm < 1e-8:
            raise SpectralError(f"degenerate direction: |w| = {norm:.2e} < 1e-8")
        d_amb = w_amb / norm
        d_fac = m.rotation.T @ d_amb
        grads = np.gradient(u.values, *[f.h for f in m.factors])
        align = float(np.sum(weights * sum((g - d_fac[i]) ** 2 for i, g in enumerate(grads))))
        ws.append(w_amb)
        dirs.append(d_amb)
        aligns.append(align)
    overlaps = tuple(abs(float(dirs[i] @ dirs[j])) for i in range(k) for j in range(i + 1, k))
    eps = family.eps
    gate_ok = eps < gate_threshold(k)
    within = bool(max(aligns) <= 9.0 * eps + 1e-10) if gate_ok else None
    return DirectionEstimate(
        np.array(ws),
        np.array(dirs),
        float(max(aligns)),
        eps,
        k,
        gate_ok,
        9.0 * eps,
        within,
        overlaps,
        "" if gate_ok else "check skipped: eps >= (18k)^-2",
    )
