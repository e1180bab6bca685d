"""Optimal projection modes, detection probabilities and classical Fisher information.

The measurement basis is the reference state gamma_0 = f exp(i phi0) followed
by the Gram-Schmidt orthonormalisation of the derivative states with their
gamma_0 component removed. For a phase object every such mode is
gamma_0 times a real-coefficient combination of i (d_j phi - g_j), so the
construction runs on an M x M coefficient matrix using Omega = G - g g^T as
the metric and the profiles are only sampled afterwards.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (DegenerateOmega, InvalidParameters, NegativeProbability,
                     StepTooLarge)
from .fisher import (CliffIntegrals, default_quadrature, inner_products,
                     integrate_over_beam, qfim_single_photon)
from .models import CliffParameters, IlluminationProfile, PhaseModel
from .numerics import QuadratureSpec


@dataclass(frozen=True)
class GridSpec:
    """Uniform sampling grid; ``half_width`` None means max(6 w, 30 x_scale)."""

    points: int = 4096
    half_width: float | None = None

    def __post_init__(self):
        if self.points < 16:
            raise InvalidParameters("grid needs at least 16 points")

    def refined(self, factor: int) -> "GridSpec":
        return GridSpec(self.points * factor, self.half_width)

    def build(self, model: PhaseModel, f: IlluminationProfile) -> np.ndarray:
        L = self.half_width or max(f.half_extent, 30.0 * model.x_scale)
        return np.linspace(-L, L, self.points)


def _trapezoid_weights(x):
    dx = np.diff(x)
    w = np.empty_like(x)
    w[1:-1] = 0.5 * (dx[1:] + dx[:-1])
    w[0], w[-1] = 0.5 * dx[0], 0.5 * dx[-1]
    return w


def gram_schmidt_coefficients(omega: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular C with C Omega C^T = I, by modified Gram-Schmidt.

    Row k of C holds the expansion of mode k+1 over the centred derivative
    directions. Each vector is orthogonalised twice against its
    predecessors, which keeps the result accurate when Omega is close to
    singular. Raises :class:`DegenerateOmega` when a new direction has
    (relative) squared norm below ``tol``.
    """
    omega = np.asarray(omega, dtype=float)
    M = len(omega)
    C = np.zeros((M, M))
    for k in range(M):
        v = np.zeros(M)
        v[k] = 1.0
        for _ in range(2):
            for j in range(k):
                v = v - (C[j] @ omega @ v) * C[j]
        n2 = v @ omega @ v
        if not n2 > tol * omega[k, k]:
            raise DegenerateOmega(
                f"parameter {k} is locally indistinguishable from the others "
                f"(residual norm^2 {n2:.3e} vs {omega[k, k]:.3e}); "
                "change the reference point or drop a parameter")
        C[k] = v / math.sqrt(n2)
    return C


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Reference mode plus M orthonormal derived modes.

    ``profiles[k]`` is the dimensionless g_k(x) with gamma_k = f exp(i phi0) g_k;
    ``gamma`` holds the full sampled modes. ``coefficients`` maps centred
    phase derivatives to modes: g_k = i sum_j C[k-1, j] (d_j phi - g_j).
    """

    grid: np.ndarray
    gamma: np.ndarray
    profiles: np.ndarray
    Omega: np.ndarray
    theta0: np.ndarray
    coefficients: np.ndarray
    G: np.ndarray
    g: np.ndarray
    parameter_names: tuple
    weights: np.ndarray = field(repr=False, default=None)

    @property
    def n_modes(self) -> int:
        return len(self.gamma)

    def gram(self) -> np.ndarray:
        """<gamma_i|gamma_j> by trapezoidal quadrature on the stored grid."""
        return (self.gamma.conj() * self.weights) @ self.gamma.T

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.n_modes))))

    def profile(self, model: PhaseModel, x) -> np.ndarray:
        """Evaluate every g_k at arbitrary positions (not limited to the grid)."""
        x = np.asarray(x, dtype=float)
        d = model.gradient(x, self.theta0) - self.g[:, None]
        return np.vstack([np.ones((1, len(x)), complex), 1j * (self.coefficients @ d)])

    def export_csv(self, directory, y_scale: float | None = None) -> list[Path]:
        """One CSV per mode with x, optional y = y_scale * x, Re, Im and |g_k|."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, gk in enumerate(self.profiles):
            path = directory / f"mode_{k}.csv"
            header = ["x [m]"] + (["y [1]"] if y_scale else []) + \
                     [f"Re g{k} [1]", f"Im g{k} [1]", f"|g{k}| [1]"]
            with path.open("w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(header)
                for i, x in enumerate(self.grid):
                    row = [repr(float(x))] + ([repr(float(y_scale * x))] if y_scale else [])
                    row += [repr(float(gk[i].real)), repr(float(gk[i].imag)),
                            repr(float(abs(gk[i])))]
                    wr.writerow(row)
            paths.append(path)
        return paths


def build_basis(model: PhaseModel, f: IlluminationProfile, theta0=None,
                grid_spec: GridSpec | None = None, quad: QuadratureSpec | None = None
                ) -> ModeBasis:
    """Gram-Schmidt mode basis at ``theta0``; Omega comes from adaptive quadrature."""
    theta0 = model.theta0 if theta0 is None else np.asarray(theta0, dtype=float)
    quad = quad or default_quadrature(model, f, rel_tol=1e-13)
    G, g = inner_products(model, f, theta0, quad)
    omega = G - np.outer(g, g)
    C = gram_schmidt_coefficients(omega)
    x = (grid_spec or GridSpec()).build(model, f)
    d = model.gradient(x, theta0) - g[:, None]
    profiles = np.vstack([np.ones((1, len(x)), complex), 1j * (C @ d)])
    carrier = f.amplitude(x) * np.exp(1j * model.phase(x, theta0))
    return ModeBasis(x, profiles * carrier, profiles, omega, theta0, C, G, g,
                     model.parameter_names, _trapezoid_weights(x))


def project(basis: ModeBasis, model: PhaseModel, f: IlluminationProfile, theta,
            quad: QuadratureSpec | None = None) -> np.ndarray:
    """Amplitudes <gamma_k|Phi(theta)> by adaptive quadrature."""
    theta = np.asarray(theta, dtype=float)
    th0 = basis.theta0

    def fn(x):
        dphi = model.phase(x, theta) - model.phase(x, th0)
        field_ = f.intensity(x) * np.exp(1j * dphi)
        return (basis.profile(model, x).conj() * field_).T

    quad = quad or default_quadrature(model, f, rel_tol=1e-13)
    val, _ = integrate_over_beam(fn, model, f, th0, quad)
    return val


@dataclass
class ProbabilityVector:
    """Outcome probabilities for modes 0..M; ``residual`` = 1 - sum(p)."""

    p: np.ndarray
    residual: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.residual = float(self.residual)

    def with_residual(self, threshold: float = 1e-6) -> np.ndarray:
        """Probabilities with an extra "unobserved" outcome if the residual exceeds ``threshold``."""
        if self.residual > threshold:
            return np.append(self.p, self.residual)
        return self.p


def probabilities_numeric(basis: ModeBasis, model: PhaseModel, f: IlluminationProfile,
                          dtheta, quad: QuadratureSpec | None = None) -> ProbabilityVector:
    """|<gamma_k|Phi(theta0 + dtheta)>|^2 for every mode."""
    amps = project(basis, model, f, basis.theta0 + np.asarray(dtheta, dtype=float), quad)
    p = np.abs(amps) ** 2
    return ProbabilityVector(p, 1.0 - p.sum())


# ---------------------------------------------------------------- cliff analytic forms


def _scaled(p: CliffParameters, dh, dalpha):
    return p.k * dh, p.h * dalpha


def analytic_amplitudes_cliff(p: CliffParameters, n: CliffIntegrals, dh: float,
                              dalpha: float = 0.0) -> np.ndarray:
    """Second-order expansion of <gamma_k|Phi> for the (h, alpha) basis.

    With eps = k dh, eta = h0 dalpha and D = N2 - N1^2/(1-N3); ``p.h`` is h0.
    """
    k, h0 = p.k, p.h
    eps, eta = _scaled(p, dh, dalpha)
    q = 1.0 - n.N3
    sq = math.sqrt(q)
    D = n.D
    a0 = 1.0 - (2.0 - n.N3) * eps ** 2 / 2 - n.N1 * eps * eta - n.N2 * eta ** 2 / 2 + 1j * eps
    a1 = ((q * eps + n.N1 * eta + n.N1 * dh * dalpha - n.N6 * (h0 / k) * dalpha ** 2) / sq
          + 1j * (q * eps ** 2 + n.N1 * eps * eta) / sq)
    ratio = (n.N5 * q - n.N1 * n.N6) / (n.N2 * q - n.N1 ** 2)
    a2 = math.sqrt(D) * (eta + dh * dalpha - (h0 / k) * dalpha ** 2 * ratio) \
        + 1j * math.sqrt(D) * eps * eta
    return np.array([a0, a1, a2])


def analytic_probabilities_cliff(p: CliffParameters, n: CliffIntegrals, dh: float,
                                 dalpha: float = 0.0,
                                 parameters: tuple = ("h", "alpha")) -> ProbabilityVector:
    """Second-order detection probabilities; they sum to one identically.

    With ``parameters=("h",)`` the two-outcome (gamma_0, gamma_1) result is
    returned and ``dalpha`` must be zero.
    """
    eps, eta = _scaled(p, dh, dalpha)
    q = 1.0 - n.N3
    if tuple(parameters) == ("h",):
        if dalpha != 0.0:
            raise InvalidParameters("alpha is fixed in a height-only basis")
        p1 = q * eps ** 2
        probs = np.array([1.0 - p1, p1])
    elif tuple(parameters) == ("h", "alpha"):
        p1 = (math.sqrt(q) * eps + n.N1 * eta / math.sqrt(q)) ** 2
        p2 = n.D * eta ** 2
        probs = np.array([1.0 - p1 - p2, p1, p2])
    else:
        raise InvalidParameters(f"unsupported parameter set {parameters}")
    if np.any(probs < -1e-12):
        raise NegativeProbability(
            f"second-order probability {probs.min():.3e} < 0; displacement outside trust region")
    return ProbabilityVector(probs, 0.0)


def classical_fim_cliff_limit(p: CliffParameters, n: CliffIntegrals) -> np.ndarray:
    """Per-photon classical Fisher matrix of the gamma basis as dtheta -> 0.

    Every outcome k >= 1 has p_k = (a_k . dtheta)^2 at leading order and
    contributes 4 a_k a_k^T; gamma_0 contributes nothing.
    """
    q = 1.0 - n.N3
    a1 = np.array([p.k * math.sqrt(q), p.h * n.N1 / math.sqrt(q)])
    a2 = np.array([0.0, p.h * math.sqrt(n.D)])
    return 4.0 * (np.outer(a1, a1) + np.outer(a2, a2))


# ---------------------------------------------------------------- classical FIM


def _fim_at_step(prob_fn, x0, step, floor):
    M = len(x0)
    p0 = np.asarray(prob_fn(x0).p, dtype=float)
    live = p0 > floor
    E = np.diag(step)
    plus = [np.asarray(prob_fn(x0 + E[i]).p) for i in range(M)]
    minus = [np.asarray(prob_fn(x0 - E[i]).p) for i in range(M)]
    grad = np.array([(plus[i] - minus[i]) / (2 * step[i]) for i in range(M)])
    F = (grad[:, live] / p0[live]) @ grad[:, live].T
    if np.any(~live):
        # p_n = dtheta^T Q dtheta near the zero; (dp)(dp)^T / p -> 4 Q for rank-one Q
        H = np.empty((M, M, int(np.count_nonzero(~live))))
        for i in range(M):
            H[i, i] = ((plus[i] - 2 * p0 + minus[i]) / step[i] ** 2)[~live]
            for j in range(i + 1, M):
                pp = prob_fn(x0 + E[i] + E[j]).p
                pm = prob_fn(x0 + E[i] - E[j]).p
                mp = prob_fn(x0 - E[i] + E[j]).p
                mm = prob_fn(x0 - E[i] - E[j]).p
                H[i, j] = H[j, i] = ((pp - pm - mp + mm) / (4 * step[i] * step[j]))[~live]
        F = F + 2.0 * H.sum(axis=2)
    return F


def classical_fim(prob_fn: Callable[[np.ndarray], ProbabilityVector], dtheta0, step,
                  floor: float = 1e-12, tol: float = 1e-4) -> np.ndarray:
    """Classical Fisher matrix of a family of outcome distributions.

    Derivatives are central differences at ``step`` and ``step/2`` combined by
    Richardson extrapolation. Outcomes with probability <= ``floor`` at
    ``dtheta0`` use the quadratic-form limit. Raises :class:`StepTooLarge`
    when the two step sizes disagree by more than ``tol`` (relative to the
    diagonal scale) after extrapolation error is accounted for.
    """
    x0 = np.atleast_1d(np.asarray(dtheta0, dtype=float))
    step = np.broadcast_to(np.asarray(step, dtype=float), x0.shape).copy()
    F1 = _fim_at_step(prob_fn, x0, step, floor)
    F2 = _fim_at_step(prob_fn, x0, step / 2, floor)
    F = (4.0 * F2 - F1) / 3.0
    d = np.sqrt(np.abs(np.diag(F)))
    d = np.where(d > 0, d, 1.0)
    disagreement = np.max(np.abs(F2 - F1) / np.outer(d, d))
    if disagreement > tol:
        raise StepTooLarge(f"Richardson estimates differ by {disagreement:.2e} (> {tol:.1e}); "
                           "reduce the step")
    return 0.5 * (F + F.T)


def default_fd_step(model: PhaseModel, scale: float = 1e-4) -> np.ndarray:
    """Parameter steps giving phase excursions of order ``scale`` radians."""
    if model.cliff is not None:
        c = model.cliff
        per = {"h": scale / c.k, "alpha": scale / c.h}
        return np.array([per[n] for n in model.parameter_names])
    return scale * model.theta_scale


# ---------------------------------------------------------------- saturation


def nonorthogonal_condition_check(G, g, index: int = 0, rtol: float = 1e-8,
                                  atol: float = 1e-300):
    """Optimality condition for projecting directly on a derivative state.

    With <Phi_0|Phi_i> = i g_i and <Phi_i|Phi_i> = G_ii:
    lhs = Im[<Phi_i|Phi_i><Phi_i|Phi_0>] and rhs = |<Phi_0|Phi_i>|^2 Im[<Phi_i|Phi_0>].
    Returns (lhs, rhs, equal).
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    gii = G[index, index]
    overlap_i0 = -1j * g[index]
    lhs = float(np.imag(gii * overlap_i0))
    rhs = float(abs(overlap_i0) ** 2 * np.imag(overlap_i0))
    equal = abs(lhs - rhs) <= max(atol, rtol * max(abs(lhs), abs(rhs)))
    return lhs, rhs, bool(equal)


@dataclass
class SaturationReport:
    measurement: str
    F_Q: np.ndarray
    F_C: np.ndarray
    discrepancy: float
    tol: float
    condition: tuple | None = None

    @property
    def passed(self) -> bool:
        return self.discrepancy < self.tol


def _relative_discrepancy(FC, FQ):
    d = np.sqrt(np.abs(np.diag(FQ)))
    d = np.where(d > 0, d, 1.0)
    return float(np.max(np.abs(FC - FQ) / np.outer(d, d)))


def phi1_projector_probabilities(model: PhaseModel, f: IlluminationProfile, theta0=None,
                                 index: int = 0, quad: QuadratureSpec | None = None):
    """Two-outcome measurement {|Phi_i><Phi_i| / <Phi_i|Phi_i>, rest} as a function of dtheta."""
    theta0 = model.theta0 if theta0 is None else np.asarray(theta0, dtype=float)
    G, _ = inner_products(model, f, theta0, quad)
    norm = G[index, index]

    def prob_fn(dtheta):
        theta = theta0 + np.asarray(dtheta, dtype=float)

        def fn(x):
            dphi = model.phase(x, theta) - model.phase(x, theta0)
            return -1j * model.partials[index](x, theta0) * f.intensity(x) * np.exp(1j * dphi)

        amp, _ = integrate_over_beam(fn, model, f, theta0, quad)
        p1 = abs(amp) ** 2 / norm
        return ProbabilityVector(np.array([p1, 1.0 - p1]), 0.0)

    return prob_fn


def saturation_report(model: PhaseModel, f: IlluminationProfile, theta0=None,
                      measurement: str = "gamma", step=None, tol: float = 1e-4,
                      basis: ModeBasis | None = None) -> SaturationReport:
    """Compare the per-photon QFIM with the classical FIM of a measurement at dtheta -> 0.

    ``measurement="gamma"`` uses the Gram-Schmidt basis; ``"phi1"`` projects
    on the normalised first derivative state instead (first parameter only)
    and also reports the non-orthogonal optimality condition.
    """
    theta0 = model.theta0 if theta0 is None else np.asarray(theta0, dtype=float)
    G, g = inner_products(model, f, theta0)
    FQ = qfim_single_photon(G, g, 1.0).F
    step = default_fd_step(model) if step is None else step
    if measurement == "gamma":
        basis = basis or build_basis(model, f, theta0)
        FC = classical_fim(lambda d: probabilities_numeric(basis, model, f, d),
                           np.zeros(model.n_params), step)
        return SaturationReport("gamma", FQ, FC, _relative_discrepancy(FC, FQ), tol)
    if measurement == "phi1":
        prob_fn = phi1_projector_probabilities(model, f, theta0)
        s = np.atleast_1d(step)[:1]
        FC1 = classical_fim(lambda d: prob_fn(np.concatenate([d, np.zeros(model.n_params - 1)])),
                            np.zeros(1), s)
        FQ1 = FQ[:1, :1]
        cond = nonorthogonal_condition_check(G, g, 0)
        return SaturationReport("phi1", FQ1, FC1, _relative_discrepancy(FC1, FQ1), tol, cond)
    raise InvalidParameters(f"unknown measurement {measurement!r}")
