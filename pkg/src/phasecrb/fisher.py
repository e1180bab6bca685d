"""Quantum Fisher information for phase objects and the cliff closed forms.

For a pure state f(x) exp(i phi(x, theta)) the overlaps of derivative states
reduce to two real integrals

    G[i, j] = int |f|^2 d_i phi d_j phi        g[i] = int |f|^2 d_i phi

and the per-photon QFIM is 4 (G - g g^T) for a single photon spread over the
transverse modes, or 4 G for a coherent state of the same mean photon number.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (ApproximationInvalid, InvalidParameters, InvalidWidth, NotPSD,
                     RegimeViolation, Singular)
from .models import CliffParameters, IlluminationProfile, PhaseModel, sech2
from .numerics import QuadratureSpec, default_breakpoints, integrate, invert

SINGLE_PHOTON = "single_photon"
COHERENT = "coherent"
FAMILIES = (SINGLE_PHOTON, COHERENT)

# int y^2 sech^4 y dy over the real line
_Y2_SECH4 = (math.pi ** 2 - 6.0) / 9.0
N2_PREFACTOR = math.sqrt(2.0) * (math.pi ** 2 - 6.0) / (9.0 * math.sqrt(math.pi))
ALPHA_COEFFICIENT = 0.5 * math.sqrt(9.0 * math.sqrt(math.pi)
                                    / (math.sqrt(2.0) * (math.pi ** 2 - 6.0)))


# ---------------------------------------------------------------- quadrature plumbing


def default_quadrature(model: PhaseModel, f: IlluminationProfile,
                       rel_tol: float = 1e-12) -> QuadratureSpec:
    """Half-width covering both the beam envelope and the phase feature."""
    return QuadratureSpec(max(f.half_extent, 30.0 * model.x_scale), rel_tol=rel_tol)


def _breakpoints(model, f, theta, L):
    pts = [default_breakpoints(L, model.x_scale)]
    for extra in (f.breakpoints(), model.breakpoints(theta)):
        if extra is not None:
            pts.append(np.asarray(extra)[np.abs(extra) < L])
    return np.unique(np.concatenate(pts))


def integrate_over_beam(fn: Callable[[np.ndarray], np.ndarray], model: PhaseModel,
                        f: IlluminationProfile, theta=None, quad: QuadratureSpec | None = None):
    """Integrate ``fn(x)`` over the beam in the variable u = x / x_scale."""
    theta = model.theta0 if theta is None else np.asarray(theta, dtype=float)
    quad = quad or default_quadrature(model, f)
    s = model.x_scale
    bp = _breakpoints(model, f, theta, quad.half_width) / s
    value, err = integrate(lambda u: s * fn(u * s), quad.scaled(s), breakpoints=bp)
    return value, err


# ---------------------------------------------------------------- general QFIM


def inner_products(model: PhaseModel, f: IlluminationProfile, theta0=None,
                   quad: QuadratureSpec | None = None):
    """Return (G, g) in SI units (rad^2 per parameter-unit pair, rad per unit)."""
    theta = model.theta0 if theta0 is None else np.asarray(theta0, dtype=float)
    ts = model.theta_scale
    M = model.n_params

    def fn(x):
        d = model.gradient(x, theta) * ts[:, None]
        w = f.intensity(x)
        outer = (d[:, None, :] * d[None, :, :]).reshape(M * M, -1)
        return (np.vstack([outer, d]) * w).T

    val, _ = integrate_over_beam(fn, model, f, theta, quad)
    G = val[:M * M].reshape(M, M) / np.outer(ts, ts)
    g = val[M * M:] / ts
    return 0.5 * (G + G.T), g


def symmetry_integrals(model: PhaseModel, f: IlluminationProfile, theta0=None,
                       quad: QuadratureSpec | None = None) -> np.ndarray:
    """I_i = int |f|^2 d_i phi. Where I_i = 0 the two state families agree in row i."""
    return inner_products(model, f, theta0, quad)[1]


def derivative_overlaps(model: PhaseModel, f: IlluminationProfile, theta0=None,
                        quad: QuadratureSpec | None = None) -> np.ndarray:
    """Complex overlaps <Phi_i|Phi_j> computed from the full amplitudes.

    Used to check that Im<Phi_i|Phi_j> vanishes (weak commutativity), which
    makes the quantum bound attainable for all parameters simultaneously.
    """
    theta = model.theta0 if theta0 is None else np.asarray(theta0, dtype=float)
    ts = model.theta_scale
    M = model.n_params

    def fn(x):
        amp = f.amplitude(x) * np.exp(1j * model.phase(x, theta))
        dstates = 1j * model.gradient(x, theta) * ts[:, None] * amp
        return (np.conj(dstates)[:, None, :] * dstates[None, :, :]).reshape(M * M, -1).T

    val, _ = integrate_over_beam(fn, model, f, theta, quad)
    return val.reshape(M, M) / np.outer(ts, ts)


@dataclass
class FisherResult:
    """QFIM for N photons. ``crb_diag`` holds [F^-1]_ii (inf when F is singular)."""

    family: str
    N: float
    F: np.ndarray
    symmetry_integrals: np.ndarray
    crb_diag: np.ndarray
    F_inv: np.ndarray | None = None
    parameter_names: tuple = ()

    @property
    def per_photon(self) -> np.ndarray:
        return self.F / self.N


def _finish(family, F, ref, g, N, names):
    if np.max(np.abs(F - F.T)) > 1e-10 * max(np.max(np.abs(ref)), 1e-300):
        raise NotPSD("Fisher matrix is not symmetric")
    F = 0.5 * (F + F.T)
    d = np.sqrt(np.abs(np.diag(ref)))
    d = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
    ev = np.linalg.eigvalsh(F * np.outer(d, d))
    if ev.size and ev.min() < -1e-10 * max(1.0, np.max(np.abs(ev))):
        raise NotPSD(f"Fisher matrix has eigenvalue {ev.min():.3e} (scaled)")
    try:
        if ev.size and ev.max() > 0 and ev.min() < 1e-12 * ev.max() or not np.any(ev > 0):
            raise Singular("Fisher matrix is rank deficient relative to 4 N G")
        F_inv = invert(F)
        crb = np.diag(F_inv).copy()
    except Singular:
        F_inv = None
        crb = np.full(len(F), np.inf)
    return FisherResult(family, float(N), F, np.asarray(g, dtype=float), crb, F_inv, tuple(names))


def _check_inputs(G, g, N):
    G = np.atleast_2d(np.asarray(G, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if G.shape != (len(g), len(g)):
        raise InvalidParameters("G must be M x M with g of length M")
    if not N > 0:
        raise InvalidParameters("photon number must be positive")
    return G, g


def qfim_single_photon(G, g, N: float = 1.0, names=()) -> FisherResult:
    """F = 4 N (G - g g^T)."""
    G, g = _check_inputs(G, g, N)
    F = 4.0 * N * (G - np.outer(g, g))
    return _finish(SINGLE_PHOTON, F, 4.0 * N * G, g, N, names)


def qfim_coherent(G, g, N: float = 1.0, names=()) -> FisherResult:
    """F = 4 N G; ``g`` is carried only as the symmetry diagnostic."""
    G, g = _check_inputs(G, g, N)
    F = 4.0 * N * G
    return _finish(COHERENT, F, F, g, N, names)


def qfim(model: PhaseModel, f: IlluminationProfile, family: str = SINGLE_PHOTON,
         N: float = 1.0, theta0=None, quad=None) -> FisherResult:
    G, g = inner_products(model, f, theta0, quad)
    if family == SINGLE_PHOTON:
        return qfim_single_photon(G, g, N, model.parameter_names)
    if family == COHERENT:
        return qfim_coherent(G, g, N, model.parameter_names)
    raise InvalidParameters(f"unknown state family {family!r}")


# ---------------------------------------------------------------- cliff integrals

# (power of y, power of tanh, power of sech) for N1..N6; N_i carries (k/alpha)^m
_N_SHAPES = ((1, 1, 2), (2, 0, 4), (0, 0, 2), (2, 1, 2), (3, 1, 4), (2, 2, 2))


def _moment_integrand(y):
    t = np.tanh(y)
    s2 = sech2(y)
    return np.stack([y ** m * t ** n * s2 ** (p // 2) for m, n, p in _N_SHAPES]
                    + [y ** (m + 2) * t ** n * s2 ** (p // 2) for m, n, p in _N_SHAPES], axis=-1)


_MOMENTS = None


def shape_moments():
    """int y^m tanh^n sech^p dy for each N_i shape and for m + 2 (second-order term)."""
    global _MOMENTS
    if _MOMENTS is None:
        val, _ = integrate(_moment_integrand, QuadratureSpec(60.0, rel_tol=1e-13, abs_tol=1e-14),
                           breakpoints=default_breakpoints(60.0, 1.0))
        _MOMENTS = (val[:6], val[6:])
    return _MOMENTS


@dataclass
class CliffIntegrals:
    """The six dimensionless overlap integrals N1..N6 for the cliff.

    ``exact`` tells whether N1..N6 came from quadrature over the true beam
    or from the constant-field forms. ``first_order`` always holds the
    leading closed forms for N1..N3.
    """

    N1: float
    N2: float
    N3: float
    N4: float
    N5: float
    N6: float
    w_alpha: float
    exact: bool
    first_order: dict = field(default_factory=dict)
    valid: bool = True

    def as_array(self) -> np.ndarray:
        return np.array([self.N1, self.N2, self.N3, self.N4, self.N5, self.N6])

    @property
    def D(self) -> float:
        """N2 - N1^2 / (1 - N3): the alpha information left after removing h."""
        return self.N2 - self.N1 ** 2 / (1.0 - self.N3)


def _gaussian_width(f: IlluminationProfile) -> float:
    if f.kind != "gaussian":
        raise InvalidWidth("constant-field forms need a Gaussian beam")
    return f.w


def first_order_integrals(p: CliffParameters, w: float) -> dict:
    """Leading-order closed forms for N1, N2, N3 (beam treated as constant)."""
    wa = w * p.alpha
    ka = p.k / p.alpha
    return {
        "N1": math.sqrt(2.0 / math.pi) * ka / wa,
        "N2": N2_PREFACTOR * ka ** 2 / wa,
        "N3": math.sqrt(8.0 / math.pi) / wa,
    }


def constant_field_integrals(p: CliffParameters, w: float, second_order: bool = False) -> np.ndarray:
    """N1..N6 with the Gaussian replaced by its value (and optionally curvature) at x = 0.

    The Gaussian intensity sqrt(2/pi)/w * (1 - 2 x^2/w^2 + ...) integrated
    against each shape gives sqrt(2/pi) (k/alpha)^m / (w alpha) times the
    shape moment, with the curvature term contributing the
    -2/(w alpha)^2 * (m+2 moment) correction.
    """
    wa = w * p.alpha
    ka = p.k / p.alpha
    base, plus2 = shape_moments()
    out = np.empty(6)
    for i, (m, _, _) in enumerate(_N_SHAPES):
        v = base[i]
        if second_order:
            v = v - 2.0 / wa ** 2 * plus2[i]
        out[i] = math.sqrt(2.0 / math.pi) * ka ** m / wa * v
    out[3] = 0.0  # odd shape against an even beam
    return out


def cliff_integrals(p: CliffParameters, f: IlluminationProfile, exact: bool = True,
                    quad: QuadratureSpec | None = None) -> CliffIntegrals:
    """N1..N6 by quadrature (``exact``) or by the constant-field closed forms."""
    fo = {}
    w = f.w if f.kind == "gaussian" else f.width
    wa = w * p.alpha
    valid = wa ** -2 < 0.01
    if f.kind == "gaussian":
        fo = first_order_integrals(p, w)
    if exact:
        a = p.alpha
        ka = p.k / a
        L = (quad.half_width if quad else max(f.half_extent, 30.0 / a)) * a
        rel = quad.rel_tol if quad else 1e-13
        spec = QuadratureSpec(L, rel_tol=rel, abs_tol=1e-15)
        bp = default_breakpoints(L, 1.0)
        if f.breakpoints() is not None:
            bp = np.unique(np.concatenate([bp, a * f.breakpoints()]))

        def fn(y):
            iy = f.intensity(y / a)[:, None] / a
            return iy * _moment_integrand(y)[:, :6]

        val, _ = integrate(fn, spec, breakpoints=bp)
        n = np.array([val[i] * ka ** m for i, (m, _, _) in enumerate(_N_SHAPES)])
    else:
        if not valid:
            warnings.warn(f"constant-field forms used at w*alpha = {wa:.3g}; "
                          f"(w*alpha)^-2 = {wa ** -2:.3g} is not small", ApproximationInvalid,
                          stacklevel=2)
        n = constant_field_integrals(p, _gaussian_width(f))
        n[:3] = [fo["N1"], fo["N2"], fo["N3"]]
    return CliffIntegrals(*map(float, n), w_alpha=float(wa), exact=bool(exact),
                          first_order=fo, valid=bool(valid))


def cliff_fisher(p: CliffParameters, n: CliffIntegrals, family: str = SINGLE_PHOTON,
                 N: float = 1.0) -> np.ndarray:
    """2x2 QFIM for (h, alpha) assembled from the N_i integrals."""
    k, h = p.k, p.h
    f11 = k ** 2 * ((1.0 - n.N3) if family == SINGLE_PHOTON else (2.0 - n.N3))
    f12 = k * h * n.N1
    f22 = h ** 2 * n.N2
    return 4.0 * N * np.array([[f11, f12], [f12, f22]])


def alpha_coefficient(p: CliffParameters | None = None, n: CliffIntegrals | None = None) -> float:
    """Prefactor c in sigma_alpha = c / (k h) * sqrt(w alpha / N).

    Without arguments returns the closed-form value. Given integrals, it is
    recomputed from N2 via the diagonal bound 1 / F22.
    """
    if n is None:
        return ALPHA_COEFFICIENT
    return p.k / (2.0 * p.alpha * math.sqrt(n.N2 * n.w_alpha))


@dataclass
class PrecisionBounds:
    """Relative precision limits sigma_h = dh/h and sigma_alpha = dalpha/alpha."""

    sigma_h: float
    sigma_alpha: float
    family: str
    N: float
    kh: float
    w_alpha: float
    regime_ratio: float
    exact: bool
    coefficient: float


def precision_bounds_cliff(p: CliffParameters, f: IlluminationProfile, N: float = 1.0,
                           family: str = SINGLE_PHOTON, exact: bool = False,
                           strict: bool = False, integrals: CliffIntegrals | None = None
                           ) -> PrecisionBounds:
    """Relative Cramer-Rao limits for height and steepness.

    First order: sigma_alpha = c/(k h) sqrt(w alpha / N) with c = ALPHA_COEFFICIENT,
    sigma_h = 1/(2 k h sqrt(N)) for one photon and 1/(2 sqrt(2) k h sqrt(N))
    for a coherent state. ``exact`` instead inverts the full 2x2 matrix built
    from quadrature N_i.

    The closed forms assume F11 F22 >> F12^2. If that ratio is below 100 a
    :class:`RegimeViolation` warning is issued (raised when ``strict``).
    """
    if family not in FAMILIES:
        raise InvalidParameters(f"unknown state family {family!r}")
    if not N > 0:
        raise InvalidParameters("photon number must be positive")
    if integrals is None:
        integrals = cliff_integrals(p, f, exact=exact)
    kh = p.kh
    wa = integrals.w_alpha
    F = cliff_fisher(p, integrals, family, N)
    ratio = F[0, 0] * F[1, 1] / F[0, 1] ** 2 if F[0, 1] != 0 else math.inf
    if ratio < 100.0:
        msg = (f"F11*F22/F12^2 = {ratio:.3g} < 100 at w*alpha = {wa:.3g}; "
               "closed-form bounds neglect the h-alpha correlation")
        if strict:
            raise RegimeViolation(msg)
        warnings.warn(msg, RegimeViolation, stacklevel=2)
    if exact:
        Finv = invert(F)
        sigma_h = math.sqrt(Finv[0, 0]) / p.h
        sigma_a = math.sqrt(Finv[1, 1]) / p.alpha
        coef = sigma_a * kh / math.sqrt(wa / N)
    else:
        gap = 1.0 if family == SINGLE_PHOTON else math.sqrt(2.0)
        sigma_h = 1.0 / (2.0 * gap * kh * math.sqrt(N))
        coef = ALPHA_COEFFICIENT
        sigma_a = coef / kh * math.sqrt(wa / N)
    return PrecisionBounds(sigma_h, sigma_a, family, float(N), kh, wa, float(ratio),
                           bool(exact), coef)


# ---------------------------------------------------------------- mode-expansion optimality


@dataclass
class ModeOptimalityReport:
    """Result of checking a mode expansion C_n(theta) for measurement optimality.

    ``phase_derivatives`` is (modes x parameters) with NaN for degenerate
    modes, whose phase is undefined and which are excluded from that check.
    """

    phase_derivatives: np.ndarray
    max_phase_derivative: float
    degenerate_modes: list
    F_Q: np.ndarray
    F_C: np.ndarray
    discrepancy: float
    phase_tol: float
    fisher_tol: float

    @property
    def phases_independent(self) -> bool:
        return self.max_phase_derivative <= self.phase_tol

    @property
    def fisher_match(self) -> bool:
        return self.discrepancy <= self.fisher_tol

    @property
    def optimal(self) -> bool:
        return self.fisher_match


def mode_expansion_optimality(coeffs: Callable[[np.ndarray], np.ndarray], theta0, delta,
                              threshold: float = 1e-12, phase_tol: float = 1e-10,
                              fisher_tol: float = 1e-6) -> ModeOptimalityReport:
    """Check whether measuring the populations |C_n|^2 saturates the quantum bound.

    Derivatives come from central differences with step ``delta`` (scalar or
    per parameter). F^Q uses the pure-state formula on the coefficient
    vector; F^C is the classical Fisher matrix of the populations, where a
    mode with zero population at theta0 contributes its quadratic-form
    limit 4 Re(dC_i* dC_j).
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    M = len(theta0)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (M,))
    c0 = np.asarray(coeffs(theta0), dtype=complex)
    dC = np.empty((M, len(c0)), dtype=complex)
    for i in range(M):
        e = np.zeros(M)
        e[i] = delta[i]
        dC[i] = (np.asarray(coeffs(theta0 + e)) - np.asarray(coeffs(theta0 - e))) / (2 * delta[i])

    rho = np.abs(c0) ** 2
    live = rho > threshold
    degenerate = [int(n) for n in np.flatnonzero(~live)]

    phase_d = np.full((len(c0), M), np.nan)
    phase_d[live] = (np.imag(np.conj(c0[live])[None, :] * dC[:, live]) / rho[live]).T
    max_pd = float(np.max(np.abs(phase_d[live]))) if np.any(live) else 0.0

    overlap = dC.conj() @ dC.T
    berry = dC.conj() @ c0
    FQ = 4.0 * np.real(overlap - np.outer(berry, berry.conj()))

    drho = 2.0 * np.real(np.conj(c0)[None, :] * dC)
    FC = (drho[:, live] / rho[live]) @ drho[:, live].T
    dead = dC[:, ~live]
    FC = FC + 4.0 * np.real(dead.conj() @ dead.T)

    scale = np.max(np.abs(FQ))
    disc = float(np.max(np.abs(FC - FQ)) / scale) if scale > 0 else float(np.max(np.abs(FC)))
    return ModeOptimalityReport(phase_d, max_pd, degenerate, FQ, FC, disc, phase_tol, fisher_tol)


def hermite_gauss_displacement_coeffs(w0: float, n_modes: int = 60):
    """Coefficients of a displaced Gaussian in the Hermite-Gauss basis, as a function of d."""
    from scipy.special import gammaln

    n = np.arange(n_modes)
    log_fact = 0.5 * gammaln(n + 1.0)

    def coeffs(theta):
        d = float(np.atleast_1d(theta)[0])
        r = d / w0
        with np.errstate(divide="ignore"):
            logmag = n * np.log(abs(r)) - log_fact - 0.5 * r * r
        sign = np.where((n % 2 == 1) & (r < 0), -1.0, 1.0)
        out = sign * np.exp(logmag)
        if r == 0:
            out = (n == 0).astype(float)
        return out.astype(complex)

    return coeffs
