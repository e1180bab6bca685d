"""Illumination profiles and phase-object models.

All public quantities are SI: positions in metres, wavenumbers in rad/m,
heights in metres, steepness ``alpha`` in 1/m. Phase is in radians.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.special import expit

from .errors import InvalidParameters, InvalidWidth
from .numerics import QuadratureSpec, integrate


def sech2(y):
    """sech(y)**2 without overflow for large |y|."""
    e = np.exp(-2.0 * np.abs(y))
    return 4.0 * e / (1.0 + e) ** 2


def one_minus_tanh(y):
    """1 - tanh(y), accurate in the y -> +inf tail."""
    return 2.0 * expit(-2.0 * np.asarray(y, dtype=float))


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True, eq=False)
class IlluminationProfile:
    """Normalised transverse amplitude f(x) with integral of |f|^2 equal to 1."""

    kind: str
    w: float | None = None
    samples: tuple[np.ndarray, np.ndarray] | None = None
    _amplitude: Callable[[np.ndarray], np.ndarray] = field(default=None, repr=False)
    norm_factor: float = 1.0

    def amplitude(self, x) -> np.ndarray:
        return self._amplitude(np.asarray(x, dtype=float))

    def intensity(self, x) -> np.ndarray:
        a = self.amplitude(x)
        return (a * np.conj(a)).real

    @property
    def half_extent(self) -> float:
        """Half-width beyond which |f|^2 is negligible (6 w for a Gaussian)."""
        if self.kind == "gaussian":
            return 6.0 * self.w
        xs = self.samples[0]
        return float(max(abs(xs[0]), abs(xs[-1])))

    @property
    def width(self) -> float:
        if self.kind == "gaussian":
            return self.w
        x = self.samples[0]
        i = self.intensity(x)
        return float(2.0 * np.sqrt(trapezoid(i * x ** 2, x) / trapezoid(i, x)))

    def breakpoints(self) -> np.ndarray | None:
        return None if self.samples is None else self.samples[0]


def gaussian_profile(w: float) -> IlluminationProfile:
    """Gaussian beam with |f(x)|^2 = sqrt(2/(pi w^2)) exp(-2 x^2 / w^2)."""
    if not (w > 0 and math.isfinite(w)):
        raise InvalidWidth(f"beam width must be positive, got {w!r}")
    amp0 = (2.0 / (math.pi * w * w)) ** 0.25

    def amplitude(x):
        return amp0 * np.exp(-(x / w) ** 2)

    return IlluminationProfile("gaussian", w=float(w), _amplitude=amplitude)


def _check_samples(x, *cols):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) < 4:
        raise InvalidParameters("tabulated data needs at least 4 samples")
    if not np.all(np.diff(x) > 0):
        raise InvalidParameters("tabulated x must be strictly increasing")
    out = [x]
    for c in cols:
        c = np.asarray(c)
        if c.shape != x.shape or not np.all(np.isfinite(c)):
            raise InvalidParameters("tabulated columns must be finite and match x")
        out.append(c)
    return out


def tabulated_profile(x, amplitude, normalize: bool = True) -> IlluminationProfile:
    """Complex amplitude interpolated by natural cubic splines; zero outside the samples.

    The interpolant is rescaled so that its squared modulus integrates to one;
    the applied factor is kept in ``norm_factor``.
    """
    x, amp = _check_samples(x, amplitude)
    amp = amp.astype(complex)
    re = CubicSpline(x, amp.real, bc_type="natural")
    im = CubicSpline(x, amp.imag, bc_type="natural")
    lo, hi = x[0], x[-1]

    def raw(xq):
        inside = (xq >= lo) & (xq <= hi)
        xc = np.clip(xq, lo, hi)
        return np.where(inside, re(xc) + 1j * im(xc), 0.0)

    factor = 1.0
    if normalize:
        L = max(abs(lo), abs(hi))
        val, _ = integrate(lambda u: np.abs(raw(u)) ** 2, QuadratureSpec(L, rel_tol=1e-13),
                           breakpoints=x)
        if not val > 0:
            raise InvalidParameters("tabulated amplitude is identically zero")
        factor = 1.0 / math.sqrt(float(val))

    def amplitude_fn(xq):
        return factor * raw(xq)

    return IlluminationProfile("tabulated", samples=(x, amp), _amplitude=amplitude_fn,
                               norm_factor=factor)


# ---------------------------------------------------------------- phase models


@dataclass(frozen=True, eq=False)
class PhaseModel:
    """Phase phi(x, theta) with analytic partial derivatives.

    ``theta_scale`` gives a typical magnitude for each parameter; it sets
    finite-difference steps and the dimensionless form used in quadrature.
    ``x_scale`` is the length scale of the phase feature.
    """

    parameter_names: tuple[str, ...]
    phase: Callable[[np.ndarray, np.ndarray], np.ndarray]
    partials: tuple[Callable[[np.ndarray, np.ndarray], np.ndarray], ...]
    theta0: np.ndarray
    theta_scale: np.ndarray
    x_scale: float
    kind: str = "analytic"
    cliff: "CliffParameters | None" = None
    samples: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n_params(self) -> int:
        return len(self.parameter_names)

    def gradient(self, x, theta=None) -> np.ndarray:
        """Array of shape (M, len(x)) holding d phi / d theta_i."""
        theta = self.theta0 if theta is None else np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(p(x, theta), x.shape) for p in self.partials])

    def breakpoints(self, theta=None) -> np.ndarray | None:
        if self.samples is None:
            return None
        theta = self.theta0 if theta is None else np.asarray(theta, dtype=float)
        return self.samples[0] + theta[1]


@dataclass(frozen=True)
class CliffParameters:
    """Cliff-like step of height ``h`` and steepness ``alpha`` probed at wavenumber ``k``."""

    k: float
    h: float
    alpha: float
    beta: float | None = None

    def __post_init__(self):
        for name in ("k", "h", "alpha"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParameters(f"{name} must be positive, got {v!r}")
        if self.beta is not None:
            lhs = math.tan(self.beta)
            rhs = self.alpha * self.h / 2.0
            if abs(lhs - rhs) > 1e-12 * max(abs(lhs), abs(rhs)):
                raise InvalidParameters("beta inconsistent with tan(beta) = alpha h / 2")

    @classmethod
    def from_optics(cls, wavelength: float, h: float, beta: float | None = None,
                    alpha: float | None = None) -> "CliffParameters":
        """Build from wavelength and exactly one of sidewall angle (rad) or steepness."""
        if (beta is None) == (alpha is None):
            raise InvalidParameters("give exactly one of beta or alpha")
        if not wavelength > 0:
            raise InvalidParameters("wavelength must be positive")
        k = 2.0 * math.pi / wavelength
        if beta is not None:
            alpha = 2.0 * math.tan(beta) / h
        else:
            beta = math.atan(alpha * h / 2.0)
        return cls(k=k, h=h, alpha=alpha, beta=beta)

    @property
    def kh(self) -> float:
        return self.k * self.h

    def with_(self, **changes) -> "CliffParameters":
        if "beta" not in changes and ("h" in changes or "alpha" in changes):
            changes["beta"] = None
        return replace(self, **changes)


def slope_height(p: CliffParameters, x):
    """Surface profile S(x) = (h/2)(1 + tanh(alpha x))."""
    return 0.5 * p.h * (1.0 + np.tanh(p.alpha * np.asarray(x, dtype=float)))


def cliff_model(p: CliffParameters, parameters: Sequence[str] = ("h", "alpha")) -> PhaseModel:
    """Reflection phase k h (1 - tanh(alpha x)) with the chosen free parameters.

    Parameters not listed stay fixed at the values in ``p``.
    """
    parameters = tuple(parameters)
    if not parameters or any(n not in ("h", "alpha") for n in parameters) \
            or len(set(parameters)) != len(parameters):
        raise InvalidParameters(f"cliff parameters must be drawn from ('h', 'alpha'), got {parameters}")
    k = p.k
    idx = {n: i for i, n in enumerate(parameters)}

    def unpack(theta):
        h = theta[idx["h"]] if "h" in idx else p.h
        a = theta[idx["alpha"]] if "alpha" in idx else p.alpha
        return h, a

    def phase(x, theta):
        h, a = unpack(theta)
        return k * h * one_minus_tanh(a * x)

    def d_h(x, theta):
        _, a = unpack(theta)
        return k * one_minus_tanh(a * x)

    def d_alpha(x, theta):
        h, a = unpack(theta)
        return -k * h * x * sech2(a * x)

    funcs = {"h": d_h, "alpha": d_alpha}
    ref = {"h": p.h, "alpha": p.alpha}
    theta0 = np.array([ref[n] for n in parameters])
    return PhaseModel(parameter_names=parameters, phase=phase,
                      partials=tuple(funcs[n] for n in parameters),
                      theta0=theta0, theta_scale=theta0.copy(), x_scale=1.0 / p.alpha,
                      kind="cliff", cliff=p)


def tabulated_model(x, phase) -> PhaseModel:
    """Phase samples turned into a two-parameter model ``scale * phi(x - shift)``.

    Reference point is scale = 1, shift = 0. The profile is a natural cubic
    spline held constant outside the sampled range; the shift partial is the
    spline derivative.
    """
    x, ph = _check_samples(x, phase)
    ph = ph.astype(float)
    spline = CubicSpline(x, ph, bc_type="natural")
    dspline = spline.derivative()
    lo, hi = x[0], x[-1]

    def base(u):
        return spline(np.clip(u, lo, hi))

    def dbase(u):
        return np.where((u >= lo) & (u <= hi), dspline(np.clip(u, lo, hi)), 0.0)

    def phase_fn(xq, theta):
        return theta[0] * base(xq - theta[1])

    def d_scale(xq, theta):
        return base(xq - theta[1])

    def d_shift(xq, theta):
        return -theta[0] * dbase(xq - theta[1])

    x_scale = float(np.median(np.diff(x))) * 10.0
    return PhaseModel(parameter_names=("scale", "shift"), phase=phase_fn,
                      partials=(d_scale, d_shift), theta0=np.array([1.0, 0.0]),
                      theta_scale=np.array([1.0, x_scale]), x_scale=x_scale,
                      kind="tabulated", samples=(x, ph))


def load_tabulated_csv(path) -> tuple[PhaseModel, IlluminationProfile | None]:
    """Read ``x,phase`` or ``x,re_f,im_f,phase`` CSV (header row required)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise InvalidParameters(f"{path}: expected a header row and data")
    header, body = rows[0], [r for r in rows[1:] if r and any(c.strip() for c in r)]
    try:
        float(header[0])
        raise InvalidParameters(f"{path}: first row must be a header")
    except ValueError:
        pass
    ncol = len(header)
    if ncol not in (2, 4):
        raise InvalidParameters(f"{path}: expected 2 or 4 columns, found {ncol}")
    try:
        data = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise InvalidParameters(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != ncol:
        raise InvalidParameters(f"{path}: ragged rows")
    model = tabulated_model(data[:, 0], data[:, -1])
    profile = None
    if ncol == 4:
        profile = tabulated_profile(data[:, 0], data[:, 1] + 1j * data[:, 2])
    return model, profile


# ---------------------------------------------------------------- partials check


@dataclass
class PartialsReport:
    max_rel_deviation: dict
    tol: float
    passed: bool
    sample_consistency: float | None = None


def validate_partials(model: PhaseModel, probes: int = 64, seed: int = 0,
                      tol: float | None = None, rel_step: float = 1e-5) -> PartialsReport:
    """Compare analytic partials with central finite differences at random probes.

    Deviation per parameter is max |analytic - fd| over probes divided by
    max |analytic|. Tabulated models are additionally checked for consistency
    between the spline derivative and a second-order difference of the raw
    samples, which flags corrupted or under-sampled data.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if tol is None:
        tol = 1e-3 if model.kind == "tabulated" else 1e-6
    rng = np.random.default_rng(seed)
    M = model.n_params
    if model.samples is not None:
        lo, hi = model.samples[0][0], model.samples[0][-1]
        xs = rng.uniform(lo, hi, probes)
    else:
        xs = rng.uniform(-5.0, 5.0, probes) * model.x_scale
    jitter = rng.uniform(-0.1, 0.1, (probes, M)) * model.theta_scale
    thetas = model.theta0 + jitter

    dev = {}
    for i, name in enumerate(model.parameter_names):
        step = rel_step * model.theta_scale[i]
        analytic = np.empty(probes)
        fd = np.empty(probes)
        for j in range(probes):
            th = thetas[j]
            e = np.zeros(M)
            e[i] = step
            x = xs[j:j + 1]
            analytic[j] = model.partials[i](x, th)[0]
            fd[j] = (model.phase(x, th + e)[0] - model.phase(x, th - e)[0]) / (2 * step)
        scale = np.max(np.abs(analytic))
        diff = np.max(np.abs(analytic - fd))
        if not np.isfinite(diff):
            dev[name] = math.inf
        else:
            dev[name] = float(diff / scale) if scale > 0 else float(diff)
    passed = all(v < tol for v in dev.values())

    consistency = None
    if model.samples is not None:
        xk, pk = model.samples
        spline_d = CubicSpline(xk, pk, bc_type="natural").derivative()(xk[1:-1])
        raw_d = np.gradient(pk, xk, edge_order=2)[1:-1]
        scale = np.max(np.abs(spline_d))
        consistency = float(np.max(np.abs(spline_d - raw_d)) / scale) if scale > 0 else 0.0
        passed = passed and consistency < tol
    return PartialsReport(dev, tol, bool(passed), consistency)


def corrupt_partial(model: PhaseModel, index: int, factor: float) -> PhaseModel:
    """Copy of ``model`` with one partial scaled by ``factor`` (for negative tests)."""
    parts = list(model.partials)
    orig = parts[index]
    parts[index] = lambda x, th: factor * orig(x, th)
    return replace(model, partials=tuple(parts))
