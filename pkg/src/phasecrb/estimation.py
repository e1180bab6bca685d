"""Photon-counting simulation and maximum-likelihood estimation in the mode basis."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import xlogy

from .errors import (BoundaryMaximum, InvalidParameters, InvalidProbabilities,
                     NegativeProbability)
from .fisher import cliff_integrals, qfim_single_photon
from .models import IlluminationProfile, PhaseModel
from .modes import (ProbabilityVector, analytic_probabilities_cliff, build_basis,
                    probabilities_numeric)
from .numerics import invert

RNG_ALGORITHM = "numpy.random.PCG64 seeded by numpy.random.SeedSequence([master_seed, trial])"
UNOBSERVED_THRESHOLD = 1e-6
DEFAULT_TRUST_RADIUS = 0.5  # radians of maximum phase excursion


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), int(trial)])))


@dataclass
class CountRecord:
    """Photon counts per outcome. When ``unobserved`` is set, the last entry counts lost photons."""

    counts: np.ndarray
    n_photons: int
    seed: int | None = None
    unobserved: bool = False

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if np.any(self.counts < 0):
            raise InvalidParameters("counts must be non-negative")
        if abs(float(self.counts.sum()) - self.n_photons) > 1e-9 * max(1, self.n_photons):
            raise InvalidParameters("counts must sum to n_photons")


def _as_probabilities(p) -> tuple[np.ndarray, float]:
    if isinstance(p, ProbabilityVector):
        return p.p.astype(float), p.residual
    arr = np.asarray(p, dtype=float)
    return arr, 1.0 - arr.sum()


def sample_counts(p, n_photons: int, seed=None, rng: np.random.Generator | None = None,
                  unobserved_threshold: float = UNOBSERVED_THRESHOLD) -> CountRecord:
    """Multinomial draw of ``n_photons`` detections.

    A residual 1 - sum(p) above ``unobserved_threshold`` becomes an extra
    "unobserved" outcome; a smaller one is folded into outcome 0.
    """
    probs, residual = _as_probabilities(p)
    if np.any(probs < -1e-12):
        raise InvalidProbabilities(f"negative probability {probs.min():.3e}")
    if residual < -1e-10:
        raise InvalidProbabilities(f"probabilities sum to {1 - residual:.12f} > 1")
    probs = np.clip(probs, 0.0, None)
    unobserved = residual > unobserved_threshold
    if unobserved:
        probs = np.append(probs, residual)
    else:
        probs = probs.copy()
        probs[0] += max(residual, 0.0)
    probs = probs / probs.sum()
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    counts = rng.multinomial(int(n_photons), probs)
    return CountRecord(counts, int(n_photons), seed, unobserved)


def _log_likelihood(counts: np.ndarray, pv: ProbabilityVector) -> float:
    probs = np.asarray(pv.p, dtype=float)
    if len(counts) == len(probs) + 1:
        if pv.residual > UNOBSERVED_THRESHOLD:
            probs = np.append(probs, pv.residual)
        else:
            counts = np.concatenate([[counts[0] + counts[-1]], counts[1:-1]])
    elif len(counts) != len(probs):
        raise InvalidParameters("count vector does not match the probability model")
    probs = np.clip(probs, 0.0, None)
    value = float(np.sum(xlogy(counts, probs)))
    return value if np.isfinite(value) else -math.inf


def mle_fit(counts, prob_model: Callable[[np.ndarray], ProbabilityVector], bounds,
            grid_points: int | None = None, boundary_tol: float = 1e-7) -> np.ndarray:
    """Maximise sum_k counts_k log p_k(dtheta) inside a box.

    ``bounds`` is a sequence of (low, high) per parameter. The search runs in
    box-normalised coordinates, so rescaling a parameter rescales the
    estimate exactly. A coarse grid scan seeds a bounded derivative-free
    refinement; equal grid likelihoods are resolved toward the smallest
    normalised |dtheta|. Raises :class:`BoundaryMaximum` when the optimum
    touches the box.
    """
    c = counts.counts if isinstance(counts, CountRecord) else np.asarray(counts, dtype=float)
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(hi <= lo):
        raise InvalidParameters("each bound needs low < high")
    M = len(lo)
    span = hi - lo

    def to_theta(z):
        return lo + np.asarray(z) * span

    def nll(z):
        z = np.clip(z, 0.0, 1.0)
        try:
            pv = prob_model(to_theta(z))
        except NegativeProbability:
            return math.inf
        return -_log_likelihood(c, pv)

    n_grid = grid_points or (201 if M == 1 else 41)
    axis = np.linspace(0.0, 1.0, n_grid)
    mesh = np.stack(np.meshgrid(*([axis] * M), indexing="ij"), axis=-1).reshape(-1, M)
    vals = np.array([nll(z) for z in mesh])
    best = np.min(vals)
    tied = np.flatnonzero(vals <= best + 1e-12 * max(1.0, abs(best)))
    norms = np.linalg.norm(to_theta(mesh[tied]) / span, axis=1)
    z0 = mesh[tied[np.argmin(norms)]]

    h = 1.0 / (n_grid - 1)
    if M == 1:
        a, b = max(0.0, z0[0] - h), min(1.0, z0[0] + h)
        res = minimize_scalar(lambda t: nll(np.array([t])), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12})
        z = np.array([res.x])
        if nll(z0) < res.fun:
            z = z0
    else:
        simplex = np.vstack([z0] + [z0 + h * e for e in np.eye(M)])
        res = minimize(nll, z0, method="Nelder-Mead", bounds=[(0.0, 1.0)] * M,
                       options={"initial_simplex": np.clip(simplex, 0, 1), "xatol": 1e-11,
                                "fatol": 1e-13, "maxiter": 4000})
        z = res.x if res.fun <= nll(z0) else z0
    if np.any(z <= boundary_tol) or np.any(z >= 1.0 - boundary_tol):
        raise BoundaryMaximum(f"likelihood maximum on the search box at {to_theta(z)}")
    return to_theta(z)


# ---------------------------------------------------------------- Monte Carlo


def phase_excursion(model: PhaseModel, f: IlluminationProfile, theta0, dtheta, samples: int = 4001):
    """Largest |phi(theta0 + dtheta) - phi(theta0)| over the illuminated region."""
    L = max(f.half_extent, 30.0 * model.x_scale)
    x = np.linspace(-L, L, samples)
    return float(np.max(np.abs(model.phase(x, theta0 + dtheta) - model.phase(x, theta0))))


def _box_corners(bounds):
    bounds = np.asarray(bounds, dtype=float)
    grids = np.meshgrid(*bounds, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


@dataclass
class SimulationReport:
    """Outcome of repeated sample-and-fit trials.

    ``crb`` is F^-1 / n with F the per-photon single-photon QFIM at the
    reference point; ``efficiency`` is the sample variance over the matching
    CRB diagonal. With one trial, covariance and efficiency are undefined (None).
    """

    trials: int
    n_photons: int
    parameter_names: tuple
    dtheta_true: np.ndarray
    estimates: np.ndarray
    sample_mean: np.ndarray
    sample_covariance: np.ndarray | None
    crb: np.ndarray
    efficiency: np.ndarray | None
    path: str
    seed: int
    bounds: np.ndarray
    rng_algorithm: str = RNG_ALGORITHM
    failures: list = field(default_factory=list)

    @property
    def covariance_defined(self) -> bool:
        return self.sample_covariance is not None

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a, dtype=float).tolist()

        return {
            "parameter_names": list(self.parameter_names),
            "trials": self.trials,
            "n_photons": self.n_photons,
            "seed": self.seed,
            "rng_algorithm": self.rng_algorithm,
            "likelihood_path": self.path,
            "dtheta_true": arr(self.dtheta_true),
            "bounds": arr(self.bounds),
            "sample_mean": arr(self.sample_mean),
            "sample_covariance": arr(self.sample_covariance),
            "covariance_defined": self.covariance_defined,
            "crb": arr(self.crb),
            "efficiency": arr(self.efficiency),
            "failures": list(self.failures),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def estimates_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        unit = {"h": "m", "alpha": "1/m", "shift": "m", "scale": "1"}
        wr.writerow(["trial"] + [f"d{n} [{unit.get(n, 'param')}]" for n in self.parameter_names])
        for i, row in enumerate(self.estimates):
            wr.writerow([i] + [repr(float(v)) for v in row])
        return buf.getvalue()


def monte_carlo(model: PhaseModel, f: IlluminationProfile, theta0, dtheta_true, n_photons: int,
                trials: int, seed: int = 0, bounds=None, path: str = "auto",
                trust_radius: float = DEFAULT_TRUST_RADIUS, se_multiple: float = 6.0
                ) -> SimulationReport:
    """Sample counts from the exact mode probabilities and refit, ``trials`` times.

    Counts always come from quadrature probabilities at theta0 + dtheta_true.
    The likelihood uses the analytic second-order cliff probabilities when
    the whole search box stays within ``trust_radius`` of phase excursion
    (``path="auto"``), otherwise quadrature probabilities.
    """
    if trials < 1:
        raise InvalidParameters("trials must be >= 1")
    theta0 = model.theta0 if theta0 is None else np.asarray(theta0, dtype=float)
    dtheta_true = np.atleast_1d(np.asarray(dtheta_true, dtype=float))
    M = model.n_params
    if dtheta_true.shape != (M,):
        raise InvalidParameters(f"dtheta_true needs {M} entries")

    basis = build_basis(model, f, theta0)
    G, g = basis.G, basis.g
    crb = invert(qfim_single_photon(G, g, 1.0).F) / n_photons
    if bounds is None:
        se = np.sqrt(np.diag(crb))
        lo = dtheta_true - se_multiple * se
        hi = dtheta_true + se_multiple * se
        # keep the sign quadrant of the truth
        lo = np.where(dtheta_true > 0, np.maximum(lo, 0.0), lo)
        hi = np.where(dtheta_true < 0, np.minimum(hi, 0.0), hi)
        bounds = np.stack([lo, hi], axis=1)
    bounds = np.asarray(bounds, dtype=float)

    if path == "auto":
        analytic_ok = model.cliff is not None and all(
            phase_excursion(model, f, theta0, c) <= trust_radius for c in _box_corners(bounds))
        path = "analytic" if analytic_ok else "numeric"
    if path == "analytic":
        if model.cliff is None:
            raise InvalidParameters("analytic likelihood is only available for the cliff model")
        ref = model.cliff.with_(**{n: v for n, v in zip(model.parameter_names, theta0)})
        integrals = cliff_integrals(ref, f)
        names = model.parameter_names

        def prob_model(d):
            kw = dict(zip(names, d))
            return analytic_probabilities_cliff(ref, integrals, kw.get("h", 0.0),
                                                kw.get("alpha", 0.0), parameters=names)
    elif path == "numeric":
        def prob_model(d):
            return probabilities_numeric(basis, model, f, d)
    else:
        raise InvalidParameters(f"unknown likelihood path {path!r}")

    truth = probabilities_numeric(basis, model, f, dtheta_true)
    estimates = np.full((trials, M), np.nan)
    failures = []
    for t in range(trials):
        rec = sample_counts(truth, n_photons, rng=trial_rng(seed, t))
        try:
            estimates[t] = mle_fit(rec, prob_model, bounds)
        except BoundaryMaximum as exc:
            failures.append({"trial": t, "error": "BoundaryMaximum", "detail": str(exc)})
    good = estimates[~np.isnan(estimates).any(axis=1)]
    mean = good.mean(axis=0) if len(good) else np.full(M, np.nan)
    cov = eff = None
    if len(good) >= 2:
        cov = np.atleast_2d(np.cov(good, rowvar=False))
        eff = np.diag(cov) / np.diag(crb)
    return SimulationReport(trials, int(n_photons), model.parameter_names, dtheta_true,
                            estimates, mean, cov, crb, eff, path, int(seed), bounds,
                            failures=failures)

