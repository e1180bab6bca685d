"""Acceptance criteria 1-8, each run at its stated tolerance and time budget.

Run under pytest (one summary line per criterion is printed at the end) or
directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phasecrb.errors import RegimeViolation  # noqa: E402
from phasecrb.estimation import monte_carlo  # noqa: E402
from phasecrb.fisher import (ALPHA_COEFFICIENT, COHERENT, SINGLE_PHOTON,  # noqa: E402
                             alpha_coefficient, cliff_integrals, hermite_gauss_displacement_coeffs,
                             inner_products, mode_expansion_optimality, precision_bounds_cliff,
                             qfim_coherent, qfim_single_photon)
from phasecrb.models import CliffParameters, cliff_model, gaussian_profile  # noqa: E402
from phasecrb.modes import (GridSpec, analytic_probabilities_cliff, build_basis,  # noqa: E402
                            probabilities_numeric, saturation_report)

from oracles import n3_oracle, random_tabulated  # noqa: E402

WAVELENGTH = 633e-9
REF = CliffParameters.from_optics(WAVELENGTH, WAVELENGTH / 4, beta=math.radians(80.0))
BEAM = gaussian_profile(1.4e-6)

RESULTS: dict = {}


def beam_for(w_alpha):
    return gaussian_profile(w_alpha / REF.alpha)


def _record(number, title, budget):
    """Run a check, time it and store (passed, detail, seconds)."""
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RegimeViolation)
                ok, detail = fn()
            dt = time.perf_counter() - t0
            ok = bool(ok) and dt < budget
            RESULTS[number] = (title, ok, f"{detail}; {dt:.2f} s (budget {budget:g} s)")
            return ok, RESULTS[number][2]
        run.number = number
        return run
    return wrap


@_record(1, "alpha-precision coefficient", 1.0)
def criterion_1():
    coeff = alpha_coefficient(REF, cliff_integrals(REF, BEAM, exact=False))
    N = 1e6
    b = precision_bounds_cliff(REF, BEAM, N, exact=False)
    closed = ALPHA_COEFFICIENT / REF.kh * math.sqrt(b.w_alpha / N)
    # same diagonal bound with the quadrature value of N2 at w*alpha = 50
    f50 = beam_for(50.0)
    coeff50 = alpha_coefficient(REF, cliff_integrals(REF, f50, exact=True))
    dev50 = abs(coeff50 / ALPHA_COEFFICIENT - 1)
    full = precision_bounds_cliff(REF, f50, N, exact=True).coefficient
    ok = (abs(coeff - 0.8537) <= 5e-4 and abs(b.sigma_alpha / closed - 1) < 1e-12
          and dev50 < 2e-3)
    return ok, (f"coefficient {coeff:.6f}, w*alpha=50 quadrature {coeff50:.5f} "
                f"({dev50:.3%}); with h-alpha correlation {full:.4f}")


@_record(2, "sqrt(2) gap between families", 1.0)
def criterion_2():
    s = precision_bounds_cliff(REF, BEAM, 1e6, SINGLE_PHOTON, exact=False)
    c = precision_bounds_cliff(REF, BEAM, 1e6, COHERENT, exact=False)
    gap = abs(s.sigma_h / c.sigma_h - math.sqrt(2))
    worst = 0.0
    model = cliff_model(REF)
    for wa in (20.0, 50.0, 100.0):
        f = beam_for(wa)
        G, g = inner_products(model, f)
        ratio = qfim_coherent(G, g).F[0, 0] / qfim_single_photon(G, g).F[0, 0]
        n3 = n3_oracle(REF, f)
        worst = max(worst, abs(ratio / ((2 - n3) / (1 - n3)) - 1))
    return gap <= 1e-9 and worst < 1e-9, f"|ratio - sqrt2| = {gap:.1e}, F11 ratio max rel dev {worst:.1e}"


@_record(3, "QFIM family identity", 5.0)
def criterion_3():
    worst = 0.0
    models = [cliff_model(REF)] + [random_tabulated(seed, REF.alpha) for seed in range(3)]
    for m in models:
        G, g = inner_products(m, BEAM)
        N = 3.0
        s, c = qfim_single_photon(G, g, N), qfim_coherent(G, g, N)
        dev = np.abs(c.F - s.F - 4 * N * np.outer(g, g)) / np.abs(c.F)
        worst = max(worst, float(dev.max()))
    return worst < 1e-9, f"max entrywise rel deviation {worst:.1e} over {len(models)} models"


@_record(4, "gamma-basis saturation", 10.0)
def criterion_4():
    reps = [saturation_report(cliff_model(REF, names), BEAM) for names in (("h",), ("h", "alpha"))]
    phi1 = saturation_report(cliff_model(REF, ("h",)), BEAM, measurement="phi1")
    lhs, rhs, equal = phi1.condition
    expected = 2 - n3_oracle(REF, BEAM)
    ok = (all(r.discrepancy < 1e-4 for r in reps) and not equal
          and abs(lhs / rhs - expected) <= 1e-6 and not phi1.passed)
    return ok, (f"discrepancies {reps[0].discrepancy:.1e} / {reps[1].discrepancy:.1e}, "
                f"projector lhs/rhs {lhs / rhs:.9f} vs {expected:.9f}")


DIRECTIONS = {"alpha": (0.0, 1.0), "h": (1.0, 0.0), "diag": (1.0, 1.0), "anti": (1.0, -1.0)}
RADII = (1e-2, 5e-3, 2.5e-3)


def probability_residuals():
    """max |p_numeric - p_analytic| per direction and radius (scaled k dh, h0 dalpha)."""
    model = cliff_model(REF)
    basis = build_basis(model, BEAM)
    n = cliff_integrals(REF, BEAM)
    out = {}
    for name, (u, v) in DIRECTIONS.items():
        norm = math.hypot(u, v)
        row = []
        for r in RADII:
            eps, eta = r * u / norm, r * v / norm
            d = np.array([eps / REF.k, eta / REF.h])
            num = probabilities_numeric(basis, model, BEAM, d).p
            ana = analytic_probabilities_cliff(REF, n, d[0], d[1]).p
            row.append(float(np.max(np.abs(num - ana))))
        out[name] = np.array(row)
    return out, n


@_record(5, "probability expansions", 10.0)
def criterion_5():
    res, n = probability_residuals()
    radii = np.array(RADII)
    cubic = res["alpha"] / radii ** 3
    stable = np.max(np.abs(cubic / cubic[0] - 1)) <= 0.2
    C = max(float(v[0]) / RADII[0] ** 3 for v in res.values())
    # C is fixed at the largest radius; the smaller radii must respect it
    bounded = all(np.all(v[1:] <= C * radii[1:] ** 3) for v in res.values())
    sums = [abs(analytic_probabilities_cliff(REF, n, e / REF.k, a / REF.h).p.sum() - 1)
            for e in (-0.05, 0.0, 0.03) for a in (-0.02, 0.0, 0.04)]
    exact_sum = max(sums) <= 2.3e-16
    return stable and bounded and exact_sum, (
        f"C along alpha {np.array2string(cubic, precision=4)}, global C {C:.3e}, "
        f"sum rule max dev {max(sums):.1e}")


def _efficiency(names, dtheta):
    rep = monte_carlo(cliff_model(REF, names), BEAM, None, dtheta, 100_000, 400, seed=0)
    return rep


@_record(6, "Monte Carlo efficiency", 120.0)
def criterion_6():
    one = _efficiency(("h",), [0.05 / REF.k])
    two = _efficiency(("h", "alpha"), [0.05 / REF.k, 0.2 * REF.alpha])
    ok = (not one.failures and not two.failures
          and 0.85 <= one.efficiency[0] <= 1.15
          and all(0.8 <= e <= 1.25 for e in two.efficiency))
    return ok, (f"height only {one.efficiency[0]:.3f} ({one.path}), height and steepness "
                f"{np.array2string(two.efficiency, precision=3)} ({two.path})")


@_record(7, "basis orthonormality", 10.0)
def criterion_7():
    model = cliff_model(REF)
    coarse = build_basis(model, BEAM).orthonormality_error()
    fine = build_basis(model, BEAM, grid_spec=GridSpec(4 * 4096)).orthonormality_error()
    ok = coarse <= 1e-8 and fine <= coarse / 10
    return ok, f"default grid {coarse:.1e}, 4x finer {fine:.1e}"


@_record(8, "displaced-Gaussian optimality", 5.0)
def criterion_8():
    reps = [mode_expansion_optimality(hermite_gauss_displacement_coeffs(1.0, 60), [d], 1e-5)
            for d in (0.1, 0.5)]
    ok = all(r.max_phase_derivative <= 1e-10 and r.discrepancy <= 1e-6 for r in reps)
    return ok, "phase derivatives {} / F discrepancy {}".format(
        ", ".join(f"{r.max_phase_derivative:.1e}" for r in reps),
        ", ".join(f"{r.discrepancy:.1e}" for r in reps))


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4,
            criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("check", [pytest.param(c, marks=pytest.mark.slow) if c.number == 6 else c
                                   for c in CRITERIA],
                         ids=[f"criterion_{c.number}" for c in CRITERIA])
def test_criterion(check):
    ok, detail = check()
    assert ok, detail


def summary_lines():
    return [f"criterion {k}: {'PASS' if ok else 'FAIL'}  {title}: {detail}"
            for k, (title, ok, detail) in sorted(RESULTS.items())]


if __name__ == "__main__":
    for check in CRITERIA:
        check()
        print(summary_lines()[-1], flush=True)
    sys.exit(0 if all(ok for _, ok, _ in RESULTS.values()) else 1)
