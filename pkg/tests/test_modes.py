import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from phasecrb.errors import (DegenerateOmega, InvalidParameters, NegativeProbability,
                             StepTooLarge)
from phasecrb.fisher import inner_products, qfim
from phasecrb.models import PhaseModel
from phasecrb.modes import (GridSpec, ProbabilityVector, analytic_amplitudes_cliff,
                            analytic_probabilities_cliff, build_basis, classical_fim,
                            classical_fim_cliff_limit, gram_schmidt_coefficients,
                            nonorthogonal_condition_check, probabilities_numeric, project,
                            saturation_report)

from oracles import n3_oracle


@pytest.fixture(scope="module")
def basis2(model2, beam):
    return build_basis(model2, beam)


@pytest.fixture(scope="module")
def basis_h(model_h, beam):
    return build_basis(model_h, beam)


# ---------------------------------------------------------------- basis construction


def test_centred_metric_height_entry(ref, beam, basis2):
    assert basis2.Omega[0, 0] == pytest.approx(ref.k ** 2 * (1 - n3_oracle(ref, beam)), rel=1e-10)


def test_gram_schmidt_coefficients_whiten_the_metric():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4))
    omega = A @ A.T + 0.1 * np.eye(4)
    C = gram_schmidt_coefficients(omega)
    assert np.allclose(C @ omega @ C.T, np.eye(4), atol=1e-12)
    assert np.allclose(np.triu(C, 1), 0)


def test_basis_is_orthonormal(basis2, basis_h):
    assert basis2.n_modes == 3 and basis_h.n_modes == 2
    assert basis2.orthonormality_error() < 1e-8
    assert basis_h.orthonormality_error() < 1e-8


def test_height_mode_profile(ref, beam, basis_h, model_h):
    x = np.linspace(-5, 5, 41) / ref.alpha
    g1 = basis_h.profile(model_h, x)[1]
    expected = np.abs(np.tanh(ref.alpha * x)) / math.sqrt(1 - n3_oracle(ref, beam))
    assert np.allclose(np.abs(g1), expected, atol=1e-10)
    # purely imaginary: the mode is i times a real function
    assert np.max(np.abs(g1.real)) < 1e-14


def test_steepness_mode_against_fine_trapezoid(ref, beam, basis2, model2):
    """Rebuild g2 from a metric computed by plain trapezoid on a 10x finer grid."""
    x = GridSpec(4096 * 10).build(model2, beam)
    I = beam.intensity(x)
    d = model2.gradient(x, model2.theta0)
    g = trapezoid(I * d, x, axis=1)
    G = np.array([[trapezoid(I * d[i] * d[j], x) for j in range(2)] for i in range(2)])
    om = G - np.outer(g, g)
    # classical Gram-Schmidt written out for two directions
    c11 = 1 / math.sqrt(om[0, 0])
    proj = om[0, 1] / om[0, 0]
    c22 = 1 / math.sqrt(om[1, 1] - proj * om[0, 1])
    g2_oracle = 1j * c22 * ((d[1] - g[1]) - proj * (d[0] - g[0]))
    g2 = basis2.profile(model2, x)[2]
    assert np.max(np.abs(g2 - g2_oracle)) < 1e-6 * np.max(np.abs(g2_oracle))
    assert abs(c11 - basis2.coefficients[0, 0]) < 1e-6 * c11


def test_finer_grid_improves_gram(model2, beam, basis2):
    fine = build_basis(model2, beam, grid_spec=GridSpec(4 * 4096))
    assert fine.orthonormality_error() <= basis2.orthonormality_error() / 10


def test_degenerate_directions_are_rejected(beam):
    shape = lambda x: np.tanh(x / 1e-7)
    m = PhaseModel(("a", "b"), lambda x, th: (th[0] + th[1]) * shape(x),
                   (lambda x, th: shape(x), lambda x, th: shape(x)),
                   np.array([1.0, 1.0]), np.array([1.0, 1.0]), 1e-7)
    with pytest.raises(DegenerateOmega, match="drop a parameter"):
        build_basis(m, beam)


def test_grid_spec_validation():
    with pytest.raises(InvalidParameters):
        GridSpec(points=8)


def test_export_csv(tmp_path, basis2, ref):
    paths = basis2.export_csv(tmp_path, y_scale=ref.alpha)
    assert [p.name for p in paths] == ["mode_0.csv", "mode_1.csv", "mode_2.csv"]
    with paths[1].open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x [m]", "y [1]", "Re g1 [1]", "Im g1 [1]", "|g1| [1]"]
    assert len(rows) == 4097
    x, y = float(rows[1][0]), float(rows[1][1])
    assert y == pytest.approx(ref.alpha * x, rel=1e-15)


# ---------------------------------------------------------------- amplitudes and probabilities


def test_projection_at_reference(basis2, model2, beam):
    amps = project(basis2, model2, beam, model2.theta0)
    assert np.allclose(amps, [1, 0, 0], atol=1e-12)


def test_height_step_amplitudes(ref, beam, model_h, basis_h, integrals):
    eps = 0.01
    amps = project(basis_h, model_h, beam, model_h.theta0 + eps / ref.k)
    q = 1 - integrals.N3
    assert amps[0] == pytest.approx(1 + 1j * eps - (2 - integrals.N3) * eps ** 2 / 2, abs=2e-6)
    assert abs(amps[1]) == pytest.approx(math.sqrt(q) * eps, rel=2e-2)
    pv = probabilities_numeric(basis_h, model_h, beam, [eps / ref.k])
    assert pv.p[1] == pytest.approx(q * eps ** 2, abs=1e-6)
    assert abs(pv.residual) < 1e-9


def test_steepness_only_probability(ref, beam, model2, basis2, integrals):
    # leading behaviour D eta^2, with a first-order correction removed by extrapolation
    ratio = [probabilities_numeric(basis2, model2, beam, [0.0, eta / ref.h]).p[2]
             / (integrals.D * eta ** 2) for eta in (0.01, 0.005)]
    assert ratio[0] == pytest.approx(1.0, rel=3e-3)
    assert 2 * ratio[1] - ratio[0] == pytest.approx(1.0, abs=1e-4)
    assert integrals.D == pytest.approx(integrals.N2 - integrals.N1 ** 2 / (1 - integrals.N3), rel=1e-14)


def test_analytic_amplitudes_match_numeric(ref, beam, model2, basis2, integrals):
    dh, dalpha = 0.01 / ref.k, 0.01 / ref.h
    num = project(basis2, model2, beam, model2.theta0 + [dh, dalpha])
    ana = analytic_amplitudes_cliff(ref, integrals, dh, dalpha)
    # mode phases are fixed by the construction, so amplitudes agree up to O(r^3)
    assert np.max(np.abs(num - ana)) < 20 * 0.01 ** 3


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_analytic_sum_rule(ref, integrals, eps, eta):
    pv = analytic_probabilities_cliff(ref, integrals, eps / ref.k, eta / ref.h)
    assert abs(pv.p.sum() - 1.0) <= 4e-16
    assert pv.residual == 0.0
    ph = analytic_probabilities_cliff(ref, integrals, eps / ref.k, parameters=("h",))
    assert abs(ph.p.sum() - 1.0) <= 4e-16


def test_analytic_probabilities_refuse_large_steps(ref, integrals):
    with pytest.raises(NegativeProbability):
        analytic_probabilities_cliff(ref, integrals, 3.0 / ref.k, 3.0 / ref.h)
    with pytest.raises(InvalidParameters):
        analytic_probabilities_cliff(ref, integrals, 0.0, 1.0, parameters=("h",))


def _sampled_probabilities(basis, model, f, theta):
    field_ = f.amplitude(basis.grid) * np.exp(1j * model.phase(basis.grid, theta))
    amps = (basis.gamma.conj() * basis.weights) @ field_
    p = np.abs(amps) ** 2
    return ProbabilityVector(p, 1.0 - p.sum())


def test_out_of_span_displacement_leaves_residual(ref, beam, model2, basis_h, integrals):
    # a basis built for h alone cannot capture a steepness change; the leak is D eta^2
    probs = [_sampled_probabilities(basis_h, model2, beam, model2.theta0 + [0.0, eta / ref.h])
             for eta in (0.01, 0.02)]
    assert probs[0].residual == pytest.approx(integrals.D * 0.01 ** 2, rel=0.05)
    assert probs[1].residual / probs[0].residual == pytest.approx(4.0, rel=0.02)
    assert len(probs[0].with_residual(1e-6)) == 2
    full = probs[0].with_residual(1e-10)
    assert len(full) == 3 and full.sum() == pytest.approx(1.0, abs=1e-12)
    assert len(ProbabilityVector([1.0, 0.0], 1e-9).with_residual(1e-6)) == 2


# ---------------------------------------------------------------- classical Fisher information


def test_cliff_limit_equals_quantum_information(ref, beam, model2, integrals):
    FQ = qfim(model2, beam).F
    FC = classical_fim_cliff_limit(ref, integrals)
    scale = np.sqrt(np.outer(np.diag(FQ), np.diag(FQ)))
    assert np.max(np.abs(FC - FQ) / scale) < 1e-10


def test_classical_fim_of_quadratic_forms(ref, integrals):
    prob = lambda d: analytic_probabilities_cliff(ref, integrals, d[0], d[1])
    FC = classical_fim(prob, np.zeros(2), [1e-4 / ref.k, 1e-4 / ref.h])
    lim = classical_fim_cliff_limit(ref, integrals)
    scale = np.sqrt(np.outer(np.diag(lim), np.diag(lim)))
    assert np.max(np.abs(FC - lim) / scale) < 1e-8


def test_classical_fim_against_sampled_score():
    """Three-outcome toy family versus the empirical second moment of the score."""
    def probs(t):
        z = np.array([0.0, t, -0.5 * t * t + 0.3 * t])
        e = np.exp(z - z.max())
        return e / e.sum()

    theta0 = 0.4
    FC = classical_fim(lambda d: ProbabilityVector(probs(theta0 + d[0]), 0.0), [0.0], [1e-3])
    h = 1e-6
    score = (np.log(probs(theta0 + h)) - np.log(probs(theta0 - h))) / (2 * h)
    rng = np.random.default_rng(11)
    outcomes = rng.choice(3, size=1_000_000, p=probs(theta0))
    empirical = np.mean(score[outcomes] ** 2)
    assert FC[0, 0] == pytest.approx(empirical, rel=0.02)
    # same check through the observed information, -E[d^2 log p]
    curvature = -(np.log(probs(theta0 + 1e-4)) - 2 * np.log(probs(theta0))
                  + np.log(probs(theta0 - 1e-4))) / 1e-8
    assert FC[0, 0] == pytest.approx(np.mean(curvature[outcomes]), rel=0.02)
    exact = np.sum(probs(theta0) * score ** 2)
    assert FC[0, 0] == pytest.approx(exact, rel=1e-8)


def test_step_too_large_is_reported():
    wobble = lambda d: ProbabilityVector(
        np.array([0.5 + 0.4 * math.sin(300 * d[0]), 0.5 - 0.4 * math.sin(300 * d[0])]), 0.0)
    with pytest.raises(StepTooLarge):
        classical_fim(wobble, [0.0], [1e-2])
    assert classical_fim(wobble, [0.0], [1e-6])[0, 0] == pytest.approx(
        (0.4 * 300) ** 2 / 0.5 * 2, rel=1e-6)


# ---------------------------------------------------------------- saturation


@pytest.mark.parametrize("which", ["model_h", "model2"])
def test_gamma_measurement_saturates(request, beam, which):
    model = request.getfixturevalue(which)
    rep = saturation_report(model, beam)
    assert rep.passed and rep.discrepancy < 1e-4


def test_derivative_projector_is_not_optimal(ref, beam, model_h):
    rep = saturation_report(model_h, beam, measurement="phi1")
    assert not rep.passed
    assert abs(rep.F_C[0, 0]) < 1e-6 * rep.F_Q[0, 0]
    lhs, rhs, equal = rep.condition
    assert not equal
    n3 = n3_oracle(ref, beam)
    # with <Phi_1|Phi_0> = -i k both sides carry the same negative sign
    assert lhs / ref.k ** 3 == pytest.approx(-(2 - n3), rel=1e-9)
    assert rhs / ref.k ** 3 == pytest.approx(-1.0, rel=1e-12)
    assert lhs / rhs == pytest.approx(2 - n3, abs=1e-6)


def test_nonorthogonal_condition_examples():
    # real overlap with the reference: both sides vanish
    assert nonorthogonal_condition_check([[2.0]], [0.0])[2]
    lhs, rhs, equal = nonorthogonal_condition_check([[1.0]], [1.0])
    assert equal and lhs == rhs == -1.0
    assert not nonorthogonal_condition_check([[3.0]], [1.0])[2]


def test_quantum_bound_dominates_away_from_reference(ref, beam, model2, basis2):
    dtheta = np.array([0.05 / ref.k, 0.1 / ref.h])
    FC = classical_fim(lambda d: probabilities_numeric(basis2, model2, beam, d), dtheta,
                       [1e-4 / ref.k, 1e-4 / ref.h])
    FQ = qfim(model2, beam, theta0=model2.theta0 + dtheta).F
    d = 1 / np.sqrt(np.diag(FQ))
    assert np.linalg.eigvalsh((FQ - FC) * np.outer(d, d)).min() > -1e-6


def test_inner_products_feed_saturation(model2, beam):
    G, g = inner_products(model2, beam)
    rep = saturation_report(model2, beam)
    assert np.allclose(rep.F_Q, 4 * (G - np.outer(g, g)), rtol=1e-12)
