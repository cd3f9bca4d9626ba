import numpy as np
import pytest

from dccmkit.ctrl import ControlDecision, control_input, gain_at
from dccmkit.polyalg import PolyMatrix, Polynomial
from dccmkit.synth import CertificateTemplate, constant_certificate, synthesize
from dccmkit.sysmodel import Box, ControlAffineSystem


def lti_system():
    # x+ = A x + B u with A = [[1.2, 0.3], [0, 0.95]], B = [[1], [0.4]]
    x1 = Polynomial.variable(2, 0)
    x2 = Polynomial.variable(2, 1)
    f = [1.2 * x1 + 0.3 * x2, 0.95 * x2]
    g = PolyMatrix([[Polynomial.constant(2, 1.0)],
                    [Polynomial.constant(2, 0.4)]])
    return ControlAffineSystem(
        f, g, domain=Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0])))


@pytest.fixture(scope="module")
def lti_cert():
    sys = lti_system()
    return synthesize(sys, CertificateTemplate(2, 1, 0, 0, 0.1))


# --------------------------------------------------------------------- gains


def test_gain_constant_cert_is_l():
    L = np.array([[0.3, -0.4]])
    cert = constant_certificate(np.eye(2), L, 0.1)
    np.testing.assert_allclose(gain_at(cert, np.array([0.7, -0.2])), L,
                               atol=1e-14)


def test_gain_zero_l():
    cert = constant_certificate(np.diag([2.0, 5.0]), np.zeros((1, 2)), 0.1)
    np.testing.assert_allclose(gain_at(cert, np.zeros(2)), np.zeros((1, 2)))


def test_scalar_gain_contracts():
    # x+ = 0.5 x + u: the synthesized gain must beat the rate bound
    x = Polynomial.variable(1, 0)
    g = PolyMatrix([[Polynomial.constant(1, 1.0)]])
    sys = ControlAffineSystem([0.5 * x], g,
                              domain=Box(np.array([-1.0]), np.array([1.0])))
    cert = synthesize(sys, CertificateTemplate(1, 1, 0, 0, 0.1))
    k = gain_at(cert, np.zeros(1))[0, 0]
    assert abs(0.5 + k) <= np.sqrt(0.9) + 1e-6


def test_lti_spectral_radius(lti_cert):
    A = np.array([[1.2, 0.3], [0.0, 0.95]])
    B = np.array([[1.0], [0.4]])
    K = gain_at(lti_cert, np.zeros(2))
    rho = max(abs(np.linalg.eigvals(A + B @ K)))
    assert rho <= np.sqrt(1.0 - 0.1) + 1e-6


# ------------------------------------------------------------- control_input


def test_u_is_exact_sum(cstr_sys, cstr_cert):
    d = control_input(cstr_cert, cstr_sys, np.array([0.8, 0.3]),
                      np.zeros(2), np.zeros(1), 30)
    assert isinstance(d, ControlDecision)
    np.testing.assert_array_equal(d.u, d.u_star + d.feedback_term)


def test_at_reference_returns_u_star(cstr_sys, cstr_cert):
    x_star = np.array([0.5, 0.5])
    u_star = np.array([-0.025])
    d = control_input(cstr_cert, cstr_sys, x_star.copy(), x_star, u_star, 30)
    np.testing.assert_array_equal(d.feedback_term, np.zeros(1))
    np.testing.assert_array_equal(d.u, u_star)
    assert d.geodesic.energy == 0.0


def test_constant_cert_telescopes_to_state_feedback(lti_cert):
    # for a state-independent certificate the path sum collapses to
    # K (x - x_star) regardless of which variant computes it
    sys = lti_system()
    x = np.array([0.6, -0.4])
    x_star = np.array([-0.1, 0.2])
    u_star = np.array([0.3])
    K = gain_at(lti_cert, x)
    expected = u_star + K @ (x - x_star)
    d27 = control_input(lti_cert, sys, x, x_star, u_star, 30)
    d28 = control_input(lti_cert, sys, x, x_star, u_star, 30,
                        gain_at_state=True)
    np.testing.assert_allclose(d27.u, expected, atol=1e-10)
    np.testing.assert_allclose(d28.u, expected, atol=1e-10)


def test_gain_at_state_variant(cstr_sys, cstr_cert):
    x = np.array([0.9, 0.2])
    x_star = np.array([0.0, 0.0])
    d = control_input(cstr_cert, cstr_sys, x, x_star, np.zeros(1), 30,
                      gain_at_state=True)
    expected = gain_at(cstr_cert, x) @ (x - x_star)
    np.testing.assert_allclose(d.feedback_term, expected, atol=1e-12)
    # the geodesic is still computed and reported
    assert d.geodesic.converged
    assert d.geodesic.energy > 0.0


def test_variants_differ_for_state_dependent_gain(cstr_sys, cstr_cert):
    x = np.array([1.3, -0.3])
    d27 = control_input(cstr_cert, cstr_sys, x, np.zeros(2), np.zeros(1), 30)
    d28 = control_input(cstr_cert, cstr_sys, x, np.zeros(2), np.zeros(1), 30,
                        gain_at_state=True)
    assert not np.allclose(d27.u, d28.u, atol=1e-12)


def test_equilibrium_hold(cstr_sys, cstr_cert):
    # starting on a steady-state reference, the loop stays there
    x_star = np.array([1.0, 1.0])
    u_star = np.zeros(1)
    x = x_star.copy()
    for _ in range(5):
        d = control_input(cstr_cert, cstr_sys, x, x_star, u_star, 30)
        x = cstr_sys.step(x, d.u)
        assert abs(x - x_star).max() < 1e-12


# -------------------------------------------------------------- contraction


def test_one_step_energy_contraction(cstr_sys, cstr_cert):
    x = np.array([0.2, 0.1])
    x_star = np.zeros(2)
    u_star = np.zeros(1)
    d = control_input(cstr_cert, cstr_sys, x, x_star, u_star, 30)
    e0 = d.geodesic.energy
    x1 = cstr_sys.step(x, d.u)
    e1 = control_input(cstr_cert, cstr_sys, x1, x_star, u_star,
                       30).geodesic.energy
    assert e1 <= 0.95 * e0


def test_closed_loop_energy_decay_statistical(cstr_sys, cstr_cert):
    # E_{k+1} <= (1 - beta) E_k with 5 percent slack, over many initial
    # conditions and all three operating points, until E is negligible
    rng = np.random.default_rng(21)
    targets = [(np.array([0.0, 0.0]), np.array([0.0])),
               (np.array([1.0, 1.0]), np.array([0.0])),
               (np.array([0.5, 0.5]), np.array([-0.025]))]
    budget = (1.0 - 0.1) + 0.05
    for x_star, u_star in targets:
        for _ in range(17):
            x = rng.uniform(-0.5, 1.5, size=2)
            d = control_input(cstr_cert, cstr_sys, x, x_star, u_star, 30)
            energy = d.geodesic.energy
            for _ in range(25):
                if energy < 1e-6:
                    break
                x = cstr_sys.step(x, d.u)
                d = control_input(cstr_cert, cstr_sys, x, x_star, u_star, 30)
                assert d.geodesic.energy <= budget * energy
                energy = d.geodesic.energy
            assert energy < 1e-6


# -------------------------------------------------------------- validation


def test_dimension_validation(cstr_sys, cstr_cert):
    with pytest.raises(ValueError):
        control_input(cstr_cert, cstr_sys, np.zeros(3), np.zeros(2),
                      np.zeros(1), 30)
    with pytest.raises(ValueError):
        control_input(cstr_cert, cstr_sys, np.zeros(2), np.zeros(2),
                      np.zeros(2), 30)
    lti_c = constant_certificate(np.eye(3), np.zeros((1, 3)), 0.1)
    with pytest.raises(ValueError):
        control_input(lti_c, cstr_sys, np.zeros(3), np.zeros(3),
                      np.zeros(1), 30)
