import math

import numpy as np
import pytest

from hamflow import problems
from hamflow.core import (
    DegenerateRegression,
    LegendreInversionFailure,
    PhasePoint,
    UnsupportedScheme,
    phase_field,
)
from hamflow.integrators import (
    GalerkinScheme,
    discrete_step_map,
    estimate_order,
    exact_discrete_hamiltonian,
    fiber_derivatives,
    galerkin_discrete_hamiltonian,
    integrate_map,
    lagrangian_equivalence_gap,
    midpoint_discrete_hamiltonian,
    momentum_map_drift,
    step,
    stepper_step_map,
    symplecticity_defect,
)


def cayley_map(h):
    """One-step oracle for the oscillator: (I + h M/2)(I - h M/2)^{-1}."""
    M = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.linalg.solve(np.eye(2) - 0.5 * h * M, np.eye(2) + 0.5 * h * M)


def rotation(t):
    return np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])


# ---------------------------------------------------------------------------
# scheme construction

def test_scheme_validation():
    with pytest.raises(ValueError):
        GalerkinScheme(1, [0.5], [0.9])          # weights must sum to one
    with pytest.raises(ValueError):
        GalerkinScheme(1, [1.5], [1.0])          # node outside [0, 1]
    with pytest.raises(ValueError):
        GalerkinScheme(0, [0.5], [1.0])
    g2 = GalerkinScheme.gauss(2)
    assert abs(g2.weights.sum() - 1.0) < 1e-14
    assert np.allclose(sorted(g2.nodes), [0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6])


# ---------------------------------------------------------------------------
# midpoint generator

def test_midpoint_step_matches_cayley_oracle():
    osc = problems.harmonic_oscillator()
    h = 0.1
    dH = midpoint_discrete_hamiltonian(osc, h, tol=1e-13)
    z1 = step(dH, 0.0, PhasePoint([1.0], [0.0]), tol=1e-13)
    oracle = cayley_map(h) @ np.array([1.0, 0.0])
    assert np.max(np.abs(z1.as_array() - oracle)) < 1e-12
    assert abs(z1.p[0] - (-0.099751)) < 1e-6


def test_midpoint_value_formula_on_linear_drift():
    # H = p q: stages solve v = q0 / (1 - h/2), p_mid = p1 / (1 - h/2)
    drift = problems.linear_drift()
    h = 0.1
    q0, p1 = 0.7, -0.4
    v = q0 / (1.0 - 0.5 * h)
    p_mid = p1 / (1.0 - 0.5 * h)
    q_mid = q0 + 0.5 * h * v
    bracket = p1 * (q0 + h * v) - h * (p_mid * v - p_mid * q_mid)
    dH = midpoint_discrete_hamiltonian(drift, h, tol=1e-13)
    assert abs(dH.value(0.0, np.array([q0]), np.array([p1])) - bracket) < 1e-12


def test_zero_hamiltonian_is_identity_map():
    zero = problems.zero_hamiltonian()
    dH = midpoint_discrete_hamiltonian(zero, 0.3)
    z1 = step(dH, 0.0, PhasePoint([1.3], [-0.8]))
    assert np.allclose(z1.as_array(), [1.3, -0.8], atol=1e-12)


def test_free_drift_in_q():
    # H = p: qdot = 1, pdot = 0, exact for any h
    lin = problems.maximally_degenerate(f=lambda t, q: np.ones(1), g=None, dim=1)
    dH = midpoint_discrete_hamiltonian(lin, 0.4, tol=1e-13)
    z1 = step(dH, 0.0, PhasePoint([0.0], [1.0]), tol=1e-13)
    assert np.allclose(z1.as_array(), [0.4, 1.0], atol=1e-12)


def test_pure_force():
    # H = q: qdot = 0, pdot = -1 exactly
    dH = midpoint_discrete_hamiltonian(problems.pure_force(), 0.1, tol=1e-13)
    z1 = step(dH, 0.0, PhasePoint([0.0], [1.0]), tol=1e-13)
    assert np.allclose(z1.as_array(), [0.0, 0.9], atol=1e-12)


def test_galerkin_single_node_reproduces_midpoint():
    osc = problems.harmonic_oscillator()
    h = 0.1
    mid = midpoint_discrete_hamiltonian(osc, h, tol=1e-13)
    gal = galerkin_discrete_hamiltonian(osc, GalerkinScheme(1, [0.5], [1.0]), h,
                                        tol=1e-13)
    rng = np.random.default_rng(5)
    for _ in range(5):
        q0, p1 = rng.standard_normal(1), rng.standard_normal(1)
        assert abs(mid.value(0.0, q0, p1) - gal.value(0.0, q0, p1)) < 1e-12


def test_partials_match_finite_differences_of_value():
    h = 0.1
    cases = [
        (problems.harmonic_oscillator(), GalerkinScheme.midpoint()),
        (problems.harmonic_oscillator(), GalerkinScheme.gauss(2)),
        (problems.linear_drift(), GalerkinScheme.midpoint()),
    ]
    rng = np.random.default_rng(6)
    for prob, scheme in cases:
        dH = galerkin_discrete_hamiltonian(prob, scheme, h, tol=1e-13)
        for _ in range(3):
            q0 = rng.standard_normal(prob.dim)
            p1 = rng.standard_normal(prob.dim)
            fd_step = 1e-6
            for i in range(prob.dim):
                e = np.zeros(prob.dim)
                e[i] = fd_step
                d1_fd = (dH.value(0.0, q0 + e, p1) - dH.value(0.0, q0 - e, p1)) / (2 * fd_step)
                d2_fd = (dH.value(0.0, q0, p1 + e) - dH.value(0.0, q0, p1 - e)) / (2 * fd_step)
                assert abs(dH.D1(0.0, q0, p1)[i] - d1_fd) < 1e-6 * (1 + abs(d1_fd))
                assert abs(dH.D2(0.0, q0, p1)[i] - d2_fd) < 1e-6 * (1 + abs(d2_fd))


def test_generating_function_round_trip():
    # step from (q0, D1(q0, p1)) must return exactly (D2(q0, p1), p1)
    rng = np.random.default_rng(7)
    for prob in [problems.harmonic_oscillator(), problems.pendulum()]:
        dH = midpoint_discrete_hamiltonian(prob, 0.15, tol=1e-13)
        for _ in range(5):
            q0 = rng.standard_normal(1)
            p1 = rng.standard_normal(1)
            p0 = dH.D1(0.0, q0, p1)
            z1 = step(dH, 0.0, PhasePoint(q0, p0), tol=1e-13)
            assert np.max(np.abs(z1.q - dH.D2(0.0, q0, p1))) < 1e-10
            assert np.max(np.abs(z1.p - p1)) < 1e-10


def test_generic_step_path_agrees_with_fused_solver():
    osc = problems.harmonic_oscillator()
    dH = midpoint_discrete_hamiltonian(osc, 0.1, tol=1e-13)
    from dataclasses import replace

    generic = replace(dH, solve_step=None)
    z0 = PhasePoint([0.8], [-0.3])
    a = step(dH, 0.0, z0, tol=1e-13).as_array()
    b = step(generic, 0.0, z0, tol=1e-13).as_array()
    assert np.max(np.abs(a - b)) < 1e-11


# ---------------------------------------------------------------------------
# fiber derivatives

def test_fiber_derivatives_zero_hamiltonian():
    dH = midpoint_discrete_hamiltonian(problems.zero_hamiltonian(), 0.2)
    plus, minus = fiber_derivatives(dH, [1.1], [2.2])
    assert np.allclose(plus.as_array(), [1.1, 2.2], atol=1e-12)
    assert np.allclose(minus.as_array(), [1.1, 2.2], atol=1e-12)


def test_fiber_minus_momentum_against_inverse_cayley():
    osc = problems.harmonic_oscillator()
    h = 0.1
    dH = midpoint_discrete_hamiltonian(osc, h, tol=1e-13)
    _, minus = fiber_derivatives(dH, [1.0], [0.0])
    # oracle: p0 with map(q0, p0) having p-component 0
    K = cayley_map(h)
    p0_oracle = -K[1, 0] / K[1, 1]
    assert abs(minus.p[0] - p0_oracle) < 1e-12
    assert abs(minus.p[0] - 0.100251) < 1e-6


def test_fiber_composition_equals_step_on_linear_problem():
    osc = problems.harmonic_oscillator()
    h = 0.1
    dH = midpoint_discrete_hamiltonian(osc, h, tol=1e-13)
    rng = np.random.default_rng(8)
    for _ in range(20):
        q0 = rng.standard_normal(1)
        p1 = rng.standard_normal(1)
        plus, minus = fiber_derivatives(dH, q0, p1)
        # feed the minus image through the map: recovers the plus image
        z1 = step(dH, 0.0, minus, tol=1e-13)
        assert np.max(np.abs(z1.as_array() - plus.as_array())) < 1e-11


# ---------------------------------------------------------------------------
# exact generator

def test_exact_generator_zero_hamiltonian():
    zero = problems.zero_hamiltonian()
    val = exact_discrete_hamiltonian(zero, [2.0], [3.0], 0.5)
    assert abs(val - 6.0) < 1e-12


def test_exact_generator_free_particle():
    fp = problems.free_particle()
    q0, p1, h = 0.7, 1.3, 0.25
    val = exact_discrete_hamiltonian(fp, [q0], [p1], h, tol=1e-12)
    assert abs(val - (p1 * q0 + h * p1**2 / 2.0)) < 1e-11


def test_exact_generator_oscillator_closed_form():
    osc = problems.harmonic_oscillator()
    h = 0.1
    q0, p1 = 1.0, 0.0
    val = exact_discrete_hamiltonian(osc, [q0], [p1], h, tol=1e-12)
    closed = p1 * q0 / math.cos(h) + 0.5 * math.tan(h) * (q0**2 + p1**2)
    assert abs(val - closed) < 1e-9


# ---------------------------------------------------------------------------
# order measurement

def _oscillator_reference(z0, T):
    return rotation(T) @ z0.as_array()


def test_midpoint_observed_order():
    osc = problems.harmonic_oscillator()
    z0 = PhasePoint([1.0], [0.3])
    order = estimate_order(lambda h: midpoint_discrete_hamiltonian(osc, h, tol=1e-13),
                           osc, z0, 1.0, [16, 32, 64, 128],
                           reference=_oscillator_reference(z0, 1.0), tol=1e-13)
    assert 1.8 <= order <= 2.2


def test_gauss2_observed_order():
    osc = problems.harmonic_oscillator()
    z0 = PhasePoint([1.0], [0.3])
    scheme = GalerkinScheme.gauss(2)
    order = estimate_order(
        lambda h: galerkin_discrete_hamiltonian(osc, scheme, h, tol=1e-13),
        osc, z0, 1.0, [8, 12, 16, 24, 32],
        reference=_oscillator_reference(z0, 1.0), tol=1e-13)
    assert order >= 3.8


def test_exact_map_errors_flagged_as_noise():
    # the reference flow itself as the "scheme": errors sit at the floor
    from hamflow.integrators import DiscreteHamiltonian, reference_flow

    osc = problems.harmonic_oscillator()

    def exact_family(h):
        def solve_step(t, q0, p0):
            z = reference_flow(osc, np.concatenate([q0, p0]), t, h)
            return z[:1], z[1:]

        return DiscreteHamiltonian(h=h, value=None, solve_step=solve_step,
                                   label="exact-flow")

    z0 = PhasePoint([1.0], [0.3])
    with pytest.raises(DegenerateRegression):
        estimate_order(exact_family, osc, z0, 0.5, [4, 8, 16],
                       reference=_oscillator_reference(z0, 0.5))


def test_order_theorem_desk_check():
    # generator-gap slope r+1 implies map order >= r - 0.2 (here r = 2)
    osc = problems.harmonic_oscillator()
    rng = np.random.default_rng(9)
    q0, p1 = rng.standard_normal(1), rng.standard_normal(1)
    hs, gaps = [], []
    for N in [8, 16, 32, 64]:
        h = 1.0 / N
        dH = midpoint_discrete_hamiltonian(osc, h, tol=1e-13)
        gaps.append(abs(dH.value(0.0, q0, p1)
                        - exact_discrete_hamiltonian(osc, q0, p1, h, tol=1e-12)))
        hs.append(h)
    slope = np.polyfit(np.log(hs), np.log(gaps), 1)[0]
    z0 = PhasePoint([1.0], [0.3])
    order = estimate_order(lambda h: midpoint_discrete_hamiltonian(osc, h, tol=1e-13),
                           osc, z0, 1.0, [16, 32, 64, 128],
                           reference=_oscillator_reference(z0, 1.0), tol=1e-13)
    assert slope >= order - 0.2
    assert 2.7 <= slope <= 3.3


# ---------------------------------------------------------------------------
# symplecticity and momentum maps

def test_symplecticity_midpoint_and_gauss():
    rng = np.random.default_rng(10)
    h = 0.1
    for prob, scheme in [(problems.harmonic_oscillator(), GalerkinScheme.midpoint()),
                         (problems.pendulum(), GalerkinScheme.midpoint()),
                         (problems.harmonic_oscillator(), GalerkinScheme.gauss(2))]:
        dH = galerkin_discrete_hamiltonian(prob, scheme, h, tol=1e-13)
        smap = discrete_step_map(dH, tol=1e-13)
        for _ in range(5):
            z = PhasePoint(rng.uniform(-1, 1, prob.dim), rng.uniform(-1, 1, prob.dim))
            assert symplecticity_defect(smap, 0.0, z, h) <= 1e-7


def test_symplecticity_euler_defect_order_h_squared():
    osc = problems.harmonic_oscillator()
    emap = stepper_step_map(phase_field(osc), "euler")
    defect = symplecticity_defect(emap, 0.0, PhasePoint([1.0], [0.0]), 0.1)
    assert defect > 1e-4
    assert abs(defect - 0.01) < 1e-3  # J^T O J - O = h^2 M for this linear system


def test_symplecticity_identity_map():
    # zero up to the rounding of the central-difference Jacobian
    ident = lambda t, z, h: z
    assert symplecticity_defect(ident, 0.0, PhasePoint([0.3], [0.4]), 0.1) < 1e-9


def test_momentum_map_drift_midpoint_vs_euler():
    prob = problems.central_force_2d()
    z0 = PhasePoint([1.0, 0.0], [0.1, 1.1])
    dH = midpoint_discrete_hamiltonian(prob, 0.01, tol=1e-13)
    traj = integrate_map(dH, z0, 0.0, 1000, tol=1e-13)
    assert momentum_map_drift(traj, problems.angular_momentum_2d) <= 1e-10

    from hamflow.bvp import solve_ivp

    traj_e = solve_ivp(prob, z0, 10.0, "euler", 1000)
    assert momentum_map_drift(traj_e, problems.angular_momentum_2d) > 1e-6


def test_momentum_map_constant_trajectory():
    z = PhasePoint([1.0, 2.0], [3.0, 4.0])
    from hamflow.core import Trajectory

    traj = Trajectory(times=[0.0, 1.0, 2.0], states=[z, z, z])
    assert momentum_map_drift(traj, problems.angular_momentum_2d) == 0.0


# ---------------------------------------------------------------------------
# Lagrangian-route equivalence

def test_lagrangian_equivalence_on_oscillator():
    osc = problems.harmonic_oscillator()
    gap = lagrangian_equivalence_gap(osc, GalerkinScheme.midpoint(), 0.1,
                                     PhasePoint([1.0], [0.0]), 100, tol=1e-12)
    assert gap <= 1e-9


def test_lagrangian_equivalence_zero_steps():
    osc = problems.harmonic_oscillator()
    gap = lagrangian_equivalence_gap(osc, GalerkinScheme.midpoint(), 0.1,
                                     PhasePoint([1.0], [0.0]), 0)
    assert gap == 0.0


def test_lagrangian_route_fails_for_degenerate_problem():
    drift = problems.linear_drift()
    with pytest.raises(LegendreInversionFailure):
        lagrangian_equivalence_gap(drift, GalerkinScheme.midpoint(), 0.1,
                                   PhasePoint([1.0], [1.0]), 3)


def test_lagrangian_route_unsupported_for_higher_degree():
    osc = problems.harmonic_oscillator()
    with pytest.raises(UnsupportedScheme):
        lagrangian_equivalence_gap(osc, GalerkinScheme.gauss(2), 0.1,
                                   PhasePoint([1.0], [0.0]), 3)


def test_degenerate_problem_still_integrates():
    # the generator route needs no velocity-momentum inversion
    prob = problems.degenerate_with_potential()
    dH = galerkin_discrete_hamiltonian(prob, GalerkinScheme.midpoint(), 0.1,
                                       tol=1e-12)
    traj = integrate_map(dH, PhasePoint([1.0], [0.5]), 0.0, 20, tol=1e-12)
    assert np.all(np.isfinite(traj.state_array()))
