import numpy as np
import pytest

from dcnls.errors import CoercivityError, ConfigurationError
from dcnls.grid import build_grid
from dcnls.groundstate import (
    coercivity_bracket,
    energy_mu,
    functional_report,
    grad_sq_3d,
    mass_3d,
    minimize_constrained,
    perturbation_rate,
    pohozaev_defect,
    solve_classical_Q,
    solve_Q_mu,
)


@pytest.fixture(scope="module")
def grid():
    return build_grid(1024, 40.0, "tanh")


@pytest.fixture(scope="module")
def classical(grid):
    return solve_classical_Q(grid)


def test_classical_residual_and_positivity(classical):
    assert classical.eq_residual <= 1e-10
    q = classical.Q.values
    assert np.all(q > 0)
    assert np.all(np.diff(q) <= 1e-12 * q.max())


def test_classical_tail_decay(classical):
    # r Q(r) ~ c e^{-r}: log-derivative of r Q tends to -1
    assert classical.diagnostics["tail_logderiv"] == pytest.approx(-1.0, abs=0.01)


def test_classical_energy_vanishes(grid, classical):
    assert abs(classical.energy) <= 1e-8 * grad_sq_3d(grid, classical.Q.values)


def test_classical_saturates_local_gn(classical):
    assert classical.gn_local == pytest.approx(1.0, abs=1e-6)


def test_classical_mass_resolution_consistency(classical):
    # shooting-seeded solve repeated at double resolution (Richardson check)
    g2 = build_grid(2048, 40.0, "tanh")
    gs2 = solve_classical_Q(g2)
    assert gs2.mass == pytest.approx(classical.mass, rel=1e-6)


def test_pohozaev_detects_non_solutions(grid, classical):
    assert classical.pohozaev_residual <= 1e-6
    fake = np.exp(-grid.nodes ** 2)
    assert pohozaev_defect(grid, fake, 0.0) > 1e-2


def test_solve_q_mu_base_case(grid, classical):
    gs = solve_Q_mu(0.0, grid)
    assert gs is classical


def test_solve_q_mu_rejects_out_of_range(grid):
    with pytest.raises(ConfigurationError):
        solve_Q_mu(-0.01, grid)
    with pytest.raises(ConfigurationError):
        solve_Q_mu(0.5, grid)


def test_solve_q_mu_state(grid):
    gs = solve_Q_mu(0.02, grid)
    assert gs.eq_residual <= 1e-8
    assert gs.pohozaev_residual <= 1e-6
    assert abs(gs.energy) <= 1e-6 * grad_sq_3d(grid, gs.Q.values)
    assert np.all(gs.Q.values > 0)
    rep = functional_report(gs)
    assert rep["pairing_defect"] <= 1e-8


def test_flow_pathway_matches_newton(grid, classical):
    flow = minimize_constrained(classical.mass, 0.0, grid)
    assert flow.beta > 0
    d = flow.Q.values - classical.Q.values
    assert np.sqrt(mass_3d(grid, d) / classical.mass) <= 1e-6
    assert flow.mass == pytest.approx(classical.mass, rel=1e-9)
    assert flow.energy >= -1e-6 * grad_sq_3d(grid, flow.Q.values)
    # radial symmetric-decreasing minimizer
    assert np.all(np.diff(flow.Q.values) <= 1e-10 * flow.Q.values.max())


def test_flow_pathway_small_coupling(grid):
    gs = solve_Q_mu(0.02, grid)
    flow = minimize_constrained(gs.mass, 0.02, grid)
    assert flow.beta > 0
    d = flow.Q.values - gs.Q.values
    assert np.sqrt(mass_3d(grid, d) / gs.mass) <= 1e-6


def test_supercritical_mass_refused(grid, classical):
    with pytest.raises(CoercivityError) as exc:
        minimize_constrained(classical.mass * 1.5, 0.02, grid)
    assert exc.value.threshold is not None
    assert exc.value.threshold < classical.mass


def test_coercivity_bracket_reported(grid, classical):
    # positive deep inside the coercive range, negative for large masses
    assert coercivity_bracket(0.1 * classical.mass, 0.001, grid) > 0
    assert coercivity_bracket(2.0 * classical.mass, 0.05, grid) < 0


def test_perturbation_rate_asymptotic(grid):
    rep = perturbation_rate([1e-4, 10 ** -3.5, 1e-3, 10 ** -2.5], grid)
    assert 0.9 <= rep["slope"] <= 1.1
    assert rep["fit_residual"] <= 0.05
    assert rep["l2_monotone"]


def test_perturbation_rate_needs_four_points(grid):
    with pytest.raises(ConfigurationError):
        perturbation_rate([0.01], grid)


def test_critical_mass_decreases_with_coupling(grid, classical):
    m1 = solve_Q_mu(0.01, grid).mass
    m2 = solve_Q_mu(0.02, grid).mass
    assert classical.mass > m1 > m2


def test_energy_scaling_invariance(grid):
    # E(a^{3/2} u(a x)) = a^2 E(u) at the critical scaling
    r = grid.nodes
    u = np.exp(-r ** 2 / 2)
    a = 1.3
    ua = a ** 1.5 * np.exp(-((a * r) ** 2) / 2)
    assert energy_mu(grid, ua, 0.03) == pytest.approx(a ** 2 * energy_mu(grid, u, 0.03), rel=1e-7)
