import numpy as np
import pytest

from dcnls.errors import ConfigurationError
from dcnls.grid import RadialField, apply_channel_laplacian, apply_generator, build_grid, inner_product
from dcnls.groundstate import solve_Q_mu, solve_classical_Q
from dcnls.profile import (
    assemble_R,
    build_hierarchy,
    invariant_expansions,
    profile_constants,
    residual_psi,
)


@pytest.fixture(scope="module")
def grid():
    return build_grid(1024, 40.0, "tanh")


@pytest.fixture(scope="module")
def ps0(grid):
    return build_hierarchy(solve_classical_Q(grid))


@pytest.fixture(scope="module")
def ps_mu(grid):
    return build_hierarchy(solve_Q_mu(0.02, grid))


def test_solvability_inner_products(ps0, ps_mu):
    for ps in (ps0, ps_mu):
        for name, defect in ps.solvability.items():
            assert defect <= 1e-6, (name, defect)


def test_field_equation_residuals(ps0, ps_mu):
    for ps in (ps0, ps_mu):
        for name, res in ps.residuals.items():
            assert res <= 1e-7, (name, res)


def test_s10_orthogonal_to_soliton(grid, ps0):
    val = inner_product(ps0.S10, ps0.gs.Q)
    scale = np.sqrt(inner_product(ps0.S10, ps0.S10).real * ps0.gs.mass)
    assert abs(val) <= 1e-10 * scale


def test_s10_closed_form_at_zero_coupling(grid, ps0):
    # L_minus(r^2 Q) = -4 Lambda Q pins S10 = -r^2 Q / 4 modulo the kernel
    q = ps0.gs.Q.values
    w = grid.weights
    exact = -grid.nodes ** 2 * q / 4
    exact = exact - q * np.sum(w * q * exact) / np.sum(w * q * q)
    diff = ps0.S10.values - exact
    assert np.sqrt(np.sum(w * diff ** 2) / np.sum(w * exact ** 2)) <= 1e-6


def test_e0_closed_form(grid, ps0):
    q = ps0.gs.Q.values
    e0 = 0.125 * 4 * np.pi * np.sum(grid.weights * grid.nodes ** 2 * q ** 2)
    assert ps0.e_mu == pytest.approx(e0, rel=1e-6)


def test_constants_positive(ps0, ps_mu):
    for ps in (ps0, ps_mu):
        e, p = profile_constants(ps)
        assert e > 0
        assert p > 0


def test_mass_identity(grid, ps_mu):
    # -2 (Q, T20) = (S10, S10)
    w = grid.weights
    lhs = -2 * np.sum(w * ps_mu.gs.Q.values * ps_mu.T20.values)
    rhs = np.sum(w * ps_mu.S10.values ** 2)
    assert lhs == pytest.approx(rhs, rel=1e-4)


def test_fields_decay_exponentially(ps_mu):
    rep = ps_mu.decay_report(rate=0.5, r_from=10.0)
    inner = ps_mu.decay_report(rate=0.5, r_from=5.0)
    for name in rep:
        assert np.isfinite(rep[name])
        assert rep[name] <= inner[name] * (1 + 1e-12)


def test_commutator_invariants(grid, ps_mu):
    # skew-adjointness of the generator and [-Delta, Lambda] = -2 Delta
    r = grid.nodes
    f = RadialField(grid, 0, np.exp(-r) * (1 + r))
    g = RadialField(grid, 0, np.exp(-r ** 2 / 2))
    lf = apply_channel_laplacian(apply_generator(f))
    fl = apply_generator(apply_channel_laplacian(f))
    comm = RadialField(grid, 0, lf.values - fl.values)
    target = RadialField(grid, 0, 2.0 * apply_channel_laplacian(f).values)
    num = inner_product(comm, g).real - inner_product(target, g).real
    assert abs(num) <= 1e-6 * abs(inner_product(target, g).real)
    # pointwise identity -(r Q') Q^{1/3} + Q^{1/3} Lambda Q = (3/2) Q^{4/3}
    q = ps_mu.gs.Q.values
    qp = grid.d1_free(0) @ q
    lamq = 1.5 * q + r * qp
    lhs = -(r * qp) * np.cbrt(q) + np.cbrt(q) * lamq
    rhs = 1.5 * np.abs(q) ** (4.0 / 3.0)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6 * np.max(rhs)


def test_rho2_source_orthogonality(ps_mu):
    assert ps_mu.solvability["rho2"] <= 1e-6


def test_assemble_at_origin_is_soliton(ps_mu):
    prof = assemble_R(ps_mu, 0.0, 0.0)
    assert np.array_equal(np.real(prof.channels[0]), ps_mu.gs.Q.values)
    assert np.all(np.imag(prof.channels[0]) == 0)
    assert np.all(prof.channels[1] == 0)


def test_assemble_rejects_outside_box(ps_mu):
    with pytest.raises(ConfigurationError):
        assemble_R(ps_mu, 0.5, 0.0)


def test_pointwise_ratio_bounded_on_small_box(ps_mu):
    # |R| <= 2 Q on the core window for moderate parameters
    for b, d in ((0.1, 0.0), (0.0, 0.1), (0.07, 0.07)):
        prof = assemble_R(ps_mu, b, d)
        assert prof.ratio_sup <= 2.0


def test_momentum_vanishes_without_drift(ps_mu):
    prof = assemble_R(ps_mu, 0.15, 0.0)
    assert abs(prof.momentum) <= 1e-12 * max(abs(prof.mass), 1.0)


def test_residual_at_origin_is_solver_floor(ps_mu):
    _, sup, _ = residual_psi(ps_mu, 0.0, 0.0)
    assert sup <= 1e-7


def test_residual_scaling_in_b(ps_mu):
    _, s1, g1 = residual_psi(ps_mu, 0.1, 0.0)
    _, s2, g2 = residual_psi(ps_mu, 0.05, 0.0)
    assert 24.0 <= s1 / s2 <= 40.0
    assert 16.0 <= g1 / g2 <= 48.0    # one derivative, checked 10x looser


def test_residual_scaling_in_d(ps_mu):
    _, s1, _ = residual_psi(ps_mu, 0.0, 0.1)
    _, s2, _ = residual_psi(ps_mu, 0.0, 0.05)
    assert 3.4 <= s1 / s2 <= 4.6


def test_expansion_fits(ps_mu):
    rep = invariant_expansions(ps_mu)
    assert abs(rep["energy_vs_e_mu"]) <= 0.01
    assert abs(rep["momentum_vs_p_mu"]) <= 0.02
    assert rep["energy_remainder_exponent"] >= 3.5
    assert rep["momentum_remainder_exponent"] >= 1.5
    assert rep["mass_defect_K"] > 0
    assert abs(rep["momentum_at_zero_drift"]) <= 1e-12
