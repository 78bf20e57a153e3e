import numpy as np
import pytest

from dcnls.errors import SolvabilityError
from dcnls.grid import RadialField, apply_generator, build_grid, inner_product
from dcnls.groundstate import solve_Q_mu, solve_classical_Q
from dcnls.linop import (
    algebraic_identity_report,
    assemble_channel_operator,
    constrained_inverse_stats,
    lowest_eigenpairs,
    nondegeneracy_report,
    solve_with_constraints,
)


@pytest.fixture(scope="module")
def grid():
    return build_grid(1024, 40.0, "tanh")


@pytest.fixture(scope="module")
def gs0(grid):
    return solve_classical_Q(grid)


@pytest.fixture(scope="module")
def gs_mu(grid):
    return solve_Q_mu(0.05, grid)


def test_operator_symmetry(grid_std, gs_std_mu05):
    # at working resolution the nonlocal block's quadrature defect sits well
    # below the symmetry budget
    r = grid_std.nodes
    for kind, l in (("minus", 0), ("plus", 0), ("plus", 1)):
        op = assemble_channel_operator(gs_std_mu05, kind, l)
        f = RadialField(grid_std, l, r ** l * np.exp(-r))
        g = RadialField(grid_std, l, r ** l * np.exp(-r ** 2 / 2) * (1 + r))
        s1 = inner_product(RadialField(grid_std, l, op.apply(f.values)), g)
        s2 = inner_product(f, RadialField(grid_std, l, op.apply(g.values)))
        assert abs(s1 - s2) <= 1e-10 * abs(s1)


def test_minus_kind_has_no_nonlocal_block(gs_mu):
    op = assemble_channel_operator(gs_mu, "minus", 0)
    assert op.nonlocal_scale == 0.0


def test_algebraic_identities(gs0, gs_mu):
    for gs, tol1, tol2 in ((gs0, 1e-7, 1e-6), (gs_mu, 1e-7, 1e-6)):
        ids = algebraic_identity_report(gs)
        assert ids["minus_on_Q"] <= tol1
        assert ids["plus1_on_Qprime"] <= tol2
        assert ids["plus0_on_LambdaQ_plus_2Q"] <= tol2


def test_minus_kernel_is_soliton(grid, gs_mu):
    spec = lowest_eigenpairs(assemble_channel_operator(gs_mu, "minus", 0), 3)
    assert abs(spec.eigenvalues[0]) <= 1e-6
    assert spec.eigenvalues[1] >= 1e-3
    q = gs_mu.Q.values / np.sqrt(np.sum(grid.weights * gs_mu.Q.values ** 2))
    cos = abs(np.sum(grid.weights * spec.eigenfields[0].values * q))
    assert cos >= 1 - 1e-6


def test_plus1_kernel_is_derivative(grid, gs_mu):
    spec = lowest_eigenpairs(assemble_channel_operator(gs_mu, "plus", 1), 3)
    assert abs(spec.eigenvalues[0]) <= 1e-6
    assert spec.eigenvalues[1] >= 1e-3
    qp = grid.d1_free(0) @ gs_mu.Q.values
    psi = -qp / np.sqrt(np.sum(grid.weights * qp ** 2))
    cos = abs(np.sum(grid.weights * spec.eigenfields[0].values * psi))
    assert cos >= 1 - 1e-6
    # Perron-Frobenius: the ground eigenfield keeps one sign
    f = spec.eigenfields[0].values
    f = f * np.sign(f[np.argmax(np.abs(f))])
    assert np.min(f) >= -1e-6 * np.max(f)


def test_plus_high_channels_positive(gs_mu):
    for l in (2, 3, 4):
        spec = lowest_eigenpairs(assemble_channel_operator(gs_mu, "plus", l), 2)
        assert spec.eigenvalues[0] > 1e-6


def test_plus0_gap_and_single_negative(gs0):
    spec = lowest_eigenpairs(assemble_channel_operator(gs0, "plus", 0), 6)
    vals = spec.eigenvalues
    assert not np.any(np.abs(vals) <= 1e-6)
    # classical-linearization oracle fact: exactly one negative direction
    assert int(np.sum(vals < -1e-6)) == 1


def test_minus_coercive_off_kernel(grid, gs_mu):
    spec = lowest_eigenpairs(assemble_channel_operator(gs_mu, "minus", 0), 3)
    # measured positivity constant of L_minus on the soliton's complement
    assert spec.eigenvalues[1] > 0.1


def test_eigenfields_orthonormal(grid, gs_mu):
    spec = lowest_eigenpairs(assemble_channel_operator(gs_mu, "plus", 0), 5)
    for i in range(5):
        for j in range(i, 5):
            val = np.sum(grid.weights * spec.eigenfields[i].values * spec.eigenfields[j].values)
            assert val == pytest.approx(1.0 if i == j else 0.0, abs=1e-8)


def test_constrained_solve_roundtrip(grid, gs0):
    lm = assemble_channel_operator(gs0, "minus", 0)
    src = apply_generator(gs0.Q)
    x = solve_with_constraints(lm, src, [gs0.Q])
    back = lm.apply(x.values)
    rel = np.sqrt(np.sum(grid.weights * (back - src.values) ** 2)
                  / np.sum(grid.weights * src.values ** 2))
    assert rel <= 1e-8
    assert abs(inner_product(x, gs0.Q)) <= 1e-10 * np.sqrt(
        inner_product(x, x).real * inner_product(gs0.Q, gs0.Q).real
    )


def test_solvability_violation_detected(grid, gs0):
    lm = assemble_channel_operator(gs0, "minus", 0)
    src = apply_generator(gs0.Q)
    polluted = RadialField(grid, 0, src.values + 0.05 * gs0.Q.values)
    with pytest.raises(SolvabilityError) as exc:
        solve_with_constraints(lm, polluted, [gs0.Q])
    assert exc.value.defect > 1e-8


def test_nondegeneracy_report_passes(gs_mu):
    rep = nondegeneracy_report(gs_mu)
    assert rep["status"] == "PASSED"
    assert rep["failures"] == []
    assert rep["channels"][("plus", 0)]["negative_count"] == 1


def test_nondegeneracy_classical_kernels(gs0):
    rep = nondegeneracy_report(gs0)
    assert rep["status"] == "PASSED"
    assert rep["channels"][("minus", 0)]["kernel_dim"] == 1
    assert rep["channels"][("plus", 1)]["kernel_dim"] == 1
    assert rep["channels"][("plus", 0)]["kernel_dim"] == 0


def test_constrained_inverse_resolution_stable(gs_mu):
    stats1 = constrained_inverse_stats(gs_mu, "minus", 0)
    g2 = build_grid(2048, 40.0, "tanh")
    stats2 = constrained_inverse_stats(solve_Q_mu(0.05, g2), "minus", 0)
    assert stats1["h2_amplification"] == pytest.approx(stats2["h2_amplification"], rel=0.05)
    assert stats1["weighted_amplification"] == pytest.approx(
        stats2["weighted_amplification"], rel=0.05
    )
    assert stats1["pointwise_domination"] == pytest.approx(
        stats2["pointwise_domination"], rel=0.05
    )
    assert np.isfinite(stats1["weighted_amplification"])
