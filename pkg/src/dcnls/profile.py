"""The approximate blowup profile: field hierarchy, constants, and residual.

The drift parameter is reduced to the first Cartesian axis, so every
vector-valued correction lives in the l = 1 channel with angular factor
cos(theta), and quadratics of drift fields split into l = 0 and l = 2
parts.  The hierarchy is solved order by order with the constrained
solver, checking each printed solvability condition numerically before
inverting.

Assembly note: the l = 2 quadratic response is computed and stored but
not attached to the traveling profile.  Attaching it would cancel the
drift residual completely at second order (leaving a third-order one),
whereas the construction this code follows carries a scalar drift
correction and has a genuinely second-order residual; the measured
residual scalings reflect that choice.

Mixed-angular quantities (mass, energy, momentum, the full residual) are
evaluated on a tensor grid of radii times Gauss-Legendre nodes in
cos(theta), where every angular integral in sight is either polynomial
(projections) or analytic (fractional powers), so 16 nodes are plenty.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss, legval

from .errors import ConfigurationError, ConvergenceError
from .grid import RadialField, apply_generator
from .hartree import build_multipole_kernel
from .linop import assemble_channel_operator, solve_with_constraints

__all__ = [
    "ProfileSet",
    "AssembledProfile",
    "build_hierarchy",
    "profile_constants",
    "assemble_R",
    "invariant_expansions",
    "residual_psi",
]

PARAM_BOX = 0.3
_CG, _CW = leggauss(16)

SOLVABILITY_TOL = 1e-6


def _legendre_factors(lmax=4):
    return np.stack([legval(_CG, np.eye(l + 1)[-1]) for l in range(lmax + 1)])


_PL = _legendre_factors()


@dataclass(eq=False)
class ProfileSet:
    """All hierarchy fields, the dual functions, and the expansion constants."""

    gs: object
    S10: RadialField          # l=0, imaginary, order b
    S01: RadialField          # l=1, imaginary, order d (axial component)
    T11: RadialField          # l=1, real, order b d
    T20: RadialField          # l=0, real, order b^2
    T02_l0: RadialField       # l=0, real, order d^2 (scalar part)
    T02_l2: RadialField       # l=2, real, order d^2 (stored, not assembled)
    S30: RadialField          # l=0, imaginary, order b^3
    T40: RadialField          # l=0, real, order b^4
    S21: RadialField          # l=1, imaginary, order b^2 d
    rho1: RadialField         # l=0
    rho2_b: RadialField       # l=0 component of the dual phase function
    rho2_d: RadialField       # l=1 component of the dual phase function
    e_mu: float
    p_mu: float
    solvability: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.gs.grid

    def fields(self):
        return {
            "S10": self.S10, "S01": self.S01, "T11": self.T11, "T20": self.T20,
            "T02_l0": self.T02_l0, "T02_l2": self.T02_l2, "S30": self.S30,
            "T40": self.T40, "S21": self.S21, "rho1": self.rho1,
            "rho2_b": self.rho2_b, "rho2_d": self.rho2_d,
        }

    def decay_report(self, rate=0.5, r_from=10.0):
        """Weighted tail sup of every field: sup_{r >= r_from} |f| e^{rate r}."""
        r = self.grid.nodes
        out = {}
        for name, f in self.fields().items():
            tail = r >= r_from
            out[name] = float(np.max(np.abs(f.values[tail]) * np.exp(rate * r[tail])))
        return out


@dataclass(eq=False)
class AssembledProfile:
    """The finite-parameter profile with its conserved quantities."""

    b: float
    d: float
    channels: dict            # l -> complex samples (coefficient of P_l)
    mass: float
    energy: float
    momentum: float
    ratio_sup: float          # sup over the core window of |R| / Q


def _pair(grid, f_vals, g_vals, l):
    ang = 4.0 * np.pi / (2 * l + 1)
    return float(ang * np.sum(grid.weights * f_vals * g_vals))


def _check_bounded(name, vals):
    if not np.all(np.isfinite(vals)):
        raise ConvergenceError(f"hierarchy source {name} is not finite")


def build_hierarchy(gs):
    """Solve the profile hierarchy order by order around the ground state.

    Every printed solvability inner product is evaluated and must stay
    below SOLVABILITY_TOL (relative); each solved field is re-substituted
    into its equation and the relative residual recorded.
    """
    grid = gs.grid
    r = grid.nodes
    w = grid.weights
    q = gs.Q.values
    mu = gs.mu
    q13 = np.cbrt(q)
    q23 = q13 ** 2

    k0 = build_multipole_kernel(grid, 0).matrix
    k1 = build_multipole_kernel(grid, 1).matrix
    k2 = build_multipole_kernel(grid, 2).matrix

    lm0 = assemble_channel_operator(gs, "minus", 0)
    lm1 = assemble_channel_operator(gs, "minus", 1)
    lp0 = assemble_channel_operator(gs, "plus", 0)
    lp1 = assemble_channel_operator(gs, "plus", 1)
    lp2 = assemble_channel_operator(gs, "plus", 2)

    qprime = grid.d1_free(0) @ q
    lam_q = 1.5 * q + r * qprime
    qfield = gs.Q

    solvability = {}
    residuals = {}

    def record(name, op, x, src_vals):
        res = op.apply(x.values) - src_vals
        residuals[name] = float(
            np.sqrt(np.sum(w * res ** 2) / np.sum(w * src_vals ** 2))
        )

    def solvability_rel(src_vals, kernel_vals):
        num = abs(np.sum(w * src_vals * kernel_vals))
        den = np.sqrt(np.sum(w * src_vals ** 2) * np.sum(w * kernel_vals ** 2))
        return float(num / den)

    def gen(vals, l):
        return 1.5 * vals + r * (grid.d1_free(l) @ vals)

    def deriv(vals, l):
        return grid.d1_free(l) @ vals

    # order b: the scaling mode sources the first imaginary correction
    solvability["b"] = solvability_rel(lam_q, q)
    S10 = solve_with_constraints(lm0, RadialField(grid, 0, lam_q), [qfield])
    record("S10", lm0, S10, lam_q)

    # order d: the translation mode (axial component)
    src01 = -qprime
    S01 = solve_with_constraints(lm1, RadialField(grid, 1, src01), [])
    record("S01", lm1, S01, src01)

    s10 = S10.values
    s01 = S01.values

    # order b d
    src11 = (
        s01 - gen(s01, 1) + deriv(s10, 0)
        + (4.0 / 3.0) * q13 * s10 * s01
        + 2.0 * mu * (k1 @ (s10 * s01)) * q
    )
    qprime_field = RadialField(grid, 1, qprime)
    solvability["bd"] = solvability_rel(src11, qprime)
    if solvability["bd"] > SOLVABILITY_TOL:
        raise ConvergenceError(
            "solvability failed at order b d",
            diagnostics={"defect": solvability["bd"]},
        )
    T11 = solve_with_constraints(lp1, RadialField(grid, 1, src11), [qprime_field])
    record("T11", lp1, T11, src11)

    # order b^2
    src20 = (
        (2.0 / 3.0) * q13 * s10 ** 2 + s10 - gen(s10, 0)
        + mu * (k0 @ (s10 ** 2)) * q
    )
    T20 = solve_with_constraints(lp0, RadialField(grid, 0, src20), [])
    record("T20", lp0, T20, src20)
    t20 = T20.values

    # order d^2, split into the scalar and the quadrupole responses
    ds01 = deriv(s01, 1)
    src02_l0 = (
        ds01 / 3.0 + (2.0 / 3.0) * s01 / r
        + (2.0 / 9.0) * q13 * s01 ** 2
        + (mu / 3.0) * (k0 @ (s01 ** 2)) * q
    )
    src02_l2 = (
        (2.0 / 3.0) * (ds01 - s01 / r)
        + (4.0 / 9.0) * q13 * s01 ** 2
        + (2.0 * mu / 3.0) * (k2 @ (s01 ** 2)) * q
    )
    T02_l0 = solve_with_constraints(lp0, RadialField(grid, 0, src02_l0), [])
    record("T02_l0", lp0, T02_l0, src02_l0)
    T02_l2 = solve_with_constraints(lp2, RadialField(grid, 2, src02_l2), [])
    record("T02_l2", lp2, T02_l2, src02_l2)

    # order b^3
    q_floor = np.maximum(q, 1e-120)
    src30 = (
        (4.0 / 3.0) * q13 * t20 * s10
        + (2.0 / 3.0) * s10 ** 3 / np.cbrt(q_floor) ** 2
        + gen(t20, 0) - 2.0 * t20
        + mu * (k0 @ (s10 ** 2)) * s10
        + 2.0 * mu * (k0 @ (q * t20)) * s10
    )
    _check_bounded("S30", src30)
    solvability["b3"] = solvability_rel(src30, q)
    if solvability["b3"] > SOLVABILITY_TOL:
        raise ConvergenceError(
            "solvability failed at order b^3",
            diagnostics={"defect": solvability["b3"]},
        )
    S30 = solve_with_constraints(lm0, RadialField(grid, 0, src30), [qfield])
    record("S30", lm0, S30, src30)
    s30 = S30.values

    # order b^4
    b1 = (k0 @ (2.0 * q * t20 + s10 ** 2)) * t20 + (k0 @ (t20 ** 2 + 2.0 * s10 * s30)) * q
    src40 = (
        -(4.0 / 3.0) * q13 * s10 * s30
        + (14.0 / 9.0) * q13 * t20 ** 2
        - (1.0 / 9.0) * (s10 ** 4 / np.cbrt(q_floor) ** 5 + 4.0 * t20 * s10 ** 2 / np.cbrt(q_floor) ** 2)
        + 3.0 * s30 - gen(s30, 0)
        + mu * b1
    )
    _check_bounded("T40", src40)
    T40 = solve_with_constraints(lp0, RadialField(grid, 0, src40), [])
    record("T40", lp0, T40, src40)

    # order b^2 d
    b2 = (k0 @ (2.0 * q * t20 + s10 ** 2)) * s01 + (k1 @ (s10 * s01)) * s10
    src21 = (
        (4.0 / 3.0) * q13 * (T11.values * s10 + t20 * s01)
        + 2.0 * s10 ** 2 * s01 / np.cbrt(q_floor) ** 2
        - 3.0 * T11.values + gen(T11.values, 1) - deriv(t20, 0)
        + mu * b2
    )
    _check_bounded("S21", src21)
    S21 = solve_with_constraints(lm1, RadialField(grid, 1, src21), [])
    record("S21", lm1, S21, src21)

    # dual functions for the phase direction
    rho1 = solve_with_constraints(lp0, S10, [])
    record("rho1", lp0, rho1, s10)
    r1 = rho1.values
    src_rho2_b = (
        (4.0 / 3.0) * q13 * s10 * r1 + gen(r1, 0) - 2.0 * t20
        + 2.0 * mu * (k0 @ (q * r1)) * s10
    )
    solvability["rho2"] = solvability_rel(src_rho2_b, q)
    if solvability["rho2"] > SOLVABILITY_TOL:
        raise ConvergenceError(
            "the phase dual source is not orthogonal to the soliton",
            diagnostics={"defect": solvability["rho2"]},
        )
    rho2_b = solve_with_constraints(lm0, RadialField(grid, 0, src_rho2_b), [qfield])
    record("rho2_b", lm0, rho2_b, src_rho2_b)
    src_rho2_d = (
        (4.0 / 3.0) * q13 * s01 * r1 + deriv(r1, 0) + T11.values
        + 2.0 * mu * (k0 @ (q * r1)) * s01
    )
    rho2_d = solve_with_constraints(lm1, RadialField(grid, 1, src_rho2_d), [])
    record("rho2_d", lm1, rho2_d, src_rho2_d)

    e_mu = 0.5 * _pair(grid, lam_q, s10, 0)
    p_mu = 2.0 * _pair(grid, -qprime, s01, 1)
    if e_mu <= 0 or p_mu <= 0:
        raise ConvergenceError(
            "hierarchy fault: expansion constants must be positive",
            diagnostics={"e_mu": e_mu, "p_mu": p_mu},
        )

    return ProfileSet(
        gs=gs, S10=S10, S01=S01, T11=T11, T20=T20,
        T02_l0=T02_l0, T02_l2=T02_l2, S30=S30, T40=T40, S21=S21,
        rho1=rho1, rho2_b=rho2_b, rho2_d=rho2_d,
        e_mu=e_mu, p_mu=p_mu,
        solvability=solvability, residuals=residuals,
    )


def profile_constants(ps):
    """(e_mu, p_mu) from the defining equations of the first-order fields."""
    return ps.e_mu, ps.p_mu


# ---------------------------------------------------------------------------
# assembly and functionals on the (r, cos theta) product grid
# ---------------------------------------------------------------------------

def _channels(ps, b, d):
    q = ps.gs.Q.values
    ch0 = (q + b * b * ps.T20.values + b ** 4 * ps.T40.values
           + d * d * ps.T02_l0.values) \
        + 1j * (b * ps.S10.values + b ** 3 * ps.S30.values)
    ch1 = (b * d * ps.T11.values) + 1j * (d * ps.S01.values + b * b * d * ps.S21.values)
    return {0: ch0, 1: ch1}


def _on_product_grid(channels):
    total = 0.0
    for l, vals in channels.items():
        total = total + vals[:, None] * _PL[l][None, :]
    return total


def _project_channels(samples, lmax):
    """Project (n, n_c) samples onto Legendre factors P_0 .. P_lmax."""
    out = {}
    for l in range(lmax + 1):
        out[l] = (2 * l + 1) / 2.0 * np.sum(samples * (_CW * _PL[l])[None, :], axis=1)
    return out


def _hartree_on_grid(grid, dens_samples, lmax=4):
    """A(dens) evaluated on the product grid from its channel projections."""
    proj = _project_channels(dens_samples, lmax)
    pot = 0.0
    for l, g_l in proj.items():
        if np.max(np.abs(g_l)) == 0.0:
            continue
        kernel = build_multipole_kernel(grid, l).matrix
        pot = pot + (kernel @ g_l)[:, None] * _PL[l][None, :]
    return pot


def _functionals(grid, channels, mu):
    w = grid.weights
    r = grid.nodes
    R = _on_product_grid(channels)
    absR2 = np.abs(R) ** 2

    def integrate(samples):
        return float(2.0 * np.pi * np.sum(w[:, None] * _CW[None, :] * samples))

    mass = integrate(absR2)

    dR_dr = 0.0
    dR_dc = 0.0
    for l, vals in channels.items():
        dr = grid.d1_free(l) @ vals
        dR_dr = dR_dr + dr[:, None] * _PL[l][None, :]
        if l == 1:
            dR_dc = dR_dc + vals[:, None] * np.ones_like(_CG)[None, :]
        elif l == 2:
            dR_dc = dR_dc + vals[:, None] * (3.0 * _CG)[None, :]
    grad2 = np.abs(dR_dr) ** 2 + (1.0 - _CG ** 2)[None, :] * np.abs(dR_dc) ** 2 / r[:, None] ** 2
    kinetic = integrate(grad2)

    p103 = integrate(absR2 ** (5.0 / 3.0))
    energy = 0.5 * kinetic - 0.3 * p103
    if mu != 0.0:
        pot = _hartree_on_grid(grid, absR2, lmax=2)
        energy -= 0.25 * mu * integrate(pot * absR2)

    # axial momentum 2 int Re(R) d_1 Im(R)
    d1_im = np.real(dR_dr * -1j)   # Im of dR/dr
    dc_im = np.imag(dR_dc)
    dx1_im = _CG[None, :] * d1_im + (1.0 - _CG ** 2)[None, :] * dc_im / r[:, None]
    momentum = 2.0 * integrate(np.real(R) * dx1_im)
    return R, mass, energy, momentum


def assemble_R(ps, b, d):
    """Assemble the finite-parameter profile and its conserved quantities."""
    if abs(b) > PARAM_BOX or abs(d) > PARAM_BOX:
        raise ConfigurationError(
            f"parameters (b, d) = ({b}, {d}) outside the validity box {PARAM_BOX}"
        )
    grid = ps.grid
    channels = _channels(ps, b, d)
    R, mass, energy, momentum = _functionals(grid, channels, ps.gs.mu)
    core = grid.nodes <= 10.0
    ratio = np.max(np.abs(R[core, :]) / ps.gs.Q.values[core, None])
    return AssembledProfile(
        b=float(b), d=float(d), channels=channels,
        mass=mass, energy=energy, momentum=momentum,
        ratio_sup=float(ratio),
    )


def residual_psi(ps, b, d, weight_rate=0.5, window=20.0):
    """Residual of the self-similar profile equation for the assembled R.

    Returns (psi_samples, weighted_sup, weighted_sup_gradient): psi on the
    (r, cos theta) grid, and sup over r <= window of |psi| e^{weight_rate r}
    (the window keeps the exponential weight inside the trustworthy dynamic
    range of the arithmetic).
    """
    if abs(b) > PARAM_BOX or abs(d) > PARAM_BOX:
        raise ConfigurationError("parameters outside the validity box")
    grid = ps.grid
    r = grid.nodes
    mu = ps.gs.mu
    channels = _channels(ps, b, d)
    R = _on_product_grid(channels)

    # analytic parameter derivatives of the polynomial family
    db = {
        0: (2 * b * ps.T20.values + 4 * b ** 3 * ps.T40.values)
           + 1j * (ps.S10.values + 3 * b * b * ps.S30.values),
        1: d * ps.T11.values + 1j * (2 * b * d * ps.S21.values),
    }
    dd = {
        0: 2 * d * ps.T02_l0.values + 0j,
        1: b * ps.T11.values + 1j * (ps.S01.values + b * b * ps.S21.values),
    }

    lap = 0.0
    lam = 0.0
    dR_dr = 0.0
    dR_dc = 0.0
    for l, vals in channels.items():
        lap = lap + (grid.laplacian(l) @ vals)[:, None] * _PL[l][None, :]
        gen_l = 1.5 * vals + r * (grid.d1_free(l) @ vals)
        lam = lam + gen_l[:, None] * _PL[l][None, :]
        dr = grid.d1_free(l) @ vals
        dR_dr = dR_dr + dr[:, None] * _PL[l][None, :]
        if l == 1:
            dR_dc = dR_dc + vals[:, None] * np.ones_like(_CG)[None, :]
    dx1 = _CG[None, :] * dR_dr + (1.0 - _CG ** 2)[None, :] * dR_dc / r[:, None]

    absR2 = np.abs(R) ** 2
    nonlin = absR2 ** (2.0 / 3.0) * R
    equation = (
        -1j * b * b * _on_product_grid(db)
        - 1j * b * d * _on_product_grid(dd)
        - lap - R + nonlin
        + 1j * b * lam - 1j * d * dx1
    )
    if mu != 0.0:
        equation = equation + mu * _hartree_on_grid(grid, absR2, lmax=2) * R
    psi = -equation

    mask = r <= window
    weight = np.exp(weight_rate * r[mask])[:, None]
    sup = float(np.max(np.abs(psi[mask, :]) * weight))

    # gradient bound, finite-differenced; one order looser by construction
    dpsi = np.gradient(psi, r, axis=0)
    sup_grad = float(np.max(np.abs(dpsi[mask, :]) * weight))
    return psi, sup, sup_grad


def invariant_expansions(ps, b_samples=(0.04, 0.06, 0.09, 0.13, 0.2),
                         d_samples=(0.04, 0.06, 0.09, 0.13, 0.2)):
    """Fit the leading mass/energy/momentum behavior over a parameter grid."""
    base = assemble_R(ps, 0.0, 0.0)
    e_rows, p_rows = [], []
    for b in b_samples:
        prof = assemble_R(ps, b, 0.0)
        e_rows.append((b, prof.energy))
    for d in d_samples:
        prof = assemble_R(ps, 0.0, d)
        p_rows.append((d, prof.momentum))

    bb = np.array([x for x, _ in e_rows])
    ee = np.array([y for _, y in e_rows])
    coef_e = np.linalg.lstsq(np.stack([bb ** 2, bb ** 4], axis=1), ee, rcond=None)[0]
    rem_e = ee - ps.e_mu * bb ** 2
    exp_e = float(np.polyfit(np.log(bb), np.log(np.abs(rem_e)), 1)[0])

    ddv = np.array([x for x, _ in p_rows])
    pp = np.array([y for _, y in p_rows])
    coef_p = np.linalg.lstsq(np.stack([ddv, ddv ** 3], axis=1), pp, rcond=None)[0]
    rem_p = pp - ps.p_mu * ddv
    exp_p = float(np.polyfit(np.log(ddv), np.log(np.abs(rem_p) + 1e-300), 1)[0])

    # the mass statement is a bound |M(b,d) - M(0,0)| <= K (b^4 + d^2); K is
    # fitted as the largest observed ratio and its spread shows how sharply
    # the two monomials capture the defect
    ratios = []
    for b in b_samples:
        for d in d_samples:
            prof = assemble_R(ps, b, d)
            ratios.append(abs(prof.mass - base.mass) / (b ** 4 + d ** 2))
    ratios = np.array(ratios)

    return {
        "energy_coefficient": float(coef_e[0]),
        "energy_vs_e_mu": float(coef_e[0] / ps.e_mu - 1.0),
        "energy_remainder_exponent": exp_e,
        "momentum_coefficient": float(coef_p[0]),
        "momentum_vs_p_mu": float(coef_p[0] / ps.p_mu - 1.0),
        "momentum_remainder_exponent": exp_p,
        "mass_defect_K": float(np.max(ratios)),
        "mass_ratio_spread": float(np.max(ratios) / max(np.min(ratios), 1e-300)),
        "momentum_at_zero_drift": float(assemble_R(ps, max(b_samples), 0.0).momentum),
    }
