"""Linearized operators around the soliton, their spectra, and constrained solves.

Each spherical-harmonic channel carries a pair of one-dimensional operators:

    minus kind:  (-Delta)_l + 1 - Q^{4/3} - mu A(Q^2)
    plus  kind:  (-Delta)_l + 1 - 7/3 Q^{4/3} - mu A(Q^2) - 2 mu A_l(Q .) Q

The minus potential is a plain radial multiplication; the plus kind carries
the nonlocal channel block, a dense matrix dressed with the exponentially
decaying soliton on both sides.  Spectra are computed from the similarity
transform B = W^{1/2} M W^{-1/2}, which is symmetric to rounding, and
constrained solves use saddle-point bordering so discrete orthogonality
is exact rather than iterative.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, SolvabilityError
from .grid import RadialField, inner_product
from .groundstate import h2_norm_3d
from .hartree import build_multipole_kernel, hartree_apply

__all__ = [
    "ChannelOperator",
    "SpectrumReport",
    "assemble_channel_operator",
    "lowest_eigenpairs",
    "solve_with_constraints",
    "nondegeneracy_report",
    "algebraic_identity_report",
    "constrained_inverse_stats",
]

ZERO_TOL = 1e-6      # an eigenvalue is "zero" iff |lambda| <= ZERO_TOL ...
GAP_TOL = 1e-3       # ... and the next one exceeds GAP_TOL

L_MAX = 4


@dataclass(eq=False)
class ChannelOperator:
    """One channel of the linearization: local part plus optional W_l block."""

    kind: str
    l: int
    mu: float
    grid: object
    soliton: np.ndarray
    local_potential: np.ndarray          # diagonal beyond (-Delta)_l + 1
    nonlocal_scale: float                # -2 mu for the plus kind, else 0
    _dense: np.ndarray = field(default=None, repr=False)

    def apply(self, values):
        grid = self.grid
        out = grid.laplacian(self.l) @ values + values + self.local_potential * values
        if self.nonlocal_scale != 0.0:
            kernel = build_multipole_kernel(grid, self.l).matrix
            out += self.nonlocal_scale * self.soliton * (kernel @ (self.soliton * values))
        return out

    def matrix(self):
        if self._dense is None:
            grid = self.grid
            dense = grid.laplacian(self.l).toarray()
            dense[np.arange(grid.n), np.arange(grid.n)] += 1.0 + self.local_potential
            if self.nonlocal_scale != 0.0:
                kernel = build_multipole_kernel(grid, self.l).matrix
                dense += self.nonlocal_scale * (
                    self.soliton[:, None] * kernel * self.soliton[None, :]
                )
            self._dense = dense
        return self._dense

    def symmetric_form(self):
        """B = W^{1/2} M W^{-1/2}, numerically symmetrized."""
        w = np.sqrt(self.grid.weights)
        b = (w[:, None] * self.matrix()) / w[None, :]
        return 0.5 * (b + b.T)


@dataclass(eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenfields: list
    gaps: np.ndarray


def assemble_channel_operator(gs, kind, l):
    """Build L_{+,l} or L_{-,l} around the given ground state."""
    if kind not in ("plus", "minus"):
        raise ConfigurationError(f"kind must be 'plus' or 'minus', got {kind!r}")
    if l < 0:
        raise ConfigurationError("channel index must be >= 0")
    grid = gs.grid
    q = gs.Q.values
    mu = gs.mu
    q43 = np.abs(q) ** (4.0 / 3.0)
    pot = -(7.0 / 3.0) * q43 if kind == "plus" else -q43
    if mu != 0.0:
        pot = pot - mu * hartree_apply(grid, q ** 2)
    return ChannelOperator(
        kind=kind,
        l=l,
        mu=mu,
        grid=grid,
        soliton=q,
        local_potential=pot,
        nonlocal_scale=(-2.0 * mu if kind == "plus" and mu != 0.0 else 0.0),
    )


def lowest_eigenpairs(op, k):
    """The k lowest eigenpairs; eigenfields are W-orthonormal RadialFields."""
    if k > 10:
        raise ConfigurationError("at most 10 eigenpairs are supported")
    b = op.symmetric_form()
    try:
        vals, vecs = sla.eigh(b, subset_by_index=[0, k - 1])
    except sla.LinAlgError as exc:
        raise ConfigurationError(f"eigensolver failed: {exc}") from exc
    w = np.sqrt(op.grid.weights)
    fields = []
    for j in range(k):
        profile = vecs[:, j] / w
        # orient Perron-style: positive where the amplitude peaks
        profile = profile * np.sign(profile[np.argmax(np.abs(profile))])
        norm = np.sqrt(np.sum(op.grid.weights * profile ** 2))
        fields.append(RadialField(op.grid, op.l, profile / norm))
    return SpectrumReport(
        eigenvalues=vals,
        eigenfields=fields,
        gaps=np.diff(vals),
    )


def solve_with_constraints(op, source, constraints, rel_tol=1e-8):
    """Solve op x = source with exact discrete orthogonality to `constraints`.

    The constraints are assumed to span the operator kernel; a source with a
    kernel component above `rel_tol` (relative) trips SolvabilityError, the
    discrete face of the solvability conditions.
    """
    grid = op.grid
    if source.l != op.l:
        raise ConfigurationError("source lives in a different channel than the operator")
    w = grid.weights
    src = np.asarray(source.values, dtype=float)
    src_norm = np.sqrt(np.sum(w * src ** 2))
    cons = []
    for c in constraints:
        cv = np.asarray(c.values if isinstance(c, RadialField) else c, dtype=float)
        overlap = np.sum(w * cv * src)
        c_norm = np.sqrt(np.sum(w * cv ** 2))
        if abs(overlap) > rel_tol * src_norm * c_norm:
            raise SolvabilityError(
                "source has a kernel component above tolerance",
                defect=float(abs(overlap) / (src_norm * c_norm)),
            )
        cons.append(cv)

    n = grid.n
    k = len(cons)
    mat = np.zeros((n + k, n + k))
    mat[:n, :n] = op.matrix()
    for j, cv in enumerate(cons):
        mat[:n, n + j] = cv
        mat[n + j, :n] = w * cv
    rhs = np.concatenate([src, np.zeros(k)])
    sol = sla.solve(mat, rhs)
    x = sol[:n]

    res = op.apply(x) - src
    res_norm = np.sqrt(np.sum(w * res ** 2))
    if res_norm > max(rel_tol * src_norm, 1e-13):
        raise SolvabilityError(
            "constrained solve left a residual above tolerance",
            defect=float(res_norm / src_norm),
        )
    return RadialField(grid, op.l, x)


def algebraic_identity_report(gs):
    """Relative norms of the defining algebraic identities of the linearization.

    L_minus annihilates the soliton, L_plus on channel 1 annihilates its
    radial derivative, and L_plus on channel 0 sends Lambda Q to -2 Q.
    """
    grid = gs.grid
    q = gs.Q.values
    w = grid.weights

    def rel(vals, ref):
        return float(np.sqrt(np.sum(w * vals ** 2) / np.sum(w * ref ** 2)))

    lm0 = assemble_channel_operator(gs, "minus", 0)
    lp0 = assemble_channel_operator(gs, "plus", 0)
    lp1 = assemble_channel_operator(gs, "plus", 1)

    qprime = grid.d1_free(0) @ q
    lam_q = 1.5 * q + grid.nodes * qprime

    return {
        "minus_on_Q": rel(lm0.apply(q), q),
        "plus1_on_Qprime": rel(lp1.apply(qprime), qprime),
        "plus0_on_LambdaQ_plus_2Q": rel(lp0.apply(lam_q) + 2.0 * q, q),
    }


def nondegeneracy_report(gs, l_max=L_MAX, k=6):
    """Kernel bookkeeping for every channel, with eigenvalue gaps.

    Expected structure: trivial kernel for the plus kind on channel 0, a
    one-dimensional kernel spanned by the soliton derivative on channel 1,
    strict positivity for channels >= 2, and the soliton spanning the
    kernel of the minus kind on channel 0.
    """
    grid = gs.grid
    q = gs.Q.values
    w = grid.weights
    channels = {}
    passed = True
    failures = []

    spec_minus = lowest_eigenpairs(assemble_channel_operator(gs, "minus", 0), k)
    lam0 = spec_minus.eigenvalues[0]
    qn = q / np.sqrt(np.sum(w * q ** 2))
    cosine = abs(np.sum(w * spec_minus.eigenfields[0].values * qn))
    ok = (abs(lam0) <= ZERO_TOL and spec_minus.eigenvalues[1] >= GAP_TOL
          and cosine >= 1.0 - 1e-6)
    channels[("minus", 0)] = {
        "eigenvalues": spec_minus.eigenvalues.tolist(),
        "kernel_dim": 1,
        "cosine_with_soliton": float(cosine),
        "ok": bool(ok),
    }
    if not ok:
        passed = False
        failures.append(("minus", 0))

    for l in range(l_max + 1):
        spec = lowest_eigenpairs(assemble_channel_operator(gs, "plus", l), k)
        vals = spec.eigenvalues
        entry = {"eigenvalues": vals.tolist()}
        if l == 0:
            zero_free = not np.any(np.abs(vals) <= ZERO_TOL)
            n_negative = int(np.sum(vals < -ZERO_TOL))
            entry.update(kernel_dim=0, negative_count=n_negative,
                         ok=bool(zero_free and n_negative == 1))
        elif l == 1:
            qprime = grid.d1_free(0) @ q
            psi = -qprime / np.sqrt(np.sum(w * qprime ** 2))
            cosine = abs(np.sum(w * spec.eigenfields[0].values * psi))
            ok1 = (abs(vals[0]) <= ZERO_TOL and vals[1] >= GAP_TOL
                   and cosine >= 1.0 - 1e-6)
            min_field = np.min(spec.eigenfields[0].values
                               * np.sign(np.max(spec.eigenfields[0].values)))
            entry.update(kernel_dim=1, cosine_with_minus_Qprime=float(cosine),
                         ground_sign_defect=float(min_field), ok=bool(ok1))
        else:
            entry.update(kernel_dim=0, ok=bool(vals[0] > ZERO_TOL))
        channels[("plus", l)] = entry
        if not entry["ok"]:
            passed = False
            failures.append(("plus", l))

    return {
        "mu": gs.mu,
        "channels": channels,
        "identities": algebraic_identity_report(gs),
        "status": "PASSED" if passed else "FAILED",
        "failures": failures,
    }


def constrained_inverse_stats(gs, kind="minus", l=0, weight_rate=0.5):
    """Measured stability constants of the constrained inverse.

    Reports the H^2 <- L^2 amplification over a family of smooth decaying
    sources, its exponentially weighted variant (weights e^{c r} applied to
    source and solution), and the pointwise-domination constant K in
    |x| <= K Q for sources bounded by e^{-r}.
    """
    grid = gs.grid
    q = gs.Q.values
    w = grid.weights
    r = grid.nodes
    op = assemble_channel_operator(gs, kind, l)
    if kind == "minus" and l == 0:
        constraints = [gs.Q]
    elif kind == "plus" and l == 1:
        constraints = [RadialField(grid, 1, grid.d1_free(0) @ q)]
    else:
        constraints = []

    def orthogonalize(vals):
        out = vals.copy()
        for c in constraints:
            cv = c.values
            out -= cv * np.sum(w * cv * out) / np.sum(w * cv * cv)
        return out

    amp, amp_weighted, dominance = [], [], []
    for shape in (np.exp(-r), r * np.exp(-r), np.exp(-r) / (1 + r)):
        src_vals = orthogonalize(shape if l == 0 else r * shape)
        src = RadialField(grid, l, src_vals)
        x = solve_with_constraints(op, src, constraints)
        l2_src = np.sqrt(np.sum(w * src_vals ** 2))
        amp.append(h2_norm_3d(grid, x.values, l) / (np.sqrt(4 * np.pi) * l2_src))
        ew = np.exp(weight_rate * r)
        l2w_src = np.sqrt(np.sum(w * (ew * src_vals) ** 2))
        h2w_sol = h2_norm_3d(grid, ew * x.values, l) / np.sqrt(4 * np.pi)
        amp_weighted.append(h2w_sol / l2w_src)
        mask = r <= 30.0
        dominance.append(float(np.max(np.abs(x.values[mask]) / q[mask])
                               / np.max(np.abs(x.values))))
    return {
        "h2_amplification": float(np.max(amp)),
        "weighted_amplification": float(np.max(amp_weighted)),
        "pointwise_domination": float(np.max(dominance)),
    }
