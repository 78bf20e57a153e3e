"""Radial meshes, quadrature, and per-channel differential operators.

Everything downstream lives on a staggered radial mesh: nodes sit at the
images of midpoints of a uniform computational grid on [0, 1], so there is
never a node at r = 0 and the 1/r, l(l+1)/r^2 singularities are untouched.
A smooth odd grading map concentrates nodes in the core; parity of each
angular channel (even profiles for even l, odd for odd l) is enforced by
mirror ghost nodes, which the staggering makes exact.

Conventions
-----------
A channel-l field stores the radial profile f(r) that multiplies the
Legendre factor P_l(cos theta) with respect to a fixed axis.  The plain
channel inner product is (f, g) = sum w_i conj(f_i) g_i, a discrete
integral of conj(f) g r^2 dr; `inner_product(..., convention="3d")`
attaches the 4*pi solid angle for genuinely three-dimensional l = 0
integrals, and `pair_3d` attaches the angular norm 4*pi/(2l+1) of the
un-normalized P_l factor for any channel.

Quadrature weights are midpoint weights in the computational coordinate,
which integrate smooth decaying fields with spectral accuracy (all
Euler-Maclaurin corrections vanish at r = 0 by parity and at r_max by
decay), plus a tiny far-field correction that makes the first six radial
moments exact.  Constants therefore integrate to r_max^3/3 to rounding,
and polynomials through degree 5 likewise.

The channel Laplacian is assembled in conservative flux form on the
reduced variable u = r f with 6th-order staggered derivatives, so it is
symmetric positive semidefinite in the quadrature inner product by
construction, not merely to truncation error.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GridMismatchError

__all__ = [
    "RadialGrid",
    "RadialField",
    "build_grid",
    "inner_product",
    "pair_3d",
    "norm_3d",
    "apply_channel_laplacian",
    "apply_generator",
    "derivative",
]

_token_counter = itertools.count(1)

# 6th-order centered stencils on a uniform grid (spacing folded in later).
_D1_STENCIL = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
_D2_STENCIL = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0
_HALF_WIDTH = 3

_GL4_X, _GL4_W = np.polynomial.legendre.leggauss(4)


def _fd_weights(offsets, order):
    """Interpolatory finite-difference weights for d^order/dx^order at 0."""
    k = offsets.size
    A = np.vander(offsets, k, increasing=True).T
    b = np.zeros(k)
    b[order] = float(math.factorial(order))
    return np.linalg.solve(A, b)


# staggered 6th-order first derivative: face value from 6 surrounding nodes
_DSTAG = _fd_weights(np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.5]), 1)


def _resolve_stretch(stretch):
    """Normalize a stretch descriptor to ("uniform",) or ("tanh", w, s)."""
    if stretch is None or stretch == "uniform":
        return ("uniform",)
    if stretch == "tanh":
        return ("tanh", 0.85, 3.0)
    if isinstance(stretch, (tuple, list)) and stretch and stretch[0] in ("uniform", "tanh"):
        if stretch[0] == "uniform":
            return ("uniform",)
        if len(stretch) == 3:
            w, s = float(stretch[1]), float(stretch[2])
            if not (0.0 <= w < 1.0 and s > 0.0):
                raise ConfigurationError(f"bad tanh stretch parameters {stretch!r}")
            return ("tanh", w, s)
    raise ConfigurationError(f"unknown stretch descriptor {stretch!r}")


def _stretch_functions(desc, r_max):
    """Map xi in [0,1] -> r plus first and second derivatives.

    The map is odd in xi so mirror ghost nodes land on mirrored radii.
    """
    if desc[0] == "uniform":
        return (
            lambda xi: r_max * xi,
            lambda xi: r_max * np.ones_like(xi),
            lambda xi: np.zeros_like(xi),
        )

    _, w, s = desc
    norm = 1.0 - (w / s) * np.tanh(s)

    def m(xi):
        return r_max * (xi - (w / s) * np.tanh(s * xi)) / norm

    def m1(xi):
        return r_max * (1.0 - w / np.cosh(s * xi) ** 2) / norm

    def m2(xi):
        c = np.cosh(s * xi)
        return r_max * (2.0 * w * s * np.tanh(s * xi) / c ** 2) / norm

    return m, m1, m2


@dataclass(eq=False)
class RadialGrid:
    """Staggered radial mesh with quadrature and cached channel operators."""

    n: int
    r_max: float
    stretch: tuple
    nodes: np.ndarray
    weights: np.ndarray          # quadrature for integral of f r^2 dr
    edges: np.ndarray
    jac: np.ndarray              # dr/dxi at the nodes
    jac_face: np.ndarray         # dr/dxi at the cell edges
    cell_stencils: np.ndarray    # (n_cells, 6) node indices feeding each cell
    cell_weights: np.ndarray     # (n_cells, 6) moment-fitted cell weights
    token: int = field(default=0, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def h_xi(self):
        return 1.0 / self.n

    def core_spacing(self):
        """Smallest node spacing (resolution guard scale for dynamics)."""
        return float(np.min(np.diff(self.nodes)))

    def density_ratio(self):
        """Node density near r=0 relative to the far-field density."""
        return float(self.jac[-1] / self.jac[0])

    # -- operator cache ----------------------------------------------------

    def d1_free(self, l):
        """d/dr with parity folding at 0 and one-sided closure at r_max."""
        key = ("d1_free", l % 2)
        if key not in self._cache:
            self._cache[key] = _build_d1(self, parity=(-1) ** (l % 2), dirichlet=False)
        return self._cache[key]

    def d1_op(self, l):
        """d/dr with parity folding at 0 and zero extension beyond r_max."""
        key = ("d1_op", l % 2)
        if key not in self._cache:
            self._cache[key] = _build_d1(self, parity=(-1) ** (l % 2), dirichlet=True)
        return self._cache[key]

    def laplacian(self, l):
        """(-Delta)_l, exactly symmetric PSD in the quadrature inner product."""
        key = ("lap", l)
        if key not in self._cache:
            self._cache[key] = _build_laplacian(self, l)
        return self._cache[key]

    def laplacian_banded(self, l):
        """(-Delta)_l in LAPACK band storage (for Crank-Nicolson steps).

        The flux-form stencil couples nodes up to 5 apart (two staggered
        derivatives of half-width 2.5 composed), so the band is 11 wide.
        """
        key = ("lapband", l)
        if key not in self._cache:
            coo = self.laplacian(l).tocoo()
            hw = int(np.max(np.abs(coo.row - coo.col)))
            self._cache[key] = _to_banded(self.laplacian(l), hw)
        return self._cache[key]


@dataclass(eq=False)
class RadialField:
    """Samples of one spherical-harmonic channel on a RadialGrid."""

    grid: RadialGrid
    l: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n,):
            raise GridMismatchError(
                f"field has {self.values.shape} values for a grid of {self.grid.n} nodes"
            )
        if self.l < 0:
            raise ConfigurationError("channel index must be >= 0")

    def copy(self, values=None):
        return RadialField(self.grid, self.l, self.values.copy() if values is None else values)

    def boundary_report(self):
        """Extrapolated behavior at r -> 0 (value for l>=1, slope for l=0)."""
        r = self.grid.nodes[:4]
        coeff = np.polyfit(r, self.values[:4].real, 3)
        return {
            "value_at_0": float(np.polyval(coeff, 0.0)),
            "slope_at_0": float(np.polyval(np.polyder(coeff), 0.0)),
        }


def build_grid(n, r_max, stretch="tanh"):
    """Build a staggered radial grid with quadrature weights.

    n >= 16 nodes on (0, r_max]; `stretch` is "uniform", "tanh", or
    ("tanh", w, s) with node density ratio (1 - w sech^2 s)/(1 - w).
    """
    if n < 16:
        raise ConfigurationError(f"need n >= 16 nodes, got {n}")
    if r_max <= 0:
        raise ConfigurationError(f"need r_max > 0, got {r_max}")
    desc = _resolve_stretch(stretch)
    m, m1, _ = _stretch_functions(desc, float(r_max))

    xi_nodes = (np.arange(n) + 0.5) / n
    xi_edges = np.arange(n + 1) / n
    nodes = m(xi_nodes)
    edges = m(xi_edges)
    edges[0] = 0.0
    edges[-1] = float(r_max)
    jac = m1(xi_nodes)
    jac_face = m1(xi_edges)

    weights = _blended_weights(nodes, jac, 1.0 / n, float(r_max))
    cell_stencils, cell_weights = _moment_fit_cells(nodes, edges)
    if np.min(weights) <= 0.0:
        raise ConfigurationError("quadrature produced non-positive weights; refine the mesh")

    return RadialGrid(
        n=n,
        r_max=float(r_max),
        stretch=desc,
        nodes=nodes,
        weights=weights,
        edges=edges,
        jac=jac,
        jac_face=jac_face,
        cell_stencils=cell_stencils,
        cell_weights=cell_weights,
        token=next(_token_counter),
    )


def _blended_weights(nodes, jac, h, r_max):
    """Midpoint weights plus a far-field fix making moments 0..5 exact.

    The correction is the minimum-norm adjustment in a metric that vanishes
    rapidly toward r = 0, so core quadrature keeps the midpoint rule's
    parity-driven spectral accuracy while global polynomial moments become
    exact to rounding.
    """
    w_mid = h * jac * nodes ** 2
    x = nodes / r_max
    V = np.vander(x, 6, increasing=True).T          # rows: x^0 .. x^5
    exact = np.array([r_max ** 3 / (k + 3) for k in range(6)])
    defect = exact - V @ (w_mid * r_max ** 0)       # moments of r^k/r_max^k
    defect = exact - V @ w_mid
    omega = w_mid * x ** 8
    A = (V * omega) @ V.T
    alpha = np.linalg.solve(A, defect)
    return w_mid + omega * (V.T @ alpha)


def _moment_fit_cells(nodes, edges):
    """Per-cell degree-5 product-integration table against r^2 dr.

    Used by the nonlocal-kernel builder, which needs cell-aligned weights
    that stay accurate near an integrable singularity.
    """
    n = nodes.size
    width = min(6, n)
    start = np.clip(np.arange(n) - 2, 0, n - width)
    sten = start[:, None] + np.arange(width)[None, :]
    sr = nodes[sten]

    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    xg = mid[:, None] + half[:, None] * _GL4_X[None, :]
    wg = half[:, None] * _GL4_W[None, :]

    cell_w = np.empty((n, width))
    for k in range(width):
        lag = np.ones_like(xg)
        for j in range(width):
            if j == k:
                continue
            lag *= (xg - sr[:, j, None]) / (sr[:, k, None] - sr[:, j, None])
        cell_w[:, k] = np.sum(wg * xg ** 2 * lag, axis=1)
    return sten, cell_w


# ---------------------------------------------------------------------------
# finite-difference operators
# ---------------------------------------------------------------------------

def _fd_rows_folded(n, stencil, parity, dirichlet):
    """Triplets for a centered node stencil with mirror folding at index 0.

    Mirror ghosts: node -k maps to k-1 with sign `parity`.  Beyond the last
    node either zero extension (dirichlet=True) or rows are skipped for the
    caller to close one-sidedly.
    """
    rows, cols, vals = [], [], []
    hw = _HALF_WIDTH
    for i in range(n):
        if i >= n - hw and not dirichlet:
            continue
        for o, c in enumerate(stencil):
            if c == 0.0:
                continue
            j = i + o - hw
            if j < 0:
                jj = -1 - j
                if jj < n:
                    rows.append(i)
                    cols.append(jj)
                    vals.append(parity * c)
            elif j < n:
                rows.append(i)
                cols.append(j)
                vals.append(c)
    return rows, cols, vals


def _one_sided_d1_rows(n):
    """One-sided 7-point first-derivative rows for the last 3 nodes."""
    rows, cols, vals = [], [], []
    for i in range(n - _HALF_WIDTH, n):
        shift = n - 1 - i
        offs = np.arange(-6 + shift, shift + 1)
        coeff = _fd_weights(offs.astype(float), order=1)
        for o, c in zip(offs, coeff):
            rows.append(i)
            cols.append(i + o)
            vals.append(c)
    return rows, cols, vals


def _build_d1(grid, parity, dirichlet):
    n = grid.n
    h = grid.h_xi
    rows, cols, vals = _fd_rows_folded(n, _D1_STENCIL, parity, dirichlet)
    if not dirichlet:
        r2, c2, v2 = _one_sided_d1_rows(n)
        rows += r2
        cols += c2
        vals += v2
    d1_xi = sp.csr_matrix((np.array(vals) / h, (rows, cols)), shape=(n, n))
    return sp.diags(1.0 / grid.jac) @ d1_xi


def _staggered_gradient_line(n_nodes):
    """Plain staggered 6th-order derivative on a line of n_nodes nodes.

    Faces sit between nodes (n_nodes + 1 of them); face j uses nodes
    j-3 .. j+2 and nodes outside the line are treated as zero.
    """
    rows, cols, vals = [], [], []
    for o, c in enumerate(_DSTAG):
        off = o - 3
        for j in range(n_nodes + 1):
            idx = j + off
            if 0 <= idx < n_nodes:
                rows.append(j)
                cols.append(idx)
                vals.append(c)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes + 1, n_nodes))


def _build_laplacian(grid, l):
    """(-Delta)_l on profile values via the flux form on u = r f.

    The stiffness of u -> integral of u_r^2 dr is assembled on the parity
    doubled line (every row a centered flux difference, so the scheme is
    6th-order up to the outer boundary) and restricted to the physical
    half.  The result is exactly symmetric in the quadrature inner product
    and positive semidefinite.
    """
    n = grid.n
    h = grid.h_xi
    parity_u = -((-1) ** (l % 2))          # u = r f flips the channel parity

    gs = _staggered_gradient_line(2 * n)
    jac_face_full = np.concatenate([grid.jac_face[:0:-1], grid.jac_face])
    gs_r = sp.diags(1.0 / (h * jac_face_full)) @ gs
    p = sp.diags(h * jac_face_full)
    stiff_full = gs_r.T @ p @ gs_r

    # restriction of the doubled line onto the physical half
    rows = np.concatenate([np.arange(n - 1, -1, -1), np.arange(n, 2 * n)])
    cols = np.concatenate([np.arange(n), np.arange(n)])
    vals = np.concatenate([np.full(n, float(parity_u)), np.ones(n)])
    restrict = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, n))
    stiff = (restrict.T @ stiff_full @ restrict).tocsr()

    r = grid.nodes
    w_u = grid.weights / r ** 2            # measure for integral of |u|^2 dr
    t_u = sp.diags(0.5 / w_u) @ stiff + sp.diags(l * (l + 1) / r ** 2)
    lap = sp.diags(1.0 / r) @ t_u @ sp.diags(r)
    return lap.tocsr()


def _to_banded(mat, hw):
    """CSR -> LAPACK general band storage with hw diagonals each side."""
    n = mat.shape[0]
    dense_rows = mat.toarray()
    ab = np.zeros((2 * hw + 1, n), dtype=mat.dtype)
    for d in range(-hw, hw + 1):
        diag = np.diagonal(dense_rows, offset=d)
        ab[hw - d, max(d, 0):max(d, 0) + diag.size] = diag
    return ab


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _check_pair(f, g):
    if f.grid.token != g.grid.token:
        raise GridMismatchError("fields live on different grids")
    if f.l != g.l:
        raise GridMismatchError(f"fields live in different channels ({f.l} vs {g.l})")


def inner_product(f, g, convention="channel"):
    """Inner product (f, g) = integral of conj(f) g r^2 dr on one channel.

    convention="channel" uses the orthonormal-harmonic normalization;
    convention="3d" multiplies by 4*pi and is only meaningful for the
    radial l = 0 embedding into R^3.
    """
    _check_pair(f, g)
    val = np.sum(f.grid.weights * np.conjugate(f.values) * g.values)
    if convention == "channel":
        return complex(val)
    if convention == "3d":
        if f.l != 0:
            raise ConfigurationError("the 3-D convention applies to l = 0 fields")
        return complex(4.0 * np.pi * val)
    raise ConfigurationError(f"unknown convention {convention!r}")


def pair_3d(f, g):
    """Three-dimensional pairing including the P_l angular norm 4 pi/(2l+1)."""
    _check_pair(f, g)
    ang = 4.0 * np.pi / (2 * f.l + 1)
    return complex(ang * np.sum(f.grid.weights * np.conjugate(f.values) * g.values))


def norm_3d(f):
    return float(np.sqrt(max(pair_3d(f, f).real, 0.0)))


def apply_channel_laplacian(f):
    """Apply (-Delta)_l = -d^2/dr^2 - (2/r) d/dr + l(l+1)/r^2 to a channel field."""
    return RadialField(f.grid, f.l, f.grid.laplacian(f.l) @ f.values)


def apply_generator(f):
    """Apply the scaling generator: (3/2) f + r f'."""
    fp = f.grid.d1_free(f.l) @ f.values
    return RadialField(f.grid, f.l, 1.5 * f.values + f.grid.nodes * fp)


def derivative(f, dirichlet=False):
    """Radial derivative of a channel field (parity-consistent stencils)."""
    op = f.grid.d1_op(f.l) if dirichlet else f.grid.d1_free(f.l)
    return RadialField(f.grid, f.l, op @ f.values)


def even_interpolator(grid, values, k=5):
    """Spline interpolant of an even-parity profile, valid on [0, r_max]."""
    from scipy.interpolate import InterpolatedUnivariateSpline

    npad = 6
    r = np.concatenate([-grid.nodes[:npad][::-1], grid.nodes])
    v = np.concatenate([values[:npad][::-1], values])
    return InterpolatedUnivariateSpline(r, v, k=k, ext=3)
