"""The nonlocal interaction A(f) = |x|^-2 * f and its angular channels.

For a density with a single spherical-harmonic channel, f(y) = p(|y|) P_l,
the convolution is again a single channel with radial profile

    (A_l p)(r) = 2 pi * integral  Q_l(z) / (r rho) * p(rho) rho^2 drho,

where Q_l is the Legendre function of the second kind evaluated at
z = (r^2 + rho^2) / (2 r rho).  Writing t = min(r,rho)/max(r,rho) gives
Q_l(z)/(r rho) = g_l(t) / max(r,rho)^2 with g_l analytic on [0, 1) and a
logarithmic blow-up at the diagonal t = 1.  g_0(t) = 2 atanh(t)/t, and the
higher g_l follow from the Legendre recurrence; for small t a power series
with rational coefficients is used to dodge the cancellation in the
closed forms.

The channel operator is materialized as a dense matrix: smooth off-band
entries use the grid's product-integration node weights, and a band of
cells around the diagonal is re-integrated cell by cell against the local
degree-5 interpolant, with a double-exponential rule absorbing the
logarithmic singularity on the diagonal cell itself.  A 3-D quadrature
oracle (spherical shells centered on the evaluation point, which cancels
the |x|^-2 singularity exactly) provides the independent calibration path.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, GridMismatchError, QuadratureError
from .grid import RadialField, RadialGrid, even_interpolator

__all__ = [
    "MultipoleKernel",
    "build_multipole_kernel",
    "hartree_potential",
    "channel_convolve",
    "brute_force_oracle",
    "calibrate_channel_coefficient",
]

CHANNEL_COEFFICIENT = 2.0 * np.pi   # resolved normalization of the channel kernel

_SERIES_CUT = 0.45
_SERIES_TERMS = 48
_L_MAX_TABLE = 8


def _series_table():
    """Rational series coefficients beta[l][k]: g_l(t) = sum_k beta t^(l+2k).

    g_0 = 2 atanh(t)/t gives beta_{0,k} = 2/(2k+1); Q_1 = z Q_0 - 1 gives
    beta_{1,k} = (beta_{0,k} + beta_{0,k+1})/2 (the -1 cancels the constant
    term of z Q_0 exactly); higher rows follow the Legendre recurrence.
    """
    head = _SERIES_TERMS + _L_MAX_TABLE + 2
    beta = [[Fraction(2, 2 * k + 1) for k in range(head)]]
    beta.append([Fraction(1, 2) * (beta[0][k] + beta[0][k + 1]) for k in range(head - 1)])
    for l in range(1, _L_MAX_TABLE):
        nxt = []
        for k in range(len(beta[l]) - 1):
            val = (
                Fraction(2 * l + 1, 2) * (beta[l][k] + beta[l][k + 1])
                - Fraction(l) * beta[l - 1][k + 1]
            ) / (l + 1)
            nxt.append(val)
        beta.append(nxt)
    return [np.array([float(x) for x in row[:_SERIES_TERMS]]) for row in beta]


_BETA = _series_table()


def _g_ratio(l, t):
    """g_l(t) = Q_l((t + 1/t)/2) / t, vectorized, stable on [0, 1)."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t < _SERIES_CUT

    if np.any(small):
        ts = t[small]
        t2 = ts * ts
        acc = np.zeros_like(ts)
        for beta in _BETA[l][::-1]:
            acc = acc * t2 + beta
        out[small] = acc * ts ** l

    big = ~small
    if np.any(big):
        # clamp just below the diagonal; quadrature weights there are ~1e-12
        tb = np.minimum(t[big], 1.0 - 1e-13)
        z = 0.5 * (tb + 1.0 / tb)
        q_prev = 2.0 * np.arctanh(tb)
        if l == 0:
            q = q_prev
        else:
            q = z * q_prev - 1.0
            for ll in range(1, l):
                q, q_prev = ((2 * ll + 1) * z * q - ll * q_prev) / (ll + 1), q
        out[big] = q / tb
    return out


def _kernel_values(l, r, rho):
    """Pointwise channel kernel 2 pi g_l(t) / max(r, rho)^2 (broadcasting)."""
    lo = np.minimum(r, rho)
    hi = np.maximum(r, rho)
    return CHANNEL_COEFFICIENT * _g_ratio(l, lo / hi) / hi ** 2


def _tanh_sinh_rule(m=34, step=0.115):
    k = np.arange(-m, m + 1)
    u = step * k
    x = np.tanh(0.5 * np.pi * np.sinh(u))
    w = step * 0.5 * np.pi * np.cosh(u) / np.cosh(0.5 * np.pi * np.sinh(u)) ** 2
    x, w = 0.5 * (x + 1.0), 0.5 * w       # mapped to (0, 1)
    keep = (x > 0.0) & (x < 1.0)          # drop float-saturated endpoints
    return x[keep], w[keep]


_DE_X, _DE_W = _tanh_sinh_rule()
_GL16 = np.polynomial.legendre.leggauss(16)
_GL8 = np.polynomial.legendre.leggauss(8)

_BAND = 12


@dataclass(eq=False)
class MultipoleKernel:
    """Dense channel operator for the |x|^-2 convolution at fixed l."""

    l: int
    coefficient: float
    grid: RadialGrid
    matrix: np.ndarray


def _lagrange_values(stencil_r, x):
    """Values of the 6 Lagrange basis polynomials of `stencil_r` at x."""
    width = stencil_r.shape[-1]
    out = []
    for m in range(width):
        lag = np.ones_like(x)
        for j in range(width):
            if j == m:
                continue
            lag = lag * (x - stencil_r[..., j, None]) / (
                stencil_r[..., m, None] - stencil_r[..., j, None]
            )
        out.append(lag)
    return np.stack(out, axis=-2)   # (..., 6, npts)


_GREG_R = None
_GREG_L = None


def _gregory_weights():
    """One-sided d/dxi weights at a cell edge from the 4 nodes on one side."""
    global _GREG_R, _GREG_L
    if _GREG_R is None:
        from .grid import _fd_weights

        _GREG_R = _fd_weights(np.array([0.5, 1.5, 2.5, 3.5]), 1)
        _GREG_L = _fd_weights(np.array([-0.5, -1.5, -2.5, -3.5]), 1)
    return _GREG_R, _GREG_L


def _exact_cell_rows(grid, l, i, c, singular):
    """Exact integrals over cell c of k(r_i, .) times the 6 local basis polys."""
    r = grid.nodes
    sr = r[grid.cell_stencils]
    a_edge = grid.edges[:-1][c]
    b_edge = grid.edges[1:][c]
    if singular:
        corr = np.zeros((i.size, grid.cell_stencils.shape[1]))
        for a, b in ((a_edge, r[i]), (r[i], b_edge)):
            x = a[:, None] + (b - a)[:, None] * _DE_X[None, :]
            wq = (b - a)[:, None] * _DE_W[None, :]
            kv = _kernel_values(l, r[i][:, None], x)
            lag = _lagrange_values(sr[c], x)
            corr += np.einsum("ip,imp->im", wq * x ** 2 * kv, lag)
        return corr
    gx, gw = _GL16 if np.max(np.abs(c - i)) <= 3 else _GL8
    mid = 0.5 * (a_edge + b_edge)
    half = 0.5 * (b_edge - a_edge)
    x = mid[:, None] + half[:, None] * gx[None, :]
    wq = half[:, None] * gw[None, :]
    kv = _kernel_values(l, r[i][:, None], x)
    lag = _lagrange_values(sr[c], x)
    return np.einsum("ip,imp->im", wq * x ** 2 * kv, lag)


def build_multipole_kernel(grid, l, band=_BAND):
    """Materialize the dense channel-l operator matrix on `grid`.

    Rows are quadratures of k_l(r_i, rho) f(rho) rho^2 drho: midpoint node
    weights away from the diagonal (their Euler-Maclaurin boundary terms
    vanish at rho = 0 by parity and are cancelled at the band cuts by
    Gregory-type corrections), and exact kernel integration against the
    local degree-5 interpolant of f on a band of cells around the diagonal
    plus, for core rows, down to the origin where the kernel varies on the
    scale of rho itself.
    """
    if l < 0 or l >= _L_MAX_TABLE:
        raise ConfigurationError(f"channel index {l} outside the tabulated range")
    key = ("hartree_kernel", l)
    if key in grid._cache:
        return grid._cache[key]

    n = grid.n
    r = grid.nodes
    w = grid.weights
    w_mid = grid.h_xi * grid.jac * r ** 2   # pure midpoint weights (Gregory samples)
    sten = grid.cell_stencils

    with np.errstate(divide="ignore", invalid="ignore"):
        mat = _kernel_values(l, r[:, None], r[None, :]) * w[None, :]
    np.fill_diagonal(mat, 0.0)

    core = band + 24     # rows whose exact zone extends down to rho = 0

    def replace_cells(i, c):
        singular = bool(np.any(c == i))
        corr = _exact_cell_rows(grid, l, i, c, singular)
        with np.errstate(divide="ignore", invalid="ignore"):
            naive = w[c] * _kernel_values(l, r[i], r[c])
        naive[c == i] = 0.0
        mat[i, c] -= naive
        np.add.at(mat, (i[:, None], sten[c]), corr)

    for off in range(-band, band + 1):
        i = np.arange(n)
        c = i + off
        ok = (c >= 0) & (c < n)
        if np.any(ok):
            replace_cells(i[ok], c[ok])

    # extend the exact zone to the origin for core rows
    for c in range(core):
        i = np.arange(band + 1 + c, min(core + band + 1, n))
        i = i[(i - band) > c]
        if i.size:
            replace_cells(i, np.full(i.size, c))

    # Gregory corrections at the cuts between the exact zone and the
    # midpoint far zone: error of the far sum is (h^2/24) g'(cut) per side
    fd_r, fd_l = _gregory_weights()
    rows = np.arange(n)
    right0 = rows + band + 1
    ok = right0 + 3 < n
    i = rows[ok]
    for d in range(4):
        j = right0[ok] + d
        mat[i, j] -= (fd_r[d] / 24.0) * _kernel_values(l, r[i], r[j]) * w_mid[j]
    left_edge = rows - band - 1
    ok = (left_edge - 3 >= 0) & (rows > core + band)
    i = rows[ok]
    for d in range(4):
        j = left_edge[ok] - d
        mat[i, j] += (fd_l[d] / 24.0) * _kernel_values(l, r[i], r[j]) * w_mid[j]

    # no explicit W-symmetrization: each row is an accurate quadrature of the
    # symmetric continuum form, so bilinear symmetry holds to quadrature
    # accuracy, while forcing entrywise symmetry would corrupt the near-origin
    # rows (midpoint column weights underweight the first nodes individually).
    kernel = MultipoleKernel(l=l, coefficient=CHANNEL_COEFFICIENT, grid=grid, matrix=mat)
    grid._cache[key] = kernel
    return kernel


def hartree_potential(f, nonneg=False):
    """A(f) = |x|^-2 * f for a radial (l = 0) density.

    With `nonneg` set, densities with a genuinely negative part are refused.
    """
    if f.l != 0:
        raise GridMismatchError("hartree_potential acts on l = 0 densities")
    vals = np.real_if_close(f.values)
    if nonneg and np.min(vals) < -1e-12 * max(np.max(np.abs(vals)), 1e-300):
        raise ConfigurationError("density has a negative part")
    kernel = build_multipole_kernel(f.grid, 0)
    return RadialField(f.grid, 0, kernel.matrix @ f.values)


def hartree_apply(grid, density_values):
    """Raw-array A(density) on `grid` (fast path for solvers)."""
    return build_multipole_kernel(grid, 0).matrix @ density_values


def channel_convolve(kernel, f):
    """Channel-l restriction of |x|^-2 * (f P_l) for f in the kernel's channel."""
    if f.l != kernel.l:
        raise GridMismatchError(f"field channel {f.l} does not match kernel channel {kernel.l}")
    if f.grid.token != kernel.grid.token:
        raise GridMismatchError("field and kernel live on different grids")
    return RadialField(f.grid, f.l, kernel.matrix @ f.values)


# ---------------------------------------------------------------------------
# independent 3-D quadrature oracle
# ---------------------------------------------------------------------------

def _spherical_mean_times_4pi(fun, radius, s, feature_radii, n_tau):
    """4 pi times the mean of fun over the sphere of radius s about the point.

    Uses the chord identity: the mean equals (1/(2 R s)) times the integral
    of fun(tau) tau over tau in [|R-s|, R+s], so kinks of fun at known radii
    can be made panel ends and integrated to spectral accuracy.
    """
    gx, gw = np.polynomial.legendre.leggauss(n_tau)
    out = np.zeros_like(s)
    for idx, sv in enumerate(s):
        lo, hi = abs(radius - sv), radius + sv
        breaks = [lo] + [b for b in feature_radii if lo < b < hi] + [hi]
        acc = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            tau = 0.5 * (a + b) + 0.5 * (b - a) * gx
            wt = 0.5 * (b - a) * gw
            acc += np.sum(wt * fun(tau) * tau)
        out[idx] = acc * 2.0 * np.pi / (radius * sv) if radius * sv > 0 else 4.0 * np.pi * fun(
            np.array([sv])
        )[0]
    return out


def _oracle_once(fun, radius, s_panels, n_s, feature_radii):
    """integral over s of the spherical mean of fun around a point at `radius`."""
    gx, gw = np.polynomial.legendre.leggauss(n_s)
    total = 0.0
    for a, b in zip(s_panels[:-1], s_panels[1:]):
        s = 0.5 * (a + b) + 0.5 * (b - a) * gx
        ws = 0.5 * (b - a) * gw
        shell = _spherical_mean_times_4pi(fun, radius, s, feature_radii, n_tau=24)
        total += np.sum(ws * shell)
    return total


def brute_force_oracle(f, points, feature_radii=(), rel_tol=1e-4, support=None):
    """Evaluate |x|^-2 * f by direct 3-D quadrature at the given radii.

    `f` is a RadialField or a callable of the radius; the quadrature re-centers
    spherical shells on the evaluation point so the kernel singularity cancels
    exactly.  Convergence is verified by comparing two resolutions; failure
    raises QuadratureError carrying the achieved error estimate.

    A RadialField is represented by a smooth spline, appropriate for smooth
    densities; pass discontinuous densities as callables (with their jump
    radii in `feature_radii`) so the chord integrals see the true jump.
    """
    if isinstance(f, RadialField):
        if f.l != 0:
            raise ConfigurationError("the oracle integrates radial (l=0) densities")
        spline = even_interpolator(f.grid, np.real(f.values))
        rmax = f.grid.r_max

        def fun(d):
            out = spline(np.clip(d, 0.0, rmax))
            return np.where(d <= rmax, out, 0.0)

        s_support = rmax
    else:
        fun = f
        s_support = support if support is not None else 40.0

    radii = np.atleast_1d(np.asarray(points, dtype=float))
    feature_radii = sorted(feature_radii)
    out = np.empty(radii.size)
    for idx, radius in enumerate(radii):
        s_max = radius + s_support
        breaks = {0.0, s_max}
        if 0.0 < radius < s_max:
            breaks.add(radius)     # shells through the origin kink the mean
        for rho in feature_radii:
            for cand in (abs(radius - rho), radius + rho):
                if 0.0 < cand < s_max:
                    breaks.add(cand)
        for frac in (0.25, 0.5, 0.75):
            breaks.add(frac * s_max)
        panels = np.array(sorted(breaks))
        coarse = _oracle_once(fun, radius, panels, 16, feature_radii)
        fine = _oracle_once(fun, radius, panels, 28, feature_radii)
        err = abs(fine - coarse) / max(abs(fine), 1e-300)
        if err > rel_tol:
            raise QuadratureError(
                f"oracle failed to converge at r={radius:g}", error_estimate=err
            )
        out[idx] = fine
    return out


def calibrate_channel_coefficient(grid, l, oracle_samples=None):
    """Fit the channel coefficient against the 3-D oracle; returns the report.

    The kernel is built with the resolved constant 2*pi; the fitted ratio
    should be 1 to oracle accuracy and is recorded alongside the constant.
    """
    from scipy.interpolate import InterpolatedUnivariateSpline

    kernel = build_multipole_kernel(grid, l)
    r = grid.nodes
    if oracle_samples is None:
        oracle_samples = (0.3, 1.0, 2.0, 4.0, 8.0)
    profile = r ** l * np.exp(-r ** 2)
    mine = channel_convolve(kernel, RadialField(grid, l, profile))

    pad = 6
    rr = np.concatenate([-grid.nodes[:pad][::-1], grid.nodes])
    vv = np.concatenate([((-1.0) ** l) * profile[:pad][::-1], profile])
    spl = InterpolatedUnivariateSpline(rr, vv, k=5, ext=3)

    def fun3d(dist):
        return np.where(dist <= grid.r_max, spl(np.clip(dist, 0, grid.r_max)), 0.0)

    ratios = []
    for radius in oracle_samples:
        # compare on the node nearest the requested radius; the convolution of
        # p(|y|) P_l(cos theta) on the axis equals the channel profile itself
        idx = int(np.argmin(np.abs(r - radius)))
        val = _axis_oracle_channel(fun3d, l, r[idx], grid.r_max)
        ratios.append(val / mine.values[idx])
    ratios = np.array(ratios)
    return {
        "l": l,
        "coefficient": kernel.coefficient,
        "fitted_ratio": float(np.mean(ratios)),
        "ratio_spread": float(np.max(np.abs(ratios - 1.0))),
    }


def _axis_oracle_channel(fun, l, radius, support):
    """3-D quadrature of (|x|^-2 * p(|y|) P_l) on the axis at `radius`."""
    from numpy.polynomial.legendre import legval

    cg, cw = np.polynomial.legendre.leggauss(60)
    gx, gw = np.polynomial.legendre.leggauss(24)
    s_max = radius + support
    breaks = sorted({0.0, 0.25 * s_max, 0.5 * s_max, 0.75 * s_max, s_max})
    unit = np.zeros(l + 1)
    unit[l] = 1.0
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        s = 0.5 * (a + b) + 0.5 * (b - a) * gx
        ws = 0.5 * (b - a) * gw
        dist = np.sqrt(radius ** 2 + s[:, None] ** 2 + 2.0 * radius * s[:, None] * cg[None, :])
        # cos of the polar angle of the source point y = x0 + s omega
        cos_y = (radius + s[:, None] * cg[None, :]) / np.maximum(dist, 1e-300)
        vals = fun(dist) * legval(np.clip(cos_y, -1, 1), unit)
        shell = 2.0 * np.pi * np.sum(vals * cw[None, :], axis=1)
        total += np.sum(ws * shell)
    return total
