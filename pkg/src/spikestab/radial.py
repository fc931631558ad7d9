"""Radial ground state, sector inversions and moment integrals.

The ground state ``w`` is the positive radial decaying solution of
``w'' + (N-1)/r w' - w + w**p = 0`` with ``p = 1 + 4/N``.  Sector problems
``Phi'' + (N-1)/r Phi' - Phi + p w**(p-1) Phi - l(l+N-2)/r**2 Phi = f`` are
solved by a conservative finite-volume scheme on a graded grid, extrapolated
over one grid halving.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, optimize
from scipy.integrate import solve_ivp
from scipy.linalg import eigvalsh_tridiagonal, solve_banded
from scipy.special import gamma, kve


class ShootingError(RuntimeError):
    """Raised when the ground-state shooting fails to bracket or converge."""


class SectorError(RuntimeError):
    """Raised when a sector problem is near-resonant or its solution grows."""


SUPPORTED_DIMS = (1, 2, 3)
RHS_TAGS = ("r2wp", "r2w", "w")
SINGULAR_TOL = 1e-6


def exponent(N: int) -> float:
    return 1.0 + 4.0 / N


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * np.pi ** (N / 2) / gamma(N / 2)


def _check_dim(N):
    if N not in SUPPORTED_DIMS:
        raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}, got {N}")


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class RadialGrid:
    """Graded radial grid r = r_max * expm1(s xi) / expm1(s) on uniform xi."""

    nodes: np.ndarray
    r_max: float
    stretch: float

    @classmethod
    def build(cls, n: int = 4000, r_max: float = 25.0, stretch: float = 2.0):
        if n < 4 or n % 2:
            raise ValueError("n must be an even integer >= 4")
        xi = np.linspace(0.0, 1.0, n + 1)
        if stretch == 0:
            r = r_max * xi
        else:
            r = r_max * np.expm1(stretch * xi) / np.expm1(stretch)
        r[0] = 0.0
        r[-1] = r_max
        return cls(nodes=r, r_max=float(r_max), stretch=float(stretch))

    @property
    def n(self) -> int:
        return len(self.nodes) - 1

    def refined(self) -> "RadialGrid":
        """Grid with half the xi spacing; even nodes coincide with ``self``."""
        return RadialGrid.build(2 * self.n, self.r_max, self.stretch)

    def jacobian(self) -> np.ndarray:
        """dr/dxi at the nodes."""
        xi = np.linspace(0.0, 1.0, self.n + 1)
        s = self.stretch
        if s == 0:
            return np.full_like(xi, self.r_max)
        return self.r_max * s * np.exp(s * xi) / np.expm1(s)

    def integrate(self, f: np.ndarray) -> float:
        """Simpson rule in xi for the integral of f dr over [0, r_max]."""
        return float(integrate.simpson(f * self.jacobian(), dx=1.0 / self.n))


# ---------------------------------------------------------- ground state

@dataclass(frozen=True)
class GroundState:
    """Ground state w on a radial grid with a callable interpolant.

    Inside ``r_match`` the profile is a quintic Hermite interpolant of the
    shooting trajectory; beyond it the exact linear decaying solution
    ``A r**(1-N/2) K_{N/2-1}(r)`` is used.
    """

    N: int
    p: float
    grid: RadialGrid
    w: np.ndarray
    w_prime: np.ndarray
    w0: float
    decay_rate: float
    r_match: float
    tail_amp: float
    knots: np.ndarray = field(repr=False)
    knot_w: np.ndarray = field(repr=False)
    knot_dw: np.ndarray = field(repr=False)

    @functools.cached_property
    def _poly(self):
        r = self.knots
        d2 = _w_second(r, self.knot_w, self.knot_dw, self.N, self.p)
        y = np.stack([self.knot_w, self.knot_dw, d2], axis=1)
        return interpolate.BPoly.from_derivatives(r, y)

    def evaluate(self, r, derivative: int = 0) -> np.ndarray:
        """w (derivative=0), w' (1) or w'' (2) at arbitrary radii."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inner = r <= self.r_match
        if np.any(inner):
            out[inner] = self._poly(r[inner], derivative)
        if np.any(~inner):
            out[~inner] = _bessel_tail(r[~inner], self.N, self.tail_amp, derivative)
        return out

    def __call__(self, r):
        return self.evaluate(r)

    def on(self, grid: RadialGrid) -> "GroundState":
        """Same ground state resampled on another grid."""
        return GroundState(
            N=self.N, p=self.p, grid=grid, w=self.evaluate(grid.nodes),
            w_prime=self.evaluate(grid.nodes, 1), w0=self.w0,
            decay_rate=self.decay_rate, r_match=self.r_match,
            tail_amp=self.tail_amp, knots=self.knots, knot_w=self.knot_w,
            knot_dw=self.knot_dw)


def _w_second(r, w, dw, N, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = -(N - 1) * dw / r + w - np.abs(w) ** (p - 1) * w
    # at r = 0 the radial term equals (N-1) w''(0)
    d2 = np.where(r > 0, d2, (w - np.abs(w) ** (p - 1) * w) / N)
    return d2


def _bessel_tail(r, N, amp, derivative=0):
    nu = N / 2 - 1
    # w = A r^-nu K_nu(r); (r^-nu K_nu)' = -r^-nu K_{nu+1}
    e = np.exp(-r)
    if derivative == 0:
        return amp * r ** (-nu) * kve(nu, r) * e
    if derivative == 1:
        return -amp * r ** (-nu) * kve(nu + 1, r) * e
    if derivative == 2:
        w = amp * r ** (-nu) * kve(nu, r) * e
        dw = -amp * r ** (-nu) * kve(nu + 1, r) * e
        return w - (N - 1) * dw / r
    raise ValueError("derivative must be 0, 1 or 2")


def _taylor_start(a, N, p, r0):
    b = (a - a ** p) / (2 * N)
    c = b * (1 - p * a ** (p - 1)) / (4 * (N + 2))
    return [a + b * r0 ** 2 + c * r0 ** 4, 2 * b * r0 + 4 * c * r0 ** 3]


def _shoot(a, N, p, r_end, r0=1e-3, rtol=1e-12, dense=False):
    """Integrate from w(0)=a.  Returns (+1 overshoot, -1 undershoot, 0, sol)."""

    def rhs(r, y):
        w, dw = y
        return [dw, -(N - 1) / r * dw + w - np.abs(w) ** (p - 1) * w]

    def cross(r, y):
        return y[0]
    cross.terminal = True
    cross.direction = -1

    def turn(r, y):
        return y[1]
    turn.terminal = True
    turn.direction = 1

    sol = solve_ivp(rhs, (r0, r_end), _taylor_start(a, N, p, r0),
                    method="DOP853", rtol=rtol, atol=1e-14,
                    events=[cross, turn], dense_output=dense)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


def solve_ground_state(N: int, tol: float = 1e-15, grid: RadialGrid | None = None,
                       bracket=(0.5, 5.0), r_match: float = 10.0,
                       max_iter: int = 200) -> GroundState:
    """Shoot on w(0) by bisection and attach the exact exponential tail.

    A trajectory that crosses zero overshoots, one whose slope turns
    positive undershoots.  Bisection stops when the relative bracket width
    falls below ``tol``.
    """
    _check_dim(N)
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = exponent(N)
    r_end = 40.0
    lo, hi = bracket
    if _shoot(lo, N, p, r_end)[0] != -1 or _shoot(hi, N, p, r_end)[0] != 1:
        raise ShootingError(f"bracket {bracket} does not separate under/overshoot")
    for _ in range(max_iter):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        kind, _ = _shoot(mid, N, p, r_end)
        if kind == 1:
            hi = mid
        elif kind == -1:
            lo = mid
        else:
            lo = hi = mid
            break
    else:
        raise ShootingError("bisection did not reach the requested tolerance")
    if hi - lo > max(tol, 4e-16) * hi:
        raise ShootingError(f"bracket width {hi - lo:.3e} above tolerance")

    a = 0.5 * (lo + hi)
    kind, sol = _shoot(lo, N, p, r_end, dense=True)
    r_bad = sol.t[-1]
    # the undershooting trajectory is trustworthy well before it turns
    r_match = min(r_match, 0.6 * r_bad)
    r0 = 1e-3
    knots = np.concatenate([[0.0], np.linspace(r0, r_match, int(np.ceil(r_match / 0.01)) + 1)])
    y = sol.sol(knots[1:])
    ic = _taylor_start(a, N, p, 0.0)
    kw = np.concatenate([[ic[0]], y[0]])
    kdw = np.concatenate([[0.0], y[1]])
    tail_amp = kw[-1] / _bessel_tail(np.array([r_match]), N, 1.0)[0]

    if grid is None:
        grid = RadialGrid.build()
    gs = GroundState(N=N, p=p, grid=grid, w=np.empty(0), w_prime=np.empty(0),
                     w0=float(kw[0]), decay_rate=1.0, r_match=float(r_match),
                     tail_amp=float(tail_amp), knots=knots, knot_w=kw, knot_dw=kdw)
    gs = gs.on(grid)
    rate = fit_tail(grid.nodes, gs.w)[2]
    gs = _replace(gs, decay_rate=float(rate))
    _check_ground_state(gs)
    return gs


def _replace(gs, **kw):
    d = {k: getattr(gs, k) for k in GroundState.__dataclass_fields__}
    d.update(kw)
    return GroundState(**d)


def _check_ground_state(gs):
    if np.any(gs.w <= 0):
        raise ShootingError("ground state is not positive on the grid")
    if np.any(np.diff(gs.w) >= 0):
        raise ShootingError("ground state is not strictly decreasing")


def ode_residual(gs: GroundState) -> float:
    """Max residual of the profile ODE at cell midpoints inside r_match."""
    r = 0.5 * (gs.knots[1:] + gs.knots[:-1])
    w = gs.evaluate(r)
    res = gs.evaluate(r, 2) + (gs.N - 1) / r * gs.evaluate(r, 1) - w + w ** gs.p
    return float(np.max(np.abs(res)))


def pohozaev_ratio(gs: GroundState) -> float:
    """Ratio of the radial integrals of |w'|^2 and w^(p+1); equals N/(N+2)."""
    N, p = gs.N, gs.p

    def moment(f):
        a = integrate.quad(f, 0.0, gs.r_match, limit=400, epsabs=0, epsrel=1e-13)[0]
        b = integrate.quad(f, gs.r_match, np.inf, limit=200, epsabs=0, epsrel=1e-12)[0]
        return a + b

    grad = moment(lambda r: gs.evaluate(np.array([r]), 1)[0] ** 2 * r ** (N - 1))
    pot = moment(lambda r: gs.evaluate(np.array([r]))[0] ** (p + 1) * r ** (N - 1))
    return grad / pot


def rescale_profile(gs: GroundState, s: float, m0: float, r=None) -> np.ndarray:
    """Profile s^(1/(p-1)) m0^(-1/(p-1)) w(sqrt(s) r) of the rescaled equation."""
    if s <= 0 or m0 <= 0:
        raise ValueError("s and m0 must be positive")
    r = gs.grid.nodes if r is None else np.asarray(r, dtype=float)
    q = 1.0 / (gs.p - 1)
    return s ** q * m0 ** (-q) * gs.evaluate(np.sqrt(s) * r)


def fit_tail(r, f, frac: float = 0.1):
    """Least-squares fit of |f| ~ A r^alpha exp(-beta r) on the last nodes."""
    r = np.asarray(r)
    f = np.abs(np.asarray(f))
    k = max(int(len(r) * frac), 8)
    rr, ff = r[-k:], f[-k:]
    ok = ff > 0
    if ok.sum() < 4:
        raise ValueError("tail fit needs nonzero samples")
    X = np.stack([np.ones(ok.sum()), np.log(rr[ok]), -rr[ok]], axis=1)
    coef, *_ = np.linalg.lstsq(X, np.log(ff[ok]), rcond=None)
    return float(np.exp(coef[0])), float(coef[1]), float(coef[2])


def tail_integral(r, f, power: float = 0.0) -> float:
    """Integral beyond r[-1] of the fitted tail of f times r^power."""
    try:
        A, alpha, beta = fit_tail(r, f)
    except ValueError:
        return 0.0
    if beta <= 0:
        raise ValueError("tail fit is not decaying")
    R = r[-1]
    val = integrate.quad(lambda t: A * t ** (alpha + power) * np.exp(-beta * t),
                         R, np.inf)[0]
    return float(np.sign(f[-1]) * val)


# ------------------------------------------------------- sector solves

@dataclass(frozen=True)
class SectorSolve:
    """Decaying solution of one angular-sector problem on a radial grid."""

    sector: int
    rhs_tag: str
    grid: RadialGrid
    profile: np.ndarray
    raw: np.ndarray
    residual_norm: float
    error_estimate: float
    min_abs_eig: float


def _rhs_values(gs, r, tag):
    w = gs.evaluate(r)
    if tag == "r2wp":
        return r ** 2 * w ** gs.p
    if tag == "r2w":
        return r ** 2 * w
    if tag == "w":
        return w
    raise ValueError(f"unknown rhs tag {tag!r}; expected one of {RHS_TAGS}")


def _assemble(gs, r, ell, potential=None):
    """Finite-volume form: tridiagonal (diag, off) and cell volumes.

    The discrete operator is symmetric with respect to the weight r^(N-1).
    """
    N = gs.N
    c = ell * (ell + N - 2)
    rm = 0.5 * (r[1:] + r[:-1])
    flux = rm ** (N - 1) / np.diff(r)
    edges = np.concatenate([[0.0], rm, [r[-1]]])
    vol = (edges[1:] ** N - edges[:-1] ** N) / N
    if potential is None:
        potential = -1.0 + gs.p * gs.evaluate(r) ** (gs.p - 1)
    q = potential.copy()
    q[1:] -= c / r[1:] ** 2
    diag = q * vol
    diag[:-1] -= flux
    diag[1:] -= flux
    # Robin closure matched to the decaying solution r^-nu K_nu(r)
    nu = ell + N / 2 - 1
    R = r[-1]
    logd = (1 - N / 2) / R - 0.5 * (kve(nu - 1, R) + kve(nu + 1, R)) / kve(nu, R)
    diag[-1] += R ** (N - 1) * logd
    return diag, flux.copy(), vol


def _solve_once(gs, r, ell, f):
    diag, off, vol = _assemble(gs, r, ell)
    b = f * vol
    n = len(r)
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    if ell > 0:
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
        b = b.copy()
        b[0] = 0.0
    u = solve_banded((1, 1), ab, b)
    Au = ab[1] * u
    Au[:-1] += ab[0, 1:] * u[1:]
    Au[1:] += ab[2, :-1] * u[:-1]
    res = np.max(np.abs(Au - b)[1:-1] / vol[1:-1]) / max(np.max(np.abs(f)), 1e-300)
    return u, float(res), (diag, off, vol)


def _min_abs_eig(diag, off, vol, ell, tau):
    """Smallest |eigenvalue| of the weighted operator, searched in [-tau, tau]."""
    s = 1 if ell > 0 else 0
    d = diag[s:] / vol[s:]
    e = off[s:] / np.sqrt(vol[s:-1] * vol[s + 1:])
    ev = eigvalsh_tridiagonal(d, e, select="v", select_range=(-tau, tau))
    return float(np.min(np.abs(ev))) if ev.size else tau


def solve_sector(gs: GroundState, sector: int, rhs_tag: str,
                 grid: RadialGrid | None = None) -> SectorSolve:
    """Decaying solution of the sector-l problem with the tagged right side.

    l = 0 with rhs ``w`` returns L0^{-1} w; l = 2 with ``r2wp`` gives the
    function Phi_0 and with ``r2w`` the function Phi_1.  Values are
    Richardson-extrapolated from ``grid`` and its refinement.
    """
    if sector not in (0, 1, 2):
        raise ValueError("sector must be 0, 1 or 2")
    if rhs_tag not in RHS_TAGS:
        raise ValueError(f"unknown rhs tag {rhs_tag!r}")
    grid = gs.grid if grid is None else grid
    fine = grid.refined()
    rc, rf = grid.nodes, fine.nodes
    uc, _, mats = _solve_once(gs, rc, sector, _rhs_values(gs, rc, rhs_tag))
    uf, res, _ = _solve_once(gs, rf, sector, _rhs_values(gs, rf, rhs_tag))
    gap = _min_abs_eig(*mats, sector, tau=0.05)
    if gap < SINGULAR_TOL:
        raise SectorError(f"sector {sector} operator is near-singular (|mu| = {gap:.2e})")
    uf = uf[::2]
    u = (4.0 * uf - uc) / 3.0
    scale = np.max(np.abs(u))
    if np.abs(u[-1]) > 1e-6 * scale or np.abs(u[-1]) > np.abs(u[int(0.8 * len(u))]):
        raise SectorError("sector solution does not decay at r_max")
    if sector > 0:
        u[0] = 0.0
    return SectorSolve(sector=sector, rhs_tag=rhs_tag, grid=grid, profile=u, raw=uf,
                       residual_norm=res, error_estimate=float(np.max(np.abs(u - uf))),
                       min_abs_eig=gap)


def sector_eigenvalues(gs: GroundState, sector: int, k: int = 2,
                       grid: RadialGrid | None = None) -> np.ndarray:
    """Largest k eigenvalues of the sector-l restriction of L0 (descending)."""
    grid = gs.grid if grid is None else grid
    diag, off, vol = _assemble(gs, grid.nodes, sector)
    s = 1 if sector > 0 else 0
    d = diag[s:] / vol[s:]
    e = off[s:] / np.sqrt(vol[s:-1] * vol[s + 1:])
    n = len(d)
    ev = eigvalsh_tridiagonal(d, e, select="i", select_range=(n - k, n - 1))
    return ev[::-1]


@functools.lru_cache(maxsize=8)
def l0_spectrum_bounds(N: int) -> tuple[float, float]:
    """(mu_1, mu_{N+2}) of L0: the positive eigenvalue and the next one below 0.

    The spectrum below the kernel is capped at the continuum edge -1.
    """
    gs = reference_ground_state(N)
    top0 = sector_eigenvalues(gs, 0, 2)
    top1 = sector_eigenvalues(gs, 1, 2)
    top2 = sector_eigenvalues(gs, 2, 1)
    rest = max(top0[1], top1[1], top2[0])
    return float(top0[0]), float(max(rest, -1.0))


# ---------------------------------------------------------------- moments

MOMENT_NAMES = (
    "M_w2_r2", "M_w2_r4", "M_wp1_r0", "M_wp1_r2", "M_wp1_r4",
    "M_phi0_wp", "M_phi0_w", "M_phi1_w", "M_inv_pp", "M_inv_ww", "M_inv_wp",
)


@dataclass(frozen=True)
class MomentTable:
    """Radial integrals over (0, inf) with weight r^(N-1) and error estimates.

    Full-space integrals equal ``sphere_area(N)`` times these values.
    """

    N: int
    values: dict
    errors: dict

    def __getattr__(self, name):
        if name in MOMENT_NAMES:
            return self.values[name]
        raise AttributeError(name)

    def __getitem__(self, name):
        return self.values[name]

    def full_space(self, name: str) -> float:
        return sphere_area(self.N) * self.values[name]


def sector_set(gs: GroundState, grid: RadialGrid | None = None) -> dict:
    """All sector solves feeding the moment table."""
    return {
        "phi0": solve_sector(gs, 2, "r2wp", grid),
        "phi1": solve_sector(gs, 2, "r2w", grid),
        "inv_pp": solve_sector(gs, 0, "r2wp", grid),
        "inv_ww": solve_sector(gs, 0, "r2w", grid),
        "inv_wp": solve_sector(gs, 0, "r2wp", grid),
    }


def compute_moments(gs: GroundState, solves: dict | None = None,
                    grid: RadialGrid | None = None) -> MomentTable:
    """Quadrature of every moment on the graded grid plus a fitted tail.

    The error attached to a sector moment is the change between the raw
    fine-grid profile and the extrapolated one, plus the tail correction.
    """
    grid = gs.grid if grid is None else grid
    if solves is None:
        solves = sector_set(gs, grid)
    for s in solves.values():
        if s.grid.n != grid.n or s.grid.r_max != grid.r_max:
            raise ValueError("sector solves must live on the moment grid")
    r = grid.nodes
    N, p = gs.N, gs.p
    w = gs.evaluate(r)
    wt = r ** (N - 1)

    values, errors = {}, {}

    def put(name, integrand, raw=None):
        body = grid.integrate(integrand * wt)
        tail = tail_integral(r, integrand * wt)
        values[name] = body + tail
        err = abs(tail) + 1e-15 * abs(body)
        if raw is not None:
            err += abs(grid.integrate(raw * wt) - body)
        errors[name] = err

    put("M_w2_r2", r ** 2 * w ** 2)
    put("M_w2_r4", r ** 4 * w ** 2)
    put("M_wp1_r0", w ** (p + 1))
    put("M_wp1_r2", r ** 2 * w ** (p + 1))
    put("M_wp1_r4", r ** 4 * w ** (p + 1))
    pairs = {
        "M_phi0_wp": (r ** 2 * w ** p, "phi0"),
        "M_phi0_w": (r ** 2 * w, "phi0"),
        "M_phi1_w": (r ** 2 * w, "phi1"),
        "M_inv_pp": (r ** 2 * w ** p, "inv_pp"),
        "M_inv_ww": (r ** 2 * w, "inv_ww"),
        "M_inv_wp": (r ** 2 * w, "inv_wp"),
    }
    for name, (g, key) in pairs.items():
        s = solves[key]
        put(name, g * s.profile, g * s.raw)
    return MomentTable(N=N, values=values, errors=errors)


@functools.lru_cache(maxsize=8)
def reference_ground_state(N: int) -> GroundState:
    """Cached ground state on the default grid."""
    return solve_ground_state(N)


@functools.lru_cache(maxsize=8)
def reference_moments(N: int) -> MomentTable:
    """Cached moment table on the default grid."""
    return compute_moments(reference_ground_state(N))


# ------------------------------------------------- angular decomposition

def verify_reduction_identities(N: int, spacing: float = 0.125, half_width: float = 10.0,
                      gs: GroundState | None = None,
                      moments: MomentTable | None = None) -> dict:
    """Check the three l=2 reduction identities by Cartesian quadrature.

    The left sides integrate y_N^2 w^p L0^{-1}(y_N^2 w^p), y_{N-1}^2 w^p
    L0^{-1}(y_N^2 w^p) and y_{N-1} y_N w^p L0^{-1}(y_{N-1} y_N w^p) on a
    tensor grid, with L0^{-1} of the non-radial sources assembled from the
    l = 0 and l = 2 sector solutions.  The right sides come from moments.
    """
    if N not in (2, 3):
        raise ValueError("the identities need N in {2, 3}")
    gs = reference_ground_state(N) if gs is None else gs
    solves = sector_set(gs)
    mt = compute_moments(gs, solves) if moments is None else moments
    r_nodes = gs.grid.nodes
    phi0 = interpolate.CubicSpline(r_nodes, solves["phi0"].profile)
    inv = interpolate.CubicSpline(r_nodes, solves["inv_pp"].profile)

    x = np.arange(-half_width, half_width + spacing / 2, spacing)
    axes = np.meshgrid(*([x] * N), indexing="ij", sparse=True)
    r2 = sum(a ** 2 for a in axes)
    r = np.sqrt(r2)
    yN, yM = axes[-1], axes[-2]
    wp = gs.evaluate(r) ** gs.p
    P = phi0(r)
    I = inv(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        P_r2 = np.where(r > 0, P / r2, 0.0)
    # L0^{-1}(y_N^2 w^p) and L0^{-1}(y_{N-1} y_N w^p)
    u_nn = P_r2 * yN ** 2 + (I - P) / N
    u_mn = P_r2 * yM * yN
    dV = spacing ** N
    lhs = np.array([
        np.sum(yN ** 2 * wp * u_nn) * dV,
        np.sum(yM ** 2 * wp * u_nn) * dV,
        np.sum(yM * yN * wp * u_mn) * dV,
    ])
    A = mt.full_space("M_inv_pp")
    B = mt.full_space("M_phi0_wp")
    rhs = np.array([
        A / N ** 2 + 2 * (N - 1) / (N ** 2 * (N + 2)) * B,
        A / N ** 2 - 2 / (N ** 2 * (N + 2)) * B,
        B / (N * (N + 2)),
    ])
    mismatch = np.abs(lhs - rhs) / np.abs(rhs)
    return {
        "N": N,
        "lhs": lhs.tolist(),
        "rhs": rhs.tolist(),
        "relative_mismatch": mismatch.tolist(),
        "difference_check": float(abs((lhs[0] - lhs[1]) - 2 * B / (N * (N + 2)))
                                  / abs(2 * B / (N * (N + 2)))),
    }
