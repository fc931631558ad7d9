"""Direct solution of the bound-state equation on a periodic box.

The equation h^2 Lap u - (V + lambda) u + m |u|^(p-1) u = 0 is discretized
with a Fourier spectral Laplacian on [-pi, pi)^N and solved by damped
Newton from the rescaled ground state.  The solutions feed peak-drift,
spectral, d''(lambda), translation-mode and balance-identity checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, gmres, lobpcg
from scipy.stats import t as student

from . import lattice as lat
from .criteria import GRAD_TOL, predicted_small_eigenvalues, shift_terms
from .radial import (exponent, l0_spectrum_bounds, reference_ground_state, reference_moments,
                     rescale_profile)

DENSE_LIMIT = 4096
POSITIVITY_TOL = 1e-5
EIG_RESIDUAL_TOL = 1e-4


class NewtonFailure(RuntimeError):
    pass


# -------------------------------------------------------------- grid

@dataclass(frozen=True)
class PeriodicBox:
    """Uniform periodic grid [-L/2, L/2)^N with n nodes per axis."""

    N: int
    n: int
    period: float = lat.TWO_PI

    @property
    def dx(self) -> float:
        return self.period / self.n

    @property
    def axes(self):
        return lat.box_axes(self.N, self.n, self.period)

    @property
    def shape(self):
        return (self.n,) * self.N

    @property
    def cell(self) -> float:
        return self.dx ** self.N

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def wavenumbers(self):
        k = 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)
        return np.meshgrid(*([k] * self.N), indexing="ij", sparse=True)

    def k2(self):
        return sum(k ** 2 for k in self.wavenumbers())

    def laplacian(self, u):
        return np.real(sfft.ifftn(-self.k2() * sfft.fftn(u)))

    def gradient(self, u):
        uh = sfft.fftn(u)
        out = []
        for ax, k in enumerate(self.wavenumbers()):
            kk = k.copy()
            if self.n % 2 == 0:
                idx = [0] * self.N
                idx[ax] = self.n // 2
                kk[tuple(idx)] = 0.0
            out.append(np.real(sfft.ifftn(1j * kk * uh)))
        return out

    def integrate(self, f) -> float:
        return float(np.sum(f) * self.cell)

    def min_image(self, x0):
        """Coordinate offsets x - x0 folded into one period."""
        out = []
        for ax, c in zip(self.mesh(), np.atleast_1d(x0)):
            d = ax - c
            out.append(d - self.period * np.round(d / self.period))
        return out


def default_nodes(h: float, per_h: float = 12.0, period: float = lat.TWO_PI) -> int:
    """FFT-friendly even node count with about ``per_h`` nodes per h."""
    n = int(np.ceil(per_h * period / h))
    n = sfft.next_fast_len(n, real=True)
    while n % 2:
        n = sfft.next_fast_len(n + 1, real=True)
    return n


# ------------------------------------------------------- bound state

@dataclass(frozen=True)
class DiscreteBoundState:
    N: int
    h: float
    lam: float
    box: PeriodicBox
    u: np.ndarray = field(repr=False)
    x0: np.ndarray
    x_h: np.ndarray
    residual_norm: float
    newton_iterations: int
    V: np.ndarray = field(repr=False)
    m: np.ndarray = field(repr=False)

    @property
    def p(self) -> float:
        return exponent(self.N)

    def mass(self) -> float:
        return self.box.integrate(self.u ** 2)


def _residual(box, h, u, Vl, m, p):
    return h ** 2 * box.laplacian(u) - Vl * u + m * np.abs(u) ** (p - 1) * u


def predicted_peak(spec, lam, h, x0):
    """x0 + h^2 x1 when grad V(x0) = 0, else x0."""
    t = spec.table(x0, lam)
    if np.linalg.norm(t.V[1]) > GRAD_TOL:
        return np.asarray(x0, dtype=float)
    try:
        x1 = shift_terms(t, reference_moments(spec.N))["x1"]
    except np.linalg.LinAlgError:
        return np.asarray(x0, dtype=float)
    return np.asarray(x0, dtype=float) + h ** 2 * x1


def initial_guess(spec, lam, h, box, x0):
    """Rescaled ground state at the predicted peak, with V and m frozen at x0."""
    t = spec.table(x0, lam)
    gs = reference_ground_state(box.N)
    d = box.min_image(predicted_peak(spec, lam, h, x0))
    r = np.sqrt(sum(di ** 2 for di in d)) / h
    return rescale_profile(gs, t.V[0] + lam, t.m[0], r)


def _rounding_floor(box, h, u, Vl, m, p):
    """Residual level set by rounding in the individual terms."""
    umax = float(np.max(np.abs(u)))
    terms = (h ** 2 * float(np.max(box.k2())) * umax, float(np.max(np.abs(Vl))) * umax,
             float(np.max(m)) * umax ** p)
    return 100 * np.finfo(float).eps * max(terms)


def _newton(box, h, u, Vl, m, p, tol, max_iter):
    n_tot = u.size
    dense = n_tot <= DENSE_LIMIT
    if dense:
        D2 = _dense_laplacian(box)
    else:
        k2 = box.k2()
        c = float(np.mean(Vl))
        pre = 1.0 / (h ** 2 * k2 + c)
    F = _residual(box, h, u, Vl, m, p)
    res = float(np.max(np.abs(F)))
    merit = float(np.sqrt(np.mean(F ** 2)))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NewtonFailure(f"Newton stalled at residual {res:.3e}")
        diag = -Vl + p * m * np.abs(u) ** (p - 1)
        if dense:
            J = h ** 2 * D2 + np.diag(diag.ravel())
            du = linalg.solve(J, -F.ravel(), assume_a="sym").reshape(u.shape)
        else:
            def mv(x):
                x = x.reshape(u.shape)
                return (h ** 2 * box.laplacian(x) + diag * x).ravel()

            def pc(x):
                x = x.reshape(u.shape)
                return -np.real(sfft.ifftn(pre * sfft.fftn(x))).ravel()

            A = LinearOperator((n_tot, n_tot), matvec=mv, dtype=float)
            M = LinearOperator((n_tot, n_tot), matvec=pc, dtype=float)
            du, info = gmres(A, -F.ravel(), M=M, rtol=1e-12, atol=1e-3 * tol,
                             restart=100, maxiter=20)
            du = du.reshape(u.shape)
        # Newton directions descend the 2-norm, so damp on the RMS residual
        step = 1.0
        while True:
            trial = u + step * du
            Ft = _residual(box, h, trial, Vl, m, p)
            mt = float(np.sqrt(np.mean(Ft ** 2)))
            if mt < merit:
                break
            step *= 0.5
            if step < 1e-6:
                if res <= _rounding_floor(box, h, u, Vl, m, p):
                    return u, res, it
                raise NewtonFailure(f"damping failed at residual {res:.3e}")
        u, F, merit, it = trial, Ft, mt, it + 1
        res = float(np.max(np.abs(F)))
    return u, res, it


def _dense_laplacian(box):
    """Spectral Laplacian as a dense matrix (small grids only)."""
    n = box.n
    k = 2 * np.pi * sfft.fftfreq(n, d=box.dx)
    col = np.real(sfft.ifft(-k ** 2 * sfft.fft(np.eye(n)[:, 0])))
    D1 = linalg.toeplitz(col)
    eye = np.eye(n)
    out = np.zeros((n ** box.N, n ** box.N))
    for ax in range(box.N):
        term = np.ones((1, 1))
        for j in range(box.N):
            term = np.kron(term, D1 if j == ax else eye)
        out += term
    return out


def count_spikes(u, frac: float = 0.1) -> int:
    """Local maxima above ``frac`` of the global maximum (periodic)."""
    top = np.max(u)
    mask = u > frac * top
    for ax in range(u.ndim):
        mask &= (u >= np.roll(u, 1, ax)) & (u > np.roll(u, -1, ax))
    return int(np.sum(mask))


def solve_spike(spec, lam: float, h: float, n: int | None = None, x0=None,
                u_init=None, tol: float = 1e-10, max_iter: int = 50,
                period: float = lat.TWO_PI) -> DiscreteBoundState:
    """Single-spike solution concentrated at the critical point x0."""
    N = spec.N
    p = exponent(N)
    n = default_nodes(h, period=period) if n is None else n
    box = PeriodicBox(N, n, period)
    if box.dx > h / 4:
        raise ValueError(f"grid spacing {box.dx:.3g} does not resolve h = {h}")
    if x0 is None:
        target = "m" if spec.is_zero_potential() else "G"
        x0 = lat.find_critical_point(spec, lam, np.zeros(N), target=target).x0
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    V, m = lat.sample(spec, n, period)
    Vl = V + lam
    u = initial_guess(spec, lam, h, box, x0) if u_init is None else np.array(u_init)
    u, res, it = _newton(box, h, u, Vl, m, p, tol, max_iter)
    if count_spikes(u) != 1:
        raise NewtonFailure("solution is not a single spike")
    # spectral ripple in the far field is tolerated at this level
    if np.min(u) < -POSITIVITY_TOL * np.max(u):
        raise NewtonFailure("solution changes sign")
    xh = peak_location(box, u)
    return DiscreteBoundState(N=N, h=h, lam=lam, box=box, u=u, x0=x0, x_h=xh,
                              residual_norm=res, newton_iterations=it, V=V, m=m)


# ---------------------------------------------------------------- peak

def _quadratic_peak(box, u):
    idx = np.unravel_index(np.argmax(u), u.shape)
    N = box.N
    offs = np.array(np.meshgrid(*([[-1, 0, 1]] * N), indexing="ij")).reshape(N, -1).T
    vals = np.array([u[tuple((np.array(idx) + o) % box.n)] for o in offs])
    # fit c + g.d + d.H.d/2 on the 3^N stencil
    cols = [np.ones(len(offs))] + [offs[:, i] for i in range(N)]
    pairs = [(i, j) for i in range(N) for j in range(i, N)]
    cols += [offs[:, i] * offs[:, j] * (0.5 if i == j else 1.0) for i, j in pairs]
    coef, *_ = np.linalg.lstsq(np.stack(cols, 1), vals, rcond=None)
    g = coef[1:N + 1]
    H = np.zeros((N, N))
    for (i, j), c in zip(pairs, coef[N + 1:]):
        H[i, j] = H[j, i] = c
    d = -np.linalg.solve(H, g)
    base = np.array([box.axes[i][idx[i]] for i in range(N)])
    return base + d * box.dx


def _trig_derivs(box, uh, x):
    """Value, gradient and Hessian of the trigonometric interpolant at x."""
    N = box.N
    k = 2 * np.pi * sfft.fftfreq(box.n, d=box.dx)
    kd = k.copy()
    if box.n % 2 == 0:
        kd[box.n // 2] = 0.0
    x_start = -box.period / 2
    e = [np.exp(1j * k * (x[i] - x_start)) for i in range(N)]
    ed = [np.exp(1j * kd * (x[i] - x_start)) for i in range(N)]

    def contract(orders):
        t = uh
        for ax in range(N - 1, -1, -1):
            o = orders[ax]
            vec = e[ax] if o == 0 else (1j * kd) ** o * ed[ax]
            t = t @ vec
        return float(np.real(t)) / uh.size

    grad = np.zeros(N)
    H = np.zeros((N, N))
    for i in range(N):
        o = [0] * N
        o[i] = 1
        grad[i] = contract(o)
        for j in range(i, N):
            o2 = [0] * N
            o2[i] += 1
            o2[j] += 1
            H[i, j] = H[j, i] = contract(o2)
    return grad, H


def peak_location(box, u, method: str = "spectral"):
    """Maximum of u: quadratic fit, optionally refined on the interpolant."""
    x = _quadratic_peak(box, u)
    if method == "quadratic":
        return x
    uh = sfft.fftn(u)
    for _ in range(20):
        g, H = _trig_derivs(box, uh, x)
        step = -np.linalg.solve(H, g)
        x = x + step
        if np.max(np.abs(step)) < 1e-14:
            break
    return x


# ------------------------------------------------------------ spectrum

@dataclass(frozen=True)
class SpectralReport:
    h: float
    eigenvalues: np.ndarray
    rescaled_small: np.ndarray
    predicted: np.ndarray
    relative_errors: np.ndarray
    mu1_threshold: float
    window: tuple
    n_above_half_mu1: int
    n_in_window: int


def linearized_operator(state: DiscreteBoundState):
    """Matvec of L_h = h^2 Lap - (V + lambda) + p m u^(p-1) and its diagonal."""
    box, h, p = state.box, state.h, state.p
    diag = -(state.V + state.lam) + p * state.m * np.abs(state.u) ** (p - 1)

    def mv(x):
        x = x.reshape(box.shape)
        return (h ** 2 * box.laplacian(x) + diag * x).ravel()

    return mv, diag


def lh_eigenvalues(state: DiscreteBoundState, count: int) -> np.ndarray:
    """Largest ``count`` eigenvalues of the discretized L_h, descending."""
    box = state.box
    mv, diag = linearized_operator(state)
    n_tot = state.u.size
    if n_tot <= DENSE_LIMIT:
        A = state.h ** 2 * _dense_laplacian(box) + np.diag(diag.ravel())
        ev = linalg.eigh(A, eigvals_only=True, subset_by_index=[n_tot - count, n_tot - 1])
        return ev[::-1]
    # preconditioned block iteration; (h^2 |k|^2 + mean(V + lambda))^-1 tames the Laplacian
    c = float(np.mean(state.V + state.lam))
    pre = 1.0 / (state.h ** 2 * box.k2() + c)

    def apply_block(f, X):
        return np.column_stack([f(X[:, i]) for i in range(X.shape[1])])

    def precondition(x):
        return np.real(sfft.ifftn(pre * sfft.fftn(x.reshape(box.shape)))).ravel()

    A = LinearOperator((n_tot, n_tot), matvec=mv, matmat=lambda X: apply_block(mv, X),
                       dtype=float)
    M = LinearOperator((n_tot, n_tot), matvec=precondition,
                       matmat=lambda X: apply_block(precondition, X), dtype=float)
    rng = np.random.default_rng(0)
    u = state.u.ravel()
    start = [u] + [g.ravel() for g in box.gradient(state.u)]
    start += [rng.standard_normal(n_tot) * u for _ in range(count + 2 - len(start))]
    with warnings.catch_warnings():
        # stagnation warnings are judged by the explicit residual check below
        warnings.simplefilter("ignore", UserWarning)
        ev, vec = lobpcg(A, np.column_stack(start), M=M, largest=True, tol=1e-7,
                         maxiter=1000)
    resid = np.linalg.norm(apply_block(mv, vec) - vec * ev, axis=0)
    resid /= np.linalg.norm(vec, axis=0)
    if np.max(resid) > EIG_RESIDUAL_TOL:
        raise RuntimeError(f"eigen-solver did not converge (residual {np.max(resid):.2e})")
    return np.sort(ev)[::-1][:count]


def spectrum_Lh(state: DiscreteBoundState, spec, count: int | None = None) -> SpectralReport:
    """Top eigenvalues of L_h with the N small ones compared to theory."""
    N = state.N
    count = N + 3 if count is None else count
    ev = lh_eigenvalues(state, count)
    t = spec.table(state.x0, state.lam)
    s = t.V[0] + state.lam
    mu1, mu_next = l0_spectrum_bounds(N)
    thr = 0.5 * s * mu1
    lo = 0.5 * s * mu_next
    in_window = ev[(np.abs(ev) < thr) & (ev > lo)]
    small = np.sort(in_window)[::-1][:N] / state.h ** 2
    pred = predicted_small_eigenvalues(spec, state.lam, state.x0)
    if len(small) == N:
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(small - pred) / np.abs(pred)
    else:
        rel = np.full(N, np.nan)
    return SpectralReport(h=state.h, eigenvalues=ev, rescaled_small=small, predicted=pred,
                          relative_errors=rel, mu1_threshold=thr, window=(lo, thr),
                          n_above_half_mu1=int(np.sum(ev > thr)),
                          n_in_window=int(len(in_window)))


# --------------------------------------------------------- d''(lambda)

@dataclass(frozen=True)
class DppEstimate:
    value: float
    coarse: float
    fine: float
    extrapolated: float
    delta: float
    noise: float
    h: float
    lam: float


def d_prime(state: DiscreteBoundState) -> float:
    """d'(lambda) = (1/2) int u_h^2 dx."""
    return 0.5 * state.mass()


def d2_lambda_fd(spec, lam: float, h: float, delta: float = 0.05, n: int | None = None,
                 x0=None, base: DiscreteBoundState | None = None,
                 tol: float = 1e-12) -> DppEstimate:
    """Central difference of d'(lambda) at steps delta and delta/2.

    Solves at the perturbed lambda are warm-started; x0 is re-located for
    each lambda when V is not identically zero.
    """
    if base is None or base.residual_norm > tol:
        base = solve_spike(spec, lam, h, n=n if base is None else base.box.n, x0=x0,
                           u_init=None if base is None else base.u, tol=tol)
    n = base.box.n
    zeroV = spec.is_zero_potential()
    # warm start: rescaled profile at the new lambda plus the correction at lambda
    correction = base.u - initial_guess(spec, lam, h, base.box, base.x0)
    vals = {}
    worst = base.residual_norm
    for step in (delta, delta / 2):
        for sgn in (1, -1):
            l2 = lam + sgn * step
            xs = base.x0 if zeroV else lat.find_critical_point(spec, l2, base.x0).x0
            guess = initial_guess(spec, l2, h, base.box, xs) + correction
            try:
                st = solve_spike(spec, l2, h, n=n, x0=xs, u_init=guess, tol=tol)
            except NewtonFailure:
                st = solve_spike(spec, l2, h, n=n, x0=xs, tol=tol)
            vals[(step, sgn)] = d_prime(st)
            worst = max(worst, st.residual_norm)
    coarse = (vals[(delta, 1)] - vals[(delta, -1)]) / (2 * delta)
    fine = (vals[(delta / 2, 1)] - vals[(delta / 2, -1)]) / delta
    extra = (4 * fine - coarse) / 3
    # solve-accuracy floor of the differences plus the Richardson change
    floor = (1e-13 + worst) * abs(d_prime(base)) / (delta / 2)
    noise = abs(fine - coarse) / 3 + floor
    return DppEstimate(value=extra, coarse=coarse, fine=fine, extrapolated=extra,
                       delta=delta, noise=noise, h=h, lam=lam)


# ----------------------------------------------------- identities

def balance_identity(state: DiscreteBoundState, spec) -> dict:
    """int [grad m u^(p+1)/(p+1) - grad V u^2/2] dx, which vanishes exactly.

    Derivatives of V and m are spectral derivatives of the sampled fields.
    """
    box, p, u = state.box, state.p, state.u
    gm = box.gradient(state.m)
    gV = box.gradient(state.V)
    a = np.array([box.integrate(g * u ** (p + 1)) / (p + 1) for g in gm])
    b = np.array([box.integrate(g * u ** 2) / 2 for g in gV])
    res = a - b
    scale = float(np.max(np.abs(np.concatenate([a, b])))) or 1.0
    return {"residual": res.tolist(), "norm": float(np.linalg.norm(res)),
            "scale": scale, "relative": float(np.linalg.norm(res) / scale)}


def translation_form_ladder(spec, lam: float, hs, n_of_h=None) -> dict:
    """Rescaled quadratic form of L_h on translation modes vs its limit.

    For each h the profile w at x_h is rescaled with V(x_h), m(x_h); the
    matrix h^-N int (L_h d_j W)(d_k W) dx is compared with
    h^-N int W^(p+1) dx d_jk m(x0) / (p + 1).
    """
    if not spec.is_zero_potential():
        raise ValueError("this check assumes V = 0")
    N = spec.N
    p = exponent(N)
    gs = reference_ground_state(N)
    cp = lat.find_critical_point(spec, lam, np.zeros(N), target="m")
    x0 = cp.x0
    Hm0 = spec.table(x0, lam).m[2]
    rows = []
    for h in hs:
        n = None if n_of_h is None else n_of_h(h)
        st = solve_spike(spec, lam, h, n=n, x0=x0)
        box = st.box
        t = spec.table(st.x_h, lam)
        d = box.min_image(st.x_h)
        r = np.sqrt(sum(di ** 2 for di in d)) / h
        W = rescale_profile(gs, t.V[0] + lam, t.m[0], r)
        dW = box.gradient(W)
        mv, _ = linearized_operator(st)
        LdW = [mv(g).reshape(box.shape) for g in dW]
        lhs = np.array([[box.integrate(LdW[j] * dW[k]) for k in range(N)]
                        for j in range(N)]) / h ** N
        rhs = box.integrate(W ** (p + 1)) / (p + 1) / h ** N * Hm0
        scale = np.max(np.abs(rhs))
        mismatch = float(np.max(np.abs(lhs - rhs)) / scale)
        rows.append({"h": h, "lhs": lhs.tolist(), "rhs": rhs.tolist(),
                     "mismatch": mismatch})
    errs = [r["mismatch"] for r in rows]
    return {"rows": rows, "mismatch": errs,
            "monotone": bool(all(b < a for a, b in zip(errs, errs[1:])))}


def peak_drift(spec, lam: float, hs, n_of_h=None) -> dict:
    """Peak displacement x_h - x0 along an h ladder with a log-log slope fit."""
    N = spec.N
    target = "m" if spec.is_zero_potential() else "G"
    x0 = lat.find_critical_point(spec, lam, np.zeros(N), target=target).x0
    drifts = []
    for h in hs:
        n = None if n_of_h is None else n_of_h(h)
        st = solve_spike(spec, lam, h, n=n, x0=x0)
        drifts.append(st.x_h - x0)
    drifts = np.array(drifts)
    size = np.linalg.norm(drifts, axis=1)
    lh = np.log(np.asarray(hs, dtype=float))
    A = np.stack([np.ones_like(lh), lh], 1)
    coef, res, *_ = np.linalg.lstsq(A, np.log(size), rcond=None)
    dof = max(len(hs) - 2, 1)
    sigma2 = float(np.sum((A @ coef - np.log(size)) ** 2)) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    half = float(student.ppf(0.975, dof) * np.sqrt(cov[1, 1]))
    return {"h": list(map(float, hs)), "drift": drifts.tolist(),
            "slope": float(coef[1]), "slope_band": (float(coef[1] - half), float(coef[1] + half)),
            "scaled": (drifts / np.asarray(hs)[:, None] ** 2).tolist()}
