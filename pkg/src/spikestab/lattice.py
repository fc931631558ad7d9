"""Potentials V and nonlinear lattices m, the landscape G and its critical points.

Three representations share one interface (``table``, ``sample`` and
``is_zero_potential``):

* ``TrigFamily``: separable trigonometric lattices built from the basis
  X1..X4, with analytic derivatives;
* ``GridLattice``: samples on a periodic grid, differentiated through the
  trigonometric interpolant;
* ``CallableLattice``: user functions, differentiated by central differences.

A ``DerivativeTable`` (values and derivative tensors up to order four at one
point) is itself usable as a lattice through its Taylor polynomial.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

TWO_PI = 2.0 * np.pi

# Fourier form of X_k divided by k! so that X_k^(k)(0) = 1.
# Each entry: (constant, [(amplitude, frequency, phase), ...]) for sin(f x + phase).
_HALF_PI = 0.5 * np.pi
_BASIS = {
    1: (0.0, [(9 / 8, 1, 0.0), (-1 / 24, 3, 0.0)]),
    2: (5 / 4, [(-4 / 3, 1, _HALF_PI), (1 / 12, 2, _HALF_PI)]),
    3: (0.0, [(1 / 8, 1, 0.0), (-1 / 24, 3, 0.0)]),
    4: (1 / 4, [(-1 / 3, 1, _HALF_PI), (1 / 12, 2, _HALF_PI)]),
}
# X_k as written with its k-th derivative at 0 equal to k! (unnormalized form)
BASIS_SCALE = {1: 1.0, 2: 2.0, 3: 6.0, 4: 24.0}


def eval_basis(which: int, x, order: int = 0, normalized: bool = True):
    """Derivative of order ``order`` of the basis function X_which.

    With ``normalized`` the functions are sin x + sin^3 x / 6,
    (2(1-cos x) + (1-cos x)^2/3)/2, sin^3 x / 6 and (1-cos x)^2 / 6, whose
    k-th derivative at 0 is one.  Otherwise the unscaled trigonometric
    expressions are returned.
    """
    if which not in _BASIS:
        raise ValueError("basis index must be 1..4")
    if not 0 <= order <= 4:
        raise ValueError("order must be in 0..4")
    x = np.mod(np.asarray(x, dtype=float), TWO_PI)
    const, terms = _BASIS[which]
    out = np.full_like(x, const if order == 0 else 0.0)
    for amp, f, ph in terms:
        out = out + amp * f ** order * np.sin(f * x + ph + order * _HALF_PI)
    return out if normalized else out * BASIS_SCALE[which]


# --------------------------------------------------------------- tables

def _sym_ok(T, tol=1e-9):
    if np.ndim(T) < 2:
        return True
    scale = max(np.max(np.abs(T)), 1.0)
    for perm in itertools.permutations(range(np.ndim(T))):
        if np.max(np.abs(T - np.transpose(T, perm))) > tol * scale:
            return False
    return True


def _zero_tensors(N):
    return tuple(np.zeros((N,) * k) if k else 0.0 for k in range(5))


@dataclass(frozen=True)
class DerivativeTable:
    """Values and derivative tensors of V and m (orders 0..4) at x0."""

    x0: np.ndarray
    lam: float
    V: tuple
    m: tuple

    def __post_init__(self):
        N = len(self.x0)
        for name, T in (("V", self.V), ("m", self.m)):
            if len(T) != 5:
                raise ValueError(f"{name} needs derivative tensors of orders 0..4")
            for k, t in enumerate(T):
                if np.shape(t) != (N,) * k:
                    raise ValueError(f"{name} order-{k} tensor has shape {np.shape(t)}")
                if not _sym_ok(np.asarray(t)):
                    raise ValueError(f"{name} order-{k} tensor is not symmetric")
        if self.m[0] <= 0:
            raise ValueError("m(x0) must be positive")
        if self.V[0] < 0:
            raise ValueError("V(x0) must be nonnegative")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")

    @classmethod
    def from_arrays(cls, x0, lam, V, m):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        conv = lambda T: tuple(float(t) if k == 0 else np.asarray(t, dtype=float)
                               for k, t in enumerate(T))
        return cls(x0=x0, lam=float(lam), V=conv(V), m=conv(m))

    @property
    def N(self) -> int:
        return len(self.x0)

    # common contractions
    def grad(self, f="V"):
        return getattr(self, f)[1]

    def hess(self, f="V"):
        return getattr(self, f)[2]

    def lap(self, f="V") -> float:
        return float(np.trace(getattr(self, f)[2]))

    def grad_lap(self, f="V"):
        return np.einsum("ijj->i", getattr(self, f)[3])

    def bilap(self, f="V") -> float:
        return float(np.einsum("iijj->", getattr(self, f)[4]))

    def rotated(self, Q) -> "DerivativeTable":
        """Same data in a frame rotated by the orthogonal matrix Q."""
        def rot(T):
            out = [T[0]]
            for k in range(1, 5):
                t = np.asarray(T[k])
                for ax in range(k):
                    t = np.moveaxis(np.tensordot(Q, t, axes=([1], [ax])), 0, ax)
                out.append(t)
            return tuple(out)
        return DerivativeTable(x0=Q @ self.x0, lam=self.lam, V=rot(self.V), m=rot(self.m))

    def scaled(self, factor: float) -> "DerivativeTable":
        """Multiply V + lambda and m by a common positive factor."""
        lam = self.lam * factor
        V = tuple(np.asarray(t) * factor if k else self.V[0] * factor
                  for k, t in enumerate(self.V))
        m = tuple(np.asarray(t) * factor if k else self.m[0] * factor
                  for k, t in enumerate(self.m))
        return DerivativeTable(x0=self.x0, lam=lam, V=V, m=m)

    # lattice interface through the Taylor polynomial about x0
    def table(self, x, lam=None) -> "DerivativeTable":
        d = np.atleast_1d(np.asarray(x, dtype=float)) - self.x0
        lam = self.lam if lam is None else lam
        if not np.any(d):
            return DerivativeTable(x0=self.x0.copy(), lam=lam, V=self.V, m=self.m)
        return DerivativeTable(x0=self.x0 + d, lam=lam, V=_taylor_shift(self.V, d),
                               m=_taylor_shift(self.m, d))

    def is_zero_potential(self) -> bool:
        return all(not np.any(np.asarray(t)) for t in self.V)

    def to_dict(self) -> dict:
        ser = lambda T: [float(T[0])] + [np.asarray(t).tolist() for t in T[1:]]
        return {"family": "table", "N": self.N, "lambda": self.lam,
                "x0": self.x0.tolist(), "V": ser(self.V), "m": ser(self.m)}


def _taylor_shift(T, d):
    out = []
    for j in range(5):
        acc = np.array(T[j], dtype=float)
        for k in range(j + 1, 5):
            t = np.asarray(T[k], dtype=float)
            for _ in range(k - j):
                t = t @ d
            acc = acc + t / math.factorial(k - j)
        out.append(float(acc) if j == 0 else acc)
    return tuple(out)


# -------------------------------------------------------- trig family

@dataclass(frozen=True)
class TrigFamily:
    """V = a0 + b0 + sum_k a_k X_k(x1) + b_k X_k(x2); m likewise with c, d.

    For N = 1 only the a and c coefficients enter.
    """

    N: int
    a: tuple = (0.0,) * 5
    b: tuple = (0.0,) * 5
    c: tuple = (1.0, 0.0, 0.0, 0.0, 0.0)
    d: tuple = (0.0,) * 5

    def __post_init__(self):
        if self.N not in (1, 2):
            raise ValueError("the trigonometric family supports N = 1 or 2")
        for name in "abcd":
            v = tuple(float(t) for t in getattr(self, name))
            if len(v) != 5:
                raise ValueError(f"coefficients {name} need 5 entries")
            object.__setattr__(self, name, v)
        if self.N == 1 and (any(self.b) or any(self.d)):
            raise ValueError("b and d must vanish for N = 1")

    @classmethod
    def make(cls, N: int, **coef):
        """Build from keywords like a0=1, c2=-0.01, d2=-0.01."""
        arr = {k: [0.0] * 5 for k in "abcd"}
        arr["c"][0] = 1.0
        for key, val in coef.items():
            if len(key) != 2 or key[0] not in "abcd" or not key[1].isdigit():
                raise ValueError(f"unknown coefficient {key!r}")
            arr[key[0]][int(key[1])] = float(val)
        return cls(N=N, **{k: tuple(v) for k, v in arr.items()})

    def _coef(self, f):
        return (self.a, self.b) if f == "V" else (self.c, self.d)

    def _axis_derivs(self, coef, xi):
        """[f^(j)] for j = 0..4 along one axis, constant excluded."""
        return [sum(coef[k] * eval_basis(k, xi, j) for k in range(1, 5))
                for j in range(5)]

    def _tensors(self, f, x):
        N = self.N
        cs = self._coef(f)
        axes = [self._axis_derivs(cs[i], x[i]) for i in range(N)]
        const = cs[0][0] + (cs[1][0] if N == 2 else 0.0)
        out = [float(const + sum(ax[0] for ax in axes))]
        for k in range(1, 5):
            T = np.zeros((N,) * k)
            for i in range(N):
                T[(i,) * k] = axes[i][k]
            out.append(T)
        return tuple(out)

    def table(self, x, lam) -> DerivativeTable:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return DerivativeTable(x0=x, lam=float(lam), V=self._tensors("V", x),
                               m=self._tensors("m", x))

    def _field(self, f, pts):
        cs = self._coef(f)
        out = cs[0][0] + (cs[1][0] if self.N == 2 else 0.0)
        out = np.full(pts[0].shape, out) if np.ndim(pts[0]) else out
        for i in range(self.N):
            for k in range(1, 5):
                if cs[i][k]:
                    out = out + cs[i][k] * eval_basis(k, pts[i])
        return out

    def values(self, pts):
        """(V, m) at points given as a sequence of N coordinate arrays."""
        return self._field("V", pts), self._field("m", pts)

    def is_zero_potential(self) -> bool:
        return not any(self.a) and not any(self.b)

    def to_dict(self) -> dict:
        d = {"family": "trig", "N": self.N, "a": list(self.a), "c": list(self.c)}
        if self.N == 2:
            d.update(b=list(self.b), d=list(self.d))
        return d


# -------------------------------------------------------- grid lattice

@dataclass(frozen=True)
class GridLattice:
    """Periodic samples of V and m on [-pi, pi)^N with n nodes per axis."""

    N: int
    V_samples: np.ndarray
    m_samples: np.ndarray
    period: float = TWO_PI

    def __post_init__(self):
        shp = np.shape(self.V_samples)
        if len(shp) != self.N or np.shape(self.m_samples) != shp or len(set(shp)) != 1:
            raise ValueError("samples must be equal-sided N-dimensional arrays")

    @property
    def n(self):
        return self.V_samples.shape[0]

    def _coeffs(self, arr):
        c = np.fft.fftn(arr) / arr.size
        n = self.n
        k = np.fft.fftfreq(n, d=1.0 / n) * (TWO_PI / self.period)
        if n % 2 == 0:
            k[n // 2] = 0.0  # drop the Nyquist mode from derivatives
        return c, k

    def _tensors(self, arr, x):
        c, k = self._coeffs(arr)
        N = self.N
        kv = np.fft.fftfreq(self.n, d=1.0 / self.n) * (TWO_PI / self.period)
        x0 = -self.period / 2

        def contract(mult):
            t = c
            for ax in range(N - 1, -1, -1):
                j = mult.get(ax, 0)
                if j:
                    vec = (1j * k) ** j * np.exp(1j * k * (x[ax] - x0))
                else:
                    vec = np.exp(1j * kv * (x[ax] - x0))
                t = t @ vec
            return float(np.real(t))

        out = [contract({})]
        for order in range(1, 5):
            T = np.zeros((N,) * order)
            for idx in itertools.combinations_with_replacement(range(N), order):
                mult = {}
                for i in idx:
                    mult[i] = mult.get(i, 0) + 1
                val = contract(mult)
                for perm in set(itertools.permutations(idx)):
                    T[perm] = val
            out.append(T)
        return tuple(out)

    def table(self, x, lam) -> DerivativeTable:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return DerivativeTable(x0=x, lam=float(lam), V=self._tensors(self.V_samples, x),
                               m=self._tensors(self.m_samples, x))

    def values(self, pts):
        """Trigonometric interpolation onto a tensor grid given per axis."""
        axes = [np.asarray(p).ravel() for p in _axes_of(pts, self.N)]
        return self._interp(self.V_samples, axes), self._interp(self.m_samples, axes)

    def _interp(self, arr, axes):
        kv = np.fft.fftfreq(self.n, d=1.0 / self.n) * (TWO_PI / self.period)
        c = np.fft.fftn(arr) / arr.size
        x0 = -self.period / 2
        t = c
        for ax in range(self.N):
            E = np.exp(1j * np.outer(axes[ax] - x0, kv))
            t = np.moveaxis(np.tensordot(E, t, axes=([1], [ax])), 0, ax)
        return np.real(t)

    def is_zero_potential(self) -> bool:
        return not np.any(self.V_samples)

    def to_dict(self) -> dict:
        return {"family": "grid", "N": self.N, "period": self.period,
                "V": self.V_samples.tolist(), "m": self.m_samples.tolist()}


def _axes_of(pts, N):
    """Recover 1-D axes from a sparse or dense meshgrid."""
    axes = []
    for i in range(N):
        p = np.asarray(pts[i])
        idx = [0] * p.ndim
        idx[i] = slice(None)
        axes.append(p[tuple(idx)] if p.ndim == N else p)
    return axes


# ---------------------------------------------------- callable lattice

@dataclass(frozen=True)
class CallableLattice:
    """V and m given as functions of a coordinate array of shape (..., N)."""

    N: int
    V: Callable = field(repr=False)
    m: Callable = field(repr=False)
    zero_potential: bool = False

    def _tensors(self, f, x):
        N = self.N
        out = [float(f(x))]
        scale = max(1.0, float(np.max(np.abs(x))))
        for order in range(1, 5):
            h = np.finfo(float).eps ** (1.0 / (order + 2)) * scale
            T = np.zeros((N,) * order)
            for idx in itertools.combinations_with_replacement(range(N), order):
                val = fd_partial(f, x, idx, h)
                for perm in set(itertools.permutations(idx)):
                    T[perm] = val
            out.append(T)
        return tuple(out)

    def table(self, x, lam) -> DerivativeTable:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return DerivativeTable(x0=x, lam=float(lam), V=self._tensors(self.V, x),
                               m=self._tensors(self.m, x))

    def values(self, pts):
        X = np.stack(np.broadcast_arrays(*pts), axis=-1)
        return np.asarray(self.V(X), dtype=float), np.asarray(self.m(X), dtype=float)

    def is_zero_potential(self) -> bool:
        return self.zero_potential


# second-order central stencils for derivative orders 1..4: (offsets, weights)
_STENCILS = {
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
    4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
}


def fd_partial(f, x, idx, h) -> float:
    """Mixed partial derivative of f at x along axes ``idx`` by tensor stencils."""
    counts = {}
    for i in idx:
        counts[i] = counts.get(i, 0) + 1
    axes = sorted(counts)
    stencils = [_STENCILS[counts[a]] for a in axes]
    total = 0.0
    for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
        pt = np.array(x, dtype=float)
        wgt = 1.0
        for a, s, j in zip(axes, stencils, combo):
            pt[a] += s[0][j] * h
            wgt *= s[1][j]
        total += wgt * float(f(pt))
    return total / h ** len(idx)


LatticeSpec = TrigFamily | GridLattice | CallableLattice | DerivativeTable


def lattice_from_dict(d: dict):
    """Inverse of ``to_dict`` for the serializable families."""
    fam = d.get("family")
    N = int(d["N"])
    if fam == "trig":
        return TrigFamily(N=N, a=tuple(d["a"]), b=tuple(d.get("b", [0.0] * 5)),
                          c=tuple(d["c"]), d=tuple(d.get("d", [0.0] * 5)))
    if fam == "grid":
        return GridLattice(N=N, V_samples=np.asarray(d["V"], dtype=float),
                           m_samples=np.asarray(d["m"], dtype=float),
                           period=float(d.get("period", TWO_PI)))
    if fam == "table":
        return DerivativeTable.from_arrays(d["x0"], d["lambda"], d["V"], d["m"])
    raise ValueError(f"unknown lattice family {fam!r}")


# ---------------------------------------------------------------- G

def G_derivatives(t: DerivativeTable):
    """G = (V + lambda) m^(-N/2) with its gradient and Hessian at t.x0."""
    N = t.N
    s = t.V[0] + t.lam
    m0 = t.m[0]
    gV, gm = t.V[1], t.m[1]
    HV, Hm = t.V[2], t.m[2]
    q = N / 2
    G = s * m0 ** (-q)
    grad = m0 ** (-q) * gV - q * s * m0 ** (-q - 1) * gm
    hess = (m0 ** (-q) * HV
            - q * m0 ** (-q - 1) * (np.outer(gV, gm) + np.outer(gm, gV))
            - q * s * m0 ** (-q - 1) * Hm
            + q * (q + 1) * s * m0 ** (-q - 2) * np.outer(gm, gm))
    return float(G), grad, hess


def eval_G(spec, lam: float, x):
    """Value, gradient and Hessian of G for any lattice representation."""
    t = spec.table(x, lam)
    if t.m[0] <= 0:
        raise ValueError("m must be positive at the evaluation point")
    return G_derivatives(t)


def balance_check(spec, lam: float, x0) -> float:
    """Norm of m grad V - (N/2)(V + lambda) grad m at x0."""
    t = spec.table(x0, lam)
    r = t.m[0] * t.V[1] - 0.5 * t.N * (t.V[0] + lam) * t.m[1]
    return float(np.linalg.norm(r))


@dataclass(frozen=True)
class CriticalPoint:
    """Critical point of G with its Hessian spectrum."""

    x0: np.ndarray
    grad_G: np.ndarray
    hess_G: np.ndarray
    eigenvalues: np.ndarray
    n_neg: int
    n_pos: int
    degenerate: bool
    iterations: int
    target: str = "G"


class NoConvergence(RuntimeError):
    pass


DEGENERACY_TOL = 1e-8


def find_critical_point(spec, lam: float, x_init, tol: float = 1e-10,
                        max_iter: int = 100, target: str = "G") -> CriticalPoint:
    """Damped Newton iteration on the gradient of G (or of m).

    Steps are halved until the gradient norm decreases.  The returned
    Hessian eigenvalues are those of the target function.
    """
    x = np.atleast_1d(np.asarray(x_init, dtype=float)).copy()

    def derivs(y):
        t = spec.table(y, lam)
        if target == "m":
            return t.m[1].copy(), t.m[2].copy()
        _, g, H = G_derivatives(t)
        return g, H

    g, H = derivs(x)
    it = 0
    while np.linalg.norm(g) >= tol:
        if it >= max_iter:
            raise NoConvergence(f"no critical point after {max_iter} iterations, "
                                f"|grad| = {np.linalg.norm(g):.3e}")
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -g
        t = 1.0
        gn = np.linalg.norm(g)
        while True:
            y = x + t * step
            g2, H2 = derivs(y)
            if np.linalg.norm(g2) < gn or t < 1e-8:
                break
            t *= 0.5
        x, g, H = y, g2, H2
        it += 1
    H = 0.5 * (H + H.T)
    ev = np.linalg.eigvalsh(H)
    big = np.max(np.abs(ev)) if ev.size else 0.0
    degenerate = bool(big == 0.0 or np.min(np.abs(ev)) < DEGENERACY_TOL * big)
    return CriticalPoint(x0=x, grad_G=g, hess_G=H, eigenvalues=ev,
                         n_neg=int(np.sum(ev < 0)), n_pos=int(np.sum(ev > 0)),
                         degenerate=degenerate, iterations=it, target=target)


# ------------------------------------------------------- sampling

def box_axes(N: int, n: int, period: float = TWO_PI):
    """Uniform periodic nodes [-period/2, period/2) for each axis."""
    x = -period / 2 + period * np.arange(n) / n
    return [x] * N


def sample(spec, n: int, period: float = TWO_PI):
    """(V, m) on the n^N periodic box centered at the origin."""
    if isinstance(spec, DerivativeTable):
        raise TypeError("a derivative table cannot be sampled on a box")
    axes = box_axes(spec.N, n, period)
    pts = np.meshgrid(*axes, indexing="ij")
    V, m = spec.values(pts)
    return np.broadcast_to(V, pts[0].shape).copy(), np.broadcast_to(m, pts[0].shape).copy()


def positivity_audit(spec, n: int = 64, period: float = TWO_PI) -> dict:
    """Minimum of m over one period by sampling plus local refinement.

    The result is a report: a nonpositive minimum is flagged, not raised.
    """
    _, m = sample(spec, n, period)
    axes = box_axes(spec.N, n, period)
    flat = np.argsort(m, axis=None)[:3]
    best_x, best = None, np.inf
    for f in flat:
        idx = np.unravel_index(f, m.shape)
        x0 = np.array([axes[i][j] for i, j in enumerate(idx)])
        fun = lambda y: float(np.asarray(spec.values([np.asarray(c) for c in y])[1]))
        res = optimize.minimize(fun, x0, method="BFGS")
        if res.fun < best:
            best, best_x = float(res.fun), res.x
    return {"min_m": best, "argmin": np.asarray(best_x).tolist(),
            "sample_min": float(m.min()), "positive": bool(best > 0)}
