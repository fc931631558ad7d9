"""Independent reference computations for the one-dimensional ground state.

Nothing here imports the package.  The profile is the closed-form soliton,
sector problems use plain three-point differences on a uniform grid (the
l = 0 problem on the whole line, so no origin closure is involved), and
pure-w moments come from mpmath quadrature.
"""

import mpmath as mp
import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import spsolve

P1 = 5.0

# Values produced by constants_1d() and mp_moment(); recomputed by the slow test.
FROZEN = {
    "C1": -0.35313244685591766,
    "C2": -0.9815788835844111,
    "C3": 0.7881773875381032,
    "M_wp1_r0": 2.040524284763495,
    "M_wp1_r2": 0.23843582395772164,
    "M_wp1_r4": 0.1060470348022957,
    "M_inv_pp": -0.0020804804934194073,
    "M_phi0_wp": -0.008674460835722883,
    "M_phi1_w": -1.587822633198848,
}


def w_exact(r):
    return 3 ** 0.25 / np.sqrt(np.cosh(2 * np.asarray(r, dtype=float)))


def dw_exact(r):
    r = np.asarray(r, dtype=float)
    return -(3 ** 0.25) * np.sinh(2 * r) / np.cosh(2 * r) ** 1.5


def dilation_exact(r):
    """w/(p-1) + r w'/2, the preimage of w under L0."""
    return w_exact(r) / (P1 - 1) + np.asarray(r) * dw_exact(r) / 2


def mp_moment(k, power):
    """int_0^inf r^k w^power dr in extended precision."""
    mp.mp.dps = 30
    f = lambda r: r ** k * (mp.mpf(3) ** 0.25 / mp.sqrt(mp.cosh(2 * r))) ** power
    return float(mp.quad(f, [0, 2, 8, mp.inf]))


def _whole_line_inverse(f, R, h):
    x = np.arange(-R, R + h / 2, h)
    n = len(x)
    q = -1.0 + P1 * w_exact(x) ** (P1 - 1)
    A = diags([np.full(n - 1, 1 / h ** 2), -2 / h ** 2 + q, np.full(n - 1, 1 / h ** 2)],
              [-1, 0, 1], format="csc")
    return x, spsolve(A, f(x))


def _half_line_l2(f, R, h):
    r = np.arange(h, R, h)
    n = len(r)
    q = -1.0 + P1 * w_exact(r) ** (P1 - 1) - 2.0 / r ** 2
    A = diags([np.full(n - 1, 1 / h ** 2), -2 / h ** 2 + q, np.full(n - 1, 1 / h ** 2)],
              [-1, 0, 1], format="csc")
    return r, spsolve(A, f(r))


def _simpson(y, h):
    from scipy.integrate import simpson
    return simpson(y, dx=h)


def dense_moments(h=0.002, R=25.0):
    """Sector moments by uniform dense differences, extrapolated over h, h/2."""
    g = lambda x: x ** 2 * w_exact(x) ** P1
    gw = lambda x: x ** 2 * w_exact(x)

    def level(hh):
        x, u = _whole_line_inverse(g, R, hh)
        inv_pp = 0.5 * _simpson(g(x) * u, hh)
        r, phi = _half_line_l2(g, R, hh)
        r = np.concatenate([[0.0], r, [R]])
        phi = np.concatenate([[0.0], phi, [0.0]])
        phi0_wp = _simpson(g(r) * phi, hh)
        r, phi1 = _half_line_l2(gw, R, hh)
        r = np.concatenate([[0.0], r, [R]])
        phi1 = np.concatenate([[0.0], phi1, [0.0]])
        phi1_w = _simpson(gw(r) * phi1, hh)
        return np.array([inv_pp, phi0_wp, phi1_w])

    a, b = level(h), level(h / 2)
    return dict(zip(["M_inv_pp", "M_phi0_wp", "M_phi1_w"], (4 * b - a) / 3))


def constants_1d():
    """(C_{1,1}, C_{1,2}, C_{1,3}) from the closed form and the dense solves."""
    N = 1
    d = dense_moments()
    r0, r2, r4 = mp_moment(0, 6), mp_moment(2, 6), mp_moment(4, 6)
    c1 = 2 * (N + 2) ** 2 * d["M_inv_pp"] / (N ** 2 * r4)
    c2 = 4 * (N + 2) * d["M_phi0_wp"] / (N ** 2 * r4)
    c3 = (N + 2) * r2 ** 2 / (N * r0 * r4)
    return c1, c2, c3


if __name__ == "__main__":
    np.set_printoptions(precision=15)
    print("dense", dense_moments())
    print("r0,r2,r4", mp_moment(0, 6), mp_moment(2, 6), mp_moment(4, 6))
    print("C1", repr(constants_1d()))
