"""Dimension constants, theorem evaluations and the stability verdict.

The slope d''(lambda) of the bound-state mass is predicted from derivatives
of V and m at the concentration point x0 and compared with the number of
positive eigenvalues of the linearized operator L_h.  The verdict follows the
rule: stable when the two counts agree, unstable when they differ by an odd
number, inconclusive otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import DerivativeTable, balance_check, find_critical_point, G_derivatives
from .radial import (MomentTable, RadialGrid, compute_moments, reference_moments, solve_ground_state,
                     sphere_area)

SIGN_TOL = 1e-6         # relative band around zero for sign decisions
GRAD_TOL = 1e-9         # |grad V| below this counts as zero
COND_MAX = 1e8          # Hessian condition number limit
STABLE, UNSTABLE, INCONCLUSIVE, VIOLATED = (
    "stable", "unstable", "inconclusive", "hypotheses-violated")
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class DimensionConstants:
    N: int
    C1: float
    C2: float
    C3: float
    sources: dict = field(default_factory=dict)

    def as_tuple(self):
        return (self.C1, self.C2, self.C3)


@dataclass(frozen=True)
class StabilityVerdict:
    theorem: str
    n_Lh: int | None
    p_dpp: int | str | None
    verdict: str
    diagnostics: dict = field(default_factory=dict)

    def row(self) -> str:
        n = "-" if self.n_Lh is None else str(self.n_Lh)
        p = "-" if self.p_dpp is None else str(self.p_dpp)
        return f"thm={self.theorem:<4} n={n:<3} p(d'')={p:<13} verdict={self.verdict}"


def compute_constants(moments: MomentTable) -> DimensionConstants:
    """C_{N,1..3} from the radial moments (sphere factors cancel)."""
    N = moments.N
    need = ("M_inv_pp", "M_phi0_wp", "M_wp1_r0", "M_wp1_r2", "M_wp1_r4")
    missing = [k for k in need if k not in moments.values]
    if missing:
        raise KeyError(f"missing moments {missing}")
    M = moments.values
    C1 = 2 * (N + 2) ** 2 * M["M_inv_pp"] / (N ** 2 * M["M_wp1_r4"])
    C2 = 4 * (N + 2) * M["M_phi0_wp"] / (N ** 2 * M["M_wp1_r4"])
    C3 = (N + 2) * M["M_wp1_r2"] ** 2 / (N * M["M_wp1_r0"] * M["M_wp1_r4"])
    return DimensionConstants(N=N, C1=float(C1), C2=float(C2), C3=float(C3),
                              sources={k: M[k] for k in need})


def reference_constants(N: int) -> DimensionConstants:
    return compute_constants(reference_moments(N))


def constants_refinement(N: int) -> dict:
    """C_N at the default radial grid and on a grid with half the spacing."""
    base = reference_constants(N)
    grid = RadialGrid.build().refined()
    fine = compute_constants(compute_moments(solve_ground_state(N, grid=grid)))
    rel = [abs(a - b) / abs(b) for a, b in zip(base.as_tuple(), fine.as_tuple())]
    return {"coarse": base.as_tuple(), "fine": fine.as_tuple(), "relative_change": rel}


def gss_verdict(n_Lh: int, p_dpp: int) -> str:
    """Stable if n(L_h) = p(d''), unstable if the difference is odd."""
    if n_Lh < 0 or p_dpp not in (0, 1):
        raise ValueError("need n_Lh >= 0 and p_dpp in {0, 1}")
    if n_Lh == p_dpp:
        return STABLE
    if (n_Lh - p_dpp) % 2:
        return UNSTABLE
    return INCONCLUSIVE


def _sign(value, scale):
    """+1, -1 or 0 when |value| is within the relative tolerance band."""
    if abs(value) <= SIGN_TOL * max(abs(scale), 1e-300):
        return 0
    return 1 if value > 0 else -1


def _spectrum(H):
    H = 0.5 * (H + H.T)
    ev = np.linalg.eigvalsh(H)
    big = np.max(np.abs(ev))
    small = np.min(np.abs(ev))
    cond = np.inf if small == 0 else big / small
    return ev, cond


def _violated(theorem, reason, **diag):
    diag["reason"] = reason
    return StabilityVerdict(theorem=theorem, n_Lh=None, p_dpp=None, verdict=VIOLATED,
                            diagnostics=diag)


def _full(moments, name):
    return sphere_area(moments.N) * moments.values[name]


def _eig_scales(t):
    G, _, _ = G_derivatives(t)
    return {"eig_scale_m": t.N / (2 * t.m[0]), "eig_scale_G": -1.0 / G}


# ------------------------------------------------ zero potential

def zero_potential_condition(t: DerivativeTable, consts: DimensionConstants) -> dict:
    """Both sides of the m-only condition and the leading d'' coefficient."""
    N = t.N
    m0 = t.m[0]
    Hm = t.m[2]
    lap = t.lap("m")
    glap = t.grad_lap("m")
    bilap = t.bilap("m")
    quad = float(glap @ np.linalg.solve(Hm, glap))
    frob2 = float(np.sum(Hm * Hm))
    lhs = m0 * bilap
    t1 = consts.C1 * lap ** 2
    t2 = consts.C2 * (N * frob2 - lap ** 2)
    t3 = consts.C3 * m0 * quad
    rhs = t1 + t2 + t3
    return {"LHS": lhs, "RHS": rhs, "margin": rhs - lhs,
            "scale": max(abs(lhs), abs(t1), abs(t2), abs(t3)),
            "quad_form": quad}


def evaluate_zero_potential(t: DerivativeTable, consts: DimensionConstants | None = None,
                   moments: MomentTable | None = None) -> StabilityVerdict:
    """Verdict for V = 0 at a nondegenerate critical point of m."""
    N = t.N
    consts = reference_constants(N) if consts is None else consts
    moments = reference_moments(N) if moments is None else moments
    if not t.is_zero_potential():
        return _violated("1.1", "potential is not identically zero")
    gm = t.m[1]
    if np.linalg.norm(gm) > GRAD_TOL:
        return _violated("1.1", "grad m(x0) is not zero", grad_m=gm.tolist())
    ev, cond = _spectrum(t.m[2])
    if not cond < COND_MAX:
        return _violated("1.1", "Hessian of m is degenerate", nu=ev.tolist())
    c = zero_potential_condition(t, consts)
    sgn = _sign(c["margin"], c["scale"])
    I4 = _full(moments, "M_wp1_r4")
    lead = I4 / (8 * (N + 2) ** 2 * t.m[0] ** (N / 2 + 2) * t.lam ** 3) * c["margin"]
    n_pos = int(np.sum(ev > 0))
    n_Lh = n_pos + 1
    diag = {"condition_lhs": c["LHS"], "condition_rhs": c["RHS"], "condition_margin": c["margin"],
            "leading_dpp": lead, "nu": ev.tolist(), **_eig_scales(t)}
    if sgn == 0:
        diag["reason"] = "condition margin within tolerance of zero"
        return StabilityVerdict("1.1", n_Lh, INDETERMINATE, INCONCLUSIVE, diag)
    p = 1 if sgn > 0 else 0
    if p == 1 and n_pos == 0:
        verdict = STABLE
    elif p == 1 and n_pos % 2 == 1:
        verdict = UNSTABLE
    else:
        verdict = INCONCLUSIVE
        diag["beyond_theorem"] = gss_verdict(n_Lh, p)
    return StabilityVerdict("1.1", n_Lh, p, verdict, diag)


# ------------------------------------------------ sloped potential

def evaluate_sloped_potential(t: DerivativeTable, moments: MomentTable | None = None) -> StabilityVerdict:
    """Verdict at a critical point of G where grad V does not vanish."""
    N = t.N
    moments = reference_moments(N) if moments is None else moments
    _, gG, HG = G_derivatives(t)
    if np.linalg.norm(gG) > 1e-8 * max(1.0, np.linalg.norm(t.V[1])):
        return _violated("1.2", "x0 is not a critical point of G", grad_G=gG.tolist())
    if np.linalg.norm(t.V[1]) <= GRAD_TOL:
        return _violated("1.2", "grad V(x0) vanishes")
    ev, cond = _spectrum(HG)
    if not cond < COND_MAX:
        return _violated("1.2", "Hessian of G is degenerate", nu=ev.tolist())
    gm = t.m[1]
    Q = float(gm @ np.linalg.solve(HG, gm))
    I0 = _full(moments, "M_wp1_r0")
    lead = -(N ** 2) / (4 * (N + 2)) * t.m[0] ** (-N - 2) * I0 * Q
    n_neg = int(np.sum(ev < 0))
    n_Lh = n_neg + 1
    scale = float(gm @ gm) / np.min(np.abs(ev))
    diag = {"Q": Q, "leading_dpp": lead, "nu": ev.tolist(), **_eig_scales(t)}
    sgn = _sign(Q, scale)
    if sgn == 0:
        diag["reason"] = "Q within tolerance of zero"
        return StabilityVerdict("1.2", n_Lh, INDETERMINATE, INCONCLUSIVE, diag)
    p = 1 if lead > 0 else 0
    return StabilityVerdict("1.2", n_Lh, p, gss_verdict(n_Lh, p), diag)


# ------------------------------------------------ curved potential

def evaluate_curved_potential(t: DerivativeTable, moments: MomentTable | None = None) -> StabilityVerdict:
    """Verdict when grad V(x0) = 0 and the Laplacian of V does not vanish."""
    N = t.N
    moments = reference_moments(N) if moments is None else moments
    if np.linalg.norm(t.V[1]) > GRAD_TOL:
        return _violated("1.3", "grad V(x0) is not zero")
    lapV = t.lap("V")
    if abs(lapV) <= _lap_tol(t):
        return _violated("1.3", "Laplacian of V vanishes; use the flat-potential case")
    _, _, HG = G_derivatives(t)
    ev, cond = _spectrum(HG)
    if not cond < COND_MAX:
        return _violated("1.3", "Hessian of G is degenerate", nu=ev.tolist())
    s = t.V[0] + t.lam
    J = _full(moments, "M_w2_r2")
    lead = J * s ** -3 * t.m[0] ** (-N / 2) * lapV / (2 * N)
    n_neg = int(np.sum(ev < 0))
    n_Lh = n_neg + 1
    p = 1 if lapV > 0 else 0
    diag = {"lap_V": lapV, "leading_dpp_over_h2": lead, "nu": ev.tolist(),
            **_eig_scales(t)}
    if n_neg == 0 and lapV > 0:
        verdict = STABLE
    elif (n_neg - p) % 2 == 0:
        verdict = UNSTABLE
    else:
        verdict = INCONCLUSIVE
    return StabilityVerdict("1.3", n_Lh, p, verdict, diag)


def _lap_tol(t):
    return GRAD_TOL + SIGN_TOL * float(np.linalg.norm(t.V[2]))


# ------------------------------------------------ flat potential

def shift_terms(t: DerivativeTable, moments: MomentTable) -> dict:
    """Peak shift x1 and the vector c0 (named shift_vector)."""
    N = t.N
    s = t.V[0] + t.lam
    m0 = t.m[0]
    _, _, HG = G_derivatives(t)
    I0 = _full(moments, "M_wp1_r0")
    I2 = _full(moments, "M_wp1_r2")
    J2 = _full(moments, "M_w2_r2")
    gV = t.grad_lap("V")
    gm = t.grad_lap("m")
    rhs = (-(N + 2) / (4 * N) / s * m0 ** (-N / 2) * (J2 / I0) * gV
           + 0.25 * m0 ** (-N / 2 - 1) * (I2 / I0) * gm)
    x1 = np.linalg.solve(HG, rhs)
    c0 = (-(m0 ** (-N / 2)) / s * (t.V[2] @ x1)
          - (N + 2) / (2 * N) * s ** -2 * m0 ** (-N / 2) * (J2 / I0) * gV
          + 0.25 / s * m0 ** (-N / 2 - 1) * (I2 / I0) * gm)
    return {"x1": x1, "shift_vector": c0, "hess_G": HG}


def H_terms(t: DerivativeTable, moments: MomentTable) -> dict:
    """H2, H3, H4 and their sum at x0 (V with vanishing gradient and Laplacian)."""
    N = t.N
    s = t.V[0] + t.lam
    m0 = t.m[0]
    q = N / 2
    F = lambda k: _full(moments, k)
    HV, Hm = t.V[2], t.m[2]
    lapm = t.lap("m")
    H2 = (3 / (N * (N + 2)) * s ** -5 * m0 ** -q * F("M_phi1_w") * np.sum(HV * HV)
          - 3 / (N * (N + 2)) * s ** -4 * m0 ** (-q - 1) * F("M_phi0_w") * np.sum(HV * Hm)
          + 1 / (4 * N ** 2) * s ** -3 * m0 ** (-q - 2) * F("M_inv_pp") * lapm ** 2
          + 1 / (2 * N * (N + 2)) * s ** -3 * m0 ** (-q - 2) * F("M_phi0_wp") * np.sum(Hm * Hm)
          - 1 / (2 * N ** 2 * (N + 2)) * s ** -3 * m0 ** (-q - 2) * F("M_phi0_wp") * lapm ** 2)
    sh = shift_terms(t, moments)
    x1, c0, HG = sh["x1"], sh["shift_vector"], sh["hess_G"]
    H3 = (1 / (2 * N) * s ** -3 * m0 ** -q * F("M_w2_r2") * float(t.grad_lap("V") @ x1)
          - 1 / (N + 2) * F("M_wp1_r0") * float(c0 @ np.linalg.solve(HG, c0)))
    H4 = (3 / (8 * N * (N + 2)) * s ** -4 * m0 ** -q * F("M_w2_r4") * t.bilap("V")
          - 1 / (8 * (N + 2) ** 2) * s ** -3 * m0 ** (-q - 1) * F("M_wp1_r4") * t.bilap("m"))
    parts = [abs(v) for v in (H2, H3, H4)]
    return {"H2": float(H2), "H3": float(H3), "H4": float(H4), "H": float(H2 + H3 + H4),
            "scale": max(parts), "x1": x1, "shift_vector": c0}


def evaluate_flat_potential(t: DerivativeTable, moments: MomentTable | None = None) -> StabilityVerdict:
    """Verdict when grad V(x0) = 0 and the Laplacian of V vanishes."""
    N = t.N
    moments = reference_moments(N) if moments is None else moments
    if np.linalg.norm(t.V[1]) > GRAD_TOL:
        return _violated("1.4", "grad V(x0) is not zero")
    if abs(t.lap("V")) > _lap_tol(t):
        return _violated("1.4", "Laplacian of V does not vanish; use the curved-potential case")
    _, gG, HG = G_derivatives(t)
    ev, cond = _spectrum(HG)
    if not cond < COND_MAX:
        return _violated("1.4", "Hessian of G is degenerate", nu=ev.tolist())
    h = H_terms(t, moments)
    n_neg = int(np.sum(ev < 0))
    n_Lh = n_neg + 1
    diag = {"H2": h["H2"], "H3": h["H3"], "H4": h["H4"], "H": h["H"],
            "x1": h["x1"].tolist(), "shift_vector": h["shift_vector"].tolist(),
            "nu": ev.tolist(), **_eig_scales(t)}
    sgn = _sign(h["H"], h["scale"])
    if sgn == 0:
        diag["reason"] = "H within tolerance of zero"
        return StabilityVerdict("1.4", n_Lh, INDETERMINATE, INCONCLUSIVE, diag)
    if sgn < 0:
        # conclusions are only asserted for H > 0
        diag["beyond_theorem"] = gss_verdict(n_Lh, 0)
        return StabilityVerdict("1.4", n_Lh, 0, INCONCLUSIVE, diag)
    if n_neg == 0:
        verdict = STABLE
    elif n_neg % 2 == 1:
        verdict = UNSTABLE
    else:
        verdict = INCONCLUSIVE
    return StabilityVerdict("1.4", n_Lh, 1, verdict, diag)


# ------------------------------------------------------------- dispatch

def classify(spec, lam: float, x_seed=None, moments: MomentTable | None = None,
             consts: DimensionConstants | None = None) -> StabilityVerdict:
    """Locate x0 from ``x_seed`` and apply the matching theorem."""
    N = spec.N
    if lam <= 0:
        raise ValueError("lambda must be positive")
    moments = reference_moments(N) if moments is None else moments
    if x_seed is None:
        x_seed = spec.x0 if isinstance(spec, DerivativeTable) else np.zeros(N)
    zeroV = spec.is_zero_potential()
    cp = find_critical_point(spec, lam, x_seed, target="m" if zeroV else "G")
    t = spec.table(cp.x0, lam)
    base = {"x0": cp.x0.tolist(), "balance_residual": balance_check(spec, lam, cp.x0),
            "newton_iterations": cp.iterations}
    if cp.degenerate:
        v = _violated("none", "degenerate critical point", nu=cp.eigenvalues.tolist())
        v.diagnostics.update(base)
        return v
    gV = np.linalg.norm(t.V[1])
    base["grad_V_norm"] = float(gV)
    if zeroV:
        consts = compute_constants(moments) if consts is None else consts
        v = evaluate_zero_potential(t, consts, moments)
    elif gV > GRAD_TOL:
        v = evaluate_sloped_potential(t, moments)
    else:
        if gV > 0:
            base["grad_V_treated_as_zero"] = float(gV)
        if abs(t.lap("V")) > _lap_tol(t):
            v = evaluate_curved_potential(t, moments)
        else:
            v = evaluate_flat_potential(t, moments)
    v.diagnostics.update(base)
    return v


def sweep(spec, lams, x_seed=None, moments: MomentTable | None = None) -> list:
    """Verdicts over a list of lambda values, re-locating x0 each time."""
    out = []
    seed = x_seed
    for lam in lams:
        v = classify(spec, lam, seed, moments)
        out.append((float(lam), v))
        if "x0" in v.diagnostics:
            seed = v.diagnostics["x0"]
    return out


def predicted_small_eigenvalues(spec, lam: float, x0) -> np.ndarray:
    """Limits of mu_h / h^2 for the N small eigenvalues of L_h (descending).

    Equals -G(x0)^{-1} times the eigenvalues of the Hessian of G, which for
    V = 0 coincides with N/(2 m(x0)) times those of the Hessian of m.
    """
    t = spec.table(x0, lam)
    G, _, HG = G_derivatives(t)
    ev = np.linalg.eigvalsh(0.5 * (HG + HG.T))
    return np.sort(-ev / G)[::-1]


def leading_dpp(v: StabilityVerdict, h: float, N: int) -> float | None:
    """Leading-order d''(lambda) at small h implied by a verdict's diagnostics."""
    d = v.diagnostics
    if v.theorem == "1.1" and "leading_dpp" in d:
        return d["leading_dpp"] * h ** (N + 4)
    if v.theorem == "1.2" and "leading_dpp" in d:
        return d["leading_dpp"] * h ** N
    if v.theorem == "1.3" and "leading_dpp_over_h2" in d:
        return d["leading_dpp_over_h2"] * h ** (N + 2)
    if v.theorem == "1.4" and "H" in d:
        return d["H"] * h ** (N + 4)
    return None
