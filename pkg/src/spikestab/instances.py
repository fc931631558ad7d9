"""Named lattice instances of the trigonometric family used in checks and demos.

Each entry maps a name to (N, coefficients, expected theorem, expected
verdict).  Coefficients not listed are zero except c0 = 1.
"""

from __future__ import annotations

from .lattice import TrigFamily

REFERENCE_CASES = {
    "I": (2, dict(a0=2, c0=3, a1=0.1, c1=0.1, a2=2, c2=1, b2=2, d2=1), "1.2", "unstable"),
    "IIa": (2, dict(a0=1, c0=1, c2=-0.01, d2=-0.01, a2=1, b2=1), "1.3", "stable"),
    "IIb": (2, dict(a0=1, a2=1, b2=-0.05, c0=1, c2=-0.05, d2=1), "1.3", "unstable"),
    "III1a": (2, dict(a0=1, c0=1, c2=-0.01, d2=-0.01, c4=-0.01), "1.4", "stable"),
    # d2 small so that the second-order m terms do not dominate H
    "III1b": (2, dict(a0=1, c0=1, c2=-0.05, d2=0.05, c4=-0.05), "1.4", "unstable"),
    "III2s": (2, dict(a0=1, c0=1, c2=-0.01, d2=-0.01, a4=50, b4=50), "1.4", "stable"),
    "III2u": (2, dict(a0=1, c0=1, c2=-0.05, d2=0.05, a4=50, b4=50), "1.4", "unstable"),
}

# one-dimensional instances covering each case, used for d''(lambda) checks
LINE_CASES = {
    "I": dict(a0=1, a1=0.2, c1=0.2, a2=1, c2=0.5),
    "IIa": dict(a0=1, a2=1, c2=-0.01),
    "IIb": dict(a2=0.2, c2=1),
    "III_min": dict(a0=1, c2=-0.01, a4=50),
    "III_max": dict(a0=1, c2=0.05, a4=50),
    "III_odd": dict(a0=1, a3=1, a4=0.5, c2=-0.3),
    "zeroV": dict(c2=-0.2, c4=-0.5),
    "constant": dict(a0=0.5, c0=1.3),
}


def reference_case(name: str) -> TrigFamily:
    N, coef, _, _ = REFERENCE_CASES[name]
    return TrigFamily.make(N, **coef)


def line_case(name: str) -> TrigFamily:
    return TrigFamily.make(1, **LINE_CASES[name])
