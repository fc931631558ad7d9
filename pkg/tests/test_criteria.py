import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikestab import criteria as cr
from spikestab.instances import LINE_CASES, REFERENCE_CASES, line_case, reference_case
from spikestab.lattice import DerivativeTable, TrigFamily

import oracles


def _sym(T):
    perms = list(itertools.permutations(range(T.ndim)))
    return sum(np.transpose(T, p) for p in perms) / len(perms)


def _zero_V_table(N, rng, lam=None):
    m = (float(rng.uniform(0.5, 2.0)), np.zeros(N)) + tuple(
        _sym(rng.normal(size=(N,) * k)) for k in range(2, 5))
    V = (0.0,) + tuple(np.zeros((N,) * k) for k in range(1, 5))
    lam = float(rng.uniform(0.5, 2.0)) if lam is None else lam
    return DerivativeTable.from_arrays(np.zeros(N), lam, V, m)


@pytest.mark.parametrize("n,p,expect", [
    (1, 1, cr.STABLE), (0, 0, cr.STABLE), (2, 1, cr.UNSTABLE), (1, 0, cr.UNSTABLE),
    (3, 1, cr.INCONCLUSIVE), (2, 0, cr.INCONCLUSIVE)])
def test_gss_rule(n, p, expect):
    assert cr.gss_verdict(n, p) == expect


def test_gss_rule_rejects_bad_input():
    with pytest.raises(ValueError):
        cr.gss_verdict(-1, 0)
    with pytest.raises(ValueError):
        cr.gss_verdict(1, 2)


def test_line_constants_match_oracle():
    c = cr.reference_constants(1)
    for name, val in zip(("C1", "C2", "C3"), c.as_tuple()):
        assert val == pytest.approx(oracles.FROZEN[name], rel=1e-5)


def test_constants_need_all_moments():
    from spikestab.radial import MomentTable
    with pytest.raises(KeyError):
        cr.compute_constants(MomentTable(N=1, values={}, errors={}))


@pytest.mark.parametrize("name", sorted(REFERENCE_CASES))
def test_reference_verdicts(name):
    _, _, thm, verdict = REFERENCE_CASES[name]
    v = cr.classify(reference_case(name), 1.0)
    assert (v.theorem, v.verdict) == (thm, verdict)
    assert v.theorem in v.row() and v.verdict in v.row()


@pytest.mark.parametrize("name,thm", [
    ("I", "1.2"), ("IIa", "1.3"), ("IIb", "1.3"), ("III_min", "1.4"), ("III_max", "1.4"),
    ("III_odd", "1.4"), ("zeroV", "1.1")])
def test_line_dispatch(name, thm):
    assert cr.classify(line_case(name), 1.0).theorem == thm


def test_constant_coefficients_are_degenerate():
    v = cr.classify(line_case("constant"), 1.0)
    assert v.verdict == cr.VIOLATED


def test_lambda_must_be_positive():
    with pytest.raises(ValueError):
        cr.classify(reference_case("IIa"), 0.0)


def test_hypothesis_checks_in_evaluators():
    t = reference_case("IIa").table([0.0, 0.0], 1.0)
    assert cr.evaluate_zero_potential(t).verdict == cr.VIOLATED
    assert cr.evaluate_sloped_potential(t).verdict == cr.VIOLATED
    assert cr.evaluate_flat_potential(t).verdict == cr.VIOLATED
    t3 = reference_case("III1a").table([0.0, 0.0], 1.0)
    assert cr.evaluate_curved_potential(t3).verdict == cr.VIOLATED


def test_sloped_case_off_critical_point_is_rejected():
    t = reference_case("I").table([0.3, 0.3], 1.0)
    v = cr.evaluate_sloped_potential(t)
    assert v.verdict == cr.VIOLATED and "critical" in v.diagnostics["reason"]


def test_sweep_carries_critical_point():
    res = cr.sweep(line_case("I"), [0.5, 1.0, 2.0])
    assert [lam for lam, _ in res] == [0.5, 1.0, 2.0]
    assert all(v.theorem == "1.2" for _, v in res)


@pytest.mark.parametrize("name", ["IIa", "IIb"])
def test_predicted_eigenvalues_for_quadratic_potential(name):
    spec = reference_case(name)
    pred = cr.predicted_small_eigenvalues(spec, 1.0, [0.0, 0.0])
    assert pred[0] >= pred[1]
    G, _, H = cr.G_derivatives(spec.table([0.0, 0.0], 1.0))
    np.testing.assert_allclose(sorted(pred), sorted(-np.linalg.eigvalsh(H) / G))


def test_leading_dpp_powers():
    v = cr.StabilityVerdict("1.3", 1, 1, cr.STABLE, {"leading_dpp_over_h2": 2.0})
    assert cr.leading_dpp(v, 0.1, 2) == pytest.approx(2.0 * 0.1 ** 4)
    v = cr.StabilityVerdict("1.4", 1, 1, cr.STABLE, {"H": -1.0})
    assert cr.leading_dpp(v, 0.5, 1) == pytest.approx(-(0.5 ** 5))
    assert cr.leading_dpp(cr.StabilityVerdict("none", None, None, cr.VIOLATED), 0.1, 1) is None


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), N=st.integers(1, 3))
def test_zero_potential_routes_coincide(seed, N):
    t = _zero_V_table(N, np.random.default_rng(seed))
    h = cr.H_terms(t, cr.reference_moments(N))
    v = cr.evaluate_zero_potential(t)
    if v.verdict == cr.VIOLATED:
        return
    assert h["H"] == pytest.approx(v.diagnostics["leading_dpp"], rel=1e-8, abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), theta=st.floats(0, 2 * np.pi))
def test_verdict_rotation_invariant(seed, theta):
    t = _zero_V_table(2, np.random.default_rng(seed))
    Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    a, b = cr.evaluate_flat_potential(t), cr.evaluate_flat_potential(t.rotated(Q))
    assert a.verdict == b.verdict
    assert b.diagnostics["H"] == pytest.approx(a.diagnostics["H"], rel=1e-8, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(c2=st.floats(-0.5, -0.01), a2=st.floats(0.1, 2.0), lam=st.floats(0.3, 3.0))
def test_quadratic_potential_minimum_is_stable(c2, a2, lam):
    # V minimum together with an m maximum: G has a minimum, Laplacian V > 0
    v = cr.classify(TrigFamily.make(1, a0=1.0, a2=a2, c2=c2), lam)
    assert v.theorem == "1.3" and v.verdict == cr.STABLE


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.2, 5.0))
def test_verdict_invariant_under_common_scaling(scale):
    # u -> scaled problem: (V + lambda, m) -> scale * (V + lambda, m)
    t = reference_case("III1a").table([0.0, 0.0], 1.0)
    a = cr.evaluate_flat_potential(t)
    b = cr.evaluate_flat_potential(t.scaled(scale))
    assert a.verdict == b.verdict
    assert np.sign(a.diagnostics["H"]) == np.sign(b.diagnostics["H"])
