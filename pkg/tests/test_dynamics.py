import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikestab import boundstate as bs
from spikestab import dynamics as dyn
from spikestab.lattice import TrigFamily

FLAT = TrigFamily.make(1)


@pytest.fixture(scope="module")
def flat_state():
    return bs.solve_spike(FLAT, 1.0, 0.1, n=bs.default_nodes(0.1, per_h=6.0), x0=[0.0])


def _field(state, psi=None):
    return dyn.WaveField(psi=state.u if psi is None else psi, t=0.0, h=state.h, box=state.box)


def test_free_gaussian_dispersion():
    h, sigma, T = 0.1, 0.3, 1.0
    box = bs.PeriodicBox(N=1, n=512)
    (x,) = box.axes
    psi0 = np.exp(-x ** 2 / (2 * sigma ** 2))
    tr = dyn.evolve(dyn.WaveField(psi=psi0, t=0.0, h=h, box=box), FLAT, 1.0, 0.01, T,
                    nonlinear=False)
    s2 = sigma ** 2 + 2j * h * T
    # sum of periodic images of the free-space solution
    exact = sum(np.sqrt(sigma ** 2 / s2) * np.exp(-(x + 2 * np.pi * j) ** 2 / (2 * s2))
                for j in range(-4, 5))
    assert np.max(np.abs(tr.final.psi - exact)) < 1e-6


def test_wavefield_rejects_nonfinite():
    box = bs.PeriodicBox(N=1, n=16)
    with pytest.raises(ValueError):
        dyn.WaveField(psi=np.full(16, np.nan), t=0.0, h=0.1, box=box)


def test_step_checks(flat_state):
    f = _field(flat_state)
    with pytest.raises(ValueError):
        dyn.evolve(f, FLAT, 1.0, 0.1, 1.0)  # phase per step too large
    with pytest.raises(ValueError):
        dyn.evolve(f, FLAT, 1.0, 0.003, 0.01)  # T not a multiple of dt


def test_bound_state_orbit_and_mass(flat_state):
    st = flat_state
    T = 2 * np.pi * st.h  # one phase period
    runs = [dyn.evolve(_field(st), FLAT, 1.0, dt, T, sample_every=T / 8)
            for dt in (T / 800, T / 1600)]
    for tr in runs:
        assert tr.mass_drift_rate < 1e-10
    scheme = dyn.h1_norm(st.box, st.h, runs[0].final.psi - runs[1].final.psi) * 4 / 3
    assert np.max(runs[1].distance) < 10 * scheme
    # the standing wave returns to u after one period, up to the scheme error
    assert dyn.h1_norm(st.box, st.h, runs[1].final.psi - st.u) < 10 * scheme
    assert runs[1].distance[-1] < runs[0].distance[-1] / 3


def test_time_reversal(flat_state):
    st = flat_state
    pert = dyn.random_perturbation(st.box, st.h, st.u, st.x_h, seed=3)
    psi0 = st.u + 0.05 * pert
    T, dt = 0.2, 0.001
    fwd = dyn.evolve(_field(st, psi0), FLAT, 1.0, dt, T)
    back = dyn.evolve(fwd.final, FLAT, 1.0, -dt, T)
    # scheme error from step halving
    half = dyn.evolve(_field(st, psi0), FLAT, 1.0, dt / 2, T)
    scheme = np.max(np.abs(fwd.final.psi - half.final.psi))
    assert np.max(np.abs(back.final.psi - psi0)) < 10 * scheme


def test_hamiltonian_drift_second_order(flat_state):
    st = flat_state
    pert = dyn.random_perturbation(st.box, st.h, st.u, st.x_h, seed=1)
    psi0 = st.u + 0.05 * dyn.h1_norm(st.box, st.h, st.u) * pert
    T = 0.1
    drifts = []
    for dt in (T / 100, T / 200, T / 400):
        tr = dyn.evolve(_field(st, psi0), FLAT, 1.0, dt, T, sample_every=T / 10)
        drifts.append(tr.energy_drift)
    r1, r2 = drifts[0] / drifts[1], drifts[1] / drifts[2]
    assert 3.0 < r1 < 5.0 and 3.0 < r2 < 5.0


def test_collapse_is_flagged(flat_state, monkeypatch):
    # a supercritical-mass bump focuses; on a finite grid it cannot reach the
    # default threshold, so the detector is exercised with a lower one
    monkeypatch.setattr(dyn, "COLLAPSE_FACTOR", 2.0)
    st = bs.solve_spike(FLAT, 1.0, 0.1, n=768, x0=[0.0])
    T = 0.2
    dt = T / 4000
    tr = dyn.evolve(_field(st, 2.0 * st.u), FLAT, 1.0, dt, T, sample_every=10 * dt)
    assert tr.collapsed
    assert tr.steps < 4000
    assert np.max(np.abs(tr.final.psi)) > 2.0 * np.max(np.abs(2.0 * st.u))


def test_perturbation_properties(flat_state):
    st = flat_state
    a = dyn.random_perturbation(st.box, st.h, st.u, st.x_h, seed=5)
    b = dyn.random_perturbation(st.box, st.h, st.u, st.x_h, seed=5)
    c = dyn.random_perturbation(st.box, st.h, st.u, st.x_h, seed=6)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert np.isrealobj(a)
    assert dyn.h1_norm(st.box, st.h, a) == pytest.approx(1.0)
    assert abs(st.box.integrate(a * st.u)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(theta=st.floats(0, 2 * np.pi), seed=st.integers(0, 10 ** 6), amp=st.floats(0, 1))
def test_phase_minimization(theta, seed, amp):
    box = bs.PeriodicBox(N=1, n=64)
    (x,) = box.axes
    rng = np.random.default_rng(seed)
    u = np.exp(-x ** 2)
    psi = np.exp(1j * theta) * u + amp * (rng.normal(size=64) + 1j * rng.normal(size=64))
    d = dyn.orbital_distance(box, 0.1, psi, u)
    assert d <= dyn.h1_norm(box, 0.1, psi - u) + 1e-12
    for phi in np.linspace(0, 2 * np.pi, 7):
        assert d <= dyn.h1_norm(box, 0.1, psi - np.exp(1j * phi) * u) + 1e-12
    assert dyn.orbital_distance(box, 0.1, np.exp(1j * theta) * u, u) < 1e-6


def test_unperturbed_probe(flat_state):
    res = dyn.probe_ensemble(FLAT, 1.0, 0.1, eps=0.0, periods=2, seeds=(0,), state=flat_state)
    r = res[0]
    assert r.growth_factor == pytest.approx(1.0, abs=1e-12)
    # the distance to the u_h orbit is time-stepping error only
    half = dyn.probe_ensemble(FLAT, 1.0, 0.1, eps=0.0, periods=2, seeds=(0,),
                              state=flat_state, dt=r.dt / 2)[0]
    assert 1.0 <= half.orbit_growth_factor < r.orbit_growth_factor
    assert half.orbit_growth_factor - 1 < (r.orbit_growth_factor - 1) / 3


def test_stability_probe_wraps_ensemble(flat_state):
    r = dyn.stability_probe(FLAT, 1.0, 0.1, eps=1e-3, periods=1, seed=2, state=flat_state)
    assert r.seed == 2 and r.label in ("bounded", "unclear", "grows")
    assert r.trace.times[-1] == pytest.approx(r.T)
    assert r.trace.mass_drift_rate < 1e-10
