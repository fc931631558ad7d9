"""Split-step evolution of perturbed bound states and orbital-distance probes.

The flow is i h psi_t = -(h^2 Lap psi - V psi + m |psi|^(p-1) psi), i.e.
psi_t = i h Lap psi + (i/h)(m |psi|^(p-1) - V) psi, for which the standing
wave e^(i lambda t/h) u_h is an exact solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from . import lattice as lat
from .boundstate import DiscreteBoundState, PeriodicBox, default_nodes, peak_location, solve_spike
from .radial import exponent

COLLAPSE_FACTOR = 1e3
STABLE_BELOW = 5.0
UNSTABLE_ABOVE = 10.0
# phase increment per step; N = 2 uses a larger value to fit desk-scale budgets
DEFAULT_SAFETY = {1: 0.025, 2: 0.1}


@dataclass
class WaveField:
    psi: np.ndarray = field(repr=False)
    t: float
    h: float
    box: PeriodicBox
    mass0: float = float("nan")

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("wave field has non-finite values")
        self.mass0 = mass(self.box, self.psi)


@dataclass(frozen=True)
class EvolutionTrace:
    times: np.ndarray
    distance: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    peak: np.ndarray
    collapsed: bool
    steps: int
    final: WaveField = field(repr=False)

    @property
    def mass_drift_rate(self) -> float:
        """max |M(t) - M(0)| / M(0) per unit time."""
        span = abs(self.times[-1] - self.times[0])
        rel = np.max(np.abs(self.mass - self.mass[0])) / self.mass[0]
        return float(rel / span) if span > 0 else 0.0

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def growth_factor(self) -> float:
        d0 = self.distance[0]
        return float(np.max(self.distance) / d0) if d0 > 0 else float("nan")

    def rows(self):
        """(time, distance, mass, energy) rows for CSV output."""
        return np.column_stack([self.times, self.distance, self.mass, self.energy])


# ------------------------------------------------------------ functionals

def mass(box: PeriodicBox, psi) -> float:
    return box.integrate(np.abs(psi) ** 2)


def h1_inner(box: PeriodicBox, h: float, f, g) -> complex:
    """int (h^2 grad f . conj(grad g) + f conj(g)) dx via Parseval."""
    fh = sfft.fftn(f)
    gh = sfft.fftn(g)
    w = 1.0 + h ** 2 * box.k2()
    return complex(np.sum(w * fh * np.conj(gh)) * box.cell / fh.size)


def h1_norm(box: PeriodicBox, h: float, f) -> float:
    return float(np.sqrt(max(h1_inner(box, h, f, f).real, 0.0)))


def orbital_distance(box: PeriodicBox, h: float, psi, u, u_norm2: float | None = None) -> float:
    """min over theta of ||psi - e^(i theta) u|| in the h-weighted H^1 norm.

    The optimal theta is the argument of the H^1 inner product <psi, u>.
    """
    nu = h1_inner(box, h, u, u).real if u_norm2 is None else u_norm2
    npsi = h1_inner(box, h, psi, psi).real
    cross = abs(h1_inner(box, h, psi, u))
    return float(np.sqrt(max(npsi + nu - 2 * cross, 0.0)))


def hamiltonian(box: PeriodicBox, h: float, psi, V, m, lam: float, p: float) -> float:
    """int [h^2 |grad psi|^2/2 + (V + lambda)|psi|^2/2 - m |psi|^(p+1)/(p+1)] dx."""
    ph = sfft.fftn(psi)
    kin = float(np.sum(box.k2() * np.abs(ph) ** 2)) * box.cell / ph.size
    a2 = np.abs(psi) ** 2
    pot = box.integrate((V + lam) * a2)
    nl = box.integrate(m * a2 ** ((p + 1) / 2))
    return 0.5 * h ** 2 * kin + 0.5 * pot - nl / (p + 1)


# ------------------------------------------------------------ evolution

def _check_step(dt, T, V, lam, h):
    if abs(dt) * float(np.max(np.abs(V + lam))) / h >= 0.5:
        raise ValueError("time step does not resolve the linear phase")
    n_steps = int(round(T / abs(dt)))
    if n_steps < 1 or not np.isclose(n_steps * abs(dt), T, rtol=1e-9, atol=0.0):
        raise ValueError("T must be a positive multiple of |dt|")
    return n_steps


def _rotate(psi, V, m, c, p):
    """psi *= exp(i c (m |psi|^(p-1) - V)) in place; |psi| is unchanged."""
    a = psi.real ** 2
    a += psi.imag ** 2
    if p == 3.0:
        pass
    elif p == 5.0:
        a *= a
    else:
        a **= (p - 1) / 2
    a *= m
    a -= V
    a *= c
    psi *= np.cos(a) + 1j * np.sin(a)


def _split_step(batch, box, h, V, m, p, dt, n_steps, every, on_sample):
    """Strang steps on a batch of fields (leading axis); calls on_sample(done, psi).

    Consecutive half kinetic steps are fused between samples.  Returns the
    final batch, the number of steps taken and whether on_sample asked to stop.
    """
    axes = tuple(range(1, batch.ndim))
    half = np.exp(-1j * h * box.k2() * dt / 2)
    full = half ** 2
    ph = sfft.fftn(batch, axes=axes) * half
    done = 0
    psi = batch
    while done < n_steps:
        chunk = min(every, n_steps - done)
        for j in range(chunk):
            psi = sfft.ifftn(ph, axes=axes)
            _rotate(psi, V, m, dt / h, p)
            ph = sfft.fftn(psi, axes=axes)
            ph *= full if j < chunk - 1 else half
        done += chunk
        psi = sfft.ifftn(ph, axes=axes)
        if on_sample(done, psi):
            return psi, done, True
        ph *= half
    return psi, done, False


def evolve(psi0: WaveField, spec, lam: float, dt: float, T: float,
           sample_every: float | None = None, reference=None, nonlinear: bool = True,
           fields=None) -> EvolutionTrace:
    """Strang split-step: half kinetic, exact pointwise phase, half kinetic.

    ``reference`` is the real profile the orbital distance is measured to
    (defaults to the initial field).  ``fields`` optionally gives the sampled
    (V, m) arrays; otherwise they are sampled from ``spec``.  Negative dt runs
    the flow backwards.
    """
    box, h = psi0.box, psi0.h
    p = exponent(box.N)
    V, m = lat.sample(spec, box.n, box.period) if fields is None else fields
    if not nonlinear:
        m = np.zeros_like(m)
    n_steps = _check_step(dt, T, V, lam, h)
    every = n_steps if sample_every is None else max(1, int(round(sample_every / abs(dt))))
    ref = np.asarray(psi0.psi if reference is None else reference)
    ref_n2 = h1_inner(box, h, ref, ref).real
    amp0 = float(np.max(np.abs(psi0.psi)))
    times, dist, mas, ener, peaks = [], [], [], [], []

    def record(done, batch):
        psi = batch[0]
        times.append(psi0.t + done * dt)
        dist.append(orbital_distance(box, h, psi, ref, ref_n2))
        mas.append(mass(box, psi))
        ener.append(hamiltonian(box, h, psi, V, m, lam, p))
        peaks.append(peak_location(box, np.abs(psi), method="quadratic"))
        amp = float(np.max(np.abs(psi)))
        return not np.isfinite(amp) or amp > COLLAPSE_FACTOR * amp0

    record(0, psi0.psi[None])
    psi, done, collapsed = _split_step(psi0.psi[None].copy(), box, h, V, m, p, dt,
                                       n_steps, every, record)
    final = WaveField(psi=psi[0], t=psi0.t + done * dt, h=h, box=box)
    return EvolutionTrace(times=np.array(times), distance=np.array(dist), mass=np.array(mas),
                          energy=np.array(ener), peak=np.array(peaks), collapsed=collapsed,
                          steps=done, final=final)


# ------------------------------------------------------------ probes

def random_perturbation(box: PeriodicBox, h: float, u, center, seed: int,
                        band: float = 3.0, width: float = 4.0) -> np.ndarray:
    """Real random field, band-limited to |k| h <= band and localized near center.

    The field is L2-orthogonal to u and has unit h-weighted H^1 norm.
    """
    rng = np.random.default_rng(seed)
    nh = sfft.fftn(rng.standard_normal(box.shape))
    nh[box.k2() * h ** 2 > band ** 2] = 0.0
    pert = np.real(sfft.ifftn(nh))
    r2 = sum(di ** 2 for di in box.min_image(center))
    pert *= np.exp(-r2 / (2 * (width * h) ** 2))
    pert -= box.integrate(pert * u) / box.integrate(u * u) * u
    return pert / h1_norm(box, h, pert)


@dataclass(frozen=True)
class ProbeResult:
    """Outcome of one seeded probe.

    ``trace.distance`` is the distance to the orbit of u_h.  ``twin_distance``
    is the distance to the orbit of the unperturbed run under the same
    scheme; the growth factor is taken from it, since time-stepping error
    alone moves the unperturbed run away from u_h.
    """

    trace: EvolutionTrace
    twin_distance: np.ndarray
    growth_factor: float
    orbit_growth_factor: float
    eps: float
    seed: int
    dt: float
    T: float
    label: str


def default_dt(state: DiscreteBoundState, safety: float | None = None) -> float:
    """Step that keeps the largest pointwise phase increment below ``safety``."""
    if safety is None:
        safety = DEFAULT_SAFETY.get(state.N, min(DEFAULT_SAFETY.values()))
    rate = float(np.max(np.abs(state.V + state.lam)))
    rate = max(rate, float(np.max(state.m * state.u ** (state.p - 1))))
    return safety * state.h / rate


def _label(g, collapsed):
    if collapsed or g > UNSTABLE_ABOVE:
        return "grows"
    if g < STABLE_BELOW:
        return "bounded"
    return "unclear"


def probe_ensemble(spec, lam: float, h: float, eps: float = 1e-3, periods: float = 50.0,
                   seeds=(0,), dt: float | None = None, state: DiscreteBoundState | None = None,
                   n: int | None = None, samples: int = 200) -> list:
    """Evolve u_h and u_h plus seeded perturbations together in one batch.

    Each perturbation has h-weighted H^1 size eps * ||u_h||; T is ``periods``
    periods 2 pi h / lambda of the standing-wave phase.
    """
    if state is None:
        n = default_nodes(h, per_h=6.0 if spec.N == 1 else 4.0) if n is None else n
        state = solve_spike(spec, lam, h, n=n)
    box, u, p = state.box, state.u, state.p
    T_total = periods * 2 * np.pi * h / lam
    dt = default_dt(state) if dt is None else dt
    steps = int(np.ceil(T_total / dt))
    dt = T_total / steps
    every = max(1, steps // samples)
    u_norm = h1_norm(box, h, u)
    size = eps * u_norm
    members = [u.astype(complex)]
    for seed in seeds:
        pert = random_perturbation(box, h, u, state.x_h, seed) if eps > 0 else 0.0
        members.append(u + size * pert)
    batch = np.stack(members)
    V, m = state.V, state.m
    _check_step(dt, steps * dt, V, lam, h)
    u_n2 = u_norm ** 2
    amp0 = float(np.max(np.abs(batch)))
    rec = {k: [] for k in ("t", "orbit", "twin", "mass", "energy", "peak")}

    def record(done, psi):
        rec["t"].append(done * dt)
        base = psi[0]
        rec["orbit"].append([orbital_distance(box, h, x, u, u_n2) for x in psi[1:]])
        rec["twin"].append([orbital_distance(box, h, x, base) for x in psi[1:]])
        rec["mass"].append([mass(box, x) for x in psi[1:]])
        rec["energy"].append([hamiltonian(box, h, x, V, m, lam, p) for x in psi[1:]])
        rec["peak"].append([peak_location(box, np.abs(x), method="quadratic") for x in psi[1:]])
        amp = float(np.max(np.abs(psi)))
        return not np.isfinite(amp) or amp > COLLAPSE_FACTOR * amp0

    record(0, batch)
    psi, done, collapsed = _split_step(batch, box, h, V, m, p, dt, steps, every, record)
    arr = {k: np.array(v) for k, v in rec.items()}
    out = []
    for j, seed in enumerate(seeds):
        trace = EvolutionTrace(times=arr["t"], distance=arr["orbit"][:, j],
                               mass=arr["mass"][:, j], energy=arr["energy"][:, j],
                               peak=arr["peak"][:, j], collapsed=collapsed, steps=done,
                               final=WaveField(psi=psi[j + 1], t=done * dt, h=h, box=box))
        twin = arr["twin"][:, j]
        if eps > 0:
            g = float(np.max(twin) / twin[0])
            g_orbit = trace.growth_factor()
        else:
            g = 1.0 + float(np.max(twin)) / u_norm
            g_orbit = 1.0 + float(np.max(trace.distance)) / u_norm
        out.append(ProbeResult(trace=trace, twin_distance=twin, growth_factor=g,
                               orbit_growth_factor=g_orbit, eps=eps, seed=seed, dt=dt,
                               T=T_total, label=_label(g, collapsed)))
    return out


def stability_probe(spec, lam: float, h: float, eps: float = 1e-3, periods: float = 50.0,
                    seed: int = 0, **kw) -> ProbeResult:
    """Single-seed probe; see ``probe_ensemble``."""
    return probe_ensemble(spec, lam, h, eps, periods, seeds=(seed,), **kw)[0]
