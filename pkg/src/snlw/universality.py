"""Scaled microscopic nonlinearities and their Wick-cubic limit.

For an odd smooth ``f`` and scale ``eps`` (with ``gamma = 1``) the remainder
``v = u_eps - Psi_eps`` solves

    v'' - Lap v = eps^-2 (f'(0) + a) u + lam (H_3(u; s) + 3 s u) + Lam u^3

where ``u = Psi_eps + v``, ``s = sigma_eps(t)``, ``lam = f'''(0) / 6`` and

    Lam(u) = int_0^1 (1 - tau)^2 / 2 (f'''(tau eps u) - f'''(0)) d tau.

With the tuned counter-term ``a = -f'(0) - eps^2 s f'''(0) / 2`` the linear
terms cancel and the forcing is ``lam H_3(u; s) + Lam u^3``; as ``eps -> 0``
the last term vanishes and ``u_eps`` approaches the solution of
``u'' - Lap u = lam :u^3: + xi``. The scaled noise uses the sharp kernel, so
``Psi_eps = Psi_{N_eps}`` with ``N_eps = floor(1 / eps)`` and every arm is driven
by one keyed path.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .convolution import WAVE, sigma_exact
from .lattice import FrequencyLattice, dealiased_grid_size, h_norm_modes, transform
from .noise import ModePath
from .solver import SolverConfig, solve

GL_NODES = 8


# ---------------------------------------------------------------- catalog

def _sin0(x):
    return np.sin(x)


def _sin1(x):
    return np.cos(x)


def _sin2(x):
    return -np.sin(x)


def _sin3(x):
    return -np.cos(x)


def _sin4(x):
    return np.sin(x)


def _rat0(x):
    return x / (1.0 + x * x)


def _rat1(x):
    q = 1.0 + x * x
    return (1.0 - x * x) / q ** 2


def _rat2(x):
    q = 1.0 + x * x
    return (2.0 * x ** 3 - 6.0 * x) / q ** 3


def _rat3(x):
    q = 1.0 + x * x
    x2 = x * x
    return -6.0 * (x2 * x2 - 6.0 * x2 + 1.0) / q ** 4


def _rat4(x):
    q = 1.0 + x * x
    x2 = x * x
    return 24.0 * x * (x2 * x2 - 10.0 * x2 + 5.0) / q ** 5


def _cg0(x):
    return x ** 3 * np.exp(-x * x)


def _cg1(x):
    x2 = x * x
    return (3.0 * x2 - 2.0 * x2 * x2) * np.exp(-x2)


def _cg2(x):
    x2 = x * x
    return x * (6.0 - 14.0 * x2 + 4.0 * x2 * x2) * np.exp(-x2)


def _cg3(x):
    x2 = x * x
    return (6.0 - 54.0 * x2 + 48.0 * x2 ** 2 - 8.0 * x2 ** 3) * np.exp(-x2)


def _cg4(x):
    x2 = x * x
    return x * (-120.0 + 300.0 * x2 - 144.0 * x2 ** 2 + 16.0 * x2 ** 3) * np.exp(-x2)


class _Cubic:
    """Derivative ``order`` of ``c1 x + c3 x^3 / 6``; picklable."""

    def __init__(self, c1, c3, order):
        self.c1, self.c3, self.order = float(c1), float(c3), int(order)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.order == 0:
            return self.c1 * x + self.c3 * x ** 3 / 6.0
        if self.order == 1:
            return self.c1 + 0.5 * self.c3 * x * x
        if self.order == 2:
            return self.c3 * x
        if self.order == 3:
            return np.full_like(x, self.c3)
        return np.zeros_like(x)


@dataclass(frozen=True)
class NonlinearitySpec:
    """Odd nonlinearity with evaluators for ``f`` and its first four derivatives.

    ``d1_0`` and ``d3_0`` are the hand-checked values of ``f'(0)`` and
    ``f'''(0)``. ``bounded`` is False for polynomial surrogates.
    """

    name: str
    derivatives: tuple = field(repr=False)
    d1_0: float = 1.0
    d3_0: float = -1.0
    bounded: bool = True

    def __post_init__(self):
        if len(self.derivatives) != 5:
            raise ValueError("need evaluators for f and its first four derivatives")

    def __call__(self, x):
        return self.derivatives[0](x)

    def derivative(self, order, x):
        return self.derivatives[order](np.asarray(x, dtype=np.float64))

    @property
    def lam(self):
        """Limit coupling ``f'''(0) / 6``."""
        return self.d3_0 / 6.0


SIN = NonlinearitySpec("sin", (_sin0, _sin1, _sin2, _sin3, _sin4), 1.0, -1.0)
RATIONAL = NonlinearitySpec("rational", (_rat0, _rat1, _rat2, _rat3, _rat4), 1.0, -6.0)
CUBIC_GAUSS = NonlinearitySpec("cubic-gauss", (_cg0, _cg1, _cg2, _cg3, _cg4), 0.0, 6.0)


def cubic_taylor(spec):
    """Third Taylor polynomial of ``spec`` at 0; its remainder vanishes."""
    c1, c3 = spec.d1_0, spec.d3_0
    return NonlinearitySpec(spec.name + "-cubic", tuple(_Cubic(c1, c3, o) for o in range(5)),
                            c1, c3, bounded=False)


CATALOG = {s.name: s for s in (SIN, RATIONAL, CUBIC_GAUSS)}


def get_nonlinearity(name):
    """Catalog lookup; ``"<name>-cubic"`` gives the cubic Taylor surrogate."""
    if name in CATALOG:
        return CATALOG[name]
    if name.endswith("-cubic") and name[:-6] in CATALOG:
        return cubic_taylor(CATALOG[name[:-6]])
    raise KeyError(f"unknown nonlinearity {name!r}; known: {sorted(CATALOG)} (+ '-cubic')")


# ---------------------------------------------------------------- scaling

def noise_radius(eps, cutoff=1.0):
    """``floor(cutoff / eps)``, robust to representation error in ``eps``."""
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return int(math.floor(cutoff / eps * (1 + 1e-12)))


def scaled_noise_lattice(eps, cutoff=1.0):
    """Lattice of the sharply truncated scaled noise and its mode intensities.

    The noise kernel is the indicator of the ball of radius ``cutoff``, so the
    intensity is 1 on every retained mode.
    """
    lat = FrequencyLattice(noise_radius(eps, cutoff))
    return lat, np.ones(lat.size)


@dataclass(frozen=True)
class ScalingParams:
    """Scale-dependent constants of the scaled equation."""

    eps: float
    spec: NonlinearitySpec = field(repr=False)
    dispersion: str = WAVE
    gamma: float = 1.0

    @property
    def N_eps(self):
        return noise_radius(self.eps)

    @property
    def delta(self):
        return self.eps ** (self.gamma + 0.5)

    @property
    def lam(self):
        return self.spec.lam

    def sigma(self, t):
        return sigma_exact(self.N_eps, t, self.dispersion)

    def a(self, t):
        """Tuned counter-term at microscopic time ``t / eps``."""
        return self.counter_term(self.sigma(t))

    def counter_term(self, sigma):
        return -self.spec.d1_0 - self.eps ** 2 * sigma * self.spec.d3_0 / 2.0


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    tau = 0.5 * (x + 1.0)
    return tau, 0.5 * w * (1.0 - tau) ** 2 / 2.0


def taylor_coefficient(spec, eps, u, nodes=GL_NODES):
    """``Lam(u) = int_0^1 (1 - tau)^2 / 2 (f'''(tau eps u) - f'''(0)) d tau``
    by Gauss-Legendre quadrature, pointwise."""
    u = np.asarray(u, dtype=np.float64)
    tau, w = _gauss_legendre(nodes)
    out = np.zeros_like(u)
    d3 = spec.derivatives[3]
    for t_i, w_i in zip(tau, w):
        out += w_i * (d3(t_i * eps * u) - spec.d3_0)
    return out


class ScaledForcing:
    """Grid forcing of the scaled equation, in the expanded form above."""

    def __init__(self, params, nodes=GL_NODES):
        self.params = params
        self.nodes = nodes

    def __call__(self, u, sigma, t):
        p = self.params
        lin = p.eps ** -2 * (p.spec.d1_0 + p.counter_term(sigma))
        cubic = kernels.hermite_eval(u, float(sigma), 3) + 3.0 * sigma * u
        rem = taylor_coefficient(p.spec, p.eps, u, self.nodes) * u ** 3
        return lin * u + p.lam * cubic + rem


# ---------------------------------------------------------------- runs

def run_scaled(eps, spec, path, dt, T, N=None, noise=True, phi0=None, phi1=None,
               sample_every=1, dispersion=WAVE, keep_modes=True, nodes=GL_NODES):
    """Integrate the scaled equation; returns a solver trajectory of ``u_eps``.

    ``N`` (default ``N_eps``) is the resolution of ``v``; the noise is always
    truncated at ``N_eps``. Data are zero unless ``phi0``/``phi1`` are given.
    """
    params = ScalingParams(eps, spec, dispersion)
    N = params.N_eps if N is None else int(N)
    if noise and N < params.N_eps:
        raise ValueError(f"resolution {N} below noise radius {params.N_eps}")
    cfg = SolverConfig(k=3, N=N, dt=dt, T=T, dispersion=dispersion, noise=noise,
                       phi0=phi0, phi1=phi1, sample_every=sample_every,
                       noise_N=min(params.N_eps, N),
                       nonlinearity=ScaledForcing(params, nodes))
    if path is None:
        path = ModePath(0, 0, dt, T)
    return solve(cfg, path, keep_modes=keep_modes)


def limit_config(spec, N, dt, T, dispersion=WAVE, sample_every=1):
    """Solver configuration for ``u'' - Lap u = lam :u^3: + xi``."""
    lam = spec.lam
    sign = -1 if lam > 0 else 1
    return SolverConfig(k=3, N=N, dt=dt, T=T, sign=sign, coupling=abs(lam),
                        dispersion=dispersion, sample_every=sample_every)


def remainder_norm(traj, spec, eps, nodes=GL_NODES):
    """Grid sup of ``|R_eps|`` and of the ratio ``|Lam| / (eps (|Psi| + |v|))``.

    Returns two arrays of shape ``(samples, replicas)``. Points where
    ``Psi = v = 0`` carry ``Lam = 0`` and are skipped in the ratio.
    """
    if traj.u_modes is None:
        raise ValueError("trajectory must keep modes")
    N = traj.config.N
    tr = transform(N, dealiased_grid_size(N, 3))
    u = tr.modes_to_grid(traj.u_modes)
    v = tr.modes_to_grid(traj.v_modes)
    lam = taylor_coefficient(spec, eps, u, nodes)
    rsup = np.max(np.abs(lam * u ** 3), axis=(-2, -1))
    den = eps * (np.abs(u - v) + np.abs(v))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, np.abs(lam) / den, 0.0)
    return rsup, np.max(ratio, axis=(-2, -1))


def _sup_distance(a, b, lat, sigma):
    d = a.copy()
    d[..., : b.shape[-1]] -= b
    return np.max(h_norm_modes(d, lat, sigma), axis=0)


@dataclass
class UniversalityReport:
    """Per-replica sup distances to the limit, keyed by ``eps``."""

    spec: str
    seed: int
    replicas: np.ndarray
    sigma: float
    T: float
    N_ref: int
    distances: dict
    blowup: dict
    remainder: dict
    control: np.ndarray | None = None
    control_remainder: float | None = None

    def medians(self):
        out = {}
        for e, d in self.distances.items():
            ok = d[~self.blowup[e]]
            out[e] = float(np.median(ok)) if ok.size else math.nan
        return out

    def strictly_decreasing(self):
        """Medians decrease as ``eps`` decreases."""
        m = self.medians()
        vals = [m[e] for e in sorted(m, reverse=True)]
        return all(b < a for a, b in zip(vals, vals[1:]))


def compare_to_limit(eps_list, spec, seed, replicas, sigma=-0.25, T=0.25, dt=1.0 / 64,
                     N_ref=16, dispersion=WAVE, control=True, sample_every=1):
    """Sup-in-time ``H^sigma`` distance between each ``eps`` arm and the limit.

    All arms share one path of radius ``N_ref`` and run at resolution
    ``N_ref``. Replicas that blow up in either arm are flagged and excluded
    from medians. ``control`` adds the cubic surrogate at ``eps = 1 / N_ref``,
    whose distance is pure round-off.
    """
    if not sigma < 0:
        raise ValueError("distance exponent sigma must be negative")
    replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
    path = ModePath(seed, N_ref, dt, T, replicas)
    lat = FrequencyLattice(N_ref)
    lim = solve(limit_config(spec, N_ref, dt, T, dispersion, sample_every), path, keep_modes=True)
    lim_blown = ~lim.final.alive
    dist, blown, rem = {}, {}, {}
    for eps in eps_list:
        if noise_radius(eps) > N_ref:
            raise ValueError(f"eps={eps} needs noise radius above N_ref={N_ref}")
        tr = run_scaled(eps, spec, path, dt, T, N=N_ref, sample_every=sample_every,
                        dispersion=dispersion)
        b = lim_blown | ~tr.final.alive
        n = min(len(tr.times), len(lim.times))
        d = _sup_distance(tr.u_modes[:n], lim.u_modes[:n], lat, sigma)
        dist[eps] = np.where(b, np.nan, d)
        blown[eps] = b
        rsup, ratio = remainder_norm(tr, spec, eps)
        rem[eps] = (tr.times, rsup, ratio)
    ctrl = ctrl_rem = None
    if control:
        cspec = cubic_taylor(spec)
        eps_c = 1.0 / N_ref
        tr = run_scaled(eps_c, cspec, path, dt, T, N=N_ref, sample_every=sample_every,
                        dispersion=dispersion)
        ctrl = _sup_distance(tr.u_modes, lim.u_modes, lat, sigma)
        ctrl_rem = float(np.max(remainder_norm(tr, cspec, eps_c)[0]))
    return UniversalityReport(spec.name, int(seed), replicas, sigma, T, N_ref, dist, blown, rem,
                              ctrl, ctrl_rem)


def merge_reports(reports):
    """Concatenate replica chunks of one experiment in replica order."""
    reports = sorted(reports, key=lambda r: int(r.replicas[0]))
    first = reports[0]

    def cat(key):
        return {e: np.concatenate([getattr(r, key)[e] for r in reports]) for e in getattr(first, key)}

    rem = {e: (first.remainder[e][0],
               np.concatenate([r.remainder[e][1] for r in reports], axis=1),
               np.concatenate([r.remainder[e][2] for r in reports], axis=1))
           for e in first.remainder}
    ctrl = None if first.control is None else np.concatenate([r.control for r in reports])
    cr = None if first.control_remainder is None else max(r.control_remainder for r in reports)
    return UniversalityReport(first.spec, first.seed,
                              np.concatenate([r.replicas for r in reports]), first.sigma,
                              first.T, first.N_ref, cat("distances"), cat("blowup"), rem, ctrl, cr)


def write_distance_csv(report, path):
    """Columns: eps, seed, replica, distance, blowup."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "seed", "replica", "distance", "blowup"])
        for eps in report.distances:
            for r, d, b in zip(report.replicas, report.distances[eps], report.blowup[eps]):
                w.writerow([repr(float(eps)), report.seed, int(r), repr(float(d)), int(b)])
        if report.control is not None:
            for r, d in zip(report.replicas, report.control):
                w.writerow(["control", report.seed, int(r), repr(float(d)), 0])


def write_remainder_csv(report, path):
    """Columns: eps, t, sup_R, mg5_ratio (maxima over replicas)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "t", "sup_R", "mg5_ratio"])
        for eps, (times, rsup, ratio) in report.remainder.items():
            for i, t in enumerate(times):
                w.writerow([repr(float(eps)), repr(float(t)), repr(float(np.nanmax(rsup[i]))),
                            repr(float(np.nanmax(ratio[i])))])
