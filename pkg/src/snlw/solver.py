"""Truncated stochastic NLW solved through ``u_N = Psi_N + v_N``.

The linear part ``Psi_N`` is stepped exactly (see :mod:`snlw.convolution`);
the remainder obeys

    v'' + omega^2 v = -sign * coupling * P_N H_k(Psi_N + v; sigma_N(t))

and is advanced with the exact free propagator and trapezoidal quadrature of
the Duhamel integral::

    X1 = c X + s V + (h/2) s G(t)
    V1 = -w sin(wh) X + c V + (h/2) (c G(t) + G(t+h))

with ``c = cos(wh)``, ``s = sin(wh)/w``. ``G(t+h)`` only needs ``X1``, so the
step is explicit and the forcing at the end of one step is reused at the start
of the next. Products are formed on a grid large enough that ``P_N`` of the
degree-``k`` polynomial is alias free.

All arrays carry a leading replica axis; replicas never interact.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import kernels
from .convolution import (DISPERSIONS, WAVE, ConvolutionState, omega_of, sigma_exact,
                          step_exact, zero_state)
from .hermite import hermite
from .lattice import (FrequencyLattice, GridField, SpectralField, dealiased_grid_size,
                      h_norm_modes, strichartz_norm, transform)
from .noise import ModePath, pack_modes

BLOWUP_THRESHOLD = 1e8
MAX_DEGREE = 8


class BlowupError(RuntimeError):
    """Raised when a field leaves the finite range; carries the blowup time."""

    def __init__(self, t, replicas):
        super().__init__(f"blowup at t={t:g} in replicas {list(replicas)}")
        self.t = t
        self.replicas = list(replicas)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one truncated SNLW run.

    ``sign = +1`` is the defocusing equation ``u'' - Lap u + u^k = xi``.
    ``coupling`` scales the nonlinearity (1 in the standard equation).
    ``noise = False`` drops the forcing, so ``sigma = 0`` and the solver reduces
    to the projected deterministic NLW. ``phi0`` and ``phi1`` are spectral
    fields of any radius; they are projected to ``N``.

    ``noise_N`` (default ``N``) truncates the noise more sharply than the
    solution. ``nonlinearity`` replaces the Hermite forcing by a callable
    ``(u_grid, sigma, t) -> forcing_grid`` evaluated on the dealiasing grid for
    degree ``k``.
    """

    k: int
    N: int
    dt: float
    T: float
    sign: int = 1
    dispersion: str = WAVE
    renormalized: bool = True
    noise: bool = True
    coupling: float = 1.0
    phi0: SpectralField | None = field(default=None, repr=False)
    phi1: SpectralField | None = field(default=None, repr=False)
    sample_every: int = 1
    hs: float = 0.0
    eps: float = 0.25
    strichartz_pair: tuple | None = None
    noise_N: int | None = None
    nonlinearity: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.k <= MAX_DEGREE or int(self.k) != self.k:
            raise ValueError(f"degree k must be an integer in [1, {MAX_DEGREE}], got {self.k}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 (defocusing) or -1 (focusing)")
        if self.dispersion not in DISPERSIONS:
            raise ValueError(f"dispersion must be one of {DISPERSIONS}")
        if self.N < 0 or not self.dt > 0 or self.T < self.dt * (1 - 1e-12):
            raise ValueError("need N >= 0, dt > 0 and T >= dt")
        wmax = float(omega_of(FrequencyLattice(self.N), self.dispersion).max())
        if wmax > 0 and self.dt > 0.5 / wmax * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} does not resolve the fastest mode (need dt <= {0.5 / wmax:g})")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.noise_N is not None and not 0 <= self.noise_N <= self.N:
            raise ValueError("noise_N must lie in [0, N]")

    @property
    def noise_radius(self):
        return self.N if self.noise_N is None else self.noise_N

    @property
    def steps(self):
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class _Propagator:
    cos_x: np.ndarray
    sin_over_w: np.ndarray
    msin_w: np.ndarray
    omega: np.ndarray


@lru_cache(maxsize=64)
def _propagator(N, h, dispersion):
    w = omega_of(FrequencyLattice(N), dispersion)
    x = w * h
    return _Propagator(np.cos(x), h * np.sinc(x / np.pi), -w * np.sin(x), w)


@lru_cache(maxsize=4096)
def _sigma_cached(N, t, dispersion):
    return sigma_exact(N, t, dispersion)


@dataclass(frozen=True, eq=False)
class SolverState:
    """``(v_hat, d_t v_hat)`` plus the convolution and cached forcing."""

    t: float
    X: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    conv: ConvolutionState | None = field(repr=False)
    sigma: float
    forcing: np.ndarray = field(repr=False)
    umax: np.ndarray = field(repr=False)
    fine_step: int = 0
    alive: np.ndarray = field(default=None, repr=False)
    blowup_time: np.ndarray = field(default=None, repr=False)


def _psi_modes(state_conv, R, K):
    if state_conv is None:
        return np.zeros((R, K), dtype=np.complex128)
    if state_conv.X.shape[1] < K:
        out = np.zeros((R, K), dtype=np.complex128)
        out[:, :state_conv.X.shape[1]] = state_conv.X
        return out
    return state_conv.X


def forcing(config, psi, v, sigma, t=0.0):
    """``-sign * coupling * P_N H_k(psi + v; sigma)`` on mode vectors (R, K),
    or ``P_N`` of ``config.nonlinearity`` when one is set.

    Also returns the grid maximum of ``|psi + v|`` per replica.
    """
    N = config.N
    M = dealiased_grid_size(N, config.k)
    tr = transform(N, M)
    u = tr.modes_to_grid(psi + v)
    with np.errstate(all="ignore"):
        if config.nonlinearity is None:
            Fg = (-config.sign * config.coupling) * kernels.hermite_eval(u, sigma, config.k)
        else:
            Fg = config.nonlinearity(u, sigma, t)
        umax = np.max(np.abs(u), axis=(-2, -1))
        umax = np.where(np.all(np.isfinite(u), axis=(-2, -1)), umax, np.inf)
        F = tr.grid_to_modes(Fg)
    return F, umax


def wick_nonlinearity(v, wick, k, sign):
    """``-sign * P_N sum_l C(k, l) :Psi^l: v^(k - l)`` pointwise on ``v``'s grid.

    ``wick[l]`` holds ``:Psi^l:`` for ``l = 0 .. k``, all evaluated with one
    variance and at one time. ``v``'s grid should be large enough to hold the
    degree-``k`` products without aliasing (see :func:`dealiased_grid_size`).
    """
    if len(wick) != k + 1:
        raise ValueError(f"need Wick powers 0..{k}, got {len(wick)}")
    sig = {w.sigma for w in wick}
    ts = {w.t for w in wick}
    if len(sig) > 1 or len(ts) > 1:
        raise ValueError("Wick powers disagree on variance or time")
    for ell, w in enumerate(wick):
        if w.ell != ell:
            raise ValueError(f"wick[{ell}] has order {w.ell}")
    total = np.zeros_like(v.values)
    for ell in range(k + 1):
        total += math.comb(k, ell) * wick[ell].values * v.values ** (k - ell)
    lat = v.lattice
    tr = transform(lat.N, lat.M)
    return GridField(lat, tr.modes_to_grid(-sign * tr.grid_to_modes(total)))


def initial_state(config, path):
    """State at ``t = 0`` for every replica of ``path``."""
    R = path.replicas.size
    lat = FrequencyLattice(config.N)
    K = lat.size
    X = np.zeros((R, K), dtype=np.complex128)
    V = np.zeros((R, K), dtype=np.complex128)
    for arr, f in ((X, config.phi0), (V, config.phi1)):
        if f is not None:
            m = f.modes()
            n = min(m.size, K)
            arr[:, :n] = m[:n]
    conv = None
    if config.noise:
        if path.N < config.noise_radius:
            raise ValueError(f"path radius {path.N} < noise radius {config.noise_radius}")
        conv = zero_state(path, config.noise_radius, config.dispersion)
    F, umax = forcing(config, _psi_modes(conv, R, K), X, 0.0)
    return SolverState(0.0, X, V, conv, 0.0, F, umax, 0,
                       np.isfinite(umax) & (umax <= BLOWUP_THRESHOLD), np.full(R, np.nan))


def _stride(config, path):
    m = config.dt / path.dt
    s = int(round(m))
    if s < 1 or abs(s - m) > 1e-9 * m:
        raise ValueError(f"solver dt={config.dt} is not a multiple of the path step {path.dt}")
    return s


def step(config, state, path, on_blowup="raise"):
    """One step of size ``config.dt``.

    Replicas whose field becomes non-finite or exceeds the blowup threshold get
    their blowup time recorded. With ``on_blowup="raise"`` a
    :class:`BlowupError` is raised; with ``"mask"`` they are frozen and the
    other replicas continue.
    """
    h = config.dt
    pr = _propagator(config.N, h, config.dispersion)
    X, V, G0 = state.X, state.V, state.forcing
    with np.errstate(all="ignore"):
        X1 = pr.cos_x * X + pr.sin_over_w * V + (0.5 * h) * pr.sin_over_w * G0
    conv = state.conv
    fine = state.fine_step
    t1 = state.t + h
    sigma = 0.0
    if conv is not None:
        stride = _stride(config, path)
        conv = step_exact(conv, path, fine, stride)
        fine += stride
        t1 = conv.t
        if config.renormalized:
            sigma = _sigma_cached(config.noise_radius, t1, config.dispersion)
    G1, umax = forcing(config, _psi_modes(conv, X.shape[0], X.shape[1]), X1, sigma, t1)
    with np.errstate(all="ignore"):
        V1 = pr.msin_w * X + pr.cos_x * V + (0.5 * h) * (pr.cos_x * G0 + G1)
    ok = np.isfinite(umax) & (umax <= BLOWUP_THRESHOLD)
    newly = state.alive & ~ok
    bt = state.blowup_time.copy()
    bt[newly] = t1
    if np.any(newly) and on_blowup == "raise":
        raise BlowupError(t1, np.nonzero(newly)[0])
    return SolverState(t1, X1, V1, conv, sigma, G1, umax, fine, state.alive & ok, bt)


def energy(config, state):
    """Discrete energy of ``v`` per replica.

    ``1/2 |d_t v|^2 + 1/2 |omega v|^2 + sign * coupling * mean(v^(k+1)) / (k+1)``;
    this is conserved by the projected deterministic equation.
    """
    lat = FrequencyLattice(config.N)
    w = lat.weights
    om = omega_of(lat, config.dispersion)
    kin = 0.5 * np.sum(w * np.abs(state.V) ** 2, axis=-1)
    pot = 0.5 * np.sum(w * om ** 2 * np.abs(state.X) ** 2, axis=-1)
    M = dealiased_grid_size(config.N, config.k)
    u = transform(config.N, M).modes_to_grid(state.X)
    k = config.k
    nl = config.sign * config.coupling * np.mean(u ** (k + 1), axis=(-2, -1)) / (k + 1)
    return kin + pot + nl


@dataclass
class Trajectory:
    """Samples of a run; arrays have shape ``(samples, replicas, ...)``."""

    config: SolverConfig
    times: np.ndarray
    v_hs: np.ndarray
    dv_hs1: np.ndarray
    u_heps: np.ndarray
    sigma: np.ndarray
    energy: np.ndarray | None
    blowup_time: np.ndarray
    final: SolverState
    v_modes: np.ndarray | None = None
    u_modes: np.ndarray | None = None
    forcing_modes: np.ndarray | None = None
    strichartz: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    @property
    def blowup(self):
        return bool(np.any(np.isfinite(self.blowup_time)))

    def running_norms(self):
        """sup_t ||v||_{H^s} and sup_t ||d_t v||_{H^{s-1}} per replica, plus the
        L^q_T L^r_x norm of ``v`` when a pair was configured."""
        out = {"sup_v_hs": np.nanmax(self.v_hs, axis=0), "sup_dv_hs1": np.nanmax(self.dv_hs1, axis=0)}
        if self.strichartz is not None:
            out["strichartz"] = self.strichartz
        return out

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["replica", "t", "v_hs", "u_heps", "sigma", "energy"])
            R = self.v_hs.shape[1]
            for r in range(R):
                for i, t in enumerate(self.times):
                    e = "" if self.energy is None else repr(float(self.energy[i, r]))
                    w.writerow([r, repr(float(t)), repr(float(self.v_hs[i, r])),
                                repr(float(self.u_heps[i, r])), repr(float(self.sigma[i])), e])


def solve(config, path=None, keep_modes=False, keep_forcing=False, with_energy=None):
    """Integrate to ``config.T``; never raises on blowup.

    Blown-up replicas are frozen at their blowup time (recorded in
    ``blowup_time``); the run stops early once every replica has blown up,
    in which case the trajectory is partial.
    """
    if path is None:
        if config.noise:
            raise ValueError("a noise path is required when noise is on")
        path = ModePath(0, config.N, config.dt, config.T)
    if config.noise and path.T < config.T * (1 - 1e-12):
        raise ValueError("path horizon shorter than T")
    if with_energy is None:
        with_energy = not config.noise
    lat = FrequencyLattice(config.N)
    st = initial_state(config, path)
    samples = []
    mode_samples, u_samples, forcing_samples, grids = [], [], [], []

    def record(s):
        psi = _psi_modes(s.conv, s.X.shape[0], s.X.shape[1])
        u = psi + s.X
        # blown-up replicas may hold overflowing values; their norms are inf
        with np.errstate(over="ignore", invalid="ignore"):
            row = (s.t, h_norm_modes(s.X, lat, config.hs), h_norm_modes(s.V, lat, config.hs - 1.0),
                   h_norm_modes(u, lat, -config.eps), s.sigma,
                   energy(config, s) if with_energy else None)
        samples.append(row)
        if keep_modes:
            mode_samples.append(s.X.copy())
            u_samples.append(u.copy())
        if config.strichartz_pair is not None:
            grids.append(transform(config.N, lat.M).modes_to_grid(s.X))

    record(st)
    if keep_forcing:
        forcing_samples.append(st.forcing.copy())
    for j in range(1, config.steps + 1):
        st = step(config, st, path, on_blowup="mask")
        if keep_forcing:
            forcing_samples.append(st.forcing.copy())
        if j % config.sample_every == 0 or j == config.steps:
            record(st)
        if not np.any(st.alive):
            break
    times = np.array([r[0] for r in samples])
    strich = None
    if config.strichartz_pair is not None:
        q, r = config.strichartz_pair
        g = np.stack(grids)
        strich = np.array([strichartz_norm(list(g[:, i]), q, r, config.dt * config.sample_every)
                           for i in range(g.shape[1])])
    traj = Trajectory(
        config=config,
        times=times,
        v_hs=np.stack([r[1] for r in samples]),
        dv_hs1=np.stack([r[2] for r in samples]),
        u_heps=np.stack([r[3] for r in samples]),
        sigma=np.array([r[4] for r in samples]),
        energy=np.stack([r[5] for r in samples]) if with_energy else None,
        blowup_time=st.blowup_time,
        final=st,
        v_modes=np.stack(mode_samples) if keep_modes else None,
        u_modes=np.stack(u_samples) if keep_modes else None,
        forcing_modes=np.stack(forcing_samples) if keep_forcing else None,
        strichartz=strich,
        flags={"unrenormalized": not config.renormalized, "noise": config.noise},
    )
    return traj


def final_u_modes(traj):
    st = traj.final
    return _psi_modes(st.conv, st.X.shape[0], st.X.shape[1]) + st.X


def refinement_gap(config, path, N, eps, t_star):
    """``||u_{2N}(t*) - u_N(t*)||_{H^-eps}`` per replica of ``path``.

    Both runs share ``path`` (radius >= 2N) and ``config.dt``. Replicas that
    blow up before ``t*`` in either run give ``nan``; the second return value
    flags them.
    """
    runs = []
    for radius in (N, 2 * N):
        cfg = replace(config, N=radius, T=t_star, sample_every=max(1, int(round(t_star / config.dt))))
        runs.append(solve(cfg, path))
    lat2 = FrequencyLattice(2 * N)
    u_small = final_u_modes(runs[0])
    u_big = final_u_modes(runs[1])
    d = u_big.copy()
    d[:, :u_small.shape[1]] -= u_small
    gap = h_norm_modes(d, lat2, -eps)
    blown = ~(runs[0].final.alive & runs[1].final.alive)
    gap = np.where(blown, np.nan, gap)
    return gap, blown


def random_initial_data(N, s, seed, replica=0):
    """Random data ``u_hat(n) = <n>^-(s+1) g_n`` with Hermitian-symmetric
    standard complex Gaussians ``g_n``; lies in ``H^s'`` for every ``s' < s``.

    Draws are keyed per mode, so data at radius ``N' < N`` is the projection of
    the data at radius ``N``.
    """
    lat = FrequencyLattice(N)
    z = kernels.mode_normals(seed, np.array([replica]), pack_modes(lat.half_modes), 0)[0, :, 0, :]
    g = (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)
    g[0] = z[0, 0]
    return SpectralField.from_modes(lat, lat.bracket ** (-(s + 1.0)) * g)


def mild_residual(traj):
    """Residual of the mild formulation at the sampled times, in ``H^-1``.

    Compares each stored ``v(t_m)`` with the free evolution of the data plus
    the Duhamel integral of the stored forcing, integrated by composite
    Simpson's rule (with a final 3/8 panel on odd step counts). Needs a run with
    ``keep_modes=True, keep_forcing=True, sample_every=1``.
    """
    cfg = traj.config
    if traj.v_modes is None or traj.forcing_modes is None or cfg.sample_every != 1:
        raise ValueError("need per-step modes and forcing")
    lat = FrequencyLattice(cfg.N)
    w = omega_of(lat, cfg.dispersion)
    G = traj.forcing_modes
    X0 = traj.v_modes[0]
    # d/dt v at 0 from the data
    V0 = np.zeros_like(X0)
    if cfg.phi1 is not None:
        m = cfg.phi1.modes()
        V0[:, : min(m.size, V0.shape[1])] = m[: V0.shape[1]]
    h = cfg.dt
    res = []
    for m in range(len(traj.times)):
        t = m * h
        if m < 2:
            res.append(np.zeros(X0.shape[0]))
            continue
        tau = np.arange(m + 1) * h
        kern = (t - tau)[:, None] * np.sinc(np.outer(t - tau, w) / np.pi)
        wts = _simpson_weights(m) * h
        duhamel = np.einsum("j,jk,jrk->rk", wts, kern, G[: m + 1])
        free = np.cos(w * t) * X0 + t * np.sinc(w * t / np.pi) * V0
        res.append(h_norm_modes(traj.v_modes[m] - free - duhamel, lat, -1.0))
    return np.array(res)


def _simpson_weights(m):
    w = np.zeros(m + 1)
    if m % 2 == 0:
        w[0:m + 1:2] += 2.0 / 3.0
        w[1:m:2] += 4.0 / 3.0
        w[0] -= 1.0 / 3.0
        w[m] -= 1.0 / 3.0
        return w
    ms = m - 3
    if ms > 0:
        w[: ms + 1] = _simpson_weights(ms)
    w[ms:] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    return w
