"""The stochastic convolution Psi_N: exact sampling, variance and Wick powers.

Each Fourier mode of ``Psi`` is a driven oscillator ``X'' = -omega^2 X + beta~'``
started at rest. Over a step ``h`` the triple ``(d beta, dX, dV)`` of driver
increment and response is jointly Gaussian with an explicitly integrable
covariance; sampling it through a 3x3 Cholesky factor makes each step exact in
law and keeps the driver increment consistent with the response.

Time is counted in *fine* steps of the driving path; a coarser step is the
composition of ``stride`` fine steps, so trajectories at different step sizes
share one underlying noise realization.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from . import kernels
from .hermite import hermite
from .lattice import FrequencyLattice, GridField, fast_even_size, transform
from .noise import ModePath

WAVE = "wave"
KLEIN_GORDON = "klein-gordon"
DISPERSIONS = (WAVE, KLEIN_GORDON)
MAX_WICK_ORDER = 8


def omega_of(lattice, dispersion=WAVE):
    """Oscillator frequencies of the half-plane modes."""
    if dispersion == WAVE:
        return lattice.norm
    if dispersion == KLEIN_GORDON:
        return lattice.bracket
    raise ValueError(f"unknown dispersion {dispersion!r}")


def _phi(x):
    """(2x - sin 2x) / (4x^3), continuous at 0."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    xs = x[small] ** 2
    out[small] = 1.0 / 3.0 - xs / 15.0 + 2.0 * xs ** 2 / 315.0 - xs ** 3 / 2835.0
    xl = x[~small]
    out[~small] = (2.0 * xl - np.sin(2.0 * xl)) / (4.0 * xl ** 3)
    return out


def _sinc(x):
    return np.sinc(np.asarray(x, dtype=np.float64) / np.pi)


def gamma_omega(omega, t):
    """``int_0^t (sin((t - s) w) / w)^2 ds`` elementwise in ``w`` (``t^3/3`` at 0)."""
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    omega = np.asarray(omega, dtype=np.float64)
    return t ** 3 * _phi(omega * t)


def gamma(n, t, dispersion=WAVE):
    """Variance density of ``Psi_hat(n, t)``: ``E |Psi_hat(n, t)|^2``."""
    n = np.asarray(n, dtype=np.float64)
    r2 = np.sum(n * n, axis=-1)
    w = np.sqrt(r2) if dispersion == WAVE else np.sqrt(1.0 + r2)
    out = gamma_omega(w, t)
    return float(out) if out.ndim == 0 else out


def cross_covariance_omega(omega, t, s):
    """``E[X(t) conj X(s)]`` per unit intensity for an oscillator at rest at 0."""
    if s > t:
        t, s = s, t
    omega = np.asarray(omega, dtype=np.float64)
    d = t - s
    out = np.empty_like(omega)
    z = omega == 0
    out[z] = d * s ** 2 / 2.0 + s ** 3 / 3.0
    w = omega[~z]
    out[~z] = (s * np.cos(d * w) / 2.0 - (np.sin((t + s) * w) - np.sin(d * w)) / (4.0 * w)) / w ** 2
    return out


def sigma_exact(N, t, dispersion=WAVE):
    """Pointwise variance ``sigma_N(t) = sum_{|n| <= N} gamma(n, t)``."""
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    if t == 0:
        return 0.0
    lat = FrequencyLattice(N)
    g = gamma_omega(omega_of(lat, dispersion), t)
    return math.fsum(lat.weights * g)


def covariance_kernel(N, t, z, dispersion=WAVE):
    """``K(z) = E[Psi_N(x + z, t) Psi_N(x, t)]`` for an array of offsets ``z`` (..., 2)."""
    lat = FrequencyLattice(N)
    g = lat.weights * gamma_omega(omega_of(lat, dispersion), t)
    z = np.asarray(z, dtype=np.float64)
    phase = 2.0 * np.pi * (z @ lat.half_modes.T.astype(np.float64))
    return np.cos(phase) @ g


@dataclass(frozen=True)
class StepCoefficients:
    cos_x: np.ndarray
    sin_over_w: np.ndarray
    msin_w: np.ndarray
    chol: np.ndarray  # (K, 6): L11, L21, L22, L31, L32, L33


def _step_coefficients(omega, h):
    x = omega * h
    cos_x = np.cos(x)
    sin_over_w = h * _sinc(x)
    msin_w = -omega * np.sin(x)
    # covariance of (beta, X, V) increments per unit intensity
    q11 = h ** 3 * _phi(x)
    q12 = 0.5 * h ** 2 * _sinc(x) ** 2
    q22 = h * (0.5 + 0.5 * _sinc(2.0 * x))
    c_bx = 0.5 * h ** 2 * _sinc(0.5 * x) ** 2
    c_bv = h * _sinc(x)
    l11 = np.full_like(x, math.sqrt(h))
    l21 = c_bx / l11
    l31 = c_bv / l11
    l22 = np.sqrt(np.maximum(q11 - l21 ** 2, 0.0))
    l32 = np.where(l22 > 0, (q12 - l21 * l31) / np.where(l22 > 0, l22, 1.0), 0.0)
    l33 = np.sqrt(np.maximum(q22 - l31 ** 2 - l32 ** 2, 0.0))
    chol = np.ascontiguousarray(np.stack([l11, l21, l22, l31, l32, l33], axis=1))
    return StepCoefficients(cos_x, sin_over_w, msin_w, chol)


@lru_cache(maxsize=128)
def step_coefficients(N, h, dispersion=WAVE):
    """Rotation and Cholesky factors for one exact step of size ``h`` (cached)."""
    return _step_coefficients(omega_of(FrequencyLattice(N), dispersion), float(h))


def step_covariance(omega, h):
    """The 3x3 covariance of ``(d beta, dX, dV)`` per unit intensity.

    Returns an array of shape (..., 3, 3); useful for checking the factor.
    """
    c = _step_coefficients(np.atleast_1d(np.asarray(omega, dtype=np.float64)), h).chol
    L = np.zeros(c.shape[:-1] + (3, 3))
    L[..., 0, 0], L[..., 1, 0], L[..., 1, 1] = c[..., 0], c[..., 1], c[..., 2]
    L[..., 2, 0], L[..., 2, 1], L[..., 2, 2] = c[..., 3], c[..., 4], c[..., 5]
    return L @ np.swapaxes(L, -1, -2)


@dataclass(frozen=True, eq=False)
class ConvolutionState:
    """Mode amplitudes ``(Psi_hat, d_t Psi_hat)`` for a batch of replicas."""

    N: int
    X: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    step: int = 0
    dt: float = 1.0
    dispersion: str = WAVE

    @property
    def t(self):
        return self.step * self.dt

    @property
    def lattice(self):
        return FrequencyLattice(self.N)

    @property
    def replicas(self):
        return self.X.shape[0]

    def restrict(self, radius):
        K = FrequencyLattice(self.N).count(radius)
        return ConvolutionState(min(self.N, radius), self.X[:, :K], self.V[:, :K], self.step,
                                self.dt, self.dispersion)


def zero_state(path, N=None, dispersion=WAVE):
    N = path.N if N is None else N
    K = FrequencyLattice(N).size
    z = np.zeros((path.replicas.size, K), dtype=np.complex128)
    return ConvolutionState(N, z, z.copy(), 0, path.dt, dispersion)


def step_exact(state, path, j, stride=1):
    """Advance ``state`` by ``stride`` fine steps of ``path`` starting at step ``j``.

    ``path`` may have a larger radius than the state; only the state's modes
    are drawn, which reproduces the restricted path exactly.
    """
    if j != state.step:
        raise ValueError(f"state is at step {state.step}, asked to step from {j}")
    if path.dt != state.dt or path.N < state.N:
        raise ValueError("path does not match the state's step size or radius")
    K = state.X.shape[1]
    co = step_coefficients(state.N, path.dt, state.dispersion)
    scale = path.scale[:K]
    X, V = state.X, state.V
    for i in range(stride):
        z = path.normals(j + i, count=K)
        X, V, _ = kernels.oscillator_step(X, V, z, scale, co.cos_x, co.sin_over_w, co.msin_w, co.chol)
    return ConvolutionState(state.N, X, V, j + stride, state.dt, state.dispersion)


def sample_psi(N, t, seed, replicas, dispersion=WAVE):
    """``Psi_N(t)`` for many replicas by a single exact step of length ``t``."""
    path = ModePath(seed, N, t, t, replicas)
    return step_exact(zero_state(path, dispersion=dispersion), path, 0)


def realize(state, replica=0, M=None):
    """Real grid field of replica ``replica`` of ``state``."""
    lat = FrequencyLattice(state.N, M or 0)
    return GridField(lat, transform(lat.N, lat.M).modes_to_grid(state.X[replica]))


def realize_batch(modes, N, M=None):
    """Grid values ``(R, M, M)`` for mode vectors ``(R, K)`` of radius ``N``."""
    lat = FrequencyLattice(N, M or 0)
    return transform(lat.N, lat.M).modes_to_grid(modes)


def point_values(modes, N, points):
    """Evaluate real fields given by half-plane mode vectors at ``points`` (P, 2).

    Returns an array of shape ``(R, P)``.
    """
    lat = FrequencyLattice(N)
    modes = np.atleast_2d(modes)
    K = modes.shape[1]
    e = np.exp(2j * np.pi * (np.asarray(points, dtype=np.float64) @ lat.half_modes[:K].T.astype(np.float64)))
    w = lat.weights[:K]
    return np.real((modes * w) @ e.T)


@dataclass(frozen=True, eq=False)
class WickField(GridField):
    """Grid values of ``H_ell(Psi; sigma)`` tagged with ``(ell, sigma)``."""

    ell: int = 1
    sigma: float = 0.0
    t: float | None = None


def wick_monomial(field, ell, sigma, t=None):
    """Pointwise Wick power ``:field^ell:`` with variance ``sigma``."""
    if not 0 <= ell <= MAX_WICK_ORDER:
        raise ValueError(f"Wick order must be in [0, {MAX_WICK_ORDER}], got {ell}")
    return WickField(field.lattice, hermite(ell, field.values, sigma), ell=ell, sigma=float(sigma), t=t)


def mc_stats(samples):
    """Mean and standard error of a 1-d sample, with compensated summation."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    n = s.size
    mean = math.fsum(s) / n
    var = math.fsum((s - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return mean, math.sqrt(var / n)


def replica_chunks(replicas, chunk):
    replicas = np.asarray(replicas, dtype=np.int64)
    for i in range(0, replicas.size, chunk):
        yield replicas[i:i + chunk]


def psi_point_samples(N, t, points, seed, replicas, dispersion=WAVE, chunk=512):
    """Samples of ``Psi_N(x, t)`` at ``points``, shape ``(R, P)``."""
    out = []
    for reps in replica_chunks(replicas, chunk):
        st = sample_psi(N, t, seed, reps, dispersion)
        out.append(point_values(st.X, N, points))
    return np.concatenate(out, axis=0)


def variance_mc(N, t, seed, replicas, x=(0.0, 0.0), dispersion=WAVE):
    """Monte Carlo estimate of ``E Psi_N(x, t)^2``; returns (mean, se)."""
    vals = psi_point_samples(N, t, [x], seed, replicas, dispersion)[:, 0]
    return mc_stats(vals ** 2)


@dataclass(frozen=True)
class WickCovarianceReport:
    ell: int
    empirical: float
    closed_form: float
    se: float

    @property
    def z(self):
        if self.se == 0:
            return 0.0 if self.empirical == self.closed_form else math.inf
        return (self.empirical - self.closed_form) / self.se


def wick_covariance_check(N, ell, t, x, y, replicas, seed=0, dispersion=WAVE):
    """Compare ``E[:Psi^ell(x)::Psi^ell(y):]`` with ``ell! K(x - y)^ell``."""
    if np.ndim(replicas) == 0:
        replicas = np.arange(int(replicas))
    if len(replicas) < 100:
        raise ValueError("need at least 100 replicas")
    sig = sigma_exact(N, t, dispersion)
    vals = psi_point_samples(N, t, [x, y], seed, replicas, dispersion)
    prod = hermite(ell, vals[:, 0], sig) * hermite(ell, vals[:, 1], sig)
    mean, se = mc_stats(prod)
    K = float(covariance_kernel(N, t, np.subtract(x, y), dispersion))
    return WickCovarianceReport(ell, mean, math.factorial(ell) * K ** ell, se)


@dataclass(frozen=True)
class HypercontractivityReport:
    k: int
    p: float
    lp: float
    lp_se: float
    l2: float
    bound: float

    @property
    def passed(self):
        return self.lp <= self.bound + 3.0 * self.lp_se


def lp_norm_with_se(samples, p):
    """Empirical ``(E|S|^p)^(1/p)`` and its delta-method standard error."""
    m, se = mc_stats(np.abs(samples) ** p)
    norm = m ** (1.0 / p)
    return norm, se * norm / (p * m) if m > 0 else 0.0


def hypercontractivity_check(samples, k, p):
    """Certificate ``||S||_p <= (p-1)^(k/2) ||S||_2`` on chaos-k samples."""
    from .hermite import hypercontractivity_bound

    lp, lp_se = lp_norm_with_se(samples, p)
    l2 = math.sqrt(mc_stats(np.asarray(samples) ** 2)[0])
    return HypercontractivityReport(k, p, lp, lp_se, l2, hypercontractivity_bound(k, p, l2))


# --- Cauchy gaps in H^{-eps} --------------------------------------------------

def gap_grid_size(ell, radius):
    """Grid on which ``H_ell`` of a radius-``radius`` field is resolved without aliasing."""
    return fast_even_size(2 * ell * radius + 2)


def grid_h_norm_sq(values, s):
    """``||g||^2_{H^s}`` from real grid values, batched over leading axes.

    Every Fourier mode the grid resolves is included.
    """
    values = np.asarray(values, dtype=np.float64)
    M = values.shape[-1]
    A = sfft.rfft2(values, axes=(-2, -1)) / float(M * M)
    k1 = sfft.fftfreq(M, 1.0 / M)
    k2 = np.arange(M // 2 + 1, dtype=np.float64)
    w = (1.0 + k1[:, None] ** 2 + k2[None, :] ** 2) ** s
    mult = np.full(M // 2 + 1, 2.0)
    mult[0] = 1.0
    if M % 2 == 0:
        mult[-1] = 1.0
    return np.sum(np.abs(A) ** 2 * w * mult, axis=(-2, -1))


def grid_bessel_max(values, s):
    """Grid maximum of ``|<grad>^s g|`` (the W^{s,inf} estimator), batched."""
    values = np.asarray(values, dtype=np.float64)
    M = values.shape[-1]
    A = sfft.rfft2(values, axes=(-2, -1))
    k1 = sfft.fftfreq(M, 1.0 / M)
    k2 = np.arange(M // 2 + 1, dtype=np.float64)
    A *= (1.0 + k1[:, None] ** 2 + k2[None, :] ** 2) ** (0.5 * s)
    out = sfft.irfft2(A, s=(M, M), axes=(-2, -1))
    return np.max(np.abs(out), axis=(-2, -1))


def exact_cauchy_gap(ell, N, M, eps, t, dispersion=WAVE):
    """``E ||:Psi_M^ell: - :Psi_N^ell:||^2_{H^-eps}`` for path-coupled fields.

    For coupled fields ``E|D_hat(n)|^2 = ell! (g_M^{*ell} - g_N^{*ell})(n)``
    where ``g_R`` is ``gamma`` restricted to ``|n| <= R`` and ``*ell`` denotes
    ell-fold lattice convolution, computed here by FFT.
    """
    if M <= N:
        if M == N:
            return 0.0
        raise ValueError("need M > N")
    G = gap_grid_size(ell, M)
    dens = []
    for R in (M, N):
        lat = FrequencyLattice(R, G)
        g = gamma_omega(omega_of(lat, dispersion), t).astype(np.complex128)
        K = transform(R, G).modes_to_grid(g)
        dens.append(K ** ell)
    A = sfft.rfft2(dens[0] - dens[1]) / float(G * G)
    k1 = sfft.fftfreq(G, 1.0 / G)
    k2 = np.arange(G // 2 + 1, dtype=np.float64)
    w = (1.0 + k1[:, None] ** 2 + k2[None, :] ** 2) ** (-eps)
    mult = np.full(G // 2 + 1, 2.0)
    mult[0] = 1.0
    mult[-1] = 1.0
    return math.factorial(ell) * math.fsum((np.real(A) * w * mult).ravel())


def cauchy_gap_samples(ell, N, M, eps, t, seed, replicas, dispersion=WAVE, grid=None, chunk=8):
    """Per-replica ``||:Psi_M^ell: - :Psi_N^ell:||^2_{H^-eps}`` and the
    W^{-eps,inf} estimator squared; returns two arrays of shape (R,)."""
    G = grid or gap_grid_size(ell, M)
    sM = sigma_exact(M, t, dispersion)
    sN = sigma_exact(N, t, dispersion)
    KN = FrequencyLattice(M).count(N)
    h_out, w_out = [], []
    for reps in replica_chunks(replicas, chunk):
        st = sample_psi(M, t, seed, reps, dispersion)
        uM = realize_batch(st.X, M, G)
        uN = realize_batch(st.X[:, :KN], N, G)
        d = hermite(ell, uM, sM) - hermite(ell, uN, sN)
        h_out.append(grid_h_norm_sq(d, -eps))
        w_out.append(grid_bessel_max(d, -eps) ** 2)
    return np.concatenate(h_out), np.concatenate(w_out)


@dataclass(frozen=True)
class CauchyGapReport:
    ell: int
    N: int
    M: int
    eps: float
    t: float
    gap: float
    se: float
    exact: float
    winf: float
    winf_se: float


def cauchy_gap(ell, N, M, eps, t, replicas, seed=0, dispersion=WAVE, grid=None):
    """Monte Carlo Cauchy gap between Wick powers at radii ``M > N``."""
    if M < N:
        raise ValueError("need M >= N")
    if np.ndim(replicas) == 0:
        replicas = np.arange(int(replicas))
    if M == N:
        return CauchyGapReport(ell, N, M, eps, t, 0.0, 0.0, 0.0, 0.0, 0.0)
    h, w = cauchy_gap_samples(ell, N, M, eps, t, seed, replicas, dispersion, grid)
    gap, se = mc_stats(h)
    wi, wse = mc_stats(w)
    return CauchyGapReport(ell, N, M, eps, t, gap, se, exact_cauchy_gap(ell, N, M, eps, t, dispersion), wi, wse)


# --- time regularity ----------------------------------------------------------

def exact_time_increment(ell, N, eps, t, h, dispersion=WAVE):
    """``E ||:Psi_N^ell(t+h): - :Psi_N^ell(t):||^2_{H^-eps}`` in closed form."""
    G = gap_grid_size(ell, N)
    lat = FrequencyLattice(N, G)
    w = omega_of(lat, dispersion)
    tr = transform(N, G)
    Ka = tr.modes_to_grid(gamma_omega(w, t + h).astype(np.complex128))
    Kb = tr.modes_to_grid(gamma_omega(w, t).astype(np.complex128))
    Kc = tr.modes_to_grid(cross_covariance_omega(w, t + h, t).astype(np.complex128))
    dens = Ka ** ell + Kb ** ell - 2.0 * Kc ** ell
    A = np.real(sfft.rfft2(dens)) / float(G * G)
    k1 = sfft.fftfreq(G, 1.0 / G)
    k2 = np.arange(G // 2 + 1, dtype=np.float64)
    wt = (1.0 + k1[:, None] ** 2 + k2[None, :] ** 2) ** (-eps)
    mult = np.full(G // 2 + 1, 2.0)
    mult[0] = mult[-1] = 1.0
    return math.factorial(ell) * math.fsum((A * wt * mult).ravel())


def time_regularity_probe(ell, N, eps, t, hs, seed, replicas, dispersion=WAVE, chunk=16):
    """Monte Carlo ``E ||delta_h :Psi^ell:||^2_{H^-eps}`` for each ``h`` in ``hs``.

    All ``h`` must be integer multiples of ``min(hs)``; states are produced by
    exact stepping along one path per replica. Returns (values, ses, slope)
    where ``slope`` is the least-squares log-log slope.
    """
    hs = np.asarray(sorted(hs), dtype=np.float64)
    h0 = hs[0]
    mult = np.rint(hs / h0).astype(int)
    if np.any(np.abs(mult * h0 - hs) > 1e-9 * hs):
        raise ValueError("probe increments must be multiples of the smallest one")
    n0 = int(round(t / h0))
    if abs(n0 * h0 - t) > 1e-9 * max(t, 1.0):
        raise ValueError("t must be a multiple of the smallest increment")
    G = gap_grid_size(ell, N)
    T = (n0 + mult[-1]) * h0
    sig0 = sigma_exact(N, t, dispersion)
    sigs = [sigma_exact(N, t + h, dispersion) for h in hs]
    acc = [[] for _ in hs]
    for reps in replica_chunks(replicas, chunk):
        path = ModePath(seed, N, h0, T, reps)
        st = step_exact(zero_state(path, dispersion=dispersion), path, 0, n0)
        base = hermite(ell, realize_batch(st.X, N, G), sig0)
        done = n0
        for i, m in enumerate(mult):
            st = step_exact(st, path, done, n0 + m - done)
            done = n0 + m
            d = hermite(ell, realize_batch(st.X, N, G), sigs[i]) - base
            acc[i].append(grid_h_norm_sq(d, -eps))
    stats = [mc_stats(np.concatenate(a)) for a in acc]
    vals = np.array([s[0] for s in stats])
    ses = np.array([s[1] for s in stats])
    slope = float(np.polyfit(np.log(hs), np.log(vals), 1)[0]) if hs.size > 1 else float("nan")
    return vals, ses, slope


# --- CSV ------------------------------------------------------------------------

def write_variance_csv(path, rows):
    """Rows of (N, t, sigma_exact, sigma_mc, se)."""
    _write_csv(path, ["N", "t", "sigma_exact", "sigma_mc", "se"], rows)


def write_gap_csv(path, reports):
    rows = [(r.ell, r.N, r.M, r.eps, r.gap, r.se, r.exact, r.winf, r.winf_se) for r in reports]
    _write_csv(path, ["ell", "N", "M", "eps", "gap", "se", "gap_exact", "winf_sq", "winf_sq_se"], rows)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
