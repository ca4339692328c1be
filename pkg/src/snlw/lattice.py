"""Real scalar fields on the unit torus and their Fourier representations.

Conventions
-----------
A field is ``u(x) = sum_n u_hat(n) exp(2 pi i n.x)`` over the disk
``Z^2_N = {n : |n| <= N}``; the torus has unit volume. Wave frequencies use the
symbol ``|n|`` (no factor 2 pi) and ``<n> = (1 + |n|^2)^(1/2)``.

Two coefficient layouts are used:

* the *centered* array of shape ``(2N+1, 2N+1)`` indexed by ``(n1+N, n2+N)``,
  held by :class:`SpectralField` and used for I/O;
* the *half-plane mode vector* over ``{0} U I`` with
  ``I = {n2 > 0} U {n2 = 0, n1 > 0}``, ordered by ``(|n|^2, n2, n1)``. The
  ordering makes the radius-``N'`` modes a prefix of the radius-``N`` modes,
  so restriction and embedding are slicing and zero-padding.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

MAGIC = b"SNLWFLD\x01"


def fast_even_size(n):
    """Smallest even 5-smooth integer >= n."""
    m = max(int(n), 2)
    while True:
        m = sfft.next_fast_len(m, real=True)
        if m % 2 == 0:
            return m
        m += 1


def default_grid_size(N):
    return fast_even_size(2 * (2 * N + 1))


def dealiased_grid_size(N, degree):
    """Grid size on which P_N of a degree-``degree`` product is alias free."""
    return fast_even_size(max((degree + 1) * N + 1, 2 * N + 2))


@dataclass(frozen=True)
class FrequencyLattice:
    """The disk ``Z^2_N`` together with an ``M x M`` collocation grid."""

    N: int
    M: int = 0

    def __post_init__(self):
        if self.N < 0:
            raise ValueError(f"truncation radius must be >= 0, got {self.N}")
        if self.M == 0:
            object.__setattr__(self, "M", default_grid_size(self.N))
        if self.M % 2 or self.M < 2 * self.N + 2:
            raise ValueError(f"grid size {self.M} must be even and >= 2N+2 = {2 * self.N + 2}")

    @cached_property
    def half_modes(self):
        N = self.N
        r = np.arange(-N, N + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        n1 = n1.ravel()
        n2 = n2.ravel()
        r2 = n1 * n1 + n2 * n2
        keep = (r2 <= N * N) & ((n2 > 0) | ((n2 == 0) & (n1 >= 0)))
        n1, n2, r2 = n1[keep], n2[keep], r2[keep]
        order = np.lexsort((n1, n2, r2))
        out = np.stack([n1[order], n2[order]], axis=1).astype(np.int64)
        out.setflags(write=False)
        return out

    @property
    def size(self):
        """Number of half-plane modes (including n = 0)."""
        return self.half_modes.shape[0]

    @cached_property
    def norm_sq(self):
        n = self.half_modes
        return (n[:, 0] ** 2 + n[:, 1] ** 2).astype(np.float64)

    @cached_property
    def norm(self):
        return np.sqrt(self.norm_sq)

    @cached_property
    def bracket(self):
        return np.sqrt(1.0 + self.norm_sq)

    @cached_property
    def weights(self):
        """Multiplicity of each half-plane mode in a full-lattice sum."""
        w = np.full(self.size, 2.0)
        w[0] = 1.0
        return w

    def count(self, radius):
        """Length of the prefix of ``half_modes`` with ``|n| <= radius``."""
        if radius >= self.N:
            return self.size
        return int(np.searchsorted(self.norm_sq, float(radius) ** 2, side="right"))

    def with_grid(self, M):
        return FrequencyLattice(self.N, M)


@lru_cache(maxsize=64)
def transform(N, M):
    return GridTransform(FrequencyLattice(N, M))


class GridTransform:
    """Half-plane mode vectors to and from real ``M x M`` grids (batched)."""

    def __init__(self, lattice):
        self.lattice = lattice
        M = lattice.M
        n = lattice.half_modes
        self._i1 = np.mod(n[:, 0], M)
        self._i2 = n[:, 1]
        mirror = np.nonzero((n[:, 1] == 0) & (n[:, 0] > 0))[0]
        self._mirror = mirror
        self._mi1 = np.mod(-n[mirror, 0], M)

    def modes_to_grid(self, vec):
        M = self.lattice.M
        vec = np.asarray(vec)
        lead = vec.shape[:-1]
        A = np.zeros(lead + (M, M // 2 + 1), dtype=np.complex128)
        A[..., self._i1, self._i2] = vec
        A[..., self._mi1, 0] = np.conj(vec[..., self._mirror])
        return sfft.irfft2(A, s=(M, M), axes=(-2, -1)) * float(M * M)

    def grid_to_modes(self, grid):
        M = self.lattice.M
        A = sfft.rfft2(np.asarray(grid, dtype=np.float64), axes=(-2, -1))
        return A[..., self._i1, self._i2] / float(M * M)


def embed_modes(vec, radius_from, lattice_to):
    """Zero-pad a mode vector of radius ``radius_from`` to ``lattice_to``."""
    vec = np.asarray(vec)
    out = np.zeros(vec.shape[:-1] + (lattice_to.size,), dtype=np.complex128)
    k = min(vec.shape[-1], lattice_to.size)
    out[..., :k] = vec[..., :k]
    return out


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Hermitian-symmetric Fourier coefficients on ``Z^2_N`` (centered layout)."""

    lattice: FrequencyLattice
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        N = self.lattice.N
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (2 * N + 1, 2 * N + 1):
            raise ValueError(f"coefficient array must be {(2 * N + 1,) * 2}, got {c.shape}")
        c[~_disk_mask(N)] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lattice):
        N = lattice.N
        return cls(lattice, np.zeros((2 * N + 1, 2 * N + 1), dtype=np.complex128))

    @classmethod
    def from_modes(cls, lattice, vec):
        N = lattice.N
        vec = np.asarray(vec, dtype=np.complex128)
        c = np.zeros((2 * N + 1, 2 * N + 1), dtype=np.complex128)
        n = lattice.half_modes
        c[-n[:, 0] + N, -n[:, 1] + N] = np.conj(vec)
        c[n[:, 0] + N, n[:, 1] + N] = vec
        c[N, N] = vec[0].real
        return cls(lattice, c)

    @classmethod
    def single_mode(cls, lattice, n, amplitude=1.0):
        """The real field ``a e_n + conj(a) e_{-n}`` (just ``a`` for n = 0)."""
        N = lattice.N
        c = np.zeros((2 * N + 1, 2 * N + 1), dtype=np.complex128)
        n1, n2 = n
        c[n1 + N, n2 + N] = amplitude
        c[-n1 + N, -n2 + N] = np.conj(amplitude)
        if n1 == 0 and n2 == 0:
            c[N, N] = np.real(amplitude)
        return cls(lattice, c)

    def modes(self):
        N = self.lattice.N
        n = self.lattice.half_modes
        return self.coeffs[n[:, 0] + N, n[:, 1] + N].copy()

    def coefficient(self, n):
        N = self.lattice.N
        if n[0] ** 2 + n[1] ** 2 > N * N:
            return 0j
        return complex(self.coeffs[n[0] + N, n[1] + N])

    def to_grid(self):
        return GridField(self.lattice, transform(self.lattice.N, self.lattice.M).modes_to_grid(self.modes()))

    def hermitian_defect(self):
        c = self.coeffs
        return float(np.max(np.abs(c - np.conj(c[::-1, ::-1])), initial=0.0))

    def __add__(self, other):
        _check_same(self, other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def scale(self, factor):
        return SpectralField(self.lattice, self.coeffs * factor)


@dataclass(frozen=True, eq=False)
class GridField:
    """Real samples on the uniform grid ``{(j1/M, j2/M)}``."""

    lattice: FrequencyLattice
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        M = self.lattice.M
        if v.shape != (M, M):
            raise ValueError(f"grid values must have shape {(M, M)}, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, lattice, func):
        M = lattice.M
        x = np.arange(M) / M
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        return cls(lattice, func(x1, x2))

    def to_spectral(self):
        """Coefficients on ``Z^2_N`` (anything outside the disk is dropped)."""
        lat = self.lattice
        return SpectralField.from_modes(lat, transform(lat.N, lat.M).grid_to_modes(self.values))


def _disk_mask(N):
    r = np.arange(-N, N + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= N * N


def _centered_norm_sq(N):
    r = np.arange(-N, N + 1, dtype=np.float64)
    return r[:, None] ** 2 + r[None, :] ** 2


def _check_same(a, b):
    if a.lattice.N != b.lattice.N:
        raise ValueError("fields live on different lattices")


def project_dirichlet(f, radius):
    """Sharp Fourier truncation to ``|n| <= radius``."""
    if radius < 0:
        raise ValueError("projection radius must be >= 0")
    N = f.lattice.N
    Np = min(N, int(radius))
    c = f.coeffs[N - Np:N + Np + 1, N - Np:N + Np + 1]
    return SpectralField(FrequencyLattice(Np, f.lattice.M), c)


def sharp_cutoff(xi):
    """Indicator of the closed unit disk (the Dirichlet kernel's multiplier)."""
    return (np.hypot(xi[..., 0], xi[..., 1]) <= 1.0 + 1e-12).astype(np.float64)


def gaussian_multiplier(xi):
    return np.exp(-(xi[..., 0] ** 2 + xi[..., 1] ** 2))


def mollify(f, kernel_hat, scale):
    """Multiply ``u_hat(n)`` by ``kernel_hat(n / scale)``.

    ``kernel_hat`` is the whole-plane Fourier transform of a mean-one kernel,
    evaluated on arrays of shape ``(..., 2)``.
    """
    k0 = float(np.asarray(kernel_hat(np.zeros((1, 2))))[0])
    if abs(k0 - 1.0) > 1e-12:
        raise ValueError(f"mollifier must have unit mass, kernel_hat(0) = {k0}")
    N = f.lattice.N
    r = np.arange(-N, N + 1, dtype=np.float64)
    xi = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1) / float(scale)
    return SpectralField(f.lattice, f.coeffs * kernel_hat(xi))


def bessel_potential(f, s):
    """Apply ``<grad>^s``, i.e. multiply ``u_hat(n)`` by ``<n>^s``."""
    if s == 0:
        return f
    mult = (1.0 + _centered_norm_sq(f.lattice.N)) ** (0.5 * s)
    return SpectralField(f.lattice, f.coeffs * mult)


def h_norm(f, s):
    """Sobolev norm ``(sum <n>^{2s} |u_hat(n)|^2)^{1/2}``."""
    w = (1.0 + _centered_norm_sq(f.lattice.N)) ** s
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def h_norm_modes(vec, lattice, s):
    """:func:`h_norm` for half-plane mode vectors (batched over leading axes)."""
    w = lattice.weights * lattice.bracket[: vec.shape[-1]] ** (2.0 * s) if s else lattice.weights
    w = w[: vec.shape[-1]]
    return np.sqrt(np.sum(w * np.abs(vec) ** 2, axis=-1))


def lr_norm(g, r):
    """Grid-average estimate of ``||g||_{L^r}`` on the unit-volume torus."""
    vals = np.abs(g.values if isinstance(g, GridField) else np.asarray(g))
    if np.isinf(r):
        return float(vals.max())
    if r < 1:
        raise ValueError("r must be >= 1")
    return float(np.mean(vals ** r) ** (1.0 / r))


def strichartz_norm(series, q, r, dt):
    """Space-time norm ``L^q_T L^r_x`` of a uniformly sampled time series.

    Time integration is the composite trapezoid rule; ``q = inf`` takes the
    supremum over samples.
    """
    if len(series) == 0:
        raise ValueError("empty time series")
    if q < 1 or r < 1:
        raise ValueError("exponents must be >= 1")
    a = np.array([lr_norm(g, r) for g in series])
    if np.isinf(q):
        return float(a.max())
    if a.size == 1:
        return 0.0
    p = a ** q
    integral = dt * (p.sum() - 0.5 * (p[0] + p[-1]))
    return float(integral ** (1.0 / q))


def write_field(path, f):
    """Binary dump: magic, N and M as little-endian int64, then the centered
    coefficient array row-major as interleaved little-endian float64 pairs."""
    N, M = f.lattice.N, f.lattice.M
    data = np.ascontiguousarray(f.coeffs).view(np.float64).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<qq", N, M))
        fh.write(data.tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            raise ValueError(f"{path}: not a field container (bad magic)")
        N, M = struct.unpack("<qq", fh.read(16))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    n = 2 * N + 1
    if raw.size != 2 * n * n:
        raise ValueError(f"{path}: expected {2 * n * n} floats, found {raw.size}")
    coeffs = raw.astype(np.float64).view(np.complex128).reshape(n, n)
    return SpectralField(FrequencyLattice(int(N), int(M)), coeffs)


def write_field_csv(path, f):
    N = f.lattice.N
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "M", "n1", "n2", "re", "im"])
        for n1 in range(-N, N + 1):
            for n2 in range(-N, N + 1):
                if n1 * n1 + n2 * n2 <= N * N:
                    c = f.coeffs[n1 + N, n2 + N]
                    w.writerow([N, f.lattice.M, n1, n2, repr(float(c.real)), repr(float(c.imag))])


def read_field_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty field CSV")
    N, M = int(rows[0]["N"]), int(rows[0]["M"])
    c = np.zeros((2 * N + 1, 2 * N + 1), dtype=np.complex128)
    for row in rows:
        c[int(row["n1"]) + N, int(row["n2"]) + N] = complex(float(row["re"]), float(row["im"]))
    return SpectralField(FrequencyLattice(N, M), c)
