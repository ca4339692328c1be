"""Cylindrical Wiener process on the torus as keyed per-mode Brownian drivers.

Every Gaussian draw is a pure function of ``(seed, replica, mode, step)``
through a Philox4x32-10 counter, so a path never depends on draw order. Two
consequences are used throughout:

* restricting a path to a smaller radius keeps exactly the same increments on
  the surviving modes, so ``P_N' Psi_N = Psi_N'`` holds pathwise;
* replicas can be generated in any order or on any worker.

Per mode and step the generator yields three complex standard normals (one per
"block"). Block 0 drives the Brownian increment itself; blocks 1 and 2 are
used by the exact oscillator step to sample the integrated response jointly
with the increment. For ``n = 0`` imaginary parts are zeroed.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .lattice import FrequencyLattice, SpectralField

PATH_MAGIC = b"SNLWPTH\x01"
_OFFSET = 32768


def pack_modes(modes):
    """Pack lattice points ``(n1, n2)`` with ``|n_i| < 32768`` into uint32."""
    n = np.asarray(modes, dtype=np.int64).reshape(-1, 2)
    if np.any(np.abs(n) >= _OFFSET):
        raise ValueError("mode index out of packable range")
    return (((n[:, 0] + _OFFSET) << 16) | (n[:, 1] + _OFFSET)).astype(np.uint32)


def n_steps(T, dt):
    """Number of whole steps of size ``dt`` in ``[0, T]``."""
    ratio = T / dt
    k = round(ratio)
    if abs(ratio - k) <= 1e-9 * max(1.0, ratio):
        return int(k)
    return int(math.floor(ratio))


@dataclass(frozen=True)
class NoiseConfig:
    seed: int
    N: int
    dt: float
    T: float
    replica_id: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T < self.dt * (1 - 1e-12):
            raise ValueError(f"horizon T={self.T} shorter than one step dt={self.dt}")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")


class ModePath:
    """Brownian drivers ``beta~_n`` for ``n`` in the half-plane lattice.

    Increments are generated lazily on request; the object holds no mutable
    state. ``replicas`` is a batch of replica ids sharing seed, radius and step.

    Each increment ``d beta~_n(j)`` has variance ``dt`` per step: real and
    imaginary parts carry ``dt / 2`` each for ``n != 0`` while ``n = 0`` is
    real with variance ``dt``.
    """

    def __init__(self, seed, N, dt, T, replicas=(0,)):
        self.seed = int(seed)
        self.N = int(N)
        self.dt = float(dt)
        self.T = float(T)
        self.replicas = np.atleast_1d(np.asarray(replicas, dtype=np.int64))
        self.replicas.setflags(write=False)
        self.steps = n_steps(self.T, self.dt)

    @cached_property
    def lattice(self):
        return FrequencyLattice(self.N)

    @cached_property
    def packed(self):
        p = pack_modes(self.lattice.half_modes)
        p.setflags(write=False)
        return p

    @cached_property
    def scale(self):
        """Standard deviation per real component and unit intensity."""
        s = np.full(self.lattice.size, math.sqrt(0.5))
        s[0] = 1.0
        s.setflags(write=False)
        return s

    def _check_step(self, j):
        if not 0 <= j < self.steps:
            raise IndexError(f"step {j} outside [0, {self.steps})")

    def normals(self, j, count=None):
        """Keyed normals for step ``j``, shape ``(R, K, 3, 2)``.

        ``count`` keeps only the first ``count`` modes, i.e. the normals of a
        restricted path, without building it.
        """
        self._check_step(j)
        packed = self.packed if count is None else self.packed[:count]
        z = kernels.mode_normals(self.seed, self.replicas, packed, j)
        z[:, 0, :, 1] = 0.0
        return z

    def increments(self, j):
        """Complex increments ``d beta~_n(j)``, shape ``(R, K)``."""
        z = self.normals(j)
        return (math.sqrt(self.dt) * self.scale) * (z[:, :, 0, 0] + 1j * z[:, :, 0, 1])

    def materialize(self):
        """All increments, shape ``(steps, R, K)``."""
        out = np.empty((self.steps, self.replicas.size, self.lattice.size), dtype=np.complex128)
        for j in range(self.steps):
            out[j] = self.increments(j)
        return out

    def restrict(self, radius):
        if radius > self.N:
            raise ValueError(f"cannot restrict radius {self.N} path to larger radius {radius}")
        return ModePath(self.seed, radius, self.dt, self.T, self.replicas)

    def select(self, replicas):
        return ModePath(self.seed, self.N, self.dt, self.T, replicas)

    def white_noise_increment(self, j, replica=0):
        """The field ``sum_n d beta~_n(j) e_n`` as a :class:`SpectralField`."""
        return SpectralField.from_modes(self.lattice, self.increments(j)[replica])

    def dump(self, path):
        """Binary audit dump: magic, header ``<QqqqdI`` (seed, N, steps, R,
        dt, K), replica ids as int64, then ``(steps, R, K)`` complex increments
        as interleaved little-endian float64."""
        inc = self.materialize()
        with open(path, "wb") as fh:
            fh.write(PATH_MAGIC)
            fh.write(struct.pack("<QqqqdI", self.seed, self.N, self.steps, self.replicas.size,
                                 self.dt, self.lattice.size))
            fh.write(self.replicas.astype("<i8").tobytes())
            fh.write(inc.view(np.float64).astype("<f8").tobytes())

    def __repr__(self):
        return (f"ModePath(seed={self.seed}, N={self.N}, dt={self.dt}, T={self.T}, "
                f"replicas={self.replicas.size})")


def sample_path(config, replicas=None):
    """Path for ``config``; ``replicas`` overrides the single ``replica_id``."""
    reps = (config.replica_id,) if replicas is None else replicas
    return ModePath(config.seed, config.N, config.dt, config.T, reps)


def load_path_dump(path):
    """Read a :meth:`ModePath.dump` file; returns (header dict, increments)."""
    with open(path, "rb") as fh:
        if fh.read(len(PATH_MAGIC)) != PATH_MAGIC:
            raise ValueError(f"{path}: not a path dump")
        seed, N, steps, R, dt, K = struct.unpack("<QqqqdI", fh.read(struct.calcsize("<QqqqdI")))
        reps = np.frombuffer(fh.read(8 * R), dtype="<i8").astype(np.int64)
        raw = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    inc = raw.view(np.complex128).reshape(steps, R, K)
    return dict(seed=seed, N=N, steps=steps, dt=dt, replicas=reps), inc
