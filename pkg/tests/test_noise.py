"""Keyed Brownian drivers: normalization, independence, nesting, audit dumps."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snlw.convolution import step_exact, zero_state
from snlw.lattice import FrequencyLattice, project_dirichlet, SpectralField
from snlw.noise import (ModePath, NoiseConfig, load_path_dump, n_steps, pack_modes, sample_path)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(dt=0.0), dict(T=0.05), dict(N=-1), dict(seed=-3)])
    def test_rejects(self, kw):
        base = dict(seed=1, N=2, dt=0.1, T=1.0)
        base.update(kw)
        with pytest.raises(ValueError):
            NoiseConfig(**base)

    def test_steps(self):
        assert n_steps(1.0, 0.1) == 10
        assert n_steps(0.25, 1 / 64) == 16
        assert n_steps(1.0, 0.3) == 3

    def test_pack_range(self):
        with pytest.raises(ValueError):
            pack_modes([(40000, 0)])
        assert pack_modes([(0, 0)])[0] == (32768 << 16) | 32768


class TestSamplePath:
    def test_deterministic(self):
        cfg = NoiseConfig(seed=99, N=4, dt=0.1, T=0.5, replica_id=3)
        a = sample_path(cfg).materialize()
        b = sample_path(cfg).materialize()
        assert a.tobytes() == b.tobytes()

    def test_replica_keyed(self):
        cfg = NoiseConfig(seed=99, N=4, dt=0.1, T=0.5)
        batch = sample_path(cfg, replicas=[0, 1, 2]).materialize()
        single = sample_path(NoiseConfig(99, 4, 0.1, 0.5, replica_id=2)).materialize()
        assert np.array_equal(batch[:, 2], single[:, 0])

    def test_one_step(self):
        p = ModePath(1, 3, 0.5, 0.5)
        assert p.steps == 1
        assert p.materialize().shape == (1, 1, FrequencyLattice(3).size)
        with pytest.raises(IndexError):
            p.increments(1)

    def test_zero_mode_real(self):
        inc = ModePath(4, 3, 0.1, 1.0, replicas=range(20)).materialize()
        assert np.all(inc[..., 0].imag == 0)

    def test_unit_variance_per_time(self):
        R = 10 ** 4
        p = ModePath(2024, 2, 0.1, 1.0, replicas=np.arange(R))
        beta = p.materialize().sum(axis=0)
        for j in range(p.lattice.size):
            m2 = np.abs(beta[:, j]) ** 2
            se = m2.std(ddof=1) / math.sqrt(R)
            assert abs(m2.mean() - 1.0) <= 3 * se

    def test_component_split(self):
        R = 10 ** 4
        inc = ModePath(5, 1, 0.2, 0.2, replicas=np.arange(R)).increments(0)
        assert inc[:, 1].real.var() == pytest.approx(0.1, rel=0.05)
        assert inc[:, 1].imag.var() == pytest.approx(0.1, rel=0.05)
        assert inc[:, 0].real.var() == pytest.approx(0.2, rel=0.05)

    def test_cross_mode_uncorrelated(self):
        R = 10 ** 4
        p = ModePath(77, 6, 0.05, 0.05, replicas=np.arange(R))
        inc = p.increments(0)
        pick = np.random.default_rng(1)
        K = p.lattice.size
        for _ in range(20):
            a, b = pick.choice(K, size=2, replace=False)
            for prod in ((inc[:, a] * np.conj(inc[:, b])).real, (inc[:, a] * inc[:, b]).real):
                se = prod.std(ddof=1) / math.sqrt(R)
                assert abs(prod.mean()) <= 4 * se

    def test_steps_independent(self):
        R = 10 ** 4
        p = ModePath(78, 1, 0.05, 0.1, replicas=np.arange(R))
        prod = (p.increments(0)[:, 1] * np.conj(p.increments(1)[:, 1])).real
        assert abs(prod.mean()) <= 4 * prod.std(ddof=1) / math.sqrt(R)


class TestRestrict:
    def test_identity_and_nesting(self):
        p = ModePath(3, 8, 0.1, 0.3, replicas=[0, 5])
        assert np.array_equal(p.restrict(8).materialize(), p.materialize())
        a = p.restrict(8).restrict(4).materialize()
        b = p.restrict(4).materialize()
        assert np.array_equal(a, b)
        K4 = FrequencyLattice(4).size
        assert np.array_equal(b, p.materialize()[..., :K4])

    def test_larger_radius(self):
        with pytest.raises(ValueError):
            ModePath(3, 4, 0.1, 0.3).restrict(5)

    @given(st.integers(0, 6))
    def test_psi_projection(self, Np):
        p = ModePath(11, 6, 0.05, 0.5, replicas=[2])
        full = step_exact(zero_state(p), p, 0, p.steps)
        small = step_exact(zero_state(p.restrict(Np)), p.restrict(Np), 0, p.steps)
        lat = FrequencyLattice(6)
        proj = project_dirichlet(SpectralField.from_modes(lat, full.X[0]), Np)
        assert np.array_equal(proj.modes(), small.X[0])


class TestWhiteNoiseField:
    def test_real_field(self):
        p = ModePath(8, 5, 0.1, 0.1)
        f = p.white_noise_increment(0)
        N = 5
        M = 16
        A = np.zeros((M, M), dtype=complex)
        for n1 in range(-N, N + 1):
            for n2 in range(-N, N + 1):
                A[n1 % M, n2 % M] = f.coeffs[n1 + N, n2 + N]
        g = np.fft.ifft2(A) * M * M
        assert np.max(np.abs(g.imag)) <= 1e-12 * np.max(np.abs(g.real))


class TestDump:
    def test_round_trip(self, tmp_path):
        p = ModePath(2 ** 63 + 5, 3, 0.25, 1.0, replicas=[1, 4])
        p.dump(tmp_path / "p.bin")
        head, inc = load_path_dump(tmp_path / "p.bin")
        assert head["seed"] == 2 ** 63 + 5 and head["N"] == 3 and head["steps"] == 4
        assert list(head["replicas"]) == [1, 4]
        assert np.array_equal(inc, p.materialize())

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"0" * 64)
        with pytest.raises(ValueError):
            load_path_dump(tmp_path / "x")
