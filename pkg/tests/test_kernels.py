"""Counter-based generator and the compiled/numpy kernel pair."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from snlw import kernels, _kernels_py
from snlw.convolution import step_coefficients
from snlw.lattice import FrequencyLattice
from snlw.noise import pack_modes

randomgen = pytest.importorskip("randomgen")

BACKENDS = kernels.backends()


def _philox_oracle(ctr, key):
    c = sum(int(v) << (32 * i) for i, v in enumerate(ctr))
    k = int(key[0]) | (int(key[1]) << 32)
    g = randomgen.Philox(counter=(c - 1) % 2 ** 128, key=k, number=4, width=32)
    return [int(v) for v in g.random_raw(4)]


class TestPhilox:
    def test_known_answer_zero(self):
        # Random123 reference vector for philox4x32-10, counter 0, key 0
        out = _kernels_py.philox4x32(*(np.uint32(0),) * 6)
        assert [int(v) for v in out] == [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]

    def test_fixed_vector_against_randomgen(self):
        key = 0x1234567890abcdef
        out = _kernels_py.philox4x32(*(np.uint32(v) for v in (8, 3, 5, 2)),
                                     np.uint32(key & 0xffffffff), np.uint32(key >> 32))
        assert [int(v) for v in out] == [1154355655, 769730514, 1800956325, 1502642891]

    @given(st.lists(st.integers(0, 2 ** 32 - 1), min_size=6, max_size=6))
    def test_matches_randomgen(self, words):
        ctr, key = words[:4], words[4:]
        out = _kernels_py.philox4x32(*(np.uint32(w) for w in words))
        assert [int(v) for v in out] == _philox_oracle(ctr, key)

    def test_vectorized_rows_independent(self):
        c = np.arange(5, dtype=np.uint32)
        z = np.zeros(5, dtype=np.uint32)
        out = _kernels_py.philox4x32(c, z, z, z, np.uint32(9), np.uint32(0))
        for i in range(5):
            single = _kernels_py.philox4x32(np.uint32(i), *(np.uint32(0),) * 3, np.uint32(9), np.uint32(0))
            assert [int(o[i]) for o in out] == [int(s) for s in single]


class TestModeNormals:
    def test_shape_and_moments(self):
        lat = FrequencyLattice(16)
        z = kernels.mode_normals(7, np.arange(200), pack_modes(lat.half_modes), 3)
        assert z.shape == (200, lat.size, 3, 2)
        assert abs(z.mean()) < 0.01
        assert abs(z.var() - 1.0) < 0.01

    def test_pure_function_of_key(self):
        packed = pack_modes(FrequencyLattice(4).half_modes)
        a = kernels.mode_normals(1, np.array([5, 9]), packed, 2)
        b = kernels.mode_normals(1, np.array([9]), packed[3:], 2)
        assert np.array_equal(a[1, 3:], b[0])

    def test_distinct_steps_differ(self):
        packed = pack_modes(FrequencyLattice(2).half_modes)
        a = kernels.mode_normals(1, np.array([0]), packed, 0)
        b = kernels.mode_normals(1, np.array([0]), packed, 1)
        assert not np.any(a == b)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
class TestBackendAgreement:
    py = BACKENDS["numpy"]
    cy = BACKENDS.get("cython")

    @given(st.integers(0, 2 ** 64 - 1), st.integers(0, 1000))
    def test_mode_normals(self, seed, step):
        packed = pack_modes(FrequencyLattice(5).half_modes)
        reps = np.array([0, 3, 17])
        a = self.py.mode_normals(seed, reps, packed, step)
        b = self.cy.mode_normals(seed, reps, packed, step)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)

    @given(st.integers(0, 16), st.floats(0, 5))
    def test_hermite(self, order, sigma):
        x = np.linspace(-4, 4, 57).reshape(3, 19)
        np.testing.assert_array_equal(self.py.hermite_eval(x, sigma, order),
                                      self.cy.hermite_eval(x, sigma, order))

    def test_oscillator_step(self, rng):
        N = 6
        K = FrequencyLattice(N).size
        co = step_coefficients(N, 0.01)
        X = rng.standard_normal((4, K)) + 1j * rng.standard_normal((4, K))
        V = rng.standard_normal((4, K)) + 1j * rng.standard_normal((4, K))
        z = rng.standard_normal((4, K, 3, 2))
        scale = np.full(K, np.sqrt(0.5))
        a = self.py.oscillator_step(X, V, z, scale, co.cos_x, co.sin_over_w, co.msin_w, co.chol)
        b = self.cy.oscillator_step(X, V, z, scale, co.cos_x, co.sin_over_w, co.msin_w, co.chol)
        for u, v in zip(a, b):
            np.testing.assert_allclose(u, v, rtol=1e-14, atol=1e-15)

    @pytest.mark.parametrize("x", [0.7, np.float64(-1.2), np.zeros((2, 0))])
    def test_hermite_shapes(self, x):
        a = self.cy.hermite_eval(x, 0.5, 3)
        assert np.shape(a) == np.shape(x)
        np.testing.assert_array_equal(a, self.py.hermite_eval(x, 0.5, 3))

    def test_readonly_inputs(self):
        x = np.linspace(-1, 1, 10)
        x.setflags(write=False)
        assert np.array_equal(self.cy.hermite_eval(x, 1.0, 3), self.py.hermite_eval(x, 1.0, 3))


def test_pure_python_switch():
    env = dict(os.environ, SNLW_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from snlw import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
