"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them loop by loop.
Every function here must stay elementwise-equivalent to its compiled twin.
"""
import numpy as np

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
_MASK32 = 0xFFFFFFFF
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0 ** -53


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Philox4x32 block function on arrays of 32-bit words.

    Counter words may be arrays (any broadcastable shapes); key words are
    Python ints. Returns four ``uint64`` arrays holding 32-bit values.
    """
    m0 = np.uint64(PHILOX_M0)
    m1 = np.uint64(PHILOX_M1)
    mask = np.uint64(_MASK32)
    s32 = np.uint64(32)
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = int(k0) & _MASK32
    k1 = int(k1) & _MASK32
    for r in range(rounds):
        if r:
            k0 = (k0 + PHILOX_W0) & _MASK32
            k1 = (k1 + PHILOX_W1) & _MASK32
        p0 = m0 * c0
        p1 = m1 * c2
        c0, c1, c2, c3 = (
            (p1 >> s32) ^ c1 ^ np.uint64(k0),
            p1 & mask,
            (p0 >> s32) ^ c3 ^ np.uint64(k1),
            p0 & mask,
        )
    return c0, c1, c2, c3


def _uniform53(hi, lo):
    word = (hi << np.uint64(32)) | lo
    return ((word >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def mode_normals(seed, replicas, modes, step):
    """Standard normals keyed by (seed, replica, mode, step).

    Parameters
    ----------
    seed : int
        64-bit seed, used as the Philox key.
    replicas : int64 array, shape (R,)
    modes : uint32 array, shape (K,)
        Packed lattice points, see :func:`snlw.noise.pack_modes`.
    step : int
        Fine time-step index.

    Returns
    -------
    ndarray, shape (R, K, 3, 2)
        Axis 2 is the block (driver component), axis 3 is (real, imaginary).
    """
    seed = int(seed)
    k0 = seed & _MASK32
    k1 = (seed >> 32) & _MASK32
    rep = np.asarray(replicas, dtype=np.int64).astype(np.uint64) & np.uint64(_MASK32)
    mod = np.asarray(modes, dtype=np.uint64)
    c1 = rep[:, None, None]
    c2 = mod[None, :, None]
    c3 = np.arange(3, dtype=np.uint64)[None, None, :]
    o0, o1, o2, o3 = philox4x32(np.uint64(int(step) & _MASK32), c1, c2, c3, k0, k1)
    u1 = _uniform53(o0, o1)
    u2 = _uniform53(o2, o3)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = _TWO_PI * u2
    out = np.empty(u1.shape + (2,), dtype=np.float64)
    out[..., 0] = radius * np.cos(angle)
    out[..., 1] = radius * np.sin(angle)
    return out


def hermite_eval(x, sigma, order):
    """H_order(x; sigma) by the three-term recurrence, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    if order == 0:
        return np.ones_like(x)
    prev = np.ones_like(x)
    cur = x.copy()
    for ell in range(1, order):
        prev, cur = cur, x * cur - (ell * sigma) * prev
    return cur


def oscillator_step(X, V, z, scale, cos_x, sin_over_w, msin_w, chol):
    """Advance complex oscillator amplitudes by one exact Gaussian step.

    ``z`` has shape (..., K, 3, 2) (standard normals); ``chol`` has shape
    (K, 6) holding (L11, L21, L22, L31, L32, L33) of the (beta, X, V)
    increment covariance per unit intensity; ``scale`` (K,) is the square
    root of the per-component intensity. Returns (X', V', dbeta).
    """
    zc = z[..., 0] + 1j * z[..., 1]
    l11, l21, l22, l31, l32, l33 = (chol[:, i] for i in range(6))
    z0, z1, z2 = zc[..., 0], zc[..., 1], zc[..., 2]
    dbeta = scale * (l11 * z0)
    dX = scale * (l21 * z0 + l22 * z1)
    dV = scale * (l31 * z0 + l32 * z1 + l33 * z2)
    X_new = cos_x * X + sin_over_w * V + dX
    V_new = msin_w * X + cos_x * V + dV
    return X_new, V_new, dbeta
