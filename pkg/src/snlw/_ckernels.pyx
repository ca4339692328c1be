# Compiled twins of the functions in _kernels_py.py.
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, cos, sin
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

cdef uint32_t M0 = 0xD2511F53
cdef uint32_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.1102230246251565e-16


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t c0, c1, c2, c3
    cdef int r
    c0 = c[0]; c1 = c[1]; c2 = c[2]; c3 = c[3]
    for r in range(10):
        if r:
            k0 = k0 + W0
            k1 = k1 + W1
        p0 = <uint64_t>M0 * c0
        p1 = <uint64_t>M1 * c2
        c0 = <uint32_t>(p1 >> 32) ^ c1 ^ k0
        c1 = <uint32_t>p1
        c2 = <uint32_t>(p0 >> 32) ^ c3 ^ k1
        c3 = <uint32_t>p0
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3


cdef inline double _u53(uint32_t hi, uint32_t lo) noexcept nogil:
    cdef uint64_t w = (<uint64_t>hi << 32) | lo
    return (<double>(w >> 11) + 0.5) * INV_2_53


def mode_normals(seed, replicas, modes, step):
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint32_t k0 = <uint32_t>(s & 0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>(s >> 32)
    cdef const int64_t[::1] rep = np.ascontiguousarray(replicas, dtype=np.int64)
    cdef const uint32_t[::1] mod = np.ascontiguousarray(modes, dtype=np.uint32)
    cdef uint32_t st = <uint32_t>(int(step) & 0xFFFFFFFF)
    cdef Py_ssize_t R = rep.shape[0], K = mod.shape[0]
    out = np.empty((R, K, 3, 2), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out
    cdef uint32_t c[4]
    cdef Py_ssize_t i, j, b
    cdef double u1, u2, rad, ang
    with nogil:
        for i in range(R):
            for j in range(K):
                for b in range(3):
                    c[0] = st
                    c[1] = <uint32_t>rep[i]
                    c[2] = mod[j]
                    c[3] = <uint32_t>b
                    _philox(c, k0, k1)
                    u1 = _u53(c[0], c[1])
                    u2 = _u53(c[2], c[3])
                    rad = sqrt(-2.0 * log(u1))
                    ang = TWO_PI * u2
                    o[i, j, b, 0] = rad * cos(ang)
                    o[i, j, b, 1] = rad * sin(ang)
    return out


def hermite_eval(x, double sigma, int order):
    shape = np.shape(x)
    arr = np.ascontiguousarray(x, dtype=np.float64)
    flat = arr.reshape(-1)
    out = np.empty(flat.shape)
    cdef const double[::1] xv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef int ell
    cdef double prev, cur, nxt, xi
    with nogil:
        for i in range(n):
            xi = xv[i]
            if order == 0:
                ov[i] = 1.0
                continue
            prev = 1.0
            cur = xi
            for ell in range(1, order):
                nxt = xi * cur - (ell * sigma) * prev
                prev = cur
                cur = nxt
            ov[i] = cur
    return out.reshape(shape)


def oscillator_step(X, V, z, scale, cos_x, sin_over_w, msin_w, chol):
    Xa = np.ascontiguousarray(X, dtype=np.complex128)
    Va = np.ascontiguousarray(V, dtype=np.complex128)
    K = Xa.shape[Xa.ndim - 1]
    za = np.ascontiguousarray(z, dtype=np.float64).reshape(-1, K, 3, 2)
    Xf = Xa.reshape(-1, K).view(np.float64)
    Vf = Va.reshape(-1, K).view(np.float64)
    Xo = np.empty(Xf.shape)
    Vo = np.empty(Vf.shape)
    Bo = np.empty(Xf.shape)
    cdef const double[:, ::1] xv = Xf
    cdef const double[:, ::1] vv = Vf
    cdef double[:, ::1] xo = Xo, vo = Vo, bo = Bo
    cdef const double[:, :, :, ::1] zv = za
    cdef const double[::1] sc = np.ascontiguousarray(scale, dtype=np.float64)
    cdef const double[::1] cx = np.ascontiguousarray(cos_x, dtype=np.float64)
    cdef const double[::1] sw = np.ascontiguousarray(sin_over_w, dtype=np.float64)
    cdef const double[::1] ms = np.ascontiguousarray(msin_w, dtype=np.float64)
    cdef const double[:, ::1] L = np.ascontiguousarray(chol, dtype=np.float64)
    cdef Py_ssize_t B = Xf.shape[0], Kc = K, i, j, jr, ji
    cdef double s, a0, a1, a2, b0, b1, b2, xr, xi, vr, vi
    with nogil:
        for i in range(B):
            for j in range(Kc):
                jr = 2 * j
                ji = jr + 1
                s = sc[j]
                a0 = zv[i, j, 0, 0]; a1 = zv[i, j, 1, 0]; a2 = zv[i, j, 2, 0]
                b0 = zv[i, j, 0, 1]; b1 = zv[i, j, 1, 1]; b2 = zv[i, j, 2, 1]
                xr = xv[i, jr]; xi = xv[i, ji]
                vr = vv[i, jr]; vi = vv[i, ji]
                xo[i, jr] = cx[j] * xr + sw[j] * vr + s * (L[j, 1] * a0 + L[j, 2] * a1)
                xo[i, ji] = cx[j] * xi + sw[j] * vi + s * (L[j, 1] * b0 + L[j, 2] * b1)
                vo[i, jr] = ms[j] * xr + cx[j] * vr + s * (L[j, 3] * a0 + L[j, 4] * a1 + L[j, 5] * a2)
                vo[i, ji] = ms[j] * xi + cx[j] * vi + s * (L[j, 3] * b0 + L[j, 4] * b1 + L[j, 5] * b2)
                bo[i, jr] = s * (L[j, 0] * a0)
                bo[i, ji] = s * (L[j, 0] * b0)
    shape = Xa.shape
    return (Xo.view(np.complex128).reshape(shape),
            Vo.view(np.complex128).reshape(shape),
            Bo.view(np.complex128).reshape(shape))
