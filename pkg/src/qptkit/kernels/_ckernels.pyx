# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the objective/gradient and scatter-sweep kernels.

Both functions mirror ``_numpy_kernels`` exactly in their inputs and
outputs; the test suite checks agreement to rounding error.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs, sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memset
from scipy.linalg.cython_blas cimport zgemm, zgemv

cnp.import_array()

ctypedef double complex cplx

cdef enum:
    DIM = 16
    MAX_SETTINGS = 4096


def objective_and_gradient(const double[::1] t, const cplx[:, ::1] x, const cplx[:, ::1] qflat,
                           const double[::1] counts, double total, double lam):
    """Objective and gradient; the dense products go through BLAS.

    Arrays are row-major, which BLAS sees as their transposes, so each call
    below is written for the transposed product.
    """
    cdef int ns = <int>x.shape[0]
    if ns > MAX_SETTINGS or x.shape[1] != DIM or qflat.shape[0] != DIM or qflat.shape[1] != DIM * DIM:
        raise ValueError("unexpected kernel input shapes")
    cdef cplx T[DIM * DIM]
    cdef cplx P[DIM * DIM]
    cdef cplx chi[DIM * DIM]
    cdef cplx z[DIM * DIM]
    cdef cplx h[DIM * DIM]
    cdef cplx g[DIM]
    cdef cplx gc[DIM]
    cdef cplx *xc = <cplx *>malloc(ns * DIM * sizeof(cplx))
    cdef cplx *w = <cplx *>malloc(ns * DIM * sizeof(cplx))
    cdef cplx *v = <cplx *>malloc(ns * DIM * sizeof(cplx))
    if xc == NULL or w == NULL or v == NULL:
        free(xc)
        free(w)
        free(v)
        raise MemoryError()
    cdef int d = DIM, dd = DIM * DIM, one = 1
    cdef cplx c_one = 1.0, c_zero = 0.0, c_scale
    cdef char cn = b'N', ct = b'T', cc = b'C'
    cdef Py_ssize_t s, i, j, pos
    cdef double p, r, f = 0.0
    grad = np.empty(DIM * DIM)
    cdef double[::1] gv = grad

    memset(T, 0, sizeof(T))
    for i in range(DIM):
        T[i * DIM + i] = t[i]
    pos = DIM
    for i in range(1, DIM):
        for j in range(i):
            T[i * DIM + j].real = t[pos]
            T[i * DIM + j].imag = t[pos + 1]
            pos += 2

    with nogil:
        for s in range(ns * DIM):
            xc[s] = x[s // DIM, s % DIM].conjugate()
        # w = conj(x) T^T  (row-major ns x 16)
        zgemm(&ct, &cn, &d, &ns, &d, &c_one, T, &d, xc, &d, &c_zero, w, &d)
        for s in range(ns):
            p = 0.0
            for j in range(DIM):
                p += w[s * DIM + j].real * w[s * DIM + j].real + w[s * DIM + j].imag * w[s * DIM + j].imag
            r = counts[s] - total * p
            f += r * r / total
            r = -4.0 * r
            for j in range(DIM):
                v[s * DIM + j] = r * x[s, j]
        # z = w^T v  (row-major 16 x 16)
        zgemm(&cn, &ct, &d, &d, &ns, &c_one, v, &d, w, &d, &c_zero, z, &d)
        # chi = T^dag T
        zgemm(&cn, &cc, &d, &d, &d, &c_one, T, &d, T, &d, &c_zero, chi, &d)
        # g = qflat vec(chi) - e_0
        zgemv(&ct, &dd, &d, &c_one, <cplx *>&qflat[0, 0], &dd, chi, &one, &c_zero, g, &one)
        g[0] = g[0] - 1.0
        for i in range(DIM):
            f += lam * (g[i].real * g[i].real + g[i].imag * g[i].imag)
            gc[i] = g[i].conjugate()
        # h = 2 lam sum_k conj(g_k) Q_k
        c_scale = 2.0 * lam
        zgemv(&cn, &dd, &d, &c_scale, <cplx *>&qflat[0, 0], &dd, gc, &one, &c_zero, h, &one)
        for i in range(DIM):
            for j in range(DIM):
                P[i * DIM + j] = h[j * DIM + i] + h[i * DIM + j].conjugate()
        # z += T P
        zgemm(&cn, &cn, &d, &d, &d, &c_one, P, &d, T, &d, &c_one, z, &d)

    free(xc)
    free(w)
    free(v)
    for i in range(DIM):
        gv[i] = z[i * DIM + i].real
    pos = DIM
    for i in range(1, DIM):
        for j in range(i):
            gv[pos] = z[i * DIM + j].real
            gv[pos + 1] = z[i * DIM + j].imag
            pos += 2
    return f, grad


cdef int _heev4(cplx *a, double *ev, cplx *vec, bint vectors) noexcept nogil:
    """Eigen-decomposition of a 4x4 Hermitian matrix by cyclic Jacobi sweeps.

    ``a`` (row-major) is destroyed; eigenvalues come back ascending and,
    when ``vectors`` is set, ``vec`` holds the matching eigenvectors as
    columns.  Returns the number of sweeps used.
    """
    cdef int i, j, k, p, q, sweep
    cdef double off, scale, mag, theta, tt, c, s, app, aqq
    cdef cplx e, x, y
    for i in range(16):
        vec[i] = 0
    for i in range(4):
        vec[i * 5] = 1.0
    for sweep in range(30):
        off = 0.0
        scale = 0.0
        for i in range(4):
            scale += a[i * 5].real * a[i * 5].real
            for j in range(i + 1, 4):
                off += a[i * 4 + j].real * a[i * 4 + j].real + a[i * 4 + j].imag * a[i * 4 + j].imag
        if off <= 1e-32 * (scale + off) or off < 1e-300:
            break
        for p in range(3):
            for q in range(p + 1, 4):
                mag = sqrt(a[p * 4 + q].real * a[p * 4 + q].real + a[p * 4 + q].imag * a[p * 4 + q].imag)
                if mag < 1e-300:
                    continue
                e = a[p * 4 + q] / mag
                app = a[p * 5].real
                aqq = a[q * 5].real
                theta = (aqq - app) / (2.0 * mag)
                tt = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    tt = -tt
                c = 1.0 / sqrt(tt * tt + 1.0)
                s = tt * c
                # J: J_pp = c, J_pq = s, J_qp = -s conj(e), J_qq = c conj(e); A <- J^dag A J
                for k in range(4):
                    x = a[k * 4 + p]
                    y = a[k * 4 + q]
                    a[k * 4 + p] = c * x - s * e.conjugate() * y
                    a[k * 4 + q] = s * x + c * e.conjugate() * y
                for k in range(4):
                    x = a[p * 4 + k]
                    y = a[q * 4 + k]
                    a[p * 4 + k] = c * x - s * e * y
                    a[q * 4 + k] = s * x + c * e * y
                a[p * 4 + q] = 0
                a[q * 4 + p] = 0
                a[p * 5] = a[p * 5].real
                a[q * 5] = a[q * 5].real
                if not vectors:
                    continue
                for k in range(4):
                    x = vec[k * 4 + p]
                    y = vec[k * 4 + q]
                    vec[k * 4 + p] = c * x - s * e.conjugate() * y
                    vec[k * 4 + q] = s * x + c * e.conjugate() * y
    for i in range(4):
        ev[i] = a[i * 5].real
    # insertion sort, ascending
    for i in range(1, 4):
        j = i
        while j > 0 and ev[j - 1] > ev[j]:
            c = ev[j]
            ev[j] = ev[j - 1]
            ev[j - 1] = c
            for k in range(4):
                x = vec[k * 4 + j]
                vec[k * 4 + j] = vec[k * 4 + j - 1]
                vec[k * 4 + j - 1] = x
            j -= 1
    return sweep


def heev4(m):
    """Test hook for the Jacobi solver: ``(eigenvalues, eigenvectors, sweeps)``."""
    cdef cplx a[16]
    cdef cplx vec[16]
    cdef double ev[4]
    cdef int i
    arr = np.ascontiguousarray(m, dtype=np.complex128).reshape(16)
    for i in range(16):
        a[i] = arr[i]
    sweeps = _heev4(a, ev, vec, True)
    return np.array([ev[i] for i in range(4)]), np.array([vec[i] for i in range(16)]).reshape(4, 4), sweeps


cdef inline double _flip(int i) noexcept nogil:
    return -1.0 if (i == 0 or i == 3) else 1.0


cdef void _row(const cplx[:, ::1] S, const cplx[:, ::1] U, const cplx[:, ::1] kets,
               Py_ssize_t s, double[:, ::1] rows) noexcept nogil:
    cdef cplx psi[4]
    cdef cplx rin[16]
    cdef cplx rho[16]
    cdef cplx a[16]
    cdef cplx root[16]
    cdef cplx tmp[16]
    cdef cplx m[16]
    cdef cplx ideal[4]
    cdef cplx vecs[16]
    cdef double ev[4]
    cdef double lam[4]
    cdef int i, j, k
    cdef cplx acc
    cdef double fid, pur, tin, tout, c, v

    for i in range(4):
        psi[i] = kets[s, i]
    for i in range(4):
        for j in range(4):
            rin[i * 4 + j] = psi[i] * psi[j].conjugate()
    for i in range(16):
        acc = 0
        for j in range(16):
            acc = acc + S[i, j] * rin[j]
        rho[i] = acc
    # hermitize
    for i in range(4):
        for j in range(i, 4):
            acc = 0.5 * (rho[i * 4 + j] + rho[j * 4 + i].conjugate())
            rho[i * 4 + j] = acc
            rho[j * 4 + i] = acc.conjugate()

    fid = 0.0
    for i in range(4):
        acc = 0
        for j in range(4):
            acc = acc + U[i, j] * psi[j]
        ideal[i] = acc
    for i in range(4):
        for j in range(4):
            fid += (ideal[i].conjugate() * rho[i * 4 + j] * ideal[j]).real
    pur = 0.0
    for i in range(16):
        pur += rho[i].real * rho[i].real + rho[i].imag * rho[i].imag
    acc = 2.0 * (psi[0] * psi[3] - psi[1] * psi[2])
    tin = acc.real * acc.real + acc.imag * acc.imag

    # concurrence: rho = W W^dag with W = V sqrt(D); eigenvalues of W^dag rho~ W
    for i in range(16):
        a[i] = rho[i]
    _heev4(a, ev, vecs, True)
    for k in range(4):
        v = sqrt(ev[k]) if ev[k] > 0.0 else 0.0
        for i in range(4):
            root[i * 4 + k] = vecs[i * 4 + k] * v
    # tmp = flipped @ root, flipped[i, j] = f_i f_j conj(rho[3-i, 3-j])
    for i in range(4):
        for k in range(4):
            acc = 0
            for j in range(4):
                acc = acc + _flip(i) * _flip(j) * rho[(3 - i) * 4 + (3 - j)].conjugate() * root[j * 4 + k]
            tmp[i * 4 + k] = acc
    # m = root^dag tmp, hermitized
    for i in range(4):
        for k in range(4):
            acc = 0
            for j in range(4):
                acc = acc + root[j * 4 + i].conjugate() * tmp[j * 4 + k]
            m[i * 4 + k] = acc
    for i in range(4):
        for k in range(i, 4):
            acc = 0.5 * (m[i * 4 + k] + m[k * 4 + i].conjugate())
            m[i * 4 + k] = acc
            m[k * 4 + i] = acc.conjugate()
    _heev4(m, lam, vecs, False)
    for i in range(4):
        lam[i] = sqrt(lam[i]) if lam[i] > 0.0 else 0.0
    c = lam[3] - lam[2] - lam[1] - lam[0]
    tout = c * c if c > 0.0 else 0.0

    rows[s, 0] = tin if tin < 1.0 else 1.0
    rows[s, 1] = tout if tout < 1.0 else 1.0
    rows[s, 2] = rows[s, 1] - rows[s, 0]
    rows[s, 3] = 0.0 if fid < 0.0 else (1.0 if fid > 1.0 else fid)
    v = 4.0 / 3.0 * (1.0 - pur)
    rows[s, 4] = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def sweep_rows(superop, unitary, kets, int threads=1):
    cdef const cplx[:, ::1] S = np.ascontiguousarray(superop, dtype=np.complex128)
    cdef const cplx[:, ::1] U = np.ascontiguousarray(unitary, dtype=np.complex128)
    cdef const cplx[:, ::1] K = np.ascontiguousarray(kets, dtype=np.complex128)
    cdef Py_ssize_t n = K.shape[0], s
    out = np.empty((n, 5))
    cdef double[:, ::1] rows = out
    if threads < 1:
        threads = 1
    for s in prange(n, nogil=True, num_threads=threads, schedule="static"):
        _row(S, U, K, s, rows)
    return out
