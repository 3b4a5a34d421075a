# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``htl._pykernels`` function by function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def direct_convolve(const double[::1] a, const double[::1] b):
    """Full linear convolution by direct O(len(a) * len(b)) summation."""
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t i, j
    cdef double ai
    out = np.zeros(na + nb - 1, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(na):
        ai = a[i]
        if ai == 0.0:
            continue
        for j in range(nb):
            o[i + j] += ai * b[j]
    return out


def renewal_forward(const double[::1] z, const double[::1] g):
    """Solve Z[k] = z[k] + sum_{j=1..k} g[j] Z[k-j] by forward substitution.

    ``g[0]`` must be zero (no mass at the origin).
    """
    cdef Py_ssize_t n = z.shape[0], ng = g.shape[0]
    cdef Py_ssize_t k, j, jmax
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] Z = out
    for k in range(n):
        acc = z[k]
        jmax = k if k < ng - 1 else ng - 1
        for j in range(1, jmax + 1):
            acc += g[j] * Z[k - j]
        Z[k] = acc
    return out


def walk_supremum_block(double[::1] S, double[::1] M, double[::1] Mh, unsigned char[::1] done,
                        const double[:, ::1] incs, double barrier):
    """Advance running walks by one block of increments.

    A walk stops once it falls more than ``barrier`` below its running
    maximum; ``Mh`` takes the maximum at the first fall of ``barrier / 2``.
    ``done`` bit 0 marks finished rows, bit 1 rows whose ``Mh`` is set.
    Returns the number of rows still running.
    """
    cdef Py_ssize_t n = incs.shape[0], L = incs.shape[1]
    cdef Py_ssize_t i, t
    cdef Py_ssize_t active = 0
    cdef double s, mx, half = 0.5 * barrier
    cdef unsigned char d
    for i in range(n):
        d = done[i]
        if d & 1:
            continue
        s = S[i]
        mx = M[i]
        for t in range(L):
            s = s + incs[i, t]
            if s > mx:
                mx = s
            elif s < mx - half:
                if not d & 2:
                    d = d | 2
                    Mh[i] = mx
                if s < mx - barrier:
                    d = d | 1
                    break
        S[i] = s
        M[i] = mx
        done[i] = d
        if not d & 1:
            active += 1
    return active


def walk_ladder_block(double[::1] S, signed char[::1] state, double[::1] height,
                      const double[:, ::1] incs, double barrier, double barrier2,
                      double[::1] occ, double occ_step):
    """Advance first-ascent walks by one block of increments.

    ``state``: 0 running above -barrier, 1 running between -barrier and
    -barrier2 (only the ascent event is still tracked), 2 ascended before
    -barrier, 3 ascended after crossing -barrier, 4 failed. While in state 0
    every position S_n <= 0 is deposited onto ``occ`` (node spacing
    ``occ_step``, linear split between neighbouring nodes). Returns the
    number of rows still running.
    """
    cdef Py_ssize_t n = incs.shape[0], L = incs.shape[1]
    cdef Py_ssize_t nocc = occ.shape[0]
    cdef Py_ssize_t i, t, j
    cdef Py_ssize_t active = 0
    cdef double s, u, frac
    cdef signed char st
    for i in range(n):
        st = state[i]
        if st >= 2:
            continue
        s = S[i]
        for t in range(L):
            s = s + incs[i, t]
            if s > 0.0:
                height[i] = s
                st = 2 if st == 0 else 3
                break
            if st == 0:
                if s < -barrier:
                    st = 1
                else:
                    u = -s / occ_step
                    j = <Py_ssize_t>floor(u)
                    frac = u - j
                    if j + 1 < nocc:
                        occ[j] += 1.0 - frac
                        occ[j + 1] += frac
                    elif j < nocc:
                        occ[j] += 1.0
            if st == 1 and s < -barrier2:
                st = 4
                break
        S[i] = s
        state[i] = st
        if st < 2:
            active += 1
    return active


# --------------------------------------------------------------------------
# walks with an inline generator: one splitmix64 stream per path

from libc.stdint cimport uint64_t
from libc.math cimport sqrt, pow

cdef extern from *:
    """
    #include <stdint.h>
    static inline double htl_next_uniform(uint64_t *s) {
        uint64_t z = (*s += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return (double)(z >> 11) * 0x1.0p-53;
    }
    """
    double htl_next_uniform(uint64_t *s) nogil


cdef inline double _draw(uint64_t *s, int kind, double a, double shift) noexcept nogil:
    cdef double u = htl_next_uniform(s)
    if kind == 1:
        return 1.0 / sqrt(1.0 - u) - shift
    if kind == 2:
        return pow(1.0 - u, a) - shift
    return a - shift


def walk_supremum_stream(double[::1] M, double[::1] Mh, uint64_t[::1] rng, int kind,
                         double a, double shift, double barrier):
    """Run every walk to its drawdown barrier with increments drawn inline.

    ``M`` receives the maximum when the walk first falls ``barrier`` below
    it, ``Mh`` the maximum at the first fall of ``barrier / 2``. ``rng`` holds
    one generator state per path and is advanced in place.
    """
    cdef Py_ssize_t n = M.shape[0], i
    cdef double s, mx, mh, half = 0.5 * barrier
    cdef bint got_half
    cdef uint64_t st
    with nogil:
        for i in range(n):
            st = rng[i]
            s = 0.0
            mx = 0.0
            mh = 0.0
            got_half = False
            while True:
                s = s + _draw(&st, kind, a, shift)
                if s > mx:
                    mx = s
                elif s < mx - half:
                    if not got_half:
                        got_half = True
                        mh = mx
                    if s < mx - barrier:
                        break
            M[i] = mx
            Mh[i] = mh
            rng[i] = st
    return n


def walk_ladder_stream(signed char[::1] state, double[::1] height, uint64_t[::1] rng, int kind,
                       double a, double shift, double barrier, double barrier2,
                       double[::1] occ, double occ_step):
    """First-ascent walks with increments drawn inline; final states as in walk_ladder_block."""
    cdef Py_ssize_t n = state.shape[0], nocc = occ.shape[0]
    cdef Py_ssize_t i, j
    cdef double s, u, frac
    cdef signed char stt
    cdef uint64_t st
    with nogil:
        for i in range(n):
            st = rng[i]
            s = 0.0
            stt = 0
            while True:
                s = s + _draw(&st, kind, a, shift)
                if s > 0.0:
                    height[i] = s
                    stt = 2 if stt == 0 else 3
                    break
                if stt == 0:
                    if s < -barrier:
                        stt = 1
                    else:
                        u = -s / occ_step
                        j = <Py_ssize_t>floor(u)
                        frac = u - j
                        if j + 1 < nocc:
                            occ[j] += 1.0 - frac
                            occ[j + 1] += frac
                        elif j < nocc:
                            occ[j] += 1.0
                if stt == 1 and s < -barrier2:
                    stt = 4
                    break
            state[i] = stt
            rng[i] = st
    return n
