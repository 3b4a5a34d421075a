"""Numpy implementations of the inner loops, used when the extension is absent.

Each function has the same signature and semantics as its counterpart in
``_ckernels.pyx``. Walk kernels consume the increment block row by row in the
same order, so per-path outcomes are bit-identical between backends; only the
summation order inside the occupation histogram differs.
"""
import math

import numpy as np


def direct_convolve(a, b):
    """Full linear convolution by direct summation (numpy's O(n*m) path)."""
    return np.convolve(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def renewal_forward(z, g):
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n, ng = z.shape[0], g.shape[0]
    Z = np.empty(n)
    # reversed kernel so each step is one dot product
    grev = g[::-1].copy()
    for k in range(n):
        jmax = min(k, ng - 1)
        if jmax == 0:
            Z[k] = z[k]
            continue
        # sum_{j=1..jmax} g[j] * Z[k-j]
        Z[k] = z[k] + np.dot(grev[ng - 1 - jmax:ng - 1], Z[k - jmax:k])
    return Z


def _first_true(mask):
    """Index of the first True per row, or the row length when none."""
    L = mask.shape[1]
    idx = np.argmax(mask, axis=1)
    idx[~mask[np.arange(mask.shape[0]), idx]] = L
    return idx


def _paths(S, incs):
    return np.cumsum(np.concatenate([S[:, None], incs], axis=1), axis=1)[:, 1:]


def walk_supremum_block(S, M, Mh, done, incs, barrier):
    rows = np.flatnonzero((done & 1) == 0)
    if rows.size == 0:
        return 0
    L = incs.shape[1]
    P = _paths(S[rows], incs[rows])
    Mrun = np.maximum.accumulate(np.concatenate([M[rows, None], P], axis=1), axis=1)[:, 1:]
    r = np.arange(rows.size)
    t_h = _first_true(P < Mrun - 0.5 * barrier)
    hit = ((done[rows] & 2) == 0) & (t_h < L)
    Mh[rows[hit]] = Mrun[r[hit], t_h[hit]]
    done[rows[hit]] |= 2
    stop = _first_true(P < Mrun - barrier)
    last = np.minimum(stop, L - 1)
    S[rows] = P[r, last]
    M[rows] = Mrun[r, last]
    finished = stop < L
    done[rows[finished]] |= 1
    return int(np.count_nonzero(~finished))


def _deposit(occ, values, occ_step):
    if values.size == 0:
        return
    nocc = occ.shape[0]
    u = -values / occ_step
    j = np.floor(u).astype(np.int64)
    frac = u - j
    both = j + 1 < nocc
    one = (~both) & (j < nocc)
    occ += np.bincount(j[both], weights=1.0 - frac[both], minlength=nocc)[:nocc]
    occ += np.bincount(j[both] + 1, weights=frac[both], minlength=nocc)[:nocc]
    occ += np.bincount(j[one], minlength=nocc)[:nocc]


def _ladder_chunk(P, st, barrier, barrier2, occ, occ_step):
    """One chunk of first-ascent steps; returns new states, last positions, heights, steps used."""
    L = P.shape[1]
    r = np.arange(P.shape[0])
    t_s = _first_true(P > 0.0)
    t_b = _first_true(P < -barrier)
    t_b = np.where(st == 0, t_b, 0)
    # second barrier only counts from the first crossing on
    below2 = P < -barrier2
    below2 &= np.arange(L)[None, :] >= t_b[:, None]
    t_2 = _first_true(below2)

    # occupation: state-0 rows, steps before ascent and before the barrier
    lim = np.where(st == 0, np.minimum(t_s, t_b), 0)
    mask = np.arange(L)[None, :] < lim[:, None]
    _deposit(occ, P[mask], occ_step)

    new = st.copy()
    new_S = P[:, -1].copy()
    up0 = (st == 0) & (t_s < t_b)
    crossed = (st == 1) | ((st == 0) & (t_b < t_s))
    up1 = crossed & (t_s < t_2)
    fail = crossed & (t_2 < t_s) & (t_2 < L)
    new[crossed & ~up1 & ~fail] = 1
    new[up0] = 2
    new[up1] = 3
    new[fail] = 4
    asc = up0 | up1
    heights = np.full(P.shape[0], np.nan)
    heights[asc] = P[r[asc], t_s[asc]]
    new_S[asc] = heights[asc]
    new_S[fail] = P[r[fail], t_2[fail]]
    used = np.full(P.shape[0], L)
    used[asc] = t_s[asc] + 1
    used[fail] = t_2[fail] + 1
    return new, new_S, heights, used


def walk_ladder_block(S, state, height, incs, barrier, barrier2, occ, occ_step):
    rows = np.flatnonzero(state < 2)
    if rows.size == 0:
        return 0
    P = _paths(S[rows], incs[rows])
    st = state[rows].astype(np.int64)
    new, new_S, h, _ = _ladder_chunk(P, st, barrier, barrier2, occ, occ_step)
    asc = new >= 2
    asc &= new <= 3
    height[rows[asc]] = h[asc]
    S[rows] = new_S
    state[rows] = new.astype(state.dtype)
    return int(np.count_nonzero(new < 2))


# --------------------------------------------------------------------------
# inline-generator walks; the same splitmix64 streams as the compiled kernels

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
CHUNK = 64


def splitmix_states(base, n):
    """n stream states: the first n outputs of splitmix64 started at ``base``."""
    k = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(base) + k * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))
_libm_pow = np.frompyfunc(math.pow, 2, 1)


def splitmix_uniforms(states, steps):
    """Uniforms for the next ``steps`` draws of each stream (states are not advanced)."""
    k = np.arange(1, steps + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = states[:, None] + k[None, :] * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def _draws(states, steps, kind, a, shift):
    u = splitmix_uniforms(states, steps)
    if kind == 1:
        return 1.0 / np.sqrt(1.0 - u) - shift
    if kind == 2:
        # libm pow, as in the compiled kernel; numpy's power may round differently
        return _libm_pow(1.0 - u, a).astype(np.float64) - shift
    return np.full(u.shape, a - shift)


def _advance(rng, rows, used):
    with np.errstate(over="ignore"):
        rng[rows] += used.astype(np.uint64) * _GAMMA


def walk_supremum_stream(M, Mh, rng, kind, a, shift, barrier):
    n = M.shape[0]
    half = 0.5 * barrier
    rows = np.arange(n)
    S = np.zeros(n)
    mx = np.zeros(n)
    mh = np.zeros(n)
    got = np.zeros(n, dtype=bool)
    while rows.size:
        P = _paths(S, _draws(rng[rows], CHUNK, kind, a, shift))
        Mrun = np.maximum.accumulate(np.concatenate([mx[:, None], P], axis=1), axis=1)[:, 1:]
        r = np.arange(rows.size)
        t_h = _first_true(P < Mrun - half)
        hit = (~got) & (t_h < CHUNK)
        mh[hit] = Mrun[r[hit], t_h[hit]]
        got |= hit
        stop = _first_true(P < Mrun - barrier)
        last = np.minimum(stop, CHUNK - 1)
        S = P[r, last]
        mx = Mrun[r, last]
        fin = stop < CHUNK
        _advance(rng, rows, last + 1)
        M[rows[fin]] = mx[fin]
        Mh[rows[fin]] = mh[fin]
        keep = ~fin
        rows, S, mx, mh, got = rows[keep], S[keep], mx[keep], mh[keep], got[keep]
    return n


def walk_ladder_stream(state, height, rng, kind, a, shift, barrier, barrier2, occ, occ_step):
    n = state.shape[0]
    rows = np.arange(n)
    S = np.zeros(n)
    st = np.zeros(n, dtype=np.int64)
    while rows.size:
        P = _paths(S, _draws(rng[rows], CHUNK, kind, a, shift))
        new, S, h, used = _ladder_chunk(P, st, barrier, barrier2, occ, occ_step)
        _advance(rng, rows, used)
        fin = new >= 2
        asc = fin & (new <= 3)
        height[rows[asc]] = h[asc]
        state[rows[fin]] = new[fin]
        keep = ~fin
        rows, S, st = rows[keep], S[keep], new[keep]
    return n
