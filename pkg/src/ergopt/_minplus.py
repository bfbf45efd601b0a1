"""Exact min-plus convolution on a q x q torus lattice.

Computes T[t] = min over offsets d of ( a[(t + d) mod q] + K[d] ) exactly.
The fast path is a branch-and-bound descent over a quadtree of offset blocks:
each node is bounded below by (min of K over the block) + (min of a over the
translated block), the latter read from precomputed sliding-window-minimum
pyramids.  Bounds are exact lower bounds, so the result equals the full scan.

Requires q to be a power of two; callers fall back to the dense scan
otherwise.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency, but keep a fallback
    HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(f):
            return f
        return deco

    prange = range


def window_min_pyramid(a: np.ndarray) -> np.ndarray:
    """W[l, p] = min of `a` over the 2^l x 2^l square anchored at p (wrapped)."""
    q = a.shape[0]
    L = q.bit_length() - 1
    W = np.empty((L + 1, q, q))
    W[0] = a
    for l in range(1, L + 1):
        s = 1 << (l - 1)
        prev = W[l - 1]
        m = np.minimum(prev, np.roll(prev, -s, axis=0))
        W[l] = np.minimum(m, np.roll(m, -s, axis=1))
    return W


def kernel_min_pyramid(K: np.ndarray):
    """Flattened per-level block minima of the kernel, levels 0..log2(q)."""
    q = K.shape[0]
    L = q.bit_length() - 1
    levels = [K.copy()]
    cur = K
    for _ in range(L):
        cur = np.minimum(np.minimum(cur[0::2, 0::2], cur[0::2, 1::2]),
                         np.minimum(cur[1::2, 0::2], cur[1::2, 1::2]))
        levels.append(cur)
    flat = np.concatenate([lv.ravel() for lv in levels])
    offs = np.zeros(L + 2, dtype=np.int64)
    for l in range(L + 1):
        offs[l + 1] = offs[l] + levels[l].size
    return flat, offs


@njit(cache=True, parallel=True)
def _sweep_quadtree(a, K, W, kmin, koffs, q, L, warm, out, warm_out):
    N = q * q
    for t in prange(N):
        t1 = t // q
        t2 = t % q
        best = a[t]            # offset zero costs K[0] = 0
        barg = 0
        wi = warm[t]
        if wi > 0:
            d1 = wi // q
            d2 = wi % q
            v = a[((t1 + d1) % q) * q + ((t2 + d2) % q)] + K[wi]
            if v < best:
                best = v
                barg = wi
        # DFS over offset blocks, most promising child pushed last
        cap = 8 * (L + 1) + 8
        st_l = np.empty(cap, np.int64)
        st_i = np.empty(cap, np.int64)
        st_j = np.empty(cap, np.int64)
        st_b = np.empty(cap, np.float64)
        sp = 0
        st_l[0] = L
        st_i[0] = 0
        st_j[0] = 0
        st_b[0] = kmin[koffs[L]] + W[L, t1, t2]
        sp = 1
        cb = np.empty(4, np.float64)
        ci = np.empty(4, np.int64)
        cj = np.empty(4, np.int64)
        while sp > 0:
            sp -= 1
            bnd = st_b[sp]
            if bnd >= best:
                continue
            l = st_l[sp]
            bi = st_i[sp]
            bj = st_j[sp]
            if l == 0:
                # exact single offset
                best = bnd
                barg = bi * q + bj
                continue
            lc = l - 1
            side = q >> lc
            base = koffs[lc]
            for ch in range(4):
                ii = 2 * bi + (ch // 2)
                jj = 2 * bj + (ch % 2)
                kv = kmin[base + ii * side + jj]
                av = W[lc, (t1 + (ii << lc)) % q, (t2 + (jj << lc)) % q]
                cb[ch] = kv + av
                ci[ch] = ii
                cj[ch] = jj
            # insertion sort descending so the smallest bound is popped first
            for x in range(1, 4):
                vb = cb[x]
                vi = ci[x]
                vj = cj[x]
                y = x - 1
                while y >= 0 and cb[y] < vb:
                    cb[y + 1] = cb[y]
                    ci[y + 1] = ci[y]
                    cj[y + 1] = cj[y]
                    y -= 1
                cb[y + 1] = vb
                ci[y + 1] = vi
                cj[y + 1] = vj
            for ch in range(4):
                if cb[ch] < best:
                    st_l[sp] = lc
                    st_i[sp] = ci[ch]
                    st_j[sp] = cj[ch]
                    st_b[sp] = cb[ch]
                    sp += 1
        out[t] = best
        warm_out[t] = barg


class TorusMinPlus:
    """Reusable exact min-plus convolver for a fixed kernel K on Z_q^2."""

    def __init__(self, K: np.ndarray):
        q = K.shape[0]
        if K.shape != (q, q) or q & (q - 1):
            raise ValueError("kernel must be square with power-of-two side")
        self.q = q
        self.L = q.bit_length() - 1
        self.K = np.ascontiguousarray(K, dtype=float).ravel()
        self.kmin, self.koffs = kernel_min_pyramid(K)
        self.warm = np.zeros(q * q, dtype=np.int64)

    def __call__(self, a: np.ndarray) -> np.ndarray:
        q = self.q
        A = np.ascontiguousarray(a, dtype=float).reshape(q, q)
        W = window_min_pyramid(A)
        out = np.empty(q * q)
        warm_out = np.empty(q * q, dtype=np.int64)
        _sweep_quadtree(A.ravel(), self.K, W, self.kmin, self.koffs,
                        q, self.L, self.warm, out, warm_out)
        self.warm = warm_out
        return out


def minplus_reference(a: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Dense exact reference: min over all offsets via rolled adds."""
    q = K.shape[0]
    A = a.reshape(q, q)
    out = np.full((q, q), np.inf)
    for d1 in range(q):
        rolled = np.roll(A, -d1, axis=0)
        for d2 in range(q):
            np.minimum(out, np.roll(rolled, -d2, axis=1) + K[d1, d2], out=out)
    return out.ravel()
