"""Exact upper envelopes of 2x2 quadratic forms on the unit circle.

For ``x = (cos t, sin t)`` one has ``x'Px = a + b cos 2t + c sin 2t`` with
``a = (P11 + P22)/2``, ``b = (P11 - P22)/2``, ``c = P12``.  The maximum of K
forms is therefore the upper envelope of K sinusoids in ``phi = 2t``, which
splits the circle into finitely many arcs.  Crossing points of two
sinusoids have a closed form, so the envelope is computed exactly (up to
rounding) by merging envelopes of halves, as in merge sort.

Two reductions are built on top of it:

* :func:`envelope_indices` keeps exactly the forms that attain the maximum
  on an arc of positive length; the represented function is unchanged.
* :func:`cover_indices` keeps a subset ``J`` with
  ``max_J f_j <= max_I f_i <= c * max_J f_j`` for a factor ``c > 1``.  Each
  dropped arc is certified by solving the sinusoid inequality in closed form.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


def sinusoid_coeffs(P: np.ndarray):
    P = np.asarray(P, dtype=float)
    a = 0.5 * (P[:, 0, 0] + P[:, 1, 1])
    b = 0.5 * (P[:, 0, 0] - P[:, 1, 1])
    c = 0.5 * (P[:, 0, 1] + P[:, 1, 0])
    return a, b, c


@njit(cache=True)
def _merge(s1, f1, s2, f2, a, b, c, out_s, out_f):
    """Upper envelope of two envelopes given as (start angles, forms)."""
    n1, n2 = s1.size, s2.size
    i = j = 0
    cur = 0.0
    cnt = 0
    roots = np.empty(4)
    while cur < TWO_PI:
        e1 = s1[i + 1] if i + 1 < n1 else TWO_PI
        e2 = s2[j + 1] if j + 1 < n2 else TWO_PI
        e = min(e1, e2)
        p, q = f1[i], f2[j]
        A, B, C = a[p] - a[q], b[p] - b[q], c[p] - c[q]
        R = math.sqrt(B * B + C * C)
        nr = 0
        if R > 0.0 and abs(A) < R:
            psi = math.atan2(C, B)
            beta = math.acos(-A / R)
            for base in (psi - beta, psi + beta):
                r = base - TWO_PI * math.floor((base - cur) / TWO_PI)
                while r < e:
                    if r > cur:
                        roots[nr] = r
                        nr += 1
                    r += TWO_PI
        roots[:nr].sort()
        lo = cur
        for k in range(nr + 1):
            hi = roots[k] if k < nr else e
            if hi > lo:
                mid = 0.5 * (lo + hi)
                d = A + B * math.cos(mid) + C * math.sin(mid)
                w = p if d >= 0.0 else q
                if cnt == 0 or out_f[cnt - 1] != w:
                    out_s[cnt] = lo
                    out_f[cnt] = w
                    cnt += 1
            lo = hi
        cur = e
        if e1 == e:
            i += 1
        if e2 == e:
            j += 1
    return cnt


@njit(cache=True)
def _envelope(a, b, c):
    """Arcs of the envelope of all forms: start angles and form indices.

    Bottom-up pairwise merging; envelopes of m sinusoids have at most 2m
    arcs plus one for the wrap at 2 pi, so every level fits in 3K + 4 slots.
    """
    K = a.size
    cap = 3 * K + 4
    S = np.zeros(cap)
    F = np.arange(K).astype(np.int64)
    F = np.concatenate((F, np.zeros(cap - K, dtype=np.int64)))
    off = np.arange(K + 1).astype(np.int64)
    groups = K
    S2 = np.empty(cap)
    F2 = np.empty(cap, dtype=np.int64)
    while groups > 1:
        new_off = np.empty(groups // 2 + groups % 2 + 1, dtype=np.int64)
        new_off[0] = 0
        pos = 0
        g = 0
        while g < groups:
            if g + 1 < groups:
                n = _merge(S[off[g]:off[g + 1]], F[off[g]:off[g + 1]],
                           S[off[g + 1]:off[g + 2]], F[off[g + 1]:off[g + 2]],
                           a, b, c, S2[pos:], F2[pos:])
            else:
                n = off[g + 1] - off[g]
                S2[pos:pos + n] = S[off[g]:off[g + 1]]
                F2[pos:pos + n] = F[off[g]:off[g + 1]]
            pos += n
            new_off[g // 2 + 1] = pos
            g += 2
        S, S2 = S2, S
        F, F2 = F2, F
        off = new_off
        groups = off.size - 1
    n = off[1]
    starts = S[:n].copy()
    forms = F[:n].copy()
    # the arc ending at 2 pi continues the one starting at 0
    return starts, forms


@njit(cache=True)
def _neg_arcs(A, B, C, s, e, out):
    """Subintervals of [s, e] where ``A + B cos + C sin < 0``; returns count."""
    R = math.sqrt(B * B + C * C)
    if A >= R:
        return 0
    if A < -R or R == 0.0:
        out[0, 0] = s
        out[0, 1] = e
        return 1
    psi = math.atan2(C, B)
    beta = math.acos(-A / R)
    lo = psi + beta
    width = TWO_PI - 2.0 * beta
    # move lo to the period whose negative window may start before s
    lo = lo - TWO_PI * math.ceil((lo - s) / TWO_PI)
    cnt = 0
    for k in range(3):
        l = lo + k * TWO_PI
        h = l + width
        l2 = max(l, s)
        h2 = min(h, e)
        if h2 > l2:
            out[cnt, 0] = l2
            out[cnt, 1] = h2
            cnt += 1
    return cnt


@njit(cache=True)
def _covered(a, b, c, j, p, q, s, e, fac, buf1, buf2):
    # f_j <= fac * max(f_p, f_q) on [s, e]
    slack = 1e-15 * (abs(a[j]) + abs(b[j]) + abs(c[j]))
    n1 = _neg_arcs(fac * a[p] - a[j] - slack, fac * b[p] - b[j], fac * c[p] - c[j], s, e, buf1)
    if n1 == 0:
        return True
    n2 = _neg_arcs(fac * a[q] - a[j] - slack, fac * b[q] - b[j], fac * c[q] - c[j], s, e, buf2)
    for u in range(n1):
        for v in range(n2):
            if min(buf1[u, 1], buf2[v, 1]) > max(buf1[u, 0], buf2[v, 0]):
                return False
    return True


@njit(cache=True)
def _greedy_cover(a, b, c, starts, forms, fac, window):
    E = starts.size
    ends = np.empty(E)
    ends[:E - 1] = starts[1:]
    ends[E - 1] = TWO_PI
    keep = np.zeros(a.size, dtype=np.bool_)
    anchor = int(np.argmax(ends - starts))
    keep[forms[anchor]] = True
    # cyclic order starting right after the anchor arc and ending on it
    seq = np.empty(E, dtype=np.int64)
    for t in range(E):
        seq[t] = (anchor + 1 + t) % E
    buf1 = np.empty((3, 2))
    buf2 = np.empty((3, 2))
    p = forms[anchor]
    pos = 0
    while pos < E - 1:
        t = pos
        while t + 1 <= E - 1 and t + 1 - pos <= window:
            q = forms[seq[t + 1]]
            ok = True
            for u in range(pos, t + 1):
                arc = seq[u]
                j = forms[arc]
                if j == p or j == q or keep[j]:
                    continue
                if not _covered(a, b, c, j, p, q, starts[arc], ends[arc], fac, buf1, buf2):
                    ok = False
                    break
            if not ok:
                break
            t += 1
        p = forms[seq[t]]
        keep[p] = True
        pos = t + 1
    return keep


def envelope_arcs(P: np.ndarray):
    """Envelope arcs of a (K, 2, 2) stack: ``(starts, forms, a, b, c)``."""
    a, b, c = sinusoid_coeffs(P)
    starts, forms = _envelope(a, b, c)
    return starts, forms, a, b, c


def envelope_indices(P: np.ndarray) -> np.ndarray:
    """Sorted indices of forms attaining the maximum on some arc."""
    _, forms, *_ = envelope_arcs(P)
    return np.unique(forms)


def cover_indices(P: np.ndarray, factor: float, window: int = 64) -> np.ndarray:
    """Sorted indices of a subset whose max times `factor` dominates the full max."""
    if not factor >= 1.0:
        raise ValueError("cover factor must be at least 1")
    starts, forms, a, b, c = envelope_arcs(P)
    if starts.size == 1 or factor == 1.0:
        return np.unique(forms)
    keep = _greedy_cover(a, b, c, starts, forms, float(factor), int(window))
    return np.flatnonzero(keep)
