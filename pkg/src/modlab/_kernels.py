"""Compiled inner loops for the modulus solver.

The finite-family problem is solved on its Lagrange dual,

    max_{lam >= 0}  sum(lam) - (p - 1) * vol * sum(rho(lam)**p),
    rho(lam) = (L^T lam / (p * vol)) ** (1 / (p - 1)),

by cyclic coordinate ascent (Hildreth's method; over-relaxed when p == 2).
``s`` holds L^T lam and is updated in place.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _rho(sv, p, vol):
    if sv <= 0.0:
        return 0.0
    if p == 2.0:
        return sv / (2.0 * vol)
    return (sv / (p * vol)) ** (1.0 / (p - 1.0))


@njit(cache=True, nogil=True)
def _row_length(indptr, ind, val, k, s, p, vol, delta):
    acc = 0.0
    for j in range(indptr[k], indptr[k + 1]):
        acc += val[j] * _rho(s[ind[j]] + delta * val[j], p, vol)
    return acc


@njit(cache=True, nogil=True)
def _coordinate_root(indptr, ind, val, k, s, p, vol, lam_k):
    """Largest-feasible step delta >= -lam_k solving 1 - length(delta) = 0 (monotone)."""
    f0 = 1.0 - _row_length(indptr, ind, val, k, s, p, vol, 0.0)
    if f0 == 0.0:
        return 0.0
    if f0 > 0.0:
        lo = 0.0
        hi = 1e-12 + lam_k
        if hi <= 0.0:
            hi = 1e-12
        while 1.0 - _row_length(indptr, ind, val, k, s, p, vol, hi) > 0.0:
            lo = hi
            hi *= 4.0
            if hi > 1e300:
                return hi
    else:
        if 1.0 - _row_length(indptr, ind, val, k, s, p, vol, -lam_k) <= 0.0:
            return -lam_k
        lo = -lam_k
        hi = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - _row_length(indptr, ind, val, k, s, p, vol, mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * (abs(lo) + abs(hi)) + 1e-300:
            break
    return 0.5 * (lo + hi)


@njit(cache=True, nogil=True)
def dual_state(indptr, ind, val, lam, s, p, vol):
    """Return (dual value, primal energy of rho(lam), min constraint length)."""
    energy = 0.0
    for c in range(s.shape[0]):
        r = _rho(s[c], p, vol)
        energy += vol * r ** p
    min_len = np.inf
    for k in range(lam.shape[0]):
        acc = 0.0
        for j in range(indptr[k], indptr[k + 1]):
            acc += val[j] * _rho(s[ind[j]], p, vol)
        if acc < min_len:
            min_len = acc
    dual = lam.sum() - (p - 1.0) * energy
    return dual, energy, min_len


@njit(cache=True, nogil=True)
def hildreth(indptr, ind, val, lam, s, p, vol, omega, max_sweeps, gap_tol, check_every, full_every):
    """Cyclic dual coordinate ascent; returns (sweeps done, relative gap)."""
    K = lam.shape[0]
    q = np.empty(K)
    for k in range(K):
        acc = 0.0
        for j in range(indptr[k], indptr[k + 1]):
            acc += val[j] * val[j]
        q[k] = acc / (2.0 * vol)
    gap = np.inf
    sweep = 0
    # rows with lam == 0 that were slack in the last full pass are skipped
    # on the cheap passes in between
    active = np.arange(K)
    n_active = K
    while sweep < max_sweeps:
        full = sweep % full_every == 0
        count = K if full else n_active
        for i in range(count):
            k = i if full else active[i]
            if q[k] == 0.0:
                continue
            if p == 2.0:
                ell = 0.0
                for j in range(indptr[k], indptr[k + 1]):
                    ell += val[j] * s[ind[j]]
                ell /= 2.0 * vol
                new = lam[k] + omega * (1.0 - ell) / q[k]
                if new < 0.0:
                    new = 0.0
                d = new - lam[k]
            else:
                d = _coordinate_root(indptr, ind, val, k, s, p, vol, lam[k])
                if lam[k] + d < 0.0:
                    d = -lam[k]
            if d != 0.0:
                lam[k] += d
                for j in range(indptr[k], indptr[k + 1]):
                    s[ind[j]] += d * val[j]
        if full:
            n_active = 0
            for k in range(K):
                if lam[k] > 0.0:
                    active[n_active] = k
                    n_active += 1
        sweep += 1
        if sweep % check_every == 0 or sweep == max_sweeps:
            dual, energy, min_len = dual_state(indptr, ind, val, lam, s, p, vol)
            if min_len > 0.0 and energy > 0.0:
                primal = energy / min_len ** p
                gap = (primal - dual) / primal
                if gap <= gap_tol:
                    break
    return sweep, gap


@njit(cache=True, nogil=True)
def trace_paths(pred, source, targets, max_len):
    """Walk predecessor links back to ``source``; returns (flat cells, offsets)."""
    out = np.empty(targets.shape[0] * 16, dtype=np.int64)
    offs = np.zeros(targets.shape[0] + 1, dtype=np.int64)
    n = 0
    buf = np.empty(max_len, dtype=np.int64)
    for i in range(targets.shape[0]):
        c = targets[i]
        m = 0
        while c != source and c >= 0:
            buf[m] = c
            m += 1
            c = pred[c]
        if n + m > out.shape[0]:
            grown = np.empty(2 * (n + m), dtype=np.int64)
            grown[:n] = out[:n]
            out = grown
        for j in range(m):
            out[n + j] = buf[m - 1 - j]
        n += m
        offs[i + 1] = n
    return out[:n], offs


@njit(cache=True, nogil=True)
def join_paths(pred_e, pred_f, source, sink, nodes, max_len):
    """Shortest E-to-F paths through ``nodes``: tree walk to E, then reversed tree walk to F."""
    out = np.empty(nodes.shape[0] * 32, dtype=np.int64)
    offs = np.zeros(nodes.shape[0] + 1, dtype=np.int64)
    n = 0
    buf = np.empty(2 * max_len, dtype=np.int64)
    for i in range(nodes.shape[0]):
        v = nodes[i]
        m = 0
        c = v
        while c != source and c >= 0:
            buf[m] = c
            m += 1
            c = pred_e[c]
        # buf[0..m) runs v -> E; reverse into E -> v
        for j in range(m // 2):
            t = buf[j]
            buf[j] = buf[m - 1 - j]
            buf[m - 1 - j] = t
        c = pred_f[v]
        while c != sink and c >= 0:
            buf[m] = c
            m += 1
            c = pred_f[c]
        if n + m > out.shape[0]:
            grown = np.empty(2 * (n + m), dtype=np.int64)
            grown[:n] = out[:n]
            out = grown
        for j in range(m):
            out[n + j] = buf[j]
        n += m
        offs[i + 1] = n
    return out[:n], offs

