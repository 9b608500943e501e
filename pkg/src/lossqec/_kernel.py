"""Compiled hot loops: whole-circuit tableau execution and shortest paths.

The tableau layout follows the standard destabilizer/stabilizer convention:
rows 0..n-1 destabilizers, rows n..2n-1 stabilizers, one extra scratch row
for deterministic-measurement phase accumulation.  Signs are single bits
(+1/-1); phase bookkeeping during row multiplication is done mod 4 and is
provably even for valid tableaus.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Opcode table shared with the circuit compiler.
OP_H = 0
OP_X = 1
OP_Z = 2
OP_CZ = 3
OP_R = 4
OP_M = 5
OP_D1 = 6
OP_D2 = 7
OP_ZERR = 8

OPCODES = {
    "H": OP_H,
    "X": OP_X,
    "Z": OP_Z,
    "CZ": OP_CZ,
    "R": OP_R,
    "M": OP_M,
    "DEPOLARIZE1": OP_D1,
    "DEPOLARIZE2": OP_D2,
    "Z_ERROR": OP_ZERR,
}


@njit(cache=True, inline="always")
def _rowsum_into(x, z, r, h, i, n):
    """row h <- (row i) * (row h), tracking the sign bit."""
    phase = 2 * r[h] + 2 * r[i]
    for j in range(n):
        x1 = x[i, j]
        z1 = z[i, j]
        x2 = x[h, j]
        z2 = z[h, j]
        if x1 == 1 and z1 == 1:
            phase += z2 - x2
        elif x1 == 1 and z1 == 0:
            phase += z2 * (2 * x2 - 1)
        elif x1 == 0 and z1 == 1:
            phase += x2 * (1 - 2 * z2)
        x[h, j] = x1 ^ x2
        z[h, j] = z1 ^ z2
    r[h] = (phase % 4) // 2


@njit(cache=True, inline="always")
def _measure_z(x, z, r, q, n, rand_bit):
    """Measure Z on qubit q; rand_bit supplies the outcome if non-deterministic."""
    pivot = -1
    for i in range(n, 2 * n):
        if x[i, q] == 1:
            pivot = i
            break
    if pivot >= 0:
        for i in range(2 * n):
            if i != pivot and x[i, q] == 1:
                _rowsum_into(x, z, r, i, pivot, n)
        # destabilizer partner becomes the old pivot stabilizer
        dp = pivot - n
        for j in range(n):
            x[dp, j] = x[pivot, j]
            z[dp, j] = z[pivot, j]
        r[dp] = r[pivot]
        for j in range(n):
            x[pivot, j] = 0
            z[pivot, j] = 0
        z[pivot, q] = 1
        r[pivot] = rand_bit
        return rand_bit
    # deterministic: accumulate product into the scratch row 2n
    s = 2 * n
    for j in range(n):
        x[s, j] = 0
        z[s, j] = 0
    r[s] = 0
    for i in range(n):
        if x[i, q] == 1:
            _rowsum_into(x, z, r, s, i + n, n)
    return r[s]


@njit(cache=True, inline="always")
def _apply_pauli(x, z, r, q, pauli, n2):
    """Apply X (pauli=1), Y (2) or Z (3) to qubit q as a state update."""
    for i in range(n2):
        if pauli == 1:
            r[i] ^= z[i, q]
        elif pauli == 3:
            r[i] ^= x[i, q]
        else:
            r[i] ^= x[i, q] ^ z[i, q]


@njit(cache=True)
def run_program(n, ops, t0, t1, prob, enabled, num_meas, seed):
    """Execute one shot of a compiled instruction stream.

    Returns the measurement record bits.  The RNG is seeded per call so the
    result is a pure function of (program, enabled mask, seed).
    """
    np.random.seed(seed)
    x = np.zeros((2 * n + 1, n), dtype=np.uint8)
    z = np.zeros((2 * n + 1, n), dtype=np.uint8)
    r = np.zeros(2 * n + 1, dtype=np.uint8)
    for i in range(n):
        x[i, i] = 1
        z[n + i, i] = 1
    bits = np.zeros(num_meas, dtype=np.uint8)
    mc = 0
    n2 = 2 * n
    for k in range(len(ops)):
        if enabled[k] == 0:
            if ops[k] == OP_M:
                mc += 1  # records keep their slots even if masked out
            continue
        op = ops[k]
        a = t0[k]
        if op == OP_CZ:
            b = t1[k]
            for i in range(n2):
                if x[i, a] & x[i, b] & (z[i, a] ^ z[i, b]):
                    r[i] ^= 1
                z[i, a] ^= x[i, b]
                z[i, b] ^= x[i, a]
        elif op == OP_H:
            for i in range(n2):
                r[i] ^= x[i, a] & z[i, a]
                tmp = x[i, a]
                x[i, a] = z[i, a]
                z[i, a] = tmp
        elif op == OP_X:
            for i in range(n2):
                r[i] ^= z[i, a]
        elif op == OP_Z:
            for i in range(n2):
                r[i] ^= x[i, a]
        elif op == OP_M:
            rb = np.uint8(np.random.random() < 0.5)
            bits[mc] = _measure_z(x, z, r, a, n, rb)
            mc += 1
        elif op == OP_R:
            rb = np.uint8(np.random.random() < 0.5)
            out = _measure_z(x, z, r, a, n, rb)
            if out == 1:
                for i in range(n2):
                    r[i] ^= z[i, a]
        elif op == OP_D1:
            if prob[k] > 0.0 and np.random.random() < prob[k]:
                pa = 1 + np.int64(np.random.random() * 3.0)
                if pa > 3:
                    pa = 3
                _apply_pauli(x, z, r, a, pa, n2)
        elif op == OP_D2:
            if prob[k] > 0.0 and np.random.random() < prob[k]:
                kk = 1 + np.int64(np.random.random() * 15.0)
                if kk > 15:
                    kk = 15
                pa = kk // 4
                pb = kk % 4
                if pa > 0:
                    _apply_pauli(x, z, r, a, pa, n2)
                if pb > 0:
                    _apply_pauli(x, z, r, t1[k], pb, n2)
        elif op == OP_ZERR:
            if prob[k] > 0.0 and np.random.random() < prob[k]:
                for i in range(n2):
                    r[i] ^= x[i, a]
    return bits


@njit(cache=True)
def dijkstra(n_nodes, indptr, indices, weights, src):
    """Single-source shortest paths with deterministic tie-breaking.

    Ties in path length are broken toward the smaller predecessor node id.
    Returns (dist, pred_node, pred_edge).
    """
    INF = np.inf
    dist = np.full(n_nodes, INF)
    pred_node = np.full(n_nodes, -1, dtype=np.int64)
    pred_edge = np.full(n_nodes, -1, dtype=np.int64)
    done = np.zeros(n_nodes, dtype=np.uint8)
    cap = 4 * (len(indices) + 4)
    heap_d = np.empty(cap, dtype=np.float64)
    heap_n = np.empty(cap, dtype=np.int64)
    hs = 0
    dist[src] = 0.0
    heap_d[0] = 0.0
    heap_n[0] = src
    hs = 1
    while hs > 0:
        hs -= 1
        d = heap_d[0]
        u = heap_n[0]
        heap_d[0] = heap_d[hs]
        heap_n[0] = heap_n[hs]
        i = 0
        while True:
            l = 2 * i + 1
            rr = l + 1
            m = i
            if l < hs and (heap_d[l] < heap_d[m] or (heap_d[l] == heap_d[m] and heap_n[l] < heap_n[m])):
                m = l
            if rr < hs and (heap_d[rr] < heap_d[m] or (heap_d[rr] == heap_d[m] and heap_n[rr] < heap_n[m])):
                m = rr
            if m == i:
                break
            heap_d[i], heap_d[m] = heap_d[m], heap_d[i]
            heap_n[i], heap_n[m] = heap_n[m], heap_n[i]
            i = m
        if done[u]:
            continue
        done[u] = 1
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if done[v]:
                continue
            nd = d + weights[e]
            if nd < dist[v] or (nd == dist[v] and u < pred_node[v]):
                dist[v] = nd
                pred_node[v] = u
                pred_edge[v] = e
                heap_d[hs] = nd
                heap_n[hs] = v
                i = hs
                hs += 1
                while i > 0:
                    p = (i - 1) // 2
                    if heap_d[p] < heap_d[i] or (heap_d[p] == heap_d[i] and heap_n[p] <= heap_n[i]):
                        break
                    heap_d[i], heap_d[p] = heap_d[p], heap_d[i]
                    heap_n[i], heap_n[p] = heap_n[p], heap_n[i]
                    i = p
    return dist, pred_node, pred_edge


@njit(cache=True)
def match_component_dp(nn, cost, bcost):
    """Exact minimum-weight pairing of nn defects, each allowed to pair with
    the boundary at its own cost.  Bitmask DP, nn <= 20.

    Returns (best weight, partner array; -1 means boundary).
    """
    full = 1 << nn
    INF = 1e300
    dp = np.full(full, INF)
    choice = np.full(full, -2, dtype=np.int64)
    dp[0] = 0.0
    for mask in range(1, full):
        # lowest set bit
        u = 0
        while (mask >> u) & 1 == 0:
            u += 1
        rest = mask & ~(1 << u)
        best = dp[rest] + bcost[u]
        pick = -1
        m = rest
        while m:
            v = 0
            mm = m
            while (mm & 1) == 0:
                mm >>= 1
                v += 1
            cand = dp[rest & ~(1 << v)] + cost[u, v]
            if cand < best:
                best = cand
                pick = v
            m &= m - 1
        dp[mask] = best
        choice[mask] = pick
    partner = np.full(nn, -1, dtype=np.int64)
    mask = full - 1
    while mask:
        u = 0
        while (mask >> u) & 1 == 0:
            u += 1
        v = choice[mask]
        if v >= 0:
            partner[u] = v
            partner[v] = u
            mask &= ~(1 << u)
            mask &= ~(1 << v)
        else:
            partner[u] = -1
            mask &= ~(1 << u)
    return dp[full - 1], partner
