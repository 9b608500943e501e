"""Exact minimum-weight perfect matching of syndrome defects.

Defect-to-defect and defect-to-boundary distances come from Dijkstra runs
over the decoding graph (deterministic tie-breaking toward smaller node
ids).  The matching itself is solved exactly: long edges dominated by two
boundary hops are discarded, the remainder splits into connected components,
small components are solved by bitmask dynamic programming and large ones by
a blossom solver on the defect-plus-boundary-copies graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from . import _kernel
from .builder import BOUNDARY
from .dem import MatchingGraph

_DP_MAX = 16
_BRUTE_MAX = 12


@dataclass
class CsrGraph:
    """Adjacency of a MatchingGraph; the boundary is the last node."""

    num_nodes: int  # including boundary
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    obs: np.ndarray
    boundary: int


def to_csr(g: MatchingGraph) -> CsrGraph:
    nb = g.num_nodes  # boundary index
    deg = np.zeros(nb + 1, dtype=np.int64)
    for u, v, w, p, o in g.edges:
        if w < 0:
            raise ValueError("negative edge weight; clamp probabilities upstream")
        uu = nb if u == BOUNDARY else u
        vv = nb if v == BOUNDARY else v
        deg[uu] += 1
        deg[vv] += 1
    indptr = np.zeros(nb + 2, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    m2 = int(indptr[-1])
    indices = np.zeros(m2, dtype=np.int64)
    weights = np.zeros(m2, dtype=np.float64)
    obs = np.zeros(m2, dtype=np.int64)
    fill = indptr[:-1].copy()
    for u, v, w, p, o in g.edges:
        uu = nb if u == BOUNDARY else u
        vv = nb if v == BOUNDARY else v
        for a, b in ((uu, vv), (vv, uu)):
            k = fill[a]
            indices[k] = b
            weights[k] = w
            obs[k] = o
            fill[a] += 1
    return CsrGraph(nb + 1, indptr, indices, weights, obs, nb)


@dataclass
class DistanceTable:
    defects: list[int]
    dist: np.ndarray  # (m, m)
    bdist: np.ndarray  # (m,)
    masks: np.ndarray  # (m, m) observable masks along the chosen paths
    bmasks: np.ndarray  # (m,)
    paths_available: bool = True


def defect_distances(g: MatchingGraph | CsrGraph, defects: Sequence[int]) -> DistanceTable:
    """All pairwise and boundary shortest-path distances among the defects,
    with the observable parity picked up along each chosen path."""
    csr = g if isinstance(g, CsrGraph) else to_csr(g)
    m = len(defects)
    dist = np.zeros((m, m))
    masks = np.zeros((m, m), dtype=np.int64)
    bdist = np.zeros(m)
    bmasks = np.zeros(m, dtype=np.int64)
    for i, src in enumerate(defects):
        d, pn, pe = _kernel.dijkstra(csr.num_nodes, csr.indptr, csr.indices, csr.weights, src)
        if not np.isfinite(d[csr.boundary]):
            raise ValueError(f"defect {src} has no path to the boundary")
        bdist[i] = d[csr.boundary]
        bmasks[i] = _path_mask(csr, pn, pe, csr.boundary)
        for j, dst in enumerate(defects):
            if j == i:
                continue
            dist[i, j] = d[dst]
            masks[i, j] = _path_mask(csr, pn, pe, dst)
    return DistanceTable(list(defects), dist, bdist, masks, bmasks)


def _path_mask(csr: CsrGraph, pred_node, pred_edge, dst: int) -> int:
    mask = 0
    v = dst
    while pred_edge[v] >= 0:
        mask ^= int(csr.obs[pred_edge[v]])
        v = pred_node[v]
    return mask


@dataclass
class MatchingResult:
    pairs: list[tuple[int, Optional[int]]]  # defect-list indices; None = boundary
    weight: float
    obs_mask: int


def _result_from_partner(table: DistanceTable, partner: Sequence[int], idx: Sequence[int]) -> tuple[list, float, int]:
    pairs = []
    weight = 0.0
    mask = 0
    seen = set()
    for a_local, a in enumerate(idx):
        if a in seen:
            continue
        p_local = partner[a_local]
        if p_local < 0:
            pairs.append((a, None))
            weight += table.bdist[a]
            mask ^= int(table.bmasks[a])
            seen.add(a)
        else:
            b = idx[p_local]
            pairs.append((a, b))
            weight += table.dist[a, b]
            mask ^= int(table.masks[a, b])
            seen.add(a)
            seen.add(b)
    return pairs, weight, mask


def min_weight_perfect_matching(table: DistanceTable) -> MatchingResult:
    """Exact minimum-weight matching of all defects, boundary allowed.

    A defect pair whose connecting path costs at least both boundary hops can
    always be re-routed through the boundary, so such edges are dropped; the
    surviving graph is solved exactly component by component.
    """
    m = len(table.defects)
    if m == 0:
        return MatchingResult([], 0.0, 0)
    keep = table.dist < (table.bdist[:, None] + table.bdist[None, :])
    np.fill_diagonal(keep, False)
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(m):
        for j in range(i + 1, m):
            if keep[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    comps: dict[int, list[int]] = {}
    for i in range(m):
        comps.setdefault(find(i), []).append(i)

    pairs: list[tuple[int, Optional[int]]] = []
    weight = 0.0
    mask = 0
    for root in sorted(comps, key=lambda rr: min(comps[rr])):
        idx = sorted(comps[root])
        k = len(idx)
        sub = table.dist[np.ix_(idx, idx)]
        bsub = table.bdist[idx]
        if k <= _DP_MAX:
            _, partner = _kernel.match_component_dp(k, sub, bsub)
        else:
            partner = _blossom_component(sub, bsub)
        pp, ww, mm = _result_from_partner(table, partner, idx)
        pairs.extend(pp)
        weight += ww
        mask ^= mm
    return MatchingResult(pairs, weight, mask)


def _blossom_component(sub: np.ndarray, bsub: np.ndarray) -> np.ndarray:
    """Blossom solve on defects plus one boundary copy per defect."""
    k = len(bsub)
    G = nx.Graph()
    for i in range(k):
        G.add_edge(i, k + i, weight=float(bsub[i]))
        for j in range(i + 1, k):
            if sub[i, j] < bsub[i] + bsub[j]:
                G.add_edge(i, j, weight=float(sub[i, j]))
        for j in range(i + 1, k):
            G.add_edge(k + i, k + j, weight=0.0)
    matching = nx.min_weight_matching(G)
    partner = np.full(k, -1, dtype=np.int64)
    for a, b in matching:
        if a < k and b < k:
            partner[a] = b
            partner[b] = a
    return partner


def brute_force_matching(table: DistanceTable) -> MatchingResult:
    """Exhaustive minimum over all pairings (test oracle, <= 12 defects)."""
    m = len(table.defects)
    if m > _BRUTE_MAX:
        raise ValueError(f"brute force capped at {_BRUTE_MAX} defects")
    best = [np.inf, None]

    def rec(remaining: tuple[int, ...], acc: float, partner: dict):
        if acc >= best[0]:
            return
        if not remaining:
            best[0] = acc
            best[1] = dict(partner)
            return
        a = remaining[0]
        rest = remaining[1:]
        partner[a] = None
        rec(rest, acc + table.bdist[a], partner)
        for i, b in enumerate(rest):
            partner[a] = b
            partner[b] = a
            rec(rest[:i] + rest[i + 1:], acc + table.dist[a, b], partner)
            del partner[b]
        del partner[a]

    rec(tuple(range(m)), 0.0, {})
    pairs = []
    mask = 0
    weight = 0.0
    seen = set()
    for a in range(m):
        if a in seen:
            continue
        b = best[1][a]
        seen.add(a)
        if b is None:
            pairs.append((a, None))
            weight += table.bdist[a]
            mask ^= int(table.bmasks[a])
        else:
            seen.add(b)
            pairs.append((a, b))
            weight += table.dist[a, b]
            mask ^= int(table.masks[a, b])
    return MatchingResult(pairs, weight, mask)


def greedy_matching(table: DistanceTable) -> MatchingResult:
    """Nearest-neighbor heuristic; upper bound used in tests."""
    m = len(table.defects)
    unused = set(range(m))
    pairs = []
    weight = 0.0
    mask = 0
    while unused:
        a = min(unused)
        unused.remove(a)
        best_cost = table.bdist[a]
        best_b = None
        for b in sorted(unused):
            if table.dist[a, b] < best_cost:
                best_cost = table.dist[a, b]
                best_b = b
        if best_b is None:
            pairs.append((a, None))
            mask ^= int(table.bmasks[a])
        else:
            unused.remove(best_b)
            pairs.append((a, best_b))
            mask ^= int(table.masks[a, best_b])
        weight += best_cost
    return MatchingResult(pairs, weight, mask)
