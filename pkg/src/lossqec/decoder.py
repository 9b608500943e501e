"""Loss-aware and naive matching decoders.

The loss-aware decoder augments the depolarizing detector error model,
per shot, with precomputed erasure fragments for every potential loss
location compatible with each herald, weighted by the conditional
probability of that location given the herald history.  Lost stabilizer
ancillas additionally trigger graph surgery: their detector nodes are
contracted onto the same stabilizer one cycle later (or the boundary).

The naive baseline folds every location fragment in once, weighted by its
prior probability, and never reacts to heralds.

Graphs are assembled as flat edge arrays: endpoints are remapped through the
per-shot contraction, exclusive location mixtures are summed, and
independent sources are combined through the odd-count probability
(1 - prod(1 - 2 p_i)) / 2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .builder import (
    BOUNDARY,
    ExperimentPlan,
    compile_shot,
    contraction_map,
)
from .circuit import DetectorDef
from .dem import (
    DetectorErrorModel,
    ErrorMechanism,
    GaugeSimulator,
    MatchingGraph,
    PROB_CLAMP,
    _FaultPropagator,
    build_base_dem,
    decompose_graphlike,
    gauge_mechanisms,
)
from .matching import CsrGraph, defect_distances, min_weight_perfect_matching, to_csr
from .noise import (
    FULL_ROUND,
    Herald,
    LossPattern,
    flip_probability,
    stabilizer_loss_distribution,
    standard_ldu_loss_distribution,
)

END_SLOT = -2  # location class: no gates erased, reset at the round's end
_RESCUE_PROB = 1e-15


@dataclass(frozen=True)
class LocationKey:
    """One potential loss location: erase from (round, slot) until a reset at
    reload_round (== rounds means the pre-readout reset)."""

    atom: int
    round: int
    slot: int  # 1..n_stab, FULL_ROUND (whole round) or END_SLOT
    reload_round: int


def conditional_probabilities(
    protocol: str,
    source: str,
    n_stab: int,
    r: int,
    r_l: int,
    p_l: float,
    p_d: float,
    rounds: int,
    is_ancilla: bool = False,
) -> list[tuple[tuple[int, int, int], float]]:
    """Weights over potential loss locations given one herald.

    Returns [((round, slot_class, reload_round), weight)] with weights
    normalized to 1.  ``r_l`` is the most recent earlier herald round for the
    same atom (-1 if none).
    """
    if is_ancilla:
        dist = stabilizer_loss_distribution(p_l, n_stab)
        tot = dist[1:].sum()
        if tot <= 0.0:
            return []
        return [((r, i, r), dist[i] / tot) for i in range(1, n_stab + 1)]

    if protocol == "none":
        dist = stabilizer_loss_distribution(p_l, n_stab)
        entries = []
        for r_t in range(rounds):
            surv = dist[0] ** r_t
            for i in range(1, n_stab + 1):
                entries.append(((r_t, i, rounds), dist[i] * surv))
        return _normalized(entries)

    if protocol == "teleportation":
        if source == "final":
            dist = stabilizer_loss_distribution(p_l, n_stab + 1)
            entries = [((r, i, rounds), dist[i]) for i in range(1, n_stab + 1)]
            if r >= 1:
                entries.append(((r, FULL_ROUND, rounds), dist[n_stab + 1]))
            return _normalized(entries)
        dist = stabilizer_loss_distribution(p_l, n_stab + 2)
        entries = [((r, i, r), dist[i]) for i in range(1, n_stab + 1)]
        entries.append(((r, END_SLOT, r), dist[n_stab + 1]))
        if r >= 1:
            entries.append(((r, FULL_ROUND, r), dist[n_stab + 2]))
        return _normalized(entries)

    if protocol != "standard":
        raise ValueError(protocol)
    dist = standard_ldu_loss_distribution(p_l, n_stab)
    p0 = dist[0]
    pf = flip_probability(p_d)
    entries = []
    if pf == 0.0:
        if source == "final":
            for i in range(1, n_stab + 1):
                entries.append(((r, i, rounds), dist[i]))
            if r - 1 > r_l and r >= 1:
                entries.append(((r, FULL_ROUND, rounds), dist[n_stab + 2] / 2.0))
            return _normalized(entries)
        for i in range(1, n_stab + 1):
            entries.append(((r, i, r), dist[i]))
        entries.append(((r, END_SLOT, r), dist[n_stab + 1] + dist[n_stab + 2] / 2.0))
        if r - 1 > r_l and r >= 1:
            entries.append(((r, FULL_ROUND, r), dist[n_stab + 2] / 2.0))
        return _normalized(entries)

    final = source == "final"
    reload = rounds if final else r
    for r_t in range(max(r_l + 1, 0), r + 1):
        surv = p0 ** (r_t - r_l - 1)
        detect = 1.0 if final else (1.0 - pf)
        if r_t == r:
            top = n_stab if final else n_stab + 1
            for i in range(1, top + 1):
                w = dist[i] * detect * surv
                slot = i if i <= n_stab else END_SLOT
                entries.append(((r, slot, reload), w))
            if not final:
                entries.append(((r, END_SLOT, reload), dist[n_stab + 2] / 2.0 * surv))
        else:
            missed = pf ** (r - r_t)
            for i in range(1, n_stab + 1):
                entries.append(((r_t, i, reload), dist[i] * missed * detect * surv))
            entries.append(((r_t + 1, FULL_ROUND, reload), dist[n_stab + 1] * missed * detect * surv))
            entries.append(
                ((r_t + 1, FULL_ROUND, reload),
                 dist[n_stab + 2] / 2.0 * pf ** (r - r_t - 1) * detect * surv)
            )
    if not final:
        entries.append(((r, END_SLOT, r), pf * p0 ** (r - r_l)))
    return _normalized(entries)


def _normalized(entries):
    tot = sum(w for _, w in entries)
    if tot <= 0.0:
        return []
    merged: dict = {}
    order = []
    for loc, w in entries:
        if loc not in merged:
            order.append(loc)
            merged[loc] = 0.0
        merged[loc] += w / tot
    return [(loc, merged[loc]) for loc in order]


def parse_heralds(text: str) -> list[Herald]:
    """Parse the standalone herald list format, one per line:
    ``loss atom=A round=R source=S [prev=K]``."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] != "loss":
            raise ValueError(f"bad herald line: {line!r}")
        kv = dict(tok.split("=", 1) for tok in tokens[1:])
        out.append(
            Herald(
                atom=int(kv["atom"]),
                round=int(kv["round"]),
                source=kv.get("source", "ldu"),
                prev_herald_round=int(kv.get("prev", -1)),
            )
        )
    return out


@dataclass
class ShotData:
    """Decoder input: the visible outcome of one shot."""

    detectors: np.ndarray
    observable: int
    heralds: Sequence[Herald]
    heralded_z: Sequence[tuple[int, int]]
    absent_ancilla: dict
    det_patches: dict


@dataclass
class _EdgeArrays:
    u: np.ndarray
    v: np.ndarray
    obs: np.ndarray
    p: np.ndarray


class _DecoderCore:
    """State shared by both decoders: base model, erasure fragments,
    heralded-Z frame bookkeeping, vectorized graph assembly."""

    def __init__(self, plan: ExperimentPlan, chain_cap: int = 2):
        self.plan = plan
        self.chain_cap = chain_cap
        self.N = plan.n_detectors  # boundary node id in packed arrays
        self.base_dem = build_base_dem(plan)
        self.base_edges, self.undetectable = self._edge_arrays(self.base_dem.mechanisms)
        self.base_csr = self._csr_from_packed(*self._merge_sources([
            (self._pack(self.base_edges.u, self.base_edges.v, self.base_edges.obs),
             self.base_edges.p)
        ]))
        self._identity = np.arange(self.N + 1, dtype=np.int64)
        self._fragments: dict[LocationKey, tuple] = {}
        self._tables: dict = {}
        self._herald_arrays_cache: dict = {}
        self._gauge_snapshots = None
        self._warned_zero = False
        self._prepare_heralded_z()

    # -- edge-array plumbing --------------------------------------------------

    def _edge_arrays(self, mechanisms) -> tuple[_EdgeArrays, list[ErrorMechanism]]:
        us, vs, obs, ps = [], [], [], []
        undetectable = []
        for m in mechanisms:
            if len(m.dets) == 0:
                if m.obs:
                    undetectable.append(m)
                continue
            u = m.dets[0]
            v = m.dets[1] if len(m.dets) == 2 else self.N
            us.append(min(u, v))
            vs.append(max(u, v))
            obs.append(m.obs)
            ps.append(m.prob)
        return (
            _EdgeArrays(
                np.asarray(us, dtype=np.int64),
                np.asarray(vs, dtype=np.int64),
                np.asarray(obs, dtype=np.int64),
                np.asarray(ps, dtype=np.float64),
            ),
            undetectable,
        )

    def _pack(self, u, v, obs):
        return (u * (self.N + 1) + v) * 2 + obs

    def _unpack(self, keys):
        obs = keys & 1
        uv = keys >> 1
        return uv // (self.N + 1), uv % (self.N + 1), obs

    def _remap(self, edges: _EdgeArrays, remap: Optional[np.ndarray]):
        if remap is None:
            return self._pack(edges.u, edges.v, edges.obs), edges.p
        u2 = remap[edges.u]
        v2 = remap[edges.v]
        lo = np.minimum(u2, v2)
        hi = np.maximum(u2, v2)
        live = lo != hi
        return self._pack(lo[live], hi[live], edges.obs[live]), edges.p[live]

    @staticmethod
    def _group_sum(keys, ps):
        if len(keys) == 0:
            return keys, ps
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        ps = ps[order]
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        return keys[starts], np.add.reduceat(ps, starts)

    def _merge_sources(self, parts) -> tuple[np.ndarray, np.ndarray]:
        """Combine (keys, p) segments as independent sources of flips."""
        keys = np.concatenate([k for k, _ in parts]) if parts else np.empty(0, np.int64)
        ps = np.concatenate([p for _, p in parts]) if parts else np.empty(0)
        if len(keys) == 0:
            return keys, ps
        ps = np.minimum(ps, 0.5)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        ps = ps[order]
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        merged = (1.0 - np.multiply.reduceat(1.0 - 2.0 * ps, starts)) / 2.0
        return keys[starts], merged

    def _csr_from_packed(self, keys, ps) -> CsrGraph:
        N = self.N
        live = ps > 0.0
        keys = keys[live]
        ps = ps[live]
        u, v, obs = self._unpack(keys)
        pc = np.clip(ps, 1e-300, PROB_CLAMP)
        w = np.log((1.0 - pc) / pc)
        both = v < N
        uu = np.concatenate([u, v[both]])
        vv = np.concatenate([v, u[both]])
        ww = np.concatenate([w, w[both]])
        oo = np.concatenate([obs, obs[both]])
        order = np.argsort(uu, kind="stable")
        counts = np.bincount(uu, minlength=N + 1)
        indptr = np.zeros(N + 2, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return CsrGraph(N + 1, indptr, vv[order], ww[order], oo[order], N)

    def assemble_csr(self, heralds: Sequence[Herald], kappa: dict,
                     base: Optional[_EdgeArrays] = None,
                     extra_groups: Sequence = ()) -> CsrGraph:
        base = base if base is not None else self.base_edges
        remap = None
        if kappa:
            remap = self._identity.copy()
            for k, tgt in kappa.items():
                remap[k] = self.N if tgt == BOUNDARY else tgt
        parts = [self._remap(base, remap)]
        groups = [self._herald_arrays(h) for h in heralds]
        groups.extend(extra_groups)
        for arrays in groups:
            if arrays is None or len(arrays.u) == 0:
                continue
            keys, ps = self._remap(arrays, remap)
            parts.append(self._group_sum(keys, ps))
        return self._csr_from_packed(*self._merge_sources(parts))

    def merged_edges(self, heralds: Sequence[Herald], kappa: dict,
                     base: Optional[_EdgeArrays] = None,
                     extra_groups: Sequence = ()) -> _EdgeArrays:
        base = base if base is not None else self.base_edges
        remap = None
        if kappa:
            remap = self._identity.copy()
            for k, tgt in kappa.items():
                remap[k] = self.N if tgt == BOUNDARY else tgt
        parts = [self._remap(base, remap)]
        for h in heralds:
            arrays = self._herald_arrays(h)
            if arrays is not None and len(arrays.u):
                parts.append(self._group_sum(*self._remap(arrays, remap)))
        for arrays in extra_groups:
            if arrays is not None and len(arrays.u):
                parts.append(self._group_sum(*self._remap(arrays, remap)))
        keys, ps = self._merge_sources(parts)
        u, v, obs = self._unpack(keys)
        return _EdgeArrays(u, v, obs, ps)

    # -- heralded-Z frame updates ------------------------------------------

    def _prepare_heralded_z(self):
        plan = self.plan
        geom = plan.geometry
        self._hz_records: dict[tuple[int, int], np.ndarray] = {}
        self._hz_base: dict[tuple[int, int], tuple[tuple[int, ...], int]] = {}
        keys = sorted(geom.ldu_z_slot)
        if not keys:
            return
        prop = _FaultPropagator(plan.program, plan.program.base_enabled)
        n = plan.program.n
        injections = []
        for q, r in keys:
            zrow = np.zeros(n, dtype=bool)
            zrow[q] = True
            injections.append((geom.ldu_z_slot[(q, r)], np.zeros(n, dtype=bool), zrow))
        flips = prop.record_flips(injections)
        for row, key in enumerate(keys):
            recs = np.nonzero(flips[row])[0]
            self._hz_records[key] = recs
            dets = []
            for det_id, dd in enumerate(plan.detectors):
                par = 0
                for rec in dd.records:
                    par ^= int(flips[row, rec])
                if par:
                    dets.append(det_id)
            obs = 0
            for j, od in enumerate(plan.observables):
                par = 0
                for rec in od.records:
                    par ^= int(flips[row, rec])
                if par:
                    obs |= 1 << j
            self._hz_base[key] = (tuple(dets), obs)

    def heralded_z_frame(self, shot: ShotData) -> tuple[np.ndarray, int]:
        """Predicted detector and observable flips of the recorded heralded-Z
        phase updates, in the shot's detector conventions."""
        flip = np.zeros(self.plan.n_detectors, dtype=np.uint8)
        obs = 0
        if not shot.heralded_z:
            return flip, obs
        for key in shot.heralded_z:
            dets, ob = self._hz_base[tuple(key)]
            for d in dets:
                flip[d] ^= 1
            obs ^= ob
        if shot.det_patches:
            rec_flip = np.zeros(self.plan.program.num_measurements, dtype=np.uint8)
            for key in shot.heralded_z:
                rec_flip[self._hz_records[tuple(key)]] ^= 1
            for det_id, recs in shot.det_patches.items():
                v = 0
                for rec in recs:
                    v ^= int(rec_flip[rec])
                flip[det_id] = v
        return flip, obs

    # -- erasure fragments ---------------------------------------------------

    def _snapshots(self):
        if self._gauge_snapshots is None:
            plan = self.plan
            sim = GaugeSimulator(plan.program.n, plan.program.num_measurements)
            snaps = []
            prev = 0
            for s in self._round_starts():
                sim.run(plan.program, plan.program.base_enabled, start=prev, stop=s)
                snaps.append((s, sim.snapshot()))
                prev = s
            self._gauge_snapshots = snaps
        return self._gauge_snapshots

    def _round_starts(self) -> list[int]:
        # first instruction index of each round (the scheduled ancilla resets)
        plan = self.plan
        first_anc = plan.geometry.n_data
        from . import _kernel as K

        starts = []
        for k in range(len(plan.program.ops)):
            if (
                plan.program.ops[k] == K.OP_R
                and plan.program.t0[k] == first_anc
                and plan.program.base_enabled[k]
            ):
                starts.append(k)
                if len(starts) == plan.spec.rounds:
                    break
        return starts

    def fragment(self, key: LocationKey) -> tuple:
        """Erasure mechanisms for one loss location, as edge arrays at even
        odds each (duplicated footprints collapse to a single bit)."""
        cached = self._fragments.get(key)
        if cached is not None:
            return cached
        plan = self.plan
        geom = plan.geometry
        n_stab = int(geom.n_stab_slots[key.atom])
        slot = key.slot
        if slot == END_SLOT:
            interval_slot = geom.n_tot_slots(key.atom) + 1  # erases nothing
            cz_losses = []
        elif slot == FULL_ROUND:
            interval_slot = FULL_ROUND
            cz_losses = []
        else:
            interval_slot = slot
            cz_losses = [(key.atom, key.round, slot)] if slot <= n_stab else []
        pattern = LossPattern(
            intervals=[(key.atom, key.round, interval_slot, key.reload_round)],
            loss_cz_slots=cz_losses,
        )
        comp = compile_shot(plan, pattern)
        dets = list(plan.detectors)
        for det_id, recs in comp.det_patches.items():
            dets[det_id] = DetectorDef(recs, plan.detectors[det_id].coord)
        snaps = self._snapshots()
        start_idx, snap = snaps[min(key.round, len(snaps) - 1)]
        sim = GaugeSimulator(plan.program.n, plan.program.num_measurements)
        sim.restore(snap)
        mechs = gauge_mechanisms(plan, comp.enabled, dets, sim=sim, start=start_idx)
        dem = decompose_graphlike(
            DetectorErrorModel(mechs, plan.det_coords, plan.n_detectors), plan
        )
        # independent even-odds bits with identical footprints merge to one
        # even-odds bit, so duplicates within a fragment collapse
        uniq = sorted({(m.dets, m.obs) for m in dem.mechanisms})
        us, vs, obs = [], [], []
        for dset, ob in uniq:
            if len(dset) == 0 and ob == 0:
                continue
            u = dset[0] if dset else self.N
            v = dset[1] if len(dset) == 2 else self.N
            us.append(min(u, v))
            vs.append(max(u, v))
            obs.append(ob)
        out = (
            np.asarray(us, dtype=np.int64),
            np.asarray(vs, dtype=np.int64),
            np.asarray(obs, dtype=np.int64),
        )
        self._fragments[key] = out
        return out

    # -- conditional tables ---------------------------------------------------

    def herald_locations(self, herald: Herald) -> list[tuple[LocationKey, float]]:
        plan = self.plan
        geom = plan.geometry
        spec = plan.spec
        atom = herald.atom
        is_anc = atom >= geom.n_data
        n_stab = int(geom.n_stab_slots[atom])
        cache_key = (n_stab, is_anc, herald.source, herald.round, herald.prev_herald_round)
        cached = self._tables.get(cache_key)
        if cached is None:
            table = conditional_probabilities(
                spec.protocol,
                herald.source,
                n_stab,
                herald.round,
                herald.prev_herald_round,
                spec.p_l,
                spec.p_d,
                spec.rounds,
                is_ancilla=is_anc,
            )
            kept = []
            for (r_t, slot, reload), w in table:
                span = (herald.round if reload == spec.rounds else reload) - r_t
                if span > self.chain_cap:
                    continue
                kept.append(((r_t, slot, reload), w))
            tot = sum(w for _, w in kept)
            cached = [(loc, w / tot) for loc, w in kept] if tot > 0 else []
            self._tables[cache_key] = cached
        if not cached and not self._warned_zero:
            warnings.warn("herald with zero total location probability ignored")
            self._warned_zero = True
        return [
            (LocationKey(atom, r_t, slot, reload), w)
            for (r_t, slot, reload), w in cached
        ]

    def _herald_arrays(self, herald: Herald) -> Optional[_EdgeArrays]:
        """All fragment rows of one herald, concatenated, at p = w/2 each."""
        hkey = (herald.atom, herald.round, herald.source, herald.prev_herald_round)
        cached = self._herald_arrays_cache.get(hkey)
        if cached is not None:
            return cached
        locs = self.herald_locations(herald)
        us, vs, obs, ps = [], [], [], []
        for lkey, w in locs:
            fu, fv, fo = self.fragment(lkey)
            us.append(fu)
            vs.append(fv)
            obs.append(fo)
            ps.append(np.full(len(fu), 0.5 * w))
        arrays = None
        if us:
            arrays = _EdgeArrays(
                np.concatenate(us), np.concatenate(vs),
                np.concatenate(obs), np.concatenate(ps),
            )
        self._herald_arrays_cache[hkey] = arrays
        return arrays

    # -- decoding ----------------------------------------------------------------

    def decode_against(self, csr: CsrGraph, shot: ShotData) -> int:
        flip, obs_frame = self.heralded_z_frame(shot)
        syndrome = shot.detectors ^ flip
        defects = [int(i) for i in np.nonzero(syndrome)[0]]
        if not defects:
            return obs_frame & 1
        try:
            table = defect_distances(csr, defects)
        except ValueError:
            table = defect_distances(_with_rescue_edges(csr, defects), defects)
        result = min_weight_perfect_matching(table)
        return (result.obs_mask ^ obs_frame) & 1


def _with_rescue_edges(csr: CsrGraph, defects) -> CsrGraph:
    """Feeble boundary edges for defects orphaned by truncated location sets."""
    w = math.log((1.0 - _RESCUE_PROB) / _RESCUE_PROB)
    nb = csr.boundary
    extra = len(defects)
    indptr = csr.indptr.copy()
    # append edges defect->boundary and boundary->defect
    add_per_node = np.zeros(csr.num_nodes, dtype=np.int64)
    for u in defects:
        add_per_node[u] += 1
        add_per_node[nb] += 1
    new_indptr = np.zeros_like(indptr)
    new_indptr[1:] = np.cumsum(np.diff(indptr) + add_per_node)
    m2 = int(new_indptr[-1])
    indices = np.zeros(m2, dtype=np.int64)
    weights = np.zeros(m2, dtype=np.float64)
    obs = np.zeros(m2, dtype=np.int64)
    fill = new_indptr[:-1].copy()
    for u in range(csr.num_nodes):
        k0, k1 = csr.indptr[u], csr.indptr[u + 1]
        cnt = k1 - k0
        indices[fill[u]: fill[u] + cnt] = csr.indices[k0:k1]
        weights[fill[u]: fill[u] + cnt] = csr.weights[k0:k1]
        obs[fill[u]: fill[u] + cnt] = csr.obs[k0:k1]
        fill[u] += cnt
    for u in defects:
        indices[fill[u]] = nb
        weights[fill[u]] = w
        fill[u] += 1
        indices[fill[nb]] = u
        weights[fill[nb]] = w
        fill[nb] += 1
    return CsrGraph(csr.num_nodes, new_indptr, indices, weights, obs, nb)


class LossAwareDecoder:
    """Decoder using herald locations to reweight the matching graph."""

    def __init__(self, plan: ExperimentPlan, chain_cap: int = 2):
        self.core = _DecoderCore(plan, chain_cap)
        self.plan = plan
        self._csr_cache: dict = {}

    def decode(self, shot: ShotData) -> int:
        core = self.core
        kappa = contraction_map(self.plan, shot.absent_ancilla)
        if not shot.heralds and not kappa:
            return core.decode_against(core.base_csr, shot)
        cache_key = (
            tuple(sorted((h.atom, h.round, h.source, h.prev_herald_round) for h in shot.heralds)),
            tuple(sorted((a, tuple(sorted(rs))) for a, rs in shot.absent_ancilla.items())),
        )
        csr = self._csr_cache.get(cache_key)
        if csr is None:
            csr = core.assemble_csr(shot.heralds, kappa)
            if len(self._csr_cache) < 30000:
                self._csr_cache[cache_key] = csr
        return core.decode_against(csr, shot)

    def graph_for(self, heralds: Sequence[Herald], absent_ancilla: dict) -> MatchingGraph:
        """Augmented matching graph for a given herald set (inspection API)."""
        kappa = contraction_map(self.plan, absent_ancilla)
        edges = self.core.merged_edges(heralds, kappa)
        return _edges_to_graph(edges, self.core)


def _edges_to_graph(edges: _EdgeArrays, core: _DecoderCore) -> MatchingGraph:
    out = []
    negw = 0
    for u, v, o, p in zip(edges.u, edges.v, edges.obs, edges.p):
        if p <= 0.0:
            continue
        pc = min(float(p), PROB_CLAMP)
        if p > PROB_CLAMP:
            negw += 1
        w = math.log((1.0 - pc) / pc)
        uu = BOUNDARY if u == core.N else int(u)
        vv = BOUNDARY if v == core.N else int(v)
        if uu == BOUNDARY:
            uu, vv = vv, uu
        out.append((uu, vv, w, pc, int(o)))
    return MatchingGraph(core.plan.n_detectors, out, list(core.undetectable), negw)


class NaiveDecoder:
    """Static graph: location fragments folded in at their prior weights."""

    def __init__(self, plan: ExperimentPlan, chain_cap: int = 2):
        self.core = _DecoderCore(plan, chain_cap)
        self.plan = plan
        self._static = self._build_static()
        self._csr0 = self.core.assemble_csr([], {}, base=self._static)
        self._csr_cache: dict = {}

    def _prior_groups(self) -> list[_EdgeArrays]:
        plan = self.plan
        spec = plan.spec
        geom = plan.geometry
        core = self.core
        R = spec.rounds
        groups = []

        def collect(entries):
            us, vs, obs, ps = [], [], [], []
            for lkey, w in entries:
                fu, fv, fo = core.fragment(lkey)
                us.append(fu)
                vs.append(fv)
                obs.append(fo)
                ps.append(np.full(len(fu), 0.5 * w))
            if not us:
                return None
            return _EdgeArrays(
                np.concatenate(us), np.concatenate(vs),
                np.concatenate(obs), np.concatenate(ps),
            )

        for atom in range(plan.layout.n_qubits):
            n_stab = int(geom.n_stab_slots[atom])
            is_anc = atom >= geom.n_data
            if is_anc:
                dist = stabilizer_loss_distribution(spec.p_l, n_stab)
                for r in range(R):
                    entries = [
                        (LocationKey(atom, r, i, r), dist[i])
                        for i in range(1, n_stab + 1)
                    ]
                    groups.append(collect(entries))
                continue
            if spec.protocol == "teleportation":
                dist = stabilizer_loss_distribution(spec.p_l, n_stab + 2)
                for r in range(R):
                    reload = r if r < R - 1 else R
                    entries = [
                        (LocationKey(atom, r, i, reload), dist[i])
                        for i in range(1, n_stab + 1)
                    ]
                    if r < R - 1:
                        entries.append((LocationKey(atom, r, END_SLOT, r), dist[n_stab + 1]))
                    if r >= 1:
                        entries.append((LocationKey(atom, r, FULL_ROUND, reload), dist[n_stab + 2]))
                    groups.append(collect(entries))
            elif spec.protocol == "standard":
                dist = standard_ldu_loss_distribution(spec.p_l, n_stab)
                pf = flip_probability(spec.p_d)
                for r in range(R):
                    reload = r if r < R - 1 else R
                    entries = [
                        (LocationKey(atom, r, i, reload), dist[i])
                        for i in range(1, n_stab + 1)
                    ]
                    if r < R - 1:
                        end_w = dist[n_stab + 1] + dist[n_stab + 2] / 2.0
                        if pf > 0.0:
                            end_w += pf * dist[0]
                        entries.append((LocationKey(atom, r, END_SLOT, r), end_w))
                    if r >= 1:
                        entries.append((LocationKey(atom, r, FULL_ROUND, reload), dist[n_stab + 2] / 2.0))
                    groups.append(collect(entries))
            elif spec.p_l > 0.0:
                dist = stabilizer_loss_distribution(spec.p_l, n_stab)
                for r in range(R):
                    entries = [
                        (LocationKey(atom, r, i, R), dist[i])
                        for i in range(1, n_stab + 1)
                    ]
                    groups.append(collect(entries))
        return [g for g in groups if g is not None]

    def _build_static(self) -> _EdgeArrays:
        if self.plan.spec.p_l == 0.0 and flip_probability(self.plan.spec.p_d) == 0.0:
            return self.core.base_edges
        groups = self._prior_groups()
        return self.core.merged_edges([], {}, extra_groups=groups)

    def decode(self, shot: ShotData) -> int:
        kappa = contraction_map(self.plan, shot.absent_ancilla)
        if not kappa:
            return self.core.decode_against(self._csr0, shot)
        key = tuple(sorted((a, tuple(sorted(rs))) for a, rs in shot.absent_ancilla.items()))
        csr = self._csr_cache.get(key)
        if csr is None:
            csr = self.core.assemble_csr([], kappa, base=self._static)
            if len(self._csr_cache) < 30000:
                self._csr_cache[key] = csr
        return self.core.decode_against(csr, shot)


def precompute_location_dems(plan: ExperimentPlan) -> dict[LocationKey, list]:
    """Eagerly build the same-round erasure fragments for every atom and slot."""
    core = _DecoderCore(plan)
    out = {}
    geom = plan.geometry
    R = plan.spec.rounds
    for atom in range(plan.layout.n_qubits):
        n_stab = int(geom.n_stab_slots[atom])
        is_anc = atom >= geom.n_data
        for r in range(R):
            reload = r if (is_anc or r < R - 1) else R
            for slot in range(1, n_stab + 1):
                key = LocationKey(atom, r, slot, reload)
                fu, fv, fo = core.fragment(key)
                out[key] = [
                    (
                        tuple(d for d in (int(u), int(v)) if d != core.N),
                        int(o),
                    )
                    for u, v, o in zip(fu, fv, fo)
                ]
            if not is_anc and plan.spec.protocol in ("standard", "teleportation") and r < R - 1:
                key = LocationKey(atom, r, END_SLOT, r)
                fu, fv, fo = core.fragment(key)
                out[key] = [
                    (
                        tuple(d for d in (int(u), int(v)) if d != core.N),
                        int(o),
                    )
                    for u, v, o in zip(fu, fv, fo)
                ]
    return out
