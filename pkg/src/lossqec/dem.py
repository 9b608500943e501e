"""Detector error model construction.

Two mechanism sources feed the model:

* Pauli-channel faults, enumerated component by component and pushed through
  the remaining circuit by phase-free Clifford conjugation (exact, no
  sampling).
* Erasure randomness of loss-modified circuits: every non-deterministic
  branch of the noiseless effective circuit (reset back-action, orphaned
  stabilizer measurements) contributes an even-odds mechanism.  These are
  extracted symbolically by tagging each fresh random bit with the Pauli
  frame connecting its two branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .builder import BOUNDARY, ExperimentPlan, map_dets
from .circuit import Circuit, DetectorDef, ObservableDef
from .engine import Program, Tableau, compile_circuit

PROB_CLAMP = 0.5  # probabilities above even odds are clamped (flagged) so
# log-likelihood weights stay nonnegative for the shortest-path stage


@dataclass(frozen=True)
class ErrorMechanism:
    prob: float
    dets: tuple[int, ...]
    obs: int  # bitmask over observables
    origin: str = ""


@dataclass
class DetectorErrorModel:
    mechanisms: list[ErrorMechanism]
    det_coords: list[tuple[float, float, float]]
    num_detectors: int


@dataclass
class MatchingGraph:
    """Weighted decoding graph; node ``BOUNDARY`` (-1) is the open boundary."""

    num_nodes: int
    edges: list[tuple[int, int, float, float, int]]  # (u, v, weight, prob, obs)
    undetectable: list[ErrorMechanism] = field(default_factory=list)
    negative_weight_edges: int = 0


# --- exact Pauli fault propagation -------------------------------------------


class _FaultPropagator:
    """Batched phase-free conjugation of Pauli faults through a program.

    Rows are faults; columns qubits.  Measurement flips are the X component
    at the measured qubit; resets clear both components.
    """

    def __init__(self, program: Program, enabled: np.ndarray):
        self.program = program
        self.enabled = enabled

    def record_flips(self, injections: Sequence[tuple[int, np.ndarray, np.ndarray]]) -> np.ndarray:
        """injections: (instr index after which the fault appears, x row, z row).

        Returns a bool matrix (num faults, num records).
        """
        prog = self.program
        n = prog.n
        m = len(injections)
        flips = np.zeros((m, prog.num_measurements), dtype=bool)
        if m == 0:
            return flips
        order = np.argsort([k for k, _, _ in injections], kind="stable")
        fx = np.zeros((m, n), dtype=bool)
        fz = np.zeros((m, n), dtype=bool)
        active = np.zeros(m, dtype=bool)
        pos = 0
        mc = 0
        from . import _kernel as K

        for k in range(len(prog.ops)):
            while pos < m and injections[order[pos]][0] == k:
                row = order[pos]
                fx[row] = injections[row][1]
                fz[row] = injections[row][2]
                active[row] = True
                pos += 1
            if not prog.base_enabled[k] and not self.enabled[k]:
                pass
            if not self.enabled[k]:
                if prog.ops[k] == K.OP_M:
                    mc += 1
                continue
            op = prog.ops[k]
            a = prog.t0[k]
            if op == K.OP_CZ:
                b = prog.t1[k]
                fz[:, a] ^= fx[:, b]
                fz[:, b] ^= fx[:, a]
            elif op == K.OP_H:
                tmp = fx[:, a].copy()
                fx[:, a] = fz[:, a]
                fz[:, a] = tmp
            elif op == K.OP_M:
                flips[:, mc] = fx[:, a]
                mc += 1
            elif op == K.OP_R:
                fx[:, a] = False
                fz[:, a] = False
        return flips


_PAULI_1Q = {1: (True, False), 2: (True, True), 3: (False, True)}  # X, Y, Z


def _component_injections(program: Program, enabled: np.ndarray):
    """Yield (instr idx, prob, label, x_parts, z_parts) per channel component.

    Each two-qubit Pauli component is split into its X-type and Z-type parts,
    which propagate independently; their record flips are combined afterwards.
    """
    from . import _kernel as K

    n = program.n
    for k in range(len(program.ops)):
        if not enabled[k]:
            continue
        op = program.ops[k]
        p = program.prob[k]
        if p <= 0.0:
            continue
        if op == K.OP_D1:
            q = program.t0[k]
            for pauli in (1, 2, 3):
                xbit, zbit = _PAULI_1Q[pauli]
                yield k, p / 3.0, f"D1[{k}]:{pauli}", [(q, xbit)], [(q, zbit)]
        elif op == K.OP_D2:
            q0, q1 = program.t0[k], program.t1[k]
            for comp in range(1, 16):
                pa, pb = divmod(comp, 4)
                xs, zs = [], []
                for q, pl in ((q0, pa), (q1, pb)):
                    if pl:
                        xbit, zbit = _PAULI_1Q[pl]
                        xs.append((q, xbit))
                        zs.append((q, zbit))
                yield k, p / 15.0, f"D2[{k}]:{comp}", xs, zs
        elif op == K.OP_ZERR:
            q = program.t0[k]
            yield k, p, f"ZE[{k}]", [(q, False)], [(q, True)]


def enumerate_mechanisms(
    plan: ExperimentPlan,
    enabled: Optional[np.ndarray] = None,
    detectors: Optional[Sequence[DetectorDef]] = None,
    split_sectors: bool = True,
) -> DetectorErrorModel:
    """Exact DEM of the (optionally loss-modified) circuit's Pauli channels.

    With ``split_sectors`` each component is decomposed into its X-type and
    Z-type halves before mapping to detectors, which is the graph-friendly
    approximation of correlated (Y) errors as independent flips.
    """
    program = plan.program
    mask = plan.program.base_enabled if enabled is None else enabled
    dets = plan.detectors if detectors is None else detectors
    prop = _FaultPropagator(program, mask)

    comps = list(_component_injections(program, mask))
    injections = []
    part_of = []  # mechanism component index per injection row
    n = program.n
    for ci, (k, p, label, xs, zs) in enumerate(comps):
        if split_sectors:
            xrow = np.zeros(n, dtype=bool)
            zrow = np.zeros(n, dtype=bool)
            for q, bit in xs:
                xrow[q] = bit
            parts = []
            if xrow.any():
                parts.append((xrow, np.zeros(n, dtype=bool)))
            for q, bit in zs:
                zrow[q] = bit
            if zrow.any():
                parts.append((np.zeros(n, dtype=bool), zrow))
            for xr, zr in parts:
                injections.append((k, xr, zr))
                part_of.append(ci)
        else:
            xrow = np.zeros(n, dtype=bool)
            zrow = np.zeros(n, dtype=bool)
            for q, bit in xs:
                xrow[q] = bit
            for q, bit in zs:
                zrow[q] = bit
            injections.append((k, xrow, zrow))
            part_of.append(ci)

    flips = prop.record_flips(injections)
    det_flips = _records_to_parities(flips, dets)
    obs_flips = _records_to_parities(flips, plan.observables)

    mechanisms: list[ErrorMechanism] = []
    for row in range(len(injections)):
        ci = part_of[row]
        k, p, label, _, _ = comps[ci]
        dset = tuple(int(i) for i in np.nonzero(det_flips[row])[0])
        obs = 0
        for j in np.nonzero(obs_flips[row])[0]:
            obs |= 1 << int(j)
        if not dset and not obs:
            continue
        mechanisms.append(ErrorMechanism(p, dset, obs, origin=label))
    return DetectorErrorModel(mechanisms, list(plan.det_coords), len(dets))


def _records_to_parities(flips: np.ndarray, defs) -> np.ndarray:
    out = np.zeros((flips.shape[0], len(defs)), dtype=bool)
    for j, d in enumerate(defs):
        for rec in d.records:
            out[:, j] ^= flips[:, rec]
    return out


# --- graphlike decomposition and merging --------------------------------------


def decompose_graphlike(dem: DetectorErrorModel, plan: Optional[ExperimentPlan] = None) -> DetectorErrorModel:
    """Split mechanisms with more than two flipped detectors.

    Components produced by the X/Z sector split are usually graphlike
    already; residual hyperedges (hook-type faults, erasure back-action) are
    split greedily: detectors are grouped by stabilizer and paired along the
    time axis first, remaining ones pairwise in sorted order, with the
    observable mask attached to the first part.  The symmetric difference of
    the parts always reproduces the original mechanism.
    """
    node_key = plan.node_key if plan is not None else None
    out: list[ErrorMechanism] = []
    for mech in dem.mechanisms:
        if len(mech.dets) <= 2:
            out.append(mech)
            continue
        parts = _greedy_pairs(mech.dets, node_key)
        for i, pp in enumerate(parts):
            out.append(
                ErrorMechanism(mech.prob, pp, mech.obs if i == 0 else 0,
                               origin=mech.origin + f"/part{i}")
            )
    return DetectorErrorModel(out, dem.det_coords, dem.num_detectors)


def _greedy_pairs(dets: tuple[int, ...], node_key) -> list[tuple[int, ...]]:
    if node_key is not None:
        order = sorted(dets, key=lambda d: (node_key[d][0], node_key[d][1]))
    else:
        order = sorted(dets)
    parts: list[tuple[int, ...]] = []
    rest: list[int] = []
    i = 0
    while i < len(order):
        if (
            node_key is not None
            and i + 1 < len(order)
            and node_key[order[i]][0] == node_key[order[i + 1]][0]
        ):
            parts.append((order[i], order[i + 1]))
            i += 2
        else:
            rest.append(order[i])
            i += 1
    while len(rest) >= 2:
        parts.append((rest.pop(0), rest.pop(0)))
    if rest:
        parts.append((rest.pop(),))
    return parts


def merge_probabilities(p1: float, p2: float) -> float:
    """Probability that an odd number of two independent events occur."""
    return p1 * (1.0 - p2) + p2 * (1.0 - p1)


def merge_independent(dem: DetectorErrorModel) -> DetectorErrorModel:
    acc: dict[tuple[tuple[int, ...], int], float] = {}
    order: list[tuple[tuple[int, ...], int]] = []
    for mech in dem.mechanisms:
        key = (tuple(sorted(mech.dets)), mech.obs)
        if key in acc:
            acc[key] = merge_probabilities(acc[key], mech.prob)
        else:
            acc[key] = mech.prob
            order.append(key)
    out = [ErrorMechanism(acc[k], k[0], k[1]) for k in sorted(order)]
    return DetectorErrorModel(out, dem.det_coords, dem.num_detectors)


def dem_to_graph(dem: DetectorErrorModel) -> MatchingGraph:
    edges = []
    undetectable = []
    negw = 0
    for mech in dem.mechanisms:
        if mech.prob <= 0.0:
            continue
        if len(mech.dets) == 0:
            undetectable.append(mech)
            continue
        if len(mech.dets) > 2:
            raise ValueError(f"non-graphlike mechanism: {mech}")
        p = mech.prob
        if p > PROB_CLAMP:
            negw += 1
            p = PROB_CLAMP
        w = math.log((1.0 - p) / p)
        u = mech.dets[0]
        v = mech.dets[1] if len(mech.dets) == 2 else BOUNDARY
        edges.append((u, v, w, p, mech.obs))
    return MatchingGraph(dem.num_detectors, edges, undetectable, negw)


def graph_probability_roundtrip(g: MatchingGraph) -> list[float]:
    return [1.0 / (1.0 + math.exp(w)) for (_, _, w, _, _) in g.edges]


# --- erasure (gauge) mechanism extraction --------------------------------------


class GaugeSimulator:
    """Noiseless symbolic execution: random branches become tracked bits.

    Every non-deterministic measurement or reset projection allocates a bit
    whose two branches differ by a known Pauli frame (the displaced pivot
    stabilizer).  Frames conjugate through subsequent gates; a record's value
    is an affine form over the allocated bits.
    """

    def __init__(self, n: int, num_records: int, max_bits: int = 512):
        self.t = Tableau(n)
        self.n = n
        self.fx = np.zeros((max_bits, n), dtype=bool)
        self.fz = np.zeros((max_bits, n), dtype=bool)
        self.nbits = 0
        self.rec_const = np.zeros(num_records, dtype=np.uint8)
        self.rec_coeff = np.zeros((num_records, max_bits), dtype=bool)
        self.mc = 0

    def snapshot(self):
        t2 = Tableau(self.n)
        t2.x = self.t.x.copy()
        t2.z = self.t.z.copy()
        t2.r = self.t.r.copy()
        return (
            t2, self.fx.copy(), self.fz.copy(), self.nbits,
            self.rec_const.copy(), self.rec_coeff.copy(), self.mc,
        )

    def restore(self, snap):
        t2, fx, fz, nbits, rc, rcf, mc = snap
        self.t = Tableau(self.n)
        self.t.x = t2.x.copy()
        self.t.z = t2.z.copy()
        self.t.r = t2.r.copy()
        self.fx = fx.copy()
        self.fz = fz.copy()
        self.nbits = nbits
        self.rec_const = rc.copy()
        self.rec_coeff = rcf.copy()
        self.mc = mc

    def _measure_branch0(self, q: int):
        """Measure Z_q taking the 0 branch when random.

        Returns (outcome, frame) with frame None for deterministic results;
        otherwise frame is the displaced pivot stabilizer (x, z) rows.
        """
        t = self.t
        n = self.n
        pivots = np.nonzero(t.x[n:, q])[0]
        if len(pivots):
            p = int(pivots[0]) + n
            frame = (t.x[p].copy(), t.z[p].copy())
            for i in np.nonzero(t.x[:, q])[0]:
                if i != p:
                    t._rowsum(int(i), p)
            t.x[p - n] = t.x[p]
            t.z[p - n] = t.z[p]
            t.r[p - n] = t.r[p]
            t.x[p] = 0
            t.z[p] = 0
            t.z[p, q] = 1
            t.r[p] = 0
            return 0, frame
        return t.deterministic_outcome(q), None

    def _new_bit(self, frame_x, frame_z):
        if self.nbits >= self.fx.shape[0]:
            grow = self.fx.shape[0]
            self.fx = np.vstack([self.fx, np.zeros((grow, self.n), dtype=bool)])
            self.fz = np.vstack([self.fz, np.zeros((grow, self.n), dtype=bool)])
            self.rec_coeff = np.hstack(
                [self.rec_coeff, np.zeros((self.rec_coeff.shape[0], grow), dtype=bool)]
            )
        b = self.nbits
        self.fx[b] = frame_x
        self.fz[b] = frame_z
        self.nbits += 1
        return b

    def run(self, program: Program, enabled: np.ndarray, start: int = 0, stop: Optional[int] = None):
        from . import _kernel as K

        t = self.t
        stop = len(program.ops) if stop is None else stop
        for k in range(start, stop):
            if not enabled[k]:
                if program.ops[k] == K.OP_M:
                    self.mc += 1
                continue
            op = program.ops[k]
            a = program.t0[k]
            if op == K.OP_CZ:
                b = program.t1[k]
                t.cz(a, b)
                self.fz[: self.nbits, a] ^= self.fx[: self.nbits, b]
                self.fz[: self.nbits, b] ^= self.fx[: self.nbits, a]
            elif op == K.OP_H:
                t.h(a)
                nb = self.nbits
                tmp = self.fx[:nb, a].copy()
                self.fx[:nb, a] = self.fz[:nb, a]
                self.fz[:nb, a] = tmp
            elif op == K.OP_X:
                t.x_gate(a)
            elif op == K.OP_Z:
                t.z_gate(a)
            elif op == K.OP_M:
                out, frame = self._measure_branch0(a)
                self.rec_coeff[self.mc, : self.nbits] = self.fx[: self.nbits, a]
                if frame is not None:
                    b = self._new_bit(frame[0].astype(bool), frame[1].astype(bool))
                    self.rec_coeff[self.mc, b] = True
                    self.rec_const[self.mc] = 0
                else:
                    self.rec_const[self.mc] = out
                self.mc += 1
            elif op == K.OP_R:
                out, frame = self._measure_branch0(a)
                if frame is not None:
                    frame_x = frame[0].astype(bool)
                    frame_z = frame[1].astype(bool)
                    frame_x[a] = False
                    frame_z[a] = False
                    self._new_bit(frame_x, frame_z)
                elif out == 1:
                    t.x_gate(a)
                self.fx[: self.nbits, a] = False
                self.fz[: self.nbits, a] = False
            elif op == K.OP_ZERR:
                if program.prob[k] == 0.5:
                    fz = np.zeros(self.n, dtype=bool)
                    fz[a] = True
                    self._new_bit(np.zeros(self.n, dtype=bool), fz)
                elif program.prob[k] > 0.0:
                    raise ValueError("gauge extraction expects even-odds Z insertions only")
            elif op in (K.OP_D1, K.OP_D2):
                pass  # Pauli channels are handled by fault enumeration
        return self


def gauge_mechanisms(
    plan: ExperimentPlan,
    enabled: np.ndarray,
    detectors: Sequence[DetectorDef],
    sim: Optional[GaugeSimulator] = None,
    start: int = 0,
) -> list[ErrorMechanism]:
    """Even-odds mechanisms of a noiseless loss-modified circuit.

    Every allocated randomness bit whose flips reach at least one detector or
    observable becomes a mechanism at probability 1/2.  Deterministic parts
    must vanish: a nonzero constant would mean the detector conventions are
    broken for this circuit.
    """
    if sim is None:
        sim = GaugeSimulator(plan.program.n, plan.program.num_measurements)
    sim.run(plan.program, enabled, start=start)
    nbits = sim.nbits
    mechs: list[ErrorMechanism] = []
    det_c, det_m = _affine_parity(sim, detectors)
    obs_c, obs_m = _affine_parity(sim, plan.observables)
    if det_c.any() or obs_c.any():
        raise AssertionError("loss-modified circuit has deterministically flipped parities")
    for b in range(nbits):
        dset = tuple(int(i) for i in np.nonzero(det_m[:, b])[0])
        obs = 0
        for j in np.nonzero(obs_m[:, b])[0]:
            obs |= 1 << int(j)
        if dset or obs:
            mechs.append(ErrorMechanism(0.5, dset, obs, origin=f"erasure:{b}"))
    return mechs


def _affine_parity(sim: GaugeSimulator, defs):
    const = np.zeros(len(defs), dtype=np.uint8)
    coeff = np.zeros((len(defs), sim.nbits), dtype=bool)
    for j, d in enumerate(defs):
        for rec in d.records:
            const[j] ^= sim.rec_const[rec]
            coeff[j] ^= sim.rec_coeff[rec, : sim.nbits]
    return const, coeff


# --- base model pipeline -------------------------------------------------------


def build_base_dem(plan: ExperimentPlan) -> DetectorErrorModel:
    dem = enumerate_mechanisms(plan)
    dem = decompose_graphlike(dem, plan)
    return merge_independent(dem)


# --- text format ----------------------------------------------------------------


def dem_to_text(dem: DetectorErrorModel) -> str:
    lines = []
    for i, (x, y, t) in enumerate(dem.det_coords):
        lines.append(f"detector({x:g},{y:g},{t:g}) D{i}")
    for mech in dem.mechanisms:
        parts = [f"D{d}" for d in mech.dets]
        for j in range(mech.obs.bit_length()):
            if mech.obs >> j & 1:
                parts.append(f"L{j}")
        lines.append(f"error({mech.prob:.12g}) " + " ".join(parts))
    return "\n".join(lines) + "\n"


def dem_from_text(text: str) -> DetectorErrorModel:
    mechs = []
    coords = []
    maxdet = -1
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("detector("):
            head, det = line.split(") ")
            coords.append(tuple(float(v) for v in head[len("detector("):].split(",")))
            maxdet = max(maxdet, int(det[1:]))
        elif line.startswith("error("):
            head, _, rest = line.partition(") ")
            p = float(head[len("error("):])
            dets = []
            obs = 0
            for tok in rest.split():
                if tok.startswith("D"):
                    dets.append(int(tok[1:]))
                    maxdet = max(maxdet, dets[-1])
                elif tok.startswith("L"):
                    obs |= 1 << int(tok[1:])
            mechs.append(ErrorMechanism(p, tuple(sorted(dets)), obs))
        else:
            raise ValueError(f"bad model line: {line!r}")
    return DetectorErrorModel(mechs, coords, max(maxdet + 1, len(coords)))
