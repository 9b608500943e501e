"""Memory-experiment construction: circuits, loss geometry, detectors.

The builder emits one extended instruction stream containing the base
circuit plus disabled optional slots (reload resets, heralded-Z gates,
loss-conditioned Z channels).  A shot is compiled by flipping per-instruction
enable bits according to a sampled loss pattern; the base circuit is the
stream restricted to its default mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .circuit import Circuit, DetectorDef, Instruction, ObservableDef
from .engine import Program, compile_circuit
from .layout import Layout, build_layout
from .noise import FULL_ROUND, LossPattern, effective_depol

BOUNDARY = -1

_PROTOCOLS = ("none", "standard", "teleportation")
_LOSS_MODELS = ("simple", "biased_z")


@dataclass(frozen=True)
class MemoryExperimentSpec:
    d: int
    rounds: int
    basis: str = "Z"
    protocol: str = "teleportation"
    p_d: float = 0.0
    p_l: float = 0.0
    loss_model: str = "simple"

    def __post_init__(self):
        if self.d < 3 or self.d % 2 == 0:
            raise ValueError("code distance must be an odd integer >= 3")
        if self.rounds < 1:
            raise ValueError("need at least one round")
        if self.basis not in ("Z", "X"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.protocol not in _PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.loss_model not in _LOSS_MODELS:
            raise ValueError(f"unknown loss model {self.loss_model!r}")
        if not (0.0 <= self.p_d <= 1.0 and 0.0 <= self.p_l <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.p_l >= 1.0 and self.protocol == "standard":
            raise ValueError("p_l = 1 is degenerate for the standard unit")


def memory_spec(d, rounds=None, basis="Z", protocol="teleportation",
                p_d=0.0, p_l=0.0, loss_model="simple") -> MemoryExperimentSpec:
    return MemoryExperimentSpec(
        d=d, rounds=d if rounds is None else rounds, basis=basis,
        protocol=protocol, p_d=p_d, p_l=p_l, loss_model=loss_model,
    )


@dataclass
class LossGeometry:
    """Per-atom, per-round bookkeeping binding loss slots to the program."""

    rounds: int
    n_data: int
    n_stab_slots: np.ndarray
    n_ldu_slots: int  # virtual CZ slots added by the detection unit
    # round_gates[atom][r] = (instr idx array, erase-threshold array); bucket
    # index == rounds holds the final-layer gates (basis rotation).
    round_gates: list[list[tuple[np.ndarray, np.ndarray]]] = field(default_factory=list)
    # cz_entries[(atom, r)] = list of (instr idx, partner qubit, own side)
    cz_entries: dict = field(default_factory=dict)
    ldu_reset_slot: dict = field(default_factory=dict)
    ldu_z_slot: dict = field(default_factory=dict)
    ldu_bz_slot: dict = field(default_factory=dict)
    ldu_d1_idx: dict = field(default_factory=dict)
    anc_reset_slot: dict = field(default_factory=dict)
    final_reset_slot: dict = field(default_factory=dict)
    cz_bz_slots: dict = field(default_factory=dict)  # instr idx -> (slot q0, slot q1)
    anc_record: dict = field(default_factory=dict)  # (anc, r) -> record
    data_record: dict = field(default_factory=dict)

    def n_tot_slots(self, atom: int) -> int:
        if atom < self.n_data:
            return int(self.n_stab_slots[atom]) + self.n_ldu_slots
        return int(self.n_stab_slots[atom])


@dataclass
class ExperimentPlan:
    spec: MemoryExperimentSpec
    layout: Layout
    instructions: list[Instruction]
    base_enabled: np.ndarray
    geometry: LossGeometry
    detectors: list[DetectorDef]
    det_coords: list[tuple[float, float, float]]
    det_node: dict  # (ancilla index, round) -> detector id; round == rounds is final
    node_key: list  # detector id -> (ancilla index, round)
    observables: list[ObservableDef]
    basis_ancillas: list[int]
    circuit: Circuit = field(init=False)
    program: Program = field(init=False)

    def __post_init__(self):
        base = [ins for ins, on in zip(self.instructions, self.base_enabled) if on]
        self.circuit = Circuit(
            num_qubits=self.layout.n_qubits,
            instructions=tuple(base),
            detectors=tuple(self.detectors),
            observables=tuple(self.observables),
        )
        ext = Circuit(num_qubits=self.layout.n_qubits, instructions=tuple(self.instructions))
        self.program = compile_circuit(ext)
        self.program.base_enabled = self.base_enabled.copy()

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)


def build_memory_circuit(spec: MemoryExperimentSpec) -> ExperimentPlan:
    layout = build_layout(spec.d)
    R = spec.rounds
    n_data = layout.n_data
    n_z, n_x = layout.n_z, layout.n_x
    ancillas = list(range(n_data, n_data + n_z + n_x))
    has_ldu = spec.protocol in ("standard", "teleportation")
    biased = spec.loss_model == "biased_z"
    p_eff = effective_depol(spec.protocol, spec.p_d, spec.p_l) if has_ldu else 0.0

    instrs: list[Instruction] = []
    enabled: list[int] = []
    geom = LossGeometry(
        rounds=R,
        n_data=n_data,
        n_stab_slots=layout.n_stab_slots,
        n_ldu_slots={"none": 0, "teleportation": 1, "standard": 2}[spec.protocol],
    )
    geom.round_gates = [[([], []) for _ in range(R + 1)] for _ in range(layout.n_qubits)]
    cz_count = np.zeros(layout.n_qubits, dtype=np.int64)
    records = 0

    def emit(kind, targets, prob=None, on=1) -> int:
        instrs.append(Instruction(kind, tuple(targets), prob))
        enabled.append(on)
        return len(instrs) - 1

    def emit_gate(kind, targets, r):
        """Erasable unitary: tag with each target's current CZ ordinal."""
        k = emit(kind, targets)
        for q in targets:
            thr = cz_count[q] + (1 if kind == "CZ" else 0)
            lst, tl = geom.round_gates[q][r]
            lst.append(k)
            tl.append(thr)
        return k

    for q in range(n_data):
        emit("R", (q,))
        if spec.basis == "X":
            emit("H", (q,))

    for r in range(R):
        cz_count[:] = 0
        for a in ancillas:
            emit("R", (a,))
        for a in ancillas:
            emit_gate("H", (a,), r)
        for half, schedule in (("Z", layout.z_schedule), ("X", layout.x_schedule)):
            if half == "X":
                for q in range(n_data):
                    emit_gate("H", (q,), r)
            for step_pairs in schedule:
                for anc, dq in step_pairs:
                    k = emit_gate("CZ", (dq, anc), r)
                    cz_count[dq] += 1
                    cz_count[anc] += 1
                    geom.cz_entries.setdefault((dq, r), []).append((k, anc, 0))
                    geom.cz_entries.setdefault((anc, r), []).append((k, dq, 1))
                    if spec.p_d > 0.0:
                        emit("DEPOLARIZE2", (dq, anc), spec.p_d)
                    if biased:
                        s0 = emit("Z_ERROR", (dq,), 0.5, on=0)
                        s1 = emit("Z_ERROR", (anc,), 0.5, on=0)
                        geom.cz_bz_slots[k] = (s0, s1)
        for q in range(n_data):
            emit_gate("H", (q,), r)
        for a in ancillas:
            emit_gate("H", (a,), r)
        for a in ancillas:
            geom.anc_reset_slot[(a, r)] = emit("R", (a,), on=0)
            geom.anc_record[(a, r)] = records
            emit("M", (a,))
            records += 1
        if has_ldu and r < R - 1:
            for q in range(n_data):
                geom.ldu_reset_slot[(q, r)] = emit("R", (q,), on=0)
                if p_eff > 0.0:
                    geom.ldu_d1_idx[(q, r)] = emit("DEPOLARIZE1", (q,), p_eff)
                if biased and spec.protocol == "teleportation":
                    geom.ldu_bz_slot[(q, r)] = emit("Z_ERROR", (q,), 0.5, on=0)
                if spec.protocol == "teleportation":
                    geom.ldu_z_slot[(q, r)] = emit("Z", (q,), on=0)

    for q in range(n_data):
        geom.final_reset_slot[q] = emit("R", (q,), on=0)
    if spec.basis == "X":
        for q in range(n_data):
            emit_gate("H", (q,), R)  # final-layer bucket
    for q in range(n_data):
        geom.data_record[q] = records
        emit("M", (q,))
        records += 1

    geom.round_gates = [
        [(np.asarray(ix, dtype=np.int64), np.asarray(tl, dtype=np.int64)) for ix, tl in per_round]
        for per_round in geom.round_gates
    ]

    detectors, coords, det_node, node_key, observables, basis_anc = _define_detectors(
        spec, layout, geom
    )
    return ExperimentPlan(
        spec=spec,
        layout=layout,
        instructions=instrs,
        base_enabled=np.asarray(enabled, dtype=np.uint8),
        geometry=geom,
        detectors=detectors,
        det_coords=coords,
        det_node=det_node,
        node_key=node_key,
        observables=observables,
        basis_ancillas=basis_anc,
    )


def _define_detectors(spec, layout: Layout, geom: LossGeometry):
    """Base detector set: first-round checks of the prepared type, pairwise
    comparisons in the bulk, and final checks reconstructed from the data
    readout."""
    R = spec.rounds
    n_data = layout.n_data
    z_anc = list(range(n_data, n_data + layout.n_z))
    x_anc = list(range(n_data + layout.n_z, layout.n_qubits))
    basis_anc = z_anc if spec.basis == "Z" else x_anc
    support = {a: layout.z_support[i] for i, a in enumerate(z_anc)}
    support.update({a: layout.x_support[i] for i, a in enumerate(x_anc)})

    detectors: list[DetectorDef] = []
    coords: list[tuple[float, float, float]] = []
    det_node: dict = {}
    node_key: list = []

    def add(anc, r, recs):
        det_node[(anc, r)] = len(detectors)
        node_key.append((anc, r))
        x, y = layout.coord_of(anc)
        detectors.append(DetectorDef(tuple(recs), (float(x), float(y), float(r))))
        coords.append((float(x), float(y), float(r)))

    for a in basis_anc:
        add(a, 0, (geom.anc_record[(a, 0)],))
    for r in range(1, R):
        for a in z_anc + x_anc:
            add(a, r, (geom.anc_record[(a, r)], geom.anc_record[(a, r - 1)]))
    for a in basis_anc:
        recs = [geom.data_record[q] for q in support[a]]
        recs.append(geom.anc_record[(a, R - 1)])
        add(a, R, recs)

    log_support = (
        layout.logical_z_support() if spec.basis == "Z" else layout.logical_x_support()
    )
    observables = [ObservableDef(tuple(geom.data_record[q] for q in log_support))]
    return detectors, coords, det_node, node_key, observables, basis_anc


# --- per-shot compilation ----------------------------------------------------


@dataclass
class CompiledShot:
    enabled: np.ndarray
    det_patches: dict
    kappa: dict
    absent_ancilla: dict
    pattern: LossPattern


def compile_shot(plan: ExperimentPlan, pattern: LossPattern) -> CompiledShot:
    geom = plan.geometry
    spec = plan.spec
    R = spec.rounds
    n_data = geom.n_data
    enabled = plan.program.fresh_mask()
    absent: dict[int, set[int]] = {}
    fresh_next = set()
    for atom, r0, slot, reload in pattern.intervals:
        if slot == FULL_ROUND:
            fresh_next.add((atom, r0))

    for atom, r0, slot, reload in pattern.intervals:
        idxs, thr = geom.round_gates[atom][r0]
        if len(idxs):
            enabled[idxs[thr >= slot]] = 0
        for rr in range(r0 + 1, min(reload, R - 1) + 1):
            idxs2 = geom.round_gates[atom][rr][0]
            if len(idxs2):
                enabled[idxs2] = 0
        if atom < n_data:
            if reload >= R:
                fin = geom.round_gates[atom][R][0]
                if len(fin):
                    enabled[fin] = 0
                enabled[geom.final_reset_slot[atom]] = 1
            else:
                enabled[geom.ldu_reset_slot[(atom, reload)]] = 1
        else:
            enabled[geom.anc_reset_slot[(atom, r0)]] = 1
            absent.setdefault(atom, set()).add(r0)

    for q, r in pattern.heralded_z:
        if (q, r + 1) not in fresh_next:
            enabled[geom.ldu_z_slot[(q, r)]] = 1

    if spec.loss_model == "biased_z":
        for atom, r, slot in pattern.loss_cz_slots:
            n_stab = int(geom.n_stab_slots[atom])
            if slot <= n_stab:
                k, partner, side = geom.cz_entries[(atom, r)][slot - 1]
                enabled[geom.cz_bz_slots[k][1 - side]] = 1
            elif spec.protocol == "teleportation" and slot == n_stab + 1:
                enabled[geom.ldu_bz_slot[(q := atom, r)]] = 1

    det_patches = shot_detector_patches(plan, absent)
    kappa = contraction_map(plan, absent)
    return CompiledShot(
        enabled=enabled,
        det_patches=det_patches,
        kappa=kappa,
        absent_ancilla=absent,
        pattern=pattern,
    )


def shot_detector_patches(plan: ExperimentPlan, absent: dict) -> dict:
    """Re-referenced detector record sets for rounds around ancilla absences.

    A detector whose own measurement is missing becomes empty; the next valid
    round compares against the most recent round before the loss.
    """
    if not absent:
        return {}
    spec = plan.spec
    geom = plan.geometry
    R = spec.rounds
    patches: dict[int, tuple[int, ...]] = {}
    for a, rounds_lost in absent.items():
        in_basis = a in set(plan.basis_ancillas)
        prev_valid: Optional[int] = None
        for r in range(R):
            det = plan.det_node.get((a, r))
            if r in rounds_lost:
                if det is not None:
                    patches[det] = ()
            else:
                if det is not None and r >= 1 and prev_valid != r - 1:
                    if prev_valid is None:
                        patches[det] = (
                            (geom.anc_record[(a, r)],) if in_basis else ()
                        )
                    else:
                        patches[det] = (
                            geom.anc_record[(a, r)],
                            geom.anc_record[(a, prev_valid)],
                        )
                prev_valid = r
        if in_basis and prev_valid != R - 1:
            det = plan.det_node[(a, R)]
            base = plan.detectors[det].records[:-1]  # data reconstruction part
            if prev_valid is None:
                patches[det] = tuple(base)
            else:
                patches[det] = tuple(base) + (geom.anc_record[(a, prev_valid)],)
    return patches


def contraction_map(plan: ExperimentPlan, absent: dict) -> dict:
    """Node remapping mirroring the re-referenced detectors: a dead node's
    edges reconnect to the same stabilizer one cycle later, or drop to the
    boundary when no later comparison exists."""
    if not absent:
        return {}
    R = plan.spec.rounds
    kappa: dict[int, int] = {}
    for a, rounds_lost in absent.items():
        in_basis = a in set(plan.basis_ancillas)
        first_valid = min(r for r in range(R) if r not in rounds_lost) if len(rounds_lost) < R else R

        def target_after(r):
            rr = r + 1
            while rr < R and rr in rounds_lost:
                rr += 1
            if rr < R:
                node = plan.det_node.get((a, rr))
                if node is None:
                    return BOUNDARY
                # a first-valid comparison with no earlier reference is dead
                if rr == first_valid and not in_basis and all(k in rounds_lost for k in range(rr)):
                    return BOUNDARY
                return node
            return plan.det_node[(a, R)] if in_basis else BOUNDARY

        for r in rounds_lost:
            node = plan.det_node.get((a, r))
            if node is not None:
                kappa[node] = target_after(r)
        if not in_basis and first_valid < R and all(k in rounds_lost for k in range(first_valid)) and first_valid >= 1:
            node = plan.det_node.get((a, first_valid))
            if node is not None:
                kappa[node] = BOUNDARY
    return kappa


def map_dets(dets, kappa) -> tuple[int, ...]:
    """Apply the contraction to a detector set with parity cancellation."""
    if not kappa:
        return dets
    out: set[int] = set()
    for dd in dets:
        m = kappa.get(dd, dd)
        if m == BOUNDARY:
            continue
        out ^= {m}
    return tuple(sorted(out))


# --- circuit-level views -----------------------------------------------------


def materialize(plan: ExperimentPlan, enabled: np.ndarray,
                detectors=None) -> Circuit:
    kept = [ins for ins, on in zip(plan.instructions, enabled) if on]
    return Circuit(
        num_qubits=plan.layout.n_qubits,
        instructions=tuple(kept),
        detectors=tuple(detectors if detectors is not None else plan.detectors),
        observables=tuple(plan.observables),
    )


def erase_for_loss(plan: ExperimentPlan, pattern: LossPattern) -> Circuit:
    """Effective circuit for one loss pattern: gates touching a lost atom are
    removed from its loss point until its reload reset; noise annotations are
    conserved; detectors are re-referenced around lost ancillas."""
    for atom, r0, slot, reload in pattern.intervals:
        if not 0 <= slot <= plan.geometry.n_tot_slots(atom):
            raise ValueError(
                f"loss slot {slot} exceeds atom {atom}'s per-round gate count"
            )
        if not 0 <= r0 < plan.spec.rounds:
            raise ValueError(f"loss round {r0} outside experiment")
    comp = compile_shot(plan, pattern)
    dets = list(plan.detectors)
    for det_id, recs in comp.det_patches.items():
        dets[det_id] = DetectorDef(recs, plan.detectors[det_id].coord)
    return materialize(plan, comp.enabled, detectors=dets)


def ldu_emulation_block(protocol: str, q: int, *, present: bool, reload: bool,
                        herald_z: bool, p_d: float, p_l: float,
                        loss_model: str = "simple") -> list[Instruction]:
    """Instruction block emulating one detection unit on one data wire.

    Mirrors the per-shot slot enabling: an optional reload reset, the
    effective one-qubit depolarizing channel, and (teleportation) the
    heralded phase flip on the surviving teleported state.
    """
    if protocol not in ("standard", "teleportation"):
        raise ValueError("the bare memory circuit has no detection unit")
    out: list[Instruction] = []
    if reload:
        out.append(Instruction("R", (q,)))
    p_eff = effective_depol(protocol, p_d, p_l)
    if p_eff > 0.0:
        out.append(Instruction("DEPOLARIZE1", (q,), p_eff))
    if protocol == "teleportation" and herald_z and present and not reload:
        out.append(Instruction("Z", (q,)))
    return out
