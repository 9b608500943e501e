"""Clifford circuit intermediate representation with noise annotations.

Circuits are flat instruction lists over a fixed qubit register, plus
detector and observable definitions expressed as sets of measurement-record
indices.  Instances are treated as immutable once built and can be shared
freely across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

# Unitary gates, in the minimal set used by the memory experiments.
UNITARY_GATES = ("H", "X", "Z", "CZ")
# Reset / measurement.  R is a reset to |0>, M a destructive-free Z
# measurement appending one record.
STATE_OPS = ("R", "M")
# Stochastic Pauli channels.  DEPOLARIZE2 is the unbiased 15-component
# two-qubit channel, DEPOLARIZE1 the 3-component one-qubit channel, Z_ERROR
# applies Z with the given probability.
NOISE_OPS = ("DEPOLARIZE1", "DEPOLARIZE2", "Z_ERROR")

ALL_OPS = UNITARY_GATES + STATE_OPS + NOISE_OPS

_TWO_QUBIT_OPS = {"CZ", "DEPOLARIZE2"}
_PROB_OPS = set(NOISE_OPS)


@dataclass(frozen=True)
class Instruction:
    """One circuit operation: a gate, reset, measurement or noise channel."""

    kind: str
    targets: tuple[int, ...]
    prob: Optional[float] = None

    def __str__(self) -> str:
        parts = [self.kind] + [str(t) for t in self.targets]
        if self.prob is not None:
            parts.append(repr(self.prob))
        return " ".join(parts)


@dataclass(frozen=True)
class DetectorDef:
    """Parity check over measurement records, tagged with a space-time coordinate.

    ``records`` holds absolute measurement indices; an empty tuple denotes a
    detector that is identically zero (used when a reference measurement is
    unavailable).
    """

    records: tuple[int, ...]
    coord: tuple[float, float, float]


@dataclass(frozen=True)
class ObservableDef:
    """Logical readout: parity of the given measurement records."""

    records: tuple[int, ...]


@dataclass
class Circuit:
    num_qubits: int
    instructions: tuple[Instruction, ...]
    detectors: tuple[DetectorDef, ...] = ()
    observables: tuple[ObservableDef, ...] = ()
    num_measurements: int = field(init=False)

    def __post_init__(self):
        self.instructions = tuple(self.instructions)
        self.detectors = tuple(self.detectors)
        self.observables = tuple(self.observables)
        self.num_measurements = sum(
            1 for i in self.instructions if i.kind == "M"
        )

    def noise_counts(self) -> dict[str, int]:
        counts = {k: 0 for k in NOISE_OPS}
        for ins in self.instructions:
            if ins.kind in counts:
                counts[ins.kind] += 1
        return counts


def validate_circuit(c: Circuit) -> Optional[str]:
    """Return a description of the first violated invariant, or None if well formed."""
    for n, ins in enumerate(c.instructions):
        if ins.kind not in ALL_OPS:
            return f"instruction {n}: unknown kind {ins.kind!r}"
        want = 2 if ins.kind in _TWO_QUBIT_OPS else 1
        if len(ins.targets) != want:
            return (
                f"instruction {n}: arity violation, {ins.kind} takes "
                f"{want} target(s), got {len(ins.targets)}"
            )
        for q in ins.targets:
            if not (0 <= q < c.num_qubits):
                return f"instruction {n}: target {q} outside qubit range"
        if ins.kind in _TWO_QUBIT_OPS and ins.targets[0] == ins.targets[1]:
            return f"instruction {n}: duplicate targets"
        if ins.kind in _PROB_OPS:
            if ins.prob is None or not (0.0 <= ins.prob <= 1.0):
                return f"instruction {n}: probability out of range"
        elif ins.prob is not None:
            return f"instruction {n}: {ins.kind} takes no probability"
    seen_coords = set()
    for k, det in enumerate(c.detectors):
        for r in det.records:
            if not (0 <= r < c.num_measurements):
                return f"detector {k}: record index {r} out of range"
        if det.coord in seen_coords:
            return f"detector {k}: duplicate coordinate {det.coord}"
        seen_coords.add(det.coord)
    for k, obs in enumerate(c.observables):
        if not obs.records:
            return f"observable {k}: empty record set"
        for r in obs.records:
            if not (0 <= r < c.num_measurements):
                return f"observable {k}: record index {r} out of range"
    return None


def edited(
    c: Circuit,
    drop: Iterable[int] = (),
    insert_before: Optional[dict[int, Sequence[Instruction]]] = None,
    detectors: Optional[Sequence[DetectorDef]] = None,
) -> Circuit:
    """Structural edit: drop unitary gates by index and splice in new instructions.

    Noise annotations are never dropped (loss erasure conserves them); asking
    to drop one raises.  ``insert_before[i]`` is spliced in front of the
    instruction currently at index ``i``; key ``len(instructions)`` appends.
    """
    dropset = frozenset(drop)
    ins_map = insert_before or {}
    for n in dropset:
        if c.instructions[n].kind in NOISE_OPS:
            raise ValueError(f"cannot drop noise annotation at {n}")
        if c.instructions[n].kind == "M":
            raise ValueError(f"cannot drop measurement at {n}")
    out: list[Instruction] = []
    for n, ins in enumerate(c.instructions):
        if n in ins_map:
            out.extend(ins_map[n])
        if n not in dropset:
            out.append(ins)
    if len(c.instructions) in ins_map:
        out.extend(ins_map[len(c.instructions)])
    return Circuit(
        num_qubits=c.num_qubits,
        instructions=tuple(out),
        detectors=c.detectors if detectors is None else tuple(detectors),
        observables=c.observables,
    )


# --- text serialization ----------------------------------------------------
#
# One instruction per line, `KIND q0 [q1] [p]`.  Detectors are emitted as
# `DETECTOR rec[-k] ... @ (x,y,t)` with record references relative to the end
# of the circuit, observables as `OBSERVABLE(i) rec[-k] ...`.  Ordering is the
# construction order, so output is byte-stable for a fixed build.


def circuit_to_text(c: Circuit) -> str:
    lines = [f"QUBITS {c.num_qubits}"]
    for ins in c.instructions:
        lines.append(str(ins))
    nm = c.num_measurements
    for det in c.detectors:
        recs = " ".join(f"rec[{r - nm}]" for r in det.records)
        x, y, t = det.coord
        lines.append(f"DETECTOR {recs} @ ({x:g},{y:g},{t:g})".replace("  ", " "))
    for i, obs in enumerate(c.observables):
        recs = " ".join(f"rec[{r - nm}]" for r in obs.records)
        lines.append(f"OBSERVABLE({i}) {recs}")
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> Circuit:
    num_qubits = 0
    instructions: list[Instruction] = []
    detectors: list[DetectorDef] = []
    observables: list[ObservableDef] = []
    num_meas = sum(1 for ln in text.splitlines() if ln.strip().startswith("M "))

    def parse_recs(tokens: list[str]) -> tuple[int, ...]:
        out = []
        for tok in tokens:
            if not (tok.startswith("rec[") and tok.endswith("]")):
                raise ValueError(f"bad record reference {tok!r}")
            out.append(num_meas + int(tok[4:-1]))
        return tuple(out)

    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "QUBITS":
            num_qubits = int(tokens[1])
        elif head == "DETECTOR":
            at = tokens.index("@")
            coord = tuple(float(v) for v in tokens[at + 1].strip("()").split(","))
            detectors.append(DetectorDef(parse_recs(tokens[1:at]), coord))
        elif head.startswith("OBSERVABLE("):
            observables.append(ObservableDef(parse_recs(tokens[1:])))
        else:
            if head not in ALL_OPS:
                raise ValueError(f"unknown instruction {head!r}")
            if head in _PROB_OPS:
                prob = float(tokens[-1])
                targets = tuple(int(t) for t in tokens[1:-1])
            else:
                prob = None
                targets = tuple(int(t) for t in tokens[1:])
            instructions.append(Instruction(head, targets, prob))
    return Circuit(num_qubits, tuple(instructions), tuple(detectors), tuple(observables))
