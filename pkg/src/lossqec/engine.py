"""Stabilizer tableau simulator for circuits produced by the builder.

Two execution paths share the same update rules: the ``Tableau`` class is a
vectorized numpy implementation exposing per-gate operations (useful for
tests and for the symbolic machinery in :mod:`lossqec.dem`), while
:func:`run_shot` compiles a circuit once and executes whole shots in the
numba kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernel
from .circuit import Circuit, DetectorDef, Instruction, ObservableDef

_PAULI_NAMES = {1: "X", 2: "Y", 3: "Z"}


class Tableau:
    """Destabilizer/stabilizer tableau over n qubits, initialized to |0...0>."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need at least one qubit")
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        self.x[np.arange(n), np.arange(n)] = 1
        self.z[np.arange(n, 2 * n), np.arange(n)] = 1

    # -- unitaries ----------------------------------------------------------

    def h(self, q: int):
        self.r ^= self.x[:, q] & self.z[:, q]
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def x_gate(self, q: int):
        self.r ^= self.z[:, q]

    def z_gate(self, q: int):
        self.r ^= self.x[:, q]

    def cz(self, a: int, b: int):
        self.r ^= self.x[:, a] & self.x[:, b] & (self.z[:, a] ^ self.z[:, b])
        za = self.z[:, a] ^ self.x[:, b]
        zb = self.z[:, b] ^ self.x[:, a]
        self.z[:, a] = za
        self.z[:, b] = zb

    def apply_pauli(self, q: int, pauli: int):
        """State update by X (1), Y (2) or Z (3) on qubit q."""
        if pauli == 1:
            self.r ^= self.z[:, q]
        elif pauli == 3:
            self.r ^= self.x[:, q]
        elif pauli == 2:
            self.r ^= self.x[:, q] ^ self.z[:, q]
        else:
            raise ValueError(pauli)

    # -- row algebra ---------------------------------------------------------

    def _rowsum(self, h: int, i: int):
        self.r[h] = _phase_bit(self.x[i], self.z[i], self.r[i], self.x[h], self.z[h], self.r[h])
        self.x[h] ^= self.x[i]
        self.z[h] ^= self.z[i]

    # -- measurement / reset --------------------------------------------------

    def deterministic_outcome(self, q: int) -> int:
        """Sign of Z_q as a stabilizer product (valid when deterministic)."""
        n = self.n
        sx = np.zeros(n, dtype=np.uint8)
        sz = np.zeros(n, dtype=np.uint8)
        sr = 0
        for i in np.nonzero(self.x[:n, q])[0]:
            j = int(i) + n
            sr = _phase_bit(self.x[j], self.z[j], self.r[j], sx, sz, sr)
            sx ^= self.x[j]
            sz ^= self.z[j]
        return int(sr)

    def measure_z(self, q: int, rng: np.random.Generator) -> int:
        n = self.n
        pivots = np.nonzero(self.x[n:, q])[0]
        if len(pivots):
            p = int(pivots[0]) + n
            for i in np.nonzero(self.x[:, q])[0]:
                if i != p:
                    self._rowsum(int(i), p)
            self.x[p - n] = self.x[p]
            self.z[p - n] = self.z[p]
            self.r[p - n] = self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, q] = 1
            out = int(rng.integers(0, 2))
            self.r[p] = out
            return out
        return self.deterministic_outcome(q)

    def reset_z(self, q: int, rng: np.random.Generator):
        if self.measure_z(q, rng) == 1:
            self.x_gate(q)

    def is_deterministic_z(self, q: int) -> bool:
        return not self.x[self.n:, q].any()

    # -- diagnostics -----------------------------------------------------------

    def check_valid(self):
        """Verify the symplectic structure (full rank, correct pairings)."""
        n = self.n
        mat = np.concatenate([self.x, self.z], axis=1).astype(np.uint8)
        if _gf2_rank(mat) != 2 * n:
            raise AssertionError("tableau rows not independent")
        sym = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        for i in range(2 * n):
            sym[i] = ((self.x[i] @ self.z.T) + (self.z[i] @ self.x.T)) % 2
        want = np.zeros_like(sym)
        want[np.arange(n), np.arange(n, 2 * n)] = 1
        want[np.arange(n, 2 * n), np.arange(n)] = 1
        if not np.array_equal(sym, want):
            raise AssertionError("commutation structure broken")

    def stabilizer_strings(self) -> list[str]:
        out = []
        for i in range(self.n, 2 * self.n):
            s = "-" if self.r[i] else "+"
            for j in range(self.n):
                v = 2 * self.x[i, j] + self.z[i, j]
                s += {0: "I", 2: "X", 1: "Z", 3: "Y"}[int(v)]
            out.append(s)
        return out


def _phase_bit(x1, z1, r1, x2, z2, r2) -> int:
    """Sign bit of (P1 * P2) given sign bits r1, r2 of the factors.

    Cyclic single-qubit products (XY, YZ, ZX) contribute +i, reversed ones -i;
    the total i-exponent is even for commuting Paulis.
    """
    x1b = x1.view(bool)
    z1b = z1.view(bool)
    x2b = x2.view(bool)
    z2b = z2.view(bool)
    plus = int(np.count_nonzero(
        (x1b & z1b & z2b & ~x2b) | (x1b & ~z1b & z2b & x2b) | (~x1b & z1b & x2b & ~z2b)
    ))
    minus = int(np.count_nonzero(
        (x1b & z1b & x2b & ~z2b) | (x1b & ~z1b & z2b & ~x2b) | (~x1b & z1b & x2b & z2b)
    ))
    return ((2 * int(r1) + 2 * int(r2) + plus - minus) % 4) // 2


def _gf2_rank(mat: np.ndarray) -> int:
    m = mat.copy()
    rank = 0
    rows, cols = m.shape
    for c in range(cols):
        piv = None
        for rr in range(rank, rows):
            if m[rr, c]:
                piv = rr
                break
        if piv is None:
            continue
        m[[rank, piv]] = m[[piv, rank]]
        hits = np.nonzero(m[:, c])[0]
        for h in hits:
            if h != rank:
                m[h] ^= m[rank]
        rank += 1
    return rank


def apply_gate(t: Tableau, instr: Instruction) -> Tableau:
    """Conjugate the tableau by a unitary instruction (in place, returned)."""
    if instr.kind == "H":
        t.h(instr.targets[0])
    elif instr.kind == "X":
        t.x_gate(instr.targets[0])
    elif instr.kind == "Z":
        t.z_gate(instr.targets[0])
    elif instr.kind == "CZ":
        t.cz(*instr.targets)
    else:
        raise ValueError(f"not a unitary instruction: {instr.kind}")
    return t


def sample_pauli_channel(instr: Instruction, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Draw the Pauli applied by a noise annotation.

    Returns a list of (qubit, pauli) pairs with pauli in {1:X, 2:Y, 3:Z};
    empty when the identity was drawn.
    """
    p = instr.prob or 0.0
    if p <= 0.0 or rng.random() >= p:
        return []
    if instr.kind == "DEPOLARIZE1":
        return [(instr.targets[0], int(rng.integers(1, 4)))]
    if instr.kind == "DEPOLARIZE2":
        k = int(rng.integers(1, 16))
        a, b = divmod(k, 4)
        out = []
        if a:
            out.append((instr.targets[0], a))
        if b:
            out.append((instr.targets[1], b))
        return out
    if instr.kind == "Z_ERROR":
        return [(instr.targets[0], 3)]
    raise ValueError(f"not a noise instruction: {instr.kind}")


# --- compiled programs -------------------------------------------------------


@dataclass
class Program:
    """Circuit lowered to flat arrays for the numba kernel."""

    n: int
    ops: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    prob: np.ndarray
    base_enabled: np.ndarray
    num_measurements: int

    def fresh_mask(self) -> np.ndarray:
        return self.base_enabled.copy()


def compile_circuit(c: Circuit) -> Program:
    m = len(c.instructions)
    ops = np.zeros(m, dtype=np.int8)
    t0 = np.zeros(m, dtype=np.int32)
    t1 = np.zeros(m, dtype=np.int32)
    prob = np.zeros(m, dtype=np.float64)
    for k, ins in enumerate(c.instructions):
        ops[k] = _kernel.OPCODES[ins.kind]
        t0[k] = ins.targets[0]
        if len(ins.targets) > 1:
            t1[k] = ins.targets[1]
        if ins.prob is not None:
            prob[k] = ins.prob
    return Program(
        n=c.num_qubits,
        ops=ops,
        t0=t0,
        t1=t1,
        prob=prob,
        base_enabled=np.ones(m, dtype=np.uint8),
        num_measurements=c.num_measurements,
    )


@dataclass
class ShotResult:
    measurements: np.ndarray
    detectors: np.ndarray
    observables: np.ndarray


def shot_seed(global_seed: int, shot_index: int) -> int:
    """Derive a decorrelated 31-bit seed for one shot (splitmix-style)."""
    v = (np.uint64(global_seed) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(shot_index)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    v ^= v >> np.uint64(30)
    v = (v * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    v ^= v >> np.uint64(27)
    v = (v * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    v ^= v >> np.uint64(31)
    return int(v & np.uint64(0x7FFFFFFF))


def evaluate_parities(bits: np.ndarray, defs) -> np.ndarray:
    out = np.zeros(len(defs), dtype=np.uint8)
    for i, d in enumerate(defs):
        v = 0
        for rec in d.records:
            v ^= int(bits[rec])
        out[i] = v
    return out


def run_shot(
    c: Circuit,
    seed: int,
    program: Optional[Program] = None,
    enabled: Optional[np.ndarray] = None,
    detectors: Optional[tuple[DetectorDef, ...]] = None,
    observables: Optional[tuple[ObservableDef, ...]] = None,
) -> ShotResult:
    """Simulate one shot; a pure function of (circuit, enabled mask, seed)."""
    prog = program if program is not None else compile_circuit(c)
    mask = prog.base_enabled if enabled is None else enabled
    bits = _kernel.run_program(
        prog.n, prog.ops, prog.t0, prog.t1, prog.prob, mask,
        prog.num_measurements, seed,
    )
    dets = detectors if detectors is not None else c.detectors
    obs = observables if observables is not None else c.observables
    return ShotResult(
        measurements=bits,
        detectors=evaluate_parities(bits, dets),
        observables=evaluate_parities(bits, obs),
    )


def run_shot_reference(c: Circuit, seed: int) -> ShotResult:
    """Pure-python shot execution through the Tableau class.

    Slow; used to cross-check the compiled path on small circuits.  Draws
    from a different RNG stream than :func:`run_shot`, so agreement is exact
    only for circuits whose record distribution is deterministic.
    """
    rng = np.random.default_rng(seed)
    t = Tableau(c.num_qubits)
    bits = np.zeros(c.num_measurements, dtype=np.uint8)
    mc = 0
    for ins in c.instructions:
        if ins.kind in ("H", "X", "Z", "CZ"):
            apply_gate(t, ins)
        elif ins.kind == "M":
            bits[mc] = t.measure_z(ins.targets[0], rng)
            mc += 1
        elif ins.kind == "R":
            t.reset_z(ins.targets[0], rng)
        else:
            for q, pauli in sample_pauli_channel(ins, rng):
                t.apply_pauli(q, pauli)
    return ShotResult(
        measurements=bits,
        detectors=evaluate_parities(bits, c.detectors),
        observables=evaluate_parities(bits, c.observables),
    )
