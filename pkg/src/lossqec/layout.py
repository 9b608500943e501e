"""Rotated surface code geometry: qubit placement, roles and CZ schedule."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Gate schedule within each extraction half-round, as data-neighbor offsets
# seen from the ancilla (x grows east, y grows north).  The two halves use
# mirrored zigzag orders so that mid-sequence ancilla faults (hook errors)
# spread onto data pairs perpendicular to the logical they could build:
# the Z half leaves vertical residual pairs (Z chains that flip the
# X logical run horizontally), the X half horizontal ones.
Z_ORDER = ((-1, 1), (-1, -1), (1, 1), (1, -1))  # NW, SW, NE, SE
X_ORDER = ((-1, 1), (1, 1), (-1, -1), (1, -1))  # NW, NE, SW, SE


@dataclass
class Layout:
    """Qubit coordinates and couplings for one code distance.

    Qubit indices: data qubits first (row-major), then Z ancillas, then X
    ancillas.  ``n_stab_slots[q]`` counts the stabilizer CZ gates qubit q
    participates in per round (2..4 depending on position).
    """

    d: int
    data_coords: list[tuple[int, int]]
    z_coords: list[tuple[int, int]]
    x_coords: list[tuple[int, int]]
    z_support: list[tuple[int, ...]]
    x_support: list[tuple[int, ...]]
    z_schedule: list[list[tuple[int, int]]]  # per step: (ancilla, data) pairs
    x_schedule: list[list[tuple[int, int]]]
    n_stab_slots: np.ndarray
    data_role: list[str] = field(default_factory=list)

    @property
    def n_data(self) -> int:
        return self.d * self.d

    @property
    def n_z(self) -> int:
        return len(self.z_coords)

    @property
    def n_x(self) -> int:
        return len(self.x_coords)

    @property
    def n_qubits(self) -> int:
        return self.n_data + self.n_z + self.n_x

    def data_index(self, col: int, row: int) -> int:
        return row * self.d + col

    def logical_z_support(self) -> tuple[int, ...]:
        """Data qubits of the horizontal Z logical (bottom row)."""
        return tuple(self.data_index(i, 0) for i in range(self.d))

    def logical_x_support(self) -> tuple[int, ...]:
        """Data qubits of the vertical X logical (left column)."""
        return tuple(self.data_index(0, j) for j in range(self.d))

    def coord_of(self, q: int) -> tuple[int, int]:
        if q < self.n_data:
            return self.data_coords[q]
        q -= self.n_data
        if q < self.n_z:
            return self.z_coords[q]
        return self.x_coords[q - self.n_z]

    def to_json(self) -> str:
        payload = {
            "d": self.d,
            "data": self.data_coords,
            "z_ancilla": self.z_coords,
            "x_ancilla": self.x_coords,
            "z_support": [list(s) for s in self.z_support],
            "x_support": [list(s) for s in self.x_support],
            "data_role": self.data_role,
        }
        return json.dumps(payload, indent=1, sort_keys=True)


def build_layout(d: int) -> Layout:
    """Construct the distance-d rotated layout: d^2 data qubits, (d^2-1)/2
    stabilizers of each type, weight-2 checks along the boundaries."""
    if d < 3 or d % 2 == 0:
        raise ValueError("code distance must be an odd integer >= 3")

    data_coords = [(2 * i + 1, 2 * j + 1) for j in range(d) for i in range(d)]
    data_at = {c: k for k, c in enumerate(data_coords)}

    def plaquette_support(a: int, b: int) -> tuple[int, ...]:
        out = []
        for jj in (b - 1, b):
            for ii in (a - 1, a):
                if 0 <= ii < d and 0 <= jj < d:
                    out.append(data_at[(2 * ii + 1, 2 * jj + 1)])
        return tuple(sorted(out))

    z_cells: list[tuple[int, int]] = []
    x_cells: list[tuple[int, int]] = []
    for b in range(d + 1):
        for a in range(d + 1):
            interior_a = 1 <= a <= d - 1
            interior_b = 1 <= b <= d - 1
            is_z = (a + b) % 2 == 0
            if interior_a and interior_b:
                (z_cells if is_z else x_cells).append((a, b))
            elif interior_a and not interior_b and not is_z:
                x_cells.append((a, b))  # top/bottom boundary: X checks only
            elif interior_b and not interior_a and is_z:
                z_cells.append((a, b))  # left/right boundary: Z checks only

    z_cells.sort(key=lambda ab: (ab[1], ab[0]))
    x_cells.sort(key=lambda ab: (ab[1], ab[0]))
    z_coords = [(2 * a, 2 * b) for a, b in z_cells]
    x_coords = [(2 * a, 2 * b) for a, b in x_cells]
    z_support = [plaquette_support(a, b) for a, b in z_cells]
    x_support = [plaquette_support(a, b) for a, b in x_cells]

    n_data = d * d
    n_z = len(z_cells)
    n_stab_slots = np.zeros(n_data + n_z + len(x_cells), dtype=np.int64)

    def make_schedule(cells, order, anc_offset):
        steps: list[list[tuple[int, int]]] = [[] for _ in order]
        for k, (a, b) in enumerate(cells):
            anc = anc_offset + k
            cx, cy = 2 * a, 2 * b
            for step, (dx, dy) in enumerate(order):
                dq = data_at.get((cx + dx, cy + dy))
                if dq is not None:
                    steps[step].append((anc, dq))
                    n_stab_slots[anc] += 1
                    n_stab_slots[dq] += 1
        return steps

    z_schedule = make_schedule(z_cells, Z_ORDER, n_data)
    x_schedule = make_schedule(x_cells, X_ORDER, n_data + n_z)

    role = []
    for q in range(n_data):
        deg = n_stab_slots[q]
        role.append({2: "corner", 3: "edge", 4: "bulk"}[int(deg)])

    return Layout(
        d=d,
        data_coords=data_coords,
        z_coords=z_coords,
        x_coords=x_coords,
        z_support=z_support,
        x_support=x_support,
        z_schedule=z_schedule,
        x_schedule=x_schedule,
        n_stab_slots=n_stab_slots,
        data_role=role,
    )
