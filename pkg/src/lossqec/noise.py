"""Loss-location distributions, effective LDU noise channels, and sampling.

All closed forms live here: the geometric per-gate loss chain, the modified
distribution for the standard detection unit (whose ancilla is transparently
reapplied when lost), the effective one-qubit depolarizing strengths obtained
by composing channel fidelities, and the measurement flip probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .builder import ExperimentPlan

FULL_ROUND = 0  # interval start slot meaning "absent from the top of the round"


def stabilizer_loss_distribution(p_l: float, n_tot: int) -> np.ndarray:
    """Distribution over {survived, lost at gate 1..n_tot} for one round.

    Entry 0 is the survival probability (1-p_l)^n_tot; entry i>0 is
    p_l (1-p_l)^(i-1): the atom survived the first i-1 gates and was lost at
    the i-th.
    """
    if not 0.0 <= p_l <= 1.0:
        raise ValueError("loss probability outside [0, 1]")
    q = 1.0 - p_l
    out = np.empty(n_tot + 1)
    out[0] = q**n_tot
    for i in range(1, n_tot + 1):
        out[i] = p_l * q ** (i - 1)
    return out


def standard_ldu_loss_distribution(p_l: float, n_stab: int) -> np.ndarray:
    """Per-round loss distribution for a data atom under the standard LDU.

    Slots 1..n_stab are the plain chain; the two detection-unit gates carry
    extra weight because a lost LDU ancilla triggers silent reapplication,
    summing a geometric series over the number of reapplied units.
    """
    if not 0.0 <= p_l < 1.0:
        raise ValueError("loss probability outside [0, 1)")
    q = 1.0 - p_l
    out = np.zeros(n_stab + 3)
    for i in range(1, n_stab + 1):
        out[i] = p_l * q ** (i - 1)
    denom = 1.0 - q**2 + q**4
    out[n_stab + 1] = p_l * q**n_stab * (2.0 - p_l - q**3) / denom
    out[n_stab + 2] = p_l * q ** (n_stab + 3) / denom
    out[0] = 1.0 - out[1:].sum()
    return out


def ptm_effective_1q(fidelity: float) -> float:
    """Error probability of the 1-qubit depolarizing channel with the given
    process fidelity (depolarizing channels compose by multiplying fidelities)."""
    if not -1e-12 <= fidelity <= 1.0 + 1e-12:
        raise ValueError("fidelity outside [0, 1]")
    return 0.75 * (1.0 - min(max(fidelity, 0.0), 1.0))


def effective_depol_tel(p_d: float) -> float:
    """Residual 1-qubit depolarizing strength after the single-gate LDU."""
    if not 0.0 <= p_d <= 15.0 / 16.0:
        raise ValueError("p_d outside [0, 15/16]")
    return 0.8 * p_d


def standard_ldu_fidelity(p_d: float, p_l: float) -> float:
    """Total circuit fidelity of the standard LDU, summed over reapplications."""
    g = 1.0 - 16.0 * p_d / 15.0
    q = 1.0 - p_l
    return (g**2 * q**2) / (1.0 - (1.0 - q**2) * g**2)


def effective_depol_stand(p_d: float, p_l: float) -> float:
    """Residual 1-qubit depolarizing strength after the standard LDU."""
    if not 0.0 <= p_d <= 15.0 / 16.0:
        raise ValueError("p_d outside [0, 15/16]")
    if not 0.0 <= p_l < 1.0:
        raise ValueError("p_l outside [0, 1)")
    g = 1.0 - 16.0 * p_d / 15.0
    q = 1.0 - p_l
    return 0.75 * (1.0 - g**2) / (1.0 - (1.0 - q**2) * g**2)


def flip_probability(p_d: float) -> float:
    """Probability that two-gate depolarizing noise flips the LDU readout."""
    if not 0.0 <= p_d <= 15.0 / 16.0:
        raise ValueError("p_d outside [0, 15/16]")
    g = 1.0 - 16.0 * p_d / 15.0
    return (1.0 - g**2) / 2.0


def effective_depol(protocol: str, p_d: float, p_l: float) -> float:
    if protocol == "teleportation":
        return effective_depol_tel(p_d)
    if protocol == "standard":
        return effective_depol_stand(p_d, p_l)
    raise ValueError(f"no detection unit channel for protocol {protocol!r}")


# --- loss pattern sampling ---------------------------------------------------


@dataclass(frozen=True)
class Herald:
    """A loss signal as the decoder sees it."""

    atom: int
    round: int
    source: str  # 'ldu' | 'ancilla' | 'final'
    prev_herald_round: int = -1


@dataclass
class LossPattern:
    """Ground-truth loss outcome of one shot plus the visible heralds.

    ``intervals`` lists (atom, start_round, start_slot, reload_round): the
    atom is absent from its start_slot-th gate of start_round (slot 0 means
    from the top of the round) until a reset at reload_round's reload point;
    reload_round == rounds means the reset happens just before the final
    data measurement.
    """

    intervals: list[tuple[int, int, int, int]] = field(default_factory=list)
    heralds: list[Herald] = field(default_factory=list)
    heralded_z: list[tuple[int, int]] = field(default_factory=list)
    loss_cz_slots: list[tuple[int, int, int]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.intervals or self.heralded_z)


class LossSampler:
    """Draws loss patterns for a memory experiment plan.

    Distributions are precomputed per atom role; each shot consumes an
    independent RNG stream derived from (seed, shot index) so sweeps are
    reproducible and order-independent.
    """

    def __init__(self, plan: "ExperimentPlan"):
        self.plan = plan
        spec = plan.spec
        self.p_l = spec.p_l
        self.protocol = spec.protocol
        self.rounds = spec.rounds
        self.p_flip = flip_probability(spec.p_d) if spec.protocol == "standard" else 0.0
        self.n_data = plan.layout.n_data
        self.n_total = plan.layout.n_qubits

        # per-atom per-round category tables: cumulative thresholds for
        # searchsorted; category 0 = survived, i>0 = lost at slot i
        self._cum_regular = []
        self._cum_final = []
        for atom in range(self.n_total):
            n_stab = plan.geometry.n_stab_slots[atom]
            final_dist = stabilizer_loss_distribution(self.p_l, n_stab)
            if atom < self.n_data and spec.protocol == "teleportation":
                reg = stabilizer_loss_distribution(self.p_l, n_stab + 1)
            elif atom < self.n_data and spec.protocol == "standard":
                reg = standard_ldu_loss_distribution(self.p_l, n_stab)
            else:
                reg = final_dist
            self._cum_regular.append(np.cumsum(reg))
            self._cum_final.append(np.cumsum(final_dist))
        self._n_stab = plan.geometry.n_stab_slots

    def sample(self, rng: np.random.Generator) -> LossPattern:
        pat = LossPattern()
        R = self.rounds
        p_l = self.p_l
        if p_l == 0.0 and self.p_flip == 0.0:
            return pat
        n_data = self.n_data
        protocol = self.protocol

        u = rng.random((self.n_total, R))
        cats = np.zeros((self.n_total, R), dtype=np.int64)
        for atom in range(self.n_total):
            cats[atom, : R - 1] = np.searchsorted(
                self._cum_regular[atom], u[atom, : R - 1], side="right"
            )
            cats[atom, R - 1] = np.searchsorted(
                self._cum_final[atom], u[atom, R - 1], side="right"
            )
        if protocol == "none":
            cats[:n_data, :] = 0  # no LDU: data atoms keep plain chains
            for atom in range(n_data):
                cats[atom] = np.searchsorted(self._cum_final[atom], u[atom], side="right")

        # auxiliary coins, consumed lazily but drawn with fixed shape
        fresh_lost = rng.random((n_data, max(R - 1, 1))) < p_l
        zcoin = rng.random((n_data, max(R - 1, 1))) < 0.5
        halfcoin = rng.random((n_data, R)) < 0.5
        flipcoin = (
            rng.random((n_data, R)) < self.p_flip
            if self.p_flip > 0.0
            else np.zeros((n_data, R), dtype=bool)
        )

        # ancilla losses: independent per round, heralded by the measurement
        for atom in range(n_data, self.n_total):
            for r in np.nonzero(cats[atom])[0]:
                slot = int(cats[atom, r])
                pat.intervals.append((atom, int(r), slot, int(r)))
                pat.heralds.append(Herald(atom, int(r), "ancilla"))
                pat.loss_cz_slots.append((atom, int(r), slot))

        if protocol == "none":
            # data atoms have no detection unit: a loss is only visible in the
            # final measurement; the atom stays absent until the end.
            for atom in range(n_data):
                hits = np.nonzero(cats[atom])[0]
                if len(hits):
                    r0 = int(hits[0])
                    slot = int(cats[atom, r0])
                    pat.intervals.append((atom, r0, slot, R))
                    pat.heralds.append(Herald(atom, R - 1, "final"))
                    pat.loss_cz_slots.append((atom, r0, slot))
            return pat

        for atom in range(n_data):
            if not (
                cats[atom].any()
                or fresh_lost[atom].any()
                or (self.p_flip > 0.0 and flipcoin[atom].any())
            ):
                if protocol == "teleportation":
                    for r in np.nonzero(zcoin[atom])[0]:
                        pat.heralded_z.append((atom, int(r)))
                continue
            self._walk_data_atom(
                pat, atom, cats[atom], fresh_lost[atom], zcoin[atom],
                halfcoin[atom], flipcoin[atom],
            )
        return pat

    def _walk_data_atom(self, pat, atom, cats, fresh, zcoin, halfcoin, flipcoin):
        R = self.rounds
        protocol = self.protocol
        n_stab = self._n_stab[atom]
        pending: tuple[int, int] | None = None  # (start_round, start_slot)
        last_herald = -1

        for r in range(R):
            final = r == R - 1
            if pending is not None:
                if final:
                    pat.intervals.append((atom, pending[0], pending[1], R))
                    pat.heralds.append(Herald(atom, r, "final", last_herald))
                    pending = None
                    continue
                detected = not flipcoin[r] if protocol == "standard" else True
                if detected:
                    pat.intervals.append((atom, pending[0], pending[1], r))
                    pat.heralds.append(Herald(atom, r, "ldu", last_herald))
                    last_herald = r
                    pending = None
                    if protocol == "teleportation" and fresh[r]:
                        pending = (r + 1, FULL_ROUND)
                # standard miss: stays absent, pending carries over
            else:
                cat = int(cats[r])
                if cat > 0:
                    pat.loss_cz_slots.append((atom, r, cat))
                    if final:
                        pat.intervals.append((atom, r, cat, R))
                        pat.heralds.append(Herald(atom, r, "final", last_herald))
                        continue
                    if protocol == "teleportation":
                        detected = True
                    elif cat == n_stab + 2:
                        detected = halfcoin[r]
                    else:
                        detected = not flipcoin[r]
                    if detected:
                        pat.intervals.append((atom, r, cat, r))
                        pat.heralds.append(Herald(atom, r, "ldu", last_herald))
                        last_herald = r
                        if protocol == "teleportation" and fresh[r]:
                            pending = (r + 1, FULL_ROUND)
                    else:
                        pending = (r, cat)
                else:
                    if final:
                        continue
                    if protocol == "teleportation":
                        if zcoin[r]:
                            pat.heralded_z.append((atom, r))
                        if fresh[r]:
                            pending = (r + 1, FULL_ROUND)
                    elif protocol == "standard" and flipcoin[r]:
                        # false positive: the present atom is discarded and
                        # replaced, an unheralded erasure at the round's end
                        pat.intervals.append((atom, r, n_stab + 3, r))
                        pat.heralds.append(Herald(atom, r, "ldu", last_herald))
                        last_herald = r
