import numpy as np
import pytest

from lossqec.builder import erase_for_loss, memory_spec, build_memory_circuit
from lossqec.circuit import (
    Circuit,
    DetectorDef,
    Instruction,
    ObservableDef,
    circuit_from_text,
    circuit_to_text,
    validate_circuit,
)
from lossqec.noise import Herald, LossPattern


def test_empty_circuit_ok():
    assert validate_circuit(Circuit(1, ())) is None


def test_cz_arity_violation():
    c = Circuit(3, (Instruction("CZ", (1,)),))
    msg = validate_circuit(c)
    assert msg is not None and "arity" in msg


def test_detector_record_bounds():
    c = Circuit(
        2,
        (Instruction("M", (0,)), Instruction("M", (1,)), Instruction("M", (0,))),
        detectors=(DetectorDef((5,), (0, 0, 0)),),
    )
    msg = validate_circuit(c)
    assert msg is not None and "record index" in msg


def test_probability_bounds_and_target_range():
    assert "probability" in validate_circuit(
        Circuit(1, (Instruction("DEPOLARIZE1", (0,), 1.5),))
    )
    assert "range" in validate_circuit(Circuit(1, (Instruction("H", (3,)),)))


def test_serialization_roundtrip_and_stability(plan_cache):
    plan = plan_cache(3, p_d=0.001, protocol="teleportation")
    text1 = circuit_to_text(plan.circuit)
    c2 = circuit_from_text(text1)
    assert circuit_to_text(c2) == text1
    assert c2.num_measurements == plan.circuit.num_measurements
    assert len(c2.detectors) == len(plan.circuit.detectors)
    assert c2.observables == plan.circuit.observables
    # byte stability across rebuilds
    plan2 = build_memory_circuit(plan.spec)
    assert circuit_to_text(plan2.circuit) == text1


def _one_loss_pattern(atom, r, slot, reload, src="ldu"):
    return LossPattern(
        intervals=[(atom, r, slot, reload)],
        heralds=[Herald(atom, r, src)],
        loss_cz_slots=[(atom, r, slot)] if slot >= 1 else [],
    )


def test_erase_empty_pattern_identity(plan_cache):
    plan = plan_cache(3, p_d=0.002, p_l=0.0)
    eff = erase_for_loss(plan, LossPattern())
    assert eff.instructions == plan.circuit.instructions


def test_erase_conserves_noise_and_reduces_gates(plan_cache):
    plan = plan_cache(3, p_d=0.002, p_l=0.0)
    base = plan.circuit
    pat = _one_loss_pattern(4, 1, 2, 1)  # bulk data atom, mid-round loss
    eff = erase_for_loss(plan, pat)
    assert eff.noise_counts() == base.noise_counts()
    n_gates = lambda c: sum(1 for i in c.instructions if i.kind in ("H", "X", "Z", "CZ"))
    assert n_gates(eff) < n_gates(base)
    # idempotence: erasing the already-erased circuit changes nothing
    kinds = [str(i) for i in eff.instructions]
    eff2 = erase_for_loss(plan, pat)
    assert [str(i) for i in eff2.instructions] == kinds


def test_erase_bulk_loss_removes_remaining_stab_gates(plan_cache):
    plan = plan_cache(3, p_d=0.002)
    bulk = 4  # center data qubit of d=3
    base_cz = sum(1 for i in plan.circuit.instructions if i.kind == "CZ" and bulk in i.targets)
    eff = erase_for_loss(plan, _one_loss_pattern(bulk, 1, 2, 1))
    eff_cz = sum(1 for i in eff.instructions if i.kind == "CZ" and bulk in i.targets)
    # lost during its 2nd of 4 stabilizer gates in round 1: 3 erased there
    assert base_cz - eff_cz == 3
    # its two basis-change gates in that round are gone as well
    base_h = sum(1 for i in plan.circuit.instructions if i.kind == "H" and i.targets == (bulk,))
    eff_h = sum(1 for i in eff.instructions if i.kind == "H" and i.targets == (bulk,))
    assert base_h - eff_h == 2


def test_erase_ancilla_keeps_measurement(plan_cache):
    plan = plan_cache(3)
    anc = 9 + 0  # first Z ancilla
    w = int(plan.geometry.n_stab_slots[anc])
    eff = erase_for_loss(plan, _one_loss_pattern(anc, 1, w, 1, src="ancilla"))
    assert eff.num_measurements == plan.circuit.num_measurements
    # only measurement-adjacent gates removed: the closing basis rotation
    base_h = sum(1 for i in plan.circuit.instructions if i.kind == "H" and i.targets == (anc,))
    eff_h = sum(1 for i in eff.instructions if i.kind == "H" and i.targets == (anc,))
    assert base_h - eff_h == 1
    # a reload reset was spliced in before its readout
    assert sum(1 for i in eff.instructions if i.kind == "R" and i.targets == (anc,)) == (
        sum(1 for i in plan.circuit.instructions if i.kind == "R" and i.targets == (anc,)) + 1
    )


def test_erase_rejects_bad_slot(plan_cache):
    plan = plan_cache(3)
    with pytest.raises(ValueError):
        erase_for_loss(plan, _one_loss_pattern(4, 1, 99, 1))
