import numpy as np
import pytest

from lossqec.circuit import Circuit, Instruction, DetectorDef
from lossqec.engine import (
    Tableau,
    apply_gate,
    compile_circuit,
    run_shot,
    run_shot_reference,
    sample_pauli_channel,
    shot_seed,
)


def test_h_conjugates_z_to_x():
    t = Tableau(1)
    assert t.stabilizer_strings() == ["+Z"]
    t.h(0)
    assert t.stabilizer_strings() == ["+X"]
    t.check_valid()


def test_cz_conjugation_rule():
    t = Tableau(2)
    t.h(0)
    t.cz(0, 1)  # X(x)I -> X(x)Z
    assert t.stabilizer_strings() == ["+XZ", "+IZ"]
    t.check_valid()


def test_x_flips_z_sign():
    t = Tableau(1)
    t.x_gate(0)
    assert t.stabilizer_strings() == ["-Z"]


def test_measure_reset_deterministic(rng):
    t = Tableau(1)
    assert t.measure_z(0, rng) == 0
    t.x_gate(0)
    assert t.measure_z(0, rng) == 1
    t.reset_z(0, rng)
    assert t.measure_z(0, rng) == 0


def test_measure_plus_state_unbiased():
    ones = 0
    n = 10_000
    rng = np.random.default_rng(7)
    for _ in range(n):
        t = Tableau(1)
        t.h(0)
        ones += t.measure_z(0, rng)
    sigma = 0.5 / np.sqrt(n)
    assert abs(ones / n - 0.5) < 5 * sigma


def test_bell_pair_correlation(rng):
    for _ in range(50):
        t = Tableau(2)
        t.h(0)
        t.h(1)
        t.cz(0, 1)
        t.h(1)  # CX(0->1): Bell pair
        a = t.measure_z(0, rng)
        b = t.measure_z(1, rng)
        assert a == b
        t.check_valid()


def test_tableau_valid_after_random_circuit(rng):
    t = Tableau(5)
    for _ in range(200):
        op = rng.integers(0, 4)
        q = int(rng.integers(0, 5))
        if op == 0:
            t.h(q)
        elif op == 1:
            t.x_gate(q)
        elif op == 2:
            q2 = int(rng.integers(0, 5))
            if q2 != q:
                t.cz(q, q2)
        else:
            t.measure_z(q, rng)
    t.check_valid()


def test_apply_gate_rejects_non_unitary():
    with pytest.raises(ValueError):
        apply_gate(Tableau(1), Instruction("M", (0,)))


def test_sample_pauli_channel_zero_prob(rng):
    ins = Instruction("DEPOLARIZE2", (0, 1), 0.0)
    assert all(sample_pauli_channel(ins, rng) == [] for _ in range(100))


def test_depolarize2_component_frequencies():
    # p = 0.15: each of the 15 non-identity components at 0.01
    rng = np.random.default_rng(3)
    ins = Instruction("DEPOLARIZE2", (0, 1), 0.15)
    n = 1_000_000
    counts = np.zeros(16, dtype=np.int64)
    for _ in range(n):
        out = sample_pauli_channel(ins, rng)
        key = 0
        for q, p in out:
            key |= p << (2 * q)
        counts[key] += 1
    sigma = np.sqrt(0.01 * 0.99 / n)
    freqs = counts / n
    for k in range(1, 16):
        a, b = divmod(k, 4)
        key = a | (b << 2)
        assert abs(freqs[key] - 0.01) < 5 * sigma


def test_z_error_half(rng):
    ins = Instruction("Z_ERROR", (0,), 0.5)
    hits = sum(bool(sample_pauli_channel(ins, rng)) for _ in range(100_000))
    assert abs(hits / 100_000 - 0.5) < 5 * np.sqrt(0.25 / 100_000)


def test_run_shot_deterministic(plan_cache):
    plan = plan_cache(3, p_d=0.01, p_l=0.0)
    a = run_shot(plan.circuit, 123, program=plan.program)
    b = run_shot(plan.circuit, 123, program=plan.program)
    assert np.array_equal(a.measurements, b.measurements)
    assert np.array_equal(a.detectors, b.detectors)
    c = run_shot(plan.circuit, 124, program=plan.program)
    assert not np.array_equal(a.measurements, c.measurements)


def test_noiseless_memory_all_detectors_zero(plan_cache):
    for basis in ("Z", "X"):
        for protocol in ("none", "standard", "teleportation"):
            plan = plan_cache(3, basis=basis, protocol=protocol)
            res = run_shot(plan.circuit, 7, program=plan.program)
            assert res.detectors.sum() == 0
            assert res.observables.sum() == 0


def test_single_x_flips_adjacent_z_detectors(plan_cache):
    # oracle: direct stabilizer bookkeeping from the layout supports
    plan = plan_cache(3)
    lay = plan.layout
    bulk = 4
    z_neighbors = [
        9 + i for i, sup in enumerate(lay.z_support) if bulk in sup
    ]
    # inject X between round 0 and round 1
    starts = [k for k, ins in enumerate(plan.circuit.instructions)
              if ins.kind == "R" and ins.targets == (9,)]
    idx = starts[1]  # start of round 1
    instrs = list(plan.circuit.instructions)
    instrs.insert(idx, Instruction("X", (bulk,)))
    c = Circuit(plan.circuit.num_qubits, tuple(instrs), plan.circuit.detectors,
                plan.circuit.observables)
    res = run_shot(c, 5)
    fired = {int(i) for i in np.nonzero(res.detectors)[0]}
    expect = {plan.det_node[(anc, 1)] for anc in z_neighbors}
    assert fired == expect


def test_kernel_matches_reference_on_deterministic_circuit(plan_cache):
    # raw records contain branch randomness (different RNG streams), but
    # detectors and observables are deterministic and must agree exactly
    plan = plan_cache(3)
    instrs = list(plan.circuit.instructions)
    instrs.insert(40, Instruction("X", (2,)))
    instrs.insert(90, Instruction("Z", (4,)))
    c = Circuit(plan.circuit.num_qubits, tuple(instrs), plan.circuit.detectors,
                plan.circuit.observables)
    a = run_shot(c, 1)
    b = run_shot_reference(c, 2)
    assert np.array_equal(a.detectors, b.detectors)
    assert np.array_equal(a.observables, b.observables)


def test_shot_seed_spread():
    seeds = {shot_seed(42, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert shot_seed(42, 5) != shot_seed(43, 5)
