"""Monte Carlo estimation of logical error probabilities.

One shot = sample a loss pattern, recompile the circuit by masking erased
gates, simulate, decode, compare the predicted and actual logical flips.
Cells of a sweep are independent and keyed by a config hash so runs are
resumable; shots are deterministic functions of (seed, shot index).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .builder import ExperimentPlan, MemoryExperimentSpec, build_memory_circuit, compile_shot
from .decoder import LossAwareDecoder, NaiveDecoder, ShotData
from .engine import run_shot, shot_seed
from .noise import LossSampler

VERSION = "0.1.0"

_DECODERS = ("loss-aware", "naive")


@dataclass(frozen=True)
class ExperimentConfig:
    spec: MemoryExperimentSpec
    decoder: str = "loss-aware"
    shots: int = 100_000
    seed: int = 0
    escalate: bool = False

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("need at least one shot")
        if self.decoder not in _DECODERS:
            raise ValueError(f"unknown decoder {self.decoder!r}")

    def key(self) -> str:
        payload = json.dumps(
            {**asdict(self.spec), "decoder": self.decoder, "shots": self.shots,
             "seed": self.seed, "escalate": self.escalate},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class ExperimentRecord:
    config: ExperimentConfig
    shots: int
    failures: int

    @property
    def eps(self) -> float:
        return self.failures / self.shots

    @property
    def eps_r(self) -> float:
        return per_round_error(self.eps, self.config.spec.rounds)

    @property
    def stderr(self) -> float:
        e = self.eps
        se = (e * (1.0 - e) / self.shots) ** 0.5
        # delta method through the per-round normalization
        r = self.config.spec.rounds
        if e >= 1.0:
            return 0.0
        return se * (1.0 - e) ** (1.0 / r - 1.0) / r

    def row(self) -> dict:
        s = self.config.spec
        return {
            "d": s.d, "rounds": s.rounds, "basis": s.basis, "protocol": s.protocol,
            "decoder": self.config.decoder, "loss_model": s.loss_model,
            "p_l": s.p_l, "p_d": s.p_d, "shots": self.shots,
            "failures": self.failures, "eps": self.eps, "eps_r": self.eps_r,
            "stderr": self.stderr, "seed": self.config.seed,
        }


CSV_COLUMNS = [
    "d", "rounds", "basis", "protocol", "decoder", "loss_model",
    "p_l", "p_d", "shots", "failures", "eps", "eps_r", "stderr", "seed",
]


def per_round_error(eps: float, rounds: int) -> float:
    """Normalize a whole-run error probability to a per-round probability."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("error probability outside [0, 1]")
    if eps >= 1.0:
        return 1.0
    return 1.0 - (1.0 - eps) ** (1.0 / rounds)


def inverse_per_round_error(eps_r: float, rounds: int) -> float:
    return 1.0 - (1.0 - eps_r) ** rounds


class ParityEvaluator:
    def __init__(self, defs, num_records: int):
        idx: list[int] = []
        off = [0]
        for d in defs:
            if not d.records:
                raise ValueError("base parity definitions must be non-empty")
            idx.extend(d.records)
            off.append(len(idx))
        self.idx = np.asarray(idx, dtype=np.int64)
        self.off = np.asarray(off[:-1], dtype=np.int64)
        self.n = len(defs)

    def evaluate(self, bits: np.ndarray, patches: Optional[dict] = None) -> np.ndarray:
        out = np.bitwise_xor.reduceat(bits[self.idx], self.off)
        if patches:
            for det_id, recs in patches.items():
                v = 0
                for rec in recs:
                    v ^= int(bits[rec])
                out[det_id] = v
        return out


# fragment stores shared between cells of equal geometry (see _DecoderCore)
_FRAGMENT_STORE: dict = {}


def _build_decoder(plan: ExperimentPlan, which: str):
    dec = LossAwareDecoder(plan) if which == "loss-aware" else NaiveDecoder(plan)
    s = plan.spec
    geo_key = (s.d, s.rounds, s.basis, s.protocol, s.loss_model)
    store = _FRAGMENT_STORE.setdefault(geo_key, {})
    dec.core._fragments = store
    return dec


@dataclass
class ShotRunner:
    """Reusable per-cell context: plan, sampler, decoder, evaluators."""

    config: ExperimentConfig
    plan: ExperimentPlan = field(init=False)

    def __post_init__(self):
        self.plan = build_memory_circuit(self.config.spec)
        self.sampler = LossSampler(self.plan)
        self.decoder = _build_decoder(self.plan, self.config.decoder)
        self.det_eval = ParityEvaluator(self.plan.detectors, self.plan.program.num_measurements)
        self.obs_eval = ParityEvaluator(self.plan.observables, self.plan.program.num_measurements)
        self._skip_empty = self.config.spec.p_d == 0.0

    def run_one(self, index: int) -> bool:
        """Returns True when the shot fails (prediction != outcome)."""
        rng = np.random.default_rng([self.config.seed, index])
        pattern = self.sampler.sample(rng)
        if self._skip_empty and not pattern.intervals:
            # without Pauli noise a loss-free shot is deterministic: the
            # syndrome equals the heralded-Z frame exactly
            return False
        comp = compile_shot(self.plan, pattern)
        kseed = int(rng.integers(1 << 31))
        res = run_shot(
            self.plan.circuit, kseed, program=self.plan.program, enabled=comp.enabled,
            detectors=(), observables=(),
        )
        dets = self.det_eval.evaluate(res.measurements, comp.det_patches)
        obs = int(self.obs_eval.evaluate(res.measurements)[0])
        shot = ShotData(
            detectors=dets,
            observable=obs,
            heralds=pattern.heralds,
            heralded_z=pattern.heralded_z,
            absent_ancilla=comp.absent_ancilla,
            det_patches=comp.det_patches,
        )
        return self.decoder.decode(shot) != obs

    def run(self, start: int, count: int) -> int:
        failures = 0
        for i in range(start, start + count):
            failures += self.run_one(i)
        return failures


def run_shots(config: ExperimentConfig, runner: Optional[ShotRunner] = None) -> ExperimentRecord:
    runner = runner or ShotRunner(config)
    failures = runner.run(0, config.shots)
    shots = config.shots
    if config.escalate:
        rec = ExperimentRecord(config, shots, failures)
        if rec.eps_r < 10.0 / shots:
            failures += runner.run(shots, 9 * shots)
            shots *= 10
    return ExperimentRecord(config, shots, failures)


# --- sweeps --------------------------------------------------------------------


def _run_cell(config: ExperimentConfig) -> ExperimentRecord:
    return run_shots(config)


def _cell_worker(args):
    config, out_dir = args
    path = os.path.join(out_dir, "cells", config.key() + ".json")
    if os.path.exists(path):
        with open(path) as f:
            data = json.load(f)
        return ExperimentRecord(config, data["shots"], data["failures"])
    rec = _run_cell(config)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump({"shots": rec.shots, "failures": rec.failures,
                   "row": rec.row()}, f, sort_keys=True)
    os.replace(tmp, path)
    return rec


def sweep(
    configs: Sequence[ExperimentConfig],
    out_dir: Optional[str] = None,
    threads: int = 1,
) -> list[ExperimentRecord]:
    """One record per cell; cached cells are not recomputed."""
    if not configs:
        raise ValueError("empty sweep grid")
    if out_dir is None:
        return [_run_cell(c) for c in configs]
    os.makedirs(out_dir, exist_ok=True)
    args = [(c, out_dir) for c in configs]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(_cell_worker, args))
    else:
        records = [_cell_worker(a) for a in args]
    return records


def records_to_csv(records: Iterable[ExperimentRecord], meta: Optional[dict] = None) -> str:
    buf = io.StringIO()
    if meta:
        pairs = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
        buf.write(f"# {pairs}\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = rec.row()
        row["eps"] = f"{row['eps']:.10g}"
        row["eps_r"] = f"{row['eps_r']:.10g}"
        row["stderr"] = f"{row['stderr']:.10g}"
        writer.writerow(row)
    return buf.getvalue()


def read_csv(path_or_text: str, is_text: bool = False) -> list[dict]:
    text = path_or_text if is_text else open(path_or_text).read()
    rows = []
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    if not lines:
        raise ValueError("empty results table")
    for row in csv.DictReader(io.StringIO("\n".join(lines))):
        if set(CSV_COLUMNS) - set(row):
            raise ValueError("results table missing required columns")
        typed = dict(row)
        for k in ("d", "rounds", "shots", "failures", "seed"):
            typed[k] = int(row[k])
        for k in ("p_l", "p_d", "eps", "eps_r", "stderr"):
            typed[k] = float(row[k])
        rows.append(typed)
    return rows
