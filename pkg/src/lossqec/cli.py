"""Command-line front end: sweeps, model export, fits.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
from configparser import ConfigParser

import numpy as np

from . import __version__
from .builder import MemoryExperimentSpec, build_memory_circuit, memory_spec
from .harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    read_csv,
    records_to_csv,
    sweep,
)

ENV_OUT = "LOSSQEC_OUT"


class ConfigError(Exception):
    pass


def _parse_grid(path: str) -> tuple[list[ExperimentConfig], str]:
    try:
        text = open(path).read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    cp = ConfigParser()
    cp.read_string(text)
    if "grid" not in cp:
        raise ConfigError("config needs a [grid] section")
    grid = cp["grid"]
    run = cp["run"] if "run" in cp else {}

    def values(key, default, cast):
        raw = grid.get(key, default)
        return [cast(v) for v in str(raw).split()]

    ds = values("d", "3", int)
    pls = values("p_l", "0.0", float)
    pds = values("p_d", "0.0", float)
    bases = values("basis", "Z", str)
    protocols = values("protocol", "teleportation", str)
    decoders = values("decoder", "loss-aware", str)
    models = values("loss_model", "simple", str)
    rounds = grid.get("rounds", "")
    shots = int(run.get("shots", 100000))
    seed = int(run.get("seed", 0))
    escalate = str(run.get("escalate", "false")).lower() in ("1", "true", "yes")

    configs = []
    for d, pl, pd, basis, protocol, decoder, model in itertools.product(
        ds, pls, pds, bases, protocols, decoders, models
    ):
        try:
            spec = memory_spec(
                d, rounds=int(rounds) if rounds else None, basis=basis,
                protocol=protocol, p_d=pd, p_l=pl, loss_model=model,
            )
            configs.append(ExperimentConfig(spec, decoder=decoder, shots=shots,
                                            seed=seed, escalate=escalate))
        except ValueError as e:
            raise ConfigError(str(e))
    return configs, hashlib.sha256(text.encode()).hexdigest()[:16]


def cmd_sweep(args) -> int:
    out_dir = args.out or os.environ.get(ENV_OUT)
    if not out_dir:
        print("no output directory (use --out or $" + ENV_OUT, file=sys.stderr)
        return 1
    configs, cfg_hash = _parse_grid(args.config)
    if args.seed is not None:
        configs = [
            ExperimentConfig(c.spec, c.decoder, c.shots, args.seed, c.escalate)
            for c in configs
        ]
    records = sweep(configs, out_dir=out_dir, threads=args.threads)
    meta = {"config_hash": cfg_hash, "version": __version__,
            "seed": configs[0].seed}
    csv_text = records_to_csv(records, meta)
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w") as f:
        f.write(csv_text)
    manifest = {
        "config": os.path.abspath(args.config),
        "config_hash": cfg_hash,
        "version": __version__,
        "seed": configs[0].seed,
        "cells": len(records),
        "outputs": [csv_path],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    print(f"{len(records)} cells -> {csv_path}")
    return 0


def cmd_dem(args) -> int:
    from .dem import build_base_dem, dem_to_text
    from .decoder import precompute_location_dems

    try:
        spec = memory_spec(
            args.d, rounds=args.rounds, basis=args.basis, protocol=args.protocol,
            p_d=args.pd, p_l=args.pl, loss_model=args.loss_model,
        )
    except ValueError as e:
        print(f"bad model flags: {e}", file=sys.stderr)
        return 2
    plan = build_memory_circuit(spec)
    dem = build_base_dem(plan)
    text = dem_to_text(dem)
    if args.locations:
        frags = precompute_location_dems(plan)
        chunks = [text]
        for key in sorted(frags, key=lambda k: (k.atom, k.round, k.slot, k.reload_round)):
            chunks.append(
                f"# location atom={key.atom} round={key.round} "
                f"slot={key.slot} reload={key.reload_round}\n"
            )
            for dets, obs in frags[key]:
                parts = [f"D{d}" for d in dets] + (
                    [f"L{j}" for j in range(obs.bit_length()) if obs >> j & 1]
                )
                chunks.append("error(0.5) " + " ".join(parts) + "\n")
        text = "".join(chunks)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_fit(args) -> int:
    from . import analysis

    rows = read_csv(args.infile)
    crit = {}
    for key in ("basis", "protocol", "decoder", "loss_model"):
        v = getattr(args, key if key != "loss_model" else "loss_model")
        if v:
            crit[key] = v
    if args.pd is not None:
        crit["p_d"] = args.pd
    if args.pl is not None:
        crit["p_l"] = args.pl

    out: dict = {"model": args.model}
    try:
        if args.model == "power":
            sel = analysis.select(rows, d=args.d, **crit)
            if not sel:
                raise ValueError("no rows match the selection")
            xs = [r[args.axis] for r in sel]
            ys = [r["eps_r"] for r in sel]
            ss = [r["stderr"] for r in sel]
            fit = analysis.fit_power_law(xs, ys, exponent=args.exponent, sigma=ss)
            out["fit"] = fit.to_dict()
        elif args.model == "ansatz":
            sel = analysis.select(rows, d=args.d, **crit)
            pts = [(r["p_l"], r["p_d"], r["eps_r"]) for r in sel]
            fit = analysis.fit_ansatz(pts, args.d, window=args.window)
            out["fit"] = fit.to_dict()
        elif args.model == "poly":
            sel = analysis.select(rows, d=args.d, **crit)
            xs = [r[args.axis] for r in sel]
            ys = [r["eps_r"] for r in sel]
            fit = analysis.fit_poly_window(xs, ys, args.kmin, args.kmax,
                                           sigma=[r["stderr"] for r in sel])
            out["fit"] = fit.to_dict()
            out["rounded"] = analysis.rounded_coefficients(fit)
        elif args.model == "threshold":
            ca = analysis.curve(analysis.select(rows, d=args.d, **crit), axis=args.axis)
            cb = analysis.curve(analysis.select(rows, d=args.d2, **crit), axis=args.axis)
            est = analysis.estimate_threshold(ca, cb, (args.d, args.d2))
            out["threshold"] = est.to_dict()
        elif args.model == "gain":
            sel_a = analysis.select(rows, d=args.d, decoder="naive", **{k: v for k, v in crit.items() if k != "decoder"})
            sel_b = analysis.select(rows, d=args.d, decoder="loss-aware", **{k: v for k, v in crit.items() if k != "decoder"})
            gains = []
            for ra in sel_a:
                match = [rb for rb in sel_b
                         if rb["p_l"] == ra["p_l"] and rb["p_d"] == ra["p_d"]]
                if not match:
                    continue
                rb = match[0]
                g, lower = analysis.compute_gain(
                    ra["eps_r"], rb["eps_r"], rb["shots"], rb["rounds"]
                )
                gains.append({"p_l": ra["p_l"], "p_d": ra["p_d"],
                              "gain": g, "lower_bound": lower})
            out["gains"] = gains
        else:
            raise ValueError(f"unknown model {args.model!r}")
    except ValueError as e:
        print(f"fit failed: {e}", file=sys.stderr)
        return 3
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
        print(args.out)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lossqec")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="run a Monte Carlo grid from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    dp = sub.add_parser("dem", help="export the detector error model")
    dp.add_argument("--d", type=int, required=True)
    dp.add_argument("--rounds", type=int, default=None)
    dp.add_argument("--protocol", default="teleportation")
    dp.add_argument("--basis", default="Z")
    dp.add_argument("--loss-model", dest="loss_model", default="simple")
    dp.add_argument("--pd", type=float, default=0.0)
    dp.add_argument("--pl", type=float, default=0.0)
    dp.add_argument("--locations", action="store_true")
    dp.add_argument("--out", default=None)
    dp.set_defaults(func=cmd_dem)

    fp = sub.add_parser("fit", help="fit scaling laws / thresholds from a results CSV")
    fp.add_argument("--model", required=True,
                    choices=["power", "ansatz", "poly", "threshold", "gain"])
    fp.add_argument("--in", dest="infile", required=True)
    fp.add_argument("--out", default=None)
    fp.add_argument("--d", type=int, default=3)
    fp.add_argument("--d2", type=int, default=5)
    fp.add_argument("--axis", default="p_l", choices=["p_l", "p_d"])
    fp.add_argument("--exponent", type=float, default=None)
    fp.add_argument("--kmin", type=int, default=1)
    fp.add_argument("--kmax", type=int, default=3)
    fp.add_argument("--window", type=float, default=3e-4)
    fp.add_argument("--basis", default=None)
    fp.add_argument("--protocol", default=None)
    fp.add_argument("--decoder", default=None)
    fp.add_argument("--loss-model", dest="loss_model", default=None)
    fp.add_argument("--pd", type=float, default=None)
    fp.add_argument("--pl", type=float, default=None)
    fp.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
