"""Command line interface: ``relaycast {generate,solve,sweep,verify}``.

Common flags
    --profile {smoke,desk,full}   base configuration (default desk)
    --config PATH                 YAML file overlaid on the profile
    --seed N                      restrict the run to seed N
    --out DIR                     output directory
    --jobs N                      worker processes for sweeps
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import replace

from . import harness, scenario

log = logging.getLogger("relaycast")


def _config(args):
    cfg = harness.profile(args.profile)
    if args.config:
        cfg = harness.load_config(args.config, base=cfg)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.out:
        cfg = replace(cfg, out=args.out)
    return cfg


def _cmd_generate(args, cfg):
    harness.prepare_output_dir(cfg.out)
    files = []
    Ms = cfg.sweep_values if cfg.sweep_axis == "M" else (cfg.destination_count,)
    for M in Ms:
        for seed in cfg.seeds:
            name = f"channels_M{int(M)}_seed{seed}.csv"
            scenario.write_channels_csv(scenario.generate(cfg.network(int(M)), seed),
                                        os.path.join(cfg.out, name))
            files.append(name)
    harness.write_manifest(cfg, os.path.join(cfg.out, "manifest.json"), "generate", files)
    print(f"wrote {len(files)} channel files to {cfg.out}")
    return 0


def _cmd_solve(args, cfg):
    harness.prepare_output_dir(cfg.out)
    seed = cfg.seeds[0]
    value = args.value if args.value is not None else (
        cfg.sweep_values[0] if cfg.sweep_values else
        (cfg.destination_count if cfg.sweep_axis == "M" else cfg.P_T_dbm))
    one = replace(cfg, methods=(args.method,), seeds=(seed,), sweep_values=(value,))
    records, trace_rows = harness.run_cell(one, seed, value)
    harness.write_results_csv(records, os.path.join(cfg.out, "results.csv"))
    files = ["results.csv"]
    if trace_rows:
        harness.write_traces_csv(trace_rows, os.path.join(cfg.out, "traces.csv"))
        files.append("traces.csv")
    harness.write_manifest(one, os.path.join(cfg.out, "manifest.json"), "solve", files)
    for r in records:
        print(f"{r.method} seed={r.seed} value={r.sweep_value:g}: min SNR {r.min_snr_db:.3f} dB, "
              f"rate {r.min_rate:.4f} b/s/Hz, {r.runtime_s:.2f} s, status {r.status}")
    return 0 if all(not r.status.startswith("error") for r in records) else 1


def _cmd_sweep(args, cfg):
    t0 = time.perf_counter()
    records, _ = harness.sweep(cfg, jobs=args.jobs)
    failed = sum(r.status.startswith("error") for r in records)
    print(f"{len(records)} records ({failed} failed) in {time.perf_counter() - t0:.1f} s "
          f"-> {os.path.join(cfg.out, 'results.csv')}")
    return 0


def _cmd_verify(args, cfg):
    from . import verify

    ok = verify.run_all(cfg, out=cfg.out)
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="relaycast",
                                description="Rank-two relay multicast beamforming experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--seed", type=int, help="run only this seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--profile", choices=sorted(harness.PROFILES), default="desk")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("generate", parents=[common], help="write channel realizations")
    s = sub.add_parser("solve", parents=[common], help="solve one instance with one method")
    s.add_argument("--method", choices=harness.METHODS, default="R2-CCCP")
    s.add_argument("--value", type=float, help="sweep value (dBm or M); default first")
    sub.add_parser("sweep", parents=[common], help="run a full sweep")
    sub.add_parser("verify", parents=[common], help="run the built-in oracle checks")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = _config(args)
    except (harness.ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    handlers = {"generate": _cmd_generate, "solve": _cmd_solve, "sweep": _cmd_sweep,
                "verify": _cmd_verify}
    try:
        return handlers[args.verb](args, cfg)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
