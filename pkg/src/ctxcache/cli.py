"""``ctxcache`` command line: gen, run, compare, scenarios."""
from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

from . import config as cfgmod
from . import experiment, report
from .policies import POLICIES
from .workload import write_trace

EXIT_USAGE = 2
EXIT_RUN_FAILED = 1


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (overrides the scenario preset)")
    p.add_argument("--scenario", help="bundled preset: 1-4 or its name")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--tier", help="Poisson load tier (low, medium, high); switches the workload to Poisson")
    p.add_argument("--minutes", type=float, help="Poisson trace length in minutes")
    p.add_argument("--out", default="out", help="output directory (created if missing)")


def _runs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--capacities", type=_ints, help="comma-separated capacities in entries, ascending")
    p.add_argument("--replicates", type=int, help="independent seeds per configuration")
    p.add_argument("--corpus", help="corpus JSON to use instead of generating one")
    p.add_argument("--trace", help="trace CSV to use instead of generating one")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: logical cores)")
    p.add_argument("--no-action-logs", action="store_true", help="skip per-run action and threshold logs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctxcache", description="Context-cache policy simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a corpus and a trace")
    _common(g)

    r = sub.add_parser("run", help="simulate one policy")
    _common(r)
    _runs(r)
    r.add_argument("--policy", default="dcmf", help=f"one of {', '.join(POLICIES)}")

    c = sub.add_parser("compare", help="policy x capacity x scenario matrix")
    _common(c)
    _runs(c)
    c.add_argument("--policy", help="comma-separated subset of policies (default: all in config)")

    sub.add_parser("scenarios", help="list bundled scenario presets")
    return ap


def overrides_from(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    w = {}
    if args.tier is not None:
        w.update(kind="poisson", tier=args.tier)
    if args.minutes is not None:
        w["minutes"] = args.minutes
    if getattr(args, "trace", None):
        w["path"] = args.trace
    if w:
        o["workload"] = w
    if getattr(args, "corpus", None):
        o["corpus"] = {"path": args.corpus}
    if getattr(args, "capacities", None):
        o["capacities"] = args.capacities
    if getattr(args, "replicates", None) is not None:
        o["replicates"] = args.replicates
    pol = getattr(args, "policy", None)
    if pol:
        o["policies"] = [p.strip() for p in pol.split(",") if p.strip()]
    if getattr(args, "no_action_logs", False):
        o["output"] = {"action_logs": False}
    return o


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_gen(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    vcfg, universe, trace = experiment.inputs(cfg, 0, 0)
    corpus_path, trace_path = out / "corpus.json", out / "trace.csv"
    universe.corpus.save(corpus_path)
    write_trace(trace, trace_path)
    (out / "config.json").write_text(cfgmod.dumps(cfg) + "\n")
    for p in (corpus_path, trace_path):
        print(f"{p}  sha256={_sha256(p)}")
    print(f"{len(trace)} queries over {len(universe)} targets")
    return 0


def cmd_compare(cfg: dict, out: Path, workers: int | None = None) -> int:
    """Run the whole matrix and write every output; non-zero if any run failed."""
    jobs = experiment.plan(cfg)
    results = experiment.execute_all(cfg, jobs, workers)
    records, failed = [], []
    for job, res, err in results:
        if err is not None:
            failed.append((job, err))
            continue
        records.append({
            "tag": job.tag, "run_index": job.index, "scenario": cfg["name"], "variant": job.variant,
            "replicate": job.replicate,
            "corpus_seed": experiment.corpus_seed(cfg, job.variant, job.replicate),
            "trace_seed": experiment.trace_seed(cfg, job.variant, job.replicate),
            "metrics": res.metrics, "actions": res.actions, "thresholds": res.thresholds,
            "running_time_ms": res.running_time_ms, "sweep_times": res.sweep_times,
        })
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfgmod.dumps(cfg) + "\n")
    paths = report.write_outputs(out, records, cfg["output"]["action_logs"])
    sys.stdout.write(paths["table"].read_text())
    print(f"wrote {len(records)} run(s) to {out}")
    for job, err in failed:
        print(f"run {job.index} ({job.tag}) failed: {err}", file=sys.stderr)
    return EXIT_RUN_FAILED if failed else 0


def cmd_scenarios() -> int:
    for name, doc in cfgmod.list_scenarios().items():
        print(f"{name}: {doc.get('description', '')}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenarios":
        return cmd_scenarios()
    if args.command == "run":
        if args.policy not in POLICIES:
            print(f"ctxcache: unknown policy {args.policy!r}; valid policies: {', '.join(POLICIES)}",
                  file=sys.stderr)
            return EXIT_USAGE
        if args.capacities and len(args.capacities) != 1:
            print("ctxcache: run takes a single capacity; use compare for sweeps", file=sys.stderr)
            return EXIT_USAGE
    try:
        cfg = cfgmod.resolve(args.scenario, args.config, overrides_from(args))
    except (cfgmod.ConfigError, ValueError) as exc:
        print(f"ctxcache: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    if args.command == "gen":
        return cmd_gen(cfg, out)
    if args.command == "run":
        cfg["capacities"] = cfg["capacities"][:1]
        return cmd_compare(cfg, out, workers=1)
    return cmd_compare(cfg, out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
