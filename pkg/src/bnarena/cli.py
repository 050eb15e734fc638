"""Command-line entry point: ``bnarena bench|net|climate ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, climate
from .graph import Dag, dumps
from .learn import LEARNERS, learn
from .model import read_csv, sample, write_csv


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _keys(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def cmd_bench_run(args) -> int:
    cfg = bench.BenchConfig.from_json(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    out = args.out or cfg.output
    if not out:
        raise SystemExit("no output path: pass --out or set 'output' in the config")
    records = bench.run_benchmark(cfg)
    bench.write_records(records, out)
    meta = {"sample_size_rule": "n = ceil(ratio * |Theta|)", "records": len(records),
            "config": json.loads(bench.config_to_json(cfg))}
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(records)} records to {out}", file=sys.stderr)
    return 0


def cmd_bench_summarize(args) -> int:
    rows = bench.summarise(bench.read_records(args.csv), include_invalid=args.include_invalid)
    _emit(bench.format_summary(rows), args.out)
    return 0


def cmd_net_sample(args) -> int:
    net = bench.load_bn_text(args.bn)
    text = write_csv(sample(net, args.n, args.seed))
    _emit(text, args.out)
    return 0


def cmd_net_info(args) -> int:
    print(json.dumps(bench.network_summary(bench.load_bn_text(args.bn))))
    return 0


def cmd_net_learn(args) -> int:
    data = read_csv(args.data)
    options = dict(kv.split("=", 1) for kv in args.option or [])
    res = learn(args.algo, data, args.criterion, options)
    text = dumps(res.graph)
    _emit(text, args.out)
    kind = "dag" if isinstance(res.graph, Dag) else "pdag"
    print(f"{args.algo}: {kind}, valid={str(res.valid).lower()}, calls={res.calls}", file=sys.stderr)
    return 0 if res.valid else 2


def cmd_climate_sweep(args) -> int:
    data, grid = climate.ingest_grid(args.coords, args.series)
    records = climate.gamma_sweep(data, grid, _keys(args.algos), _floats(args.gammas), args.perms, args.seed,
                                  threshold_km=args.threshold_km, workers=args.workers)
    climate.write_sweep(records, args.out)
    for learner, gammas in climate.parameter_range(records).items():
        print(f"{learner}: valid for gamma in {gammas}", file=sys.stderr)
    return 0


def cmd_climate_propagate(args) -> int:
    net = bench.load_bn_text(args.bn)
    if args.coords:
        grid = climate.read_coords(args.coords)
    else:
        # without coordinates, key rows by declaration order on a dummy meridian
        grid = climate.GridSpec(tuple((n, 0.0, float(i % 360 - 180)) for i, n in enumerate(net.nodes)))
    climate.propagate_report(net, climate.parse_evidence(args.evidence), grid, args.out)
    return 0


def cmd_climate_synth(args) -> int:
    grid, series = climate.synthetic_grid(args.rows, args.cols, args.years, args.seed)
    climate.write_grid(grid, series, args.coords, args.series)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnarena", description="Bayesian network structure learning benchmarks")
    top = p.add_subparsers(dest="group", required=True)

    b = top.add_parser("bench", help="benchmark protocol").add_subparsers(dest="cmd", required=True)
    r = b.add_parser("run", help="run a benchmark config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_bench_run)
    s = b.add_parser("summarize", help="quadrant table from a results CSV")
    s.add_argument("csv")
    s.add_argument("--include-invalid", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench_summarize)

    n = top.add_parser("net", help="single networks and datasets").add_subparsers(dest="cmd", required=True)
    s = n.add_parser("sample", help="ancestral sample from a bn-text network")
    s.add_argument("bn")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_net_sample)
    s = n.add_parser("info", help="N, |A| and |Theta| of a bn-text network")
    s.add_argument("bn")
    s.set_defaults(func=cmd_net_info)
    s = n.add_parser("learn", help="learn a structure from a CSV dataset")
    s.add_argument("data")
    s.add_argument("--algo", required=True, choices=LEARNERS)
    s.add_argument("--criterion", default="bic")
    s.add_argument("--option", action="append", metavar="KEY=VALUE")
    s.add_argument("--out")
    s.set_defaults(func=cmd_net_learn)

    c = top.add_parser("climate", help="gridded anomaly case study").add_subparsers(dest="cmd", required=True)
    s = c.add_parser("sweep", help="extended-BIC gamma sweep")
    s.add_argument("--coords", required=True)
    s.add_argument("--series", required=True)
    s.add_argument("--gammas", default=",".join(f"{g:g}" for g in climate.DEFAULT_GAMMAS))
    s.add_argument("--algos", default="pc-stable,gs,tabu,mmhc")
    s.add_argument("--perms", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threshold-km", type=float, default=climate.DEFAULT_THRESHOLD_KM)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_climate_sweep)
    s = c.add_parser("propagate", help="evidence propagation report")
    s.add_argument("--bn", required=True)
    s.add_argument("--evidence", required=True, help="node=value[,node=value...]")
    s.add_argument("--coords")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_climate_propagate)
    s = c.add_parser("synth", help="write a synthetic lattice grid")
    s.add_argument("--rows", type=int, default=8)
    s.add_argument("--cols", type=int, default=8)
    s.add_argument("--years", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--coords", required=True)
    s.add_argument("--series", required=True)
    s.set_defaults(func=cmd_climate_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"bnarena: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
