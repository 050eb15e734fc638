"""Reference networks in ``bn-text`` form and the speed/accuracy benchmark.

bn-text is line based (UTF-8, LF)::

    network <name>
    type discrete|gaussian
    node <name> [<level> ...]
    parents <name> [<parent> ...]
    cpt <name> <p> ...                      # discrete; rows over parent configs, levels fastest
    coef <name> <intercept> <beta> ... <sd>  # gaussian

Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .criteria import SCORE_KINDS, TEST_KINDS
from .graph import Dag, cpdag_from_dag, shd
from .learn import LEARNERS, learn
from .model import BayesNet, DiscreteLocal, GaussianLocal, Variable, sample

RECORD_COLUMNS = ("network", "learner", "criterion", "ratio", "replicate", "n",
                  "shd_raw", "shd_scaled", "calls", "valid", "elapsed_ms")


class BnTextError(ValueError):
    def __init__(self, msg, lineno=None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {msg}" if lineno else msg)


def parse_bn_text(text: str, *, require_positive: bool = True) -> BayesNet:
    name, kind = "bn", None
    levels: dict[str, tuple[str, ...]] = {}
    order: list[str] = []
    parents: dict[str, list[str]] = {}
    params: dict[str, tuple[int, list[float]]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        tok = raw.split()
        if not tok or tok[0].startswith("#"):
            continue
        head, args = tok[0], tok[1:]
        if head == "network" and len(args) == 1:
            name = args[0]
        elif head == "type" and len(args) == 1 and args[0] in ("discrete", "gaussian"):
            kind = args[0]
        elif head == "node" and args:
            if args[0] in levels:
                raise BnTextError(f"duplicate node {args[0]}", lineno)
            order.append(args[0])
            levels[args[0]] = tuple(args[1:])
        elif head == "parents" and args:
            if args[0] not in levels:
                raise BnTextError(f"parents for undeclared node {args[0]}", lineno)
            parents[args[0]] = args[1:]
        elif head in ("cpt", "coef") and len(args) >= 2:
            try:
                params[args[0]] = (lineno, [float(v) for v in args[1:]])
            except ValueError:
                raise BnTextError("non-numeric parameter", lineno) from None
        else:
            raise BnTextError(f"cannot parse {raw.strip()!r}", lineno)
    if kind is None:
        raise BnTextError("missing 'type' line")
    for n in order:
        if kind == "discrete" and len(levels[n]) < 2:
            raise BnTextError(f"discrete node {n} needs at least two levels")
        for p in parents.get(n, ()):
            if p not in levels:
                raise BnTextError(f"unknown parent {p} of {n}")
        if n not in params:
            raise BnTextError(f"no parameters for node {n}")
    try:
        dag = Dag(order, [(p, n) for n in order for p in parents.get(n, ())])
    except ValueError as exc:
        raise BnTextError(str(exc)) from None
    if kind == "discrete":
        variables = tuple(Variable(n, "discrete", levels[n]) for n in order)
    else:
        variables = tuple(Variable(n, "gaussian") for n in order)
    card = {n: len(levels[n]) for n in order}
    locs = {}
    for n in order:
        pa = tuple(parents.get(n, ()))
        lineno, vals = params[n]
        if kind == "discrete":
            q, r = math.prod(card[p] for p in pa), card[n]
            if len(vals) != q * r:
                raise BnTextError(f"{n}: expected {q * r} probabilities, got {len(vals)}", lineno)
            table = np.array(vals).reshape(q, r)
            if np.any(np.abs(table.sum(axis=1) - 1) > 1e-9):
                raise BnTextError(f"{n}: CPT rows must sum to 1", lineno)
            if require_positive and np.any(table <= 0):
                raise BnTextError(f"{n}: reference CPTs must be strictly positive", lineno)
            try:
                locs[n] = DiscreteLocal(n, pa, table)
            except ValueError as exc:
                raise BnTextError(str(exc), lineno) from None
        else:
            if len(vals) != len(pa) + 2:
                raise BnTextError(f"{n}: expected {len(pa) + 2} coefficients", lineno)
            try:
                locs[n] = GaussianLocal(n, pa, vals[0], tuple(vals[1:-1]), vals[-1])
            except ValueError as exc:
                raise BnTextError(str(exc), lineno) from None
    return BayesNet(dag, variables, locs, kind, name)


def load_bn_text(path) -> BayesNet:
    return parse_bn_text(Path(path).read_text(encoding="utf-8"))


def dumps_bn_text(net: BayesNet) -> str:
    lines = [f"network {net.name}", f"type {net.kind}"]
    for v in net.variables:
        lines.append(" ".join(["node", v.name, *v.levels]))
    for n in net.nodes:
        lines.append(" ".join(["parents", n, *net.locals[n].parent_order]))
    for n in net.nodes:
        loc = net.locals[n]
        if isinstance(loc, DiscreteLocal):
            lines.append(" ".join(["cpt", n, *(repr(float(p)) for p in loc.probs.ravel())]))
        else:
            vals = [loc.intercept, *loc.betas, loc.sd]
            lines.append(" ".join(["coef", n, *(repr(float(v)) for v in vals)]))
    return "\n".join(lines) + "\n"


def save_bn_text(net: BayesNet, path) -> None:
    Path(path).write_text(dumps_bn_text(net), encoding="utf-8", newline="\n")


DATA_DIR = Path(__file__).resolve().parent / "data"


def fixture_path(name: str) -> Path:
    """Path of a shipped network: a small test fixture or a reference network."""
    for p in (DATA_DIR / "fixtures" / f"{name}.bn", DATA_DIR / f"{name}.bn"):
        if p.exists():
            return p
    raise FileNotFoundError(f"no shipped network named {name!r}")


def network_summary(net: BayesNet) -> dict:
    return {"name": net.name, "N": len(net.nodes), "arcs": net.n_arcs, "params": net.n_params()}


# -- benchmark protocol ----------------------------------------------------

@dataclass
class BenchConfig:
    networks: list[str]
    ratios: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.5, 1.0, 2.0, 5.0])
    replicates: int = 20
    learners: list[str] = field(default_factory=lambda: ["pc-stable", "gs", "tabu", "mmhc"])
    criteria: list[str] = field(default_factory=lambda: ["bic"])
    seed: int = 0
    output: str | None = None
    options: dict = field(default_factory=dict)
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if any(not r > 0 for r in self.ratios):
            raise ValueError("ratios must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")

    @classmethod
    def from_json(cls, path) -> BenchConfig:
        p = Path(path)
        raw = json.loads(p.read_text(encoding="utf-8"))
        nets = [str((p.parent / n) if not Path(n).is_absolute() else n) for n in raw.pop("networks")]
        return cls(networks=nets, **raw)


@dataclass(frozen=True)
class BenchRecord:
    network: str
    learner: str
    criterion: str
    ratio: float
    replicate: int
    n: int
    shd_raw: int
    shd_scaled: float
    calls: int
    valid: bool
    elapsed_ms: float | None


def sample_size(ratio: float, n_params: int) -> int:
    """Ceiling of ratio * |Theta|, guarded against float noise in the product."""
    return math.ceil(round(ratio * n_params, 9))


def cell_seed(seed: int, network: str, ratio: float, replicate: int) -> int:
    tag = zlib.crc32(f"{network}|{ratio!r}|{replicate}".encode())
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def _run_cell(args) -> list[BenchRecord]:
    path, ratio, rep, cfg = args
    net = load_bn_text(path)
    n = sample_size(ratio, net.n_params())
    data = sample(net, n, cell_seed(cfg.seed, net.name, ratio, rep))
    ref = cpdag_from_dag(net.dag)
    out = []
    for crit in cfg.criteria:
        for learner in cfg.learners:
            opts = dict(cfg.options)
            opts.setdefault("seed", cell_seed(cfg.seed, learner, ratio, rep))
            try:
                res = learn(learner, data, crit, opts)
                graph = res.graph if not isinstance(res.graph, Dag) else cpdag_from_dag(res.graph)
                rep_shd = shd(graph, ref, net.n_arcs)
                rec = (rep_shd.raw, rep_shd.scaled, res.calls, res.valid, res.elapsed)
            except (ValueError, TypeError, ArithmeticError, np.linalg.LinAlgError):
                # a failed fit counts as an invalid run against the empty graph
                rec = (net.n_arcs, 1.0, 0, False, 0.0)
            out.append(BenchRecord(net.name, learner, crit, ratio, rep, n, rec[0], rec[1], rec[2], rec[3],
                                   round(rec[4] * 1000, 3) if cfg.timing else None))
    return out


def run_benchmark(cfg: BenchConfig) -> list[BenchRecord]:
    unknown = [k for k in cfg.learners if k not in LEARNERS]
    if unknown:
        raise ValueError(f"unknown learners {unknown}")
    bad = [k for k in cfg.criteria if k.partition(":")[0] not in SCORE_KINDS + TEST_KINDS]
    if bad:
        raise ValueError(f"unknown criteria {bad}")
    for path in cfg.networks:
        load_bn_text(path)
    cells = [(p, r, k, cfg) for p in cfg.networks for r in cfg.ratios for k in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            chunks = list(ex.map(_run_cell, cells))
    else:
        chunks = [_run_cell(c) for c in cells]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.network, r.criterion, r.learner, r.ratio, r.replicate))
    return records


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(records: Iterable[BenchRecord], path_or_buf=None) -> str | None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in RECORD_COLUMNS])
    text = buf.getvalue()
    if path_or_buf is None:
        return text
    Path(path_or_buf).write_text(text, encoding="utf-8", newline="\n")
    return None


def read_records(path_or_buf) -> list[BenchRecord]:
    if isinstance(path_or_buf, (str, Path)):
        with open(path_or_buf, newline="", encoding="utf-8") as fh:
            return read_records(fh)
    out = []
    for row in csv.DictReader(path_or_buf):
        out.append(BenchRecord(
            row["network"], row["learner"], row["criterion"], float(row["ratio"]), int(row["replicate"]),
            int(row["n"]), int(row["shd_raw"]), float(row["shd_scaled"]), int(row["calls"]),
            row["valid"] == "true", float(row["elapsed_ms"]) if row["elapsed_ms"] else None,
        ))
    return out


# -- summaries -------------------------------------------------------------

def regime(ratio: float) -> str:
    return "small" if ratio < 1 else "large"


@dataclass(frozen=True)
class SummaryRow:
    network: str
    regime: str
    learner: str
    runs: int
    mean_shd_scaled: float
    mean_log10_calls: float
    quadrant: str


def summarise(records: Sequence[BenchRecord], include_invalid: bool = False) -> list[SummaryRow]:
    """Per-panel means and quadrant labels.

    A panel is (network, sample regime).  Learners are placed relative to the
    panel-wide mean scaled SHD and mean log10 call count; ties count as
    fast / accurate.
    """
    if not records:
        raise ValueError("no records to summarise")
    groups: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        if not r.valid and not include_invalid:
            continue
        groups.setdefault((r.network, regime(r.ratio), r.learner), []).append(r)
    rows = []
    panels: dict[tuple, list] = {}
    for (net, reg, learner), rs in sorted(groups.items()):
        shd_mean = float(np.mean([r.shd_scaled for r in rs]))
        calls_mean = float(np.mean([math.log10(max(r.calls, 1)) for r in rs]))
        rows.append([net, reg, learner, len(rs), shd_mean, calls_mean])
        panels.setdefault((net, reg), []).extend(rs)
    out = []
    for net, reg, learner, k, s, c in rows:
        panel = panels[(net, reg)]
        s_ref = float(np.mean([r.shd_scaled for r in panel]))
        c_ref = float(np.mean([math.log10(max(r.calls, 1)) for r in panel]))
        speed = "fast" if c <= c_ref else "slow"
        acc = "accurate" if s <= s_ref else "inaccurate"
        out.append(SummaryRow(net, reg, learner, k, s, c, f"{speed}, {acc}"))
    return out


def format_summary(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["network", "regime", "learner", "runs", "mean_shd_scaled", "mean_log10_calls", "quadrant"])
    for r in rows:
        w.writerow([r.network, r.regime, r.learner, r.runs, f"{r.mean_shd_scaled:.6f}",
                    f"{r.mean_log10_calls:.6f}", r.quadrant])
    return buf.getvalue()


def config_to_json(cfg: BenchConfig) -> str:
    return json.dumps(asdict(cfg), indent=2, sort_keys=True)
