"""Gridded climate anomalies as Gaussian Bayesian networks.

The pipeline ingests monthly series on a latitude/longitude grid, removes the
mean annual cycle, sweeps the extended-BIC regularisation coefficient across
learners and summarises each learned network by fit, size, dependence
structure and the number of long-range arcs.  Evidence propagation on a
fitted network is reported as per-gridpoint mean shifts.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .criteria import Criterion
from .graph import Dag, InvalidCpdag, Pdag, extend_to_dag, unshielded_vstructure_ratio
from .learn import learn
from .model import BayesNet, Dataset, DegenerateFit, Variable, fit_parameters, gaussian_condition, gaussian_joint, log_likelihood

EARTH_RADIUS_KM = 6371.0
DEFAULT_THRESHOLD_KM = 5000.0
DEFAULT_GAMMAS = (0.0, 0.2, 0.5, 1.0, 1.5, 2.0, 5.0, 10.0, 20.0, 50.0)
SWEEP_COLUMNS = ("gamma", "learner", "perm", "loglik", "arcs", "calls", "valid",
                 "unshielded_ratio", "teleconnections")


def wrap_longitude(lon: float) -> float:
    """Map a longitude onto [-180, 180)."""
    return (float(lon) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class GridSpec:
    points: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        seen = set()
        for node, lat, lon in self.points:
            if node in seen:
                raise ValueError(f"duplicate grid node {node!r}")
            seen.add(node)
            if not -90.0 <= lat <= 90.0:
                raise ValueError(f"{node}: latitude {lat} outside [-90, 90]")
            if not -180.0 <= lon < 180.0:
                raise ValueError(f"{node}: longitude {lon} outside [-180, 180)")

    @classmethod
    def from_points(cls, points: Iterable[tuple[str, float, float]]) -> GridSpec:
        """Build a grid, wrapping longitudes given in any 360-degree convention."""
        return cls(tuple((str(n), float(lat), wrap_longitude(lon)) for n, lat, lon in points))

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(p[0] for p in self.points)

    def location(self, node: str) -> tuple[float, float]:
        for n, lat, lon in self.points:
            if n == node:
                return lat, lon
        raise KeyError(f"node {node!r} is not on the grid")

    def locations(self) -> dict[str, tuple[float, float]]:
        return {n: (lat, lon) for n, lat, lon in self.points}


def great_circle_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Haversine distance on a spherical earth."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def teleconnection_count(g: Dag | Pdag, grid: GridSpec, threshold_km: float = DEFAULT_THRESHOLD_KM) -> int:
    """Number of arcs (or edges) longer than ``threshold_km``."""
    if not threshold_km > 0:
        raise ValueError("threshold_km must be positive")
    where = grid.locations()
    missing = [n for n in g.nodes if n not in where]
    if missing:
        raise KeyError(f"nodes missing from grid: {missing}")
    count = 0
    for pair in g.skeleton():
        a, b = tuple(pair)
        if great_circle_km(*where[a], *where[b]) > threshold_km:
            count += 1
    return count


# -- ingestion -------------------------------------------------------------

def monthly_anomalies(values: np.ndarray) -> np.ndarray:
    """Subtract each calendar month's mean from every column.

    Row ``i`` is taken to be month ``i mod 12`` of consecutive years.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 2 or x.shape[0] % 12 != 0 or x.shape[0] == 0:
        raise ValueError(f"expected a whole number of years of monthly rows, got {x.shape[0]}")
    years = x.reshape(x.shape[0] // 12, 12, x.shape[1])
    return (years - years.mean(axis=0, keepdims=True)).reshape(x.shape)


def read_coords(path) -> GridSpec:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"node", "lat", "lon"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns node,lat,lon")
    return GridSpec.from_points((r["node"], float(r["lat"]), float(r["lon"])) for r in rows)


def ingest_grid(coords_path, series_path) -> tuple[Dataset, GridSpec]:
    """Anomaly dataset from a coordinates CSV and a monthly series CSV.

    Columns of the series file must be exactly the grid nodes; the dataset
    keeps the order of the coordinates file.
    """
    grid = read_coords(coords_path)
    with open(series_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if sorted(header) != sorted(grid.nodes) or len(header) != len(grid.nodes):
        extra = sorted(set(header) - set(grid.nodes))
        lacking = sorted(set(grid.nodes) - set(header))
        raise ValueError(f"series columns do not match coordinates (extra {extra}, missing {lacking})")
    if raw.ndim != 2 or raw.shape[0] % 12:
        raise ValueError(f"series has {raw.shape[0] if raw.ndim == 2 else 0} rows, not a multiple of 12")
    cols = [header.index(n) for n in grid.nodes]
    anom = monthly_anomalies(raw[:, cols])
    return Dataset([Variable(n, "gaussian") for n in grid.nodes], anom), grid


def write_grid(grid: GridSpec, series: np.ndarray, coords_path, series_path) -> None:
    with open(coords_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "lat", "lon"])
        for n, lat, lon in grid.points:
            w.writerow([n, repr(lat), repr(lon)])
    with open(series_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(grid.nodes)
        for row in np.asarray(series, dtype=float):
            w.writerow([repr(float(v)) for v in row])


def synthetic_grid(rows: int = 8, cols: int = 8, years: int = 30, seed: int = 0, *,
                   spacing: float = 10.0, coupling: float = 0.24,
                   remote: Sequence[tuple[int, int]] = ((0, -1),)) -> tuple[GridSpec, np.ndarray]:
    """A lattice Gaussian Markov random field with a seasonal cycle on top.

    Each gridpoint depends on its four lattice neighbours, so the field is
    full of undirected 4-cycles that no DAG represents exactly.  ``remote``
    lists pairs of node indices (negative indices allowed) coupled across the
    grid, standing in for a teleconnection.  Returns the grid and the raw
    (not yet anomalised) monthly series.
    """
    N = rows * cols
    rng = np.random.default_rng(seed)
    Q = np.eye(N)
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for j in ((r + 1) * cols + c if r + 1 < rows else None, i + 1 if c + 1 < cols else None):
                if j is not None:
                    Q[i, j] = Q[j, i] = -coupling
    for a, b in remote:
        a, b = a % N, b % N
        Q[a, b] = Q[b, a] = -coupling
    L = np.linalg.cholesky(Q)
    n = 12 * years
    field = np.linalg.solve(L.T, rng.standard_normal((N, n))).T
    lat0 = -spacing * (rows - 1) / 2
    lon0 = -spacing * (cols - 1) / 2
    points = []
    for r in range(rows):
        for c in range(cols):
            points.append((f"X{r * cols + c + 1}", lat0 + spacing * r, wrap_longitude(lon0 + spacing * c)))
    grid = GridSpec(tuple(points))
    month = np.arange(n) % 12
    amp = 1.0 + 0.1 * np.abs([p[1] for p in points])
    phase = np.where(np.array([p[1] for p in points]) < 0, math.pi, 0.0)
    season = amp * np.cos(2 * math.pi * month[:, None] / 12 + phase)
    return grid, field + season + 15.0


# -- sweep -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepRecord:
    gamma: float
    learner: str
    perm: int
    loglik: float | None
    arcs: int
    calls: int
    valid: bool
    unshielded_ratio: float | None
    teleconnections: int


def permutation(n_vars: int, perm: int, seed: int) -> np.ndarray:
    """Column order for permutation ``perm``; permutation 0 is the identity."""
    if perm == 0:
        return np.arange(n_vars)
    return np.random.default_rng([seed, perm]).permutation(n_vars)


def _evaluate(graph, data: Dataset) -> tuple[float | None, float | None]:
    if isinstance(graph, Dag):
        dag = graph
    else:
        try:
            dag = extend_to_dag(graph)
        except InvalidCpdag:
            return None, None
    try:
        ll = log_likelihood(fit_parameters(dag, data), data)
    except DegenerateFit:
        ll = None
    try:
        ratio = unshielded_vstructure_ratio(dag)
    except ValueError:
        ratio = None
    return ll, ratio


def _sweep_cell(args) -> list[SweepRecord]:
    data, grid, learners, gammas, perm, seed, threshold_km, options = args
    order = permutation(len(data.names), perm, seed)
    pdata = data.select([data.names[i] for i in order])
    out = []
    for gamma in gammas:
        for learner in learners:
            crit = Criterion("bic-gamma", pdata, gamma=gamma)
            opts = dict(options)
            opts.setdefault("seed", seed)
            res = learn(learner, pdata, crit, opts)
            graph = res.graph
            arcs = len(graph.arcs) if isinstance(graph, Dag) else graph.n_edges()
            ll, ratio = _evaluate(graph, pdata)
            out.append(SweepRecord(float(gamma), learner, perm, ll, arcs, res.calls, res.valid, ratio,
                                   teleconnection_count(graph, grid, threshold_km)))
    return out


def gamma_sweep(data: Dataset, grid: GridSpec, learners: Sequence[str], gammas: Sequence[float] = DEFAULT_GAMMAS,
                permutations: int = 1, seed: int = 0, *, threshold_km: float = DEFAULT_THRESHOLD_KM,
                options: Mapping | None = None, workers: int = 1) -> list[SweepRecord]:
    """Run every learner with the matched extended-BIC criterion over a grid of gamma.

    Each permutation reorders the columns before learning.  A run whose
    constraint-based orientation fails is kept with ``valid=False``; its
    log-likelihood and v-structure ratio are filled in only when the
    diagnostic graph still extends to a DAG.
    """
    if any(g < 0 for g in gammas):
        raise ValueError("gamma must be non-negative")
    if data.kind != "gaussian":
        raise ValueError("the climate sweep expects gaussian anomalies")
    cells = [(data, grid, tuple(learners), tuple(gammas), p, seed, threshold_km, dict(options or {}))
             for p in range(permutations)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            chunks = list(ex.map(_sweep_cell, cells))
    else:
        chunks = [_sweep_cell(c) for c in cells]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.gamma, r.learner, r.perm))
    return records


def parameter_range(records: Iterable[SweepRecord]) -> dict[str, list[float]]:
    """Per learner, the gamma values at which every permutation gave a valid network."""
    ok: dict[str, dict[float, bool]] = {}
    for r in records:
        ok.setdefault(r.learner, {})
        ok[r.learner][r.gamma] = ok[r.learner].get(r.gamma, True) and r.valid
    return {k: sorted(g for g, v in d.items() if v) for k, d in sorted(ok.items())}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_sweep(records: Iterable[SweepRecord], path=None) -> str | None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in records:
        w.writerow([_cell(v) for v in (r.gamma, r.learner, r.perm, r.loglik, r.arcs, r.calls, r.valid,
                                       r.unshielded_ratio, r.teleconnections)])
    if path is None:
        return buf.getvalue()
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
    return None


def read_sweep(path) -> list[SweepRecord]:
    def opt(v, cast):
        return cast(v) if v != "" else None
    with open(path, newline="", encoding="utf-8") as fh:
        return [SweepRecord(float(r["gamma"]), r["learner"], int(r["perm"]), opt(r["loglik"], float),
                            int(r["arcs"]), int(r["calls"]), r["valid"] == "true",
                            opt(r["unshielded_ratio"], float), int(r["teleconnections"]))
                for r in csv.DictReader(fh)]


# -- evidence propagation --------------------------------------------------

@dataclass(frozen=True)
class PropagationRow:
    node: str
    lat: float
    lon: float
    prior_mean: float
    posterior_mean: float
    shift: float
    variance: float


def propagate_report(net: BayesNet, evidence: Mapping[str, float], grid: GridSpec,
                     path=None) -> list[PropagationRow]:
    """Posterior minus prior mean at every gridpoint, with the posterior variance.

    Rows are sorted by (lat, lon).  When ``path`` is given the rows are also
    written there as CSV.
    """
    order, mu, _ = gaussian_joint(net)
    prior = dict(zip(order, mu))
    post = gaussian_condition(net, evidence)
    where = grid.locations()
    missing = [n for n in net.nodes if n not in where]
    if missing:
        raise KeyError(f"nodes missing from grid: {missing}")
    rows = []
    for n in net.nodes:
        m, v = post[n]
        lat, lon = where[n]
        rows.append(PropagationRow(n, lat, lon, float(prior[n]), m, m - float(prior[n]), v))
    rows.sort(key=lambda r: (r.lat, r.lon, r.node))
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lat", "lon", "node", "prior_mean", "posterior_mean", "mean_shift", "variance"])
            for r in rows:
                w.writerow([repr(r.lat), repr(r.lon), r.node, repr(r.prior_mean), repr(r.posterior_mean),
                            repr(r.shift), repr(r.variance)])
    return rows


def parse_evidence(text: str) -> dict[str, float]:
    """Parse ``node=value,node=value``."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"evidence item {part!r} is not node=value")
        out[name.strip()] = float(value)
    return out
