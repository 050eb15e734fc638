"""Datasets and parameterised Bayesian networks.

Discrete networks carry one conditional probability table per node, Gaussian
networks one linear regression on the parents per node.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graph import Dag


class DegenerateFit(ValueError):
    """A local distribution cannot be estimated from the data."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "discrete" | "gaussian"
    levels: tuple[str, ...] = ()

    @property
    def cardinality(self) -> int:
        return len(self.levels)


class Dataset:
    """Column-typed sample matrix.

    Discrete columns hold integer level codes (indices into ``Variable.levels``),
    Gaussian columns hold floats.  All columns share one kind.
    """

    def __init__(self, variables: Sequence[Variable], values):
        self.variables = tuple(variables)
        kinds = {v.kind for v in self.variables}
        if len(kinds) > 1:
            raise ValueError("mixed discrete/gaussian datasets are not supported")
        self.kind = kinds.pop() if kinds else "gaussian"
        dtype = np.int64 if self.kind == "discrete" else np.float64
        values = np.asarray(values, dtype=dtype)
        if values.size == 0:
            values = values.reshape(0, len(self.variables))
        if values.ndim != 2 or values.shape[1] != len(self.variables):
            raise ValueError("values must be an n x N matrix matching the variables")
        if self.kind == "discrete":
            for j, v in enumerate(self.variables):
                col = values[:, j]
                if col.size and (col.min() < 0 or col.max() >= v.cardinality):
                    raise ValueError(f"column {v.name} has codes outside its {v.cardinality} levels")
        elif not np.all(np.isfinite(values)):
            raise ValueError("missing or non-finite values are not supported")
        values.setflags(write=False)
        self.values = values
        self.names = tuple(v.name for v in self.variables)
        self.index = {n: i for i, n in enumerate(self.names)}

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index[name]]

    def var(self, name: str) -> Variable:
        return self.variables[self.index[name]]

    def select(self, names: Sequence[str]) -> Dataset:
        idx = [self.index[n] for n in names]
        return Dataset([self.variables[i] for i in idx], self.values[:, idx])

    def rows(self, idx) -> Dataset:
        return Dataset(self.variables, self.values[idx])

    def __repr__(self):
        return f"Dataset(kind={self.kind}, n={self.n}, N={len(self.variables)})"


def read_csv(path_or_buf, variables: Sequence[Variable] | None = None) -> Dataset:
    """Read a dataset; quoted cells are categorical, unquoted cells numeric.

    When ``variables`` is given its level order is used to encode columns,
    otherwise the levels of each categorical column are sorted.
    """
    if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
        with open(path_or_buf, newline="", encoding="utf-8") as fh:
            return read_csv(fh, variables)
    lines = iter(path_or_buf)
    # the header holds names whether or not they are quoted
    header = next(csv.reader([next(lines, "")]), [])
    if not header:
        raise ValueError("empty CSV")
    rows = [r for r in csv.reader(lines, quoting=csv.QUOTE_NONNUMERIC) if r]
    if any(len(r) != len(header) for r in rows):
        raise ValueError("ragged CSV rows")
    if variables is not None:
        byname = {v.name: v for v in variables}
        variables = [byname[h] for h in header]
    else:
        variables = []
        for j, h in enumerate(header):
            col = [r[j] for r in rows]
            if col and all(isinstance(c, str) for c in col):
                variables.append(Variable(h, "discrete", tuple(sorted(set(col)))))
            elif all(isinstance(c, float) for c in col):
                variables.append(Variable(h, "gaussian"))
            else:
                raise ValueError(f"column {h} mixes quoted and numeric cells")
    if variables and variables[0].kind == "discrete":
        lookups = [{lvl: k for k, lvl in enumerate(v.levels)} for v in variables]
        try:
            values = [[lk[str(c) if isinstance(c, str) else _fmt_level(c)] for lk, c in zip(lookups, r)] for r in rows]
        except KeyError as exc:
            raise ValueError(f"undeclared level {exc}") from None
    else:
        values = [[float(c) for c in r] for r in rows]
    return Dataset(variables, np.array(values).reshape(len(rows), len(header)))


def _fmt_level(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def write_csv(d: Dataset, path_or_buf=None) -> str | None:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
    w.writerow(d.names)
    if d.kind == "discrete":
        levels = [v.levels for v in d.variables]
        for row in d.values:
            w.writerow([lv[k] for lv, k in zip(levels, row)])
    else:
        for row in d.values:
            w.writerow([float(x) for x in row])
    text = buf.getvalue()
    if path_or_buf is None:
        return text
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return None


@dataclass(frozen=True)
class DiscreteLocal:
    node: str
    parent_order: tuple[str, ...]
    probs: np.ndarray  # q_i x r_i, rows over parent configurations (last parent fastest)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError(f"{self.node}: probability table must be 2-dimensional")
        if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError(f"{self.node}: CPT rows must be non-negative and sum to 1")
        object.__setattr__(self, "probs", probs)

    @property
    def levels(self) -> int:
        return self.probs.shape[1]

    @property
    def configs(self) -> int:
        return self.probs.shape[0]

    def n_params(self) -> int:
        return (self.levels - 1) * self.configs


@dataclass(frozen=True)
class GaussianLocal:
    node: str
    parent_order: tuple[str, ...]
    intercept: float
    betas: tuple[float, ...]
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"{self.node}: standard deviation must be positive")
        if len(self.betas) != len(self.parent_order):
            raise ValueError(f"{self.node}: one coefficient per parent required")

    def n_params(self) -> int:
        return len(self.parent_order) + 2


@dataclass(frozen=True)
class BayesNet:
    dag: Dag
    variables: tuple[Variable, ...]
    locals: Mapping[str, DiscreteLocal | GaussianLocal]
    kind: str
    name: str = "bn"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if set(self.locals) != set(self.dag.nodes):
            raise ValueError("one local distribution per node required")
        byname = {v.name: v for v in self.variables}
        for n, loc in self.locals.items():
            if set(loc.parent_order) != self.dag.parents(n) or len(loc.parent_order) != len(self.dag.parents(n)):
                raise ValueError(f"{n}: local parents {loc.parent_order} do not match the DAG")
            if self.kind == "discrete":
                if not isinstance(loc, DiscreteLocal):
                    raise ValueError(f"{n}: discrete network needs a CPT")
                q = math.prod(byname[p].cardinality for p in loc.parent_order)
                if loc.probs.shape != (q, byname[n].cardinality):
                    raise ValueError(f"{n}: CPT shape {loc.probs.shape} != ({q}, {byname[n].cardinality})")
            elif not isinstance(loc, GaussianLocal):
                raise ValueError(f"{n}: gaussian network needs regression coefficients")

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.dag.nodes

    @property
    def n_arcs(self) -> int:
        return len(self.dag.arcs)

    def n_params(self) -> int:
        return sum(loc.n_params() for loc in self.locals.values())

    def is_positive(self) -> bool:
        return self.kind != "discrete" or all(np.all(l.probs > 0) for l in self.locals.values())


def param_count(net_or_dag, variables: Sequence[Variable] | None = None) -> int:
    """|Theta| of a network, or of a DAG given variable metadata."""
    if isinstance(net_or_dag, BayesNet):
        return net_or_dag.n_params()
    g = net_or_dag
    if variables is None:
        raise ValueError("variable metadata required for a bare DAG")
    byname = {v.name: v for v in variables}
    total = 0
    for n in g.nodes:
        v = byname[n]
        if v.kind == "discrete":
            if not v.levels:
                raise ValueError(f"unknown levels for {n}")
            q = math.prod(byname[p].cardinality for p in g.parents(n))
            total += (v.cardinality - 1) * q
        else:
            total += len(g.parents(n)) + 2
    return total


def config_index(data: np.ndarray, cards: Sequence[int]) -> np.ndarray:
    """Mixed-radix parent configuration code, last column fastest."""
    idx = np.zeros(data.shape[0], dtype=np.int64)
    for j, r in enumerate(cards):
        idx = idx * r + data[:, j]
    return idx


def fit_parameters(g: Dag, d: Dataset) -> BayesNet:
    if d.n == 0:
        raise DegenerateFit("cannot fit parameters on an empty dataset")
    variables = tuple(d.var(n) for n in g.nodes)
    locs = {}
    for n in g.nodes:
        pa = tuple(g.ordered_parents(n))
        if d.kind == "discrete":
            cards = [d.var(p).cardinality for p in pa]
            q, r = math.prod(cards), d.var(n).cardinality
            cfg = config_index(d.values[:, [d.index[p] for p in pa]], cards)
            counts = np.bincount(cfg * r + d.column(n), minlength=q * r).reshape(q, r).astype(float)
            tot = counts.sum(axis=1, keepdims=True)
            probs = np.where(tot > 0, counts / np.where(tot > 0, tot, 1), 1.0 / r)
            locs[n] = DiscreteLocal(n, pa, probs)
        else:
            locs[n] = _fit_gaussian(n, pa, d)
    return BayesNet(g, variables, locs, d.kind)


def _fit_gaussian(n: str, pa: tuple[str, ...], d: Dataset) -> GaussianLocal:
    y = d.column(n)
    X = np.column_stack([np.ones(d.n)] + [d.column(p) for p in pa])
    dof = d.n - len(pa) - 1
    if dof <= 0:
        raise DegenerateFit(f"{n}: not enough rows for {len(pa)} parents")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DegenerateFit(f"{n}: rank-deficient design on parents {pa}")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sd = math.sqrt(float(resid @ resid) / dof)
    if sd < 1e-12 * max(1.0, float(np.abs(y).max())):
        raise DegenerateFit(f"{n}: zero residual variance")
    return GaussianLocal(n, pa, float(coef[0]), tuple(float(b) for b in coef[1:]), sd)


def sample(net: BayesNet, n: int, seed: int) -> Dataset:
    """Ancestral sampling in topological order."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    index = {v: i for i, v in enumerate(net.nodes)}
    dtype = np.int64 if net.kind == "discrete" else np.float64
    out = np.zeros((n, len(net.nodes)), dtype=dtype)
    byname = {v.name: v for v in net.variables}
    for node in net.dag.topological_order():
        loc = net.locals[node]
        pcols = [index[p] for p in loc.parent_order]
        if net.kind == "discrete":
            cfg = config_index(out[:, pcols], [byname[p].cardinality for p in loc.parent_order])
            cum = np.cumsum(loc.probs, axis=1)[cfg]
            u = rng.random(n)
            draw = (u[:, None] >= cum).sum(axis=1)
            out[:, index[node]] = np.minimum(draw, loc.levels - 1)
        else:
            mean = loc.intercept + (out[:, pcols] @ np.asarray(loc.betas) if pcols else 0.0)
            out[:, index[node]] = mean + loc.sd * rng.standard_normal(n)
    return Dataset([byname[v] for v in net.nodes], out)


def node_log_likelihood(net: BayesNet, d: Dataset, node: str) -> float:
    loc = net.locals[node]
    x = d.column(node)
    if net.kind == "discrete":
        cards = [d.var(p).cardinality for p in loc.parent_order]
        cfg = config_index(d.values[:, [d.index[p] for p in loc.parent_order]], cards)
        p = loc.probs[cfg, x]
        if np.any(p == 0):
            return -math.inf
        return float(np.log(p).sum())
    mean = loc.intercept + sum(b * d.column(p) for b, p in zip(loc.betas, loc.parent_order))
    z = (x - mean) / loc.sd
    return float(-0.5 * (z @ z) - d.n * (math.log(loc.sd) + 0.5 * math.log(2 * math.pi)))


def log_likelihood(net: BayesNet, d: Dataset) -> float:
    """Sum of per-node log-likelihoods; ``-inf`` on a zero-probability cell."""
    missing = set(net.nodes) - set(d.names)
    if missing:
        raise ValueError(f"dataset lacks variables {sorted(missing)}")
    return sum(node_log_likelihood(net, d, n) for n in net.nodes)


def gaussian_joint(net: BayesNet) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Mean vector and covariance implied by a Gaussian network, in topological order."""
    if net.kind != "gaussian":
        raise ValueError("network is not gaussian")
    order = net.dag.topological_order()
    pos = {n: i for i, n in enumerate(order)}
    k = len(order)
    mu = np.zeros(k)
    cov = np.zeros((k, k))
    for i, n in enumerate(order):
        loc = net.locals[n]
        pidx = [pos[p] for p in loc.parent_order]
        b = np.asarray(loc.betas, dtype=float)
        mu[i] = loc.intercept + (b @ mu[pidx] if pidx else 0.0)
        if pidx:
            # cov(X_i, X_j) = sum_p beta_p cov(X_p, X_j) for every earlier j
            cov[i, :i] = b @ cov[pidx, :i]
            cov[:i, i] = cov[i, :i]
            cov[i, i] = b @ cov[np.ix_(pidx, pidx)] @ b + loc.sd ** 2
        else:
            cov[i, i] = loc.sd ** 2
    return order, mu, cov


def gaussian_condition(net: BayesNet, evidence: Mapping[str, float]) -> dict[str, tuple[float, float]]:
    """Exact posterior (mean, variance) of every node given point evidence."""
    order, mu, cov = gaussian_joint(net)
    pos = {n: i for i, n in enumerate(order)}
    unknown = set(evidence) - set(pos)
    if unknown:
        raise KeyError(f"evidence on unknown nodes {sorted(unknown)}")
    if not evidence:
        return {n: (float(mu[pos[n]]), float(cov[pos[n], pos[n]])) for n in net.nodes}
    e = [pos[n] for n in evidence]
    h = [i for i in range(len(order)) if i not in set(e)]
    see = cov[np.ix_(e, e)]
    if np.linalg.cond(see) > 1e12:
        raise np.linalg.LinAlgError("evidence covariance is singular")
    val = np.array([float(v) for v in evidence.values()])
    she = cov[np.ix_(h, e)]
    gain = np.linalg.solve(see, she.T).T
    post_mu = mu[h] + gain @ (val - mu[e])
    post_var = np.diag(cov[np.ix_(h, h)]) - np.einsum("ij,ij->i", gain, she)
    out = {}
    for k, i in enumerate(h):
        out[order[i]] = (float(post_mu[k]), float(max(post_var[k], 0.0)))
    for n, v in evidence.items():
        out[n] = (float(v), 0.0)
    return {n: out[n] for n in net.nodes}
