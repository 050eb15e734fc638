"""Conditional independence tests, network scores and matched score/test pairs.

A score and a test are *matched* when the test's decision on adding ``y`` to
the conditioning set of ``x`` coincides with the score's decision on adding
the arc ``y -> x``.  :class:`Criterion` bundles both halves together with a
call counter.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .graph import Dag
from .model import Dataset, DegenerateFit, config_index

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class TestResult:
    statistic: float
    threshold: float
    independent: bool
    dof_or_ref: object
    pvalue: float | None = None

    @property
    def margin(self) -> float:
        """Distance of the statistic from the decision boundary; positive means independent."""
        return self.threshold - abs(self.statistic)


@dataclass(frozen=True)
class ScoreValue:
    total: float
    per_node: dict = field(default_factory=dict)


# -- discrete contingency tables -------------------------------------------

def _require(d: Dataset, kind: str):
    if d.kind != kind:
        raise TypeError(f"{kind} data required, got {d.kind}")


def contingency(d: Dataset, x: str, y: str, z: Sequence[str] = ()) -> np.ndarray:
    """Counts n_ijk as an array of shape (R, C, L)."""
    r, c = d.var(x).cardinality, d.var(y).cardinality
    cards = [d.var(v).cardinality for v in z]
    L = math.prod(cards)
    k = config_index(d.values[:, [d.index[v] for v in z]], cards)
    code = (k * r + d.column(x)) * c + d.column(y)
    counts = np.bincount(code, minlength=L * r * c).reshape(L, r, c)
    return counts.transpose(1, 2, 0)


def _g2_from_table(t: np.ndarray) -> float:
    t = t.astype(float)
    ni = t.sum(axis=1, keepdims=True)   # n_{i+k}
    nj = t.sum(axis=0, keepdims=True)   # n_{+jk}
    nk = t.sum(axis=(0, 1), keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = t * np.log(t * nk / (ni * nj))
    return float(2.0 * np.where(t > 0, terms, 0.0).sum())


def _x2_from_table(t: np.ndarray) -> float:
    t = t.astype(float)
    m = t.sum(axis=1, keepdims=True) * t.sum(axis=0, keepdims=True)
    nk = t.sum(axis=(0, 1), keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = m / nk
        terms = (t - m) ** 2 / m
    return float(np.where(m > 0, terms, 0.0).sum())


def _chi2_result(stat: float, dof: int, alpha: float) -> TestResult:
    thr = float(stats.chi2.ppf(1 - alpha, dof)) if dof > 0 else 0.0
    pval = float(stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
    return TestResult(stat, thr, stat <= thr, dof, pval)


def g2_discrete(x: str, y: str, z: Sequence[str], d: Dataset, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Log-likelihood ratio test on the (x, y, z) contingency table."""
    _require(d, "discrete")
    t = contingency(d, x, y, z)
    R, C, L = t.shape
    return _chi2_result(_g2_from_table(t), (R - 1) * (C - 1) * L, alpha)


def x2_discrete(x: str, y: str, z: Sequence[str], d: Dataset, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Pearson's chi-squared test; cells with zero expected count are skipped."""
    _require(d, "discrete")
    t = contingency(d, x, y, z)
    R, C, L = t.shape
    return _chi2_result(_x2_from_table(t), (R - 1) * (C - 1) * L, alpha)


def mutual_information(d: Dataset, x: str, y: str, z: Sequence[str] = ()) -> float:
    """Empirical conditional mutual information in nats, from joint frequencies."""
    t = contingency(d, x, y, z).astype(float)
    p = t / t.sum()
    pik = p.sum(axis=1, keepdims=True)
    pjk = p.sum(axis=0, keepdims=True)
    pk = p.sum(axis=(0, 1), keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * (np.log(p) + np.log(pk) - np.log(pik) - np.log(pjk))
    return float(np.where(p > 0, terms, 0.0).sum())


# -- gaussian sufficient statistics ----------------------------------------

class GaussianStats:
    """Sample mean and centred scatter matrix of a continuous dataset."""

    def __init__(self, d: Dataset):
        _require(d, "gaussian")
        self.n = d.n
        self.index = d.index
        self.mean = d.values.mean(axis=0) if d.n else np.zeros(len(d.names))
        xc = d.values - self.mean
        self.scatter = xc.T @ xc

    def residual_scatter(self, targets: Sequence[str], given: Sequence[str]) -> np.ndarray:
        """Scatter of ``targets`` after regressing out ``given`` (plus an intercept)."""
        a = [self.index[v] for v in targets]
        S = self.scatter
        if not given:
            return S[np.ix_(a, a)]
        z = [self.index[v] for v in given]
        Szz = S[np.ix_(z, z)]
        Saz = S[np.ix_(a, z)]
        try:
            sol = np.linalg.solve(Szz, Saz.T)
        except np.linalg.LinAlgError:
            raise DegenerateFit(f"singular covariance over conditioning set {list(given)}") from None
        if np.linalg.cond(Szz) > 1e13:
            raise DegenerateFit(f"singular covariance over conditioning set {list(given)}")
        return S[np.ix_(a, a)] - Saz @ sol

    def partial_correlation(self, x: str, y: str, z: Sequence[str] = ()) -> float:
        R = self.residual_scatter([x, y], z)
        sxx, syy, sxy = R[0, 0], R[1, 1], R[0, 1]
        scale = max(self.scatter[self.index[x], self.index[x]], self.scatter[self.index[y], self.index[y]], 1e-300)
        if sxx <= 1e-13 * scale or syy <= 1e-13 * scale:
            raise DegenerateFit(f"{x} or {y} is a deterministic function of {list(z)}")
        return float(np.clip(sxy / math.sqrt(sxx * syy), -1.0, 1.0))

    def rss(self, node: str, parents: Sequence[str]) -> float:
        return float(self.residual_scatter([node], parents)[0, 0])


_STATS_CACHE_ATTR = "_bnarena_gstats"


def gaussian_stats(d: Dataset) -> GaussianStats:
    # datasets are immutable, so the scatter matrix can be memoised on them
    st = getattr(d, _STATS_CACHE_ATTR, None)
    if st is None:
        st = GaussianStats(d)
        setattr(d, _STATS_CACHE_ATTR, st)
    return st


def _rho(x, y, z, d) -> float:
    return gaussian_stats(d).partial_correlation(x, y, z)


def g2_gaussian(x: str, y: str, z: Sequence[str], d: Dataset, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Gaussian likelihood-ratio test, ``-n log(1 - rho^2)`` against chi^2_1."""
    _require(d, "gaussian")
    if d.n <= len(z) + 2:
        raise ValueError("need n > |Z| + 2")
    rho = _rho(x, y, z, d)
    stat = math.inf if abs(rho) >= 1.0 else -d.n * math.log1p(-rho * rho)
    return _chi2_result(stat, 1, alpha)


def t_partial(x: str, y: str, z: Sequence[str], d: Dataset, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Exact Student's t test for a zero partial correlation (two-sided)."""
    _require(d, "gaussian")
    df = d.n - len(z) - 2
    if df <= 0:
        raise ValueError("need n > |Z| + 2")
    rho = _rho(x, y, z, d)
    stat = math.copysign(math.inf, rho) if abs(rho) >= 1.0 else rho * math.sqrt(df / (1 - rho * rho))
    thr = float(stats.t.ppf(1 - alpha / 2, df))
    return TestResult(stat, thr, abs(stat) <= thr, f"t_{df}", float(2 * stats.t.sf(abs(stat), df)))


def z_fisher(x: str, y: str, z: Sequence[str], d: Dataset, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Fisher's Z test for a zero partial correlation (two-sided, asymptotic)."""
    _require(d, "gaussian")
    m = d.n - len(z) - 3
    if m <= 0:
        raise ValueError("need n > |Z| + 3")
    rho = _rho(x, y, z, d)
    stat = math.copysign(math.inf, rho) if abs(rho) >= 1.0 else math.log((1 + rho) / (1 - rho)) * math.sqrt(m) / 2
    thr = float(stats.norm.ppf(1 - alpha / 2))
    return TestResult(stat, thr, abs(stat) <= thr, "N(0,1)", float(2 * stats.norm.sf(abs(stat))))


# -- local scores ----------------------------------------------------------

def local_loglik(d: Dataset, node: str, parents: Sequence[str]) -> float:
    """Maximised log-likelihood of ``node`` given ``parents``."""
    if d.kind == "discrete":
        r = d.var(node).cardinality
        cards = [d.var(p).cardinality for p in parents]
        q = math.prod(cards)
        cfg = config_index(d.values[:, [d.index[p] for p in parents]], cards)
        counts = np.bincount(cfg * r + d.column(node), minlength=q * r).reshape(q, r).astype(float)
        nij = counts.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = counts * np.log(counts / nij)
        return float(np.where(counts > 0, terms, 0.0).sum())
    st = gaussian_stats(d)
    n = d.n
    if n <= len(parents) + 1:
        raise DegenerateFit(f"{node}: not enough rows for {len(parents)} parents")
    rss = st.rss(node, parents)
    if rss <= 1e-12 * max(st.scatter[st.index[node], st.index[node]], 1e-300) or rss <= 0:
        raise DegenerateFit(f"{node}: zero residual variance given {list(parents)}")
    return -0.5 * n * (math.log(2 * math.pi * rss / n) + 1.0)


def local_nparams(d: Dataset, node: str, parents: Sequence[str]) -> int:
    if d.kind == "discrete":
        return (d.var(node).cardinality - 1) * math.prod(d.var(p).cardinality for p in parents)
    return len(parents) + 2


def penalty_per_param(n: int, n_vars: int, gamma: float = 0.0) -> float:
    """BIC_gamma penalty multiplier: log(n)/2 + gamma log(N)."""
    return 0.5 * math.log(n) + gamma * math.log(n_vars)


def local_bic(d: Dataset, node: str, parents: Sequence[str], gamma: float = 0.0) -> float:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if d.n == 0:
        raise DegenerateFit("BIC undefined for an empty dataset")
    ll = local_loglik(d, node, parents)
    pen = penalty_per_param(d.n, len(d.names), gamma)
    return ll - local_nparams(d, node, parents) * pen


def local_bdeu(d: Dataset, node: str, parents: Sequence[str], iss: float = 1.0) -> float:
    _require(d, "discrete")
    if not iss > 0:
        raise ValueError("imaginary sample size must be positive")
    r = d.var(node).cardinality
    cards = [d.var(p).cardinality for p in parents]
    q = math.prod(cards)
    if d.n == 0:
        return 0.0
    cfg = config_index(d.values[:, [d.index[p] for p in parents]], cards)
    counts = np.bincount(cfg * r + d.column(node), minlength=q * r).reshape(q, r)
    counts = counts[counts.sum(axis=1) > 0].astype(float)
    a_ij, a_ijk = iss / q, iss / (q * r)
    nij = counts.sum(axis=1)
    val = np.sum(gammaln(a_ij) - gammaln(a_ij + nij)) + np.sum(gammaln(a_ijk + counts) - gammaln(a_ijk))
    return float(val)


@dataclass(frozen=True)
class BgeHyper:
    alpha_mu: float = 1.0
    alpha_w: float | None = None        # default N + 2
    t: float | None = None              # T = t I; default alpha_mu (alpha_w - N - 1) / (alpha_mu + 1)
    nu: tuple[float, ...] | None = None  # default sample mean

    def resolve(self, n_vars: int, xbar: np.ndarray) -> tuple[float, float, np.ndarray, np.ndarray]:
        aw = n_vars + 2.0 if self.alpha_w is None else float(self.alpha_w)
        am = float(self.alpha_mu)
        if not (am > 0 and aw > n_vars - 1):
            raise ValueError("invalid BGe imaginary sample sizes")
        t = am * (aw - n_vars - 1) / (am + 1) if self.t is None else float(self.t)
        nu = xbar if self.nu is None else np.asarray(self.nu, dtype=float)
        return am, aw, t * np.eye(n_vars), nu


class _BgePosterior:
    def __init__(self, d: Dataset, hyper: BgeHyper):
        st = gaussian_stats(d)
        N = len(d.names)
        am, aw, T, nu = hyper.resolve(N, st.mean)
        n = d.n
        diff = (st.mean - nu)[:, None]
        self.R = T + st.scatter + (n * am / (n + am)) * (diff @ diff.T)
        self.T = T
        self.am, self.aw, self.n, self.N = am, aw, n, N
        self.index = d.index


def _bge_posterior(d: Dataset, hyper: BgeHyper) -> _BgePosterior:
    cache = d.__dict__.setdefault("_bnarena_bge", {}) if hasattr(d, "__dict__") else {}
    post = cache.get(hyper)
    if post is None:
        post = cache[hyper] = _BgePosterior(d, hyper)
    return post


def _logdet(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    sign, ld = np.linalg.slogdet(M)
    if sign <= 0:
        raise DegenerateFit("posterior matrix is not positive definite")
    return float(ld)


def local_bge(d: Dataset, node: str, parents: Sequence[str], hyper: BgeHyper = BgeHyper()) -> float:
    """Log BGe marginal likelihood of ``node`` given ``parents``."""
    _require(d, "gaussian")
    post = _bge_posterior(d, hyper)
    n, N, am, aw = post.n, post.N, post.am, post.aw
    l = len(parents)
    pa = [post.index[p] for p in parents]
    fam = [post.index[node]] + pa
    a_fam = (aw - N + l + 1) / 2
    val = 0.5 * math.log(am / (n + am))
    val += gammaln(a_fam + n / 2) - gammaln(a_fam) - 0.5 * n * math.log(math.pi)
    val += a_fam * _logdet(post.T[np.ix_(fam, fam)]) - (a_fam - 0.5) * _logdet(post.T[np.ix_(pa, pa)])
    val += (a_fam - 0.5 + n / 2) * _logdet(post.R[np.ix_(pa, pa)]) - (a_fam + n / 2) * _logdet(post.R[np.ix_(fam, fam)])
    return float(val)


def _total(g: Dag, fn) -> ScoreValue:
    per = {n: fn(n, g.ordered_parents(n)) for n in g.nodes}
    return ScoreValue(sum(per.values()), per)


def bic(g: Dag, d: Dataset) -> ScoreValue:
    return _total(g, lambda n, pa: local_bic(d, n, pa))


def bic_gamma(g: Dag, d: Dataset, gamma: float) -> ScoreValue:
    return _total(g, lambda n, pa: local_bic(d, n, pa, gamma))


def bdeu(g: Dag, d: Dataset, iss: float = 1.0) -> ScoreValue:
    return _total(g, lambda n, pa: local_bdeu(d, n, pa, iss))


def bge(g: Dag, d: Dataset, hyper: BgeHyper = BgeHyper()) -> ScoreValue:
    return _total(g, lambda n, pa: local_bge(d, n, pa, hyper))


def matched_test_from_score(score_kind: str, x: str, y: str, z: Sequence[str], d: Dataset, *,
                            gamma: float = 0.0, iss: float = 1.0, hyper: BgeHyper = BgeHyper()) -> TestResult:
    """Test matched to a score: is adding ``y -> x`` to parents ``z`` an improvement?

    Dependence is declared iff the statistic exceeds the threshold.
    """
    z = list(z)
    if score_kind in ("bic", "bic-gamma"):
        g = gamma if score_kind == "bic-gamma" else 0.0
        if g < 0:
            raise ValueError("gamma must be non-negative")
        stat = 2.0 * (local_loglik(d, x, z + [y]) - local_loglik(d, x, z))
        dpar = local_nparams(d, x, z + [y]) - local_nparams(d, x, z)
        thr = dpar * (2 * g * math.log(len(d.names)) + math.log(d.n))
        ref = "G2_BIC" if g == 0 else f"G2_BIC_gamma({g:g})"
        return TestResult(stat, thr, not stat > thr, ref)
    if score_kind == "bdeu":
        stat = local_bdeu(d, x, z + [y], iss) - local_bdeu(d, x, z, iss)
    elif score_kind == "bge":
        stat = local_bge(d, x, z + [y], hyper) - local_bge(d, x, z, hyper)
    else:
        raise ValueError(f"no matched test for score {score_kind!r}")
    return TestResult(stat, 0.0, not stat > 0.0, "logBF")


# -- instrumented criterion ------------------------------------------------

SCORE_KINDS = ("bic", "bic-gamma", "bdeu", "bge")
TEST_KINDS = ("g2", "x2", "zf", "t")


class Criterion:
    """A score and its matched test over one dataset, with a call counter.

    Every test invocation and every local score evaluation adds one call.
    Test-only kinds (``g2``, ``x2``, ``zf``, ``t``) carry no score.
    """

    def __init__(self, kind: str, data: Dataset, *, gamma: float = 0.0, iss: float = 1.0,
                 alpha: float = DEFAULT_ALPHA, bge_hyper: BgeHyper = BgeHyper()):
        if kind not in SCORE_KINDS + TEST_KINDS:
            raise ValueError(f"unknown criterion {kind!r}")
        if kind == "bdeu" or kind == "x2":
            _require(data, "discrete")
        if kind in ("bge", "zf", "t"):
            _require(data, "gaussian")
        if gamma < 0:
            raise ValueError("gamma must be non-negative")
        self.kind = kind
        self.data = data
        self.gamma = gamma
        self.iss = iss
        self.alpha = alpha
        self.bge_hyper = bge_hyper
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def key(self) -> str:
        if self.kind == "bic-gamma":
            return f"bic-gamma:{self.gamma:g}"
        if self.kind == "bdeu":
            return f"bdeu:{self.iss:g}"
        return self.kind

    @property
    def calls(self) -> int:
        return self._calls

    @property
    def has_score(self) -> bool:
        return self.kind in SCORE_KINDS

    def _tick(self, k: int = 1):
        with self._lock:
            self._calls += k

    def fresh(self) -> Criterion:
        """Same criterion and data with the counter at zero."""
        return Criterion(self.kind, self.data, gamma=self.gamma, iss=self.iss, alpha=self.alpha,
                         bge_hyper=self.bge_hyper)

    def local_score(self, node: str, parents: Sequence[str]) -> float:
        if not self.has_score:
            raise TypeError(f"criterion {self.kind!r} has no score")
        self._tick()
        parents = list(parents)
        if self.kind in ("bic", "bic-gamma"):
            return local_bic(self.data, node, parents, self.gamma if self.kind == "bic-gamma" else 0.0)
        if self.kind == "bdeu":
            return local_bdeu(self.data, node, parents, self.iss)
        return local_bge(self.data, node, parents, self.bge_hyper)

    def score(self, g: Dag) -> ScoreValue:
        return _total(g, self.local_score)

    def test(self, x: str, y: str, z: Sequence[str] = ()) -> TestResult:
        self._tick()
        z = list(z)
        d = self.data
        if self.has_score:
            return matched_test_from_score(self.kind, x, y, z, d, gamma=self.gamma, iss=self.iss,
                                           hyper=self.bge_hyper)
        if self.kind == "g2":
            return (g2_discrete if d.kind == "discrete" else g2_gaussian)(x, y, z, d, self.alpha)
        if self.kind == "x2":
            return x2_discrete(x, y, z, d, self.alpha)
        if self.kind == "zf":
            return z_fisher(x, y, z, d, self.alpha)
        return t_partial(x, y, z, d, self.alpha)

    def __repr__(self):
        return f"Criterion({self.key}, calls={self.calls})"


def counted(c: Criterion) -> Criterion:
    """A fresh instrumented copy of ``c`` whose counter starts at zero."""
    return c.fresh()


def parse_criterion(key: str, data: Dataset, alpha: float = DEFAULT_ALPHA) -> Criterion:
    """Build a criterion from a key such as ``bic``, ``bic-gamma:2``, ``bdeu:10`` or ``zf``."""
    name, _, arg = key.partition(":")
    if name == "bic-gamma":
        return Criterion(name, data, gamma=float(arg or 0.0))
    if name == "bdeu":
        return Criterion(name, data, iss=float(arg or 1.0))
    if arg:
        raise ValueError(f"criterion {name!r} takes no argument")
    return Criterion(name, data, alpha=alpha)
