import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from bnarena.criteria import (
    BgeHyper, Criterion, bdeu, bge, bic, bic_gamma, contingency, counted, g2_discrete, g2_gaussian, local_bdeu,
    local_bge, local_bic, matched_test_from_score, mutual_information, parse_criterion, penalty_per_param,
    t_partial, x2_discrete, z_fisher,
)
from bnarena.graph import Dag
from bnarena.model import Dataset, Variable, sample

from conftest import fixture_net


def table_data(counts):
    """Binary x/y dataset reproducing a 2x2 table of counts."""
    rows = [[i, j] for i in range(2) for j in range(2) for _ in range(counts[i][j])]
    vs = [Variable("X", "discrete", ("0", "1")), Variable("Y", "discrete", ("0", "1"))]
    return Dataset(vs, rows)


def random_discrete(rng, n, cards):
    vs = [Variable(f"V{i}", "discrete", tuple(str(k) for k in range(c))) for i, c in enumerate(cards)]
    return Dataset(vs, np.column_stack([rng.integers(c, size=n) for c in cards]))


def partial_corr_data(n, rho, nz, seed=0):
    """Columns Z..., X, Y whose sample partial correlation of X, Y given Z is exactly ``rho``."""
    rng = np.random.default_rng(seed)
    M = np.column_stack([np.ones(n), rng.standard_normal((n, nz + 2))])
    Q, _ = np.linalg.qr(M)
    z = Q[:, 1:1 + nz]
    e1, e2 = Q[:, 1 + nz], Q[:, 2 + nz]
    x = e1 + z.sum(axis=1)
    y = rho * e1 + math.sqrt(1 - rho ** 2) * e2 - 2 * z.sum(axis=1)
    names = [f"Z{i}" for i in range(nz)] + ["X", "Y"]
    return Dataset([Variable(v, "gaussian") for v in names], np.column_stack([z, x, y])), names[:nz]


class TestDiscreteTests:
    def test_balanced_table(self):
        r = g2_discrete("X", "Y", [], table_data([[25, 25], [25, 25]]))
        assert r.statistic == pytest.approx(0.0, abs=1e-12)
        assert r.independent and r.dof_or_ref == 1

    def test_perfect_dependence(self):
        r = g2_discrete("X", "Y", [], table_data([[50, 0], [0, 50]]))
        assert r.statistic == pytest.approx(2 * 100 * math.log(2))
        assert r.statistic == pytest.approx(138.629, abs=1e-3)
        assert not r.independent

    def test_pearson_hand_value(self):
        r = x2_discrete("X", "Y", [], table_data([[30, 10], [10, 30]]))
        assert r.statistic == pytest.approx(20.0)
        assert x2_discrete("X", "Y", [], table_data([[25, 25], [25, 25]])).statistic == 0.0

    def test_threshold_and_pvalue(self):
        r = g2_discrete("X", "Y", [], table_data([[30, 10], [10, 30]]), alpha=0.01)
        assert r.threshold == pytest.approx(stats.chi2.ppf(0.99, 1))
        assert r.pvalue == pytest.approx(stats.chi2.sf(r.statistic, 1))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(5, 200), st.integers(0, 2))
    def test_g2_is_2n_mutual_information(self, seed, n, nz):
        rng = np.random.default_rng(seed)
        d = random_discrete(rng, n, [2, 3] + [2] * nz)
        z = [f"V{i}" for i in range(2, 2 + nz)]
        g2 = g2_discrete("V0", "V1", z, d).statistic
        assert g2 == pytest.approx(2 * n * mutual_information(d, "V0", "V1", z), abs=1e-9)

    def test_dof_with_conditioning(self):
        d = random_discrete(np.random.default_rng(1), 100, [3, 4, 2, 3])
        assert g2_discrete("V0", "V1", ["V2", "V3"], d).dof_or_ref == 2 * 3 * 6

    def test_invariant_to_row_order_and_relabelling(self):
        rng = np.random.default_rng(2)
        d = random_discrete(rng, 80, [3, 2, 2])
        perm = rng.permutation(d.n)
        relabel = d.values.copy()
        relabel[:, 0] = (relabel[:, 0] + 1) % 3
        for other in (d.rows(perm), Dataset(d.variables, relabel)):
            for test in (g2_discrete, x2_discrete):
                assert test("V0", "V1", ["V2"], other).statistic == pytest.approx(
                    test("V0", "V1", ["V2"], d).statistic)

    def test_contingency_shape(self):
        d = random_discrete(np.random.default_rng(0), 30, [2, 3, 4])
        t = contingency(d, "V0", "V1", ["V2"])
        assert t.shape == (2, 3, 4) and t.sum() == 30

    def test_gaussian_data_rejected(self):
        with pytest.raises(TypeError):
            g2_discrete("A", "B", [], sample(fixture_net("gsum4"), 10, 0))


class TestGaussianTests:
    def test_g2_hand_value(self):
        d, _ = partial_corr_data(100, 0.5, 0)
        r = g2_gaussian("X", "Y", [], d)
        assert r.statistic == pytest.approx(-100 * math.log(0.75), abs=1e-9)
        assert r.statistic == pytest.approx(28.768, abs=1e-3)

    def test_zero_correlation(self):
        d, z = partial_corr_data(60, 0.0, 2)
        for test in (g2_gaussian, t_partial, z_fisher):
            r = test("X", "Y", z, d)
            assert r.statistic == pytest.approx(0.0, abs=1e-9)
            assert r.independent

    def test_t_hand_value(self):
        d, z = partial_corr_data(103, 0.5, 1)
        assert t_partial("X", "Y", z, d).statistic == pytest.approx(0.5 * math.sqrt(100 / 0.75), abs=1e-9)

    def test_fisher_z_hand_value(self):
        d, _ = partial_corr_data(103, 0.5, 0)
        r = z_fisher("X", "Y", [], d)
        assert r.statistic == pytest.approx(math.log(3) * 10 / 2, abs=1e-9)
        assert r.threshold == pytest.approx(stats.norm.ppf(0.975))

    def test_partial_correlation_given_z(self):
        d, z = partial_corr_data(200, -0.3, 3, seed=4)
        from bnarena.criteria import gaussian_stats
        assert gaussian_stats(d).partial_correlation("X", "Y", z) == pytest.approx(-0.3, abs=1e-12)

    def test_monotone_in_rho(self):
        stats_ = [g2_gaussian("X", "Y", [], partial_corr_data(50, r, 0)[0]).statistic for r in (0.1, 0.3, 0.6, 0.9)]
        assert stats_ == sorted(stats_) and len(set(stats_)) == 4

    def test_perfect_correlation_is_dependence(self):
        x = np.linspace(0, 1, 20)
        d = Dataset([Variable("X", "gaussian"), Variable("Y", "gaussian")], np.column_stack([x, 3 * x + 1]))
        for test in (t_partial, z_fisher):
            r = test("X", "Y", [], d)
            assert math.isinf(r.statistic) and not r.independent


class TestScores:
    def test_bic_single_binary_node(self):
        d = Dataset([Variable("A", "discrete", ("0", "1"))], [[1]] * 6 + [[0]] * 4)
        want = 6 * math.log(0.6) + 4 * math.log(0.4) - 0.5 * math.log(10)
        assert bic(Dag(["A"]), d).total == pytest.approx(want)

    def test_bic_gamma_zero_is_bic(self):
        d = sample(fixture_net("dsum4"), 40, 0)
        g = fixture_net("dsum4").dag
        assert bic_gamma(g, d, 0.0).total == bic(g, d).total

    def test_bic_gamma_penalty(self):
        assert penalty_per_param(360, 648, 1.0) == pytest.approx(math.log(360) / 2 + math.log(648))
        assert penalty_per_param(360, 648, 1.0) == pytest.approx(2.943 + 6.474, abs=1e-3)

    def test_gaussian_parent_penalty_difference(self):
        d = sample(fixture_net("gsum4"), 360, 0)
        from bnarena.criteria import local_loglik
        delta = (local_bic(d, "C", ["A"], 1.0) - local_loglik(d, "C", ["A"])) - \
                (local_bic(d, "C", [], 1.0) - local_loglik(d, "C", []))
        assert -delta == pytest.approx(math.log(360) / 2 + math.log(4))

    def test_decomposable(self):
        net = fixture_net("dpair6")
        d = sample(net, 100, 1)
        s = bic(net.dag, d)
        assert s.total == pytest.approx(sum(s.per_node.values()))
        assert s.per_node["C"] == pytest.approx(local_bic(d, "C", ["A", "B"]))
        s2 = bic(net.dag.remove_arc("A", "C"), d)
        changed = [n for n in net.nodes if s2.per_node[n] != s.per_node[n]]
        assert changed == ["C"]

    def test_bdeu_single_observation(self):
        d = Dataset([Variable("A", "discrete", ("0", "1"))], [[1]])
        assert bdeu(Dag(["A"]), d).total == pytest.approx(math.log(0.5))

    def test_bdeu_empty_dataset(self):
        d = Dataset([Variable("A", "discrete", ("0", "1")), Variable("B", "discrete", ("0", "1"))], [])
        assert bdeu(Dag("AB", [("A", "B")]), d).total == 0.0

    def test_bdeu_equivalent_two_node(self):
        for name in ("dsum4", "dpair6"):
            d = sample(fixture_net(name), 50, 3)
            a, b = d.names[0], d.names[2]
            g1 = Dag(d.names, [(a, b)])
            g2 = Dag(d.names, [(b, a)])
            assert bdeu(g1, d).total == pytest.approx(bdeu(g2, d).total, abs=1e-9)

    def test_bdeu_large_counts_stay_finite(self):
        rng = np.random.default_rng(0)
        d = random_discrete(rng, 1_000_000, [3, 3])
        v = local_bdeu(d, "V0", ["V1"], 1.0)
        assert math.isfinite(v)
        assert math.isfinite(local_bdeu(d, "V0", ["V1"], 1e6))

    def test_bge_matches_normal_wishart_integral(self):
        # one node, two observations; mean | W ~ N(nu, 1/(a_mu W)), W ~ Gamma(a_w/2, rate t/2)
        d = Dataset([Variable("X", "gaussian")], [[-1.0], [1.0]])
        a_mu, a_w = 1.0, 3.0
        t = a_mu * (a_w - 1 - 1) / (a_mu + 1)
        nu, xs, k = 0.0, (-1.0, 1.0), a_w / 2

        def integrand(mu, w):
            if w <= 0:
                return 0.0
            lik = math.exp(-sum((x - mu) ** 2 for x in xs) * w / 2) * w / (2 * math.pi)
            prior_mu = math.sqrt(a_mu * w / (2 * math.pi)) * math.exp(-a_mu * w * (mu - nu) ** 2 / 2)
            prior_w = math.exp(k * math.log(t / 2) + (k - 1) * math.log(w) - t * w / 2 - math.lgamma(k))
            return lik * prior_mu * prior_w

        val, _ = integrate.dblquad(integrand, 0, np.inf, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-11)
        assert local_bge(d, "X", []) == pytest.approx(math.log(val), abs=1e-8)
        assert local_bge(d, "X", []) == pytest.approx(-4.6190185226, abs=1e-9)

    def test_bge_mean_shift_vanishes_at_sample_mean(self):
        d = sample(fixture_net("gsum4"), 30, 0)
        explicit = BgeHyper(nu=tuple(d.values.mean(axis=0)))
        assert local_bge(d, "C", ["A"], explicit) == pytest.approx(local_bge(d, "C", ["A"]), abs=1e-12)
        shifted = BgeHyper(nu=tuple(d.values.mean(axis=0) + 1.0))
        assert local_bge(d, "C", ["A"], shifted) != pytest.approx(local_bge(d, "C", ["A"]))

    def test_bge_equivalent_two_node(self):
        for name in ("gsum4", "gpair5", "gcollider4"):
            d = sample(fixture_net(name), 40, 1)
            a, b = d.names[0], d.names[2]
            assert bge(Dag(d.names, [(a, b)]), d).total == pytest.approx(bge(Dag(d.names, [(b, a)]), d).total,
                                                                      abs=1e-9)

    def test_kind_checks(self):
        with pytest.raises(TypeError):
            bdeu(Dag(["A"]), sample(fixture_net("gsum4"), 5, 0).select(["A"]))
        with pytest.raises(TypeError):
            bge(Dag(["A"]), sample(fixture_net("dsum4"), 5, 0).select(["A"]))


class TestMatched:
    @pytest.mark.parametrize("kind,gamma", [("bic", 0.0), ("bic-gamma", 0.0), ("bic-gamma", 2.0)])
    def test_bic_family_agrees_with_score(self, kind, gamma):
        d = sample(fixture_net("dpair6"), 60, 0)
        for x, y, z in [("C", "A", []), ("C", "B", ["A"]), ("F", "A", ["D"]), ("A", "B", ["C"])]:
            r = matched_test_from_score(kind, x, y, z, d, gamma=gamma)
            diff = local_bic(d, x, z + [y], gamma) - local_bic(d, x, z, gamma)
            assert (not r.independent) == (diff > 0)

    def test_gamma_zero_equals_plain(self):
        d = sample(fixture_net("gsum4"), 30, 0)
        a = matched_test_from_score("bic", "C", "A", ["B"], d)
        b = matched_test_from_score("bic-gamma", "C", "A", ["B"], d, gamma=0.0)
        assert (a.statistic, a.threshold, a.independent) == (b.statistic, b.threshold, b.independent)

    def test_thresholds(self):
        d = sample(fixture_net("dsum4"), 100, 0)
        r = matched_test_from_score("bic", "C", "A", ["B"], d)
        # adding a binary parent to a 4-level node with 2 configurations adds 6 parameters
        assert r.threshold == pytest.approx(6 * math.log(100))
        r = matched_test_from_score("bic-gamma", "C", "A", ["B"], d, gamma=0.5)
        assert r.threshold == pytest.approx(6 * (2 * 0.5 * math.log(4) + math.log(100)))

    def test_log_bf_equal_scores_is_independence(self):
        # y constant: adding it as a parent leaves the BDeu term unchanged
        vs = [Variable("X", "discrete", ("0", "1")), Variable("Y", "discrete", ("0",))]
        d = Dataset(vs, [[0, 0], [1, 0], [1, 0]])
        r = matched_test_from_score("bdeu", "X", "Y", [], d)
        assert r.statistic == pytest.approx(0.0, abs=1e-12) and r.independent

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            matched_test_from_score("aic", "A", "B", [], sample(fixture_net("gsum4"), 10, 0))


class TestCriterion:
    def test_counts_tests_and_scores(self):
        c = parse_criterion("bic", sample(fixture_net("gsum4"), 30, 0))
        for _ in range(3):
            c.test("A", "B")
        assert c.calls == 3
        c.local_score("C", ["A"])
        assert c.calls == 4
        c.score(Dag("ABCD"))
        assert c.calls == 8

    def test_fresh_and_counted_reset(self):
        c = parse_criterion("zf", sample(fixture_net("gsum4"), 30, 0))
        c.test("A", "B")
        assert counted(c).calls == 0 and c.fresh().calls == 0 and c.calls == 1

    def test_test_only_kinds_have_no_score(self):
        c = parse_criterion("g2", sample(fixture_net("dsum4"), 30, 0))
        assert not c.has_score
        with pytest.raises(TypeError):
            c.local_score("A", [])

    def test_keys(self):
        dd = sample(fixture_net("dsum4"), 30, 0)
        assert parse_criterion("bic-gamma:2", dd).gamma == 2.0
        assert parse_criterion("bdeu:10", dd).key == "bdeu:10"
        assert parse_criterion("g2", dd).test("A", "C").dof_or_ref == 3
        with pytest.raises(ValueError):
            parse_criterion("bic:3", dd)
        with pytest.raises(ValueError):
            parse_criterion("mi", dd)
        with pytest.raises(ValueError):
            Criterion("bic-gamma", dd, gamma=-1)

    def test_thread_safe_counter(self):
        c = parse_criterion("bic", sample(fixture_net("gsum4"), 30, 0))

        def work():
            for _ in range(200):
                c.test("A", "C", ["B"])

        threads = [threading.Thread(target=work) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert c.calls == 800
