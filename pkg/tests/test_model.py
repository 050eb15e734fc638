import io
import math

import numpy as np
import pytest

from bnarena.bench import load_bn_text, parse_bn_text
from bnarena.graph import Dag, cpdag_from_dag
from bnarena.model import (
    BayesNet, Dataset, DegenerateFit, GaussianLocal, Variable, fit_parameters, gaussian_condition,
    gaussian_joint, log_likelihood, node_log_likelihood, param_count, read_csv, sample, write_csv,
)

from conftest import DATA, fixture_net

GAUSSIAN_FIXTURES = ["gchain3", "gsum4", "gcollider4", "gpair5"]


def binary(name):
    return Variable(name, "discrete", ("0", "1"))


def gaussian_net(layout, name="g"):
    """layout: list of (node, parents, intercept, betas, sd) in any order."""
    dag = Dag([s[0] for s in layout], [(p, s[0]) for s in layout for p in s[1]])
    locs = {n: GaussianLocal(n, tuple(ps), mu, tuple(b), sd) for n, ps, mu, b, sd in layout}
    return BayesNet(dag, tuple(Variable(s[0], "gaussian") for s in layout), locs, "gaussian", name)


def oracle_condition(net, evidence):
    """Joint covariance as (I - B)^-1 D (I - B)^-T, then the conditional-normal formula."""
    nodes = list(net.nodes)
    k = len(nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    B = np.zeros((k, k))
    c = np.zeros(k)
    D = np.zeros(k)
    for n, loc in net.locals.items():
        c[pos[n]] = loc.intercept
        D[pos[n]] = loc.sd ** 2
        for p, b in zip(loc.parent_order, loc.betas):
            B[pos[n], pos[p]] = b
    inv = np.linalg.inv(np.eye(k) - B)
    mu = inv @ c
    S = inv @ np.diag(D) @ inv.T
    e = [pos[n] for n in evidence]
    h = [i for i in range(k) if i not in e]
    out = {nodes[i]: (mu[i], S[i, i]) for i in range(k)}
    if e:
        v = np.array(list(evidence.values()), dtype=float)
        Sinv = np.linalg.inv(S[np.ix_(e, e)])
        m = mu[h] + S[np.ix_(h, e)] @ Sinv @ (v - mu[e])
        C = S[np.ix_(h, h)] - S[np.ix_(h, e)] @ Sinv @ S[np.ix_(e, h)]
        out.update({nodes[i]: (m[j], C[j, j]) for j, i in enumerate(h)})
        out.update({n: (float(x), 0.0) for n, x in evidence.items()})
    return out


class TestParamCount:
    def test_alarm(self):
        assert param_count(load_bn_text(DATA / "alarm.bn")) == 509

    def test_single_binary_root(self):
        assert param_count(Dag(["A"]), [binary("A")]) == 1

    def test_gaussian_two_parents(self):
        g = Dag("ABC", [("A", "C"), ("B", "C")])
        vs = [Variable(n, "gaussian") for n in "ABC"]
        assert param_count(g, vs) == 2 + 2 + 4

    def test_unknown_levels(self):
        with pytest.raises(ValueError):
            param_count(Dag(["A"]), [Variable("A", "discrete")])


class TestFit:
    def test_binary_frequencies(self):
        d = Dataset([binary("A")], [[1]] * 6 + [[0]] * 4)
        net = fit_parameters(Dag(["A"]), d)
        np.testing.assert_allclose(net.locals["A"].probs, [[0.4, 0.6]])

    def test_empty_parent_configuration_is_uniform(self):
        d = Dataset([binary("A"), binary("B")], [[0, 0], [0, 1]])
        probs = fit_parameters(Dag("AB", [("A", "B")]), d).locals["B"].probs
        np.testing.assert_allclose(probs, [[0.5, 0.5], [0.5, 0.5]])

    def test_exact_linear_relation_is_degenerate(self):
        x = np.linspace(-1, 1, 20)
        d = Dataset([Variable("X", "gaussian"), Variable("Y", "gaussian")], np.column_stack([x, 2 * x]))
        with pytest.raises(DegenerateFit):
            fit_parameters(Dag("XY", [("X", "Y")]), d)

    def test_constant_column(self):
        d = Dataset([Variable("X", "gaussian")], np.full((10, 1), 3.0))
        with pytest.raises(DegenerateFit):
            fit_parameters(Dag(["X"]), d)

    def test_rank_deficient_design(self):
        x = np.arange(12.0)
        d = Dataset([Variable(n, "gaussian") for n in "XYZ"],
                    np.column_stack([x, 2 * x, np.sin(x)]))
        with pytest.raises(DegenerateFit):
            fit_parameters(Dag("XYZ", [("X", "Z"), ("Y", "Z")]), d)

    def test_gaussian_sd_denominator(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([0.0, 2.0, 1.0, 3.0])
        d = Dataset([Variable("X", "gaussian"), Variable("Y", "gaussian")], np.column_stack([x, y]))
        loc = fit_parameters(Dag("XY", [("X", "Y")]), d).locals["Y"]
        b, a = np.polyfit(x, y, 1)
        resid = y - (a + b * x)
        assert loc.betas[0] == pytest.approx(b)
        assert loc.intercept == pytest.approx(a)
        assert loc.sd == pytest.approx(math.sqrt(resid @ resid / 2))

    def test_recovers_discrete_tables(self):
        net = fixture_net("dpair6")
        fitted = fit_parameters(net.dag, sample(net, 200_000, 5))
        for n in net.nodes:
            np.testing.assert_allclose(fitted.locals[n].probs, net.locals[n].probs, atol=0.02)

    def test_recovers_gaussian_coefficients(self):
        net = fixture_net("gpair5")
        fitted = fit_parameters(net.dag, sample(net, 100_000, 5))
        for n in net.nodes:
            np.testing.assert_allclose(fitted.locals[n].betas, net.locals[n].betas, atol=0.05)
            assert fitted.locals[n].sd == pytest.approx(net.locals[n].sd, abs=0.05)


class TestSample:
    def test_empty_sample(self):
        d = sample(fixture_net("dsum4"), 0, 1)
        assert d.n == 0 and d.names == ("A", "B", "C", "D")

    def test_same_seed_same_data(self):
        net = fixture_net("gpair5")
        assert np.array_equal(sample(net, 50, 9).values, sample(net, 50, 9).values)
        assert not np.array_equal(sample(net, 50, 9).values, sample(net, 50, 10).values)

    def test_root_frequency(self):
        net = parse_bn_text("network r\ntype discrete\nnode A a b\nparents A\ncpt A 0.3 0.7\n")
        freq = sample(net, 100_000, 0).column("A").mean()
        assert abs(freq - 0.7) < 0.01

    def test_declaration_order_does_not_change_distribution(self):
        text = (DATA / "fixtures" / "dsum4.bn").read_text()
        lines = text.splitlines()
        nodes = [l for l in lines if l.startswith("node ")]
        rest = [l for l in lines if not l.startswith("node ")]
        shuffled = "\n".join(rest[:3] + nodes[::-1] + rest[3:]) + "\n"
        a = sample(parse_bn_text(text), 60_000, 1)
        b = sample(parse_bn_text(shuffled), 60_000, 1)
        for n in "ABCD":
            ha = np.bincount(a.column(n), minlength=4) / a.n
            hb = np.bincount(b.column(n), minlength=4) / b.n
            np.testing.assert_allclose(ha, hb, atol=0.01)


class TestLogLikelihood:
    def test_uniform_binary(self):
        net = parse_bn_text("network u\ntype discrete\nnode A a b\nparents A\ncpt A 0.5 0.5\n")
        d = Dataset(net.variables, [[0], [1]] * 5)
        assert log_likelihood(net, d) == pytest.approx(10 * math.log(0.5))

    def test_standard_normal_point(self):
        net = gaussian_net([("X", (), 0.0, (), 1.0)])
        d = Dataset(net.variables, [[0.0]])
        assert log_likelihood(net, d) == pytest.approx(math.log(1 / math.sqrt(2 * math.pi)))

    def test_decomposes(self):
        net = fixture_net("gcollider4")
        d = sample(net, 30, 2)
        assert log_likelihood(net, d) == pytest.approx(sum(node_log_likelihood(net, d, n) for n in net.nodes))

    def test_zero_probability_is_negative_infinity(self):
        net = parse_bn_text("network z\ntype discrete\nnode A a b\nparents A\ncpt A 1 0\n", require_positive=False)
        assert log_likelihood(net, Dataset(net.variables, [[1]])) == -math.inf

    @pytest.mark.parametrize("name", ["dsum4", "gsum4", "gcollider4"])
    def test_generating_network_beats_arc_removal_and_reversal(self, name):
        net = fixture_net(name)
        d = sample(net, 20_000, 3)
        true_ll = log_likelihood(net, d)
        cp = cpdag_from_dag(net.dag)
        for a, b in sorted(net.dag.arcs):
            for g in (net.dag.remove_arc(a, b), net.dag.reverse_arc(a, b)):
                if cpdag_from_dag(g) == cp:
                    continue  # same equivalence class, same fitted likelihood
                assert true_ll > log_likelihood(fit_parameters(g, d), d)


class TestGaussianCondition:
    def test_two_node_example(self):
        net = gaussian_net([("X", (), 0.0, (), 1.0), ("Y", ("X",), 1.0, (0.5,), 1.0)])
        post = gaussian_condition(net, {"X": 2.0})
        assert post["Y"] == pytest.approx((2.0, 1.0), abs=1e-12)
        assert post["X"] == (2.0, 0.0)

    def test_isolated_evidence_changes_nothing_else(self):
        net = gaussian_net([("X", (), 0.0, (), 1.0), ("Y", ("X",), 1.0, (0.5,), 1.0), ("Z", (), 3.0, (), 2.0)])
        prior = gaussian_condition(net, {})
        post = gaussian_condition(net, {"Z": -4.0})
        assert post["X"] == pytest.approx(prior["X"]) and post["Y"] == pytest.approx(prior["Y"])

    @pytest.mark.parametrize("name", GAUSSIAN_FIXTURES)
    def test_matches_joint_covariance_oracle(self, name):
        net = fixture_net(name)
        rng = np.random.default_rng(len(name))
        nodes = list(net.nodes)
        for k in range(len(nodes)):
            for ev_nodes in [nodes[:k], nodes[-k:] if k else []]:
                ev = {n: float(rng.normal(0, 2)) for n in ev_nodes}
                got = gaussian_condition(net, ev)
                want = oracle_condition(net, ev)
                for n in nodes:
                    assert got[n][0] == pytest.approx(want[n][0], abs=1e-9)
                    assert got[n][1] == pytest.approx(want[n][1], abs=1e-9)

    def test_joint_matches_sample_moments(self):
        net = fixture_net("gpair5")
        order, mu, cov = gaussian_joint(net)
        d = sample(net, 200_000, 0).select(order)
        np.testing.assert_allclose(d.values.mean(axis=0), mu, atol=0.02)
        np.testing.assert_allclose(np.cov(d.values.T), cov, atol=0.05)

    def test_rejects_discrete_and_unknown_nodes(self):
        with pytest.raises(ValueError):
            gaussian_condition(fixture_net("dsum4"), {})
        with pytest.raises(KeyError):
            gaussian_condition(fixture_net("gchain3"), {"Q": 1.0})


class TestDataset:
    def test_rejects_mixed_kinds_and_bad_codes(self):
        with pytest.raises(ValueError):
            Dataset([binary("A"), Variable("B", "gaussian")], [[0, 1.0]])
        with pytest.raises(ValueError):
            Dataset([binary("A")], [[2]])
        with pytest.raises(ValueError):
            Dataset([Variable("X", "gaussian")], [[float("nan")]])

    def test_csv_roundtrip_discrete(self):
        d = sample(fixture_net("dsum4"), 25, 0)
        back = read_csv(io.StringIO(write_csv(d)), d.variables)
        assert np.array_equal(back.values, d.values)
        assert '"c3"' in write_csv(d) or '"c0"' in write_csv(d)

    def test_csv_roundtrip_gaussian(self):
        d = sample(fixture_net("gsum4"), 25, 0)
        back = read_csv(io.StringIO(write_csv(d)))
        assert back.kind == "gaussian"
        assert np.array_equal(back.values, d.values)

    def test_values_are_read_only(self):
        d = sample(fixture_net("gsum4"), 5, 0)
        with pytest.raises(ValueError):
            d.values[0, 0] = 1.0
