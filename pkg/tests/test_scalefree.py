import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scipy.special import zeta

from lendgraph.graph import build_graph
from lendgraph.scalefree import (DegenerateFitError, InsufficientDataError, PowerLawError,
                                 degree_distribution, fit_power_law, node_degrees,
                                 perturb_exponent)
from lendgraph.synthgen import ba_edges, generate_ba_graph

from conftest import edges_from_pairs


def discrete_power_law(rng, alpha, xmin, n, kmax=200_000):
    """Exact inverse-CDF draws from P(k) = k^-alpha / zeta(alpha, xmin), truncated at kmax."""
    k = np.arange(xmin, kmax + 1)
    sf = zeta(alpha, k) / zeta(alpha, xmin)
    return k[np.searchsorted(-sf, -rng.random(n), side="right") - 1]


def closed_form_alpha(x, xmin, shift):
    tail = np.asarray([v for v in x if v >= xmin], dtype=float)
    return 1 + len(tail) / np.sum(np.log(tail / (xmin - shift)))


class TestFitPowerLaw:
    def test_three_points_unshifted(self):
        fit = fit_power_law([2, 4, 8], xmin=2, discrete_shift=False)
        assert fit.alpha == pytest.approx(1 + 3 / (3 * np.log(2)))
        assert fit.alpha == pytest.approx(2.4427, abs=5e-5)
        assert fit.n_tail == 3

    def test_three_points_shifted(self):
        fit = fit_power_law([2, 4, 8], xmin=2)
        assert fit.alpha == pytest.approx(closed_form_alpha([2, 4, 8], 2, 0.5))

    def test_all_equal_is_degenerate(self):
        with pytest.raises(DegenerateFitError):
            fit_power_law([3, 3, 3, 3], xmin=2)
        with pytest.raises(DegenerateFitError):
            fit_power_law([5] * 100)

    def test_short_tail(self):
        with pytest.raises(InsufficientDataError):
            fit_power_law([1, 2, 3], xmin=3)
        with pytest.raises(InsufficientDataError):
            fit_power_law([4])

    def test_non_positive_rejected(self):
        with pytest.raises(PowerLawError):
            fit_power_law([0, 1, 2, 3])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_recovers_exponent(self, seed):
        x = discrete_power_law(np.random.default_rng(seed), 3.0, 2, 100_000)
        fit = fit_power_law(x)
        assert fit.alpha == pytest.approx(3.0, abs=0.1)

    def test_fixed_small_xmin_is_biased_low(self):
        # the continuous approximation is poor this close to the lower cutoff
        x = discrete_power_law(np.random.default_rng(0), 3.0, 2, 100_000)
        assert 2.6 < fit_power_law(x, xmin=2).alpha < 2.9

    def test_scan_ignores_uniform_body(self):
        rng = np.random.default_rng(8)
        x = np.concatenate([discrete_power_law(rng, 2.5, 10, 20_000), rng.integers(1, 10, 5000)])
        fit = fit_power_law(x)
        assert fit.alpha == pytest.approx(2.5, abs=0.1)
        assert fit.xmin >= 8

    def test_scan_matches_explicit_xmin(self):
        x = discrete_power_law(np.random.default_rng(9), 2.2, 1, 5000)
        best = fit_power_law(x)
        again = fit_power_law(x, xmin=best.xmin)
        assert again.alpha == pytest.approx(best.alpha, rel=1e-12)
        assert again.ks_stat == pytest.approx(best.ks_stat, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 500), min_size=60, max_size=300), st.integers(2, 4))
    def test_duplication_keeps_xmin(self, x, copies):
        if len(set(x)) < 2:
            return
        a = fit_power_law(x, min_tail=10)
        b = fit_power_law(x * copies, min_tail=10 * copies)
        assert a.xmin == b.xmin
        assert a.alpha == pytest.approx(b.alpha, rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(2, 200), min_size=3, max_size=80), st.integers(201, 10_000))
    def test_heavier_tail_lowers_alpha(self, x, big):
        if len(set(x)) < 2:
            return
        a = fit_power_law(x, xmin=2).alpha
        b = fit_power_law(x + [big], xmin=2).alpha
        assert b < a

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 1000), min_size=2, max_size=100), st.integers(1, 5))
    def test_closed_form(self, x, xmin):
        tail = [v for v in x if v >= xmin]
        if len(tail) < 2 or len(set(tail)) < 2:
            return
        fit = fit_power_law(x, xmin=xmin)
        assert fit.alpha == pytest.approx(closed_form_alpha(x, xmin, 0.5), rel=1e-12)
        assert 0 <= fit.ks_stat <= 1


class TestDegreeDistribution:
    def test_triangle(self):
        g = build_graph(edges_from_pairs([("A", "B"), ("B", "C"), ("C", "A")]))
        assert degree_distribution(g, "total") == {2: 3}
        assert degree_distribution(g, "out") == {1: 3}

    def test_star(self):
        g = build_graph(edges_from_pairs([("c", f"l{i}") for i in range(4)]))
        assert degree_distribution(g) == {1: 4, 4: 1}
        assert degree_distribution(g, "in") == {0: 1, 1: 4}

    def test_bad_mode(self):
        g = build_graph(edges_from_pairs([("A", "B")]))
        with pytest.raises(ValueError):
            node_degrees(g, "both")

    def test_sums_to_node_count(self, rng):
        g = build_graph(generate_ba_graph(500, 2, seed=1))
        hist = degree_distribution(g)
        assert sum(hist.values()) == g.n_nodes
        assert sum(k * v for k, v in hist.items()) == 2 * g.n_edges


class TestBarabasiAlbert:
    def test_edge_count_and_simple(self):
        src, dst = ba_edges(1000, 3, np.random.default_rng(0))
        assert len(src) == 6 + (1000 - 4) * 3
        pairs = set(zip(src.tolist(), dst.tolist()))
        assert len(pairs) == len(src)
        assert np.all(src != dst) and np.all(src > dst)

    def test_clique_only(self):
        src, dst = ba_edges(4, 3, np.random.default_rng(0))
        assert sorted(zip(src.tolist(), dst.tolist())) == \
            [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]

    def test_hub_emerges(self):
        src, dst = ba_edges(10_000, 2, np.random.default_rng(11))
        deg = np.bincount(np.concatenate([src, dst]))
        assert deg.max() >= 50

    def test_exponent_near_three(self):
        g = build_graph(generate_ba_graph(20_000, 3, seed=2))
        fit = fit_power_law(node_degrees(g))
        assert 2.5 < fit.alpha < 3.5


@pytest.fixture(scope="module")
def ba():
    return build_graph(generate_ba_graph(5000, 3, seed=4))


class TestPerturbation:
    def test_deterministic(self, ba):
        a = perturb_exponent(ba, 0.1, 10, seed=3, xmin=3)
        b = perturb_exponent(ba, 0.1, 10, seed=3, xmin=3)
        assert a == b
        assert a != perturb_exponent(ba, 0.1, 10, seed=4, xmin=3)

    def test_prefix_stable_in_trials(self, ba):
        assert perturb_exponent(ba, 0.1, 5, seed=3, xmin=3) == \
            perturb_exponent(ba, 0.1, 8, seed=3, xmin=3)[:5]

    def test_centered_on_full_fit(self, ba):
        full = fit_power_law(node_degrees(ba), xmin=3).alpha
        alphas = perturb_exponent(ba, 0.1, 20, seed=0, xmin=3)
        assert abs(np.median(alphas) - full) < 0.1

    def test_small_graph_spreads_more(self):
        small = build_graph(generate_ba_graph(1000, 3, seed=5))
        large = build_graph(generate_ba_graph(50_000, 3, seed=5))

        def iqr(g):
            a = np.array(perturb_exponent(g, 0.1, 30, seed=1, xmin=3))
            return np.subtract(*np.percentile(a, [75, 25]))
        assert iqr(small) > iqr(large)

    def test_bad_fraction(self, ba):
        with pytest.raises(ValueError):
            perturb_exponent(ba, 0.0, 3, seed=0)
        with pytest.raises(ValueError):
            perturb_exponent(ba, 1.0, 3, seed=0)

    def test_degenerate_trials_become_none(self):
        g = build_graph(edges_from_pairs([("A", "B"), ("C", "D"), ("E", "F"), ("G", "H")]))
        assert perturb_exponent(g, 0.25, 3, seed=0, xmin=1) == [None, None, None]
