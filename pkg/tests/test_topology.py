"""Graphs, selections, mixing matrices, window connectivity, constants."""

import itertools
import math

import mpmath
import numpy as np
import pytest

from sdfl.topology import (RoundSelection, TopologyGraph, check_window_connectivity,
                           complete_graph, generate_random_graph, load_edge_list,
                           mixing_matrix, participation_sizes, save_edge_list,
                           select_neighbors, select_responders, theory_constants,
                           window_connectivity_probability)

mpmath.mp.dps = 60


def _bfs_connected(adj):
    m = adj.shape[0]
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    return len(seen) == m


def test_two_node_graph():
    g = generate_random_graph(2, 1.0, np.random.default_rng(0))
    assert g.neighborhood(0).tolist() == [0, 1]
    assert g.neighborhood(1).tolist() == [0, 1]


def test_full_probability_gives_complete_graph():
    g = generate_random_graph(5, 1.0, np.random.default_rng(1))
    assert np.array_equal(g.adj, complete_graph(5).adj)


def test_random_graph_connected_and_symmetric():
    g = generate_random_graph(32, 0.3, np.random.default_rng(2))
    assert np.array_equal(g.adj, g.adj.T)
    assert _bfs_connected(g.adj)
    assert (g.closed_sizes() >= 2).all()


def test_generation_rejects_bad_args():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        generate_random_graph(1, 0.5, rng)
    with pytest.raises(ValueError):
        generate_random_graph(4, 0.0, rng)


def test_selection_full_rate_takes_everyone():
    g = generate_random_graph(6, 0.8, np.random.default_rng(3))
    sel = select_neighbors(g, 1.0, np.random.default_rng(0))
    for i in range(6):
        np.testing.assert_array_equal(sel.selected[i], g.neighborhood(i))


def test_selection_minimum_is_self():
    # |N_i| = 5 at r = 0.2 rounds to t_i = 1: the node keeps only itself
    g = complete_graph(5)
    sel = select_neighbors(g, 0.2, np.random.default_rng(4))
    for i in range(5):
        assert sel.selected[i].tolist() == [i]
        assert sel.t()[i] == 1


def test_selection_uniformity_chi_square():
    g = complete_graph(10)  # |N_i| = 10, r = 0.5 -> t_i = 5, 4 random picks
    rng = np.random.default_rng(5)
    counts = np.zeros(10)
    draws = 10 ** 4
    for _ in range(draws):
        sel = select_neighbors(g, 0.5, rng)
        for j in sel.selected[0]:
            if j != 0:
                counts[j] += 1
    expected = draws * 4 / 9
    chi2 = float(np.sum((counts[1:] - expected) ** 2 / expected))
    # 8 dof, 99.9% quantile ~ 26.1
    assert chi2 < 26.1


def test_responders_tie_break_and_infinite_latency():
    g = complete_graph(4)
    equal = np.zeros((4, 4))
    sel = select_responders(g, equal, np.array([3, 3, 3, 3]))
    assert sel.selected[3].tolist() == [0, 1, 3]  # lowest indices win ties
    lat = np.zeros((4, 4))
    lat[0, 1] = np.inf
    sel = select_responders(g, lat, np.array([3, 3, 3, 3]))
    assert 1 not in sel.selected[0]


def test_responders_matches_sorting_oracle():
    g = generate_random_graph(12, 0.6, np.random.default_rng(6))
    rng = np.random.default_rng(7)
    lat = rng.exponential(1.0, size=(12, 12))
    t = participation_sizes(g, 0.5)
    sel = select_responders(g, lat, t)
    for i in range(12):
        others = [j for j in g.neighborhood(i) if j != i]
        ranked = sorted(others, key=lambda j: (lat[i, j], j))
        expect = sorted(ranked[:t[i] - 1] + [i])
        assert sel.selected[i].tolist() == expect


def test_mixing_matrix_shapes_and_sums():
    sel = RoundSelection(selected=(np.array([0, 1]), np.array([0, 1])))
    np.testing.assert_allclose(mixing_matrix(sel), 0.5 * np.ones((2, 2)))
    sel = RoundSelection(selected=(np.array([0]), np.array([1]), np.array([2])))
    np.testing.assert_array_equal(mixing_matrix(sel), np.eye(3))
    sel = RoundSelection(selected=(np.array([0, 2]), np.array([0, 1, 2]),
                                   np.array([2])))
    A = mixing_matrix(sel)
    np.testing.assert_allclose(A.sum(axis=0), np.ones(3), atol=1e-12)


def test_expected_mixing_doubly_stochastic_on_regular_graphs():
    # exhaustive average over all fixed-size selections; cycle graph m = 4
    adj = np.zeros((4, 4), dtype=bool)
    for i in range(4):
        adj[i, (i + 1) % 4] = adj[(i + 1) % 4, i] = True
    g = TopologyGraph(m=4, adj=adj)
    t = 2
    per_node_choices = []
    for i in range(4):
        others = [j for j in g.neighborhood(i) if j != i]
        per_node_choices.append([
            np.sort(np.array(list(c) + [i]))
            for c in itertools.combinations(others, t - 1)])
    acc = np.zeros((4, 4))
    count = 0
    for combo in itertools.product(*per_node_choices):
        acc += mixing_matrix(RoundSelection(selected=combo))
        count += 1
    avg = acc / count
    np.testing.assert_allclose(avg.sum(axis=0), np.ones(4), atol=1e-12)
    np.testing.assert_allclose(avg.sum(axis=1), np.ones(4), atol=1e-12)


def test_window_connectivity():
    g = complete_graph(4)
    full = select_neighbors(g, 1.0, np.random.default_rng(8))
    assert check_window_connectivity([full])
    lonely = RoundSelection(selected=tuple(np.array([i]) for i in range(4)))
    assert not check_window_connectivity([lonely, lonely])


def test_window_connectivity_monte_carlo():
    # random half-participation over B = 20 rounds is almost surely connected
    g = generate_random_graph(8, 0.6, np.random.default_rng(9))
    hits = 0
    rng = np.random.default_rng(10)
    for _ in range(100):
        window = [select_neighbors(g, 0.5, rng) for _ in range(20)]
        hits += check_window_connectivity(window)
    assert hits >= 99


def test_theory_constants_small_case():
    tc = theory_constants(2, 1, 1.0)
    assert tc.tau == pytest.approx(0.75, rel=1e-12)
    assert tc.c0 == pytest.approx((160.0 / 0.25) ** 2, rel=1e-10)
    assert 0.0 < tc.tau < 1.0


def test_theory_constants_against_mpmath():
    for m, B, ell in [(2, 1, 1.0), (2, 2, 3.0), (3, 2, 0.5), (4, 1, 2.0)]:
        tc = theory_constants(m, B, ell)
        tau = (1 - mpmath.mpf(m) ** (-m * B)) ** (mpmath.mpf(1) / B)
        c0 = (80 * m * mpmath.sqrt(ell) / (1 - tau)) ** 2
        assert tc.tau == pytest.approx(float(tau), rel=1e-12)
        assert tc.log10_one_minus_tau == pytest.approx(
            float(mpmath.log10(1 - tau)), rel=1e-10)
        assert tc.log10_c0 == pytest.approx(float(mpmath.log10(c0)), rel=1e-10)


def test_theory_constants_log_space_no_overflow():
    tc = theory_constants(32, 20, 1.0)
    assert math.isfinite(tc.log10_one_minus_tau)
    # 1 - tau ~ m^(-mB)/B: log10 = -(mB log10 m) - log10 B
    expect = -(32 * 20 * math.log10(32)) - math.log10(20)
    assert tc.log10_one_minus_tau == pytest.approx(expect, rel=1e-9)
    assert tc.c0 == math.inf and math.isfinite(tc.log10_c0)


def test_window_probability_formula():
    # every pair meets within B rounds w.h.p. once t_i is large
    p = window_connectivity_probability(32, 20, np.full(32, 17))
    assert p > 0.999
    assert window_connectivity_probability(8, 5, np.full(8, 1)) == 0.0


def test_edge_list_roundtrip(tmp_path):
    g = generate_random_graph(9, 0.4, np.random.default_rng(11))
    path = tmp_path / "graph.txt"
    save_edge_list(g, path)
    back = load_edge_list(path, 9)
    assert np.array_equal(back.adj, g.adj)
    first = path.read_text().splitlines()[0].split()
    assert len(first) == 2 and all(tok.isdigit() for tok in first)
