import itertools

import numpy as np
import pytest
from hypothesis import given

import gwgames.simulate as sim
from conftest import binary, seeds, table_spec
from gwgames.casestudies import PoissonParams, poisson_to_spec
from gwgames.fixedpoint import FirstMover, GameKind, truncated_values
from gwgames.model import ModelSpec, TableLaw, childless_spec, monochrome_sets
from gwgames.simulate import (
    GameLabel, PopulationError, dump_tree, enumerate_label_distribution, label_forest,
    monte_carlo, monte_carlo_counts, root_ids, sample_tree, solve_game_on_tree, strategy_trace,
    tree_from_parents,
)

GAMES = [(k, p) for k in GameKind for p in FirstMover]
BLUE_ONLY = [{0}, {1}]


def leaf_child_tree():
    # blue root with a single blue child that is a genuine leaf
    return tree_from_parents([0, 0], [-1, 0], truncation_depth=2)


def test_blue_root_with_leaf_child():
    tree = leaf_child_tree()
    assert solve_game_on_tree(tree, GameKind.NORMAL, FirstMover.ONE, BLUE_ONLY) is GameLabel.W
    assert solve_game_on_tree(tree, GameKind.MISERE, FirstMover.ONE, BLUE_ONLY) is GameLabel.L
    assert strategy_trace(tree, GameKind.NORMAL, FirstMover.ONE, BLUE_ONLY) == [0, 1]


def test_single_vertex():
    tree = tree_from_parents([0], [-1], truncation_depth=1)
    assert solve_game_on_tree(tree, GameKind.ESCAPE, FirstMover.ONE, BLUE_ONLY) is GameLabel.W
    assert solve_game_on_tree(tree, GameKind.ESCAPE, FirstMover.TWO, BLUE_ONLY) is GameLabel.L
    assert solve_game_on_tree(tree, GameKind.NORMAL, FirstMover.ONE, BLUE_ONLY) is GameLabel.L
    assert solve_game_on_tree(tree, GameKind.MISERE, FirstMover.TWO, BLUE_ONLY) is GameLabel.W
    # at truncation depth 0 the root is unresolved
    cut = tree_from_parents([0], [-1], truncation_depth=0)
    assert solve_game_on_tree(cut, GameKind.NORMAL, FirstMover.ONE, BLUE_ONLY) is GameLabel.D


def test_tree_from_parents_rejects_bad_order():
    with pytest.raises(ValueError):
        tree_from_parents([0, 0, 0], [-1, 2, 0], truncation_depth=3)
    with pytest.raises(ValueError):
        tree_from_parents([0, 0, 0, 0], [-1, 0, 1, 0], truncation_depth=3)


def test_childless_tree_is_single_vertex():
    for depth in (0, 3, 10):
        tree = sample_tree(childless_spec(2), depth, seed=depth)
        assert tree.size == 1
        tree.validate()


def test_all_mixed_tree_is_complete():
    tree = sample_tree(binary(pbr=1, qbr=1), 3, seed=12345)
    tree.validate()
    assert tree.size == 15
    for v in range(tree.size):
        if tree.depth[v] < 3:
            assert sorted(tree.color[list(tree.children(v))]) == [0, 1]


def test_poisson_mean_population():
    spec = poisson_to_spec(PoissonParams(2.0, 0.5, 0.5))
    sizes = []
    for chunk in range(20):
        ids = root_ids(2024, 500, first=500 * chunk)
        forest = sim._sample_forest(spec, np.zeros(500, dtype=np.int64), ids, 10)
        root_of = np.arange(forest.size)
        root_of[500:] = -1
        for d in range(1, 11):
            idx = np.flatnonzero(forest.depth == d)
            root_of[idx] = root_of[forest.parent[idx]]
        sizes.append(np.bincount(root_of, minlength=500))
    sizes = np.concatenate(sizes)
    assert len(sizes) == 10**4
    se = sizes.std(ddof=1) / np.sqrt(len(sizes))
    assert abs(sizes.mean() - 2047) <= 3 * se
    assert sim.expected_population(spec, 10, 0) == pytest.approx(2047)


@given(seeds)
def test_sampling_is_deterministic(seed):
    spec = table_spec(seed)
    a = sample_tree(spec, 4, seed)
    assert a == sample_tree(spec, 4, seed)
    a.validate()
    labels = [label_forest(a, k, spec.mask) for k in GameKind]
    again = [label_forest(sample_tree(spec, 4, seed), k, spec.mask) for k in GameKind]
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(labels, again))


def test_subtree_depends_only_on_vertex():
    # the first tree of a forest is the same whatever else is in the forest
    spec = poisson_to_spec(PoissonParams(1.5, 0.3, 0.6))
    ids = root_ids(99, 50)
    big = sim._sample_forest(spec, np.zeros(50, dtype=np.int64), ids, 5)
    small = sim._sample_forest(spec, np.zeros(1, dtype=np.int64), ids[:1], 5)
    first = np.flatnonzero(np.isin(np.arange(big.size), _descendants(big, 0)))
    assert np.array_equal(big.color[first], small.color)


def _descendants(tree, root):
    out, frontier = [root], [root]
    while frontier:
        frontier = [c for v in frontier for c in tree.children(v)]
        out += frontier
    return sorted(out)


def test_population_guard():
    spec = poisson_to_spec(PoissonParams(10.0, 0.5, 0.5))
    with pytest.raises(PopulationError):
        sample_tree(spec, 12, seed=0)
    with pytest.raises(PopulationError):
        monte_carlo(poisson_to_spec(PoissonParams(3.0, 0.5, 0.5)), GameKind.MISERE,
                    FirstMover.ONE, 0, 12, 1000, 0, max_population=1000)
    with pytest.raises(ValueError):
        sample_tree(spec, -1, seed=0)


def test_dump_tree_format():
    text = dump_tree(leaf_child_tree())
    assert text == "0 -1 0 1\n1 0 1 1\n"


def _all_trees(spec: ModelSpec, root: int, depth: int):
    """Every depth-truncated tree with its probability, as (prob, colors, parents)."""
    def grow(prob, colors, parents, level, d):
        if d == depth or not level:
            yield prob, colors, parents
            return
        laws = [spec.offspring[colors[v]] for v in level]
        for rows in itertools.product(*(range(len(law.probs)) for law in laws)):
            p = prob
            cols, pars, nxt = list(colors), list(parents), []
            for v, law, r in zip(level, laws, rows):
                p *= law.probs[r]
                for c, k in enumerate(law.counts[r]):
                    for _ in range(int(k)):
                        nxt.append(len(cols))
                        cols.append(c)
                        pars.append(v)
            yield from grow(p, cols, pars, nxt, d + 1)

    yield from grow(1.0, [root], [-1], [0], 0)


def test_literal_tree_enumeration_matches_recursions():
    depth = 3
    for seed in range(8):
        spec = table_spec(seed, support=2, max_count=1)
        t = truncated_values(spec, depth)
        for root in range(spec.m):
            acc = {g: np.zeros(3) for g in GAMES}
            for prob, colors, parents in _all_trees(spec, root, depth):
                tree = tree_from_parents(colors, parents, depth)
                for kind, mover in GAMES:
                    lab = solve_game_on_tree(tree, kind, mover, spec)
                    acc[kind, mover][lab.value] += prob
            for (kind, mover), dist in acc.items():
                win, lose = t.win_lose(kind, mover)
                assert dist[sim.W] == pytest.approx(win[root], abs=1e-12)
                if kind is not GameKind.ESCAPE or mover is FirstMover.TWO:
                    assert dist[sim.L] == pytest.approx(lose[root], abs=1e-12)


def test_label_enumeration_matches_recursions():
    for seed in range(20):
        spec = table_spec(seed)
        t = truncated_values(spec, 5)
        for kind in GameKind:
            dist = enumerate_label_distribution(spec, 5, kind)
            for mover, pos in ((FirstMover.ONE, 0), (FirstMover.TWO, 1)):
                win, lose = t.win_lose(kind, mover)
                for j in range(spec.m):
                    pw = sum(p for key, p in dist[j].items() if key[pos] == sim.W)
                    pl = sum(p for key, p in dist[j].items() if key[pos] == sim.L)
                    assert abs(pw - win[j]) <= 1e-12
                    if kind is not GameKind.ESCAPE or mover is FirstMover.TWO:
                        assert abs(pl - lose[j]) <= 1e-12


def test_pruned_growth_matches_full_forest():
    for seed in range(6):
        spec = table_spec(seed, max_count=3)
        ids = root_ids(seed, 200)
        roots = np.zeros(200, dtype=np.int64)
        full = sim._sample_forest(spec, roots, ids, 6)
        pruned = sim._grow_pruned(spec, roots, ids, 6, tuple(GameKind), tuple(FirstMover), 1e7)
        pruned.validate()
        assert pruned.size <= full.size
        for kind in GameKind:
            a = label_forest(full, kind, spec.mask)
            b = label_forest(pruned, kind, spec.mask)
            assert np.array_equal(a[0][:200], b[0][:200]) and np.array_equal(a[1][:200], b[1][:200])


def test_monte_carlo_totals_ignore_chunking(monkeypatch):
    spec = table_spec(3)
    base = monte_carlo_counts(spec, 0, 6, 500, seed=7)
    monkeypatch.setattr(sim, "CHUNK_TREES", 37)
    chunked = monte_carlo_counts(spec, 0, 6, 500, seed=7)
    monkeypatch.setenv("GWGAMES_THREADS", "3")
    threaded = monte_carlo_counts(spec, 0, 6, 500, seed=7)
    for key in base:
        assert np.array_equal(base[key], chunked[key])
        assert np.array_equal(base[key], threaded[key])


def test_monte_carlo_childless():
    est = monte_carlo(childless_spec(2), GameKind.NORMAL, FirstMover.ONE, 0, 5, 100, seed=1)
    assert est.lose == 1.0 and est.win == 0.0 and est.lose_stderr == 0.0


def test_monte_carlo_all_mixed_never_resolves():
    est = monte_carlo(binary(pbr=1, qbr=1), GameKind.NORMAL, FirstMover.ONE, 0, 20, 1000, seed=2)
    assert est.draw == 1.0


def test_monte_carlo_poisson_depth_30():
    spec = poisson_to_spec(PoissonParams(3.0, 0.6, 0.4))
    est = monte_carlo(spec, GameKind.NORMAL, FirstMover.ONE, 0, 30, 10**5, seed=3)
    exact = truncated_values(spec, 30).nw1[0]
    assert abs(est.win - exact) <= 3 * est.win_stderr


def test_monte_carlo_escape_bracket():
    spec = table_spec(4)
    est = monte_carlo(spec, GameKind.ESCAPE, FirstMover.ONE, 0, 4, 2000, seed=5)
    lo, hi = est.bracket
    assert lo == est.win and hi == pytest.approx(1 - est.lose)


def test_monte_carlo_coverage():
    # 3-sigma intervals from independent runs cover the truncated value
    spec = ModelSpec(
        np.array([0.5, 0.5]),
        (TableLaw(np.array([[0, 0], [1, 1], [2, 0]]), np.array([0.3, 0.4, 0.3])),
         TableLaw(np.array([[0, 0], [1, 1], [0, 2]]), np.array([0.35, 0.4, 0.25]))),
        monochrome_sets(2),
    )
    exact = truncated_values(spec, 8).nw1[0]
    covered = 0
    for rep in range(100):
        est = monte_carlo(spec, GameKind.NORMAL, FirstMover.ONE, 0, 8, 2000, seed=rep)
        covered += abs(est.win - exact) <= 3 * est.win_stderr
    assert covered >= 95


def test_monte_carlo_rejects_bad_input():
    spec = table_spec(1)
    with pytest.raises(ValueError):
        monte_carlo(spec, GameKind.NORMAL, FirstMover.ONE, 0, 3, 0, seed=0)
    with pytest.raises(ValueError):
        monte_carlo(spec, GameKind.NORMAL, FirstMover.ONE, spec.m, 3, 10, seed=0)
