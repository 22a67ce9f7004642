import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import binary, chain_spec, poisson_spec, seeds, table_spec
from gwgames.casestudies import PoissonParams, poisson_scalar_fixed_points, poisson_to_spec
from gwgames.fixedpoint import (
    ConsistencyError, FirstMover, GameKind, build_game_map, fixed_point_bracket,
    greatest_fixed_point, least_fixed_point, solve_game, solve_outcomes, truncated_values,
)
from gwgames.model import alpha_beta, childless_spec
from gwgames.simulate import sample_tree, solve_game_on_tree

GAMES = [(k, p) for k in GameKind for p in FirstMover]


def identity(x):
    return np.asarray(x, dtype=float)


def test_chain_model_blue_component_is_one():
    fmap = build_game_map(chain_spec(), GameKind.NORMAL, FirstMover.ONE)
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert fmap(rng.random(2))[0] == 1.0
    assert least_fixed_point(fmap).value[0] == 1.0
    assert least_fixed_point(fmap).iterations <= 2


def test_all_mixed_normal_map_swaps_coordinates():
    # each vertex has one blue and one red child, so F_N(x) = (x_r, x_b)
    fmap = build_game_map(binary(pbr=1, qbr=1), GameKind.NORMAL, FirstMover.ONE)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.random(2)
        assert np.allclose(fmap(x), x[::-1], atol=1e-12)
    assert np.allclose(fmap(fmap(x)), x, atol=1e-12)


@given(seeds)
def test_misere_map_at_zero_is_alpha(seed):
    spec = table_spec(seed)
    alpha, beta = alpha_beta(spec)
    assert np.allclose(build_game_map(spec, GameKind.MISERE, FirstMover.ONE)(np.zeros(spec.m)), alpha, atol=1e-15)
    assert np.allclose(build_game_map(spec, GameKind.MISERE, FirstMover.TWO)(np.zeros(spec.m)), beta, atol=1e-15)


def test_identity_fixed_points():
    assert np.array_equal(least_fixed_point(identity, m=3).value, np.zeros(3))
    assert np.array_equal(greatest_fixed_point(identity, m=3).value, np.ones(3))


def test_monochrome_binary_tree():
    # blue begets two blues: P1 moves, then P2 (who needs a red child) is stuck
    spec = binary(pbb=1, qrr=1)
    out = solve_outcomes(spec)
    assert np.array_equal(out.nw1, [1.0, 1.0])
    assert np.array_equal(out.nl2, [1.0, 1.0])
    assert np.array_equal(out.nd1, [0.0, 0.0])
    tree = sample_tree(spec, 12, seed=3, root_color=0)
    assert solve_game_on_tree(tree, GameKind.NORMAL, FirstMover.ONE, spec).name == "W"


def test_all_mixed_greatest_fixed_point_is_one(all_mixed):
    out = solve_outcomes(all_mixed)
    assert np.array_equal(out.nl1, [0.0, 0.0])
    for name in ("nd1", "nd2", "md1", "md2", "esl", "eew"):
        assert np.allclose(getattr(out, name), 1.0, atol=1e-12), name


def test_childless_outcomes(childless):
    out = solve_outcomes(childless)
    fmap = build_game_map(childless, GameKind.NORMAL, FirstMover.ONE)
    assert np.array_equal(fmap(np.ones(2)), [0.0, 0.0])
    assert np.array_equal(greatest_fixed_point(fmap).value, [0.0, 0.0])
    for name in ("nl1", "mw1", "esw", "nl2", "mw2"):
        assert np.array_equal(getattr(out, name), [1.0, 1.0]), name


def test_poisson_large_lambda_draw_matches_scalar():
    p = PoissonParams(50.0, 0.5, 0.5)
    out = solve_outcomes(poisson_to_spec(p))
    fps = poisson_scalar_fixed_points(p)
    assert out.nd1[0] >= 0.9
    assert abs(out.nd1[0] - fps.draw) <= 1e-9


def test_monotone_maps_on_random_pairs():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        spec = table_spec(seed) if seed % 2 else poisson_spec(seed)
        x = rng.random(spec.m)
        y = x + rng.random(spec.m) * (1 - x)
        for kind, mover in GAMES:
            fmap = build_game_map(spec, kind, mover)
            fx, fy = fmap(x), fmap(y)
            assert np.all(fx <= fy + 1e-12)
            assert np.all((fx >= 0) & (fx <= 1))


def test_non_monotone_iteration_is_rejected():
    with pytest.raises(ConsistencyError):
        least_fixed_point(lambda x: 1.0 - np.asarray(x), m=1)


def test_max_iter_flags_non_convergence():
    # almost every vertex has one child of each colour: slow geometric convergence
    spec = binary(pbr=0.999, p0=0.001, qbr=0.999, q0=0.001)
    res = least_fixed_point(build_game_map(spec, GameKind.NORMAL, FirstMover.ONE), max_iter=50)
    assert not res.converged and res.iterations == 50
    out = solve_game(spec, GameKind.NORMAL, FirstMover.ONE, max_iter=50)
    assert not out.converged
    assert np.all(out.win <= solve_game(spec, GameKind.NORMAL, FirstMover.ONE).win)


def test_bad_tolerance():
    with pytest.raises(ValueError):
        least_fixed_point(identity, tol=0.0, m=1)


@given(seeds)
def test_bracket_matches_separate_iterations(seed):
    spec = table_spec(seed)
    for kind, mover in GAMES:
        fmap = build_game_map(spec, kind, mover)
        lo, hi = fixed_point_bracket(fmap)
        assert np.array_equal(lo.value, least_fixed_point(fmap).value)
        assert np.array_equal(hi.value, greatest_fixed_point(fmap).value)
        assert np.all(lo.value <= hi.value + 1e-9)


@given(seeds)
def test_outcome_rows(seed):
    spec = table_spec(seed)
    out = solve_outcomes(spec)
    for game in out:
        total = game.win + game.lose + game.draw
        assert np.allclose(total, 1.0, atol=1e-9)
        assert np.all((game.win >= 0) & (game.win <= 1) & (game.draw >= 0))
        if game.kind is GameKind.ESCAPE:
            assert np.array_equal(game.draw, np.zeros(spec.m))
    assert np.allclose(out.esl, 1 - out.esw) and np.allclose(out.eew, 1 - out.eel)


def test_truncated_depth_zero_and_one():
    spec = table_spec(7)
    alpha, beta = alpha_beta(spec)
    t0 = truncated_values(spec, 0)
    for name in ("nw1", "nl1", "mw1", "ml1", "esw", "eel"):
        assert np.array_equal(getattr(t0, name), np.zeros(spec.m))
    t1 = truncated_values(spec, 1)
    assert np.allclose(t1.nl1, alpha, atol=1e-15)
    assert np.allclose(t1.mw1, alpha, atol=1e-15)
    assert np.allclose(t1.esw, alpha, atol=1e-15)
    assert np.allclose(t1.eel, beta, atol=1e-15)
    assert np.allclose(truncated_values(spec, 2).nl1, alpha, atol=1e-15)
    with pytest.raises(ValueError):
        truncated_values(spec, -1)


@given(seeds, st.integers(0, 8))
def test_even_depth_is_map_composition(seed, n):
    spec = table_spec(seed)
    t = truncated_values(spec, 2 * n)
    pairs = {
        (GameKind.NORMAL, FirstMover.ONE): (t.nw1, t.nl1),
        (GameKind.NORMAL, FirstMover.TWO): (t.nw2, t.nl2),
        (GameKind.MISERE, FirstMover.ONE): (t.mw1, t.ml1),
        (GameKind.MISERE, FirstMover.TWO): (t.mw2, t.ml2),
    }
    for (kind, mover), (win, lose) in pairs.items():
        fmap = build_game_map(spec, kind, mover)
        lo, hi = np.zeros(spec.m), np.ones(spec.m)
        for _ in range(n):
            lo, hi = fmap(lo), fmap(hi)
        assert np.allclose(win, lo, atol=1e-12)
        assert np.allclose(lose, 1 - hi, atol=1e-12)
    lo = np.zeros(spec.m)
    hi = np.ones(spec.m)
    for _ in range(n):
        lo = build_game_map(spec, GameKind.ESCAPE, FirstMover.ONE)(lo)
        hi = build_game_map(spec, GameKind.ESCAPE, FirstMover.TWO)(hi)
    assert np.allclose(t.esw, lo, atol=1e-12)
    assert np.allclose(t.eel, 1 - hi, atol=1e-12)


@given(seeds)
def test_truncated_values_increase_to_limit(seed):
    spec = table_spec(seed) if seed % 2 else poisson_spec(seed)
    out = solve_outcomes(spec)
    prev = truncated_values(spec, 0)
    for n in range(1, 12):
        cur = truncated_values(spec, n)
        for name in ("nw1", "nw2", "nl1", "nl2", "mw1", "mw2", "ml1", "ml2", "esw", "eel"):
            assert np.all(getattr(prev, name) <= getattr(cur, name) + 1e-12), name
            assert np.all(getattr(cur, name) <= getattr(out, name) + 1e-9), name
        prev = cur
