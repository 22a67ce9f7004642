import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gwgames.casestudies import (
    BLUE, CHANNELS, RED, BinaryParams, PoissonParams, binary_to_spec, binary_verdict,
    channel_conditions, poisson_conditions, poisson_maps, poisson_report,
    poisson_scalar_fixed_points, poisson_to_spec,
)
from gwgames.fixedpoint import ConsistencyError, FirstMover, solve_outcomes, truncated_values
from gwgames.model import SpecError, pgf_eval

lams = st.floats(0.05, 30.0)
probs = st.floats(0.0, 1.0)


def random_binary(rng) -> BinaryParams:
    p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    p[3], q[3] = 1 - p[:3].sum(), 1 - q[:3].sum()
    return BinaryParams(*p, *q)


def test_binary_spec_point_masses():
    spec = binary_to_spec(BinaryParams(pbr=1, q0=1))
    for law, row in ((spec.offspring[BLUE], [1, 1]), (spec.offspring[RED], [0, 0])):
        assert law.counts[law.probs > 0].tolist() == [row]
    assert spec.permissible == (frozenset({BLUE}), frozenset({RED}))


def test_binary_pgfs_match_polynomials():
    p = BinaryParams(p0=0.1, pbb=0.3, prr=0.2, pbr=0.4, q0=0.2, qbb=0.1, qrr=0.3, qbr=0.4)
    blue, red = binary_to_spec(p).offspring
    assert pgf_eval(blue, [BLUE], [0.5]) == pytest.approx(0.575, abs=1e-15)
    for x in np.linspace(0, 1, 11):
        assert pgf_eval(blue, [BLUE], [x]) == pytest.approx(p.p0 + p.prr + p.pbr * x + p.pbb * x**2)
        assert pgf_eval(blue, [RED], [x]) == pytest.approx(p.p0 + p.pbb + p.pbr * x + p.prr * x**2)
        assert pgf_eval(red, [RED], [x]) == pytest.approx(p.q0 + p.qbb + p.qbr * x + p.qrr * x**2)
        assert pgf_eval(red, [BLUE], [x]) == pytest.approx(p.q0 + p.qrr + p.qbr * x + p.qbb * x**2)


def test_binary_params_validation():
    with pytest.raises(SpecError):
        BinaryParams(p0=0.5, q0=1)
    with pytest.raises(SpecError):
        BinaryParams(p0=1.5, pbb=-0.5, q0=1)


def test_binary_verdicts():
    assert binary_verdict(BinaryParams(pbr=1, qbr=1)).value == 1
    v = binary_verdict(BinaryParams(pbr=1, qbr=0.5, q0=0.5))
    assert v.value == 0 and v.max_deviation <= 1e-6
    assert binary_verdict(BinaryParams(p0=1, q0=1)).value == 0


def test_binary_verdict_random_sweep():
    rng = np.random.default_rng(0)
    for i in range(50):
        p = random_binary(rng)
        if i % 10 == 0:
            p = BinaryParams(pbr=1, q0=p.q0, qbb=p.qbb, qrr=p.qrr, qbr=p.qbr)
        v = binary_verdict(p)
        assert v.value == 0 and v.max_deviation <= 1e-6


def test_poisson_maps_values():
    f1, f2 = poisson_maps(PoissonParams(2.0, 0.5, 0.5))
    assert f1(0.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert f2(0.0) < f2(1.0)


@given(lams, st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_poisson_maps_range(lam, pb, qb):
    f1, f2 = poisson_maps(PoissonParams(lam, pb, qb))
    assert f1(1.0) < 1
    assert f1(f2(0.0)) > 0
    xs = np.linspace(0, 1, 50)
    assert np.all(np.diff(f1(f2(xs))) >= 0)


def test_scalar_fixed_points_small_and_large_lambda():
    small = poisson_scalar_fixed_points(PoissonParams(2.0, 0.5, 0.5))
    assert len(small.roots) == 1 and small.draw == 0.0
    p = PoissonParams(50.0, 0.5, 0.5)
    large = poisson_scalar_fixed_points(p)
    assert len(large.roots) == 3 and large.draw >= 0.9
    assert abs(large.draw - solve_outcomes(poisson_to_spec(p)).nd1[BLUE]) <= 1e-9
    with pytest.raises(ValueError):
        poisson_scalar_fixed_points(p, grid=10)


@given(lams, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_scalar_roots(lam, pb, qb):
    p = PoissonParams(lam, pb, qb)
    fps = poisson_scalar_fixed_points(p, grid=1000)
    f1, f2 = poisson_maps(p)
    assert f1(f2(0.0)) > 0 and f1(f2(1.0)) < 1
    assert len(fps.roots) % 2 == 1
    for r in fps.roots:
        assert abs(f1(f2(r)) - r) < 1e-10
    assert abs(fps.min_fp - fps.roots[0]) <= 1e-9
    assert abs(fps.max_fp - fps.roots[-1]) <= 1e-9


def test_scalar_and_vector_draws_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = PoissonParams(rng.uniform(0.1, 30), rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98))
        scalar = poisson_scalar_fixed_points(p).draw
        vector = solve_outcomes(poisson_to_spec(p)).nd1[BLUE]
        assert abs(scalar - vector) <= 1e-8, p


def test_draw_grows_with_lambda():
    draws = [solve_outcomes(poisson_to_spec(PoissonParams(lam, 0.5, 0.5))).nd1[BLUE]
             for lam in (5, 10, 20, 40, 80)]
    assert all(b >= a for a, b in zip(draws, draws[1:]))
    assert draws[-1] > 0.9


def test_channels_reduce_each_draw():
    p = PoissonParams(12.0, 0.35, 0.6)
    out = solve_outcomes(poisson_to_spec(p))
    for ch, (mover, color, _) in CHANNELS.items():
        nd = out.nd1 if mover is FirstMover.ONE else out.nd2
        assert abs(poisson_scalar_fixed_points(p, channel=ch).draw - nd[color]) <= 1e-8


def test_conditions_small_and_large_lambda():
    assert poisson_conditions(PoissonParams(2.0, 0.5, 0.5)).cond13
    assert not poisson_conditions(PoissonParams(50.0, 0.5, 0.5)).cond13


@given(lams, probs, probs)
def test_condition_symmetry(lam, pb, qb):
    p = PoissonParams(lam, pb, qb)
    assert channel_conditions(p, "1r") == channel_conditions(p.swapped(), "1b")
    assert channel_conditions(p, "2r") == channel_conditions(p.swapped(), "2b")


def test_small_lambda_has_no_draws():
    rng = np.random.default_rng(2)
    for _ in range(30):
        p = PoissonParams(rng.uniform(0.05, 2.0), rng.random(), rng.random())
        c = poisson_conditions(p)
        assert c.cond13 and not c.violations


def test_normal_condition_implies_no_normal_draw():
    rng = np.random.default_rng(3)
    fired = 0
    for _ in range(200):
        p = PoissonParams(rng.uniform(0.5, 40), rng.random(), rng.random())
        c = poisson_conditions(p, check=False)
        out = solve_outcomes(poisson_to_spec(p))
        for ch, (mover, color, _) in CHANNELS.items():
            if c.by_channel[ch]["normal"]:
                fired += 1
                nd = out.nd1 if mover is FirstMover.ONE else out.nd2
                assert nd[color] <= 1e-6
        if c.cond13:
            assert max(out.nd1.max(), out.nd2.max()) <= 1e-6
    assert fired > 0


def test_misere_condition_counterexample():
    # the misère condition holds here, yet every misère game is drawn
    p = PoissonParams(42.389, 0.96793, 0.014706)
    c = poisson_conditions(p, on_violation="record")
    assert c.cond15 and c.violations
    out = solve_outcomes(poisson_to_spec(p))
    assert out.md1[BLUE] == pytest.approx(1.0, abs=1e-9)
    t = truncated_values(poisson_to_spec(p), 400)
    assert t.mw1[BLUE] + t.ml1[BLUE] < 1e-6
    with pytest.raises(ConsistencyError):
        poisson_conditions(p)


def test_uniqueness_bound_leaves_misere_draws():
    p = PoissonParams(10.55, 0.2698, 0.041)
    c = poisson_conditions(p, on_violation="record")
    out = solve_outcomes(poisson_to_spec(p))
    assert c.cond13 and out.md1[BLUE] > 0.8
    assert max(out.nd1.max(), out.nd2.max()) <= 1e-6
    assert any("misere" in v for v in c.violations)


def test_report_rows():
    rep = poisson_report(PoissonParams(2.0, 0.5, 0.5))
    rows = dict(rep.rows())
    assert rows["cond13"] is True
    assert rows["nd1_b"] <= 1e-9 and rep.nd_1b_scalar <= 1e-9
    assert rep.conditions.derived["1b"] is False and rep.conditions.derived["2r"] is True


def test_poisson_params_validation():
    with pytest.raises(SpecError):
        PoissonParams(0.0, 0.5, 0.5)
    with pytest.raises(SpecError):
        PoissonParams(1.0, 1.5, 0.5)
    with pytest.raises(SpecError):
        PoissonParams(2e4, 0.5, 0.5)
