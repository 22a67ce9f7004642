"""The two bi-type worked examples: binary trees and Poisson trees.

Colours are blue (index 0) and red (index 1); a P1 / Stopper move from blue
goes to a blue child and from red to a red child, the P2 / Escaper move goes to
the other colour.

For Poisson trees the normal-game recursions collapse to one scalar map per
(first mover, root colour) channel. Each channel is ``f1 o f2`` with

    f1(x) = exp(-lam * a * exp(-lam * b * x))
    f2(x) = exp(-lam * c * exp(-lam * d * x))

and ``(a, b, c, d)`` a rotation of ``(p_b, p_r, q_r, q_b)``; see ``CHANNELS``.
Its least fixed point is the loss probability of the first mover and its
greatest fixed point is one minus the win probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .fixedpoint import ConsistencyError, FirstMover, OutcomeTable, least_fixed_point, \
    greatest_fixed_point, solve_outcomes
from .model import ModelSpec, PoissonLaw, SpecError, TableLaw

BLUE, RED = 0, 1
VERDICT_TOL = 1e-6
DRAW_ZERO_TOL = 1e-6
LAMBDA_MAX = 1e4
ROOT_TOL = 1e-12


# -- binary trees ------------------------------------------------------------

@dataclass(frozen=True)
class BinaryParams:
    """Blue vertices: no child (p0), two blue (pbb), two red (prr), one of each (pbr); red uses q."""

    p0: float = 0.0
    pbb: float = 0.0
    prr: float = 0.0
    pbr: float = 0.0
    q0: float = 0.0
    qbb: float = 0.0
    qrr: float = 0.0
    qbr: float = 0.0

    def __post_init__(self):
        for name in ("p", "q"):
            vals = [getattr(self, name + s) for s in ("0", "bb", "rr", "br")]
            if any(v < 0 or v > 1 for v in vals):
                raise SpecError(f"{name} probabilities must lie in [0, 1]")
            if abs(sum(vals) - 1.0) > 1e-12:
                raise SpecError(f"{name} probabilities sum to {sum(vals)!r}, not 1")

    @property
    def all_mixed(self) -> bool:
        return abs(self.pbr - 1.0) <= 1e-12 and abs(self.qbr - 1.0) <= 1e-12


_BINARY_ROWS = np.array([[0, 0], [2, 0], [0, 2], [1, 1]])


def binary_to_spec(params: BinaryParams, root_law=(0.5, 0.5)) -> ModelSpec:
    """Two-colour table spec with S_b = {b} and S_r = {r}."""
    blue = TableLaw(_BINARY_ROWS, np.array([params.p0, params.pbb, params.prr, params.pbr]))
    red = TableLaw(_BINARY_ROWS, np.array([params.q0, params.qbb, params.qrr, params.qbr]))
    return ModelSpec(np.asarray(root_law, float), (blue, red),
                     (frozenset({BLUE}), frozenset({RED})))


@dataclass(frozen=True)
class BinaryVerdict:
    """Closed-form draw verdict and its numerical cross-check.

    ``value`` is 1 when every draw-type quantity (nd, md for both movers and
    esl) equals one, else 0. ``observed`` holds the solved quantities keyed by
    name and colour.
    """

    params: BinaryParams
    value: int
    observed: dict
    max_deviation: float

    def rows(self):
        for (name, color), v in sorted(self.observed.items()):
            yield name, "br"[color], self.value, v


def binary_verdict(params: BinaryParams, tol: float = 1e-12) -> BinaryVerdict:
    """Draws are certain iff every vertex has exactly one child of each colour, else impossible."""
    value = 1 if params.all_mixed else 0
    out = solve_outcomes(binary_to_spec(params), tol=tol)
    observed = {}
    for name in ("nd1", "nd2", "md1", "md2", "esl"):
        vec = getattr(out, name)
        for c in (BLUE, RED):
            observed[name, c] = float(vec[c])
    dev = max(abs(v - value) for v in observed.values())
    if dev > VERDICT_TOL:
        raise ConsistencyError(f"binary verdict {value} disagrees with solver by {dev:.3g}")
    return BinaryVerdict(params, value, observed, dev)


# -- Poisson trees -----------------------------------------------------------

@dataclass(frozen=True)
class PoissonParams:
    """Every vertex has Poisson(lam) children; a blue child has probability p_b (blue parent) or q_b (red parent)."""

    lam: float
    p_b: float
    q_b: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise SpecError("lambda must be positive")
        if self.lam > LAMBDA_MAX:
            raise SpecError(f"lambda above {LAMBDA_MAX:g} is not supported")
        if not (0 <= self.p_b <= 1 and 0 <= self.q_b <= 1):
            raise SpecError("p_b and q_b must lie in [0, 1]")

    @property
    def p_r(self) -> float:
        return 1.0 - self.p_b

    @property
    def q_r(self) -> float:
        return 1.0 - self.q_b

    def swapped(self) -> "PoissonParams":
        """Relabel blue <-> red (the new blue parent has the old red parent's law)."""
        return PoissonParams(self.lam, self.q_r, self.p_r)


def poisson_to_spec(params: PoissonParams, root_law=(0.5, 0.5)) -> ModelSpec:
    """Thinning splits Poisson(lam) into independent blue and red Poisson counts."""
    lam = params.lam
    blue = PoissonLaw(np.array([lam * params.p_b, lam * params.p_r]))
    red = PoissonLaw(np.array([lam * params.q_b, lam * params.q_r]))
    return ModelSpec(np.asarray(root_law, float), (blue, red),
                     (frozenset({BLUE}), frozenset({RED})))


# channel -> (first mover, root colour, which of (p_b, p_r, q_r, q_b) fill (a, b, c, d))
CHANNELS = {
    "1b": (FirstMover.ONE, BLUE, (0, 1, 2, 3)),
    "1r": (FirstMover.ONE, RED, (2, 3, 0, 1)),
    "2b": (FirstMover.TWO, BLUE, (1, 2, 3, 0)),
    "2r": (FirstMover.TWO, RED, (3, 0, 1, 2)),
}
# the printed conditions name the blue / P1 channel; the rest follow by relabelling
DERIVED_BY_SYMMETRY = {"1b": False, "1r": True, "2b": True, "2r": True}


def channel_coefficients(params: PoissonParams, channel: str = "1b") -> tuple[float, float, float, float]:
    base = (params.p_b, params.p_r, params.q_r, params.q_b)
    try:
        order = CHANNELS[channel][2]
    except KeyError:
        raise SpecError(f"unknown channel {channel!r}; expected one of {sorted(CHANNELS)}") from None
    return tuple(base[i] for i in order)


def poisson_maps(params: PoissonParams, channel: str = "1b"):
    """The increasing scalar maps ``(f1, f2)`` of a channel."""
    lam = params.lam
    a, b, c, d = channel_coefficients(params, channel)

    def f1(x):
        return np.exp(-lam * a * np.exp(-lam * b * np.asarray(x, float)))

    def f2(x):
        return np.exp(-lam * c * np.exp(-lam * d * np.asarray(x, float)))

    return f1, f2


@dataclass(frozen=True)
class ScalarFixedPoints:
    roots: tuple
    brackets: tuple
    min_fp: float
    max_fp: float
    grid_too_coarse: bool = False

    @property
    def draw(self) -> float:
        return max(self.max_fp - self.min_fp, 0.0)


def poisson_scalar_fixed_points(params: PoissonParams, grid: int = 10**4, channel: str = "1b",
                                tol: float = 1e-13, max_iter: int = 10**6) -> ScalarFixedPoints:
    """All fixed points of ``f1 o f2`` on [0, 1].

    Sign changes of ``f1(f2(x)) - x`` on a uniform grid are refined by
    bisection. The extremes are also obtained by monotone iteration from 0 and
    1; a root missed by the grid (a tangency, or two roots in one cell) shows
    up as a disagreement, which is flagged and repaired.
    """
    if grid < 100:
        raise ValueError("grid must be at least 100")
    f1, f2 = poisson_maps(params, channel)

    def g(x):
        return float(f1(f2(x))) - x

    xs = np.linspace(0.0, 1.0, grid + 1)
    gs = f1(f2(xs)) - xs
    roots, brackets = [], []
    for i in range(grid):
        lo, hi = xs[i], xs[i + 1]
        if gs[i] == 0.0:
            roots.append(float(lo))
            brackets.append((float(lo), float(lo)))
        elif gs[i] * gs[i + 1] < 0:
            r = bisect(g, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps, maxiter=200)
            roots.append(float(r))
            brackets.append((float(lo), float(hi)))
    if gs[-1] == 0.0:
        roots.append(1.0)
        brackets.append((1.0, 1.0))

    def h(x):
        return f1(f2(x))

    lo_it = float(least_fixed_point(h, tol=tol, max_iter=max_iter, m=1).value[0])
    hi_it = float(greatest_fixed_point(h, tol=tol, max_iter=max_iter, m=1).value[0])
    coarse = not roots or abs(roots[0] - lo_it) > 1e-9 or abs(roots[-1] - hi_it) > 1e-9
    if coarse:
        for r in (lo_it, hi_it):
            if all(abs(r - s) > 1e-9 for s in roots):
                roots.append(r)
                brackets.append((r, r))
        order = np.argsort(roots)
        roots = [roots[i] for i in order]
        brackets = [brackets[i] for i in order]
    if not coarse:
        # the bisected roots are sharper than the stopped iterations
        return ScalarFixedPoints(tuple(roots), tuple(brackets), roots[0], roots[-1], False)
    return ScalarFixedPoints(tuple(roots), tuple(brackets), min(lo_it, roots[0]),
                             max(hi_it, roots[-1]), True)


def _log_ge_one(log_value: float) -> bool:
    return bool(log_value >= 0.0)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def channel_conditions(params: PoissonParams, channel: str = "1b") -> dict:
    """The four sufficient conditions for one channel, evaluated in log space.

    ``unique`` is the condition that ``f1 o f2`` is a contraction-type map with
    a single fixed point; ``normal``, ``misere`` and ``escape`` are the per-game
    conditions. Each is a pair of inequalities ``X >= 1`` checked as
    ``log X >= 0``.
    """
    lam = params.lam
    a, b, c, d = channel_coefficients(params, channel)
    L = math.log(lam)
    e_cd = math.exp(-lam * c * math.exp(-lam * d))
    lhs = _log(a) + _log(b) + _log(c) + _log(d)
    rhs = -4 * L + (lam * b * math.exp(-lam * c) + lam * a * math.exp(-lam * b * e_cd)
                    + lam * c * math.exp(-lam * d))
    first = _log_ge_one(L + _log(c) - lam * d)
    return {
        "unique": bool(lhs <= rhs),
        "normal": first and _log_ge_one(L + _log(a) - lam * b * e_cd),
        "misere": first and _log_ge_one(L + _log(a) - lam * b * (1 - math.exp(-lam * c))),
        "escape": first and _log_ge_one(L + _log(a) - lam * b * (e_cd - math.exp(-lam * c))),
    }


@dataclass(frozen=True)
class PoissonConditions:
    """Flags for the blue / P1 channel plus the per-channel table.

    ``cond13`` .. ``cond16`` follow the printed numbering: a global uniqueness
    bound, then the normal, misère and escape conditions for ``nd_{1,b}``,
    ``md_{1,b}`` and ``esl_b``. ``cond17`` is the escape condition for the red
    root, the only other escape channel. ``by_channel`` also carries the
    relabelled conditions, marked in ``derived``.
    """

    cond13: bool
    cond14: bool
    cond15: bool
    cond16: bool
    cond17: bool
    by_channel: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    violations: tuple = ()

    def flags(self) -> dict:
        return {f"cond{i}": getattr(self, f"cond{i}") for i in range(13, 18)}


def poisson_conditions(params: PoissonParams, outcomes: OutcomeTable | None = None,
                       check: bool = True, on_violation: str = "raise") -> PoissonConditions:
    """Evaluate the sufficient conditions and, if ``check``, confirm them against the solver.

    A condition that holds while a solved draw probability it rules out is
    above ``DRAW_ZERO_TOL`` is a violation. With ``on_violation="raise"`` the
    first one raises :class:`ConsistencyError`; with ``"record"`` they are
    listed in ``violations``.

    The normal-game implications always hold. The misère and escape
    implications, and the claim that the uniqueness bound also removes misère
    and escape draws, are not borne out numerically for larger ``lam`` (e.g.
    ``lam=42.39, p_b=0.968, q_b=0.0147`` has ``md = 1`` while the misère
    condition holds). Such cases surface here as violations.
    """
    if on_violation not in ("raise", "record"):
        raise ValueError("on_violation must be 'raise' or 'record'")
    by_channel = {ch: channel_conditions(params, ch) for ch in CHANNELS}
    b = by_channel["1b"]
    violations = []
    if check:
        if outcomes is None:
            outcomes = solve_outcomes(poisson_to_spec(params))
        violations = _cross_check(by_channel, outcomes)
        if violations and on_violation == "raise":
            raise ConsistencyError(violations[0])
    return PoissonConditions(
        cond13=b["unique"], cond14=b["normal"], cond15=b["misere"], cond16=b["escape"],
        cond17=by_channel["1r"]["escape"], by_channel=by_channel,
        derived=dict(DERIVED_BY_SYMMETRY), violations=tuple(violations),
    )


def _cross_check(by_channel: dict, out: OutcomeTable) -> list[str]:
    found = []

    def require(flag, values, what):
        worst = float(np.max(values))
        if flag and worst > DRAW_ZERO_TOL:
            found.append(f"{what} holds but the solved draw is {worst:.6g}")

    require(by_channel["1b"]["unique"], np.concatenate([out.nd1, out.nd2]), "cond13 (normal)")
    require(by_channel["1b"]["unique"], np.concatenate([out.md1, out.md2]), "cond13 (misere)")
    require(by_channel["1b"]["unique"], out.esl, "cond13 (escape)")
    for ch, (mover, color, _) in CHANNELS.items():
        c = by_channel[ch]
        nd = out.nd1 if mover is FirstMover.ONE else out.nd2
        md = out.md1 if mover is FirstMover.ONE else out.md2
        require(c["normal"], nd[color], f"normal condition ({ch})")
        require(c["misere"], md[color], f"misere condition ({ch})")
        if mover is FirstMover.ONE:
            require(c["escape"], out.esl[color], f"escape condition ({ch})")
    return found


@dataclass(frozen=True)
class PoissonReport:
    params: PoissonParams
    conditions: PoissonConditions
    fixed_points: ScalarFixedPoints
    outcomes: OutcomeTable

    @property
    def nd_1b_scalar(self) -> float:
        return self.fixed_points.draw

    def rows(self) -> list[tuple[str, object]]:
        out = self.outcomes
        p = self.params
        rows = [("lambda", p.lam), ("p_b", p.p_b), ("q_b", p.q_b)]
        rows += [(k, v) for k, v in self.conditions.flags().items()]
        rows += [("fixed_points", list(self.fixed_points.roots)),
                 ("nd_1b_scalar", self.nd_1b_scalar)]
        for name in ("nd1", "nd2", "md1", "md2", "esl"):
            vec = getattr(out, name)
            rows += [(f"{name}_b", float(vec[BLUE])), (f"{name}_r", float(vec[RED]))]
        return rows


def poisson_report(params: PoissonParams, grid: int = 10**4, tol: float = 1e-12,
                   on_violation: str = "raise") -> PoissonReport:
    out = solve_outcomes(poisson_to_spec(params), tol=tol)
    conds = poisson_conditions(params, out, on_violation=on_violation)
    fps = poisson_scalar_fixed_points(params, grid)
    if abs(fps.draw - float(out.nd1[BLUE])) > 1e-6:
        raise ConsistencyError(
            f"scalar draw {fps.draw:.12g} disagrees with vector draw {float(out.nd1[BLUE]):.12g}")
    return PoissonReport(params, conds, fps, out)
