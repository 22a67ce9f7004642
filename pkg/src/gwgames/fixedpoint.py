"""Game maps, their extremal fixed points, and finite-depth recursions.

Every outcome probability of the three games is an extremal fixed point of a
monotone self-map of ``[0, 1]^m`` built from two nested restricted pgfs. The
least fixed point is the limit of iterating from the zero vector and the
greatest one the limit from the all-ones vector; both iterations are monotone,
so the stopping value is a one-sided bound on the limit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, alpha_beta

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10**6
DRAW_CLAMP = 1e-9


class ConsistencyError(RuntimeError):
    """Internal cross-check failed beyond its tolerance."""


class GameKind(enum.Enum):
    NORMAL = "normal"
    MISERE = "misere"
    ESCAPE = "escape"


class FirstMover(enum.Enum):
    """Who plays the first round. For the escape game ONE is Stopper."""

    ONE = 1
    TWO = 2


@dataclass(frozen=True)
class GameMap:
    """One of the six monotone maps; ``mover`` ONE selects the P1 / Stopper map."""

    spec: ModelSpec
    kind: GameKind
    mover: FirstMover
    alpha: np.ndarray = field(repr=False, compare=False, default=None)
    beta: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.alpha is None or self.beta is None:
            a, b = alpha_beta(self.spec)
            object.__setattr__(self, "alpha", a)
            object.__setattr__(self, "beta", b)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        spec = self.spec
        S, Sc = spec.mask, ~spec.mask
        a, b = self.alpha, self.beta
        P = spec.restricted_pgfs
        if self.mover is FirstMover.ONE:
            if self.kind is GameKind.NORMAL:
                y = 1.0 - P(S, 1.0 - P(Sc, x))
            elif self.kind is GameKind.MISERE:
                y = a + 1.0 - P(S, 1.0 - P(Sc, x) + b)
            else:
                y = a + 1.0 - P(S, 1.0 - P(Sc, x))
        else:
            if self.kind is GameKind.NORMAL:
                y = 1.0 - P(Sc, 1.0 - P(S, x))
            elif self.kind is GameKind.MISERE:
                y = b + 1.0 - P(Sc, 1.0 - P(S, x) + a)
            else:
                y = 1.0 - P(Sc, a + 1.0 - P(S, x))
        return np.clip(y, 0.0, 1.0)


def build_game_map(spec: ModelSpec, kind: GameKind, mover: FirstMover) -> GameMap:
    return GameMap(spec, GameKind(kind), FirstMover(mover))


@dataclass(frozen=True)
class FixedPointResult:
    """Last iterate of a monotone iteration.

    ``error`` estimates the distance to the limit from the last two steps:
    with contraction ratio ``r = delta / previous_delta`` it is
    ``delta * r / (1 - r)``, and infinite when the steps are not shrinking.
    """

    value: np.ndarray
    delta: float
    iterations: int
    converged: bool
    error: float = 0.0


def _error_estimate(delta: float, previous: float) -> float:
    if delta == 0.0:
        return 0.0
    if not np.isfinite(previous) or previous <= 0.0:
        return np.inf
    r = delta / previous
    return delta * r / (1.0 - r) if r < 1.0 else np.inf


def _iterate(fmap, start: np.ndarray, direction: int, tol: float, max_iter: int):
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.array(start, dtype=float)
    delta = previous = np.inf
    for it in range(1, max_iter + 1):
        y = fmap(x)
        step = direction * (y - x)
        if np.any(step < -DRAW_CLAMP):
            raise ConsistencyError(
                f"monotone iteration reversed by {-step.min():.3e} at step {it}"
            )
        # iterates are monotone in exact arithmetic; discard rounding noise
        y = np.maximum(y, x) if direction > 0 else np.minimum(y, x)
        previous, delta = delta, float(np.max(np.abs(y - x), initial=0.0))
        x = y
        if delta < tol:
            return FixedPointResult(x, delta, it, True, _error_estimate(delta, previous))
    return FixedPointResult(x, delta, max_iter, False, _error_estimate(delta, previous))


def least_fixed_point(fmap, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                      m: int | None = None) -> FixedPointResult:
    """Iterate ``fmap`` from the zero vector until the sup-norm step drops below ``tol``.

    The returned vector is a lower bound for the least fixed point. A result
    with ``converged=False`` carries the last iterate.
    """
    m = m if m is not None else fmap.spec.m
    return _iterate(fmap, np.zeros(m), +1, tol, max_iter)


def greatest_fixed_point(fmap, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                         m: int | None = None) -> FixedPointResult:
    """Mirror of :func:`least_fixed_point`, iterating down from the all-ones vector."""
    m = m if m is not None else fmap.spec.m
    return _iterate(fmap, np.ones(m), -1, tol, max_iter)


def fixed_point_bracket(fmap, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                        m: int | None = None) -> tuple[FixedPointResult, FixedPointResult]:
    """Least and greatest fixed points from one stacked iteration.

    Row 0 starts at the zero vector, row 1 at the all-ones vector. Each row is
    frozen once its own step drops below ``tol``, so the results coincide with
    separate calls to :func:`least_fixed_point` and :func:`greatest_fixed_point`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = m if m is not None else fmap.spec.m
    x = np.stack([np.zeros(m), np.ones(m)])
    sign = np.array([[1.0], [-1.0]])
    done: list = [None, None]
    deltas = np.full(2, np.inf)
    previous = np.full(2, np.inf)
    for it in range(1, max_iter + 1):
        y = fmap(x)
        step = sign * (y - x)
        if np.any(step < -DRAW_CLAMP):
            raise ConsistencyError(
                f"monotone iteration reversed by {-step.min():.3e} at step {it}"
            )
        y = np.stack([np.maximum(y[0], x[0]), np.minimum(y[1], x[1])])
        previous, deltas = deltas, np.max(np.abs(y - x), axis=1)
        for r in (0, 1):
            if done[r] is None:
                if deltas[r] < tol:
                    err = _error_estimate(float(deltas[r]), float(previous[r]))
                    done[r] = FixedPointResult(y[r].copy(), float(deltas[r]), it, True, err)
                else:
                    x[r] = y[r]
        if done[0] is not None and done[1] is not None:
            break
    for r in (0, 1):
        if done[r] is None:
            err = _error_estimate(float(deltas[r]), float(previous[r]))
            done[r] = FixedPointResult(x[r].copy(), float(deltas[r]), max_iter, False, err)
    return done[0], done[1]


@dataclass(frozen=True)
class GameOutcome:
    """Per-colour win / lose / draw probabilities for the first mover.

    ``lower`` and ``upper`` hold the fixed-point iterations behind the numbers.
    For the escape game only the iteration that is actually needed is run, and
    the other entry is ``None``.
    """

    kind: GameKind
    mover: FirstMover
    win: np.ndarray
    lose: np.ndarray
    draw: np.ndarray
    lower: FixedPointResult | None
    upper: FixedPointResult | None

    @property
    def converged(self) -> bool:
        return all(r.converged for r in (self.lower, self.upper) if r is not None)

    @property
    def iterations(self) -> int:
        return max(r.iterations for r in (self.lower, self.upper) if r is not None)

    @property
    def delta(self) -> float:
        return max(r.delta for r in (self.lower, self.upper) if r is not None)

    @property
    def error(self) -> float:
        return max(r.error for r in (self.lower, self.upper) if r is not None)


def _clamp_draw(draw: np.ndarray) -> np.ndarray:
    if np.any(draw < -DRAW_CLAMP):
        raise ConsistencyError(f"negative draw probability {draw.min():.3e}")
    return np.maximum(draw, 0.0)


@dataclass(frozen=True)
class OutcomeTable:
    spec: ModelSpec
    games: dict
    tol: float

    def __getitem__(self, key) -> GameOutcome:
        kind, mover = key
        return self.games[GameKind(kind), FirstMover(mover)]

    def __iter__(self):
        return iter(self.games.values())

    @property
    def converged(self) -> bool:
        return all(g.converged for g in self.games.values())

    # short names used throughout the comparison checks
    @property
    def nw1(self): return self[GameKind.NORMAL, FirstMover.ONE].win
    @property
    def nl1(self): return self[GameKind.NORMAL, FirstMover.ONE].lose
    @property
    def nd1(self): return self[GameKind.NORMAL, FirstMover.ONE].draw
    @property
    def nw2(self): return self[GameKind.NORMAL, FirstMover.TWO].win
    @property
    def nl2(self): return self[GameKind.NORMAL, FirstMover.TWO].lose
    @property
    def nd2(self): return self[GameKind.NORMAL, FirstMover.TWO].draw
    @property
    def mw1(self): return self[GameKind.MISERE, FirstMover.ONE].win
    @property
    def ml1(self): return self[GameKind.MISERE, FirstMover.ONE].lose
    @property
    def md1(self): return self[GameKind.MISERE, FirstMover.ONE].draw
    @property
    def mw2(self): return self[GameKind.MISERE, FirstMover.TWO].win
    @property
    def ml2(self): return self[GameKind.MISERE, FirstMover.TWO].lose
    @property
    def md2(self): return self[GameKind.MISERE, FirstMover.TWO].draw
    @property
    def esw(self): return self[GameKind.ESCAPE, FirstMover.ONE].win
    @property
    def esl(self): return self[GameKind.ESCAPE, FirstMover.ONE].lose
    @property
    def eew(self): return self[GameKind.ESCAPE, FirstMover.TWO].win
    @property
    def eel(self): return self[GameKind.ESCAPE, FirstMover.TWO].lose


def solve_game(spec: ModelSpec, kind: GameKind, mover: FirstMover,
               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> GameOutcome:
    kind, mover = GameKind(kind), FirstMover(mover)
    fmap = build_game_map(spec, kind, mover)
    if kind is GameKind.ESCAPE:
        # Stopper first: esw = min FP(F_E); Escaper first: eel = 1 - max FP(script F_E)
        if mover is FirstMover.ONE:
            lo = least_fixed_point(fmap, tol, max_iter)
            win = lo.value
            return GameOutcome(kind, mover, win, 1.0 - win, np.zeros(spec.m), lo, None)
        hi = greatest_fixed_point(fmap, tol, max_iter)
        lose = 1.0 - hi.value
        return GameOutcome(kind, mover, 1.0 - lose, lose, np.zeros(spec.m), None, hi)
    lo, hi = fixed_point_bracket(fmap, tol, max_iter)
    win, lose = lo.value, 1.0 - hi.value
    draw = _clamp_draw(1.0 - win - lose)
    return GameOutcome(kind, mover, win, lose, draw, lo, hi)


def solve_outcomes(spec: ModelSpec, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> OutcomeTable:
    """Win / lose / draw probabilities of all three games, both first movers."""
    games = {
        (kind, mover): solve_game(spec, kind, mover, tol, max_iter)
        for kind in GameKind
        for mover in FirstMover
    }
    return OutcomeTable(spec, games, tol)


@dataclass(frozen=True)
class TruncatedValues:
    """Probabilities that the outcome is decided in fewer than ``depth`` rounds.

    Index 1 / 2 is the first mover. ``esw`` is Stopper moving first and ``eel``
    Escaper moving first.
    """

    depth: int
    nw1: np.ndarray
    nw2: np.ndarray
    nl1: np.ndarray
    nl2: np.ndarray
    mw1: np.ndarray
    mw2: np.ndarray
    ml1: np.ndarray
    ml2: np.ndarray
    esw: np.ndarray
    eel: np.ndarray

    def win_lose(self, kind: GameKind, mover: FirstMover) -> tuple[np.ndarray, np.ndarray]:
        """(win, lose) of the first mover; unresolved escape outcomes count as neither."""
        kind, mover = GameKind(kind), FirstMover(mover)
        zeros = np.zeros_like(self.esw)
        table = {
            (GameKind.NORMAL, FirstMover.ONE): (self.nw1, self.nl1),
            (GameKind.NORMAL, FirstMover.TWO): (self.nw2, self.nl2),
            (GameKind.MISERE, FirstMover.ONE): (self.mw1, self.ml1),
            (GameKind.MISERE, FirstMover.TWO): (self.mw2, self.ml2),
            (GameKind.ESCAPE, FirstMover.ONE): (self.esw, zeros),
            (GameKind.ESCAPE, FirstMover.TWO): (zeros, self.eel),
        }
        return table[kind, mover]


def truncated_values(spec: ModelSpec, n: int) -> TruncatedValues:
    """Run the one-round recursions ``n`` times from the all-zero base case."""
    if n < 0:
        raise ValueError("depth must be non-negative")
    m = spec.m
    S, Sc = spec.mask, ~spec.mask
    P = spec.restricted_pgfs
    a, b = alpha_beta(spec)
    z = np.zeros(m)
    nw1 = nw2 = nl1 = nl2 = z
    mw1 = mw2 = ml1 = ml2 = z
    esw = eel = z
    for _ in range(n):
        nw1, nw2, nl1, nl2 = (
            1.0 - P(S, 1.0 - nl2),
            1.0 - P(Sc, 1.0 - nl1),
            P(S, nw2),
            P(Sc, nw1),
        )
        mw1, mw2, ml1, ml2 = (
            a + 1.0 - P(S, 1.0 - ml2),
            b + 1.0 - P(Sc, 1.0 - ml1),
            P(S, mw2) - a,
            P(Sc, mw1) - b,
        )
        esw, eel = a + 1.0 - P(S, 1.0 - eel), P(Sc, esw)
    vals = [np.clip(v, 0.0, 1.0) for v in (nw1, nw2, nl1, nl2, mw1, mw2, ml1, ml2, esw, eel)]
    return TruncatedValues(n, *vals)
