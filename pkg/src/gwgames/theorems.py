"""Numerical checks of the structural results relating the three games.

* comparison inequalities between normal, misère and escape outcomes
  (:func:`check_part1`, :func:`check_part2`, :func:`check_part3`);
* a spectral sufficient condition for the Escaper to win with positive
  probability (:func:`survival_criterion`, :func:`eew_esl_equivalence`);
* continuity of outcomes in the offspring laws under the ``d0`` metric
  (:func:`continuity_probe`, :func:`pgf_perturbation_bound`).

Every check returns a report of evaluated sides and margins; none raises on a
violated inequality. Verdicts are ``pass``, ``fail``, ``hypothesis-unmet`` or
``inconclusive``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .fixedpoint import DEFAULT_TOL, ConsistencyError, FirstMover, GameKind, OutcomeTable, solve_outcomes
from .model import ModelSpec, SpecError, TableLaw, pgf_eval, pgf_partial, tv_distance

MARGIN_TOL = 1e-9
# alpha or beta within this of 1 counts as 1: table probabilities sum to 1 only up to rounding
UNIT_TOL = 1e-12
PASS, FAIL, UNMET, INCONCLUSIVE = "pass", "fail", "hypothesis-unmet", "inconclusive"


@dataclass(frozen=True)
class Inequality:
    """``lhs <= rhs`` for one colour; ``margin = rhs - lhs``."""

    name: str
    color: int
    lhs: float
    rhs: float
    hypothesis: bool = True
    derived: bool = False

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def verdict(self) -> str:
        if not self.hypothesis:
            return UNMET
        return PASS if self.margin >= -MARGIN_TOL else FAIL


@dataclass(frozen=True)
class ComparisonReport:
    part: str
    entries: tuple
    notes: tuple = ()

    @property
    def passed(self) -> bool:
        return all(e.verdict != FAIL for e in self.entries)

    @property
    def min_margin(self) -> float:
        live = [e.margin for e in self.entries if e.hypothesis]
        return min(live) if live else float("inf")

    def failures(self) -> list:
        return [e for e in self.entries if e.verdict == FAIL]


def check_part1(spec: ModelSpec, outcomes: OutcomeTable) -> ComparisonReport:
    """A normal or misère win for P1 is a Stopper win; a P2 loss is an Escaper loss."""
    o = outcomes
    entries = []
    for j in range(spec.m):
        entries += [
            Inequality("nw1<=esw", j, float(o.nw1[j]), float(o.esw[j])),
            Inequality("nl2<=eel", j, float(o.nl2[j]), float(o.eel[j])),
            Inequality("mw1<=esw", j, float(o.mw1[j]), float(o.esw[j])),
            Inequality("ml2<=eel", j, float(o.ml2[j]), float(o.eel[j])),
        ]
    return ComparisonReport("part1", tuple(entries))


def _chain(law, colors: list, base: float, values: np.ndarray, target: float, name: str, j: int):
    """``target >= base + mu (1 - base) + sum_k (v_k - mu) dG_k(1 - v) >= mu`` over ``colors``."""
    v = values[colors]
    mu = float(v.min())
    point = 1.0 - v
    middle = base + mu * (1.0 - base)
    for k, vk in zip(colors, v):
        middle += (vk - mu) * pgf_partial(law, colors, k, point)
    return [
        Inequality(f"{name}:upper", j, float(middle), float(target)),
        Inequality(f"{name}:lower", j, mu, float(middle)),
    ]


def check_part2(spec: ModelSpec, outcomes: OutcomeTable) -> ComparisonReport:
    """Lower bounds on esw, mw1 and mw2 from the first-order expansion of the pgfs."""
    o = outcomes
    alpha, beta = spec.alpha_beta()
    entries = []
    for j, law in enumerate(spec.offspring):
        S = sorted(spec.permissible[j])
        Sc = sorted(spec.complement(j))
        entries += _chain(law, S, alpha[j], o.eel, o.esw[j], "esw", j)
        entries += _chain(law, S, alpha[j], o.ml2, o.mw1[j], "mw1", j)
        entries += _chain(law, Sc, beta[j], o.ml1, o.mw2[j], "mw2", j)
    return ComparisonReport("part2", tuple(entries))


@dataclass(frozen=True)
class Part3Conditions:
    """Per-colour sides of the two sufficient conditions and their mirrors."""

    lose_lhs: np.ndarray
    lose_rhs: np.ndarray
    win_lhs: np.ndarray
    win_rhs: np.ndarray
    lose2_lhs: np.ndarray
    lose2_rhs: np.ndarray
    win2_lhs: np.ndarray
    win2_rhs: np.ndarray

    @property
    def lose_holds(self) -> bool:
        return bool(np.all(self.lose_lhs <= self.lose_rhs))

    @property
    def win_holds(self) -> bool:
        return bool(np.all(self.win_lhs >= self.win_rhs))

    @property
    def lose2_holds(self) -> bool:
        return bool(np.all(self.lose2_lhs <= self.lose2_rhs))

    @property
    def win2_holds(self) -> bool:
        return bool(np.all(self.win2_lhs >= self.win2_rhs))


def single_child_probs(spec: ModelSpec, complement: bool = False) -> np.ndarray:
    """``gamma[j, i]``: a colour-j vertex has exactly one child in its move set, of colour i.

    This is the partial derivative of the restricted pgf at 0. With
    ``complement`` the move set is the P2 / Escaper set.
    """
    m = spec.m
    gamma = np.zeros((m, m))
    for j, law in enumerate(spec.offspring):
        cols = sorted(spec.complement(j) if complement else spec.permissible[j])
        zeros = np.zeros(len(cols))
        for i in cols:
            gamma[j, i] = pgf_partial(law, cols, i, zeros)
    return gamma


def part3_conditions(spec: ModelSpec) -> Part3Conditions:
    alpha, beta = spec.alpha_beta()
    mask = spec.mask
    means = spec.mean_matrix()
    g1 = single_child_probs(spec)
    g2 = single_child_probs(spec, complement=True)
    return Part3Conditions(
        lose_lhs=alpha, lose_rhs=g1 @ beta,
        win_lhs=alpha, win_rhs=(means * mask) @ beta,
        lose2_lhs=beta, lose2_rhs=g2 @ alpha,
        win2_lhs=beta, win2_rhs=(means * ~mask) @ alpha,
    )


def check_part3(spec: ModelSpec, outcomes: OutcomeTable | None = None) -> ComparisonReport:
    """Orderings between normal and misère outcomes under the sufficient conditions.

    P1 loses the normal game no more often than the misère game when
    ``alpha_j <= sum_i beta_i P[one S_j child, of colour i]`` for every j, and
    wins it no more often when ``alpha_j >= sum_i beta_i E[X_i]``. The P2
    versions swap alpha with beta and the move set with its complement; they
    are marked ``derived``.
    """
    if outcomes is None:
        outcomes = solve_outcomes(spec)
    c = part3_conditions(spec)
    o = outcomes
    entries = []
    groups = (
        ("nl1<=ml1", c.lose_holds, o.nl1, o.ml1, False),
        ("nw1<=mw1", c.win_holds, o.nw1, o.mw1, False),
        ("nl2<=ml2", c.lose2_holds, o.nl2, o.ml2, True),
        ("nw2<=mw2", c.win2_holds, o.nw2, o.mw2, True),
    )
    for name, holds, lhs, rhs, derived in groups:
        for j in range(spec.m):
            entries.append(Inequality(name, j, float(lhs[j]), float(rhs[j]), holds, derived))
    notes = tuple(f"{name}: hypothesis not satisfied, no assertion"
                  for name, holds, *_ in groups if not holds)
    return ComparisonReport("part3", tuple(entries), notes)


# -- survival of the Escaper -----------------------------------------------

POWER_TOL = 1e-10
POWER_MAX_ITER = 100_000


def spectral_radius(A: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest eigenvalue of a non-negative matrix by power iteration.

    The spectrum of ``A`` is the union of the spectra of its irreducible
    diagonal blocks (strongly connected components of its support graph), so
    each block is handled separately. On a block ``C`` the iteration runs on
    ``C + I``, which is primitive with spectral radius ``rho(C) + 1``, and
    stops when the Collatz-Wielandt bounds
    ``min (Bv)_i / v_i <= rho(B) <= max (Bv)_i / v_i`` are within ``tol``.
    """
    A = np.asarray(A, dtype=float)
    if np.any(A < 0):
        raise ValueError("matrix must be non-negative")
    n_comp, labels = connected_components(A > 0, directed=True, connection="strong")
    rho = 0.0
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        block = A[np.ix_(idx, idx)]
        if len(idx) == 1:
            rho = max(rho, float(block[0, 0]))
        else:
            rho = max(rho, _power_iteration(block, tol, max_iter))
    return rho


def _power_iteration(C: np.ndarray, tol: float, max_iter: int) -> float:
    B = C + np.eye(len(C))
    v = np.ones(len(C))
    for _ in range(max_iter):
        w = B @ v
        ratio = w / v
        lo, hi = ratio.min(), ratio.max()
        if hi - lo <= tol * max(hi, 1.0):
            return float(0.5 * (lo + hi) - 1.0)
        v = w / w.max()
    raise ConsistencyError("power iteration did not converge on an irreducible block")


def spectral_radius_2x2(A: np.ndarray) -> float:
    (a, b), (c, d) = np.asarray(A, dtype=float)
    tr = a + d
    disc = (a - d) ** 2 + 4 * b * c
    return float(0.5 * (tr + np.sqrt(max(disc, 0.0))))


@dataclass(frozen=True)
class SurvivalCriterion:
    """Best admissible choice ``f`` and the matrix ``M''`` it induces.

    ``guaranteed[j]`` says whether colour ``j`` reaches, in the support graph
    of ``M''``, an irreducible class whose own spectral radius exceeds one.
    The forced subtree from such a root survives with positive probability, so
    the Escaper moving first wins there with positive probability. When
    ``M''`` is irreducible this is every colour as soon as ``fires``; when it
    is reducible a colour that cannot reach the supercritical class gets no
    guarantee, and its ``eew`` can be zero.
    """

    f: tuple
    gamma: np.ndarray
    mean_matrix: np.ndarray
    M2: np.ndarray
    rho: float
    candidates: int
    guaranteed: tuple = ()
    irreducible: bool = False

    @property
    def fires(self) -> bool:
        return self.rho > 1.0 + POWER_TOL

    @property
    def status(self) -> str:
        return "fires" if self.fires else "criterion silent"


def supercritical_reach(A: np.ndarray, tol: float = POWER_TOL) -> tuple[np.ndarray, bool]:
    """Colours that reach an irreducible block with spectral radius above one."""
    A = np.asarray(A, dtype=float)
    n = len(A)
    n_comp, labels = connected_components(A > 0, directed=True, connection="strong")
    hot = np.zeros(n, dtype=bool)
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        if spectral_radius(A[np.ix_(idx, idx)], tol) > 1.0 + tol:
            hot[idx] = True
    reach = (A > 0) | np.eye(n, dtype=bool)
    for _ in range(n):
        reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
    return (reach & hot[None, :]).any(axis=1), n_comp == 1


def reduced_matrix(mean: np.ndarray, gamma: np.ndarray, mask: np.ndarray, f) -> np.ndarray:
    """``M''[i, j] = sum over k outside S_i with f(k) = j of mean[i, k] * gamma[k, j]``."""
    m = len(f)
    pick = np.zeros((m, m))
    idx = np.arange(m)
    pick[idx, list(f)] = gamma[idx, list(f)]
    return (mean * ~mask) @ pick


def survival_criterion(spec: ModelSpec, max_candidates: int = 10**6) -> SurvivalCriterion:
    """Search all ``f`` with ``f(i)`` in ``S_i`` for the largest ``rho(M'')``.

    Candidates are visited in lexicographic order and ties keep the first.
    When it fires (``rho > 1``) the Escaper, moving first, wins with positive
    probability from every colour in ``guaranteed``, which is all of them when
    ``M''`` is irreducible. At ``rho = 1`` it says nothing.
    """
    choices = [sorted(s) for s in spec.permissible]
    count = int(np.prod([len(c) for c in choices], dtype=float))
    if count > max_candidates:
        raise SpecError(f"{count} candidate maps exceed the cap of {max_candidates}")
    mean = spec.mean_matrix()
    gamma = single_child_probs(spec)
    mask = spec.mask
    best = None
    for f in itertools.product(*choices):
        M2 = reduced_matrix(mean, gamma, mask, f)
        rho = spectral_radius(M2)
        if spec.m == 2:
            exact = spectral_radius_2x2(M2)
            if abs(exact - rho) > 1e-9 * max(1.0, exact):
                raise ConsistencyError(f"power iteration {rho!r} vs closed form {exact!r}")
        if best is None or rho > best[1]:
            best = (f, rho, M2)
    f, rho, M2 = best
    reach, irreducible = supercritical_reach(M2)
    return SurvivalCriterion(tuple(f), gamma, mean, M2, rho, count,
                             tuple(bool(r) for r in reach), irreducible)


@dataclass(frozen=True)
class EquivalenceReport:
    """Positivity of ``min eew`` against ``min esl``.

    ``forward`` is eew > 0 everywhere implies esl > 0 everywhere, which needs
    every ``alpha_j < 1``. ``converse`` also needs every ``beta_j < 1``:
    an Escaper who can never move from some colour loses there at once.
    """

    hypothesis: bool
    converse_hypothesis: bool
    min_eew: float
    min_esl: float
    threshold: float
    eew_positive: bool | None
    esl_positive: bool | None
    verdict: str


def _positivity(x: float, err: float, tau: float) -> bool | None:
    """True / False when ``x +- err`` is clear of ``tau``; None otherwise."""
    if x - err > tau:
        return True
    if x + err < tau:
        return False
    return None


def eew_esl_equivalence(spec: ModelSpec, outcomes: OutcomeTable,
                        tol: float | None = None) -> EquivalenceReport:
    """Escaper-first wins are possible everywhere iff Stopper-first losses are.

    Strict positivity is read at threshold ``10 * tol``. Each side carries the
    solver's error estimate, and a side whose uncertainty straddles the
    threshold makes the verdict ``inconclusive``.
    """
    tol = outcomes.tol if tol is None else tol
    alpha, beta = spec.alpha_beta()
    tau = 10 * tol
    eew = float(np.min(outcomes.eew))
    esl = float(np.min(outcomes.esl))
    a = _positivity(eew, outcomes[GameKind.ESCAPE, FirstMover.TWO].error, tau)
    b = _positivity(esl, outcomes[GameKind.ESCAPE, FirstMover.ONE].error, tau)
    hyp = bool(np.all(alpha < 1.0 - UNIT_TOL))
    conv = hyp and bool(np.all(beta < 1.0 - UNIT_TOL))
    if not hyp:
        verdict = UNMET
    elif a is None or b is None:
        verdict = INCONCLUSIVE
    elif a and not b:
        verdict = FAIL
    elif b and not a:
        verdict = FAIL if conv else UNMET
    else:
        verdict = PASS
    return EquivalenceReport(hyp, conv, eew, esl, tau, a, b, verdict)


# -- continuity in the law -------------------------------------------------

def s_alpha(alpha: float) -> float:
    """``sum_n n alpha^(n-1) = 1 / (1 - alpha)^2`` for ``0 <= alpha < 1``."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    return 1.0 / (1.0 - alpha) ** 2


def pgf_perturbation_bound(chi: TableLaw, eta: TableLaw, restriction, x, y) -> tuple[float, float]:
    """``|G_{S,chi}(x) - G_{S,eta}(y)|`` and its bound ``2 d + E_S max|x - y|``.

    ``d`` is the total variation distance between the laws and ``E_S`` the
    expected number of ``chi``-children with colours in ``S``.
    """
    S = sorted(restriction)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    lhs = abs(pgf_eval(chi, S, x) - pgf_eval(eta, S, y))
    d, slack = tv_distance(chi, eta)
    expected = float(chi.mean_vector()[S].sum())
    return lhs, 2 * d + expected * float(np.max(np.abs(x - y)))


@dataclass(frozen=True)
class Membership:
    D1: bool
    D2: bool
    D3: bool
    D4: bool
    C1: bool
    C2: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def membership(spec: ModelSpec) -> Membership:
    """Which of the regularity classes the spec's law belongs to."""
    alpha, beta = spec.alpha_beta()
    means = spec.mean_matrix()
    mask = spec.mask
    c1 = c2 = True
    for j, law in enumerate(spec.offspring):
        S = sorted(spec.permissible[j])
        Sc = sorted(spec.complement(j))
        c1 &= pgf_eval(law, S, beta[S]) > alpha[j]
        c2 &= pgf_eval(law, Sc, alpha[Sc]) > beta[j]
    return Membership(
        D1=bool(np.all(alpha > 0)), D2=bool(np.all(beta > 0)),
        D3=bool(np.all(np.isfinite((means * mask).sum(axis=1)))),
        D4=bool(np.all(np.isfinite((means * ~mask).sum(axis=1)))),
        C1=bool(c1), C2=bool(c2),
    )


def _direction(law: TableLaw, rng: np.random.Generator) -> TableLaw:
    """A random law on the support of ``law`` plus one nearby count vector."""
    extra = law.counts[rng.integers(len(law.counts))].copy()
    extra[rng.integers(law.m)] += 1
    rows = np.vstack([law.counts, extra])
    return TableLaw(rows, rng.dirichlet(np.ones(len(rows))))


def _mix(law: TableLaw, other: TableLaw, t: float) -> TableLaw:
    rows = np.vstack([law.counts, other.counts])
    probs = np.concatenate([(1 - t) * law.probs, t * other.probs])
    return TableLaw(rows, probs)


QUANTITIES = ("nw1", "nl1", "nw2", "nl2", "mw1", "ml1", "mw2", "ml2", "esw", "eel")
DEFAULT_EPS = (1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class ProbeReport:
    eps: tuple
    deltas: dict
    membership: Membership
    normal_draw: float
    misere_draw: float
    continuity_checked: dict = field(default_factory=dict)

    def modulus(self, eps: float) -> float:
        return max(self.deltas[eps].values())

    @property
    def passed(self) -> bool:
        return all(self.continuity_checked.values())


def continuity_probe(spec: ModelSpec, eps=DEFAULT_EPS, trials: int = 10, seed: int = 0,
                     tol: float = DEFAULT_TOL) -> ProbeReport:
    """Largest change of each outcome over random perturbations at ``d0 <= eps``.

    Each trial fixes a random direction per colour and mixes it in with
    weight ``eps``, so the same directions are reused across the ``eps``
    values. When the normal (misère) draw is zero, the normal (misère) moduli
    must not grow as ``eps`` shrinks; ``continuity_checked`` records that.
    """
    if not all(isinstance(law, TableLaw) for law in spec.offspring):
        raise SpecError("continuity probe needs table offspring laws")
    eps = tuple(sorted((float(e) for e in np.atleast_1d(eps)), reverse=True))
    if any(e < 0 for e in eps):
        raise ValueError("perturbation sizes must be non-negative")
    rng = np.random.default_rng(seed)
    base = solve_outcomes(spec, tol=tol)
    directions = [[_direction(law, rng) for law in spec.offspring] for _ in range(trials)]
    deltas = {}
    for e in eps:
        worst = dict.fromkeys(QUANTITIES, 0.0)
        for dirs in directions:
            if e == 0:
                continue
            laws = tuple(_mix(law, d, e) for law, d in zip(spec.offspring, dirs))
            pert = ModelSpec(spec.root_law, laws, spec.permissible)
            out = solve_outcomes(pert, tol=tol)
            for q in QUANTITIES:
                diff = float(np.max(np.abs(getattr(out, q) - getattr(base, q))))
                worst[q] = max(worst[q], diff)
        deltas[e] = worst
    nd = float(max(base.nd1.max(), base.nd2.max()))
    md = float(max(base.md1.max(), base.md2.max()))
    checked = {}
    for game, draw, qs in (("normal", nd, QUANTITIES[:4]), ("misere", md, QUANTITIES[4:8])):
        if draw < MARGIN_TOL:
            mods = [max(deltas[e][q] for q in qs) for e in eps]
            checked[game] = all(b <= a + MARGIN_TOL for a, b in zip(mods, mods[1:]))
    return ProbeReport(eps, deltas, membership(spec), nd, md, checked)
