"""Sampled finite trees, exact game solving on them, and Monte Carlo estimates.

A tree sampled to depth ``n`` contains every vertex at depth ``<= n``; vertices
at depth ``n`` are frontier vertices whose offspring were never drawn. Solving
a game on it by backward induction labels the frontier ``D`` (undecided), so
the root label is ``W`` / ``L`` exactly when the game is decided in fewer than
``n`` rounds. Averaging over trees therefore estimates the depth-``n``
truncated probabilities of :func:`gwgames.fixedpoint.truncated_values`.

Vertices are stored in breadth-first order: every depth level is a contiguous
index range and so are the children of any vertex.
"""

from __future__ import annotations

import enum
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fixedpoint import ConsistencyError, FirstMover, GameKind
from .model import ModelSpec, SpecError, TableLaw

DEFAULT_MAX_POPULATION = 10**7
CHUNK_TREES = 20_000

L, D, W = 0, 1, 2


class GameLabel(enum.Enum):
    """Outcome for the player about to move at a vertex."""

    L = L
    D = D
    W = W


class PopulationError(RuntimeError):
    """The expected tree size exceeds the configured cap."""


@dataclass(frozen=True, eq=False)
class SampledTree:
    """Depth-truncated realization of the tree (or of several, as a forest).

    ``parent`` is -1 at roots. ``children(v)`` is the index range
    ``child_start[v] : child_start[v] + child_count[v]``. ``frontier`` marks
    vertices whose offspring were never drawn; by default these are the
    vertices at ``truncation_depth``.
    """

    color: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    child_start: np.ndarray
    child_count: np.ndarray
    truncation_depth: int
    frontier: np.ndarray | None = None

    def __post_init__(self):
        if self.frontier is None:
            object.__setattr__(self, "frontier", self.depth >= self.truncation_depth)

    @property
    def size(self) -> int:
        return len(self.color)

    def children(self, v: int) -> range:
        s = int(self.child_start[v])
        return range(s, s + int(self.child_count[v]))

    def validate(self) -> None:
        n = self.size
        assert n > 0 and self.parent[0] == -1
        for v in range(n):
            for c in self.children(v):
                assert self.parent[c] == v and self.depth[c] == self.depth[v] + 1
        assert np.all(self.depth <= self.truncation_depth)
        assert np.all(np.diff(self.depth) >= 0)
        assert np.all(self.child_count[self.frontier] == 0)
        assert np.all(self.frontier[self.depth == self.truncation_depth])

    def __eq__(self, other):
        return (
            isinstance(other, SampledTree)
            and self.truncation_depth == other.truncation_depth
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("color", "parent", "depth", "child_start", "child_count", "frontier")
            )
        )


def tree_from_parents(colors, parents, truncation_depth: int) -> SampledTree:
    """Build a :class:`SampledTree` from parent pointers listed in BFS order."""
    colors = np.asarray(colors, dtype=np.int64)
    parents = np.asarray(parents, dtype=np.int64)
    n = len(colors)
    depth = np.zeros(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    start = np.zeros(n, dtype=np.int64)
    for v in range(n):
        p = parents[v]
        if p >= 0:
            if p >= v:
                raise ValueError("parents must precede children")
            if count[p] == 0:
                start[p] = v
            elif start[p] + count[p] != v:
                raise ValueError("children of a vertex must be contiguous")
            count[p] += 1
            depth[v] = depth[p] + 1
    for v in range(n):
        if count[v] == 0:
            start[v] = n
    return SampledTree(colors, parents, depth, start, count, int(truncation_depth))


def dump_tree(tree: SampledTree) -> str:
    """One line per vertex: ``index parent depth color`` (colours 1-indexed)."""
    lines = [
        f"{v} {int(tree.parent[v])} {int(tree.depth[v])} {int(tree.color[v]) + 1}"
        for v in range(tree.size)
    ]
    return "\n".join(lines) + "\n"


def expected_population(spec: ModelSpec, depth: int, root_color: int | None = None) -> float:
    """Expected number of vertices at depth ``<= depth``."""
    M = spec.mean_matrix()
    gen = spec.root_law.copy() if root_color is None else np.eye(spec.m)[root_color]
    total = gen.sum()
    for _ in range(depth):
        gen = gen @ M
        total += gen.sum()
        if not math.isfinite(total):
            return math.inf
    return float(total)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STREAM = np.uint64(0xD1B54A32D192ED03)


def _splitmix(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, applied elementwise with wrap-around arithmetic."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _uniforms(ids: np.ndarray, streams: int) -> np.ndarray:
    """Uniforms in ``(0, 1)`` of shape ``(len(ids), streams)`` keyed by vertex id."""
    with np.errstate(over="ignore"):
        keys = ids[:, None] ^ (np.arange(1, streams + 1, dtype=np.uint64) * _STREAM)
    bits = _splitmix(keys) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def root_ids(seed: int, count: int, first: int = 0) -> np.ndarray:
    """Identifiers of trees ``first, ..., first + count - 1`` for ``seed``."""
    key = _splitmix(np.array([int(seed) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    with np.errstate(over="ignore"):
        return _splitmix(key ^ np.arange(first, first + count, dtype=np.uint64))


def _child_ids(parent_ids: np.ndarray, total: np.ndarray) -> np.ndarray:
    pid = np.repeat(parent_ids, total)
    ordinal = np.arange(pid.size) - np.repeat(np.cumsum(total) - total, total)
    with np.errstate(over="ignore"):
        return _splitmix(pid ^ _splitmix(ordinal.astype(np.uint64) + np.uint64(1)))


def _offspring(spec: ModelSpec, colors: np.ndarray, ids: np.ndarray) -> np.ndarray:
    u = _uniforms(ids, spec.m)
    out = np.zeros((len(colors), spec.m), dtype=np.int64)
    for j, law in enumerate(spec.offspring):
        idx = np.flatnonzero(colors == j)
        if idx.size:
            out[idx] = law.quantile(u[idx])
    return out


class _Levels:
    """A forest under construction, stored one depth level at a time."""

    def __init__(self, roots: np.ndarray, ids: np.ndarray):
        self.color = [np.asarray(roots, dtype=np.int64)]
        self.parent = [np.full(len(roots), -1, dtype=np.int64)]
        self.ids = [ids]
        self.count = []
        self.open = []
        self.size = len(roots)

    def expand(self, spec: ModelSpec, grow: np.ndarray) -> None:
        """Draw offspring for the vertices of the last level selected by ``grow``."""
        c, ids = self.color[-1], self.ids[-1]
        n = len(c)
        offspring = np.zeros((n, spec.m), dtype=np.int64)
        sel = np.flatnonzero(grow)
        if sel.size:
            offspring[sel] = _offspring(spec, c[sel], ids[sel])
        total = offspring.sum(axis=1)
        offset = self.size - n
        self.count.append(total)
        self.open.append(~grow)
        self.color.append(np.repeat(np.tile(np.arange(spec.m), n), offspring.ravel()))
        self.parent.append(np.repeat(np.arange(offset, offset + n), total))
        self.ids.append(_child_ids(ids, total))
        self.size += int(total.sum())

    def tree(self) -> SampledTree:
        last = len(self.color[-1])
        count = np.concatenate(self.count + [np.zeros(last, dtype=np.int64)])
        frontier = np.concatenate(self.open + [np.ones(last, dtype=bool)])
        depths = np.concatenate([np.full(len(c), d) for d, c in enumerate(self.color)])
        start = np.concatenate([[0], np.cumsum(count)[:-1]]) + len(self.color[0])
        start[count == 0] = self.size
        return SampledTree(np.concatenate(self.color), np.concatenate(self.parent), depths,
                           start, count, len(self.color) - 1, frontier)


def _sample_forest(spec: ModelSpec, roots: np.ndarray, ids: np.ndarray,
                   depth: int) -> SampledTree:
    """Grow every root to ``depth``; each vertex draws from its own hashed stream.

    A vertex's id is a hash of its parent's id and its birth order, so the
    subtree below a vertex depends only on that id and not on the order in
    which vertices are processed or on the other trees in the forest.
    """
    levels = _Levels(roots, ids)
    for _ in range(depth):
        levels.expand(spec, np.ones(len(levels.color[-1]), dtype=bool))
    return levels.tree()


def _undecided_paths(tree: SampledTree, labels: dict, mask: np.ndarray,
                     movers=tuple(FirstMover)) -> np.ndarray:
    """Vertices that optimal play can still reach through undecided positions.

    For a root mover the player to move alternates with depth, and a child is
    reachable only along an edge that player may use. A vertex matters for
    the root's label in some game only if every position above it on such a
    path is still undecided.
    """
    n = tree.size
    parent = tree.parent
    child = parent >= 0
    p = parent[child]
    perm1 = np.zeros(n, dtype=bool)
    perm1[child] = mask[tree.color[p], tree.color[child]]
    even = tree.depth % 2 == 0
    bounds = np.searchsorted(tree.depth, np.arange(tree.truncation_depth + 2))
    live = np.zeros(n, dtype=bool)
    for lab1, lab2 in labels.values():
        for first in (FirstMover(mv) is FirstMover.ONE for mv in movers):
            # role of the player to move at each vertex: P1 / Stopper or not
            p1_moves = even == first
            undecided = np.where(p1_moves, lab1, lab2) == D
            ok = np.zeros(n, dtype=bool)
            ok[: bounds[1]] = True
            for d in range(1, tree.truncation_depth + 1):
                lo, hi = bounds[d], bounds[d + 1]
                par = parent[lo:hi]
                ok[lo:hi] = ok[par] & undecided[par] & (perm1[lo:hi] == p1_moves[par])
            live |= ok
    return live


def _grow_pruned(spec: ModelSpec, roots: np.ndarray, ids: np.ndarray, depth: int,
                 kinds, movers, max_population: float) -> SampledTree:
    """Like :func:`_sample_forest`, but only where the root labels can still change.

    After each level the forest is solved. Labels ``W`` and ``L`` never change
    when the frontier is grown further, so a frontier vertex below a decided
    position, or off every path the players can take, is left unexpanded.
    Since each vertex has its own stream, every vertex that is grown has the
    same subtree as in the full forest, and the root labels agree with it.
    """
    mask = spec.mask
    levels = _Levels(roots, ids)
    grow = np.ones(len(roots), dtype=bool)
    for k in range(depth):
        levels.expand(spec, grow)
        if levels.size > max_population:
            raise PopulationError(f"forest grew past {max_population:.3g} vertices")
        tree = levels.tree()
        labels = {kind: label_forest(tree, kind, mask) for kind in kinds}
        if k + 1 < depth:
            live = _undecided_paths(tree, labels, mask, movers)
            grow = live[tree.size - len(levels.color[-1]):]
    return levels.tree()


def sample_tree(spec: ModelSpec, depth: int, seed: int, root_color: int | None = None,
                max_population: float = DEFAULT_MAX_POPULATION) -> SampledTree:
    """Sample one tree truncated at ``depth``; deterministic in ``(spec, depth, seed)``."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    expected = expected_population(spec, depth, root_color)
    if expected > max_population:
        raise PopulationError(f"expected population {expected:.3g} exceeds {max_population:.3g}")
    ids = root_ids(seed, 1)
    if root_color is None:
        u = _uniforms(ids ^ _GOLDEN, 1)[0, 0]
        root_color = int(min(np.searchsorted(np.cumsum(spec.root_law), u, side="right"), spec.m - 1))
    return _sample_forest(spec, np.array([root_color]), ids, depth)


def _mask_of(permissible) -> np.ndarray:
    if isinstance(permissible, ModelSpec):
        return permissible.mask
    if isinstance(permissible, np.ndarray) and permissible.dtype == bool:
        return permissible
    m = len(permissible)
    mask = np.zeros((m, m), dtype=bool)
    for j, s in enumerate(permissible):
        mask[j, sorted(s)] = True
    return mask


def label_forest(tree: SampledTree, kind: GameKind, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Backward induction on every vertex.

    Returns ``(lab1, lab2)``: the label for the player to move at each vertex
    when that player is P1 / Stopper (``lab1``) or P2 / Escaper (``lab2``).
    """
    kind = GameKind(kind)
    n = tree.size
    lab1 = np.full(n, D, dtype=np.int8)
    lab2 = np.full(n, D, dtype=np.int8)
    depth = tree.depth
    bounds = np.searchsorted(depth, np.arange(tree.truncation_depth + 2))
    for d in range(tree.truncation_depth - 1, -1, -1):
        lo, hi = bounds[d], bounds[d + 1]
        clo, chi = bounds[d + 1], bounds[d + 2]
        size = hi - lo
        par = tree.parent[clo:chi] - lo
        ccol = tree.color[clo:chi]
        perm1 = mask[tree.color[tree.parent[clo:chi]], ccol]
        perm2 = ~perm1

        def tally(sel, labels):
            tot = np.bincount(par, weights=sel, minlength=size)
            nl = np.bincount(par, weights=sel & (labels == L), minlength=size)
            nw = np.bincount(par, weights=sel & (labels == W), minlength=size)
            return tot, nl, nw

        # P1 to move at the parent: P1-permissible children, P2 to move there
        t1, l1, w1 = tally(perm1, lab2[clo:chi])
        t2, l2, w2 = tally(perm2, lab1[clo:chi])
        lab1[lo:hi] = _decide(kind, True, t1, l1, w1)
        lab2[lo:hi] = _decide(kind, False, t2, l2, w2)
        open_ = tree.frontier[lo:hi]
        lab1[lo:hi][open_] = D
        lab2[lo:hi][open_] = D
        # a W needs a losing child for the opponent unless the mover is stuck and wins
        stuck1 = (t1 == 0) & (kind is not GameKind.NORMAL)
        stuck2 = (t2 == 0) & (kind is GameKind.MISERE)
        if (np.any((lab1[lo:hi] == W) & (l1 == 0) & ~stuck1)
                or np.any((lab2[lo:hi] == W) & (l2 == 0) & ~stuck2)):
            raise ConsistencyError("W label without a losing reply")
    return lab1, lab2


def _decide(kind: GameKind, first_role: bool, total, n_lose, n_win) -> np.ndarray:
    stuck = total == 0
    has_l = n_lose > 0
    all_w = n_win == total
    out = np.full(total.shape, D, dtype=np.int8)
    if kind is GameKind.NORMAL:
        out[all_w] = L
        out[has_l] = W
    elif kind is GameKind.MISERE:
        out[all_w] = L
        out[has_l | stuck] = W
    elif first_role:
        # Stopper: wins when stuck or when some reply leaves Escaper lost
        out[has_l | stuck] = W
    else:
        # Escaper: loses when stuck or when every reply is a Stopper win
        out[all_w] = L
    return out


def solve_game_on_tree(tree: SampledTree, kind: GameKind, mover: FirstMover,
                       permissible) -> GameLabel:
    """Label of the root for the first mover. ``permissible`` is a spec, a list of sets or a mask."""
    mask = _mask_of(permissible)
    lab1, lab2 = label_forest(tree, kind, mask)
    lab = lab1 if FirstMover(mover) is FirstMover.ONE else lab2
    return GameLabel(int(lab[0]))


def strategy_trace(tree: SampledTree, kind: GameKind, mover: FirstMover, permissible) -> list[int]:
    """Path of the token under optimal play, taking the lowest-index qualifying child.

    A winning player moves to a child that is lost for the opponent; otherwise
    the player prefers a drawn child, then any child. The path stops when the
    mover is stuck or the frontier is reached.
    """
    mask = _mask_of(permissible)
    labs = label_forest(tree, kind, mask)
    v, role = 0, 0 if FirstMover(mover) is FirstMover.ONE else 1
    path = [v]
    while not tree.frontier[v]:
        cand = [c for c in tree.children(v)
                if mask[tree.color[v], tree.color[c]] == (role == 0)]
        if not cand:
            break
        reply = labs[1 - role]
        for want in (L, D, W):
            pick = [c for c in cand if reply[c] == want]
            if pick:
                v = pick[0]
                break
        path.append(v)
        role = 1 - role
    return path


@dataclass(frozen=True)
class MonteCarloEstimate:
    kind: GameKind
    mover: FirstMover
    root_color: int
    depth: int
    samples: int
    win: float
    lose: float
    draw: float
    win_stderr: float
    lose_stderr: float
    draw_stderr: float

    @property
    def bracket(self) -> tuple[float, float]:
        """``[win, 1 - lose]``: the range compatible with the undecided mass."""
        return self.win, 1.0 - self.lose


def _stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GWGAMES_THREADS", "1")))
    except ValueError:
        return 1


def monte_carlo_counts(spec: ModelSpec, root_color: int, depth: int, samples: int, seed: int,
                       kinds=tuple(GameKind), movers=tuple(FirstMover),
                       max_population: float = DEFAULT_MAX_POPULATION) -> dict:
    """Label counts at the root for every (kind, mover), from one shared batch of trees.

    Returns ``{(kind, mover): array([n_L, n_D, n_W])}``. Tree ``t`` is grown
    from the id ``root_ids(seed, ...)[t]``, so totals do not depend on the
    chunk layout or on ``GWGAMES_THREADS``. Trees are grown only where their
    root labels can still change, and ``max_population`` caps the number of
    vertices actually grown per chunk.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if not 0 <= root_color < spec.m:
        raise SpecError(f"root colour {root_color + 1} out of range")
    chunk = min(samples, CHUNK_TREES)
    n_chunks = -(-samples // chunk)
    mask = spec.mask
    kinds = tuple(GameKind(k) for k in kinds)
    movers = tuple(FirstMover(mv) for mv in movers)

    def run(i):
        size = min(chunk, samples - i * chunk)
        ids = root_ids(seed, size, first=i * chunk)
        forest = _grow_pruned(spec, np.full(size, root_color), ids, depth, kinds, movers, max_population)
        out = {}
        for kind in kinds:
            lab1, lab2 = label_forest(forest, kind, mask)
            for mv in movers:
                lab = lab1 if mv is FirstMover.ONE else lab2
                out[kind, mv] = np.bincount(lab[:size], minlength=3)
        return out

    workers = _worker_count()
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(i) for i in range(n_chunks)]
    total = {key: sum(p[key] for p in parts) for key in parts[0]}
    return total


def estimate_from_counts(kind, mover, root_color, depth, counts) -> MonteCarloEstimate:
    n = int(counts.sum())
    lose, draw, win = (float(c) / n for c in counts)
    return MonteCarloEstimate(
        GameKind(kind), FirstMover(mover), root_color, depth, n,
        win, lose, draw, _stderr(win, n), _stderr(lose, n), _stderr(draw, n),
    )


def monte_carlo(spec: ModelSpec, kind: GameKind, mover: FirstMover, root_color: int,
                depth: int, samples: int, seed: int,
                max_population: float = DEFAULT_MAX_POPULATION) -> MonteCarloEstimate:
    """Empirical W / L / D frequencies of the root over ``samples`` independent trees.

    The estimates are unbiased for the depth-``depth`` truncated probabilities.
    For the escape game ``draw`` is the undecided mass; see
    :attr:`MonteCarloEstimate.bracket`.
    """
    counts = monte_carlo_counts(spec, root_color, depth, samples, seed, (kind,), (mover,),
                                max_population)
    return estimate_from_counts(kind, mover, root_color, depth, counts[GameKind(kind), FirstMover(mover)])


# -- exhaustive enumeration ------------------------------------------------

def enumerate_label_distribution(spec: ModelSpec, depth: int, kind: GameKind) -> list[dict]:
    """Exact law of the root's label pair by enumerating every tree up to ``depth``.

    Entry ``j`` maps ``(lab1, lab2)`` of a colour-``j`` root to its probability.
    Subtrees with the same label pair are merged before combining, which keeps
    the enumeration finite-sized; each combination applies the game rules
    directly, without generating functions. Table laws only.
    """
    kind = GameKind(kind)
    if not all(isinstance(law, TableLaw) for law in spec.offspring):
        raise SpecError("enumeration needs table offspring laws")
    m = spec.m
    mask = spec.mask
    dist = [{(D, D): 1.0} for _ in range(m)]
    for _ in range(depth):
        new = []
        for j, law in enumerate(spec.offspring):
            acc: dict = {}
            for row, p in zip(law.counts, law.probs):
                kids = [c for c in range(m) for _ in range(int(row[c]))]
                choices = [list(dist[c].items()) for c in kids]
                for combo in itertools.product(*choices):
                    q = p
                    t1 = l1 = w1 = t2 = l2 = w2 = 0
                    for c, ((a1, a2), pc) in zip(kids, combo):
                        q *= pc
                        if mask[j, c]:
                            t1 += 1
                            l1 += a2 == L
                            w1 += a2 == W
                        else:
                            t2 += 1
                            l2 += a1 == L
                            w2 += a1 == W
                    key = (_rule(kind, True, t1, l1, w1), _rule(kind, False, t2, l2, w2))
                    acc[key] = acc.get(key, 0.0) + q
            new.append(acc)
        dist = new
    return dist


def _rule(kind: GameKind, first_role: bool, total: int, n_lose: int, n_win: int) -> int:
    if kind is GameKind.NORMAL:
        if n_lose:
            return W
        return L if n_win == total else D
    if kind is GameKind.MISERE:
        if total == 0 or n_lose:
            return W
        return L if n_win == total else D
    if first_role:
        return W if total == 0 or n_lose else D
    return L if n_win == total else D
