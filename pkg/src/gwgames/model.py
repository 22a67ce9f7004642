"""Multi-type Galton-Watson model: colours, permissible sets, offspring laws.

Colours are 0-indexed inside the library. The JSON spec format and the CLI
use 1-indexed colours; conversion happens only in :func:`spec_from_dict` and
:func:`spec_to_dict`.

A restricted pgf ``G_{j,S}(x_S)`` is evaluated as the full pgf ``G_j`` at the
point ``x_S`` padded with ones outside ``S``; every helper below relies on
that identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

PROB_TOL = 1e-12
POISSON_TAIL = 1e-10


class SpecError(ValueError):
    """Raised for malformed model specifications or out-of-domain arguments."""


def _normalize(probs: np.ndarray, what: str) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise SpecError(f"{what}: expected a non-empty 1-d probability vector")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise SpecError(f"{what}: probabilities must be finite and non-negative")
    total = probs.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise SpecError(f"{what}: probabilities sum to {total!r}, not 1")
    # leave rounding-level deficits alone so that a renormalized vector is a fixed point
    if abs(total - 1.0) <= 4 * probs.size * np.finfo(float).eps:
        return probs.copy()
    return probs / total


@dataclass(frozen=True, eq=False)
class TableLaw:
    """Offspring law with finite support on colour-count tuples.

    ``counts[r]`` is a length-``m`` tuple of offspring numbers per colour and
    ``probs[r]`` its probability. Duplicate rows are merged.
    """

    counts: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] == 0:
            raise SpecError("table law: counts must be a non-empty (K, m) array")
        if np.any(counts < 0) or not np.all(counts == np.round(counts)):
            raise SpecError("table law: counts must be non-negative integers")
        counts = counts.astype(np.int64)
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (counts.shape[0],):
            raise SpecError("table law: one probability per counts row required")
        uniq, inverse = np.unique(counts, axis=0, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inverse.ravel(), probs)
        merged = _normalize(merged, "table law")
        uniq.setflags(write=False)
        merged.setflags(write=False)
        object.__setattr__(self, "counts", uniq)
        object.__setattr__(self, "probs", merged)

    @property
    def m(self) -> int:
        return self.counts.shape[1]

    @classmethod
    def point_mass(cls, counts: Sequence[int]) -> "TableLaw":
        return cls(np.array([counts]), np.array([1.0]))

    def pgf_full(self, z: np.ndarray) -> np.ndarray:
        """Evaluate ``G_j(z)`` for ``z`` of shape ``(..., m)``."""
        z = np.asarray(z, dtype=float)
        terms = np.prod(z[..., None, :] ** self.counts, axis=-1)
        return terms @ self.probs

    def pgf_grad_full(self, z: np.ndarray, k: int) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        nk = self.counts[:, k]
        powers = np.array(self.counts, dtype=float)
        powers[:, k] = np.maximum(nk - 1, 0)
        terms = np.prod(z[..., None, :] ** powers, axis=-1) * nk
        return terms @ self.probs

    def mean_vector(self) -> np.ndarray:
        return self.probs @ self.counts

    def dense(self, shape: Sequence[int]) -> np.ndarray:
        """Probability array on the box ``[0, shape)``; mass outside is dropped."""
        out = np.zeros(shape)
        inside = np.all(self.counts < np.asarray(shape), axis=1)
        np.add.at(out, tuple(self.counts[inside].T), self.probs[inside])
        return out

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Offspring tuples from uniforms ``u`` of shape ``(n, m)``; only column 0 is used."""
        cdf = np.cumsum(self.probs)
        rows = np.searchsorted(cdf, u[:, 0], side="right")
        return self.counts[np.minimum(rows, len(cdf) - 1)]

    def __eq__(self, other):
        return (
            isinstance(other, TableLaw)
            and self.counts.shape == other.counts.shape
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self):
        return hash((self.counts.tobytes(), self.probs.tobytes()))


@dataclass(frozen=True, eq=False)
class PoissonLaw:
    """Independent Poisson offspring counts, one mean per colour."""

    means: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        if means.ndim != 1 or means.size == 0:
            raise SpecError("poisson law: means must be a non-empty 1-d array")
        if not np.all(np.isfinite(means)) or np.any(means < 0):
            raise SpecError("poisson law: means must be finite and non-negative")
        means = means.copy()
        means.setflags(write=False)
        object.__setattr__(self, "means", means)

    @property
    def m(self) -> int:
        return self.means.size

    def pgf_full(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.exp((z - 1.0) @ self.means)

    def pgf_grad_full(self, z: np.ndarray, k: int) -> np.ndarray:
        return self.means[k] * self.pgf_full(z)

    def mean_vector(self) -> np.ndarray:
        return np.array(self.means)

    def truncation(self) -> np.ndarray:
        """Per-colour cut-offs ``n_l`` with ``sum_l P[X_l > n_l] < POISSON_TAIL``.

        Uses the Chernoff bound ``P[X >= n] <= exp(-mu) (e mu / n)^n``.
        """
        per = POISSON_TAIL / self.m
        return np.array([_poisson_cutoff(mu, per) for mu in self.means])

    def tail_bound(self, cutoffs: np.ndarray) -> float:
        return float(sum(_chernoff_tail(mu, n + 1) for mu, n in zip(self.means, cutoffs)))

    def dense(self, shape: Sequence[int]) -> np.ndarray:
        from scipy.stats import poisson

        out = np.ones(())
        for mu, n in zip(self.means, shape):
            out = np.multiply.outer(out, poisson.pmf(np.arange(n), mu))
        return out

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Offspring tuples from uniforms ``u`` of shape ``(n, m)``, one column per colour."""
        from scipy.stats import poisson

        out = np.empty(u.shape, dtype=np.int64)
        for k, mu in enumerate(self.means):
            # table lookup on the bulk of the law, exact quantile in the far tail
            cdf = poisson.cdf(np.arange(_poisson_cutoff(mu, 1e-15) + 1), mu)
            col = np.searchsorted(cdf, u[:, k], side="left")
            tail = col >= len(cdf)
            if np.any(tail):
                col[tail] = poisson.ppf(u[tail, k], mu)
            out[:, k] = col
        return out

    def __eq__(self, other):
        return isinstance(other, PoissonLaw) and np.array_equal(self.means, other.means)

    def __hash__(self):
        return hash(self.means.tobytes())


OffspringLaw = Union[TableLaw, PoissonLaw]


def _chernoff_tail(mu: float, n: int) -> float:
    # bound on P[X >= n] for X ~ Poisson(mu); valid for n > mu
    if mu == 0.0:
        return 0.0 if n > 0 else 1.0
    if n <= mu:
        return 1.0
    return math.exp(-mu + n * (1.0 + math.log(mu / n)))


def _poisson_cutoff(mu: float, eps: float) -> int:
    n = int(math.ceil(mu)) + 1
    while _chernoff_tail(mu, n + 1) >= eps:
        n += 1
    return n


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Rooted multi-type GW tree together with the permissible sets.

    ``permissible[j]`` is ``S_j``: the child colours P1 / Stopper may move to
    from a colour-``j`` vertex. P2 / Escaper use the complement.
    """

    root_law: np.ndarray
    offspring: tuple
    permissible: tuple
    m: int = field(init=False)

    def __post_init__(self):
        offspring = tuple(self.offspring)
        m = len(offspring)
        if m < 2:
            raise SpecError("at least two colours are required")
        for j, law in enumerate(offspring):
            if not isinstance(law, (TableLaw, PoissonLaw)):
                raise SpecError(f"offspring[{j}] is not an offspring law")
            if law.m != m:
                raise SpecError(f"offspring[{j}] has {law.m} colours, expected {m}")
        perm = tuple(frozenset(int(c) for c in s) for s in self.permissible)
        if len(perm) != m:
            raise SpecError(f"expected {m} permissible sets, got {len(perm)}")
        for j, s in enumerate(perm):
            if not s or len(s) >= m or any(not 0 <= c < m for c in s):
                raise SpecError(
                    f"permissible set of colour {j + 1} must be a non-empty proper subset"
                )
        root = _normalize(self.root_law, "root law")
        if root.size != m:
            raise SpecError(f"root law has {root.size} entries, expected {m}")
        root.setflags(write=False)
        object.__setattr__(self, "root_law", root)
        object.__setattr__(self, "offspring", offspring)
        object.__setattr__(self, "permissible", perm)
        object.__setattr__(self, "m", m)
        mask = np.zeros((m, m), dtype=bool)
        for j, s in enumerate(perm):
            mask[j, sorted(s)] = True
        mask.setflags(write=False)
        object.__setattr__(self, "_mask", mask)
        object.__setattr__(self, "_stacked", _stack_laws(offspring))

    @property
    def mask(self) -> np.ndarray:
        """Boolean ``(m, m)`` matrix, ``mask[j, k]`` iff ``k`` is in ``S_j``."""
        return self._mask

    def complement(self, j: int) -> frozenset:
        return frozenset(range(self.m)) - self.permissible[j]

    def restricted_pgfs(self, mask: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Vector with entry ``j`` equal to ``G_j`` at ``x`` restricted to ``mask[j]``.

        ``x`` has shape ``(..., m)``; coordinates outside ``mask[j]`` are set to 1.
        """
        x = np.asarray(x, dtype=float)
        z = np.where(mask, x[..., None, :], 1.0)
        kind, a, w = self._stacked
        if kind == "table":
            return (np.prod(z[..., None, :] ** a, axis=-1) * w).sum(axis=-1)
        if kind == "poisson":
            return np.exp(((z - 1.0) * a).sum(axis=-1))
        out = np.empty(x.shape)
        for j, law in enumerate(self.offspring):
            z = np.where(mask[j], x, 1.0)
            out[..., j] = law.pgf_full(z)
        return out

    def mean_matrix(self) -> np.ndarray:
        return np.array([law.mean_vector() for law in self.offspring])

    def alpha_beta(self) -> tuple[np.ndarray, np.ndarray]:
        return alpha_beta(self)

    def __eq__(self, other):
        return (
            isinstance(other, ModelSpec)
            and self.m == other.m
            and np.array_equal(self.root_law, other.root_law)
            and self.offspring == other.offspring
            and self.permissible == other.permissible
        )

    def __hash__(self):
        return hash((self.root_law.tobytes(), self.offspring, self.permissible))


def _stack_laws(offspring):
    # padded arrays for evaluating every colour's pgf in one numpy expression
    if all(isinstance(law, TableLaw) for law in offspring):
        K = max(len(law.probs) for law in offspring)
        m = len(offspring)
        counts = np.zeros((m, K, m))
        probs = np.zeros((m, K))
        for j, law in enumerate(offspring):
            counts[j, : len(law.probs)] = law.counts
            probs[j, : len(law.probs)] = law.probs
        return "table", counts, probs
    if all(isinstance(law, PoissonLaw) for law in offspring):
        return "poisson", np.array([law.means for law in offspring]), None
    return "mixed", None, None


def _check_restriction(law: OffspringLaw, restriction: Iterable[int], point) -> tuple:
    S = [int(c) for c in restriction]
    if not S:
        raise SpecError("restriction must be a non-empty colour subset")
    if any(not 0 <= c < law.m for c in S) or len(set(S)) != len(S):
        raise SpecError(f"invalid restriction {S} for {law.m} colours")
    point = np.asarray(point, dtype=float)
    if point.shape[-1:] != (len(S),):
        raise SpecError("point must have one coordinate per restricted colour")
    if np.any(point < -PROB_TOL) or np.any(point > 1 + PROB_TOL):
        raise SpecError("pgf arguments must lie in [0, 1]")
    z = np.ones(point.shape[:-1] + (law.m,))
    z[..., S] = np.clip(point, 0.0, 1.0)
    return S, z


def pgf_eval(law: OffspringLaw, restriction: Iterable[int], point) -> float:
    """Restricted pgf ``G_{j,S}`` of ``law`` evaluated at ``point``.

    Parameters
    ----------
    law : TableLaw or PoissonLaw
        The offspring law ``chi_j``.
    restriction : iterable of int
        The colour subset ``S`` (0-indexed); ``point`` is ordered like it.
    point : array_like
        Values ``(x_l : l in S)`` in ``[0, 1]``. A leading batch shape is allowed.
    """
    _, z = _check_restriction(law, restriction, point)
    out = law.pgf_full(z)
    return float(out) if np.ndim(out) == 0 else out


def pgf_partial(law: OffspringLaw, restriction: Iterable[int], index: int, point) -> float:
    """Partial derivative of ``G_{j,S}`` in colour ``index`` (which must be in ``S``)."""
    S, z = _check_restriction(law, restriction, point)
    if int(index) not in S:
        raise SpecError(f"colour {index} is not in the restriction {S}")
    out = law.pgf_grad_full(z, int(index))
    return float(out) if np.ndim(out) == 0 else out


def alpha_beta(spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """``alpha_j = G_{j,S_j}(0)`` and ``beta_j = G_{j,[m]-S_j}(0)``."""
    zeros = np.zeros(spec.m)
    alpha = spec.restricted_pgfs(spec.mask, zeros)
    beta = spec.restricted_pgfs(~spec.mask, zeros)
    return alpha, beta


def mean_vector(law: OffspringLaw) -> np.ndarray:
    return law.mean_vector()


def tv_distance(a: OffspringLaw, b: OffspringLaw) -> tuple[float, float]:
    """Total variation distance between two offspring laws.

    Returns ``(value, slack)``. Two tables are compared exactly (slack 0).
    If a Poisson law is involved, both laws are tabulated on a box that holds
    all but ``slack`` of the Poisson mass; the returned value already includes
    the slack, so it is an upper bound within ``slack`` of the exact distance.
    """
    if a.m != b.m:
        raise SpecError("laws have different numbers of colours")
    if isinstance(a, TableLaw) and isinstance(b, TableLaw):
        rows = np.concatenate([a.counts, b.counts])
        uniq, inv = np.unique(rows, axis=0, return_inverse=True)
        inv = inv.ravel()
        pa = np.zeros(len(uniq))
        pb = np.zeros(len(uniq))
        np.add.at(pa, inv[: len(a.probs)], a.probs)
        np.add.at(pb, inv[len(a.probs):], b.probs)
        return 0.5 * float(np.abs(pa - pb).sum()), 0.0
    shape = np.zeros(a.m, dtype=np.int64)
    slack = 0.0
    for law in (a, b):
        if isinstance(law, PoissonLaw):
            cut = law.truncation()
            shape = np.maximum(shape, cut + 1)
        else:
            shape = np.maximum(shape, law.counts.max(axis=0) + 1)
    for law in (a, b):
        if isinstance(law, PoissonLaw):
            slack += law.tail_bound(shape - 1)
    if np.prod(shape, dtype=float) > 5e7:
        raise SpecError("Poisson laws too spread out for tabulated TV distance")
    da = a.dense(tuple(shape))
    db = b.dense(tuple(shape))
    return 0.5 * float(np.abs(da - db).sum()) + slack, slack


def d0_distance(spec_a: ModelSpec, spec_b: ModelSpec) -> float:
    """``max_j ||chi_j - eta_j||_TV`` between two specs with the same rules."""
    if spec_a.m != spec_b.m:
        raise SpecError("specs have different numbers of colours")
    if spec_a.permissible != spec_b.permissible:
        raise SpecError("specs have different permissible sets")
    return max(tv_distance(a, b)[0] for a, b in zip(spec_a.offspring, spec_b.offspring))


# -- JSON spec files ---------------------------------------------------------

def law_from_dict(d: dict, m: int) -> OffspringLaw:
    if "table" in d:
        rows = d["table"]
        if not rows:
            raise SpecError("empty offspring table")
        counts = [r["counts"] for r in rows]
        if any(len(c) != m for c in counts):
            raise SpecError(f"every counts entry needs {m} components")
        return TableLaw(np.array(counts), np.array([r["prob"] for r in rows], dtype=float))
    if "poisson" in d:
        means = d["poisson"]["means"]
        if len(means) != m:
            raise SpecError(f"poisson means need {m} components")
        return PoissonLaw(np.array(means, dtype=float))
    raise SpecError("offspring entry must have a 'table' or 'poisson' key")


def law_to_dict(law: OffspringLaw) -> dict:
    if isinstance(law, TableLaw):
        return {
            "table": [
                {"counts": [int(c) for c in row], "prob": float(p)}
                for row, p in zip(law.counts, law.probs)
            ]
        }
    return {"poisson": {"means": [float(x) for x in law.means]}}


def spec_from_dict(d: dict) -> ModelSpec:
    try:
        m = int(d["m"])
        perm = [[int(c) - 1 for c in s] for s in d["permissible"]]
        offspring = [law_from_dict(o, m) for o in d["offspring"]]
        root = np.array(d["root_law"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise SpecError(f"malformed spec: {exc!r}") from exc
    if len(offspring) != m:
        raise SpecError(f"expected {m} offspring laws, got {len(offspring)}")
    return ModelSpec(root, tuple(offspring), tuple(perm))


def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "m": spec.m,
        "root_law": [float(p) for p in spec.root_law],
        "permissible": [sorted(c + 1 for c in s) for s in spec.permissible],
        "offspring": [law_to_dict(law) for law in spec.offspring],
    }


def load_spec(path: Union[str, Path]) -> ModelSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from exc
    return spec_from_dict(data)


def dump_spec(spec: ModelSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2)


def monochrome_sets(m: int) -> tuple:
    """``S_j = {j}`` for every colour."""
    return tuple(frozenset([j]) for j in range(m))


def childless_spec(m: int = 2) -> ModelSpec:
    law = TableLaw.point_mass([0] * m)
    return ModelSpec(np.full(m, 1.0 / m), (law,) * m, monochrome_sets(m))


# -- random specs for sweeps -------------------------------------------------

def random_permissible(rng: np.random.Generator, m: int) -> tuple:
    """Random non-empty proper subsets, one per colour."""
    sets = []
    for _ in range(m):
        while True:
            pick = rng.random(m) < 0.5
            if 0 < pick.sum() < m:
                sets.append(frozenset(np.flatnonzero(pick).tolist()))
                break
    return tuple(sets)


def random_table_spec(rng: np.random.Generator, m: int | None = None, support: int = 3,
                      max_count: int = 2) -> ModelSpec:
    """Table laws with ``support`` random rows of counts in ``0..max_count``."""
    if m is None:
        m = int(rng.integers(2, 4))
    laws = []
    for _ in range(m):
        rows = rng.integers(0, max_count + 1, size=(support, m))
        laws.append(TableLaw(rows, rng.dirichlet(np.ones(support))))
    return ModelSpec(rng.dirichlet(np.ones(m)), tuple(laws), random_permissible(rng, m))


def random_poisson_spec(rng: np.random.Generator, m: int | None = None,
                        max_mean: float = 3.0) -> ModelSpec:
    if m is None:
        m = int(rng.integers(2, 4))
    laws = tuple(PoissonLaw(rng.uniform(0, max_mean, size=m)) for _ in range(m))
    return ModelSpec(rng.dirichlet(np.ones(m)), laws, random_permissible(rng, m))
