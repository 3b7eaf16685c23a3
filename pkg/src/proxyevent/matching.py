"""Set-level training loss: proxy/gold distances and one-to-one matching."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, add, mean, neg_log, take, tsum
from .diffcore.tensor import DimensionError

NULL = 0


class ConfigurationError(ValueError):
    pass


class NonFiniteCostError(ValueError):
    pass


@dataclass(frozen=True)
class Assignment:
    cols: tuple[int, ...]  # cols[row] = matched column
    cost: float

    def pairs(self) -> list[tuple[int, int]]:
        return list(enumerate(self.cols))


@dataclass
class GoldEventSet:
    """Gold events padded with null events up to the proxy count.

    ``arg_labels[j, k]`` is the role index of unique entity ``k`` in event
    ``j`` (0 = null).
    """

    types: np.ndarray
    arg_labels: np.ndarray
    is_null: np.ndarray

    def __len__(self) -> int:
        return len(self.types)

    @property
    def num_real(self) -> int:
        return int((~self.is_null).sum())


def pad_gold(types, arg_labels, n: int) -> GoldEventSet:
    types = np.asarray(types, dtype=np.int64).reshape(-1)
    m = len(types)
    arg_labels = np.asarray(arg_labels, dtype=np.int64)
    if arg_labels.ndim != 2 or arg_labels.shape[0] != m:
        arg_labels = arg_labels.reshape(m, -1)
    if m > n:
        raise ConfigurationError(
            f"document has {m} gold events but only {n} proxy nodes; increase the proxy count"
        )
    num_entities = arg_labels.shape[1]
    pad = n - m
    return GoldEventSet(
        types=np.concatenate([types, np.zeros(pad, dtype=np.int64)]),
        arg_labels=np.concatenate([arg_labels, np.zeros((pad, num_entities), dtype=np.int64)]),
        is_null=np.concatenate([np.zeros(m, dtype=bool), np.ones(pad, dtype=bool)]),
    )


# ---------------------------------------------------------------- distances


def pair_distance(type_probs: Tensor, arg_probs: Tensor, gold_type: int, gold_args) -> Tensor:
    """Type cross-entropy plus mean per-entity argument cross-entropy.

    ``type_probs`` is (C+1,), ``arg_probs`` is (E, A+1), ``gold_args`` is (E,).
    With no entities the argument term is zero.
    """
    gold_args = np.asarray(gold_args, dtype=np.int64).reshape(-1)
    if arg_probs.ndim != 2 or arg_probs.shape[0] != len(gold_args):
        raise DimensionError(f"pair_distance: arg_probs {arg_probs.shape} vs {len(gold_args)} gold labels")
    d = neg_log(take(type_probs, int(gold_type)))
    if len(gold_args) == 0:
        return d
    picked = take(arg_probs, (np.arange(len(gold_args)), gold_args))
    return add(d, mean(neg_log(picked)))


def cost_matrix(type_probs: Tensor, arg_probs: Tensor, gold: GoldEventSet) -> Tensor:
    """All proxy x gold distances at once; shape (n, m)."""
    n = type_probs.shape[0]
    m = len(gold)
    num_entities = gold.arg_labels.shape[1]
    type_term = neg_log(take(type_probs, (slice(None), gold.types)))  # (n, m)
    if num_entities == 0:
        return type_term
    if arg_probs.shape[:2] != (n, num_entities):
        raise DimensionError(f"cost_matrix: arg_probs {arg_probs.shape} vs (n={n}, E={num_entities})")
    rows = np.arange(n)[:, None, None]
    ents = np.arange(num_entities)[None, None, :]
    labels = gold.arg_labels[None, :, :]  # (1, m, E)
    picked = take(arg_probs, (rows, ents, labels))  # (n, m, E)
    arg_term = mean(neg_log(picked), axis=2)
    assert arg_term.shape == (n, m)
    return add(type_term, arg_term)


def avg_hausdorff(cost) -> float:
    """Mean nearest-neighbour distance in both directions (diagnostic only)."""
    c = np.asarray(cost.data if isinstance(cost, Tensor) else cost, dtype=np.float64)
    if c.ndim != 2 or c.size == 0:
        raise ValueError(f"avg_hausdorff needs a nonempty matrix, got shape {c.shape}")
    return float(c.min(axis=1).mean() + c.min(axis=0).mean())


# ---------------------------------------------------------------- assignment


def solve_assignment(cost) -> Assignment:
    """Exact minimum-cost perfect matching on a square matrix.

    Kuhn-Munkres with potentials, O(n^3). Among all optimal matchings the
    lexicographically smallest column sequence is returned.
    """
    c = np.asarray(cost.data if isinstance(cost, Tensor) else cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"solve_assignment needs a square matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise NonFiniteCostError("solve_assignment: cost matrix has non-finite entries")
    n = c.shape[0]
    if n == 0:
        return Assignment((), 0.0)
    u, v, match_row = _hungarian(c)
    cols = _lex_smallest(c, u, v, match_row)
    total = float(sum(c[i, j] for i, j in enumerate(cols)))
    return Assignment(tuple(cols), total)


def _hungarian(c: np.ndarray):
    n = c.shape[0]
    rows = c.tolist()
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j] = row (1-based) owning column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    match_row = [0] * n
    for j in range(1, n + 1):
        match_row[p[j] - 1] = j - 1
    return np.array(u[1:]), np.array(v[1:]), match_row


def _lex_smallest(c: np.ndarray, u: np.ndarray, v: np.ndarray, match_row: list[int]) -> list[int]:
    """Walk rows in order, taking the smallest column still completable.

    Every perfect matching inside the equality subgraph (zero reduced cost)
    is optimal, so lexicographic minimality is a pure matching question.
    """
    n = len(match_row)
    reduced = c - u[:, None] - v[None, :]
    tol = 1e-10 * max(1.0, float(np.abs(c).max()))
    tight = reduced <= tol
    match_row = list(match_row)
    match_col = [0] * n
    for i, j in enumerate(match_row):
        match_col[j] = i
    fixed_col = [False] * n

    def augment(row: int, freed: int, blocked: int, seen: list[bool]) -> bool:
        for col in range(n):
            if not tight[row, col] or fixed_col[col] or col == blocked or seen[col]:
                continue
            seen[col] = True
            if col == freed or augment(match_col[col], freed, blocked, seen):
                match_row[row] = col
                match_col[col] = row
                return True
        return False

    for i in range(n):
        for j in range(n):
            if fixed_col[j] or not tight[i, j]:
                continue
            if match_row[i] == j:
                break
            saved_row, saved_col = list(match_row), list(match_col)
            freed = match_row[i]
            other = match_col[j]
            match_row[i] = j
            match_col[j] = i
            # column ``freed`` is now open; ``other`` must reach it by an alternating path
            if augment(other, freed, j, [False] * n):
                break
            match_row, match_col = saved_row, saved_col
        fixed_col[match_row[i]] = True
    return match_row


def brute_force_assignment(cost) -> Assignment:
    """Exhaustive search over permutations; reference for small matrices."""
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    best = None
    for perm in itertools.permutations(range(n)):
        total = float(c[np.arange(n), perm].sum())
        if best is None or total < best.cost:
            best = Assignment(tuple(perm), total)
    return best


# ---------------------------------------------------------------- losses


def matched_sum(cost: Tensor, assignment: Assignment) -> Tensor:
    """Sum of the selected entries; gradient reaches only the matched cells."""
    rows = np.arange(len(assignment.cols))
    cols = np.asarray(assignment.cols, dtype=np.int64)
    return tsum(take(cost, (rows, cols)))


def constrained_hausdorff(type_probs: Tensor, arg_probs: Tensor, gold: GoldEventSet,
                          assignment: Assignment | None = None) -> tuple[Tensor, Tensor, Assignment]:
    """Return (loss, cost matrix, assignment).

    The assignment is recomputed from the current costs unless one is
    supplied and is held fixed for the backward pass.
    """
    if len(gold) != type_probs.shape[0]:
        raise DimensionError(f"padded gold has {len(gold)} events but there are {type_probs.shape[0]} proxies")
    cost = cost_matrix(type_probs, arg_probs, gold)
    if assignment is None:
        assignment = solve_assignment(cost.data)
    return matched_sum(cost, assignment), cost, assignment


def total_loss(d_hat: Tensor, entity_loss: Tensor) -> Tensor:
    return add(d_hat, entity_loss)
