"""
Popularity-bias metrics.

Everything here is a pure function of explicit snapshots (logs, popularity
tables, recommendation lists); nothing reads shared state.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .dataset import InteractionLog
from .errors import MetricError


@dataclass(frozen=True, eq=False)
class PopularityTable:
    """
    Item popularity scores: the fraction of users who interacted with each item.

    Attributes:
        item_ids: sorted item ids.
        scores: popularity score for each entry of ``item_ids``.
        n_users: the user count used as denominator.
    """

    item_ids: np.ndarray
    scores: np.ndarray
    n_users: int

    def __len__(self):
        return len(self.item_ids)

    def __getitem__(self, item: int) -> float:
        return float(self.lookup([item])[0])

    def __contains__(self, item) -> bool:
        k = np.searchsorted(self.item_ids, item)
        return bool(k < len(self.item_ids) and self.item_ids[k] == item)

    def lookup(self, items: ArrayLike) -> np.ndarray:
        "Vectorized score lookup; raises :class:`MetricError` on unknown items."
        items = np.asarray(items, dtype=np.int64)
        if not len(self.item_ids):
            if len(items):
                raise MetricError(f"item {items[0]} has no popularity score")
            return np.zeros(0)
        pos = np.minimum(np.searchsorted(self.item_ids, items), len(self.item_ids) - 1)
        bad = self.item_ids[pos] != items
        if bad.any():
            raise MetricError(f"item {items[np.flatnonzero(bad)[0]]} has no popularity score")
        return self.scores[pos]

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.item_ids.tolist(), self.scores.tolist()))


def popularity_scores(log: InteractionLog, item_universe: ArrayLike | None = None) -> PopularityTable:
    """
    Compute ``phi_i = N_i / N_U`` for every item in the log, where ``N_i`` is
    the number of distinct users who interacted with ``i`` and ``N_U`` the
    number of distinct users in the log.

    Args:
        item_universe: optional wider set of items to score; items the log
            never touches get a score of 0.
    """
    if not len(log):
        raise MetricError("popularity is undefined for an empty log")
    # pairs are unique, so per-item row counts are distinct-user counts
    items, counts = np.unique(log.items, return_counts=True)
    n_users = log.n_users
    if item_universe is not None:
        universe = np.union1d(np.asarray(item_universe, dtype=np.int64), items)
        full = np.zeros(len(universe))
        full[np.searchsorted(universe, items)] = counts
        items, counts = universe, full
    return PopularityTable(items, counts / n_users, n_users)


def gini(values: ArrayLike) -> float:
    """
    Gini coefficient of a non-negative distribution.

    Uses the ascending-rank form ``sum((2i - n - 1) x_i) / (n sum(x))`` with
    1-based ranks ``i``, which ranges over ``[0, (n - 1) / n]``.

    Raises:
        MetricError: for empty input, negative values or a zero total.
    """
    xs = np.asarray(values, dtype=np.float64)
    n = len(xs)
    if n == 0:
        raise MetricError("Gini coefficient of an empty distribution")
    if np.any(xs < 0):
        raise MetricError("Gini coefficient requires non-negative values")
    total = xs.sum()
    if total <= 0:
        raise MetricError("Gini coefficient undefined when all values are zero")
    xs = np.sort(xs)
    ranks = 2.0 * np.arange(1, n + 1) - n - 1
    return float(np.dot(ranks, xs) / (n * total))


def within_group_gini(
    log: InteractionLog, groups: Mapping[int, str], labels: Iterable[str] | None = None
) -> dict[str, float]:
    """
    Gini coefficient of each group's own item-popularity distribution.

    The log is split into one sub-log per group; popularity is recomputed on
    each sub-log (so ``N_U`` is the group's user count and only items the
    group touched are scored), and the Gini coefficient is taken over it.

    Args:
        labels: groups to report; defaults to every label present in the log.
    """
    by_group = _users_by_group(log, groups)
    if labels is None:
        labels = sorted(by_group)
    out = {}
    for g in labels:
        users = by_group.get(g)
        if not users:
            raise MetricError(f"group {g!r} has no interactions")
        sub = log.restrict_users(users)
        out[g] = gini(popularity_scores(sub).scores)
    return out


def gap(
    profiles: Mapping[int, Sequence[int] | np.ndarray],
    popularity: PopularityTable,
    group_users: Iterable[int],
) -> float:
    """
    Group average popularity: the mean over the group's users of the mean
    popularity of the items in each user's list.

    ``profiles`` may hold observed profiles (giving the profile GAP) or
    recommendation lists (giving the recommendation GAP).
    """
    users = list(group_users)
    if not users:
        raise MetricError("GAP of an empty group")
    means = np.empty(len(users))
    for k, u in enumerate(users):
        items = profiles.get(u)
        if items is None or len(items) == 0:
            raise MetricError(f"user {u} has an empty profile")
        means[k] = popularity.lookup(items).mean()
    return float(means.mean())


@dataclass(frozen=True)
class GroupMetricValue:
    """
    One metric value for a group (``"M"``), a group pair (``"M|F"``) or the
    whole population (``"ALL"``).
    """

    metric: str
    group: str
    value: float


@dataclass(frozen=True)
class GapPair:
    "Profile and recommendation GAP of one group."

    gap_p: float
    gap_r: float


def delta_gap(pair: GapPair) -> float:
    "Relative change ``(GAP_r - GAP_p) / GAP_p``; 0 means calibrated."
    if pair.gap_p <= 0:
        raise MetricError("delta GAP is unbounded for a profile GAP of 0")
    return (pair.gap_r - pair.gap_p) / pair.gap_p


def delta_gap_revised(pair: GapPair) -> float:
    """
    Ratio of average item non-popularity, ``(1 - GAP_r) / (1 - GAP_p)``.

    1 means calibrated; below 1 the recommendations are more popular than the
    profiles, above 1 less popular.
    """
    if pair.gap_p >= 1:
        raise MetricError("revised delta GAP is unbounded for a profile GAP of 1")
    return (1.0 - pair.gap_r) / (1.0 - pair.gap_p)


def between_group_gap(dg_g: float, dg_h: float) -> float:
    "``|a - b| / mean(a, b)`` over two groups' revised delta GAP values; in [0, 2]."
    if dg_g < 0 or dg_h < 0:
        raise MetricError("between-group GAP requires non-negative inputs")
    mean = (dg_g + dg_h) / 2.0
    if mean <= 0:
        raise MetricError("between-group GAP undefined when both inputs are 0")
    return abs(dg_g - dg_h) / mean


def recommendation_frequencies(
    recs, users: Iterable[int], item_universe: ArrayLike
) -> np.ndarray:
    """
    Count how often each item of ``item_universe`` was recommended to
    ``users``.  Items outside the universe raise :class:`MetricError`.
    """
    universe = np.asarray(item_universe, dtype=np.int64)
    counts = np.zeros(len(universe))
    for u in users:
        lst = recs.get(u)
        if not lst:
            continue
        items = np.fromiter((i for i, _ in lst), dtype=np.int64, count=len(lst))
        pos = np.minimum(np.searchsorted(universe, items), len(universe) - 1)
        if np.any(universe[pos] != items):
            raise MetricError(f"recommended item outside the item universe for user {u}")
        np.add.at(counts, pos, 1.0)
    return counts


def group_cosine_similarity(
    recs, groups: Mapping[int, str], item_universe: ArrayLike, g: str, h: str
) -> float:
    """
    Cosine similarity of two groups' recommendation-frequency vectors.

    Each vector counts how often each item was recommended to the group and
    is normalised by the group's user count before the cosine is taken.

    Args:
        recs: mapping user -> list of ``(item, score)`` (e.g. a
            :class:`~popbias.recsys.RecommendationList`).
        item_universe: sorted item ids spanning the vectors.
    """
    universe = np.unique(np.asarray(item_universe, dtype=np.int64))
    vecs = []
    for label in (g, h):
        users = sorted(u for u, lab in groups.items() if lab == label)
        if not users:
            raise MetricError(f"group {label!r} has no users")
        v = recommendation_frequencies(recs, users, universe) / len(users)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise MetricError(f"group {label!r} received no recommendations")
        vecs.append(v / norm)
    return float(np.clip(np.dot(vecs[0], vecs[1]), 0.0, 1.0))


def _users_by_group(log: InteractionLog, groups: Mapping[int, str]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for u in log.user_ids.tolist():
        label = groups.get(u)
        if label is None:
            raise MetricError(f"user {u} has no group label")
        out.setdefault(label, []).append(u)
    return out


def group_users(log: InteractionLog, groups: Mapping[int, str], label: str) -> list[int]:
    "Users of the log carrying ``label``, ascending."
    return [u for u in log.user_ids.tolist() if groups.get(u) == label]
