"""
Interaction logs and dataset preprocessing.

An :class:`InteractionLog` holds unique (user, item, rating) triples together
with the feedback-loop iteration in which each one was added (0 for the
original data).  Logs are immutable; every operation returns a new log.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from functools import cached_property
from os import PathLike
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    DataParseError,
    DuplicateInteractionError,
    InvariantViolation,
    MissingGroupError,
)
from .seeding import rng

_log = logging.getLogger(__name__)

DEFAULT_RATING_SCALE = (1.0, 5.0)

#: Mapping from user id to sensitive-group label.
GroupAssignment = dict[int, str]


class Interaction(NamedTuple):
    user_id: int
    item_id: int
    rating: float
    iteration_added: int = 0


def _pair_keys(users: np.ndarray, items: np.ndarray) -> np.ndarray:
    # ids are non-negative and < 2**31 for every supported dataset
    return (users.astype(np.int64) << 32) | items.astype(np.int64)


@dataclass(frozen=True, eq=False)
class InteractionLog:
    """
    Append-only log of unique user-item interactions.

    Column arrays are parallel; row order is insertion order.  Construction
    validates pair uniqueness and rating bounds.
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    iterations: np.ndarray
    rating_scale: tuple[float, float] = DEFAULT_RATING_SCALE

    def __post_init__(self):
        users = np.ascontiguousarray(self.users, dtype=np.int64)
        items = np.ascontiguousarray(self.items, dtype=np.int64)
        ratings = np.ascontiguousarray(self.ratings, dtype=np.float64)
        iters = np.ascontiguousarray(self.iterations, dtype=np.int64)
        n = len(users)
        if not (len(items) == len(ratings) == len(iters) == n):
            raise InvariantViolation("interaction columns have different lengths")
        lo, hi = float(self.rating_scale[0]), float(self.rating_scale[1])
        if lo > hi:
            raise InvariantViolation(f"invalid rating scale {self.rating_scale}")
        if n:
            if users.min() < 0 or items.min() < 0:
                raise InvariantViolation("user and item ids must be non-negative")
            bad = (ratings < lo) | (ratings > hi) | ~np.isfinite(ratings)
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                raise InvariantViolation(
                    f"rating {ratings[j]} for ({users[j]}, {items[j]}) outside scale [{lo}, {hi}]"
                )
            if iters.min() < 0:
                raise InvariantViolation("iteration_added must be non-negative")
            keys = _pair_keys(users, items)
            order = np.argsort(keys, kind="stable")
            dup = np.flatnonzero(keys[order][1:] == keys[order][:-1])
            if len(dup):
                j = order[dup[0] + 1]
                raise DuplicateInteractionError(
                    f"duplicate interaction for user {users[j]}, item {items[j]}"
                )
        for name, arr in [("users", users), ("items", items), ("ratings", ratings), ("iterations", iters)]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rating_scale", (lo, hi))

    @classmethod
    def from_interactions(
        cls, interactions: Iterable[Interaction], rating_scale=DEFAULT_RATING_SCALE
    ) -> InteractionLog:
        rows = list(interactions)
        if not rows:
            return cls.empty(rating_scale)
        u, i, r, t = zip(*rows)
        return cls(np.array(u), np.array(i), np.array(r, dtype=np.float64), np.array(t), rating_scale)

    @classmethod
    def empty(cls, rating_scale=DEFAULT_RATING_SCALE) -> InteractionLog:
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, np.zeros(0), z, rating_scale)

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[Interaction]:
        for u, i, r, t in zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist(), self.iterations.tolist()):
            yield Interaction(u, i, r, t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionLog):
            return NotImplemented
        return (
            self.rating_scale == other.rating_scale
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
            and np.array_equal(self.iterations, other.iterations)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"<InteractionLog {len(self)} interactions, {self.n_users} users, {self.n_items} items>"

    @cached_property
    def user_ids(self) -> np.ndarray:
        "Sorted distinct user ids."
        return np.unique(self.users)

    @cached_property
    def item_ids(self) -> np.ndarray:
        "Sorted distinct item ids (the log's item universe)."
        return np.unique(self.items)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def max_iteration(self) -> int:
        return int(self.iterations.max()) if len(self) else 0

    @cached_property
    def pair_keys(self) -> np.ndarray:
        "Sorted packed (user, item) keys for vectorized membership tests."
        return np.sort(_pair_keys(self.users, self.items))

    def contains(self, users, items) -> np.ndarray:
        "Boolean mask: which of the given pairs are already in the log."
        keys = _pair_keys(np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64))
        if not len(self.pair_keys):
            return np.zeros(len(keys), dtype=bool)
        pos = np.minimum(np.searchsorted(self.pair_keys, keys), len(self.pair_keys) - 1)
        return self.pair_keys[pos] == keys

    @cached_property
    def _user_rows(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.lexsort((self.items, self.users))
        bounds = np.searchsorted(self.users[order], self.user_ids)
        return order, np.append(bounds, len(order))

    def profile(self, user: int) -> np.ndarray:
        "Items in a user's profile, ascending.  Empty for unknown users."
        order, bounds = self._user_rows
        k = np.searchsorted(self.user_ids, user)
        if k >= len(self.user_ids) or self.user_ids[k] != user:
            return np.zeros(0, dtype=np.int64)
        return self.items[order[bounds[k] : bounds[k + 1]]]

    def profiles(self) -> dict[int, np.ndarray]:
        "Map every user to the ascending array of items they interacted with."
        order, bounds = self._user_rows
        items = self.items[order]
        return {u: items[bounds[k] : bounds[k + 1]] for k, u in enumerate(self.user_ids.tolist())}

    def profile_sizes(self) -> dict[int, int]:
        _, bounds = self._user_rows
        return dict(zip(self.user_ids.tolist(), np.diff(bounds).tolist()))

    def select(self, mask: np.ndarray) -> InteractionLog:
        "Sub-log of the rows where ``mask`` is true, order preserved."
        return InteractionLog(
            self.users[mask], self.items[mask], self.ratings[mask], self.iterations[mask], self.rating_scale
        )

    def restrict_users(self, users) -> InteractionLog:
        keep = np.asarray(sorted(users), dtype=np.int64)
        return self.select(np.isin(self.users, keep))

    def extend(self, users, items, ratings, iteration: int) -> InteractionLog:
        "Array form of :func:`append_interactions`."
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        ratings = np.asarray(ratings, dtype=np.float64)
        if not len(users):
            return self
        if iteration < self.max_iteration:
            raise InvariantViolation(
                f"cannot append at iteration {iteration}; log already reaches {self.max_iteration}"
            )
        present = self.contains(users, items)
        if present.any():
            j = int(np.flatnonzero(present)[0])
            raise DuplicateInteractionError(
                f"appended pair (user {users[j]}, item {items[j]}) already in the log"
            )
        return InteractionLog(
            np.concatenate([self.users, users]),
            np.concatenate([self.items, items]),
            np.concatenate([self.ratings, ratings]),
            np.concatenate([self.iterations, np.full(len(users), iteration, dtype=np.int64)]),
            self.rating_scale,
        )

    def digest(self) -> str:
        "SHA-256 over the canonical content (row order and full float precision)."
        h = hashlib.sha256()
        h.update(np.asarray(self.rating_scale, dtype="<f8").tobytes())
        for arr, dt in [(self.users, "<i8"), (self.items, "<i8"), (self.ratings, "<f8"), (self.iterations, "<i8")]:
            h.update(np.ascontiguousarray(arr, dtype=dt).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Parsing


def _check_exists(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DataParseError("file not found", path)
    return path


def parse_movielens(
    ratings_path: str | PathLike, users_path: str | PathLike, rating_scale=DEFAULT_RATING_SCALE
) -> tuple[InteractionLog, GroupAssignment]:
    """
    Parse the MovieLens 1M ``ratings.dat`` and ``users.dat`` files.

    Ratings lines are ``UserID::MovieID::Rating::Timestamp`` (timestamps are
    discarded); users lines are ``UserID::Gender::Age::Occupation::Zip``, and
    the gender field becomes the group label.

    Raises:
        DataParseError: on a malformed line (the line number is reported).
        DuplicateInteractionError: if a (user, movie) pair repeats.
        MissingGroupError: if a rating's user is absent from the users file.
    """
    ratings_path = _check_exists(ratings_path)
    users_path = _check_exists(users_path)

    groups: GroupAssignment = {}
    with open(users_path, encoding="latin-1") as f:
        for lno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("::")
            if len(fields) != 5:
                raise DataParseError(f"expected 5 '::'-separated fields, got {len(fields)}", users_path, lno)
            try:
                uid = int(fields[0])
            except ValueError:
                raise DataParseError(f"bad user id {fields[0]!r}", users_path, lno) from None
            label = fields[1].strip()
            if not label:
                raise DataParseError("empty gender field", users_path, lno)
            if uid in groups:
                raise DataParseError(f"user {uid} listed twice", users_path, lno)
            groups[uid] = label

    users, items, ratings = [], [], []
    seen: dict[tuple[int, int], int] = {}
    with open(ratings_path, encoding="latin-1") as f:
        for lno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("::")
            if len(fields) != 4:
                raise DataParseError(f"expected 4 '::'-separated fields, got {len(fields)}", ratings_path, lno)
            try:
                u, i, r = int(fields[0]), int(fields[1]), float(fields[2])
                int(fields[3])
            except ValueError as e:
                raise DataParseError(f"malformed ratings line ({e})", ratings_path, lno) from None
            if (u, i) in seen:
                raise DuplicateInteractionError(
                    f"{ratings_path}:{lno}: duplicate rating for user {u}, movie {i} (first on line {seen[u, i]})"
                )
            seen[u, i] = lno
            if u not in groups:
                raise MissingGroupError(f"{ratings_path}:{lno}: user {u} not present in {users_path}")
            users.append(u)
            items.append(i)
            ratings.append(r)

    n = len(users)
    log = InteractionLog(
        np.array(users, dtype=np.int64),
        np.array(items, dtype=np.int64),
        np.array(ratings, dtype=np.float64),
        np.zeros(n, dtype=np.int64),
        rating_scale,
    )
    present = set(log.user_ids.tolist())
    return log, {u: g for u, g in groups.items() if u in present}


@dataclass
class IdDictionary:
    """
    Dense integer ids for external string ids, assigned in first-seen order.

    Pre-loading a persisted dictionary keeps ids stable across runs.
    """

    mapping: dict[str, int]

    def __init__(self, mapping: Mapping[str, int] | None = None):
        self.mapping = dict(mapping or {})

    def __len__(self):
        return len(self.mapping)

    def __getitem__(self, key: str) -> int:
        return self.mapping[key]

    def __contains__(self, key) -> bool:
        return key in self.mapping

    def get(self, key: str, default=None):
        return self.mapping.get(key, default)

    def intern(self, key: str) -> int:
        idx = self.mapping.get(key)
        if idx is None:
            idx = len(self.mapping)
            self.mapping[key] = idx
        return idx

    def save(self, path: str | PathLike):
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["external_id", "dense_id"])
            for key, idx in sorted(self.mapping.items(), key=lambda kv: kv[1]):
                w.writerow([key, idx])

    @classmethod
    def load(cls, path: str | PathLike) -> IdDictionary:
        path = _check_exists(path)
        mapping: dict[str, int] = {}
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r, None)
            if header != ["external_id", "dense_id"]:
                raise DataParseError(f"expected header external_id,dense_id, got {header}", path, 1)
            for lno, row in enumerate(r, 2):
                if len(row) != 2:
                    raise DataParseError("expected 2 fields", path, lno)
                try:
                    mapping[row[0]] = int(row[1])
                except ValueError:
                    raise DataParseError(f"bad dense id {row[1]!r}", path, lno) from None
        if sorted(mapping.values()) != list(range(len(mapping))):
            raise DataParseError("dense ids are not a permutation of 0..n-1", path)
        return cls(mapping)


def parse_yelp(
    reviews_path: str | PathLike,
    user_ids: IdDictionary | None = None,
    item_ids: IdDictionary | None = None,
    rating_scale=DEFAULT_RATING_SCALE,
) -> InteractionLog:
    """
    Parse a Yelp reviews JSON-lines file into an interaction log.

    Each record must carry ``user_id``, ``business_id`` and ``stars``.  String
    ids are interned into ``user_ids`` / ``item_ids`` (created fresh if not
    given, so pass them in to persist the mapping).  When a (user, business)
    pair is reviewed more than once, the last record's stars are kept.
    """
    reviews_path = _check_exists(reviews_path)
    if user_ids is None:
        user_ids = IdDictionary()
    if item_ids is None:
        item_ids = IdDictionary()

    latest: dict[tuple[int, int], float] = {}
    with open(reviews_path, encoding="utf-8") as f:
        for lno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                uid, bid, stars = rec["user_id"], rec["business_id"], float(rec["stars"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataParseError(f"malformed review record ({e})", reviews_path, lno) from None
            key = (user_ids.intern(str(uid)), item_ids.intern(str(bid)))
            # re-insert so insertion order follows the last occurrence
            latest.pop(key, None)
            latest[key] = stars

    if not latest:
        return InteractionLog.empty(rating_scale)
    pairs = np.array(list(latest.keys()), dtype=np.int64)
    stars = np.fromiter(latest.values(), dtype=np.float64, count=len(latest))
    return InteractionLog(pairs[:, 0], pairs[:, 1], stars, np.zeros(len(stars), dtype=np.int64), rating_scale)


def load_groups(csv_path: str | PathLike, user_ids: IdDictionary | None = None) -> GroupAssignment:
    """
    Read a ``user_id,group`` CSV into a group assignment.

    If ``user_ids`` is given, the CSV holds external ids, which are translated
    through the dictionary; rows for users the dictionary does not know are
    dropped.  Otherwise user ids must be integers.
    """
    csv_path = _check_exists(csv_path)
    groups: GroupAssignment = {}
    with open(csv_path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header is None or [h.strip() for h in header] != ["user_id", "group"]:
            raise DataParseError(f"expected header 'user_id,group', got {header}", csv_path, 1)
        for lno, row in enumerate(r, 2):
            if not row:
                continue
            if len(row) != 2:
                raise DataParseError(f"expected 2 fields, got {len(row)}", csv_path, lno)
            raw, label = row[0].strip(), row[1].strip()
            if not label:
                raise DataParseError("empty group label", csv_path, lno)
            if user_ids is not None:
                uid = user_ids.get(raw)
                if uid is None:
                    continue
            else:
                try:
                    uid = int(raw)
                except ValueError:
                    raise DataParseError(f"bad user id {raw!r}", csv_path, lno) from None
            if uid in groups:
                raise InvariantViolation(f"{csv_path}:{lno}: duplicate group row for user {raw}")
            groups[uid] = label
    return groups


def save_groups(groups: Mapping[int, str], path: str | PathLike):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["user_id", "group"])
        for u in sorted(groups):
            w.writerow([u, groups[u]])


def check_groups(log: InteractionLog, groups: Mapping[int, str], required: Iterable[str] = ()):
    """
    Verify that ``groups`` is total over the log's users and that every label
    in ``required`` has at least one user.
    """
    missing = [u for u in log.user_ids.tolist() if u not in groups]
    if missing:
        raise MissingGroupError(
            f"{len(missing)} user(s) without a group label, e.g. {missing[:5]}"
        )
    present = {groups[u] for u in log.user_ids.tolist()}
    absent = [g for g in required if g not in present]
    if absent:
        raise MissingGroupError(f"no users in group(s) {absent}; labels present: {sorted(present)}")


# ---------------------------------------------------------------------------
# Preprocessing


def k_core_filter(log: InteractionLog, k: int) -> InteractionLog:
    """
    Iteratively drop users and items with fewer than ``k`` interactions.

    The result is the largest sub-log in which every remaining user and item
    has at least ``k`` interactions; it may be empty.
    """
    if k < 1:
        raise ValueError("k must be positive")
    keep = np.ones(len(log), dtype=bool)
    _, uinv = np.unique(log.users, return_inverse=True)
    _, iinv = np.unique(log.items, return_inverse=True)
    while True:
        ucount = np.bincount(uinv[keep], minlength=uinv.max() + 1 if len(uinv) else 0)
        icount = np.bincount(iinv[keep], minlength=iinv.max() + 1 if len(iinv) else 0)
        ok = keep & (ucount[uinv] >= k) & (icount[iinv] >= k)
        if np.array_equal(ok, keep):
            break
        keep = ok
    if keep.all():
        return log
    return log.select(keep)


def sample_users(log: InteractionLog, n: int, seed: int) -> InteractionLog:
    "Keep all interactions of ``min(n, N_U)`` users drawn uniformly without replacement."
    if n < 1:
        raise ValueError("n must be positive")
    if n >= log.n_users:
        return log
    chosen = rng(seed).choice(log.user_ids, size=n, replace=False)
    return log.select(np.isin(log.users, chosen))


def density(log: InteractionLog) -> float:
    "Observed interactions divided by ``N_U * n``."
    if not len(log):
        raise InvariantViolation("density of an empty log is undefined")
    return len(log) / (log.n_users * log.n_items)


def split_train_test(
    log: InteractionLog, test_fraction: float = 0.2, seed: int = 0
) -> tuple[InteractionLog, InteractionLog]:
    """
    Per-user random split.

    Each user contributes ``ceil(test_fraction * |p_u|)`` interactions to the
    test log (capped so that at least one stays in training).  Row order
    within each output follows the input log.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    if not len(log):
        return log, log
    uids, uinv, counts = np.unique(log.users, return_inverse=True, return_counts=True)
    if counts.min() < 2:
        bad = uids[np.flatnonzero(counts < 2)[:5]].tolist()
        raise InvariantViolation(
            f"users {bad} have fewer than 2 interactions; apply k_core_filter before splitting"
        )
    n_test = np.array([math.ceil(round(test_fraction * c, 9)) for c in counts.tolist()], dtype=np.int64)
    n_test = np.minimum(n_test, counts - 1)

    keys = rng(seed).random(len(log))
    order = np.lexsort((keys, uinv))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.empty(len(log), dtype=np.int64)
    rank[order] = np.arange(len(log)) - np.repeat(starts, counts)
    test = rank < n_test[uinv]
    return log.select(~test), log.select(test)


def append_interactions(log: InteractionLog, new: Iterable[Interaction], iteration: int) -> InteractionLog:
    """
    Append new interactions, stamping them with ``iteration``.

    Raises:
        DuplicateInteractionError: if any new pair is already in the log or
            repeated within ``new``.  This always indicates a simulator bug.
    """
    rows = list(new)
    if not rows:
        return log
    u = np.array([r.user_id for r in rows], dtype=np.int64)
    i = np.array([r.item_id for r in rows], dtype=np.int64)
    r = np.array([r.rating for r in rows], dtype=np.float64)
    return log.extend(u, i, r, iteration)


# ---------------------------------------------------------------------------
# Canonical CSV interchange


def save_interactions(log: InteractionLog, path: str | PathLike):
    "Write ``user_id,item_id,rating,iteration_added`` with round-trip-exact floats."
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["user_id", "item_id", "rating", "iteration_added"])
        for row in log:
            w.writerow([row.user_id, row.item_id, repr(row.rating), row.iteration_added])


def load_interactions(path: str | PathLike, rating_scale=DEFAULT_RATING_SCALE) -> InteractionLog:
    path = _check_exists(path)
    users, items, ratings, iters = [], [], [], []
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header != ["user_id", "item_id", "rating", "iteration_added"]:
            raise DataParseError(f"unexpected header {header}", path, 1)
        for lno, row in enumerate(r, 2):
            if not row:
                continue
            if len(row) != 4:
                raise DataParseError(f"expected 4 fields, got {len(row)}", path, lno)
            try:
                users.append(int(row[0]))
                items.append(int(row[1]))
                ratings.append(float(row[2]))
                iters.append(int(row[3]))
            except ValueError as e:
                raise DataParseError(str(e), path, lno) from None
    return InteractionLog(
        np.array(users, dtype=np.int64),
        np.array(items, dtype=np.int64),
        np.array(ratings, dtype=np.float64),
        np.array(iters, dtype=np.int64),
        rating_scale,
    )
