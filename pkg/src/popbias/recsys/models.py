"""
Rating predictors, top-N recommendation and RMSE evaluation.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator, Mapping
from functools import cached_property

import numpy as np

from ..dataset import Interaction, InteractionLog
from ..errors import InvariantViolation
from ..seeding import rng
from . import _kernels
from .params import Hyperparams

_log = logging.getLogger(__name__)

_PAIR_CHUNK = 65536


def _lookup(ids: np.ndarray, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    "Positions of ``query`` in sorted ``ids`` and a mask of which were found."
    query = np.asarray(query, dtype=np.int64)
    if not len(ids):
        return np.zeros(len(query), dtype=np.int64), np.zeros(len(query), dtype=bool)
    pos = np.minimum(np.searchsorted(ids, query), len(ids) - 1)
    return pos, ids[pos] == query


class RatingModel:
    """
    Base class for trained predictors.

    Subclasses implement :meth:`_raw_pairs` and :meth:`_raw_block` over dense
    model indices; this class handles id translation, the global-mean fallback
    for unknown users/items, and clamping to the rating scale.
    """

    algorithm: str

    def __init__(self, params: Hyperparams, user_ids, item_ids, global_mean: float, rating_scale):
        self.params = params
        self.algorithm = params.algorithm
        self.user_ids = np.asarray(user_ids, dtype=np.int64)
        self.item_ids = np.asarray(item_ids, dtype=np.int64)
        self.global_mean = float(global_mean)
        self.rating_scale = (float(rating_scale[0]), float(rating_scale[1]))

    def __repr__(self):
        return f"<{type(self).__name__} {self.algorithm} {len(self.user_ids)}u x {len(self.item_ids)}i>"

    def _raw_pairs(self, uidx: np.ndarray, iidx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _raw_block(self, uidx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def clamp(self, x):
        return np.clip(x, *self.rating_scale)

    def predict_pairs(self, users, items) -> np.ndarray:
        "Clamped predictions for parallel arrays of user and item ids."
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        out = np.full(len(users), self.global_mean)
        upos, uok = _lookup(self.user_ids, users)
        ipos, iok = _lookup(self.item_ids, items)
        ok = np.flatnonzero(uok & iok)
        for s in range(0, len(ok), _PAIR_CHUNK):
            sel = ok[s : s + _PAIR_CHUNK]
            out[sel] = self._raw_pairs(upos[sel], ipos[sel])
        return self.clamp(out)

    def score_users(self, users, items) -> np.ndarray:
        """
        Clamped score matrix of shape ``(len(users), len(items))``.
        """
        upos, uok = _lookup(self.user_ids, users)
        ipos, iok = _lookup(self.item_ids, items)
        out = np.full((len(upos), len(ipos)), self.global_mean)
        rows = np.flatnonzero(uok)
        cols = np.flatnonzero(iok)
        if len(rows) and len(cols):
            block = self._raw_block(upos[rows])
            out[np.ix_(rows, cols)] = block[:, ipos[cols]]
        return self.clamp(out)


class BiasedMFModel(RatingModel):
    "Biased matrix factorization: ``mu + b_u + b_i + q_i . p_u``."

    def __init__(self, params, user_ids, item_ids, global_mean, rating_scale, bu, bi, P, Q):
        super().__init__(params, user_ids, item_ids, global_mean, rating_scale)
        self.user_bias = bu
        self.item_bias = bi
        self.user_factors = P
        self.item_factors = Q

    def _raw_pairs(self, uidx, iidx):
        dots = _kernels.dot_pairs(self.user_factors, self.item_factors, uidx, iidx)
        return (self.global_mean + self.user_bias[uidx]) + self.item_bias[iidx] + dots

    def _raw_block(self, uidx):
        S = _kernels.dot_block(self.user_factors, self.item_factors, uidx)
        return (self.global_mean + self.user_bias[uidx])[:, None] + self.item_bias[None, :] + S

    def objective(self, log: InteractionLog) -> float:
        "Regularised squared error over ``log`` (the quantity SGD descends)."
        upos, uok = _lookup(self.user_ids, log.users)
        ipos, iok = _lookup(self.item_ids, log.items)
        if not (uok.all() and iok.all()):
            raise ValueError("objective requires a log over the training entities")
        return float(
            _kernels.svd_loss(
                upos, ipos, log.ratings, self.global_mean, self.user_bias, self.item_bias,
                self.user_factors, self.item_factors, self.params.regularization,
            )
        )


class NMFModel(RatingModel):
    "Non-negative factorization: ``q_i . p_u`` with all factor entries >= 0."

    def __init__(self, params, user_ids, item_ids, global_mean, rating_scale, P, Q):
        super().__init__(params, user_ids, item_ids, global_mean, rating_scale)
        self.user_factors = P
        self.item_factors = Q

    def _raw_pairs(self, uidx, iidx):
        return _kernels.dot_pairs(self.user_factors, self.item_factors, uidx, iidx)

    def _raw_block(self, uidx):
        return _kernels.dot_block(self.user_factors, self.item_factors, uidx)

    def objective(self, log: InteractionLog) -> float:
        upos, _ = _lookup(self.user_ids, log.users)
        ipos, _ = _lookup(self.item_ids, log.items)
        reg = self.params.regularization
        return float(_kernels.nmf_loss(upos, ipos, log.ratings, self.user_factors, self.item_factors, reg, reg))


class KNNModel(RatingModel):
    """
    Neighbourhood predictor with MSD similarity.

    The prediction for ``(u, i)`` is the similarity-weighted mean rating over
    the ``k`` most similar neighbours that rated ``i`` (user-based) or that
    ``u`` rated (item-based).  Ties in similarity favour lower ids.  The full
    prediction matrix is computed on first use and cached.
    """

    def __init__(self, params, user_ids, item_ids, global_mean, rating_scale, user_based, sim, indptr, members, values):
        super().__init__(params, user_ids, item_ids, global_mean, rating_scale)
        self.user_based = user_based
        self.similarity = sim
        self._neighbors = (indptr, members, values)

    @cached_property
    def _dense(self) -> np.ndarray:
        n_pool = len(self.item_ids) if self.user_based else len(self.user_ids)
        out = _kernels.knn_dense(self.similarity, self.params.k_neighbors, *self._neighbors, n_pool, self.global_mean)
        return out if self.user_based else np.ascontiguousarray(out.T)

    def _raw_pairs(self, uidx, iidx):
        return self._dense[uidx, iidx]

    def _raw_block(self, uidx):
        return self._dense[uidx]


def _group_csr(keys, members, values, n_keys):
    "Group (member, value) rows by key; members ascending within each group."
    order = np.lexsort((members, keys))
    indptr = np.zeros(n_keys + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n_keys), out=indptr[1:])
    return indptr, np.ascontiguousarray(members[order]), np.ascontiguousarray(values[order])


def train(
    params: Hyperparams,
    log: InteractionLog,
    *,
    epoch_callback: Callable[[int, RatingModel], None] | None = None,
) -> RatingModel:
    """
    Fit a predictor on a log.

    Training is deterministic for fixed ``(params, log)``: factor
    initialisation and SGD example order come from ``params.train_seed``.

    Args:
        epoch_callback: called as ``callback(epoch, model)`` after every epoch
            of the factorization models (1-based epoch), e.g. to track loss.
    """
    if not len(log):
        raise InvariantViolation("cannot train on an empty log")
    user_ids, uidx = np.unique(log.users, return_inverse=True)
    item_ids, iidx = np.unique(log.items, return_inverse=True)
    uidx = uidx.astype(np.int64)
    iidx = iidx.astype(np.int64)
    ratings = np.ascontiguousarray(log.ratings)
    mu = float(ratings.mean())
    n_u, n_i = len(user_ids), len(item_ids)
    gen = rng(params.train_seed)
    alg = params.algorithm

    if alg in ("svd", "nmf"):
        k = params.factors
        P = gen.uniform(0.0, 0.1, size=(n_u, k))
        Q = gen.uniform(0.0, 0.1, size=(n_i, k))
        if alg == "svd":
            bu = np.zeros(n_u)
            bi = np.zeros(n_i)
            model = BiasedMFModel(params, user_ids, item_ids, mu, log.rating_scale, bu, bi, P, Q)
            for epoch in range(1, params.epochs + 1):
                order = gen.permutation(len(ratings))
                _kernels.svd_epoch(
                    uidx, iidx, ratings, order, mu, bu, bi, P, Q, params.learning_rate, params.regularization
                )
                if epoch_callback is not None:
                    epoch_callback(epoch, model)
        else:
            ucount = np.bincount(uidx, minlength=n_u).astype(np.float64)
            icount = np.bincount(iidx, minlength=n_i).astype(np.float64)
            model = NMFModel(params, user_ids, item_ids, mu, log.rating_scale, P, Q)
            reg = params.regularization
            for epoch in range(1, params.epochs + 1):
                _kernels.nmf_epoch(uidx, iidx, ratings, P, Q, ucount, icount, reg, reg)
                if epoch_callback is not None:
                    epoch_callback(epoch, model)
        return model

    user_based = alg == "user_knn"
    by_user = _group_csr(uidx, iidx, ratings, n_u)
    by_item = _group_csr(iidx, uidx, ratings, n_i)
    if user_based:
        # users co-rate within an item's raters; a neighbour contributes its profile
        sim = _kernels.msd_similarity(*by_item, n_u)
        nbrs = by_user
    else:
        sim = _kernels.msd_similarity(*by_user, n_i)
        nbrs = by_item
    return KNNModel(params, user_ids, item_ids, mu, log.rating_scale, user_based, sim, *nbrs)


def predict(model: RatingModel, user_id: int, item_id: int) -> float:
    "Clamped prediction; unknown users or items get the global mean."
    return float(model.predict_pairs([user_id], [item_id])[0])


class RecommendationList(Mapping):
    """
    Per-user ranked recommendations: ``user -> [(item, predicted_rating), ...]``
    sorted by decreasing rating, ties by ascending item id.
    """

    def __init__(self, lists: dict[int, list[tuple[int, float]]] | None = None):
        self.lists = dict(lists or {})

    def __getitem__(self, user):
        return self.lists[user]

    def __iter__(self) -> Iterator[int]:
        return iter(self.lists)

    def __len__(self):
        return len(self.lists)

    def __repr__(self):
        return f"<RecommendationList {len(self)} users, {self.n_pairs} pairs>"

    @property
    def n_pairs(self) -> int:
        return sum(len(v) for v in self.lists.values())

    def items_by_user(self) -> dict[int, list[int]]:
        return {u: [i for i, _ in lst] for u, lst in self.lists.items()}

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        "Parallel (users, items, scores) arrays in ascending user order."
        users, items, scores = [], [], []
        for u in sorted(self.lists):
            for i, s in self.lists[u]:
                users.append(u)
                items.append(i)
                scores.append(s)
        return np.array(users, dtype=np.int64), np.array(items, dtype=np.int64), np.array(scores, dtype=np.float64)

    def to_interactions(self, iteration: int) -> list[Interaction]:
        return [Interaction(u, i, s, iteration) for u, i, s in zip(*(a.tolist() for a in self.to_arrays()))]


def recommend_top_n(
    model: RatingModel, log: InteractionLog, n: int, *, batch_size: int = 256
) -> RecommendationList:
    """
    Top-``n`` unobserved items for every user of ``log``.

    Candidates are all items of the log's item universe that are not in the
    user's profile.  Users with fewer than ``n`` candidates get all of them;
    users with none get an empty list.
    """
    if n < 1:
        raise ValueError("n must be positive")
    universe = log.item_ids
    users = log.user_ids
    n_items = len(universe)
    upos = np.searchsorted(users, log.users)
    ipos = np.searchsorted(universe, log.items)
    observed = np.zeros((len(users), n_items), dtype=bool)
    observed[upos, ipos] = True

    out: dict[int, list[tuple[int, float]]] = {}
    for s in range(0, len(users), batch_size):
        batch = users[s : s + batch_size]
        scores = model.score_users(batch, universe)
        obs = observed[s : s + batch_size]
        keyed = np.where(obs, np.inf, -scores)
        order = np.argsort(keyed, axis=1, kind="stable")[:, :n]
        avail = (~obs).sum(axis=1)
        for r, u in enumerate(batch.tolist()):
            top = order[r, : min(n, avail[r])]
            out[u] = list(zip(universe[top].tolist(), scores[r, top].tolist()))
    return RecommendationList(out)


def rmse(model: RatingModel, test: InteractionLog) -> float:
    "Root mean squared error of clamped predictions over ``test``."
    if not len(test):
        raise InvariantViolation("RMSE over an empty test log")
    pred = model.predict_pairs(test.users, test.items)
    return math.sqrt(float(np.mean((test.ratings - pred) ** 2)))
