import numpy as np
import pytest
from conftest import make_log
from hypothesis import given, settings
from hypothesis import strategies as st

from popbias.dataset import split_train_test
from popbias.errors import InvariantViolation
from popbias.recsys import (
    TUNED,
    Hyperparams,
    KNNModel,
    RatingModel,
    default_hyperparams,
    predict,
    recommend_top_n,
    rmse,
    train,
)

FAST = {
    "svd": Hyperparams("svd", epochs=15, factors=20, regularization=0.05),
    "nmf": Hyperparams("nmf", epochs=30, factors=15, regularization=0.06),
    "user_knn": Hyperparams("user_knn", k_neighbors=20),
    "item_knn": Hyperparams("item_knn", k_neighbors=20),
}


class FixedScores(RatingModel):
    "Test double scoring from a dict, 1.0 elsewhere."

    def __init__(self, scores, log):
        super().__init__(Hyperparams("user_knn"), log.user_ids, log.item_ids, 3.0, log.rating_scale)
        self.scores = scores

    def _raw_pairs(self, uidx, iidx):
        return np.array(
            [self.scores.get((int(self.user_ids[u]), int(self.item_ids[i])), 1.0) for u, i in zip(uidx, iidx)]
        )

    def _raw_block(self, uidx):
        return np.array([[self.scores.get((int(self.user_ids[u]), int(i)), 1.0) for i in self.item_ids] for u in uidx])


class TestParams:
    def test_table_defaults(self):
        hp = default_hyperparams("movielens", "svd")
        assert (hp.epochs, hp.factors, hp.learning_rate, hp.regularization) == (50, 150, 0.005, 0.05)
        assert default_hyperparams("yelp", "item_knn").k_neighbors == 50
        assert len(TUNED) == 8

    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparams("lightgcn")
        with pytest.raises(ValueError):
            Hyperparams("svd", epochs=0)
        with pytest.raises(ValueError):
            Hyperparams("user_knn", k_neighbors=0)


class TestTraining:
    @pytest.mark.parametrize(
        "params",
        [FAST["svd"], Hyperparams("nmf", epochs=100, factors=15, regularization=0.02)],
        ids=["svd", "nmf"],
    )
    def test_constant_ratings(self, params):
        # NMF has no biases, so its penalty shrinks the fit by roughly reg; keep reg small here
        rows = [(u, i, 3.0) for u in range(12) for i in range(10) if (u + i) % 3]
        model = train(params, make_log(rows))
        pred = model.predict_pairs([r[0] for r in rows], [r[1] for r in rows])
        assert np.abs(pred - 3.0).max() < 0.05

    def test_user_knn_hand_example(self):
        log = make_log([(1, 1, 4), (1, 2, 5), (2, 1, 4), (2, 2, 5), (2, 3, 5), (3, 1, 1), (3, 2, 2), (3, 3, 1)])
        model = train(Hyperparams("user_knn", k_neighbors=2), log)
        assert predict(model, 1, 3) == pytest.approx((1 * 5 + 0.1 * 1) / 1.1)
        assert round(predict(model, 1, 3), 3) == 4.636

    def test_knn_k_limits_neighbours(self):
        log = make_log([(1, 1, 4), (1, 2, 5), (2, 1, 4), (2, 2, 5), (2, 3, 5), (3, 1, 1), (3, 2, 2), (3, 3, 1)])
        model = train(Hyperparams("user_knn", k_neighbors=1), log)
        assert predict(model, 1, 3) == pytest.approx(5.0)

    def test_item_knn(self):
        # item 3 is rated like item 1 by users 2 and 3
        log = make_log([(1, 1, 2), (1, 2, 5), (2, 1, 4), (2, 3, 4), (3, 1, 1), (3, 3, 1), (2, 2, 1)])
        model = train(Hyperparams("item_knn", k_neighbors=5), log)
        s13, s23 = 1.0, 1 / (9 + 1)
        assert predict(model, 1, 3) == pytest.approx((s13 * 2 + s23 * 5) / (s13 + s23))

    def test_knn_fallback_is_global_mean(self):
        # user 3 shares no item with anyone
        log = make_log([(1, 1, 4), (2, 1, 2), (2, 2, 5), (3, 3, 1)])
        model = train(Hyperparams("user_knn"), log)
        assert predict(model, 3, 2) == pytest.approx(log.ratings.mean())
        assert predict(model, 99, 1) == pytest.approx(log.ratings.mean())

    @pytest.mark.parametrize("alg", ["user_knn", "item_knn"])
    def test_similarity_symmetric(self, alg, small_ml):
        model = train(FAST[alg], small_ml[0])
        assert isinstance(model, KNNModel)
        sim = model.similarity
        assert np.array_equal(sim, sim.T)
        assert sim.min() >= 0 and sim.max() <= 1
        assert (np.diag(sim) == 1).all()

    @pytest.mark.parametrize("alg", ["svd", "nmf", "user_knn", "item_knn"])
    def test_deterministic(self, alg, small_ml):
        log = small_ml[0]
        a, b = train(FAST[alg], log), train(FAST[alg], log)
        users = log.user_ids[:20]
        assert np.array_equal(a.score_users(users, log.item_ids), b.score_users(users, log.item_ids))

    def test_seed_matters(self, small_ml):
        log = small_ml[0]
        a = train(FAST["svd"], log)
        b = train(FAST["svd"].with_seed(1), log)
        assert not np.array_equal(a.user_factors, b.user_factors)

    def test_svd_loss_non_increasing(self, small_ml):
        log = small_ml[0]
        losses = []
        params = Hyperparams("svd", epochs=30, factors=50, learning_rate=0.005, regularization=0.05)
        train(params, log, epoch_callback=lambda e, m: losses.append(m.objective(log)))
        assert len(losses) == 30
        assert np.diff(losses).max() <= 1e-6

    def test_nmf_non_negative_every_epoch(self, small_ml):
        log = small_ml[0]
        mins = []

        def check(epoch, m):
            mins.append(min(m.user_factors.min(), m.item_factors.min()))

        train(Hyperparams("nmf", epochs=25, factors=20, regularization=0.06), log, epoch_callback=check)
        assert len(mins) == 25 and min(mins) >= 0

    def test_empty_log(self):
        from popbias.dataset import InteractionLog

        with pytest.raises(InvariantViolation):
            train(FAST["svd"], InteractionLog.empty())

    @pytest.mark.parametrize("alg", ["svd", "nmf", "user_knn", "item_knn"])
    def test_beats_constant_predictor(self, alg, medium_ml):
        train_log, test = split_train_test(medium_ml[0], 0.2, seed=0)
        model = train(FAST[alg], train_log)
        baseline = np.sqrt(np.mean((test.ratings - train_log.ratings.mean()) ** 2))
        assert rmse(model, test) < baseline


class TestPrediction:
    def test_clamp(self):
        log = make_log([(1, 1), (1, 2), (2, 1)])
        model = FixedScores({(1, 1): 5.7, (1, 2): 0.2}, log)
        assert predict(model, 1, 1) == 5.0
        assert predict(model, 1, 2) == 1.0

    @settings(max_examples=15, deadline=None)
    @given(st.sampled_from(["svd", "nmf", "user_knn", "item_knn"]), st.integers(0, 2**31))
    def test_always_in_scale(self, alg, seed):
        gen = np.random.default_rng(seed)
        pairs = {(int(u), int(i)) for u, i in gen.integers(0, 15, size=(60, 2))}
        rows = [(u, i, float(gen.integers(1, 6))) for u, i in pairs]
        model = train(FAST[alg].with_seed(seed), make_log(rows))
        scores = model.score_users(np.arange(-1, 17), np.arange(-1, 17))
        assert scores.min() >= 1.0 and scores.max() <= 5.0

    def test_rmse(self):
        log = make_log([(1, 1, 1.0), (1, 2, 5.0)])
        model = FixedScores({(1, 1): 3.0, (1, 2): 3.0}, log)
        assert rmse(model, log) == pytest.approx(2.0)
        exact = FixedScores({(1, 1): 1.0, (1, 2): 5.0}, log)
        assert rmse(exact, log) == 0.0


class TestTopN:
    def test_tie_break(self):
        log = make_log([(1, 1), (2, 3), (2, 7), (2, 9)])
        model = FixedScores({(1, 7): 4.2, (1, 3): 4.2, (1, 9): 3.0}, log)
        recs = recommend_top_n(model, log, 2)
        assert [i for i, _ in recs[1]] == [3, 7]

    def test_short_and_exhausted(self):
        log = make_log([(1, 1), (1, 2), (1, 3), (2, 1)])
        model = FixedScores({(2, 3): 4.0, (2, 2): 2.0}, log)
        recs = recommend_top_n(model, log, 10)
        assert recs[1] == []
        assert recs[2] == [(3, 4.0), (2, 2.0)]

    @pytest.mark.parametrize("alg", ["svd", "user_knn", "item_knn"])
    def test_no_duplicates_and_sorted(self, alg, small_ml):
        log = small_ml[0]
        recs = recommend_top_n(train(FAST[alg], log), log, 10)
        users, items, scores = recs.to_arrays()
        assert len(users) == 10 * log.n_users
        assert not log.contains(users, items).any()
        for lst in recs.values():
            keys = [(-s, i) for i, s in lst]
            assert keys == sorted(keys) and len(set(keys)) == len(keys)

    @pytest.mark.parametrize("alg", ["svd", "nmf"])
    def test_batch_size_irrelevant(self, alg, small_ml):
        log = small_ml[0]
        model = train(FAST[alg], log)
        assert recommend_top_n(model, log, 5, batch_size=7).lists == recommend_top_n(model, log, 5).lists

    def test_pair_and_block_scores_agree(self, small_ml):
        log = small_ml[0]
        model = train(FAST["svd"], log)
        block = model.score_users(log.user_ids[:5], log.item_ids)
        u = np.repeat(log.user_ids[:5], len(log.item_ids))
        i = np.tile(log.item_ids, 5)
        assert np.array_equal(block.ravel(), model.predict_pairs(u, i))
