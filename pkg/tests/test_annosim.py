import numpy as np
import pytest

from texbank.annosim import (
    CooccurrenceModel,
    GroundTruthMatrix,
    annotation_cost,
    estimate_cooccurrence,
    rank_queries_posterior,
    rank_queries_prior,
    sigmoid,
    simulate_budget,
)


def make_gt(matrix, key):
    return GroundTruthMatrix(np.asarray(matrix), np.asarray(key))


def uniform_model(q, p=0.3):
    m = np.full((q, q), p)
    np.fill_diagonal(m, 1.0)
    return CooccurrenceModel(m)


class TestEstimateCooccurrence:
    @staticmethod
    def _with_all_keys(rows, extra_attrs):
        """Append one minimal seed row per remaining attribute so every
        attribute has key images."""
        rows = np.asarray(rows)
        q = rows.shape[1]
        key = [0] * rows.shape[0]
        pads = []
        for attr in extra_attrs:
            pad = np.zeros(q, dtype=int)
            pad[attr] = 1
            pads.append(pad)
            key.append(attr)
        return make_gt(np.vstack([rows] + pads), key)

    def test_always_present_near_one(self):
        gt = self._with_all_keys(np.ones((12, 3), dtype=int), [1, 2])
        model = estimate_cooccurrence(gt)
        assert model.p_cond[0, 1] == pytest.approx(13 / 14)
        assert model.p_cond[0, 0] == 1.0

    def test_never_present_near_zero(self):
        rows = np.zeros((12, 3), dtype=int)
        rows[:, 0] = 1
        gt = self._with_all_keys(rows, [1, 2])
        model = estimate_cooccurrence(gt)
        assert model.p_cond[0, 1] == pytest.approx(1 / 14)

    def test_smoothing_arithmetic_7_of_12(self):
        rows = np.zeros((12, 2), dtype=int)
        rows[:, 0] = 1
        rows[:7, 1] = 1
        gt = self._with_all_keys(rows, [1])
        model = estimate_cooccurrence(gt)
        assert model.p_cond[0, 1] == pytest.approx(8 / 14)

    def test_missing_seed_attribute_rejected(self):
        rows = np.ones((3, 2), dtype=int)
        gt = make_gt(rows, np.zeros(3, dtype=int))  # attribute 1 never a key
        with pytest.raises(ValueError):
            estimate_cooccurrence(gt)

    def test_probabilities_strictly_inside_unit_interval(self, rng):
        q = 5
        rows = rng.integers(0, 2, size=(40, q))
        key = rng.integers(0, q, size=40)
        rows[np.arange(40), key] = 1
        model = estimate_cooccurrence(make_gt(rows, key))
        off = model.p_cond[~np.eye(q, dtype=bool)]
        assert np.all(off > 0) and np.all(off < 1)
        assert np.all(np.diagonal(model.p_cond) == 1.0)


class TestRankings:
    def test_uniform_prior_keeps_index_order(self):
        model = uniform_model(5)
        assert rank_queries_prior(2, model).tolist() == [0, 1, 3, 4]

    def test_dominant_attribute_ranked_first(self):
        m = np.full((4, 4), 0.2)
        np.fill_diagonal(m, 1.0)
        m[1, 3] = 0.9
        model = CooccurrenceModel(m)
        assert rank_queries_prior(1, model)[0] == 3

    def test_budget_10_of_47_queries(self):
        model = uniform_model(47)
        ranking = rank_queries_prior(0, model)
        assert len(ranking) == 46
        assert len(ranking[:10]) == 10

    def test_posterior_with_uniform_scores_equals_prior(self, rng):
        q = 6
        m = rng.uniform(0.05, 0.95, size=(q, q))
        np.fill_diagonal(m, 1.0)
        model = CooccurrenceModel(m)
        p0 = model.base_rate
        logit_p0 = float(np.log(p0 / (1 - p0)))
        scores = np.full(q, logit_p0)  # sigmoid(score) == p0 everywhere
        for key in range(q):
            prior = rank_queries_prior(key, model)
            post = rank_queries_posterior(key, scores, model)
            assert np.array_equal(prior, post)

    def test_flat_prior_ranks_by_score(self, rng):
        q = 5
        model = CooccurrenceModel(
            np.where(np.eye(q, dtype=bool), 1.0, 1.0 / q)
        )
        scores = rng.normal(size=q)
        post = rank_queries_posterior(0, scores, model)
        by_score = np.argsort(-scores, kind="stable")
        assert np.array_equal(post, by_score[by_score != 0])

    def test_posterior_matches_direct_product(self, rng):
        q = 5
        m = rng.uniform(0.1, 0.9, size=(q, q))
        np.fill_diagonal(m, 1.0)
        model = CooccurrenceModel(m)
        scores = rng.normal(size=q)
        p0 = 1.0 / q
        adjusted = sigmoid(scores) * (m[2] / (1 - np.where(np.eye(q)[2], 1 - 1e-12, m[2]))) * ((1 - p0) / p0)
        # direct evaluation, skipping the key attribute
        values = [
            (sigmoid(scores[j]) * (m[2, j] / (1 - m[2, j])) * ((1 - p0) / p0), j)
            for j in range(q)
            if j != 2
        ]
        expected = [j for _, j in sorted(values, key=lambda t: (-t[0], t[1]))]
        assert rank_queries_posterior(2, scores, model).tolist() == expected


class TestSimulateBudget:
    def _toy(self, rng, n=40, q=6):
        rows = (rng.uniform(size=(n, q)) < 0.3).astype(int)
        key = rng.integers(0, q, size=n)
        rows[np.arange(n), key] = 1
        return make_gt(rows, key)

    def test_full_budget_recall_one(self, rng):
        gt = self._toy(rng)
        model = uniform_model(gt.n_attributes)
        rep = simulate_budget(gt, model, budget=gt.n_attributes - 1)
        assert rep.recall == 1.0
        assert rep.fully_recovered_fraction == 1.0

    def test_zero_budget_keys_only(self, rng):
        gt = self._toy(rng)
        model = uniform_model(gt.n_attributes)
        rep = simulate_budget(gt, model, budget=0)
        expected = gt.n_images / gt.matrix.sum()
        assert rep.recall == pytest.approx(expected)

    def test_recall_monotone_in_budget(self, rng):
        gt = self._toy(rng, n=60, q=8)
        model = uniform_model(8, p=0.25)
        last = -1.0
        for budget in range(8):
            rep = simulate_budget(gt, model, budget)
            assert rep.recall >= last - 1e-12
            last = rep.recall

    def test_posterior_beats_prior_with_oracle_scores(self, rng):
        # draw ground truth from a structured co-occurrence model, then give
        # the posterior strategy scores aligned with the actual labels
        q = 8
        n = 120
        m = rng.uniform(0.05, 0.6, size=(q, q))
        np.fill_diagonal(m, 1.0)
        model = CooccurrenceModel(m)
        key = rng.integers(0, q, size=n)
        rows = np.zeros((n, q), dtype=int)
        for i in range(n):
            probs = m[key[i]]
            rows[i] = (rng.uniform(size=q) < probs).astype(int)
            rows[i, key[i]] = 1
        gt = make_gt(rows, key)
        scores = np.where(rows == 1, 3.0, -3.0) + rng.normal(scale=0.5, size=rows.shape)
        rep_prior = simulate_budget(gt, model, budget=3, strategy="prior")
        rep_post = simulate_budget(gt, model, budget=3, strategy="posterior", scores=scores)
        assert rep_post.recall >= rep_prior.recall

    def test_posterior_requires_scores(self, rng):
        gt = self._toy(rng)
        with pytest.raises(ValueError):
            simulate_budget(gt, uniform_model(gt.n_attributes), 2, strategy="posterior")


class TestAnnotationCost:
    def test_paper_scale_cost(self):
        assert annotation_cost(5640, 46, 5, 0.01) == pytest.approx(12972.0)

    def test_zero_votes_zero_cost(self):
        assert annotation_cost(5640, 46, 0, 0.01) == 0.0

    def test_reduced_query_budget_bound(self):
        assert annotation_cost(5640, 10, 5, 0.01) == pytest.approx(2820.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            annotation_cost(-1, 2, 3, 0.01)


class TestGroundTruthMatrix:
    def test_key_must_be_present(self):
        with pytest.raises(ValueError):
            make_gt([[0, 1], [1, 0]], [0, 0])

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            make_gt([[2, 1]], [0])
