import numpy as np
import pytest

from conftest import make_traj
from reidsim.graph import CameraGraph
from reidsim.predict import (
    MlePredictor,
    ModelError,
    NeighborDistribution,
    NgramPredictor,
    UniformPredictor,
    fit_mle,
    fit_ngram,
    load_model,
    predict_mle,
    predict_ngram,
    predictor_accuracy,
    save_model,
    uniform_predict,
)
from reidsim.trajgen import TrajGenConfig, generate_trajectories


@pytest.fixture(scope="module")
def hub6():
    # camera 2 adjacent to 3, 4, 5; a stem 0-1-2 keeps the graph connected
    return CameraGraph(6, ((0, 1), (1, 2), (2, 3), (2, 4), (2, 5)))


@pytest.fixture(scope="module")
def fork4():
    # camera 1 adjacent to 0, 2, 3
    return CameraGraph(4, ((0, 1), (1, 2), (1, 3)))


def local_history_trajs():
    """50 objects went 2->3, 30 went 2->4, 70 went 2->5."""
    trajs = []
    i = 0
    for dst, n in ((3, 50), (4, 30), (5, 70)):
        for _ in range(n):
            trajs.append(make_traj(i, [2, dst]))
            i += 1
    return trajs


class TestNeighborDistribution:
    def test_validates_sum(self):
        with pytest.raises(ValueError):
            NeighborDistribution((0, 1), np.array([0.5, 0.6]))

    def test_validates_nonnegative(self):
        with pytest.raises(ValueError):
            NeighborDistribution((0, 1), np.array([-0.1, 1.1]))

    def test_validates_ascending_ids(self):
        with pytest.raises(ValueError):
            NeighborDistribution((1, 0), np.array([0.5, 0.5]))

    def test_argmax_tie_breaks_low_id(self):
        d = NeighborDistribution((2, 5, 7), np.array([0.4, 0.4, 0.2]))
        assert d.argmax_camera() == 2


class TestFitMle:
    def test_single_trajectory(self):
        counts = fit_mle([make_traj(0, [0, 1, 2])])
        assert counts.get(0, 1) == 1
        assert counts.get(1, 2) == 1
        assert counts.get(0, 2) == 0

    def test_local_history_counts(self):
        counts = fit_mle(local_history_trajs())
        assert counts.get(2, 3) == 50
        assert counts.get(2, 4) == 30
        assert counts.get(2, 5) == 70

    def test_matches_brute_force_tally(self, town05):
        trajs = generate_trajectories(town05, TrajGenConfig(count=120, horizon=2048, seed=6))
        counts = fit_mle(trajs)
        # independent oracle: flat pairwise tally
        tally = {}
        for t in trajs:
            cams = t.cameras
            for a, b in zip(cams, cams[1:]):
                tally[(a, b)] = tally.get((a, b), 0) + 1
        for (a, b), n in tally.items():
            assert counts.get(a, b) == n
        total = sum(len(t.visits) - 1 for t in trajs)
        assert sum(tally.values()) == total


class TestPredictMle:
    def test_unsmoothed_local_history(self, hub6):
        counts = fit_mle(local_history_trajs())
        dist = predict_mle(hub6, counts, [2], smoothing=0.0)
        assert dist.camera_ids == (1, 3, 4, 5)
        np.testing.assert_allclose(dist.probs, [0.0, 50 / 150, 30 / 150, 70 / 150])

    def test_zero_counts_smoothing_gives_uniform(self, fork4):
        dist = predict_mle(fork4, fit_mle([]), [1])
        np.testing.assert_allclose(dist.probs, [1 / 3, 1 / 3, 1 / 3])

    def test_add_one_smoothing_values(self, hub6):
        counts = fit_mle(local_history_trajs())
        dist = predict_mle(hub6, counts, [2], smoothing=1.0)
        # neighbor set of 2 is (1, 3, 4, 5): N=150, lambda=1, 4 neighbors
        np.testing.assert_allclose(dist.probs, [1 / 154, 51 / 154, 31 / 154, 71 / 154])

    def test_add_one_smoothing_three_neighbors(self, fork4):
        trajs = []
        i = 0
        for dst, n in ((0, 50), (2, 30), (3, 70)):
            for _ in range(n):
                trajs.append(make_traj(i, [1, dst]))
                i += 1
        dist = predict_mle(fork4, fit_mle(trajs), [1], smoothing=1.0)
        np.testing.assert_allclose(dist.probs, [51 / 153, 31 / 153, 71 / 153])

    def test_zero_smoothing_zero_counts_degrades_to_uniform(self, fork4):
        dist = predict_mle(fork4, fit_mle([]), [1], smoothing=0.0)
        np.testing.assert_allclose(dist.probs, [1 / 3, 1 / 3, 1 / 3])

    def test_requires_history(self, fork4):
        with pytest.raises(ValueError):
            predict_mle(fork4, fit_mle([]), [])


class TestFitNgram:
    def test_window_enumeration(self):
        g_cams = [0, 1, 2, 3]
        model = fit_ngram([make_traj(0, g_cams)], n=3)
        assert model.tables[3] == {(0, 1): {2: 1}, (1, 2): {3: 1}}
        assert model.tables[2] == {(0,): {1: 1}, (1,): {2: 1}, (2,): {3: 1}}

    def test_totals_match_window_count_identity(self, town05):
        trajs = generate_trajectories(town05, TrajGenConfig(count=80, horizon=2048, seed=12))
        n = 4
        model = fit_ngram(trajs, n=n)
        for m in range(2, n + 1):
            total = sum(c for slot in model.tables[m].values() for c in slot.values())
            expected = sum(max(0, len(t.visits) - m + 1) for t in trajs)
            assert total == expected

    def test_empty_training_set(self):
        model = fit_ngram([], n=3)
        assert model.tables[2] == {} and model.tables[3] == {}

    def test_order_validation(self):
        with pytest.raises(ValueError):
            fit_ngram([], n=1)


class TestPredictNgram:
    def test_hand_tallied_backoff_case(self, fork4):
        model = fit_ngram([make_traj(0, [0, 1, 2]), make_traj(1, [0, 1, 3])], n=3)
        dist = predict_ngram(fork4, model, [0, 1], smoothing=1.0)
        assert dist.camera_ids == (0, 2, 3)
        np.testing.assert_allclose(dist.probs, [1 / 5, 2 / 5, 2 / 5])

    def test_unseen_context_falls_back_to_mle(self, fork4):
        trajs = [make_traj(0, [0, 1, 2])]
        model = fit_ngram(trajs, n=3)
        counts = fit_mle(trajs)
        # camera 3 never appears as a context end
        got = predict_ngram(fork4, model, [3])
        want = predict_mle(fork4, counts, [3])
        np.testing.assert_allclose(got.probs, want.probs)

    def test_short_history_uses_all_of_it(self, fork4):
        model = fit_ngram([make_traj(0, [0, 1, 2])], n=4)
        dist = predict_ngram(fork4, model, [1])
        assert dist.camera_ids == (0, 2, 3)
        # context (1,) -> {2: 1}; smoothed over 3 neighbors
        np.testing.assert_allclose(dist.probs, [1 / 4, 2 / 4, 1 / 4])

    def test_bigram_unsmoothed_equals_mle(self, town05):
        trajs = generate_trajectories(town05, TrajGenConfig(count=100, horizon=2048, seed=1))
        model = fit_ngram(trajs, n=2)
        counts = fit_mle(trajs)
        for hist in ([0], [5, 4], [20, 16, 15]):
            a = predict_ngram(town05, model, hist, smoothing=0.0)
            b = predict_mle(town05, counts, hist, smoothing=0.0)
            np.testing.assert_allclose(a.probs, b.probs)


class TestUniformPredict:
    def test_degree_four(self, town05):
        cam = next(c for c in range(town05.num_cameras) if town05.degree(c) == 4)
        dist = uniform_predict(town05, [cam])
        np.testing.assert_allclose(dist.probs, [0.25] * 4)

    def test_degree_one(self):
        g = CameraGraph(2, ((0, 1),))
        dist = uniform_predict(g, [0])
        np.testing.assert_allclose(dist.probs, [1.0])

    def test_invariant_to_history(self, fork4):
        a = uniform_predict(fork4, [1])
        b = uniform_predict(fork4, [0, 1, 2, 1])
        np.testing.assert_allclose(a.probs, b.probs)


class _GroundTruthPredictor:
    """Reads the answer key: probability 1 on the true next camera."""

    def __init__(self, g, answers):
        self.g = g
        self.answers = answers  # history tuple -> next camera

    def predict(self, history):
        neigh = self.g.adjacency[history[-1]]
        probs = np.zeros(len(neigh))
        probs[neigh.index(self.answers[tuple(history)])] = 1.0
        return NeighborDistribution(neigh, probs)


class TestPredictorAccuracy:
    def test_ground_truth_reader_scores_one(self, fork4):
        trajs = [make_traj(0, [0, 1, 2]), make_traj(1, [3, 1, 0])]
        answers = {}
        for t in trajs:
            cams = t.cameras
            for i in range(1, len(cams)):
                answers[tuple(cams[:i])] = cams[i]
        assert predictor_accuracy(_GroundTruthPredictor(fork4, answers), trajs) == 1.0

    def test_uniform_on_two_regular_cycle(self):
        cycle = CameraGraph(6, ((0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)))
        rng = np.random.default_rng(3)
        trajs = []
        for i in range(300):
            cams = [int(rng.integers(6))]
            for _ in range(6):
                nxt = int(rng.choice(cycle.adjacency[cams[-1]]))
                cams.append(nxt)
            trajs.append(make_traj(i, cams))
        acc = predictor_accuracy(UniformPredictor(cycle), trajs)
        assert acc == pytest.approx(1 / 2, abs=0.05)

    def test_mle_on_deterministic_dataset(self, hub6):
        trajs = [make_traj(i, [1, 2, 5]) for i in range(40)]
        predictor = MlePredictor.fit(hub6, trajs)
        assert predictor_accuracy(predictor, trajs) == 1.0

    def test_invariant_to_monotone_rescaling(self, town05):
        trajs = generate_trajectories(town05, TrajGenConfig(count=60, horizon=2048, seed=8))
        base = MlePredictor.fit(town05, trajs)

        class Squared:
            def predict(self, history):
                d = base.predict(history)
                w = d.probs**2
                return NeighborDistribution(d.camera_ids, w / w.sum())

        assert predictor_accuracy(base, trajs) == predictor_accuracy(Squared(), trajs)

    def test_requires_hops(self, fork4):
        with pytest.raises(ValueError):
            predictor_accuracy(UniformPredictor(fork4), [make_traj(0, [1])])


class TestModelFiles:
    def test_mle_round_trip(self, tmp_path, town05):
        trajs = generate_trajectories(town05, TrajGenConfig(count=40, horizon=2048, seed=2))
        predictor = MlePredictor.fit(town05, trajs)
        path = tmp_path / "mle.json"
        save_model(predictor, path)
        loaded = load_model(path, town05)
        assert isinstance(loaded, MlePredictor)
        assert loaded.counts.counts == predictor.counts.counts
        assert loaded.smoothing == predictor.smoothing

    def test_ngram_round_trip(self, tmp_path, town05):
        trajs = generate_trajectories(town05, TrajGenConfig(count=40, horizon=2048, seed=2))
        predictor = NgramPredictor.fit(town05, trajs, order=3)
        path = tmp_path / "ng.json"
        save_model(predictor, path)
        loaded = load_model(path, town05)
        assert isinstance(loaded, NgramPredictor)
        assert loaded.model.order == 3
        assert loaded.model.tables == predictor.model.tables

    def test_wrong_graph_rejected(self, tmp_path, town05, grid9):
        trajs = generate_trajectories(town05, TrajGenConfig(count=20, horizon=2048, seed=2))
        path = tmp_path / "m.json"
        save_model(MlePredictor.fit(town05, trajs), path)
        with pytest.raises(ModelError, match="different graph"):
            load_model(path, grid9)

    def test_garbage_rejected(self, tmp_path, grid9):
        path = tmp_path / "m.json"
        path.write_text("not json")
        with pytest.raises(ModelError, match="malformed"):
            load_model(path, grid9)
        path.write_text('{"format":"other"}')
        with pytest.raises(ModelError):
            load_model(path, grid9)
