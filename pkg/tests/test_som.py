import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from somqe.raster import GrayLevel, Raster
from somqe.som import (
    ModelFormatError,
    ModelIntegrityError,
    ModelVersionError,
    SomConfig,
    SomModel,
    best_matching_unit,
    init_model,
    load_model,
    node_occupancy,
    quantization_error,
    save_model,
    train,
)

SQRT3 = math.sqrt(3.0)


def replay_train(model: SomModel, training: Raster) -> np.ndarray:
    """Brute-force reimplementation of the update loop, scalar math only.

    Replays the exact seeded sample stream the trainer documents:
    the second child of SeedSequence(seed), integers drawn up front.
    """
    cfg = model.config
    _, train_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    sample_idx = np.random.default_rng(train_ss).integers(
        0, training.n_pixels, size=cfg.iterations
    )
    weights = [list(map(float, w)) for w in model.weights]
    coords = [(r, c) for r in range(cfg.rows) for c in range(cfg.cols)]
    flat = training.flat()
    for t in range(cfg.iterations):
        x = [float(v) for v in flat[sample_idx[t]]]
        best, best_d2 = 0, None
        for i, w in enumerate(weights):
            d2 = sum((wv - xv) ** 2 for wv, xv in zip(w, x))
            if best_d2 is None or d2 < best_d2:
                best, best_d2 = i, d2
        if cfg.schedule == "linear_decay":
            decay = 1.0 - t / cfg.iterations
            alpha, radius = cfg.learning_rate * decay, cfg.neighborhood_radius * decay
        else:
            alpha, radius = cfg.learning_rate, cfg.neighborhood_radius
        br, bc = coords[best]
        for i, (r, c) in enumerate(coords):
            gd2 = float((r - br) ** 2 + (c - bc) ** 2)
            if cfg.kernel == "bubble":
                if gd2 <= radius * radius:
                    for ch in range(3):
                        weights[i][ch] += alpha * (x[ch] - weights[i][ch])
            else:
                h = math.exp(-gd2 / (2.0 * radius * radius)) if radius > 0 else float(gd2 == 0.0)
                for ch in range(3):
                    weights[i][ch] += alpha * h * (x[ch] - weights[i][ch])
    return np.array(weights)


def naive_qe(weights: np.ndarray, image: Raster) -> float:
    total = 0.0
    for px in image.flat():
        best = min(
            math.sqrt(sum((float(w[ch]) - float(px[ch])) ** 2 for ch in range(3)))
            for w in weights
        )
        total += best
    return total / image.n_pixels


def random_raster(rng, w, h):
    return Raster.from_u8(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


class TestConfig:
    def test_defaults_match_stated_parameters(self):
        cfg = SomConfig()
        assert (cfg.rows, cfg.cols) == (4, 4)
        assert cfg.iterations == 1000
        assert cfg.learning_rate == 0.2
        assert cfg.neighborhood_radius == 1.2
        assert cfg.schedule == "constant" and cfg.kernel == "bubble"

    def test_validation(self):
        for bad in [
            dict(rows=0),
            dict(iterations=-1),
            dict(learning_rate=0.0),
            dict(learning_rate=1.5),
            dict(neighborhood_radius=-0.1),
            dict(schedule="exp"),
            dict(kernel="cone"),
        ]:
            with pytest.raises(ValueError):
                SomConfig(**bad).validate()


class TestInit:
    def test_uniform_image_gives_uniform_weights(self):
        model = init_model(Raster.uniform(9, 9, GrayLevel.WHITE), SomConfig(seed=3))
        assert model.weights.shape == (16, 3)
        assert np.all(model.weights == 1.0)
        assert not model.trained

    def test_same_seed_same_weights(self, rng):
        training = random_raster(rng, 12, 10)
        a = init_model(training, SomConfig(seed=42))
        b = init_model(training, SomConfig(seed=42))
        assert np.array_equal(a.weights, b.weights)

    def test_weights_drawn_from_image(self, rng):
        training = random_raster(rng, 7, 5)
        model = init_model(training, SomConfig(seed=1))
        pixel_set = {tuple(px) for px in training.flat()}
        for w in model.weights:
            assert tuple(w) in pixel_set

    def test_grid_size(self, rng):
        model = init_model(random_raster(rng, 4, 4), SomConfig(rows=3, cols=5, seed=0))
        assert model.n_nodes == 15


class TestBmu:
    def test_single_node_full_distance(self):
        model = SomModel(
            config=SomConfig(rows=1, cols=1, seed=0),
            weights=np.zeros((1, 3)),
            trained=True,
            training_image_digest="sha256:x",
        )
        idx, dist = best_matching_unit(model, GrayLevel.WHITE.unit)
        assert idx == 0
        assert abs(dist - SQRT3) < 1e-15

    def test_exact_match_wins(self, rng):
        weights = rng.random((8, 3))
        model = SomModel(
            config=SomConfig(rows=2, cols=4, seed=0),
            weights=weights,
            trained=True,
            training_image_digest="sha256:x",
        )
        idx, dist = best_matching_unit(model, weights[5])
        assert idx == 5 and dist == 0.0

    def test_tie_breaks_to_lowest_index(self):
        weights = np.array([[0.5, 0.5, 0.5]] * 4)
        weights[0] = [0.9, 0.9, 0.9]
        model = SomModel(
            config=SomConfig(rows=2, cols=2, seed=0),
            weights=weights,
            trained=True,
            training_image_digest="sha256:x",
        )
        idx, _ = best_matching_unit(model, np.array([0.5, 0.5, 0.5]))
        assert idx == 1


class TestTrain:
    def test_geometric_convergence_closed_form(self):
        # single node, uniform white image: after T steps the residual from the
        # all-black start is (1 - alpha)^T exactly
        training = Raster.uniform(4, 4, GrayLevel.WHITE)
        model = SomModel(
            config=SomConfig(rows=1, cols=1, iterations=1000, learning_rate=0.2, seed=0),
            weights=np.zeros((1, 3)),
            trained=False,
            training_image_digest=training.digest(),
        )
        trained = train(model, training)
        assert np.all(np.abs(trained.weights - 1.0) < 1e-9)

    def test_zero_iterations(self, rng):
        training = random_raster(rng, 6, 6)
        model = init_model(training, SomConfig(iterations=0, seed=4))
        trained = train(model, training)
        assert trained.trained
        assert np.array_equal(trained.weights, model.weights)

    def test_retrain_rejected(self, rng):
        training = random_raster(rng, 5, 5)
        trained = train(init_model(training, SomConfig(iterations=10, seed=1)), training)
        with pytest.raises(ValueError, match="already trained"):
            train(trained, training)

    def test_wrong_training_image_rejected(self, rng):
        a, b = random_raster(rng, 5, 5), random_raster(rng, 5, 5)
        model = init_model(a, SomConfig(iterations=10, seed=1))
        with pytest.raises(ValueError, match="does not match"):
            train(model, b)

    def test_two_pixel_oscillation_matches_replay(self):
        # both nodes start on the two training colors; every update drags the
        # grid neighbor, so the weights oscillate and only a step replay
        # predicts where they land
        arr = np.zeros((1, 2, 3), dtype=np.uint8)
        arr[0, 1] = 255
        training = Raster.from_u8(arr)
        config = SomConfig(rows=2, cols=1, iterations=57, seed=99)
        model = SomModel(
            config=config,
            weights=np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]),
            trained=False,
            training_image_digest=training.digest(),
        )
        trained = train(model, training)
        assert np.array_equal(trained.weights, replay_train(model, training))
        assert not np.array_equal(trained.weights, model.weights)

    @pytest.mark.parametrize("schedule", ["constant", "linear_decay"])
    @pytest.mark.parametrize("kernel", ["bubble", "gaussian"])
    def test_replay_oracle_bitwise(self, rng, schedule, kernel):
        training = random_raster(rng, 9, 7)
        config = SomConfig(
            rows=3, cols=3, iterations=120, schedule=schedule, kernel=kernel, seed=17
        )
        model = init_model(training, config)
        trained = train(model, training)
        assert np.array_equal(trained.weights, replay_train(model, training))

    def test_bubble_radius_excludes_diagonals(self, rng):
        # one step from a corner BMU: with radius 1.2 only the BMU and its two
        # edge neighbors may move
        training = Raster.uniform(3, 3, GrayLevel.MEDIUM_GRAY)
        weights = np.tile(np.array([[1.0, 1.0, 1.0]]), (4, 1))
        weights[0] = [0.4, 0.4, 0.4]  # node (0,0) wins the only color
        model = SomModel(
            config=SomConfig(rows=2, cols=2, iterations=1, seed=0),
            weights=weights,
            trained=False,
            training_image_digest=training.digest(),
        )
        trained = train(model, training)
        moved = [i for i in range(4) if not np.array_equal(trained.weights[i], weights[i])]
        assert moved == [0, 1, 2]  # node 3 is the diagonal at grid distance sqrt(2)


class TestQuantizationError:
    def _model(self, weights, rows=1, cols=None):
        weights = np.asarray(weights, dtype=np.float64)
        cols = cols if cols is not None else weights.shape[0] // rows
        return SomModel(
            config=SomConfig(rows=rows, cols=cols, seed=0),
            weights=weights,
            trained=True,
            training_image_digest="sha256:x",
        )

    def test_zero_when_pixels_match_weights(self, rng):
        weights = np.array([GrayLevel.BLACK.unit, GrayLevel.WHITE.unit, GrayLevel.G89.unit])
        idx = rng.integers(0, 3, size=(6, 8))
        img = Raster(weights[idx])
        assert quantization_error(self._model(weights, 1, 3), img).qe == 0.0

    def test_single_node_all_white(self):
        img = Raster.uniform(5, 5, GrayLevel.WHITE)
        rec = quantization_error(self._model(np.zeros((1, 3))), img, image_id="w")
        assert abs(rec.qe - SQRT3) < 1e-12
        assert rec.n_pixels == 25 and rec.image_id == "w"

    def test_untrained_model_rejected(self, rng):
        model = init_model(random_raster(rng, 4, 4), SomConfig(seed=0))
        with pytest.raises(ValueError, match="trained"):
            quantization_error(model, random_raster(rng, 4, 4))

    def test_one_pixel_delta_is_linear(self, rng):
        weights = rng.random((5, 3))
        model = self._model(weights, 1, 5)
        img_a = random_raster(rng, 16, 16)
        arr = img_a.pixels.copy()
        arr[3, 7] = GrayLevel.G242.unit
        img_b = Raster(arr)
        d0 = best_matching_unit(model, img_a.pixels[3, 7])[1]
        d1 = best_matching_unit(model, img_b.pixels[3, 7])[1]
        qe_a = quantization_error(model, img_a).qe
        qe_b = quantization_error(model, img_b).qe
        assert abs((qe_b - qe_a) - (d1 - d0) / 256) < 1e-12

    @given(
        arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))),
        st.integers(1, 4),
        st.integers(1, 4),
        st.integers(0, 2**16),
    )
    @settings(max_examples=25)
    def test_matches_naive_oracle(self, arr, rows, cols, seed):
        rng = np.random.default_rng(seed)
        weights = rng.random((rows * cols, 3))
        model = self._model(weights, rows, cols)
        img = Raster.from_u8(arr)
        mine = quantization_error(model, img).qe
        ref = naive_qe(weights, img)
        assert mine == pytest.approx(ref, rel=1e-9, abs=1e-12)
        assert 0.0 <= mine <= SQRT3

    def test_occupancy_partitions_pixels(self, rng):
        training = random_raster(rng, 10, 10)
        model = train(init_model(training, SomConfig(iterations=50, seed=2)), training)
        counts = node_occupancy(model, training)
        assert counts.sum() == 100 and counts.shape == (16,)

    def test_affine_series_law_and_monotone_direction(self, rng):
        # for a fixed model, replacing k source pixels by a target level moves
        # the QE by exactly k * (d_target - d_source) / N
        from somqe.simulate import ChangeSpec, iter_series

        training = random_raster(rng, 32, 32)
        model = train(init_model(training, SomConfig(iterations=200, seed=6)), training)
        gt = Raster.uniform(32, 32, GrayLevel.WHITE)
        d_s = best_matching_unit(model, GrayLevel.WHITE.unit)[1]
        d_t = best_matching_unit(model, GrayLevel.G38.unit)[1]
        assert d_s != d_t
        qe0 = quantization_error(model, gt).qe
        spec = ChangeSpec(source=GrayLevel.WHITE, target=GrayLevel.G38, steps=15, seed=9)
        previous = qe0
        for k, img in iter_series(gt, spec):
            qe_k = quantization_error(model, img).qe
            predicted = qe0 + k * (d_t - d_s) / 1024
            assert qe_k == pytest.approx(predicted, rel=1e-9, abs=1e-12)
            if d_t > d_s:
                assert qe_k > previous
            else:
                assert qe_k < previous
            previous = qe_k


class TestModelFiles:
    def _trained(self, rng, **cfg):
        training = random_raster(rng, 8, 8)
        return train(init_model(training, SomConfig(iterations=40, seed=5, **cfg)), training), training

    def test_roundtrip_bitwise(self, rng, tmp_path):
        model, training = self._trained(rng)
        save_model(model, tmp_path / "m.json")
        loaded = load_model(tmp_path / "m.json")
        assert np.array_equal(loaded.weights, model.weights)
        assert loaded.config == model.config
        assert loaded.trained and loaded.training_image_digest == model.training_image_digest

    def test_qe_identical_after_reload(self, rng, tmp_path):
        model, training = self._trained(rng)
        save_model(model, tmp_path / "m.json")
        reloaded = load_model(tmp_path / "m.json")
        img = random_raster(rng, 9, 9)
        assert quantization_error(model, img).qe == quantization_error(reloaded, img).qe

    def test_untrained_roundtrip(self, rng, tmp_path):
        model = init_model(random_raster(rng, 6, 6), SomConfig(seed=8))
        save_model(model, tmp_path / "u.json")
        assert not load_model(tmp_path / "u.json").trained

    def test_tampered_checksum(self, rng, tmp_path):
        model, _ = self._trained(rng)
        path = tmp_path / "m.json"
        save_model(model, path)
        text = path.read_text().replace('"trained": true', '"trained": false')
        path.write_text(text)
        with pytest.raises(ModelIntegrityError):
            load_model(path)

    def test_version_mismatch(self, rng, tmp_path):
        model, _ = self._trained(rng)
        path = tmp_path / "m.json"
        save_model(model, path)
        path.write_text(path.read_text().replace('"version": 1', '"version": 99'))
        with pytest.raises(ModelVersionError):
            load_model(path)

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(path)
        path.write_text('{"format": "other"}')
        with pytest.raises(ModelFormatError):
            load_model(path)
