import math
from datetime import date, timedelta

import numpy as np
import pytest

from sentilag.lstm import (
    DatasetError,
    TrainConfig,
    build_dataset,
    forward,
    init_model,
    loss_and_grads,
    load_checkpoint,
    lstm_cell_forward,
    make_dataset,
    predict_batch,
    predict_series,
    save_checkpoint,
    split_index,
    train,
)
from conftest import DAY0, make_sentiment_series, make_stock_series


def _days(n, start=DAY0):
    return [start + timedelta(days=i) for i in range(n)]


def _sine_dataset(n=400, period=50, lookback=20, split=0.6):
    opens = np.sin(2 * np.pi * np.arange(n) / period)
    sents = np.full(n, 0.5)
    return make_dataset(_days(n), opens, sents, lookback=lookback, split=split)


class TestDataset:
    def test_window_count_ten_days_lookback_three(self):
        stock = make_stock_series([0.0] + [0.01] * 9)  # 10 aligned days
        sent = make_sentiment_series([0.5, 0.6] * 5)
        ds = build_dataset(stock, sent, t=0, lookback=3, split=0.6)
        n_windows = ds.window_count("train") + ds.window_count("test")
        assert n_windows == 6
        _, _, dates, _, _ = ds.window_arrays("test")
        assert dates[-1] == stock.dates[-1]  # last target is the last day

    def test_split_point_floor_convention(self):
        assert split_index(602, 0.6) == 361
        assert split_index(10, 0.6) == 6

    def test_normalization_round_trip(self, rng):
        ds = _sine_dataset()
        raw = rng.uniform(-1.0, 1.0, size=50)
        normalized = (raw - ds.feat_min[0]) / ds.feat_scale[0]
        assert np.allclose(ds.denormalize_open(normalized), raw, atol=1e-9)

    def test_normalization_uses_train_rows_only(self):
        # test rows reach outside the train range; fitting on all rows would
        # change the statistics
        n = 40
        opens = np.concatenate([np.linspace(10, 20, 24), np.linspace(20, 50, 16)])
        ds = make_dataset(_days(n), opens, np.full(n, 0.5), lookback=5, split=0.6)
        split_row = ds.split_row
        assert ds.feat_min[0] == opens[:split_row].min()
        assert ds.feat_scale[0] == pytest.approx(
            opens[:split_row].max() - opens[:split_row].min()
        )
        assert opens.max() > opens[:split_row].max()

    def test_test_windows_never_see_past_target(self):
        ds = _sine_dataset(n=60, lookback=8)
        targets = list(ds._target_rows("test"))
        for t in targets:
            assert t - ds.lookback >= 0
            # inputs end strictly before the target row
            assert t - 1 < t

    def test_insufficient_data_fatal(self):
        stock = make_stock_series([0.0, 0.01, 0.02])
        sent = make_sentiment_series([0.5, 0.6, 0.7])
        with pytest.raises(DatasetError, match="insufficient|training rows"):
            build_dataset(stock, sent, t=0, lookback=5)


class TestCellForward:
    def test_zero_network_zero_state(self, rng):
        h, d = 4, 2
        w = np.zeros((d + h, 4 * h))
        b = np.zeros(4 * h)
        h_new, c_new = lstm_cell_forward(w, b, rng.normal(size=d), np.zeros(h),
                                         np.zeros(h))
        assert np.allclose(c_new, 0.0) and np.allclose(h_new, 0.0)

    def test_hidden_output_bounded(self, rng):
        h, d = 8, 2
        for _ in range(20):
            w = rng.normal(size=(d + h, 4 * h))
            b = rng.normal(size=4 * h)
            h_new, _ = lstm_cell_forward(w, b, rng.normal(size=d),
                                         rng.uniform(-1, 1, h),
                                         rng.normal(size=h))
            assert np.all(np.abs(h_new) < 1.0)

    def test_matches_scalar_reference(self, rng):
        # independently coded scalar cell, no vectorization shared with the
        # implementation
        def sig(v):
            return 1.0 / (1.0 + math.exp(-v))

        h, d = 3, 2
        w = rng.normal(size=(d + h, 4 * h))
        b = rng.normal(size=4 * h)
        x = rng.normal(size=d)
        h0 = rng.normal(size=h)
        c0 = rng.normal(size=h)
        inp = list(x) + list(h0)
        expected_h, expected_c = [], []
        for j in range(h):
            zi = sum(inp[a] * w[a, j] for a in range(d + h)) + b[j]
            zf = sum(inp[a] * w[a, h + j] for a in range(d + h)) + b[h + j]
            zg = sum(inp[a] * w[a, 2 * h + j] for a in range(d + h)) + b[2 * h + j]
            zo = sum(inp[a] * w[a, 3 * h + j] for a in range(d + h)) + b[3 * h + j]
            c_new = sig(zf) * c0[j] + sig(zi) * math.tanh(zg)
            expected_c.append(c_new)
            expected_h.append(sig(zo) * math.tanh(c_new))
        got_h, got_c = lstm_cell_forward(w, b, x, h0, c0)
        assert np.allclose(got_h, expected_h, atol=1e-12)
        assert np.allclose(got_c, expected_c, atol=1e-12)

    def test_cell_state_identity(self, rng):
        # c' = f*c + i*g holds exactly; recompute gates independently
        h, d = 5, 2
        w = rng.normal(size=(d + h, 4 * h))
        b = rng.normal(size=4 * h)
        x = rng.normal(size=d)
        h0 = rng.normal(size=h)
        c0 = rng.normal(size=h)
        z = np.concatenate([x, h0]) @ w + b
        i = 1 / (1 + np.exp(-z[:h]))
        f = 1 / (1 + np.exp(-z[h:2 * h]))
        g = np.tanh(z[2 * h:3 * h])
        _, c_new = lstm_cell_forward(w, b, x, h0, c0)
        assert np.array_equal(c_new, f * c0 + i * g)

    def test_non_finite_input_rejected(self):
        h, d = 2, 2
        w = np.zeros((d + h, 4 * h))
        b = np.zeros(4 * h)
        with pytest.raises(ValueError):
            lstm_cell_forward(w, b, np.array([np.nan, 0.0]), np.zeros(h),
                              np.zeros(h))


class TestForward:
    def test_deterministic_in_eval_mode(self, rng):
        model = init_model(hidden_size=6, seed=3)
        window = rng.uniform(0, 1, size=(10, 2))
        assert forward(model, window) == forward(model, window)

    def test_zero_model_outputs_head_bias(self, rng):
        model = init_model(hidden_size=6, seed=3)
        for key in ("w1", "b1", "w2", "b2", "wy"):
            model.params[key][:] = 0.0
        model.params["by"][:] = 0.7
        assert forward(model, rng.uniform(size=(5, 2))) == pytest.approx(0.7)

    def test_two_layer_equals_manual_composition(self, rng):
        from sentilag.lstm import _layer_forward

        model = init_model(hidden_size=5, seed=9)
        x = rng.uniform(-1, 1, size=(4, 7, 2))
        h1, _ = _layer_forward(model.params["w1"], model.params["b1"], x)
        h2, _ = _layer_forward(model.params["w2"], model.params["b2"], h1)
        manual = h2[:, -1, :] @ model.params["wy"] + model.params["by"][0]
        assert np.allclose(predict_batch(model, x), manual, atol=1e-12)

    def test_wrong_window_length_rejected(self, rng):
        model = init_model(hidden_size=4, seed=1)
        with pytest.raises(ValueError):
            forward(model, rng.uniform(size=(5, 3)))


def numeric_gradients(model, x, y, step=1e-5):
    """Central finite differences of the batch loss, parameter by
    parameter."""
    grads = {}
    for key, tensor in model.params.items():
        grad = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            original = tensor[idx]
            tensor[idx] = original + step
            up, _ = loss_and_grads(model, x, y)
            tensor[idx] = original - step
            down, _ = loss_and_grads(model, x, y)
            tensor[idx] = original
            grad[idx] = (up - down) / (2 * step)
            it.iternext()
        grads[key] = grad
    return grads


class TestGradients:
    def test_analytic_matches_finite_differences(self, rng):
        model = init_model(hidden_size=4, seed=5)
        x = rng.uniform(0, 1, size=(3, 3, 2))  # L = 3
        y = rng.uniform(0, 1, size=3)
        _, analytic = loss_and_grads(model, x, y)
        numeric = numeric_gradients(model, x, y)
        for key in model.params:
            denom = np.maximum(
                np.maximum(np.abs(analytic[key]), np.abs(numeric[key])), 1e-8
            )
            rel = np.abs(analytic[key] - numeric[key]) / denom
            assert rel.max() < 1e-4, f"{key}: max rel err {rel.max():.2e}"

    def test_parameter_change_shrinks_linearly_with_lr(self):
        ds = _sine_dataset(n=80, lookback=5)

        def step_norm(lr):
            model = init_model(hidden_size=4, seed=2)
            before = {k: v.copy() for k, v in model.params.items()}
            cfg = TrainConfig(batch_size=1000, epochs=1, learning_rate=lr,
                              seed=0, lookback=5, optimizer="sgd")
            train(model, ds, cfg)
            return math.sqrt(sum(
                float(((model.params[k] - before[k]) ** 2).sum()) for k in before
            ))

        n1 = step_norm(1e-3)
        n2 = step_norm(1e-6)
        assert n2 == pytest.approx(n1 * 1e-3, rel=1e-3)


class TestTraining:
    def test_constant_target_fits_quickly(self):
        n = 80
        ds = make_dataset(_days(n), np.full(n, 5.0), np.full(n, 0.5),
                          lookback=5, split=0.6)
        model = init_model(hidden_size=8, seed=1)
        cfg = TrainConfig(batch_size=16, epochs=200, learning_rate=1e-2,
                          seed=1, lookback=5)
        result = train(model, ds, cfg)
        assert result.train_losses[-1] < 1e-4

    def test_bit_reproducible_given_seed(self):
        ds = _sine_dataset(n=120, lookback=10)

        def run():
            model = init_model(hidden_size=6, seed=4)
            cfg = TrainConfig(batch_size=16, epochs=5, learning_rate=1e-3,
                              seed=4, lookback=10)
            train(model, ds, cfg)
            return model

        a, b = run(), run()
        for key in a.params:
            assert np.array_equal(a.params[key], b.params[key])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts(self):
        ds = _sine_dataset(n=80, lookback=5)
        model = init_model(hidden_size=4, seed=0)
        cfg = TrainConfig(batch_size=16, epochs=50, learning_rate=1e6,
                          seed=0, lookback=5, optimizer="sgd")
        with pytest.raises(RuntimeError, match="diverged"):
            train(model, ds, cfg)


class TestPredictSeries:
    def test_output_arity_and_finiteness(self):
        ds = _sine_dataset(n=100, lookback=10)
        model = init_model(hidden_size=6, seed=2)
        for which in ("train", "test"):
            rows = predict_series(model, ds, which)
            assert len(rows) == ds.window_count(which)
            assert all(math.isfinite(r.predicted) for r in rows)

    def test_checkpoint_roundtrip(self, tmp_path):
        ds = _sine_dataset(n=100, lookback=10)
        model = init_model(hidden_size=6, seed=2)
        cfg = TrainConfig(batch_size=16, epochs=2, learning_rate=1e-3, seed=2,
                          lookback=10)
        train(model, ds, cfg)
        save_checkpoint(tmp_path / "ckpt.json", model, ds, cfg)
        loaded, norm, loaded_cfg = load_checkpoint(tmp_path / "ckpt.json")
        for key in model.params:
            assert np.array_equal(loaded.params[key], model.params[key])
        assert norm["feat_min"] == ds.feat_min.tolist()
        assert loaded_cfg == cfg
