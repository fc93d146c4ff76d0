"""Two-layer LSTM regressor with a linear head, trained by truncated
backpropagation through time, predicting the next day's opening price from
(previous open, lagged daily sentiment) feature pairs.

All math is plain numpy; gradients are hand-derived and verified against
central finite differences in the test suite.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .ingest import StockSeries
from .lagsearch import align_to_trading_days
from .sentiment import DailySentimentSeries

logger = logging.getLogger(__name__)

# gate column blocks in the stacked weight matrices: input, forget,
# candidate, output
PARAM_KEYS = ("w1", "b1", "w2", "b2", "wy", "by")


class DatasetError(Exception):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    lookback: int = 20
    optimizer: str = "adam"  # adam | sgd
    # stop once the test-split MSE drops below this; None (default) trains
    # the full epoch budget
    early_stop_mse: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lookback < 1:
            raise ValueError("lookback must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class SequenceDataset:
    """Chronological windows over aligned (open, sentiment) rows.

    Row r holds the raw feature pair of one trading day; a window is
    ``lookback`` consecutive rows and its target is the next row's open.
    Min-max normalization comes from rows before ``split_row`` only, so no
    test-range information leaks into training inputs.
    """

    dates: list[date]
    features: np.ndarray  # (M, 2) raw: open, sentiment
    lookback: int
    split_row: int
    feat_min: np.ndarray = field(init=False)
    feat_scale: np.ndarray = field(init=False)

    def __post_init__(self):
        m = len(self.features)
        if m != len(self.dates):
            raise DatasetError("dates and features length mismatch")
        if self.split_row <= self.lookback:
            raise DatasetError(
                f"need more than lookback+1={self.lookback + 1} training rows, "
                f"have {self.split_row}"
            )
        if m - 1 < self.split_row:
            raise DatasetError(
                f"no test rows: {m} rows, split at {self.split_row}"
            )
        train = self.features[: self.split_row]
        self.feat_min = train.min(axis=0)
        scale = train.max(axis=0) - self.feat_min
        scale[scale == 0.0] = 1.0
        self.feat_scale = scale

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.feat_min) / self.feat_scale

    def denormalize_open(self, values: np.ndarray) -> np.ndarray:
        return values * self.feat_scale[0] + self.feat_min[0]

    def _target_rows(self, which: str) -> range:
        # window ends at row e, target is row e+1
        first = self.lookback  # earliest target with a full window before it
        last = len(self.features) - 1
        if which == "train":
            return range(first, min(self.split_row, last + 1))
        if which == "test":
            return range(max(first, self.split_row), last + 1)
        raise ValueError(f"which must be 'train' or 'test', got {which!r}")

    def window_count(self, which: str) -> int:
        return len(self._target_rows(which))

    def window_arrays(self, which: str):
        """Returns (X (B,L,2) normalized, y (B,) normalized, target dates,
        raw actual opens, raw prior-day opens)."""
        targets = list(self._target_rows(which))
        if not targets:
            raise DatasetError(f"no {which} windows available")
        norm = self.normalize(self.features)
        x = np.stack([norm[t - self.lookback : t] for t in targets])
        y = norm[targets, 0]
        dates = [self.dates[t] for t in targets]
        actual = self.features[targets, 0]
        prev = self.features[[t - 1 for t in targets], 0]
        return x, y, dates, actual, prev


def split_index(n_rows: int, split: float) -> int:
    """Chronological split point: floor(n_rows * split)."""
    if not 0.0 < split < 1.0:
        raise ValueError("split must be in (0, 1)")
    return int(np.floor(n_rows * split))


def make_dataset(
    dates: list[date],
    opens: list[float] | np.ndarray,
    sentiments: list[float] | np.ndarray,
    lookback: int,
    split: float = 0.6,
) -> SequenceDataset:
    """Assemble a dataset from already-aligned per-day open and sentiment
    values (one row per trading day, chronological)."""
    features = np.column_stack(
        [np.asarray(opens, dtype=float), np.asarray(sentiments, dtype=float)]
    )
    return SequenceDataset(
        dates=list(dates),
        features=features,
        lookback=lookback,
        split_row=split_index(len(features), split),
    )


def build_dataset(
    stock: StockSeries,
    sentiment: DailySentimentSeries,
    t: int,
    lookback: int,
    split: float = 0.6,
    fill: str = "neutral",
) -> SequenceDataset:
    """Align sentiment (shifted back by T trading days) with opening prices
    and window the result. The first aligned day is unusable (no previous
    day) and is dropped, so N aligned days yield N-1 usable rows and
    N-1-lookback windows."""
    if t < 0:
        raise ValueError("T must be >= 0")
    indices, values = align_to_trading_days(sentiment, stock, fill=fill)
    sent_at = dict(zip(indices, values))
    rows = [
        (stock.bars[j].date, stock.bars[j].open, sent_at[j - t])
        for j in range(len(stock.bars))
        if (j - t) in sent_at
    ]
    rows = rows[1:]  # drop the first aligned day
    required = lookback + 2
    if len(rows) < required:
        raise DatasetError(
            f"insufficient aligned data: need at least {required} usable rows, "
            f"have {len(rows)}"
        )
    dates = [r[0] for r in rows]
    opens = [r[1] for r in rows]
    sents = [r[2] for r in rows]
    return make_dataset(dates, opens, sents, lookback=lookback, split=split)


# ---------------------------------------------------------------------------
# model


@dataclass
class LstmModel:
    params: dict[str, np.ndarray]
    hidden_size: int
    input_dim: int = 2
    dropout: float = 0.001

    def __post_init__(self):
        h, d = self.hidden_size, self.input_dim
        shapes = {
            "w1": (d + h, 4 * h),
            "b1": (4 * h,),
            "w2": (2 * h, 4 * h),
            "b2": (4 * h,),
            "wy": (h,),
            "by": (1,),
        }
        for key, shape in shapes.items():
            if self.params[key].shape != shape:
                raise ValueError(
                    f"{key} has shape {self.params[key].shape}, expected {shape}"
                )
            if not np.all(np.isfinite(self.params[key])):
                raise ValueError(f"{key} contains non-finite values")


def init_model(
    hidden_size: int = 128,
    input_dim: int = 2,
    dropout: float = 0.001,
    seed: int = 0,
) -> LstmModel:
    """Uniform init in [-1/sqrt(H), 1/sqrt(H)]; forget-gate biases start
    at +1 so early training does not flush cell state."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden_size)
    h, d = hidden_size, input_dim

    def uniform(*shape):
        return rng.uniform(-bound, bound, size=shape)

    b1 = uniform(4 * h)
    b2 = uniform(4 * h)
    b1[h : 2 * h] = 1.0
    b2[h : 2 * h] = 1.0
    params = {
        "w1": uniform(d + h, 4 * h),
        "b1": b1,
        "w2": uniform(2 * h, 4 * h),
        "b2": b2,
        "wy": uniform(h),
        "by": uniform(1),
    }
    return LstmModel(params=params, hidden_size=h, input_dim=d, dropout=dropout)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_cell_forward(
    w: np.ndarray, b: np.ndarray, x: np.ndarray, h: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One gated-cell step: c' = f*c + i*g, h' = o*tanh(c')."""
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise ValueError("non-finite cell input")
    hidden = h.shape[-1]
    z = np.concatenate([x, h], axis=-1) @ w + b
    i = _sigmoid(z[..., :hidden])
    f = _sigmoid(z[..., hidden : 2 * hidden])
    g = np.tanh(z[..., 2 * hidden : 3 * hidden])
    o = _sigmoid(z[..., 3 * hidden :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def _layer_forward(w, b, x):
    """Unroll one layer over x (B, L, D). Returns (outputs (B, L, H),
    per-step caches for backprop)."""
    batch, steps, _ = x.shape
    hidden = b.shape[0] // 4
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    outputs = np.empty((batch, steps, hidden))
    caches = []
    for t in range(steps):
        inp = np.concatenate([x[:, t, :], h], axis=1)
        z = inp @ w + b
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(z[:, 3 * hidden :])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h = o * tanh_c
        caches.append((inp, i, f, g, o, c, tanh_c))
        c = c_new
        outputs[:, t, :] = h
    return outputs, caches


def _layer_backward(w, caches, d_outputs):
    """BPTT through one layer. d_outputs (B, L, H) are the gradients on the
    per-step hidden outputs. Returns (dW, db, dX)."""
    batch, steps, hidden = d_outputs.shape
    in_dim = w.shape[0] - hidden
    dw = np.zeros_like(w)
    db = np.zeros(4 * hidden)
    dx = np.empty((batch, steps, in_dim))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        inp, i, f, g, o, c_prev, tanh_c = caches[t]
        dh = d_outputs[:, t, :] + dh_next
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g ** 2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dw += inp.T @ dz
        db += dz.sum(axis=0)
        dinp = dz @ w.T
        dx[:, t, :] = dinp[:, :in_dim]
        dh_next = dinp[:, in_dim:]
        dc_next = dc * f
    return dw, db, dx


def _forward_full(model, x, training=False, rng=None):
    p = model.params
    h1, caches1 = _layer_forward(p["w1"], p["b1"], x)
    mask = None
    if training and model.dropout > 0.0:
        if rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        keep = 1.0 - model.dropout
        mask = (rng.random(h1.shape) < keep) / keep
        h1 = h1 * mask
    h2, caches2 = _layer_forward(p["w2"], p["b2"], h1)
    last = h2[:, -1, :]
    pred = last @ p["wy"] + p["by"][0]
    return pred, (x, caches1, mask, h1, caches2, last)


def forward(model: LstmModel, window: np.ndarray) -> float:
    """Evaluation-mode prediction for a single window of shape (L, 2)
    (normalized features). Dropout is inactive."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[1] != model.input_dim:
        raise ValueError(f"window must have shape (L, {model.input_dim})")
    pred, _ = _forward_full(model, window[None, :, :])
    return float(pred[0])


def predict_batch(model: LstmModel, x: np.ndarray) -> np.ndarray:
    pred, _ = _forward_full(model, x)
    return pred


def loss_and_grads(
    model: LstmModel,
    x: np.ndarray,
    y: np.ndarray,
    training: bool = False,
    rng=None,
):
    """Mean squared error on normalized targets plus gradients for every
    parameter tensor."""
    pred, cache = _forward_full(model, x, training=training, rng=rng)
    _, caches1, mask, _, caches2, last = cache
    batch = x.shape[0]
    err = pred - y
    loss = float(err @ err) / batch

    p = model.params
    dpred = 2.0 * err / batch
    grads = {
        "wy": last.T @ dpred,
        "by": np.array([dpred.sum()]),
    }
    d_h2 = np.zeros((batch, x.shape[1], model.hidden_size))
    d_h2[:, -1, :] = dpred[:, None] * p["wy"][None, :]
    grads["w2"], grads["b2"], d_h1 = _layer_backward(p["w2"], caches2, d_h2)
    if mask is not None:
        d_h1 = d_h1 * mask
    grads["w1"], grads["b1"], _ = _layer_backward(p["w1"], caches1, d_h1)
    return loss, grads


@dataclass
class TrainResult:
    model: LstmModel
    train_losses: list[float]
    test_losses: list[float]


def train(
    model: LstmModel, dataset: SequenceDataset, config: TrainConfig
) -> TrainResult:
    """Minimize window MSE with seeded mini-batch shuffling. Returns
    per-epoch train loss and test-split loss. Non-finite loss aborts."""
    x_train, y_train, *_ = dataset.window_arrays("train")
    try:
        x_test, y_test, *_ = dataset.window_arrays("test")
    except DatasetError:
        x_test = y_test = None
    rng = np.random.default_rng(config.seed)

    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    n = len(x_train)
    train_losses: list[float] = []
    test_losses: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(
                model, x_train[idx], y_train[idx], training=True, rng=rng
            )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}, batch {start // config.batch_size}"
                )
            epoch_loss += loss * len(idx)
            step += 1
            for key, grad in grads.items():
                if config.optimizer == "adam":
                    adam_m[key] = beta1 * adam_m[key] + (1 - beta1) * grad
                    adam_v[key] = beta2 * adam_v[key] + (1 - beta2) * grad ** 2
                    m_hat = adam_m[key] / (1 - beta1 ** step)
                    v_hat = adam_v[key] / (1 - beta2 ** step)
                    model.params[key] -= (
                        config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
                    )
                else:
                    model.params[key] -= config.learning_rate * grad
        train_losses.append(epoch_loss / n)
        if x_test is not None:
            test_err = predict_batch(model, x_test) - y_test
            test_losses.append(float(test_err @ test_err) / len(y_test))
            if (
                config.early_stop_mse is not None
                and test_losses[-1] < config.early_stop_mse
            ):
                break
    return TrainResult(model=model, train_losses=train_losses, test_losses=test_losses)


@dataclass(frozen=True)
class PredictionRow:
    day: date
    predicted: float
    actual: float
    prev_actual: float


def predict_series(
    model: LstmModel, dataset: SequenceDataset, which: str
) -> list[PredictionRow]:
    """Denormalized predictions aligned to target dates, with the prior
    trading day's actual open carried along for trend evaluation."""
    x, _, dates, actual, prev = dataset.window_arrays(which)
    preds = dataset.denormalize_open(predict_batch(model, x))
    return [
        PredictionRow(day=d, predicted=float(p), actual=float(a), prev_actual=float(pr))
        for d, p, a, pr in zip(dates, preds, actual, prev)
    ]


def save_checkpoint(
    path: str | Path,
    model: LstmModel,
    dataset: SequenceDataset,
    config: TrainConfig,
) -> None:
    payload = {
        "hidden_size": model.hidden_size,
        "input_dim": model.input_dim,
        "dropout": model.dropout,
        "params": {k: v.tolist() for k, v in model.params.items()},
        "normalization": {
            "feat_min": dataset.feat_min.tolist(),
            "feat_scale": dataset.feat_scale.tolist(),
        },
        "config": {
            "batch_size": config.batch_size,
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "seed": config.seed,
            "lookback": config.lookback,
            "optimizer": config.optimizer,
            "early_stop_mse": config.early_stop_mse,
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[LstmModel, dict, TrainConfig]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    model = LstmModel(
        params={k: np.asarray(v, dtype=float) for k, v in payload["params"].items()},
        hidden_size=int(payload["hidden_size"]),
        input_dim=int(payload["input_dim"]),
        dropout=float(payload["dropout"]),
    )
    return model, payload["normalization"], TrainConfig(**payload["config"])
