"""Deep belief network: stacked RBMs plus a softmax translation layer.

Training runs in three stages.  The hidden layers are first pretrained
greedily with CD-1 (:func:`pretrain`), feeding each layer's activations
to the next.  Stage two fits only the randomly initialized translation
layer with backpropagation (cross-entropy, momentum, L2 decay, Gaussian
input noise, early stopping on a validation set) while the pretrained
layers stay frozen.  Stage three fine-tunes the whole network at a lower
learning rate.  Hidden activations use the same sigmoid as the RBM
conditionals in every stage.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as sigmoid

from fingerspell.alphabet import STATIC_LETTERS
from fingerspell.errors import (
    DimensionMismatchError,
    EmptyDataError,
    FormatError,
    LabelOutOfRangeError,
    NumericError,
)
from fingerspell.rbm import Rbm, RbmTrainConfig, train_rbm

DEFAULT_LAYER_SIZES = (1500, 700, 400)

MODEL_MAGIC = b"HSDBN1"


@dataclass
class StageConfig:
    """Hyperparameters of one supervised training stage."""

    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 100
    l2_coeff: float = 2e-4
    momentum: float = 0.9
    input_noise_sigma: float = 0.0
    early_stopping_patience: int = 10


@dataclass
class SupervisedTrainConfig:
    stage2: StageConfig = field(default_factory=lambda: StageConfig(input_noise_sigma=0.1))
    # fine-tuning runs at a tenth of the stage-2 rate with halved decay
    stage3: StageConfig = field(default_factory=lambda: StageConfig(learning_rate=0.01, l2_coeff=1e-4))
    rng_seed: int = 0

    def __post_init__(self):
        if self.stage3.learning_rate >= self.stage2.learning_rate:
            raise ValueError("fine-tuning must use a lower learning rate than stage 2")


@dataclass
class Prediction:
    scores: np.ndarray          # 24 softmax probabilities
    label: str                  # argmax letter, lowest index wins ties


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Dbn:
    """Feed-forward classifier assembled from pretrained RBM layers."""

    def __init__(self, rbm_layers, translation_w, translation_b, class_labels=STATIC_LETTERS):
        self.rbm_layers = list(rbm_layers)
        self.translation_w = np.asarray(translation_w, dtype=np.float64)
        self.translation_b = np.asarray(translation_b, dtype=np.float64)
        self.class_labels = tuple(class_labels)
        for a, b in zip(self.rbm_layers, self.rbm_layers[1:]):
            if a.n_hidden != b.n_visible:
                raise DimensionMismatchError("adjacent RBM layers do not chain")
        top = self.rbm_layers[-1].n_hidden if self.rbm_layers else self.translation_w.shape[0]
        if self.translation_w.shape != (top, len(self.class_labels)):
            raise DimensionMismatchError("translation weights do not match top layer / classes")
        if self.translation_b.shape != (len(self.class_labels),):
            raise DimensionMismatchError("translation bias length != class count")

    @classmethod
    def from_rbms(cls, rbms, rng=None, class_labels=STATIC_LETTERS) -> "Dbn":
        """Attach a randomly initialized translation layer to pretrained RBMs."""
        rng = np.random.default_rng(0) if rng is None else rng
        top = rbms[-1].n_hidden
        w = rng.normal(0.0, 0.01, size=(top, len(class_labels)))
        return cls(rbms, w, np.zeros(len(class_labels)), class_labels)

    @property
    def input_dim(self) -> int:
        return self.rbm_layers[0].n_visible if self.rbm_layers else self.translation_w.shape[0]

    def hidden_activations(self, x: np.ndarray) -> list:
        """Sigmoid activations after each RBM layer (deterministic pass)."""
        activations = []
        a = np.asarray(x, dtype=np.float64)
        for rbm in self.rbm_layers:
            a = sigmoid(a @ rbm.weights + rbm.hidden_bias)
            activations.append(a)
        return activations

    def scores(self, x: np.ndarray) -> np.ndarray:
        """Softmax class probabilities for a vector or a batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise DimensionMismatchError(f"input length {x.shape[-1]} != {self.input_dim}")
        a = x
        for rbm in self.rbm_layers:
            a = sigmoid(a @ rbm.weights + rbm.hidden_bias)
        return softmax(a @ self.translation_w + self.translation_b)

    def forward(self, x: np.ndarray) -> Prediction:
        """Classify one feature vector."""
        s = self.scores(np.asarray(x, dtype=np.float64).reshape(-1))
        return Prediction(scores=s, label=self.class_labels[int(np.argmax(s))])

    def copy(self) -> "Dbn":
        return Dbn(
            [r.copy() for r in self.rbm_layers],
            self.translation_w.copy(),
            self.translation_b.copy(),
            self.class_labels,
        )


# ---------------------------------------------------------------------------
# greedy pretraining

def pretrain(features: np.ndarray, layer_sizes, cfgs, on_epoch=None) -> list:
    """Train the RBM chain: each layer learns the previous layer's activations.

    ``cfgs`` is either one :class:`RbmTrainConfig` (shared) or a list, one
    per layer.  ``on_epoch(layer_index, epoch, recon_error)`` reports
    progress.  Returns the list of trained RBMs.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] == 0:
        raise EmptyDataError("pretraining data is empty")
    layer_sizes = list(layer_sizes)
    if isinstance(cfgs, RbmTrainConfig):
        cfgs = [cfgs] * len(layer_sizes)
    if len(cfgs) != len(layer_sizes):
        raise ValueError("need one RBM config per layer")

    rbms = []
    data = features
    for i, (size, cfg) in enumerate(zip(layer_sizes, cfgs)):
        cb = (lambda e, err, _i=i: on_epoch(_i, e, err)) if on_epoch is not None else None
        rbm = train_rbm(data, cfg, n_hidden=size, on_epoch=cb)
        rbms.append(rbm)
        data = rbm.hidden_probabilities(data)
    return rbms


# ---------------------------------------------------------------------------
# supervised loss and gradients

def labels_to_indices(labels, class_labels) -> np.ndarray:
    """Map letter labels (or already-integer indices) to class indices."""
    index = {c: i for i, c in enumerate(class_labels)}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if isinstance(lab, (int, np.integer)):
            if not 0 <= int(lab) < len(class_labels):
                raise LabelOutOfRangeError(f"class index {lab} out of range")
            out[i] = int(lab)
        else:
            if lab not in index:
                raise LabelOutOfRangeError(f"unknown class label {lab!r}")
            out[i] = index[lab]
    return out


def cross_entropy_loss(dbn: Dbn, x: np.ndarray, y_idx: np.ndarray) -> float:
    """Mean softmax cross-entropy of a labeled batch (no decay terms)."""
    probs = dbn.scores(np.atleast_2d(x))
    picked = probs[np.arange(len(y_idx)), y_idx]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def backprop_gradients(dbn: Dbn, x: np.ndarray, y_idx: np.ndarray):
    """Gradients of the mean cross-entropy w.r.t. every network parameter.

    Returns ``(rbm_w_grads, rbm_hb_grads, trans_w_grad, trans_b_grad)``;
    visible biases take no part in the feed-forward pass.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = x.shape[0]
    activations = dbn.hidden_activations(x)
    top = activations[-1] if activations else x
    probs = softmax(top @ dbn.translation_w + dbn.translation_b)

    dlogits = probs.copy()
    dlogits[np.arange(b), y_idx] -= 1.0
    dlogits /= b

    gw_t = top.T @ dlogits
    gb_t = dlogits.sum(axis=0)

    rbm_w_grads = [None] * len(dbn.rbm_layers)
    rbm_hb_grads = [None] * len(dbn.rbm_layers)
    da = dlogits @ dbn.translation_w.T
    for k in range(len(dbn.rbm_layers) - 1, -1, -1):
        a = activations[k]
        dz = da * a * (1.0 - a)
        prev = activations[k - 1] if k > 0 else x
        rbm_w_grads[k] = prev.T @ dz
        rbm_hb_grads[k] = dz.sum(axis=0)
        da = dz @ dbn.rbm_layers[k].weights.T
    return rbm_w_grads, rbm_hb_grads, gw_t, gb_t


# ---------------------------------------------------------------------------
# supervised stages

def _validate_labeled(data, class_labels):
    x, labels = data
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise EmptyDataError("labeled feature set is empty")
    y = labels_to_indices(labels, class_labels)
    if len(y) != x.shape[0]:
        raise DimensionMismatchError("feature rows and labels differ in count")
    return x, y


def train_translation_layer(dbn: Dbn, train, valid, cfg: SupervisedTrainConfig, on_epoch=None) -> Dbn:
    """Stage 2: fit the translation layer only, RBM layers frozen.

    ``train`` and ``valid`` are ``(features, labels)`` pairs.  Each
    presentation adds fresh Gaussian noise (``input_noise_sigma``) to the
    input, clamped back to [0, 1]; validation cross-entropy (no noise) is
    evaluated after every epoch and the best-validation parameters are
    restored at the end.  ``on_epoch(epoch, train_loss, valid_loss)``.
    """
    xt, yt = _validate_labeled(train, dbn.class_labels)
    xv, yv = _validate_labeled(valid, dbn.class_labels)
    s = cfg.stage2
    rng = np.random.default_rng(cfg.rng_seed)

    vel_w = np.zeros_like(dbn.translation_w)
    vel_b = np.zeros_like(dbn.translation_b)

    best_loss = cross_entropy_loss(dbn, xv, yv)
    best = (dbn.translation_w.copy(), dbn.translation_b.copy())
    since_best = 0

    # the frozen feature pass is deterministic only up to the added noise,
    # so activations are recomputed per presentation
    for epoch in range(s.epochs):
        order = rng.permutation(xt.shape[0])
        losses = []
        for start in range(0, xt.shape[0], s.batch_size):
            idx = order[start : start + s.batch_size]
            xb = xt[idx]
            if s.input_noise_sigma > 0:
                xb = np.clip(xb + rng.normal(0.0, s.input_noise_sigma, xb.shape), 0.0, 1.0)
            yb = yt[idx]

            top = xb
            for rbm in dbn.rbm_layers:
                top = sigmoid(top @ rbm.weights + rbm.hidden_bias)
            probs = softmax(top @ dbn.translation_w + dbn.translation_b)
            picked = probs[np.arange(len(yb)), yb]
            losses.append(-np.mean(np.log(np.maximum(picked, 1e-300))))

            dlogits = probs
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits /= len(yb)
            gw = top.T @ dlogits
            gb = dlogits.sum(axis=0)

            vel_w = s.momentum * vel_w - s.learning_rate * (gw + s.l2_coeff * dbn.translation_w)
            vel_b = s.momentum * vel_b - s.learning_rate * gb
            dbn.translation_w += vel_w
            dbn.translation_b += vel_b

        if not np.all(np.isfinite(dbn.translation_w)):
            raise NumericError("non-finite translation weights")
        val_loss = cross_entropy_loss(dbn, xv, yv)
        if on_epoch is not None:
            on_epoch(epoch, float(np.mean(losses)), val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best = (dbn.translation_w.copy(), dbn.translation_b.copy())
            since_best = 0
        else:
            since_best += 1
            if since_best >= s.early_stopping_patience:
                break

    dbn.translation_w = best[0]
    dbn.translation_b = best[1]
    return dbn


def fine_tune(dbn: Dbn, train, valid, cfg: SupervisedTrainConfig, on_epoch=None) -> Dbn:
    """Stage 3: backpropagate through the whole network at the stage-3 rate.

    Updates every RBM weight matrix and hidden bias plus the translation
    layer (visible biases are not part of the feed-forward net).  Early
    stopping and best-validation restore as in stage 2.
    """
    xt, yt = _validate_labeled(train, dbn.class_labels)
    xv, yv = _validate_labeled(valid, dbn.class_labels)
    s = cfg.stage3
    rng = np.random.default_rng(cfg.rng_seed + 1)

    vel_rw = [np.zeros_like(r.weights) for r in dbn.rbm_layers]
    vel_rb = [np.zeros_like(r.hidden_bias) for r in dbn.rbm_layers]
    vel_w = np.zeros_like(dbn.translation_w)
    vel_b = np.zeros_like(dbn.translation_b)

    def snapshot():
        return (
            [r.weights.copy() for r in dbn.rbm_layers],
            [r.hidden_bias.copy() for r in dbn.rbm_layers],
            dbn.translation_w.copy(),
            dbn.translation_b.copy(),
        )

    best_loss = cross_entropy_loss(dbn, xv, yv)
    best = snapshot()
    since_best = 0

    for epoch in range(s.epochs):
        order = rng.permutation(xt.shape[0])
        losses = []
        for start in range(0, xt.shape[0], s.batch_size):
            idx = order[start : start + s.batch_size]
            xb = xt[idx]
            if s.input_noise_sigma > 0:
                xb = np.clip(xb + rng.normal(0.0, s.input_noise_sigma, xb.shape), 0.0, 1.0)
            yb = yt[idx]

            losses.append(cross_entropy_loss(dbn, xb, yb))
            rw, rb, gw_t, gb_t = backprop_gradients(dbn, xb, yb)

            for k, rbm in enumerate(dbn.rbm_layers):
                vel_rw[k] = s.momentum * vel_rw[k] - s.learning_rate * (rw[k] + s.l2_coeff * rbm.weights)
                vel_rb[k] = s.momentum * vel_rb[k] - s.learning_rate * rb[k]
                rbm.weights += vel_rw[k]
                rbm.hidden_bias += vel_rb[k]
                rbm.check_finite()
            vel_w = s.momentum * vel_w - s.learning_rate * (gw_t + s.l2_coeff * dbn.translation_w)
            vel_b = s.momentum * vel_b - s.learning_rate * gb_t
            dbn.translation_w += vel_w
            dbn.translation_b += vel_b

        val_loss = cross_entropy_loss(dbn, xv, yv)
        if on_epoch is not None:
            on_epoch(epoch, float(np.mean(losses)), val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best = snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best >= s.early_stopping_patience:
                break

    rws, rbs, tw, tb = best
    for k, rbm in enumerate(dbn.rbm_layers):
        rbm.weights = rws[k]
        rbm.hidden_bias = rbs[k]
    dbn.translation_w = tw
    dbn.translation_b = tb
    return dbn


# ---------------------------------------------------------------------------
# model file
#
# magic b"HSDBN1", uint32 little-endian header length, UTF-8 JSON header
# {"layers": [[n_visible, n_hidden], ...], "class_labels": [...]}, then the
# tensors as little-endian float64 row-major blocks in a fixed order:
# per RBM weights, visible_bias, hidden_bias; then translation weights and
# bias.  The round trip is bit-exact.

def save_model(dbn: Dbn, path) -> None:
    header = json.dumps(
        {
            "layers": [[r.n_visible, r.n_hidden] for r in dbn.rbm_layers],
            "class_labels": list(dbn.class_labels),
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for r in dbn.rbm_layers:
            fh.write(np.ascontiguousarray(r.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(r.visible_bias, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(r.hidden_bias, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dbn.translation_w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dbn.translation_b, dtype="<f8").tobytes())


def _read_tensor(fh, shape, name, path):
    count = int(np.prod(shape))
    raw = fh.read(count * 8)
    if len(raw) != count * 8:
        raise FormatError(f"{path}: truncated tensor {name!r} (wanted {count} float64 values)")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def load_model(path) -> Dbn:
    """Read a model file; raises :class:`FormatError` on any corruption."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: bad model magic {magic!r}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise FormatError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<I", raw_len)
        raw_header = fh.read(hlen)
        if len(raw_header) != hlen:
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(raw_header.decode("utf-8"))
            layers = [(int(nv), int(nh)) for nv, nh in header["layers"]]
            class_labels = tuple(header["class_labels"])
        except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: malformed header: {exc}") from exc
        for (_, nh), (nv2, _) in zip(layers, layers[1:]):
            if nh != nv2:
                raise FormatError(f"{path}: header layer sizes do not chain")

        rbms = []
        for i, (nv, nh) in enumerate(layers):
            w = _read_tensor(fh, (nv, nh), f"rbm{i + 1}.weights", path)
            vb = _read_tensor(fh, (nv,), f"rbm{i + 1}.visible_bias", path)
            hb = _read_tensor(fh, (nh,), f"rbm{i + 1}.hidden_bias", path)
            rbms.append(Rbm(nv, nh, weights=w, visible_bias=vb, hidden_bias=hb))
        top = layers[-1][1] if layers else 0
        tw = _read_tensor(fh, (top, len(class_labels)), "translation.weights", path)
        tb = _read_tensor(fh, (len(class_labels),), "translation.bias", path)
        if fh.read(1):
            raise FormatError(f"{path}: trailing data after tensors")
    return Dbn(rbms, tw, tb, class_labels)


def models_equal(a: Dbn, b: Dbn) -> bool:
    """Bit-exact parameter equality (used by round-trip tests)."""
    if len(a.rbm_layers) != len(b.rbm_layers) or a.class_labels != b.class_labels:
        return False
    for ra, rb_ in zip(a.rbm_layers, b.rbm_layers):
        if (
            ra.weights.tobytes() != rb_.weights.tobytes()
            or ra.visible_bias.tobytes() != rb_.visible_bias.tobytes()
            or ra.hidden_bias.tobytes() != rb_.hidden_bias.tobytes()
        ):
            return False
    return (
        a.translation_w.tobytes() == b.translation_w.tobytes()
        and a.translation_b.tobytes() == b.translation_b.tobytes()
    )
