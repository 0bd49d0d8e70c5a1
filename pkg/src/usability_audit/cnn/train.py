"""Seeded mini-batch training on a ``<root>/<split>/<grade>/*.png`` image tree."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import EmptyDataset, UndecodableImage
from ..probe import ingest_screenshot
from .losses import FocalLossParams, focal_loss, softmax
from .model import GRADES, CnnConfig, CnnModel
from .optim import AdamConfig, AdamState, adam_step

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    input_side: int = 224
    filters: tuple = (16, 32, 64)
    dense_units: int = 128
    dropout: float = 0.5
    adam: AdamConfig = AdamConfig()
    focal: FocalLossParams = FocalLossParams()
    # gradients are accumulated over chunks this size to bound im2col memory
    micro_batch: int = 8

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0 or self.micro_batch <= 0:
            raise ValueError("batch size, epochs and micro batch must be positive")

    def model_config(self):
        return CnnConfig(input_side=self.input_side, filters=tuple(self.filters),
                         dense_units=self.dense_units, dropout=self.dropout)

    def to_dict(self):
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "input_side": self.input_side,
            "filters": list(self.filters),
            "dense_units": self.dense_units,
            "dropout": self.dropout,
            "lr": self.adam.lr,
            "beta1": self.adam.beta1,
            "beta2": self.adam.beta2,
            "eps": self.adam.eps,
            "focal_gamma": self.focal.gamma,
            "focal_alpha": self.focal.alpha,
        }


@dataclass
class LabeledImages:
    images: np.ndarray  # (N, S, S, 3) float32
    labels: np.ndarray  # class index into GRADES
    paths: list
    skipped: int = 0


def list_images(split_dir):
    """``[(path, grade), ...]`` under ``split_dir/<grade>/``, sorted for determinism."""
    split_dir = Path(split_dir)
    out = []
    for grade in GRADES:
        d = split_dir / grade.value
        if not d.is_dir():
            continue
        for p in sorted(d.iterdir()):
            if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file():
                out.append((p, grade))
    return out


def load_split(split_dir, side):
    split_dir = Path(split_dir)
    if not split_dir.is_dir():
        raise EmptyDataset(f"missing dataset folder {split_dir}")
    images, labels, paths = [], [], []
    skipped = 0
    for path, grade in list_images(split_dir):
        try:
            img = ingest_screenshot(path, side)
        except UndecodableImage as exc:
            log.warning("skipping %s", exc)
            skipped += 1
            continue
        images.append(img.astype(np.float32))
        labels.append(grade.rank)
        paths.append(path)
    if not images:
        raise EmptyDataset(f"no decodable images under {split_dir}")
    return LabeledImages(np.stack(images), np.array(labels), paths, skipped)


@dataclass
class TrainResult:
    model: CnnModel
    log: list = field(default_factory=list)
    skipped: int = 0


def _evaluate(model, data, focal, batch=16):
    probs = np.vstack([
        softmax(model.forward(data.images[i:i + batch].astype(np.float64)))
        for i in range(0, len(data.images), batch)
    ])
    loss, _ = focal_loss(probs, data.labels, focal)
    acc = float((probs.argmax(1) == data.labels).mean())
    return loss, acc, probs


def train_on_arrays(data, config=TrainConfig()):
    """Fit a fresh model to in-memory images; see :func:`train`."""
    if len(data.images) == 0:
        raise EmptyDataset("no training images")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_seed = int(seeds[0].generate_state(1)[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2])
    model = CnnModel(config.model_config(), seed=init_seed)
    params = model.named_params()
    state = AdamState()
    n = len(data.images)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            for m in range(0, len(batch), config.micro_batch):
                idx = batch[m:m + config.micro_batch]
                x = data.images[idx].astype(np.float64)
                probs = softmax(model.forward(x, training=True, rng=dropout_rng))
                loss, dlogits = focal_loss(probs, data.labels[idx], config.focal)
                # chunk mean -> batch mean
                w = len(idx) / len(batch)
                model.backward(dlogits * w)
                for k, g in model.named_grads().items():
                    grads[k] += g
                loss_sum += loss * len(idx)
            adam_step(params, grads, state, config.adam)
        eval_loss, eval_acc, _ = _evaluate(model, data, config.focal)
        entry = {"epoch": epoch, "train_loss": loss_sum / n, "loss": eval_loss, "accuracy": eval_acc}
        history.append(entry)
        log.info("epoch %d: train_loss=%.6f loss=%.6f accuracy=%.4f",
                 epoch, entry["train_loss"], eval_loss, eval_acc)
    return TrainResult(model, history, data.skipped)


def train(dataset_dir, config=TrainConfig()):
    """Train on ``dataset_dir/train``.

    Each epoch reshuffles with the seeded generator, runs dropout only in
    the gradient passes, then scores the whole training set in inference
    mode; ``loss``/``accuracy`` in the log come from that scoring pass and
    ``train_loss`` is the mean loss seen during the updates.
    """
    data = load_split(Path(dataset_dir) / "train", config.input_side)
    return train_on_arrays(data, config)


def evaluate_split(model, split_dir):
    """``(actual, predicted, skipped)`` grade lists for every image in ``split_dir``."""
    data = load_split(split_dir, model.config.input_side)
    probs = model.predict_proba(data.images.astype(np.float64))
    actual = [GRADES[i] for i in data.labels]
    predicted = [GRADES[i] for i in probs.argmax(1)]
    return actual, predicted, data.skipped
