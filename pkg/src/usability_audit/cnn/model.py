"""The screenshot classifier: three conv/ReLU/pool blocks, dropout, two dense layers."""

import io
import json
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ModelError, ShapeMismatch, StorageError
from ..grades import UsabilityGrade
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU
from .losses import softmax

MODEL_FORMAT = "usability-audit/cnn"
MODEL_VERSION = 1
GRADES = UsabilityGrade.ordered()


@dataclass(frozen=True)
class CnnConfig:
    input_side: int = 224
    filters: tuple = (16, 32, 64)
    kernel_size: int = 3
    dense_units: int = 128
    dropout: float = 0.5
    n_classes: int = 5

    def __post_init__(self):
        if self.input_side % 8:
            raise ValueError(f"input side must be divisible by 8, got {self.input_side}")
        if len(self.filters) != 3:
            raise ValueError("exactly three convolutional blocks are expected")

    def to_dict(self):
        d = asdict(self)
        d["filters"] = list(self.filters)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["filters"] = tuple(d["filters"])
        return cls(**d)


class CnnModel:
    def __init__(self, config=CnnConfig(), seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        layers = []
        cin = 3
        for f in config.filters:
            layers += [Conv2D(cin, f, config.kernel_size, rng=rng), ReLU(), MaxPool2D()]
            cin = f
        side = config.input_side // 8
        layers += [
            Dropout(config.dropout),
            Flatten(),
            Dense(side * side * cin, config.dense_units, rng=rng),
            ReLU(),
            Dense(config.dense_units, config.n_classes, rng=rng),
        ]
        self.layers = layers

    def named_params(self):
        """``{"3.W": array, ...}`` keyed by layer index; arrays are live references."""
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                out[f"{i}.{k}"] = v
        return out

    def named_grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads.items():
                out[f"{i}.{k}"] = v
        return out

    def _check_input(self, x):
        s = self.config.input_side
        if x.ndim != 4 or x.shape[1:] != (s, s, 3):
            raise ShapeMismatch(f"expected (N, {s}, {s}, 3) input, got {x.shape}")

    def forward(self, x, training=False, rng=None):
        """Logits for a (N, S, S, 3) batch."""
        x = np.asarray(x, dtype=float)
        self._check_input(x)
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def backward(self, dlogits):
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def predict_proba(self, x, batch_size=16):
        x = np.asarray(x, dtype=float)
        return np.vstack([softmax(self.forward(x[i:i + batch_size]))
                          for i in range(0, len(x), batch_size)])

    def save(self, path):
        meta = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "param_names": list(self.named_params()),
            "classes": [g.value for g in GRADES],
        }
        arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
        arrays.update({f"param/{k}": v for k, v in self.named_params().items()})
        buf = io.BytesIO()
        # an .npz by hand: np.savez stamps entries with the wall clock
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                with zf.open(info, "w", force_zip64=True) as fh:
                    np.lib.format.write_array(fh, np.asanyarray(arr), allow_pickle=False)
        try:
            Path(path).write_bytes(buf.getvalue())
        except OSError as exc:
            raise StorageError(f"cannot write model {path}: {exc}") from exc

    @classmethod
    def load(cls, path):
        from ..schemas import validate

        try:
            with np.load(path, allow_pickle=False) as data:
                meta = json.loads(str(data["meta"]))
                validate(meta, "cnn_model_meta")
                model = cls(CnnConfig.from_dict(meta["config"]))
                params = model.named_params()
                if set(meta["param_names"]) != set(params):
                    raise ModelError("saved parameters do not match the configured layer stack")
                for k, v in params.items():
                    stored = data[f"param/{k}"]
                    if stored.shape != v.shape:
                        raise ModelError(f"parameter {k} has shape {stored.shape}, expected {v.shape}")
                    v[...] = stored
        except FileNotFoundError as exc:
            raise StorageError(f"no model file at {path}") from exc
        except (ValueError, KeyError, OSError, zipfile.BadZipFile) as exc:
            raise ModelError(f"cannot load CNN model {path}: {exc}") from exc
        return model


def predict_cnn(model, image):
    """Grade one preprocessed (S, S, 3) image; returns ``(grade, probabilities)``."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 3:
        raise ShapeMismatch(f"expected a single (S, S, 3) image, got {image.shape}")
    probs = softmax(model.forward(image[None]))[0]
    return GRADES[int(np.argmax(probs))], probs
