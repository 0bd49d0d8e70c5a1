import numpy as np
from PIL import Image

from usability_audit.evaluation import evaluate
from usability_audit.figures import (
    cluster_profile_figure, confusion_figure, cv_table_figure, training_curves_figure,
)


def _is_png(path):
    with Image.open(path) as img:
        return img.format == "PNG" and img.size[0] > 100


def test_figures_render(tmp_path):
    rep = evaluate([0, 1, 2, 2], [0, 2, 2, 2], [0, 1, 2]).to_dict()
    grid = {"C_values": [1, 10], "gamma_values": [0.1, 1], "cv_accuracy": [[0.5, 0.75], [1.0, 0.9]],
            "C": 10, "gamma": 0.1}
    log = [{"epoch": i, "train_loss": 1 / i, "loss": 0.9 / i, "accuracy": min(1, i / 5)} for i in range(1, 8)]
    paths = [
        confusion_figure(rep, tmp_path / "cm.png"),
        cv_table_figure(grid, tmp_path / "cv.png"),
        training_curves_figure(log, tmp_path / "sub" / "curves.png"),
        cluster_profile_figure(np.random.default_rng(0).normal(size=(5, 4)), list("abcde"),
                               ["w", "x", "y", "z"], tmp_path / "clusters.png"),
    ]
    assert all(_is_png(p) for p in paths)


def test_figure_bytes_are_reproducible(tmp_path):
    rep = evaluate([0, 1], [0, 0], [0, 1]).to_dict()
    a = confusion_figure(rep, tmp_path / "a.png").read_bytes()
    b = confusion_figure(rep, tmp_path / "b.png").read_bytes()
    assert a == b
