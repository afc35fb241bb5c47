"""Downstream classification scoring of reconstruction corpora.

``eval_accuracy`` walks a reconstruction tree laid out as one subdirectory
per rate bucket (directory name = the byte budget, matching the report
tables' ``r`` column for joins), classifies each reconstructed image, and
reports top-1 accuracy per bucket.

The default classifier is a deterministic nearest-centroid model over
mean-pooled 8x8 RGB features, fit on the clean originals.  Anything with
``fit(features, labels)`` / ``predict(features)`` can be substituted.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .io_formats import load_image

FEATURE_POOL = 8


class NearestCentroidClassifier:
    """Top-1 by Euclidean distance to per-class feature centroids."""

    def __init__(self):
        self.centroids = None
        self.classes = None

    def fit(self, features, labels):
        labels = np.asarray(labels)
        self.classes = np.unique(labels)
        self.centroids = np.stack(
            [features[labels == c].mean(axis=0) for c in self.classes]
        )
        return self

    def predict(self, features):
        if self.centroids is None:
            raise ValueError("classifier is not fitted")
        d = ((features[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return self.classes[d.argmin(axis=1)]


def image_features(image: np.ndarray) -> np.ndarray:
    """Mean-pool to FEATURE_POOL x FEATURE_POOL x 3 and flatten to [0, 1]."""
    h, w = image.shape[:2]
    ph, pw = h // FEATURE_POOL, w // FEATURE_POOL
    if ph < 1 or pw < 1:
        raise ValueError("image smaller than the feature pool grid")
    trimmed = image[: ph * FEATURE_POOL, : pw * FEATURE_POOL].astype(np.float64)
    pooled = trimmed.reshape(FEATURE_POOL, ph, FEATURE_POOL, pw, 3).mean(axis=(1, 3))
    return pooled.reshape(-1) / 255.0


def read_labels(path) -> dict[str, int]:
    labels = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            labels[row["name"]] = int(row["label"])
    if not labels:
        raise ValueError("no labels in %s" % path)
    return labels


def _features_for(root: Path, names) -> np.ndarray:
    feats = []
    for name in names:
        path = root / (name + ".ppm")
        if not path.exists():
            raise FileNotFoundError("missing image %s" % path)
        feats.append(image_features(load_image(path)))
    return np.stack(feats)


def eval_accuracy(
    originals_dir,
    recons_root,
    labels_path,
    classifier=None,
) -> list[tuple[int, float, int]]:
    """Top-1 accuracy per rate bucket: [(r, accuracy, n), ...] sorted by r.

    ``recons_root`` holds one subdirectory per bucket named by its byte
    budget; files pair with originals and labels by stem.
    """
    originals_dir = Path(originals_dir)
    recons_root = Path(recons_root)
    labels = read_labels(labels_path)
    names = sorted(labels)

    clf = classifier if classifier is not None else NearestCentroidClassifier()
    truth = np.array([labels[n] for n in names])
    clf.fit(_features_for(originals_dir, names), truth)

    buckets = sorted(
        (p for p in recons_root.iterdir() if p.is_dir() and p.name.isdigit()),
        key=lambda p: int(p.name),
    )
    if not buckets:
        raise ValueError("no rate-bucket directories under %s" % recons_root)
    rows = []
    for bucket in buckets:
        pred = clf.predict(_features_for(bucket, names))
        rows.append((int(bucket.name), float((pred == truth).mean()), len(names)))
    return rows


def accuracy_csv(rows) -> str:
    lines = ["r,accuracy,n"]
    lines += ["%d,%s,%d" % (r, repr(acc), n) for r, acc, n in rows]
    return "\n".join(lines) + "\n"


def count_inversions(values) -> int:
    """Adjacent decreases in a sequence expected to be non-decreasing."""
    return sum(1 for a, b in zip(values, values[1:]) if b < a)
