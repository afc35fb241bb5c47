"""Classifier scoring: centroids, pairing, per-bucket accuracy."""

import numpy as np
import pytest

from vit_sidecar.classify import (
    NearestCentroidClassifier,
    accuracy_csv,
    count_inversions,
    eval_accuracy,
    image_features,
    read_labels,
)
from vit_sidecar.io_formats import save_ppm


def make_corpus(tmp_path, n=12, n_classes=3, size=16, seed=0):
    """Originals with class-colored content plus a labels.csv."""
    rng = np.random.default_rng(seed)
    originals = tmp_path / "originals"
    originals.mkdir()
    lines = ["name,label"]
    colors = [(220, 40, 40), (40, 220, 40), (40, 40, 220)]
    for i in range(n):
        label = i % n_classes
        img = np.full((size, size, 3), colors[label], dtype=np.uint8)
        img = np.clip(
            img.astype(int) + rng.integers(-20, 21, img.shape), 0, 255
        ).astype(np.uint8)
        name = "img%04d" % i
        save_ppm(originals / (name + ".ppm"), img)
        lines.append("%s,%d" % (name, label))
    labels = tmp_path / "labels.csv"
    labels.write_text("\n".join(lines) + "\n")
    return originals, labels


class TestNearestCentroid:
    def test_separable(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0.0, 0.1, (20, 4))
        b = rng.normal(3.0, 0.1, (20, 4))
        feats = np.vstack([a, b])
        labels = np.array([0] * 20 + [1] * 20)
        clf = NearestCentroidClassifier().fit(feats, labels)
        assert (clf.predict(feats) == labels).all()

    def test_unfitted(self):
        with pytest.raises(ValueError):
            NearestCentroidClassifier().predict(np.zeros((1, 4)))


class TestFeatures:
    def test_shape_and_range(self):
        img = np.full((32, 32, 3), 255, dtype=np.uint8)
        f = image_features(img)
        assert f.shape == (192,)
        assert f.max() == 1.0

    def test_too_small(self):
        with pytest.raises(ValueError):
            image_features(np.zeros((4, 4, 3), dtype=np.uint8))


class TestEvalAccuracy:
    def test_originals_reach_clean_accuracy(self, tmp_path):
        originals, labels = make_corpus(tmp_path)
        recons = tmp_path / "recons"
        bucket = recons / "1000"
        bucket.mkdir(parents=True)
        for ppm in originals.glob("*.ppm"):
            (bucket / ppm.name).write_bytes(ppm.read_bytes())
        rows = eval_accuracy(originals, recons, labels)
        assert len(rows) == 1
        r, acc, n = rows[0]
        assert r == 1000 and n == 12
        # reconstructions identical to originals: exactly the clean accuracy
        clf = NearestCentroidClassifier()
        names = sorted(read_labels(labels))
        from vit_sidecar.classify import _features_for

        feats = _features_for(originals, names)
        truth = np.array([read_labels(labels)[n_] for n_ in names])
        clean = float((clf.fit(feats, truth).predict(feats) == truth).mean())
        assert acc == clean

    def test_blank_reconstructions_do_not_beat_clean(self, tmp_path):
        originals, labels = make_corpus(tmp_path)
        recons = tmp_path / "recons"
        for rate, maker in ((10, "blank"), (9999, "copy")):
            bucket = recons / str(rate)
            bucket.mkdir(parents=True)
            for ppm in originals.glob("*.ppm"):
                if maker == "copy":
                    (bucket / ppm.name).write_bytes(ppm.read_bytes())
                else:
                    save_ppm(bucket / ppm.name, np.full((16, 16, 3), 128, np.uint8))
        rows = eval_accuracy(originals, recons, labels)
        assert [r for r, _, _ in rows] == [10, 9999]
        blank_acc, clean_acc = rows[0][1], rows[1][1]
        assert blank_acc <= clean_acc

    def test_missing_file(self, tmp_path):
        originals, labels = make_corpus(tmp_path, n=3)
        recons = tmp_path / "recons"
        (recons / "5").mkdir(parents=True)
        with pytest.raises(FileNotFoundError):
            eval_accuracy(originals, recons, labels)

    def test_no_buckets(self, tmp_path):
        originals, labels = make_corpus(tmp_path, n=3)
        empty = tmp_path / "none"
        empty.mkdir()
        with pytest.raises(ValueError):
            eval_accuracy(originals, empty, labels)


def test_read_labels_errors(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("name,label\n")
    with pytest.raises(ValueError):
        read_labels(path)


def test_accuracy_csv_golden():
    text = accuracy_csv([(100, 0.5, 10), (200, 0.75, 10)])
    assert text == "r,accuracy,n\n100,0.5,10\n200,0.75,10\n"


def test_count_inversions():
    assert count_inversions([0.1, 0.5, 0.5, 0.9]) == 0
    assert count_inversions([0.5, 0.4, 0.6]) == 1
    assert count_inversions([3, 2, 1]) == 2
