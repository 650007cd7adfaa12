"""Regenerate the bundled LIBSVM-format datasets.

iris and wine come from scikit-learn's bundled CSVs; segment comes from the
UCI Statlog image-segmentation table (the copy shipped inside the `river`
wheel as river/datasets/segment.csv.zip, path given on the command line).
Every feature is min-max scaled to [-1, 1] the way LIBSVM's svm-scale does,
zero entries and constant columns are omitted, values printed with %g.

    python3 make_datasets.py path/to/segment.csv
"""
import csv
import os
import sys

import numpy as np
from sklearn.datasets import load_iris, load_wine

HERE = os.path.dirname(os.path.abspath(__file__))

SEGMENT_CLASSES = ["brickface", "sky", "foliage", "cement", "window", "path", "grass"]


def scale_and_write(path, x, y):
    lo, hi = x.min(axis=0), x.max(axis=0)
    with open(path, "w") as f:
        for row, label in zip(x, y):
            parts = [str(int(label))]
            for j, v in enumerate(row):
                if hi[j] == lo[j]:
                    continue
                s = -1.0 + 2.0 * (v - lo[j]) / (hi[j] - lo[j])
                if s != 0.0:
                    parts.append("%d:%g" % (j + 1, s))
            f.write(" ".join(parts) + "\n")


def main():
    iris = load_iris()
    scale_and_write(os.path.join(HERE, "iris.scale"), iris.data, iris.target + 1)
    wine = load_wine()
    scale_and_write(os.path.join(HERE, "wine.scale"), wine.data, wine.target + 1)

    with open(sys.argv[1]) as f:
        rows = list(csv.DictReader(f))
    cols = [c for c in rows[0].keys() if c != "category"]
    x = np.array([[float(r[c]) for c in cols] for r in rows])
    # region-pixel-count (always 9) is the third UCI column; river drops it.
    x = np.insert(x, 2, 9.0, axis=1)
    y = np.array([SEGMENT_CLASSES.index(r["category"]) + 1 for r in rows])
    scale_and_write(os.path.join(HERE, "segment.scale"), x, y)


if __name__ == "__main__":
    main()
