"""Regenerates the bundled CSV fixtures in data/."""
import csv
import pathlib

import numpy as np
from sklearn.datasets import make_moons

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def moons():
    x, y = make_moons(n_samples=400, noise=0.2, random_state=0)
    rows = [[f"{a:.6f}", f"{b:.6f}", int(c)] for (a, b), c in zip(x, y)]
    write(DATA / "toy_moons.csv", ["x1", "x2", "label"], rows)


def separable():
    rng = np.random.default_rng(7)
    n = 300
    y = rng.integers(0, 2, n)
    w = np.array([1.0, -0.6])
    x = rng.uniform(-3, 3, (n, 2))
    # push each point at least 0.5 away from the boundary w.x = 0
    margin = x @ w / np.linalg.norm(w)
    shift = (np.where(y == 1, 1.0, -1.0) * (0.5 + np.abs(margin)) - margin)
    x = x + np.outer(shift, w / np.linalg.norm(w))
    noise = rng.normal(0, 1, (n, 2))
    rows = [[f"{v:.6f}" for v in np.concatenate([xi, ni])] + ["pos" if c else "neg"]
            for xi, ni, c in zip(x, noise, y)]
    write(DATA / "toy_separable.csv", ["f1", "f2", "n1", "n2", "label"], rows)


if __name__ == "__main__":
    DATA.mkdir(exist_ok=True)
    moons()
    separable()
