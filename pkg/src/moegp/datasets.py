"""Synthetic generators, CSV input/output and train/test splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = ""
    feature_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.feature_names:
            object.__setattr__(self, "feature_names",
                               tuple(f"x_{j + 1}" for j in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx, name=None) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], name or self.name, self.feature_names)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise InvalidArgumentError("train_fraction must lie in (0, 1)")


# -- Higdon -------------------------------------------------------------------

HIGDON_NOISE_SD = 0.1


def higdon_f(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < 10,
                    np.sin(np.pi * x / 5) + 0.2 * np.cos(4 * np.pi * x / 5),
                    x / 10 - 1)


def gen_higdon(n, seed=0) -> Dataset:
    """x ~ U[0, 20], y ~ N(f(x), 0.1^2) with the two-branch Higdon function."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 20.0, n)
    y = higdon_f(x) + HIGDON_NOISE_SD * rng.standard_normal(n)
    return Dataset(x[:, None], y, "higdon")


# -- Bernholdt-style surrogate ------------------------------------------------

BERNHOLDT_KNOTS = (-1.0, 3.0, 7.0)
BERNHOLDT_DOMAIN = (-4.0, 10.0)
# midpoints of the four plateaus of g
BERNHOLDT_PLATEAU_CENTERS = (-2.5, 1.0, 5.0, 8.5)
BERNHOLDT_LEVELS = (-2.0, 0.0, 2.0, 4.0)


def bernholdt_g(x):
    """Smoothed four-level staircase on [-4, 10]: levels -2, 0, 2, 4."""
    x = np.asarray(x, dtype=float)
    return 1.0 + sum(np.tanh(8.0 * (x - c)) for c in BERNHOLDT_KNOTS)


def bernholdt_f(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return bernholdt_g(X[:, 0]) * bernholdt_g(X[:, 1])


def bernholdt_range() -> float:
    lo, hi = bernholdt_g(np.array(BERNHOLDT_DOMAIN))
    products = [lo * lo, lo * hi, hi * hi]
    return float(max(products) - min(products))


BERNHOLDT_NOISE_SD = 0.05 * bernholdt_range()


def plateau_products():
    """Distinct noiseless output levels of the surrogate, ascending."""
    return sorted({a * b for a in BERNHOLDT_LEVELS for b in BERNHOLDT_LEVELS})


def distinguishable_levels(levels, noise_sd, k=5.0):
    """Greedy count of levels pairwise separated by at least ``k`` noise sds."""
    kept = []
    for v in sorted(levels):
        if not kept or v - kept[-1] >= k * noise_sd:
            kept.append(v)
    return len(kept)


def gen_bernholdt(n, seed=0) -> Dataset:
    """x ~ U[-4, 10]^2, y = g(x_1) g(x_2) + noise with sd 5% of the output range."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(*BERNHOLDT_DOMAIN, size=(n, 2))
    y = bernholdt_f(X) + BERNHOLDT_NOISE_SD * rng.standard_normal(n)
    return Dataset(X, y, "bernholdt")


GENERATORS = {"higdon": gen_higdon, "bernholdt": gen_bernholdt}


# -- CSV ------------------------------------------------------------------------

def _parse_float(cell, line):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {cell!r}", line)
    return v


def read_csv_matrix(path):
    """Header and float rows of a CSV file; raises ParseError on bad content."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ParseError("missing header row", 1)
        header = [h.strip() for h in header]
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(row)}", line)
            rows.append([_parse_float(c.strip(), line) for c in row])
    if not rows:
        raise ParseError("no data rows")
    return header, np.array(rows, dtype=float)


def load_csv(path, name=None) -> Dataset:
    """Load ``x_1..x_d,y`` data; the last column is the output."""
    header, M = read_csv_matrix(path)
    if M.shape[1] < 2:
        raise ParseError("need at least one input column and one output column")
    return Dataset(M[:, :-1], M[:, -1], name or Path(path).stem, tuple(header[:-1]))


def save_csv(ds: Dataset, path):
    """Write ``ds`` with a header row; floats are written round-trip exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, "y"])
        for xi, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def train_test_split(ds: Dataset, spec: SplitSpec = SplitSpec()):
    """Seeded uniform split into disjoint train and test sets (rows kept in order)."""
    if ds.n < 2:
        raise InvalidArgumentError("need at least two rows to split")
    n_train = int(math.floor(spec.train_fraction * ds.n + 0.5))
    n_train = min(max(n_train, 1), ds.n - 1)
    perm = np.random.default_rng(spec.seed).permutation(ds.n)
    train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return ds.subset(train, ds.name), ds.subset(test, ds.name)
