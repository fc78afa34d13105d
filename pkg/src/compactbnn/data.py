"""Dataset ingestion, min-max scaling, lag embedding, splitting and encoding.

Built-in descriptors carry the network configuration used for each benchmark.
Iris, Sunspots and Lazer ship with the package; the others are read from a
user-supplied CSV (``data_path``) following the descriptor's column layout.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .nnet import ModelSpec, Task

__all__ = [
    "Dataset",
    "DataError",
    "SplitIndices",
    "MinMaxScaler",
    "DatasetDescriptor",
    "BUILTIN",
    "load_csv",
    "normalize_minmax",
    "window_series",
    "split_train_test",
    "one_hot",
    "load_builtin",
    "Prepared",
    "prepare",
]


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class MinMaxScaler:
    x_min: np.ndarray
    x_max: np.ndarray
    y_min: np.ndarray = None
    y_max: np.ndarray = None

    def transform_x(self, x):
        return (np.asarray(x, float) - self.x_min) / (self.x_max - self.x_min)

    def inverse_x(self, x):
        return np.asarray(x, float) * (self.x_max - self.x_min) + self.x_min

    def transform_y(self, y):
        return (np.asarray(y, float) - self.y_min) / (self.y_max - self.y_min)

    def inverse_y(self, y):
        return np.asarray(y, float) * (self.y_max - self.y_min) + self.y_min


@dataclass(frozen=True)
class Dataset:
    """Features ``x`` (N x F) and targets ``y``.

    For regression ``y`` is an N x output float matrix; for classification it is
    an integer label vector in ``{0..K-1}``.
    """

    x: np.ndarray
    y: np.ndarray
    task: Task
    name: str = ""
    feature_names: tuple = ()
    class_names: tuple = ()
    n_classes: int = 0
    scaler: MinMaxScaler = None

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise DataError(f"features {self.x.shape} and targets {self.y.shape} disagree")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    @property
    def output_size(self):
        if self.task is Task.CLASSIFICATION:
            return self.n_classes
        return self.y.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(self, x=self.x[idx], y=self.y[idx])

    def targets_matrix(self):
        """Targets as the float matrix the likelihood kernels expect."""
        if self.task is Task.CLASSIFICATION:
            return one_hot(self.y, self.n_classes)
        return np.ascontiguousarray(self.y, dtype=float)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


def _column_index(header, col, path):
    if isinstance(col, int):
        if not 0 <= col < len(header):
            raise DataError(f"{path}: column index {col} out of range (have {len(header)})")
        return col
    if col not in header:
        raise DataError(f"{path}: missing column {col!r}")
    return header.index(col)


def _encode_labels(raw):
    """Integer-valued labels keep numeric order; other labels follow first appearance."""
    try:
        values = [float(v) for v in raw]
        if all(v == int(v) for v in values):
            uniq = sorted(set(int(v) for v in values))
            lookup = {u: i for i, u in enumerate(uniq)}
            return np.array([lookup[int(v)] for v in values]), tuple(str(u) for u in uniq)
    except ValueError:
        pass
    names = list(dict.fromkeys(raw))
    lookup = {n: i for i, n in enumerate(names)}
    return np.array([lookup[v] for v in raw]), tuple(names)


def load_csv(path, feature_columns=None, target_columns=None, task=Task.REGRESSION, name=None):
    """Read a headed CSV into a raw (unnormalized) dataset.

    Columns are given by header name or position. ``feature_columns=None``
    takes every column that is not a target; ``target_columns=None`` takes the
    last column. Classification uses exactly one target column.
    """
    path = Path(path)
    task = Task(task)
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if target_columns is None:
        target_columns = [len(header) - 1]
    elif isinstance(target_columns, (str, int)):
        target_columns = [target_columns]
    t_idx = [_column_index(header, c, path) for c in target_columns]
    if feature_columns is None:
        f_idx = [i for i in range(len(header)) if i not in t_idx]
    else:
        f_idx = [_column_index(header, c, path) for c in feature_columns]
    if task is Task.CLASSIFICATION and len(t_idx) != 1:
        raise DataError("classification needs exactly one target column")

    x = np.empty((len(body), len(f_idx)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} cells, header has {len(header)}")
        for j, c in enumerate(f_idx):
            try:
                x[r, j] = float(row[c])
            except ValueError:
                raise DataError(f"{path}: row {r + 2}, column {header[c]!r}: "
                                f"cannot parse {row[c]!r} as a number") from None
            if not math.isfinite(x[r, j]):
                raise DataError(f"{path}: row {r + 2}, column {header[c]!r}: missing or non-finite value")

    feature_names = tuple(header[c] for c in f_idx)
    if task is Task.CLASSIFICATION:
        raw = [row[t_idx[0]].strip() for row in body]
        if any(v == "" for v in raw):
            bad = raw.index("") + 2
            raise DataError(f"{path}: row {bad}, column {header[t_idx[0]]!r}: empty label")
        y, class_names = _encode_labels(raw)
        return Dataset(x, y, task, name or path.stem, feature_names, class_names, len(class_names))

    y = np.empty((len(body), len(t_idx)))
    for r, row in enumerate(body):
        for j, c in enumerate(t_idx):
            try:
                y[r, j] = float(row[c])
            except ValueError:
                raise DataError(f"{path}: row {r + 2}, column {header[c]!r}: "
                                f"cannot parse {row[c]!r} as a number") from None
    return Dataset(x, y, task, name or path.stem, feature_names)


def normalize_minmax(dataset, train_idx=None):
    """Scale features (and regression targets) to [0, 1] using training-row extremes.

    The same affine map is applied to every row, so test values may fall
    outside [0, 1].
    """
    train_idx = np.arange(dataset.n) if train_idx is None else np.asarray(train_idx, dtype=int)
    if train_idx.size == 0:
        raise DataError("cannot fit scaling on an empty training split")
    xt = dataset.x[train_idx]
    x_min, x_max = xt.min(axis=0), xt.max(axis=0)
    const = np.flatnonzero(x_max <= x_min)
    if const.size:
        names = [dataset.feature_names[i] if dataset.feature_names else str(i) for i in const]
        raise DataError(f"constant feature column(s) on the training split: {', '.join(names)}; drop them")
    y_min = y_max = None
    y = dataset.y
    if dataset.task is Task.REGRESSION:
        yt = dataset.y[train_idx]
        y_min, y_max = yt.min(axis=0), yt.max(axis=0)
        if np.any(y_max <= y_min):
            raise DataError("constant regression target on the training split")
    scaler = MinMaxScaler(x_min, x_max, y_min, y_max)
    x = scaler.transform_x(dataset.x)
    if dataset.task is Task.REGRESSION:
        y = scaler.transform_y(dataset.y)
    return replace(dataset, x=x, y=y, scaler=scaler)


def window_series(series, window=4, horizon=1, name="series"):
    """Lag-embed a univariate series: ``s[i:i+window] -> s[i+window+horizon-1]``."""
    s = np.asarray(series, dtype=float).ravel()
    if window < 1 or horizon < 1:
        raise DataError("window and horizon must be >= 1")
    n = s.shape[0] - window - horizon + 1
    if n < 1:
        raise DataError(f"series of length {s.shape[0]} is too short for window {window} and horizon {horizon}")
    x = np.lib.stride_tricks.sliding_window_view(s, window)[:n].copy()
    y = s[window + horizon - 1: window + horizon - 1 + n].reshape(-1, 1).copy()
    names = tuple(f"lag{window - k}" for k in range(window))
    return Dataset(x, y, Task.REGRESSION, name, names)


def split_train_test(dataset_or_n, ratio=0.6, seed=0, ordered=False):
    """Train/test partition with ``floor(ratio * N)`` training rows.

    Ordered splits (time series) take the leading rows for training; otherwise
    rows are shuffled with a seeded generator first.
    """
    n = dataset_or_n if isinstance(dataset_or_n, (int, np.integer)) else dataset_or_n.n
    if n < 5:
        raise DataError("need at least 5 rows to split")
    n_train = int(math.floor(ratio * n))
    if ordered:
        idx = np.arange(n)
    else:
        idx = np.random.default_rng(seed).permutation(n)
    return SplitIndices(np.sort(idx[:n_train]), np.sort(idx[n_train:]))


def one_hot(labels, k):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DataError("labels must be a vector")
    if labels.size and (labels.min() < 0 or labels.max() >= k or np.any(labels != np.round(labels))):
        raise DataError(f"labels must be integers in 0..{k - 1}")
    z = np.zeros((labels.shape[0], k))
    z[np.arange(labels.shape[0]), labels.astype(int)] = 1.0
    return z


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    task: Task
    hidden_size: int
    output_size: int
    n_features: int
    bundled: str = None
    series: bool = False
    window: int = 4
    horizon: int = 1
    ordered: bool = False
    feature_columns: tuple = None
    target_columns: tuple = None
    notes: str = ""

    def model_spec(self, n_features=None):
        return ModelSpec(n_features or self.n_features, self.hidden_size, self.output_size, self.task)


BUILTIN = {
    d.name: d
    for d in [
        DatasetDescriptor("ionosphere", Task.CLASSIFICATION, 50, 2, 34,
                          notes="34 numeric features, label in the last column"),
        DatasetDescriptor("iris", Task.CLASSIFICATION, 12, 3, 4, bundled="iris.csv"),
        DatasetDescriptor("abalone4", Task.CLASSIFICATION, 12, 4, 8,
                          notes="8 numeric features (sex encoded numerically), 4-class label last"),
        DatasetDescriptor("exp325", Task.CLASSIFICATION, 8, 6, 3,
                          notes="bulk density, porosity, resistivity; 6 lithology labels last"),
        DatasetDescriptor("exp310", Task.CLASSIFICATION, 8, 6, 3,
                          notes="bulk density, porosity, resistivity; 6 lithology labels last"),
        DatasetDescriptor("lazer", Task.REGRESSION, 5, 1, 4, bundled="lazer.csv", series=True,
                          ordered=True, target_columns=("intensity",)),
        DatasetDescriptor("sunspots", Task.REGRESSION, 5, 1, 4, bundled="sunspots.csv", series=True,
                          ordered=True, target_columns=("sunspots",)),
        DatasetDescriptor("abalone", Task.REGRESSION, 12, 1, 8,
                          notes="8 numeric features (sex encoded numerically), rings last"),
    ]
}


def _read_series(path, column):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if column not in reader.fieldnames:
            raise DataError(f"{path}: missing column {column!r}")
        out = []
        for r, row in enumerate(reader):
            try:
                out.append(float(row[column]))
            except (TypeError, ValueError):
                raise DataError(f"{path}: row {r + 2}, column {column!r}: "
                                f"cannot parse {row[column]!r} as a number") from None
    return np.array(out)


def load_builtin(name, data_path=None):
    """Raw dataset for a built-in descriptor, from the bundled file or ``data_path``."""
    if name not in BUILTIN:
        raise DataError(f"unknown dataset {name!r}; built-ins: {', '.join(BUILTIN)}")
    desc = BUILTIN[name]
    if data_path is None:
        if desc.bundled is None:
            raise DataError(f"dataset {name!r} is not bundled; pass a CSV with data_path ({desc.notes})")
        ref = resources.files("compactbnn._datasets").joinpath(desc.bundled)
        with resources.as_file(ref) as p:
            return _load_with(desc, p)
    return _load_with(desc, Path(data_path))


def _load_with(desc, path):
    if desc.series:
        column = desc.target_columns[0] if desc.target_columns else None
        if column is None:
            with open(path, newline="") as f:
                column = next(csv.reader(f))[-1].strip()
        return window_series(_read_series(path, column), desc.window, desc.horizon, desc.name)
    return load_csv(path, desc.feature_columns, desc.target_columns, desc.task, desc.name)


@dataclass(frozen=True)
class Prepared:
    """A normalized dataset with its split and the matching model spec."""

    dataset: Dataset
    split: SplitIndices
    spec: ModelSpec
    train: Dataset = field(repr=False, default=None)
    test: Dataset = field(repr=False, default=None)


def prepare(raw, hidden_size, ratio=0.6, seed=0, ordered=False, output_size=None):
    """Split, fit min-max scaling on the training rows, and build the model spec."""
    split = split_train_test(raw, ratio, seed, ordered)
    ds = normalize_minmax(raw, split.train)
    if ds.task is Task.CLASSIFICATION:
        out = output_size or ds.n_classes
        if ds.y.max() >= out:
            raise DataError(f"labels exceed the {out} output classes")
        ds = replace(ds, n_classes=out)
    else:
        out = ds.y.shape[1]
    spec = ModelSpec(ds.n_features, hidden_size, out, ds.task)
    return Prepared(ds, split, spec, ds.subset(split.train), ds.subset(split.test))
