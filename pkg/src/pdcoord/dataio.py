"""
LIBSVM datasets, standardization, and partitioning of observations across agents.
"""

import io
import re
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import sparse

_NUMBER = re.compile(r"[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_INDEX = re.compile(r"[0-9]+")


class LibsvmError(ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class SparseDataset:
    """
    Observations ``(a_t, y_t)`` with a CSR feature matrix and labels in {-1, +1}.

    Feature indices are 0-based here and 1-based in LIBSVM files.
    """

    features: sparse.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        self.features = sparse.csr_matrix(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float).ravel()
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on the number of rows")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if not np.all(np.isfinite(self.features.data)):
            raise ValueError("features contain NaN or infinite values")

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def dense(self):
        return self.features.toarray()

    def rows(self):
        """Iterate over ``(indices, values, label)`` per observation."""
        F = self.features
        for t in range(self.m):
            lo, hi = F.indptr[t], F.indptr[t + 1]
            yield F.indices[lo:hi], F.data[lo:hi], self.labels[t]

    def same_as(self, other):
        """Exact equality of shape, stored entries and labels."""
        a, b = self.features, other.features
        return (a.shape == b.shape and np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices) and np.array_equal(a.data, b.data)
                and np.array_equal(self.labels, other.labels))


def _parse_number(token, line, what):
    if not _NUMBER.fullmatch(token):
        raise LibsvmError(line, f"malformed {what} {token!r}")
    return float(token)


def parse_libsvm(stream, n_features=None):
    """
    Read ``label idx:val idx:val ...`` lines.

    Blank lines and ``#`` comments are skipped. Labels must all lie in
    {-1, +1} or all in {0, 1}; the latter map 0 to -1. Indices are 1-based
    and strictly increasing within a line. Numbers use '.' as decimal mark
    regardless of locale.

    Parameters
    ----------
    stream : str or file-like
        Text or an open text stream.
    n_features : int, optional
        Force the feature dimension; defaults to the largest index seen.
    """
    text = stream if isinstance(stream, str) else stream.read()
    labels, indptr, indices, data = [], [0], [], []
    label_lines = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        body = raw.split("#", 1)[0].replace("−", "-").strip()
        if not body:
            continue
        tokens = body.split()
        labels.append(_parse_number(tokens[0], lineno, "label"))
        label_lines.append(lineno)
        last = 0
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep or not _INDEX.fullmatch(idx):
                raise LibsvmError(lineno, f"malformed feature token {tok!r}")
            j = int(idx)
            if j < 1:
                raise LibsvmError(lineno, f"feature index {j} is not 1-based")
            if j <= last:
                raise LibsvmError(lineno, f"feature indices must increase, got {j} after {last}")
            if n_features is not None and j > n_features:
                raise LibsvmError(lineno, f"feature index {j} exceeds n_features={n_features}")
            last = j
            indices.append(j - 1)
            data.append(_parse_number(val, lineno, "value"))
        indptr.append(len(indices))
    if not labels:
        raise LibsvmError(1, "empty file")
    y = np.asarray(labels)
    if np.all(np.isin(y, (-1.0, 1.0))):
        pass
    elif np.all(np.isin(y, (0.0, 1.0))):
        y = np.where(y == 0.0, -1.0, 1.0)
    else:
        # first label outside {-1, +1}: either foreign or a 0 mixed with -1
        t = int(np.flatnonzero(~np.isin(y, (-1.0, 1.0)))[0])
        raise LibsvmError(label_lines[t], f"label {labels[t]!r} is not in {{-1, +1}} or {{0, 1}}")
    p = max(indices) + 1 if indices else 0
    if n_features is not None:
        p = int(n_features)
    X = sparse.csr_matrix((np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64),
                           np.asarray(indptr, dtype=np.int64)), shape=(len(labels), p))
    return SparseDataset(X, y)


def read_libsvm(path, n_features=None):
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, n_features)


def format_libsvm(dataset):
    """LIBSVM text with labels ``+1``/``-1`` and 17 significant digits."""
    lines = []
    for idx, vals, y in dataset.rows():
        parts = ["+1" if y > 0 else "-1"]
        parts.extend(f"{j + 1}:{format(float(v), '.17g')}" for j, v in zip(idx, vals))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n" if lines else ""


def write_libsvm(dataset, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(format_libsvm(dataset))


def standardize(X):
    """
    Zero mean and unit population variance per column.

    Constant columns become all-zero instead of dividing by zero.
    """
    X = np.asarray(X.toarray() if sparse.issparse(X) else X, dtype=float)
    mean = X.mean(axis=0)
    centered = X - mean
    # second pass removes the rounding left by subtracting a large mean
    centered -= centered.mean(axis=0)
    std = np.sqrt(np.mean(centered ** 2, axis=0))
    # a column that is constant up to rounding has no usable scale
    scale = np.maximum(np.abs(mean), 1.0)
    const = std <= 1e-12 * scale
    out = np.zeros_like(centered)
    keep = ~const
    out[:, keep] = centered[:, keep] / std[keep]
    return out


#%% partitions

@dataclass
class Partition:
    blocks: List[np.ndarray]

    def __post_init__(self):
        allidx = np.concatenate(self.blocks) if self.blocks else np.array([], dtype=int)
        if len(np.unique(allidx)) != len(allidx):
            raise ValueError("partition blocks overlap")
        if len(allidx) and not np.array_equal(np.sort(allidx), np.arange(len(allidx))):
            raise ValueError("partition blocks do not cover 0..m-1")

    @property
    def sizes(self):
        return [len(b) for b in self.blocks]


def partition(m, N, mode="balanced", seed=0):
    """
    Split observations ``0..m-1`` into ``N`` blocks.

    ``balanced`` shuffles with ``seed`` and deals sizes ``ceil(m/N)`` or
    ``floor(m/N)``; ``contiguous`` keeps consecutive ranges of the same sizes.
    Indices inside each block are sorted.
    """
    m, N = int(m), int(N)
    if N < 1:
        raise ValueError("need at least one agent")
    if N > m:
        raise ValueError(f"cannot split {m} observations among {N} agents")
    if mode == "balanced":
        order = np.random.default_rng(seed).permutation(m)
    elif mode == "contiguous":
        order = np.arange(m)
    else:
        raise ValueError(f"unknown partition mode {mode!r}")
    return Partition([np.sort(b) for b in np.array_split(order, N)])


#%% synthetic data

def make_synthetic(m, p, seed=0, noise=0.5, flip=0.05):
    """
    Gaussian features with labels from a random linear rule.

    ``y = sign(A w + noise * e)`` with a fraction ``flip`` of labels then
    flipped, so the classes overlap and the regularized optimum is finite.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, p))
    w = rng.standard_normal(p)
    y = np.sign(A @ w + noise * rng.standard_normal(m))
    y[y == 0] = 1.0
    y[rng.random(m) < flip] *= -1.0
    return SparseDataset(sparse.csr_matrix(A), y)
