"""Datasets: LIBSVM parsing, synthetic logistic data and client partitioning."""

from dataclasses import dataclass, field

import numpy as np


class LibsvmParseError(ValueError):
    """Raised for malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Sample:
    """One labelled example with sparse features.

    ``indices`` are 0-based and strictly increasing; ``label`` is -1 or +1.
    """

    indices: tuple
    values: tuple
    label: float

    @property
    def dim(self):
        return self.indices[-1] + 1 if self.indices else 0


@dataclass
class Partition:
    assignments: list
    scheme: str
    sizes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sizes = np.array([len(a) for a in self.assignments], dtype=int)

    @property
    def n_clients(self):
        return len(self.assignments)


def _remap_label(raw, lineno):
    try:
        label = float(raw)
    except ValueError:
        raise LibsvmParseError(lineno, f"bad label {raw!r}") from None
    if label == 0.0:
        return -1.0
    if label in (-1.0, 1.0):
        return label
    raise LibsvmParseError(lineno, f"label {raw!r} is not binary")


def parse_libsvm(data):
    """Parse LIBSVM text (``str`` or ``bytes``) into a list of `Sample`.

    Labels 0/1 are mapped to -1/+1. Blank lines are skipped.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    samples = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        label = _remap_label(tokens[0], lineno)
        indices, values = [], []
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise LibsvmParseError(lineno, f"expected idx:val, got {tok!r}")
            try:
                i, v = int(idx), float(val)
            except ValueError:
                raise LibsvmParseError(lineno, f"bad feature {tok!r}") from None
            if i < 1:
                raise LibsvmParseError(lineno, f"index {i} is not 1-based")
            if indices and i - 1 <= indices[-1]:
                raise LibsvmParseError(lineno, "indices not strictly increasing")
            indices.append(i - 1)
            values.append(v)
        samples.append(Sample(tuple(indices), tuple(values), label))
    return samples


def read_libsvm(path):
    with open(path, "rb") as fh:
        return parse_libsvm(fh.read())


def format_libsvm(samples):
    """Serialize samples back to LIBSVM text (1-based indices, repr floats)."""
    lines = []
    for s in samples:
        feats = " ".join(f"{i + 1}:{v!r}" for i, v in zip(s.indices, s.values))
        label = "+1" if s.label > 0 else "-1"
        lines.append(f"{label} {feats}".rstrip())
    return "".join(line + "\n" for line in lines)


def feature_dim(samples):
    return max((s.dim for s in samples), default=0)


def to_dense(samples, dim=None):
    """Densify to ``(X, y)`` with ``X`` of shape (n, dim)."""
    if dim is None:
        dim = feature_dim(samples)
    X = np.zeros((len(samples), dim))
    y = np.empty(len(samples))
    for row, s in enumerate(samples):
        X[row, list(s.indices)] = s.values
        y[row] = s.label
    return X, y


def from_dense(X, y):
    samples = []
    for row, label in zip(np.asarray(X), np.asarray(y)):
        nz = np.flatnonzero(row)
        samples.append(Sample(tuple(int(i) for i in nz),
                              tuple(float(row[i]) for i in nz),
                              float(label)))
    return samples


def maxabs_scale(X):
    """Scale each column into [-1, 1]; all-zero columns are left alone."""
    scale = np.abs(X).max(axis=0)
    scale[scale == 0] = 1.0
    return X / scale


def planted_weights(m, sep, seed):
    """The ground-truth weights that `synth_logistic` draws for these inputs."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(m)
    return sep * w / np.linalg.norm(w)


def synth_logistic(m, n, sep, seed):
    """Gaussian features with labels drawn from a logistic model.

    The planted weight vector has norm ``sep``; see `planted_weights`.
    """
    if m < 1 or n < 2:
        raise ValueError("need m >= 1 and n >= 2")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(m)
    w = sep * w / np.linalg.norm(w)
    X = rng.standard_normal((n, m))
    p = 1.0 / (1.0 + np.exp(-X @ w))
    y = np.where(rng.random(n) < p, 1.0, -1.0)
    return from_dense(X, y)


def _iid(n, K, rng):
    return [np.sort(a) for a in np.array_split(rng.permutation(n), K)]


def _dirichlet(labels, K, beta, rng):
    buckets = [[] for _ in range(K)]
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        props = rng.dirichlet(np.full(K, beta))
        cuts = (np.cumsum(props)[:-1] * len(idx)).astype(int)
        for k, part in enumerate(np.split(idx, cuts)):
            buckets[k].extend(part.tolist())
    # local gradients are undefined on an empty client
    for k in range(K):
        if not buckets[k]:
            donor = max(range(K), key=lambda j: len(buckets[j]))
            buckets[k].append(buckets[donor].pop())
    return [np.sort(np.array(b, dtype=int)) for b in buckets]


def partition(samples, K, scheme="iid", seed=0, beta=0.5):
    """Split sample indices across ``K`` clients.

    ``scheme`` is ``"iid"`` (sizes differ by at most one) or ``"dirichlet"``
    (per-class proportions drawn from Dirichlet(beta)). ``samples`` may be a
    sequence of `Sample` or a label array.
    """
    labels = np.array([s.label if isinstance(s, Sample) else s for s in samples])
    n = len(labels)
    if K < 1 or K > n:
        raise ValueError(f"cannot split {n} samples across {K} clients")
    rng = np.random.default_rng(seed)
    if scheme == "iid":
        parts = _iid(n, K, rng)
    elif scheme == "dirichlet":
        parts = _dirichlet(labels, K, beta, rng)
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    return Partition(parts, scheme)
