"""Dataset container, response types, standardization and row splitting."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

_MASK64 = (1 << 64) - 1

RESPONSE_KINDS = ("real", "binary", "count", "class")


@dataclass(frozen=True)
class RngSpec:
    """Counter-based RNG handle: identical (seed, stream) replays identical draws.

    Streams derived with spawn() are independent Philox streams, so
    replicate-level parallelism stays bitwise reproducible.
    """

    seed: int
    stream: int = 0

    def generator(self):
        key = np.array([self.seed & _MASK64, self.stream & _MASK64],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def spawn(self, k):
        """Derive the k-th child stream."""
        child = (self.stream * 0x9E3779B97F4A7C15 + k + 1) & _MASK64
        return RngSpec(self.seed, child)


def _as_rng(rng):
    if isinstance(rng, RngSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngSpec(int(rng)).generator()
    raise TypeError("rng must be an RngSpec, numpy Generator or integer seed")


@dataclass(frozen=True)
class Response:
    """Response vector tagged with its kind.

    kind : 'real' | 'binary' | 'count' | 'class'
    n_classes : number of categories, class kind only (labels are 1..K).
    """

    values: np.ndarray
    kind: str
    n_classes: int = 0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("response must be a non-empty vector")
        if self.kind not in RESPONSE_KINDS:
            raise ValueError(f"unknown response kind {self.kind!r}")
        if self.kind == "real":
            v = v.astype(float)
            if not np.all(np.isfinite(v)):
                raise ValueError("real response contains non-finite entries")
        elif self.kind == "binary":
            v = v.astype(float)
            if not np.all(np.isin(v, (0.0, 1.0))):
                raise ValueError("binary response entries must be 0 or 1")
        elif self.kind == "count":
            if np.any(np.asarray(v) < 0) or np.any(np.asarray(v) != np.floor(v)):
                raise ValueError("count response entries must be nonnegative integers")
            v = v.astype(float)
        else:
            iv = np.asarray(v)
            if np.any(iv != np.floor(iv)):
                raise ValueError("class labels must be integers")
            iv = iv.astype(int)
            k = self.n_classes if self.n_classes else int(iv.max())
            if k < 2:
                raise ValueError("class response needs at least two classes")
            present = np.unique(iv)
            if present.min() < 1 or present.max() > k:
                raise ValueError(f"class labels must lie in 1..{k}")
            if len(present) != k:
                missing = sorted(set(range(1, k + 1)) - set(present.tolist()))
                raise ValueError(f"classes {missing} absent from response")
            object.__setattr__(self, "n_classes", k)
            v = iv
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    @staticmethod
    def real(v):
        return Response(np.asarray(v, dtype=float), "real")

    @staticmethod
    def binary(v):
        return Response(np.asarray(v), "binary")

    @staticmethod
    def count(v):
        return Response(np.asarray(v), "count")

    @staticmethod
    def class_label(v, n_classes=0):
        return Response(np.asarray(v), "class", n_classes)


@dataclass(frozen=True)
class Dataset:
    """Immutable design matrix plus response.

    x is n-by-p; column_means / column_sds record the standardization applied
    (zeros/ones when raw).  constant_columns lists zero-variance column
    positions, which screening skips.  All positions are 0-based.
    """

    x: np.ndarray
    y: Response
    column_means: np.ndarray = None
    column_sds: np.ndarray = None
    standardized: bool = False
    constant_columns: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    feature_names: tuple = None

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        if x.ndim != 2:
            raise ValueError("design matrix must be 2-dimensional")
        n, p = x.shape
        if n < 2 or p < 1:
            raise ValueError("need at least 2 rows and 1 column")
        if not np.all(np.isfinite(x)):
            raise ValueError("design matrix contains non-finite entries")
        if len(self.y) != n:
            raise ValueError("response length does not match row count")
        object.__setattr__(self, "x", x)
        if self.column_means is None:
            object.__setattr__(self, "column_means", np.zeros(p))
        if self.column_sds is None:
            object.__setattr__(self, "column_sds", np.ones(p))
        if self.feature_names is not None and len(self.feature_names) != p:
            raise ValueError("feature_names length does not match column count")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def usable_columns(self):
        """Columns eligible for screening (non-constant)."""
        mask = np.ones(self.p, dtype=bool)
        mask[self.constant_columns] = False
        return np.flatnonzero(mask)

    def subset_rows(self, rows):
        rows = np.asarray(rows, dtype=int)
        y = self.y
        sub = y.values[rows]
        ynew = Response(sub, y.kind, y.n_classes if y.kind == "class" else 0)
        return replace(self, x=self.x[rows], y=ynew)

    def name_of(self, j):
        if self.feature_names is not None:
            return self.feature_names[j]
        return f"x{j + 1}"


def standardize(dataset):
    """Center and scale every non-constant column to unit sample sd (divisor n-1).

    Constant columns are left centered-only and recorded in constant_columns
    so the screening stage can skip them.  Raises on an already-standardized
    input and on an all-constant design.
    """
    if dataset.standardized:
        raise ValueError("dataset is already standardized")
    x = dataset.x
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    constant = np.flatnonzero(sds <= 1e-14 * np.maximum(1.0, np.abs(means)))
    if constant.size == dataset.p:
        raise ValueError("degenerate design: every column is constant")
    scale = sds.copy()
    scale[constant] = 1.0
    z = (x - means) / scale
    return replace(dataset, x=z, column_means=means, column_sds=scale,
                   standardized=True, constant_columns=constant)


def destandardize_coefs(intercept, beta_map, dataset):
    """Map standardized-scale (intercept, {j: coef}) back to the original scale.

    Works for scalar coefficients and per-class coefficient vectors alike.
    """
    if not dataset.standardized:
        return intercept, dict(beta_map)
    out = {}
    shift = np.zeros_like(np.asarray(intercept, dtype=float))
    for j, b in beta_map.items():
        b = np.asarray(b, dtype=float)
        out[j] = b / dataset.column_sds[j]
        shift = shift + out[j] * dataset.column_means[j]
    return np.asarray(intercept, dtype=float) - shift, out


def restandardize_coefs(intercept, beta_map, dataset):
    """Inverse of destandardize_coefs (original scale back to standardized)."""
    if not dataset.standardized:
        return intercept, dict(beta_map)
    out = {}
    shift = np.zeros_like(np.asarray(intercept, dtype=float))
    for j, b in beta_map.items():
        b = np.asarray(b, dtype=float)
        out[j] = b * dataset.column_sds[j]
        shift = shift + b * dataset.column_means[j]
    return np.asarray(intercept, dtype=float) + shift, out


def split_half(n, rng):
    """Random partition of range(n) into halves of size ceil(n/2) and floor(n/2)."""
    if n < 4:
        raise ValueError("sample too small to split")
    perm = _as_rng(rng).permutation(n)
    cut = (n + 1) // 2
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def split_groups(n, k, rng):
    """Random partition of range(n) into k near-equal groups."""
    if k < 2:
        raise ValueError("need at least two groups")
    if n < 2 * k:
        raise ValueError("sample too small to split")
    perm = _as_rng(rng).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, k)]


def load_csv(path, response, kind=None):
    """Read a headered CSV into a Dataset.

    response names the response column; every other column becomes a feature.
    Missing or non-numeric cells are rejected with row/column diagnostics.
    kind forces the response kind; by default it is inferred (integer 0/1 ->
    binary, nonnegative integers -> count, integers from 1..K covering every
    class -> class when kind='class', otherwise real).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise ValueError(f"{path}: no column named {response!r}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    ycol = header.index(response)
    bad = []
    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                bad.append((i + 2, header[j]))
                continue
            try:
                data[i, j] = float(cell)
            except ValueError:
                bad.append((i + 2, header[j]))
    if bad:
        where = ", ".join(f"row {r} column {c!r}" for r, c in bad[:10])
        more = "" if len(bad) <= 10 else f" (+{len(bad) - 10} more)"
        raise ValueError(f"{path}: missing or non-numeric values at {where}{more}")
    yraw = data[:, ycol]
    xcols = [j for j in range(len(header)) if j != ycol]
    x = data[:, xcols]
    names = tuple(header[j] for j in xcols)
    y = _infer_response(yraw, kind)
    return Dataset(x, y, feature_names=names)


def _infer_response(yraw, kind):
    if kind is not None:
        if kind == "class":
            return Response.class_label(yraw)
        return Response(yraw, kind)
    is_int = np.all(yraw == np.floor(yraw))
    if is_int and np.all(np.isin(yraw, (0.0, 1.0))) and len(np.unique(yraw)) == 2:
        return Response.binary(yraw)
    if is_int and np.all(yraw >= 0):
        return Response.count(yraw)
    return Response.real(yraw)
