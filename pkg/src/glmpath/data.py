"""Feature/target ingestion, standardization, and binary artifact formats.

Binary matrix layout (little-endian)::

    b"GLMX" | u32 version | u64 n | u64 d | n*d float64 row-major

Model layout (little-endian)::

    b"GLMM" | u32 version | u32 family tag | u64 d | u64 k
    | f64 lambda | f64 alpha | d*k float64 beta (row-major) | k float64 beta0
    | u32 crc32 of everything after the magic
"""
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, PreconditionError

MATRIX_MAGIC = b"GLMX"
MATRIX_VERSION = 1
MODEL_MAGIC = b"GLMM"
MODEL_VERSION = 1

FAMILIES = ("gaussian", "binomial", "multinomial")

_MATRIX_HEADER = struct.Struct("<4sIQQ")
_MODEL_HEADER = struct.Struct("<4sIIQQdd")


def check_features(X):
    """Validate a feature matrix and return it as a C-contiguous float64 array."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise FormatError(f"feature matrix must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 1 or d < 1:
        raise FormatError(f"feature matrix must have n >= 1 and d >= 1, got {X.shape}")
    bad = ~np.isfinite(X)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise FormatError(f"non-finite value {X[row, col]!r} at (row={row}, col={col})")
    return X


@dataclass(frozen=True)
class TargetVector:
    kind: str  # "regression" | "classification"
    values: np.ndarray
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("regression", "classification"):
            raise FormatError(f"unknown target kind {self.kind!r}")
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise FormatError(f"targets must be 1-D, got shape {values.shape}")
        if self.kind == "regression":
            values = values.astype(np.float64)
            if not np.isfinite(values).all():
                raise FormatError("regression targets contain non-finite values")
        else:
            fvals = values.astype(np.float64)
            if not np.isfinite(fvals).all() or np.any(fvals != np.round(fvals)):
                raise FormatError("class labels must be integers")
            values = fvals.astype(np.int64)
            if self.k < 1:
                raise FormatError(f"class count must be positive, got {self.k}")
            if values.size and (values.min() < 0 or values.max() >= self.k):
                raise FormatError(f"class labels must lie in [0, {self.k})")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @classmethod
    def for_family(cls, values, family, k=None):
        """Build targets with the kind implied by a GLM family."""
        if family == "gaussian":
            return cls("regression", values)
        values = np.asarray(values)
        if k is None:
            k = 2 if family == "binomial" else int(np.max(values)) + 1
        if family == "binomial" and k != 2:
            raise FormatError(f"binomial targets need exactly 2 classes, got {k}")
        return cls("classification", values, k)


def check_pair(X, y):
    if len(y) != X.shape[0]:
        raise FormatError(f"{len(y)} targets for {X.shape[0]} examples")


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    constant_mask: np.ndarray

    @classmethod
    def fit(cls, X):
        X = check_features(X)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)  # population std
        constant = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
        scale = np.where(constant, 1.0, scale)
        return cls(mean, scale, constant)

    def transform(self, X):
        X = check_features(X)
        if X.shape[1] != self.mean.shape[0]:
            raise FormatError(f"expected {self.mean.shape[0]} features, got {X.shape[1]}")
        out = (X - self.mean) / self.scale
        out[:, self.constant_mask] = 0.0
        return out

    def to_matrix(self):
        """Pack as a 3 x d matrix (mean, scale, constant flag) for storage."""
        return np.vstack([self.mean, self.scale, self.constant_mask.astype(np.float64)])

    @classmethod
    def from_matrix(cls, M):
        M = check_features(M)
        if M.shape[0] != 3:
            raise FormatError(f"standardizer matrix must have 3 rows, got {M.shape[0]}")
        return cls(M[0].copy(), M[1].copy(), M[2] != 0)


def standardize(X):
    """Standardize columns to mean 0 / population std 1; constant columns become 0."""
    s = Standardizer.fit(X)
    return s.transform(X), s


@dataclass
class GlmModel:
    beta: np.ndarray  # (d, k)
    beta0: np.ndarray  # (k,)
    family: str
    lam: float = 0.0
    alpha: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PreconditionError(f"unknown family {self.family!r}")
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.beta0 = np.asarray(self.beta0, dtype=np.float64).reshape(-1)
        if self.beta.ndim == 1:
            self.beta = self.beta[:, None]
        if self.beta.ndim != 2 or self.beta.shape[1] != self.beta0.shape[0]:
            raise PreconditionError(
                f"beta shape {self.beta.shape} incompatible with beta0 shape {self.beta0.shape}")
        if not 0.0 <= self.alpha <= 1.0:
            raise PreconditionError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lam < 0:
            raise PreconditionError(f"lambda must be nonnegative, got {self.lam}")

    @classmethod
    def zeros(cls, d, k, family, lam=0.0, alpha=1.0):
        return cls(np.zeros((d, k)), np.zeros(k), family, lam, alpha)

    @property
    def d(self):
        return self.beta.shape[0]

    @property
    def k(self):
        return self.beta.shape[1]

    @property
    def nnz_per_class(self):
        return np.count_nonzero(self.beta, axis=0)

    @property
    def nnz_total(self):
        return int(np.count_nonzero(self.beta))

    def copy(self, **changes):
        kw = dict(beta=self.beta.copy(), beta0=self.beta0.copy(), family=self.family,
                  lam=self.lam, alpha=self.alpha, meta=dict(self.meta))
        kw.update(changes)
        return GlmModel(**kw)

    def __eq__(self, other):
        if not isinstance(other, GlmModel):
            return NotImplemented
        return (self.family == other.family and self.lam == other.lam
                and self.alpha == other.alpha
                and np.array_equal(self.beta, other.beta)
                and np.array_equal(self.beta0, other.beta0))


# --- matrix files -----------------------------------------------------------

def _detect_format(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary" if head == MATRIX_MAGIC else "csv"


def save_matrix(path, X, format="binary"):
    X = check_features(X)
    if format == "binary":
        n, d = X.shape
        with open(path, "wb") as fh:
            fh.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, n, d))
            fh.write(X.astype("<f8").tobytes())
    elif format == "csv":
        np.savetxt(path, X, delimiter=",", fmt="%.17g")
    else:
        raise FormatError(f"unknown matrix format {format!r}")


def load_matrix(path, format=None):
    """Load a feature matrix; ``format`` is sniffed from the magic bytes when omitted."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such file: {path}")
    if format is None:
        format = _detect_format(path)
    if format == "binary":
        raw = path.read_bytes()
        if len(raw) < _MATRIX_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n, d = _MATRIX_HEADER.unpack_from(raw)
        if magic != MATRIX_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != MATRIX_VERSION:
            raise FormatError(f"{path}: unsupported matrix format version {version}")
        payload = raw[_MATRIX_HEADER.size:]
        if len(payload) != 8 * n * d:
            raise FormatError(
                f"{path}: header declares {n}x{d} ({8 * n * d} bytes), payload has {len(payload)}")
        X = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(n, d)
        return check_features(X)
    if format == "csv":
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append([float(cell) for cell in line.split(",")])
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: non-numeric cell in {line!r}") from None
        if not rows:
            raise FormatError(f"{path}: empty CSV")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise FormatError(f"{path}: ragged CSV rows (widths {sorted(widths)})")
        return check_features(np.array(rows))
    raise FormatError(f"unknown matrix format {format!r}")


def load_targets(path, family, k=None):
    Y = load_matrix(path)
    if Y.shape[1] != 1:
        raise FormatError(f"{path}: targets must be a single column, got {Y.shape[1]}")
    return TargetVector.for_family(Y[:, 0], family, k)


# --- model files ------------------------------------------------------------

def save_model(path, model):
    tag = FAMILIES.index(model.family)
    d, k = model.beta.shape
    body = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, tag, d, k,
                              float(model.lam), float(model.alpha))
    body += model.beta.astype("<f8").tobytes() + model.beta0.astype("<f8").tobytes()
    crc = zlib.crc32(body[4:])
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", crc))


def load_model(path):
    raw = Path(path).read_bytes()
    if len(raw) < _MODEL_HEADER.size + 4:
        raise FormatError(f"{path}: truncated model file")
    magic, version, tag, d, k, lam, alpha = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} (not a model file or version mismatch)")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: model format version {version}, expected {MODEL_VERSION}")
    expected = _MODEL_HEADER.size + 8 * (d * k + k) + 4
    if len(raw) != expected or tag >= len(FAMILIES):
        raise FormatError(f"{path}: corrupted payload")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[4:-4]) != crc:
        raise FormatError(f"{path}: corrupted payload (checksum mismatch)")
    off = _MODEL_HEADER.size
    beta = np.frombuffer(raw, dtype="<f8", count=d * k, offset=off).astype(np.float64).reshape(d, k)
    beta0 = np.frombuffer(raw, dtype="<f8", count=k, offset=off + 8 * d * k).astype(np.float64)
    return GlmModel(beta, beta0, FAMILIES[tag], lam, alpha)
