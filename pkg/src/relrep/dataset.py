"""Vector datasets: loading, saving and synthetic Gaussian-cluster generation."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RRDS"
_HEADER = struct.Struct("<4sIIB")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """N feature vectors with optional evaluation-only integer labels.

    ``label_names`` maps label ids back to the strings read from a csv file.
    """

    vectors: np.ndarray
    labels: np.ndarray | None = None
    ids: np.ndarray | None = None
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 2 or vec.shape[0] < 1 or vec.shape[1] < 1:
            raise DatasetError(f"vectors must be a non-empty 2-d array, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise DatasetError("vectors contain non-finite entries")
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (vec.shape[0],):
                raise DatasetError(f"labels have length {lab.shape}, expected {vec.shape[0]}")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)
        ids = np.arange(vec.shape[0]) if self.ids is None else np.asarray(self.ids)
        if ids.shape != (vec.shape[0],):
            raise DatasetError("ids must have length N")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 10
    samples_per_class: int = 200
    dim: int = 16
    cluster_std: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise DatasetError("num_classes must be >= 2")
        if self.samples_per_class < 2:
            raise DatasetError("samples_per_class must be >= 2")
        if self.dim < 1:
            raise DatasetError("dim must be >= 1")
        if not self.cluster_std > 0:
            raise DatasetError("cluster_std must be positive")


MIN_SEPARATION = 6.0


def _class_means(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    sep = MIN_SEPARATION * spec.cluster_std
    if spec.num_classes <= spec.dim:
        # scaled random orthonormal frame: every pair of means is exactly `sep` apart
        q, _ = np.linalg.qr(rng.standard_normal((spec.dim, spec.num_classes)))
        return (sep / np.sqrt(2.0)) * q.T
    scale = sep
    while True:
        for _ in range(200):
            means = rng.uniform(-scale, scale, size=(spec.num_classes, spec.dim))
            d = np.linalg.norm(means[:, None] - means[None], axis=-1)
            d[np.diag_indices_from(d)] = np.inf
            if d.min() >= sep:
                return means
        scale *= 1.5


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Isotropic Gaussian clusters whose means are at least 6 standard deviations apart."""
    rng = np.random.default_rng(spec.seed)
    means = _class_means(spec, rng)
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    noise = rng.standard_normal((labels.size, spec.dim)) * spec.cluster_std
    return Dataset(means[labels] + noise, labels,
                   label_names=tuple(f"c{c}" for c in range(spec.num_classes)))


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _load_csv(path: Path) -> Dataset:
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        rows.append((lineno, [t.strip() for t in s.split(",")]))
    if not rows:
        raise DatasetError("empty dataset")
    labelled = not _is_number(rows[0][1][-1])
    width = len(rows[0][1])
    feats, raw_labels = [], []
    for row_index, (lineno, toks) in enumerate(rows):
        if len(toks) != width:
            raise DatasetError(
                f"row {row_index} (line {lineno + 1}): expected {width} fields, got {len(toks)}")
        if labelled:
            raw_labels.append(toks[-1])
            toks = toks[:-1]
        try:
            feats.append([float(t) for t in toks])
        except ValueError as exc:
            raise DatasetError(f"row {row_index} (line {lineno + 1}): malformed value ({exc})") from None
    if not feats[0]:
        raise DatasetError("rows carry no feature columns")
    labels = names = None
    if labelled:
        names = tuple(sorted(set(raw_labels)))
        lookup = {name: i for i, name in enumerate(names)}
        labels = np.array([lookup[r] for r in raw_labels])
    return Dataset(np.array(feats), labels, label_names=names)


def _load_raw(path: Path) -> Dataset:
    data = path.read_bytes()
    if not data:
        raise DatasetError("empty dataset")
    if len(data) < _HEADER.size:
        raise DatasetError("truncated header")
    magic, n, d, has_labels = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetError(f"bad magic {magic!r}")
    if n == 0:
        raise DatasetError("empty dataset")
    expect = _HEADER.size + 4 * n * d + (4 * n if has_labels else 0)
    if len(data) != expect:
        raise DatasetError(f"file size {len(data)} does not match header (expected {expect})")
    vec = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size).reshape(n, d)
    labels = None
    if has_labels:
        labels = np.frombuffer(data, dtype="<u4", count=n, offset=_HEADER.size + 4 * n * d)
    return Dataset(vec.astype(np.float64), labels)


def load_dataset(path, format: str = "csv") -> Dataset:
    path = Path(path)
    if format == "csv":
        return _load_csv(path)
    if format == "raw_f32":
        return _load_raw(path)
    raise DatasetError(f"unknown format {format!r}")


def save_dataset(ds: Dataset, path, format: str = "csv") -> None:
    path = Path(path)
    if format == "csv":
        names = ds.label_names
        lines = [f"# relrep dataset N={ds.n} d={ds.dim}"]
        for i, row in enumerate(ds.vectors):
            fields = [f"{v:.9g}" for v in row]
            if ds.labels is not None:
                lab = int(ds.labels[i])
                fields.append(names[lab] if names else f"c{lab}")
            lines.append(",".join(fields))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif format == "raw_f32":
        parts = [_HEADER.pack(MAGIC, ds.n, ds.dim, int(ds.has_labels)),
                 ds.vectors.astype("<f4").tobytes()]
        if ds.labels is not None:
            parts.append(ds.labels.astype("<u4").tobytes())
        path.write_bytes(b"".join(parts))
    else:
        raise DatasetError(f"unknown format {format!r}")


def format_from_path(path) -> str:
    return "csv" if str(path).endswith(".csv") else "raw_f32"
