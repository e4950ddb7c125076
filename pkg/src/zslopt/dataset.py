"""ZSL dataset model, binary container format and synthetic generator.

On-disk layout (all integers little-endian)::

    dataset.json          manifest (name, d, k, classes, files)
    features.zslf         "ZSLF" | u32 version=1 | u64 rows | u64 cols | f32 data
    attributes.zslf       same container, one row per class
    labels.zsli           "ZSLI" | u32 version=1 | u64 n | u32 data
    train_idx.zsli, test_unseen_idx.zsli, test_seen_idx.zsli

Features and attributes are stored as float32 and widened to float64 in
memory. A :class:`Dataset` rounds its matrices to float32 precision when it is
built, so ``load(save(ds)) == ds`` holds bit for bit.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, FormatError
from .tensor import Rng

MATRIX_MAGIC = b"ZSLF"
INDEX_MAGIC = b"ZSLI"
FORMAT_VERSION = 1
MANIFEST_NAME = "dataset.json"

FILE_NAMES = {
    "features": "features.zslf",
    "labels": "labels.zsli",
    "attributes": "attributes.zslf",
    "train_idx": "train_idx.zsli",
    "test_unseen_idx": "test_unseen_idx.zsli",
    "test_seen_idx": "test_seen_idx.zsli",
}

_MATRIX_HEADER = struct.Struct("<4sIQQ")
_INDEX_HEADER = struct.Struct("<4sIQ")


def _f32_round(m):
    return np.ascontiguousarray(np.asarray(m, dtype=np.float32).astype(np.float64))


def _index_array(values, name):
    arr = np.asarray(values)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise DatasetError(f"{name} must be a 1-D integer list")
    if (arr < 0).any() or (arr > 0xFFFFFFFF).any():
        raise DatasetError(f"{name} entries must fit in u32")
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features, labels, class attributes and the seen/unseen splits.

    Class ids are global (``0 .. n_classes-1``); ``attributes[c]`` is the
    semantic vector of class ``c``. All invariants are checked on construction.
    """

    name: str
    features: np.ndarray
    labels: np.ndarray
    attributes: np.ndarray
    seen_classes: np.ndarray
    unseen_classes: np.ndarray
    train_indices: np.ndarray
    test_unseen_indices: np.ndarray
    test_seen_indices: np.ndarray
    class_names: tuple = field(default=())

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("features", _f32_round(self.features))
        set_("attributes", _f32_round(self.attributes))
        for key in ("labels", "seen_classes", "unseen_classes", "train_indices",
                    "test_unseen_indices", "test_seen_indices"):
            set_(key, _index_array(getattr(self, key), key))
        n_classes = self.attributes.shape[0] if self.attributes.ndim == 2 else 0
        names = tuple(self.class_names) or tuple(f"class_{c}" for c in range(n_classes))
        set_("class_names", names)
        self._validate()
        for key in ("features", "labels", "attributes", "seen_classes", "unseen_classes",
                    "train_indices", "test_unseen_indices", "test_seen_indices"):
            getattr(self, key).setflags(write=False)

    def _validate(self):
        f, a = self.features, self.attributes
        if f.ndim != 2 or a.ndim != 2:
            raise DatasetError("features and attributes must be 2-D matrices")
        if not (np.isfinite(f).all() and np.isfinite(a).all()):
            raise DatasetError("features and attributes must be finite")
        n, n_classes = f.shape[0], a.shape[0]
        if self.labels.shape[0] != n:
            raise DatasetError(f"features have {n} rows but labels has {self.labels.shape[0]} entries")
        seen, unseen = self.seen_classes, self.unseen_classes
        if len(seen) == 0 or len(unseen) == 0:
            raise DatasetError("seen and unseen class lists must both be non-empty")
        if len(np.unique(seen)) != len(seen) or len(np.unique(unseen)) != len(unseen):
            raise DatasetError("seen/unseen class lists contain duplicates")
        overlap = np.intersect1d(seen, unseen)
        if overlap.size:
            raise DatasetError(f"seen and unseen classes must be disjoint; shared: {overlap.tolist()}")
        if n_classes != len(seen) + len(unseen):
            raise DatasetError(
                f"attributes has {n_classes} rows but there are {len(seen)} seen + {len(unseen)} unseen classes")
        if not np.array_equal(np.sort(np.concatenate([seen, unseen])), np.arange(n_classes)):
            raise DatasetError(f"class ids must cover 0..{n_classes - 1} exactly")
        if len(self.class_names) != n_classes:
            raise DatasetError(f"{len(self.class_names)} class names for {n_classes} classes")
        if n and (self.labels.max() >= n_classes):
            raise DatasetError("every label must be a seen or unseen class")
        seen_set, unseen_set = set(seen.tolist()), set(unseen.tolist())
        for key, allowed, what in (("train_indices", seen_set, "seen"),
                                   ("test_unseen_indices", unseen_set, "unseen"),
                                   ("test_seen_indices", seen_set, "seen")):
            idx = getattr(self, key)
            if idx.size and idx.max() >= n:
                raise DatasetError(f"{key} refers to instance {int(idx.max())} but there are only {n}")
            if len(np.unique(idx)) != len(idx):
                raise DatasetError(f"{key} contains duplicate instances")
            bad = set(self.labels[idx].tolist()) - allowed
            if bad:
                raise DatasetError(f"{key} labels must be {what} classes; found {sorted(bad)}")
        if np.intersect1d(self.train_indices, self.test_seen_indices).size:
            raise DatasetError("train_indices and test_seen_indices must be disjoint")

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def k(self):
        return self.attributes.shape[1]

    @property
    def n_classes(self):
        return self.attributes.shape[0]

    def train_instances_of(self, cls):
        idx = self.train_indices
        return idx[self.labels[idx] == cls]

    def with_normalized_features(self):
        """Copy with every feature row scaled to unit L2 norm (zero rows kept)."""
        norms = np.linalg.norm(self.features, axis=1, keepdims=True)
        feats = self.features / np.where(norms > 0, norms, 1.0)
        return self._replace(features=feats)

    def _replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return Dataset(**fields)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            if isinstance(getattr(self, k), np.ndarray) else getattr(self, k) == getattr(other, k)
            for k in self.__dataclass_fields__)


# -- binary containers -------------------------------------------------------

def write_matrix(path, m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise FormatError(f"matrix file needs 2-D data, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, FORMAT_VERSION, m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_matrix(path):
    raw = Path(path).read_bytes()
    if len(raw) < _MATRIX_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols = _MATRIX_HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _MATRIX_HEADER.size + 4 * rows * cols
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_MATRIX_HEADER.size)
    return data.astype(np.float64).reshape(rows, cols)


def write_index(path, values):
    values = np.asarray(values, dtype=np.int64)
    with open(path, "wb") as fh:
        fh.write(_INDEX_HEADER.pack(INDEX_MAGIC, FORMAT_VERSION, values.size))
        fh.write(values.astype("<u4").tobytes())


def read_index(path):
    raw = Path(path).read_bytes()
    if len(raw) < _INDEX_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n = _INDEX_HEADER.unpack_from(raw)
    if magic != INDEX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {INDEX_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _INDEX_HEADER.size + 4 * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {n} entries, found {len(raw)}")
    return np.frombuffer(raw, dtype="<u4", offset=_INDEX_HEADER.size).astype(np.int64)


# -- manifest ----------------------------------------------------------------

def save(ds, directory):
    """Write ``ds`` as a manifest plus binaries into ``directory``; returns the manifest path."""
    if not isinstance(ds, Dataset):
        raise TypeError("save expects a Dataset")
    # re-validate so a hand-mutated object never reaches disk
    ds._validate()
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    seen = set(ds.seen_classes.tolist())
    manifest = {
        "name": ds.name,
        "d": ds.d,
        "k": ds.k,
        "classes": [{"id": c, "name": ds.class_names[c], "seen": c in seen} for c in range(ds.n_classes)],
        "files": dict(FILE_NAMES),
    }
    write_matrix(out / FILE_NAMES["features"], ds.features)
    write_matrix(out / FILE_NAMES["attributes"], ds.attributes)
    write_index(out / FILE_NAMES["labels"], ds.labels)
    write_index(out / FILE_NAMES["train_idx"], ds.train_indices)
    write_index(out / FILE_NAMES["test_unseen_idx"], ds.test_unseen_indices)
    write_index(out / FILE_NAMES["test_seen_idx"], ds.test_seen_indices)
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def manifest_path(path):
    p = Path(path)
    return p / MANIFEST_NAME if p.is_dir() else p


def load(path, normalize=False):
    """Load and validate a dataset from a manifest path or its directory.

    ``normalize=True`` scales each feature row to unit L2 norm after loading.
    """
    mpath = manifest_path(path)
    if not mpath.is_file():
        raise FileNotFoundError(f"dataset manifest not found: {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: invalid JSON ({exc})") from exc
    for key in ("name", "d", "k", "classes", "files"):
        if key not in manifest:
            raise FormatError(f"{mpath}: missing key {key!r}")
    files = manifest["files"]
    missing = [key for key in FILE_NAMES if key not in files]
    if missing:
        raise FormatError(f"{mpath}: 'files' lacks {missing}")
    base = mpath.parent

    def resolve(key):
        p = base / files[key]
        if not p.is_file():
            raise FileNotFoundError(f"dataset file not found: {p}")
        return p

    features = read_matrix(resolve("features"))
    attributes = read_matrix(resolve("attributes"))
    classes = sorted(manifest["classes"], key=lambda c: c["id"])
    if [c["id"] for c in classes] != list(range(len(classes))):
        raise DatasetError(f"{mpath}: class ids must be 0..{len(classes) - 1} without gaps or repeats")
    if features.shape[1] != manifest["d"]:
        raise DatasetError(f"{mpath}: manifest d={manifest['d']} but features have {features.shape[1]} columns")
    if attributes.shape[1] != manifest["k"]:
        raise DatasetError(f"{mpath}: manifest k={manifest['k']} but attributes have {attributes.shape[1]} columns")
    ds = Dataset(
        name=manifest["name"],
        features=features,
        labels=read_index(resolve("labels")),
        attributes=attributes,
        seen_classes=[c["id"] for c in classes if c["seen"]],
        unseen_classes=[c["id"] for c in classes if not c["seen"]],
        train_indices=read_index(resolve("train_idx")),
        test_unseen_indices=read_index(resolve("test_unseen_idx")),
        test_seen_indices=read_index(resolve("test_seen_idx")),
        class_names=tuple(c.get("name", f"class_{c['id']}") for c in classes),
    )
    return ds.with_normalized_features() if normalize else ds


# -- synthetic data ----------------------------------------------------------

# sub-stream ids; changing them changes every synthetic dataset
_STREAM_ATTRIBUTES = 1
_STREAM_MAP = 2
_STREAM_NOISE = 3
_STREAM_SPLIT = 4


def synth(seed=42, p=8, q=2, d=32, k=16, n_per_class=50, noise_sigma=0.05, test_seen_frac=0.2,
          name=None):
    """Desk-scale dataset whose features are a noisy ReLU-linear image of the attributes.

    Classes ``0..p-1`` are seen, ``p..p+q-1`` unseen. Attributes are uniform in
    [0, 1]; a hidden map ``A`` (d×k) has entries uniform in [-1, 1] / sqrt(k);
    each instance of class ``c`` is ``relu(A @ y_c + noise)``. Per seen class,
    ``ceil(test_seen_frac * n_per_class)`` randomly chosen instances are held
    out for GZSL testing.
    """
    if p < 2:
        raise DatasetError(f"synth needs p >= 2 seen classes, got {p}")
    if q < 1:
        raise DatasetError(f"synth needs q >= 1 unseen classes, got {q}")
    if d < 1 or k < 1:
        raise DatasetError(f"synth needs d, k >= 1, got d={d}, k={k}")
    if n_per_class < 4:
        raise DatasetError(f"synth needs n_per_class >= 4, got {n_per_class}")
    if not 0 <= test_seen_frac < 1:
        raise DatasetError(f"test_seen_frac must lie in [0, 1), got {test_seen_frac}")
    if not (noise_sigma >= 0 and math.isfinite(noise_sigma)):
        raise DatasetError(f"noise_sigma must be finite and >= 0, got {noise_sigma}")

    root = Rng(seed)
    n_classes = p + q
    attributes = root.substream(_STREAM_ATTRIBUTES).uniforms(n_classes * k).reshape(n_classes, k)
    hidden_map = root.substream(_STREAM_MAP).uniforms(d * k, -1.0, 1.0).reshape(d, k) / math.sqrt(k)
    clean = attributes @ hidden_map.T
    noise = root.substream(_STREAM_NOISE).normals(n_classes * n_per_class * d)
    noise = noise.reshape(n_classes, n_per_class, d) * noise_sigma
    features = np.maximum(clean[:, None, :] + noise, 0.0).reshape(n_classes * n_per_class, d)
    labels = np.repeat(np.arange(n_classes), n_per_class)

    split = root.substream(_STREAM_SPLIT)
    n_test_seen = math.ceil(test_seen_frac * n_per_class)
    train, test_seen = [], []
    for c in range(p):
        perm = split.permutation(n_per_class) + c * n_per_class
        test_seen.extend(sorted(perm[:n_test_seen].tolist()))
        train.extend(sorted(perm[n_test_seen:].tolist()))
    test_unseen = list(range(p * n_per_class, n_classes * n_per_class))
    return Dataset(
        name=name or f"synth-{seed}",
        features=features,
        labels=labels,
        attributes=attributes,
        seen_classes=list(range(p)),
        unseen_classes=list(range(p, n_classes)),
        train_indices=train,
        test_unseen_indices=test_unseen,
        test_seen_indices=test_seen,
    )


def dataset_bytes(directory):
    """Concatenated bytes of every file of a saved dataset (manifest first)."""
    base = Path(directory)
    parts = [(base / MANIFEST_NAME).read_bytes()]
    parts += [(base / FILE_NAMES[k]).read_bytes() for k in FILE_NAMES]
    return b"".join(parts)


__all__ = ["Dataset", "load", "save", "synth", "read_matrix", "write_matrix", "read_index",
           "write_index", "MANIFEST_NAME", "FILE_NAMES", "dataset_bytes", "manifest_path"]
