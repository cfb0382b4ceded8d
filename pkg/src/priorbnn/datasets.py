"""Dataset loading, generation, featurization, and split planning.

Covers the CSV tabular loader with min-max scaling, the synthetic
beta-feature generator, the MNIST IDX loader with subsampling, the
nucleotide triplet-frequency featurizer, and class-holdout cross-validation
planning. All loaders return immutable-by-convention LabeledDataset values;
nothing here downloads data.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError, InvalidInputError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class MinMaxScaler:
    """Per-feature (min, max) pairs fitted on training rows."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if np.any(self.maxs < self.mins):
            raise InvalidInputError("scaler max below min")


@dataclass
class LabeledDataset:
    """Feature matrix with integer class labels in [0, n_classes)."""

    features: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)
    scaler: MinMaxScaler | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidInputError(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )
        if np.any(np.isnan(self.features)):
            raise InvalidInputError("features contain NaN")
        if not self.class_names:
            self.class_names = [str(k) for k in range(self.n_classes)]
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= len(self.class_names)):
            raise InvalidInputError("labels out of range for class names")

    @property
    def n_instances(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.class_names) if self.class_names else int(self.labels.max()) + 1


def load_csv(path, label_column: str) -> LabeledDataset:
    """Load a header-row CSV; non-label columns must parse as floats.

    Class labels are mapped to contiguous indices in order of first
    appearance in the file.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise ConfigError(f"{path}: no column named {label_column!r} in header")
        label_pos = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != label_pos]

        rows, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}"
                )
            values = []
            for i in feature_cols:
                try:
                    values.append(float(row[i]))
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{lineno}: column {header[i]!r} value {row[i]!r} "
                        "is not numeric"
                    ) from None
            rows.append(values)
            raw_labels.append(row[label_pos])

    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    class_names: list[str] = []
    index = {}
    labels = []
    for name in raw_labels:
        if name not in index:
            index[name] = len(class_names)
            class_names.append(name)
        labels.append(index[name])
    return LabeledDataset(np.asarray(rows), np.asarray(labels), class_names)


def fit_min_max(X: np.ndarray) -> MinMaxScaler:
    """Per-feature min/max fitted on training rows only."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return MinMaxScaler(mins=X.min(axis=0), maxs=X.max(axis=0))


def apply_min_max(scaler: MinMaxScaler, X: np.ndarray) -> np.ndarray:
    """(x - min) / (max - min); constant features map to 0; no clipping."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    out = (X - scaler.mins) / safe
    return np.where(span > 0, out, 0.0)


def invert_min_max(scaler: MinMaxScaler, X: np.ndarray) -> np.ndarray:
    """Inverse of apply_min_max on non-constant features."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    span = scaler.maxs - scaler.mins
    return X * np.where(span > 0, span, 0.0) + scaler.mins


@dataclass(frozen=True)
class SyntheticBetaConfig:
    """Beta-feature class generator: one (a, b) shape pair per class and
    feature, drawn uniformly from [shape_low, shape_high]."""

    n_classes: int = 20
    instances_per_class: int = 199
    n_features: int = 10
    shape_low: float = 0.2
    shape_high: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2 or self.instances_per_class < 1 or self.n_features < 1:
            raise ConfigError("beta generator needs >=2 classes and positive sizes")
        if not 0 < self.shape_low < self.shape_high:
            raise ConfigError(
                f"need 0 < shape_low < shape_high, got {self.shape_low}, {self.shape_high}"
            )

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "instances_per_class": self.instances_per_class,
            "n_features": self.n_features,
            "shape_low": self.shape_low,
            "shape_high": self.shape_high,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticBetaConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass
class BetaSimulation:
    dataset: LabeledDataset
    shape_a: np.ndarray
    shape_b: np.ndarray


def simulate_beta(cfg: SyntheticBetaConfig) -> BetaSimulation:
    """Draw the per-class shape pairs once, then i.i.d. Beta features."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    shape_a = rng.uniform(cfg.shape_low, cfg.shape_high, size=(cfg.n_classes, cfg.n_features))
    shape_b = rng.uniform(cfg.shape_low, cfg.shape_high, size=(cfg.n_classes, cfg.n_features))
    blocks = [
        rng.beta(shape_a[k], shape_b[k], size=(cfg.instances_per_class, cfg.n_features))
        for k in range(cfg.n_classes)
    ]
    labels = np.repeat(np.arange(cfg.n_classes), cfg.instances_per_class)
    dataset = LabeledDataset(np.vstack(blocks), labels,
                             [f"class_{k}" for k in range(cfg.n_classes)])
    return BetaSimulation(dataset=dataset, shape_a=shape_a, shape_b=shape_b)


def _open_maybe_gzip(path):
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataFormatError(f"{path}: truncated while reading {what}")
    return data


def load_mnist_idx(images_path, labels_path) -> LabeledDataset:
    """Parse big-endian IDX image/label files into flat [0, 1] features.

    Accepts plain or gzip-compressed files; image and label counts must
    agree.
    """
    with _open_maybe_gzip(images_path) as fh:
        magic, n_images, n_rows, n_cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, images_path, "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected "
                f"0x{IDX_IMAGE_MAGIC:08x}"
            )
        raw = _read_exact(fh, n_images * n_rows * n_cols, images_path, "pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n_images, n_rows * n_cols)
    with _open_maybe_gzip(labels_path) as fh:
        magic, n_labels = struct.unpack(
            ">II", _read_exact(fh, 8, labels_path, "label header"))
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected "
                f"0x{IDX_LABEL_MAGIC:08x}"
            )
        labels = np.frombuffer(
            _read_exact(fh, n_labels, labels_path, "label data"), dtype=np.uint8)
    if n_images != n_labels:
        raise DataFormatError(
            f"{images_path} has {n_images} images but {labels_path} has "
            f"{n_labels} labels"
        )
    n_classes = int(labels.max()) + 1 if n_labels else 0
    return LabeledDataset(pixels.astype(float) / 255.0, labels.astype(int),
                          [str(k) for k in range(n_classes)])


def write_idx_images(path, images: np.ndarray) -> None:
    """Write an (n, rows, cols) uint8 array as an IDX image file."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    """Write a label vector as an IDX label file."""
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def subsample(dataset: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Uniform sample of n rows without replacement, deterministic by seed."""
    if not 1 <= n <= dataset.n_instances:
        raise InvalidInputError(
            f"subsample size must be in [1, {dataset.n_instances}], got {n}"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(dataset.n_instances, size=n, replace=False)
    return LabeledDataset(dataset.features[idx], dataset.labels[idx],
                          list(dataset.class_names), dataset.scaler)


# Lexicographic triplet index: AAA=0 ... TTT=63.
_NUCLEOTIDE_CODE = {"A": 0, "C": 1, "G": 2, "T": 3}


def triplet_frequencies(sequence: str) -> np.ndarray:
    """Frequencies of overlapping nucleotide triplets, all reading frames.

    Windows of width 3 slide with stride 1; any window containing a symbol
    outside A/C/G/T (case-insensitive) is skipped. The 64-entry result sums
    to 1.
    """
    seq = sequence.upper()
    counts = np.zeros(64)
    total = 0
    for i in range(len(seq) - 2):
        a = _NUCLEOTIDE_CODE.get(seq[i])
        b = _NUCLEOTIDE_CODE.get(seq[i + 1])
        c = _NUCLEOTIDE_CODE.get(seq[i + 2])
        if a is None or b is None or c is None:
            continue
        counts[16 * a + 4 * b + c] += 1
        total += 1
    if total == 0:
        raise InvalidInputError("sequence has no window of 3 consecutive A/C/G/T symbols")
    return counts / total


def read_fasta(path) -> list[tuple[str, str]]:
    """(id, sequence) records from a FASTA file or one-sequence-per-line text."""
    records: list[tuple[str, str]] = []
    current_id = None
    current_seq: list[str] = []
    plain_count = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if current_id is not None:
                    records.append((current_id, "".join(current_seq)))
                current_id = line[1:].strip() or f"record_{len(records)}"
                current_seq = []
            elif current_id is not None:
                current_seq.append(line)
            else:
                records.append((f"seq_{plain_count}", line))
                plain_count += 1
    if current_id is not None:
        records.append((current_id, "".join(current_seq)))
    if not records:
        raise DataFormatError(f"{path}: no sequence records found")
    return records


def featurize_fasta(path) -> tuple[list[str], np.ndarray]:
    """Triplet-frequency features for every record in a sequence file."""
    records = read_fasta(path)
    ids = [rid for rid, _ in records]
    X = np.vstack([triplet_frequencies(seq) for _, seq in records])
    return ids, X


@dataclass
class SplitPlan:
    """One cross-validation replicate: held-out (OOD) classes plus disjoint
    train and test rows within the in-distribution classes."""

    replicate_id: int
    in_classes: tuple[int, ...]
    ood_classes: tuple[int, ...]
    train_idx: np.ndarray
    test_in_idx: np.ndarray
    test_ood_idx: np.ndarray
    seed: int

    @property
    def test_idx(self) -> np.ndarray:
        """All test rows; class membership decides in- vs out-of-distribution."""
        return np.concatenate([self.test_in_idx, self.test_ood_idx])


def plan_splits(dataset: LabeledDataset, n_ood_classes: int, n_replicates: int,
                train_fraction: float, seed: int,
                ood_classes: tuple[int, ...] | None = None) -> list[SplitPlan]:
    """Per replicate: hold out a class subset as OOD, split the remaining
    classes' rows into train/test at train_fraction.

    ``ood_classes`` pins the held-out set (the random subset is the
    default); with it, replicates differ only in their row shuffles.
    """
    n_classes = dataset.n_classes
    if not 1 <= n_ood_classes < n_classes:
        raise ConfigError(
            f"n_ood_classes must be in [1, {n_classes - 1}], got {n_ood_classes}"
        )
    if n_replicates < 1:
        raise ConfigError(f"n_replicates must be positive, got {n_replicates}")
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if ood_classes is not None:
        ood_fixed = tuple(sorted(int(c) for c in ood_classes))
        if len(ood_fixed) != n_ood_classes:
            raise ConfigError(
                f"explicit ood_classes {ood_fixed} does not have {n_ood_classes} entries"
            )
        if any(c < 0 or c >= n_classes for c in ood_fixed):
            raise ConfigError(f"ood_classes {ood_fixed} out of range")

    plans = []
    for rep in range(n_replicates):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, rep])))
        if ood_classes is None:
            chosen = tuple(sorted(rng.choice(n_classes, size=n_ood_classes,
                                             replace=False).tolist()))
        else:
            chosen = ood_fixed
        in_cls = tuple(c for c in range(n_classes) if c not in chosen)
        train_rows, test_rows = [], []
        for c in in_cls:
            rows = np.where(dataset.labels == c)[0]
            rows = rng.permutation(rows)
            n_train = math.floor(train_fraction * len(rows))
            if n_train < 1 or n_train >= len(rows):
                raise ConfigError(
                    f"train_fraction={train_fraction} leaves class {c} with an empty "
                    f"train or test split ({len(rows)} rows)"
                )
            train_rows.append(rows[:n_train])
            test_rows.append(rows[n_train:])
        ood_rows = np.where(np.isin(dataset.labels, chosen))[0]
        plans.append(SplitPlan(
            replicate_id=rep,
            in_classes=in_cls,
            ood_classes=chosen,
            train_idx=np.concatenate(train_rows),
            test_in_idx=np.concatenate(test_rows),
            test_ood_idx=ood_rows,
            seed=seed,
        ))
    return plans


@dataclass
class SplitData:
    """Materialized split: scaled features with labels remapped to the
    contiguous in-distribution class indices."""

    train_features: np.ndarray
    train_labels: np.ndarray
    test_in_features: np.ndarray
    test_in_labels: np.ndarray
    test_ood_features: np.ndarray
    test_in_ids: list[str]
    test_ood_ids: list[str]
    class_map: dict[int, int]
    scaler: MinMaxScaler


def extract_split(dataset: LabeledDataset, plan: SplitPlan,
                  scale: bool = True) -> SplitData:
    """Slice a dataset along a plan; the scaler is fitted on train rows only."""
    class_map = {c: i for i, c in enumerate(plan.in_classes)}
    Xtr = dataset.features[plan.train_idx]
    scaler = fit_min_max(Xtr)
    transform = (lambda A: apply_min_max(scaler, A)) if scale else (lambda A: A)
    remap = np.vectorize(class_map.__getitem__, otypes=[int])
    return SplitData(
        train_features=transform(Xtr),
        train_labels=remap(dataset.labels[plan.train_idx]),
        test_in_features=transform(dataset.features[plan.test_in_idx]),
        test_in_labels=remap(dataset.labels[plan.test_in_idx]),
        test_ood_features=transform(dataset.features[plan.test_ood_idx]),
        test_in_ids=[str(i) for i in plan.test_in_idx],
        test_ood_ids=[str(i) for i in plan.test_ood_idx],
        class_map=class_map,
        scaler=scaler,
    )
