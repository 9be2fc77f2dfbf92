"""Multi-domain datasets, synthetic rotation-shift families, splitting and CSV I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numcore import as_tensor


class SpecError(ValueError):
    pass


class SplitError(ValueError):
    pass


class IngestionError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row, self.column = row, column


@dataclass
class DomainDataset:
    features: np.ndarray
    labels: np.ndarray
    domain_ids: np.ndarray
    class_count: int
    domain_count: int
    label_names: list[str] | None = None
    domain_names: list[str] | None = None

    def __post_init__(self):
        self.features = as_tensor(self.features, "features", ndim=2)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.domain_ids = np.asarray(self.domain_ids, dtype=np.int64)
        n = len(self.features)
        if len(self.labels) != n or len(self.domain_ids) != n:
            raise ValueError("features, labels and domain_ids must share length")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("label out of range [0, C)")
        if n and (self.domain_ids.min() < 0 or self.domain_ids.max() >= self.domain_count):
            raise ValueError("domain id out of range [0, M)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "DomainDataset":
        idx = np.asarray(idx)
        return DomainDataset(self.features[idx], self.labels[idx], self.domain_ids[idx],
                             self.class_count, self.domain_count, self.label_names, self.domain_names)

    def domain(self, d: int) -> "DomainDataset":
        return self.subset(np.flatnonzero(self.domain_ids == d))

    def onehot(self) -> np.ndarray:
        return np.eye(self.class_count)[self.labels]

    def cell_counts(self) -> np.ndarray:
        """(M, C) histogram of (domain, class) cells."""
        out = np.zeros((self.domain_count, self.class_count), dtype=np.int64)
        np.add.at(out, (self.domain_ids, self.labels), 1)
        return out

    def proportions(self) -> np.ndarray:
        return np.bincount(self.domain_ids, minlength=self.domain_count) / len(self)


def concat(datasets: Sequence[DomainDataset]) -> DomainDataset:
    first = datasets[0]
    return DomainDataset(np.concatenate([d.features for d in datasets]),
                         np.concatenate([d.labels for d in datasets]),
                         np.concatenate([d.domain_ids for d in datasets]),
                         first.class_count, first.domain_count, first.label_names, first.domain_names)


@dataclass
class DataSplit:
    train: DomainDataset
    val: DomainDataset
    train_idx: np.ndarray
    val_idx: np.ndarray
    proportions: np.ndarray
    split_ratio: float
    seed: int


def split(dataset: DomainDataset, ratio: float = 0.8, seed: int = 0) -> DataSplit:
    """Stratified train/validation split per (domain, class) cell."""
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for d in range(dataset.domain_count):
        for c in range(dataset.class_count):
            cell = np.flatnonzero((dataset.domain_ids == d) & (dataset.labels == c))
            if len(cell) == 0:
                continue
            if len(cell) < 2:
                raise SplitError(f"cell (domain={d}, class={c}) has {len(cell)} sample; need >= 2")
            cell = rng.permutation(cell)
            n_tr = min(max(int(round(ratio * len(cell))), 1), len(cell) - 1)
            train_idx.append(cell[:n_tr])
            val_idx.append(cell[n_tr:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    return DataSplit(dataset.subset(train_idx), dataset.subset(val_idx), train_idx, val_idx,
                     dataset.proportions(), ratio, seed)


# --- synthetic shift families -------------------------------------------------

@dataclass
class ShiftFamilySpec:
    """A one-parameter (rotation angle, degrees) family of domain generators.

    ``convex=True`` builds the target at the phi-weighted source angle;
    otherwise ``target_angle`` is used and must lie outside the source range.
    """

    family: str = "rotated-gaussians"
    source_angles: Sequence[float] = (0.0, 30.0, 60.0)
    target_angle: float | None = 90.0
    convex: bool = False
    phi: Sequence[float] | None = None
    noise: float = 0.6
    samples_per_domain: int = 500
    n_classes: int = 4
    extra_dims: int = 0
    seed: int = 0

    def __post_init__(self):
        self.source_angles = tuple(float(a) for a in self.source_angles)
        if self.family not in ("rotated-gaussians", "rotated-moons"):
            raise SpecError(f"unknown family {self.family!r}")
        if len(self.source_angles) < 2:
            raise SpecError("need at least 2 source domains")
        if self.samples_per_domain < 1:
            raise SpecError("samples_per_domain must be positive")
        if self.family == "rotated-moons" and self.n_classes != 2:
            raise SpecError("rotated-moons has exactly 2 classes")
        if self.n_classes < 2:
            raise SpecError("need at least 2 classes")
        if self.samples_per_domain < self.n_classes:
            raise SpecError("fewer samples per domain than classes")
        lo, hi = min(self.source_angles), max(self.source_angles)
        if self.convex:
            if self.phi is None:
                self.phi = tuple([1.0 / len(self.source_angles)] * len(self.source_angles))
            phi = np.asarray(self.phi, dtype=float)
            if len(phi) != len(self.source_angles) or np.any(phi < 0) or abs(phi.sum() - 1) > 1e-9:
                raise SpecError("phi must be a probability vector over the sources")
            self.phi = tuple(phi)
        else:
            if self.target_angle is None:
                raise SpecError("non-convex spec needs target_angle")
            if lo <= self.target_angle <= hi:
                raise SpecError("non-convex target angle lies inside the source hull")

    @property
    def target_parameter(self) -> float:
        if self.convex:
            return float(np.dot(self.phi, self.source_angles))
        return float(self.target_angle)


def _class_centers(n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    # distinct radii break the C-fold rotational symmetry of the blob layout
    base = 2.0 * np.pi * np.arange(n_classes) / n_classes
    radii = 2.0 + 0.5 * np.arange(n_classes)
    return base, radii


def _rotation(deg: float) -> np.ndarray:
    t = np.deg2rad(deg)
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def _balanced_labels(n: int, n_classes: int, rng) -> np.ndarray:
    return rng.permutation(np.arange(n) % n_classes)


def _draw_domain(spec: ShiftFamilySpec, angle: float, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    y = _balanced_labels(n, spec.n_classes, rng)
    if spec.family == "rotated-gaussians":
        base, radii = _class_centers(spec.n_classes)
        centers = np.stack([radii * np.cos(base), radii * np.sin(base)], axis=1)
        pts = centers[y] + spec.noise * rng.standard_normal((n, 2))
    else:
        t = rng.uniform(0.0, np.pi, size=n)
        upper = np.stack([np.cos(t), np.sin(t)], axis=1)
        lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
        pts = np.where(y[:, None] == 0, upper, lower) * 2.0 - np.array([1.0, 0.25])
        pts = pts + spec.noise * rng.standard_normal((n, 2))
    pts = pts @ _rotation(angle).T
    if spec.extra_dims:
        pts = np.hstack([pts, spec.noise * rng.standard_normal((n, spec.extra_dims))])
    return pts, y


def generate_synthetic(spec: ShiftFamilySpec) -> tuple[DomainDataset, DomainDataset]:
    """Return ``(sources, target)``; target has domain id 0 of a one-domain dataset."""
    rng = np.random.default_rng(spec.seed)
    M, n = len(spec.source_angles), spec.samples_per_domain
    xs, ys, ds = [], [], []
    for d, angle in enumerate(spec.source_angles):
        x, y = _draw_domain(spec, angle, n, rng)
        xs.append(x)
        ys.append(y)
        ds.append(np.full(n, d))
    names = [f"src{d}@{a:g}" for d, a in enumerate(spec.source_angles)]
    sources = DomainDataset(np.concatenate(xs), np.concatenate(ys), np.concatenate(ds),
                            spec.n_classes, M, domain_names=names)
    xt, yt = _draw_domain(spec, spec.target_parameter, n, rng)
    target = DomainDataset(xt, yt, np.zeros(n, dtype=np.int64), spec.n_classes, 1,
                           domain_names=[f"target@{spec.target_parameter:g}"])
    return sources, target


def estimate_rotation(data: DomainDataset, spec: ShiftFamilySpec) -> float:
    """Moment estimate (degrees) of the rotation applied to a rotated-gaussians domain."""
    base, _ = _class_centers(spec.n_classes)
    angles = []
    for c in range(spec.n_classes):
        mu = data.features[data.labels == c, :2].mean(axis=0)
        angles.append(np.arctan2(mu[1], mu[0]) - base[c])
    # circular mean of the per-class offsets
    return float(np.rad2deg(np.angle(np.mean(np.exp(1j * np.asarray(angles))))))


# --- CSV ---------------------------------------------------------------------

@dataclass
class CsvSchema:
    feature_columns: Sequence[str]
    label_column: str = "label"
    domain_column: str = "domain"


@dataclass
class CsvLoadResult:
    dataset: DomainDataset
    label_map: dict[str, int] = field(default_factory=dict)
    domain_map: dict[str, int] = field(default_factory=dict)


def load_csv(path, schema: CsvSchema) -> CsvLoadResult:
    """Parse a CSV into a dataset; labels and domains are remapped to dense ids.

    Ids follow sorted order of the raw values (numeric order when every value
    parses as an integer). Row numbers in errors are file line numbers (the
    header is row 1); columns are 1-based.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestionError(f"{path}: empty file")
        header = [h.strip() for h in header]
        cols = {}
        for name in [*schema.feature_columns, schema.label_column, schema.domain_column]:
            if name not in header:
                raise IngestionError(f"{path}: missing column {name!r}")
            cols[name] = header.index(name)
        feats, labels, domains = [], [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestionError(f"{path}: expected {len(header)} fields, got {len(row)}", row=rowno)
            vals = []
            for name in schema.feature_columns:
                j = cols[name]
                try:
                    v = float(row[j])
                except ValueError:
                    raise IngestionError(f"{path}: non-numeric feature {row[j]!r}", row=rowno, column=j + 1) from None
                if not np.isfinite(v):
                    raise IngestionError(f"{path}: non-finite feature {row[j]!r}", row=rowno, column=j + 1)
                vals.append(v)
            feats.append(vals)
            lab = row[cols[schema.label_column]].strip()
            dom = row[cols[schema.domain_column]].strip()
            labels.append(lab)
            domains.append(dom)
    if not feats:
        raise IngestionError(f"{path}: no data rows")
    label_map, domain_map = _dense_ids(labels), _dense_ids(domains)
    labels = [label_map[v] for v in labels]
    domains = [domain_map[v] for v in domains]
    ds = DomainDataset(np.asarray(feats, dtype=np.float64), labels, domains, len(label_map), len(domain_map),
                       label_names=list(label_map), domain_names=list(domain_map))
    return CsvLoadResult(ds, label_map, domain_map)


def _dense_ids(values: Sequence[str]) -> dict[str, int]:
    uniq = set(values)
    try:
        ordered = sorted(uniq, key=int)
    except ValueError:
        ordered = sorted(uniq)
    return {v: i for i, v in enumerate(ordered)}


def write_csv(path, dataset: DomainDataset, extra: dict[str, Sequence] | None = None) -> CsvSchema:
    """Write ``dataset`` with columns ``f0..f{d-1}, label, domain`` (+ ``extra`` columns).

    Floats are written with ``repr`` so a reload reproduces them bit-for-bit.
    """
    fcols = [f"f{i}" for i in range(dataset.n_features)]
    extra = extra or {}
    lnames = dataset.label_names or [str(i) for i in range(dataset.class_count)]
    dnames = dataset.domain_names or [str(i) for i in range(dataset.domain_count)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*fcols, "label", "domain", *extra])
        for i in range(len(dataset)):
            w.writerow([*(repr(float(v)) for v in dataset.features[i]),
                        lnames[dataset.labels[i]], dnames[dataset.domain_ids[i]],
                        *(col[i] for col in extra.values())])
    return CsvSchema(fcols, "label", "domain")
