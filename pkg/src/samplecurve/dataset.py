"""Load, encode, validate, and freeze binary-outcome cohort datasets.

A dataset is a sparse binary design matrix (samples x features), a binary
label vector, and a feature dictionary.  Entries are restricted to {0,1};
anything else is rejected rather than silently binarized.  Constant feature
columns (all 0 or all 1 across the cohort) carry no information and are
pruned once, on the full dataset, before any splitting.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InputError

log = logging.getLogger(__name__)


class FeatureSource(enum.Enum):
    """Provenance of a candidate predictor."""

    DEMOGRAPHIC = "demographic"
    LONG_TERM_365D = "long_term_365d"
    SHORT_TERM_30D = "short_term_30d"
    OTHER = "other"


@dataclass(frozen=True)
class FeatureDescriptor:
    """One column of the design matrix.

    Ids are dense ``0..P-1`` and unique within a dataset; names are unique.
    """

    id: int
    name: str
    source: FeatureSource = FeatureSource.OTHER


@dataclass(frozen=True)
class BinningSpec:
    """Left-closed, right-open bins for a numeric predictor.

    ``cuts`` must be strictly increasing; bin ``k`` covers
    ``[cuts[k], cuts[k+1])`` and values must fall in ``[cuts[0], cuts[-1])``.
    """

    feature_name: str
    cuts: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.cuts) < 2:
            raise InputError("binning spec needs at least two cut points")
        if not all(a < b for a, b in zip(self.cuts, self.cuts[1:])):
            raise InputError("binning cut points must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.cuts) - 1

    def bin_labels(self) -> list[str]:
        return [
            f"{self.feature_name}[{lo:g},{hi:g})"
            for lo, hi in zip(self.cuts, self.cuts[1:])
        ]


@dataclass(frozen=True)
class PruneReport:
    """What ``prune_constant_features`` removed and how ids shifted."""

    removed: tuple[FeatureDescriptor, ...]
    id_map: dict[int, int] = field(default_factory=dict)  # old id -> new id

    @property
    def n_removed(self) -> int:
        return len(self.removed)


@dataclass(frozen=True)
class CohortDataset:
    """Immutable binary-outcome prediction dataset.

    ``design`` is a CSC matrix of {0,1} entries (coordinate descent iterates
    feature columns, so column-major access is the canonical layout);
    ``labels`` is a {0,1} vector; ``outcome_rate`` is the event fraction.
    Construct through :func:`from_arrays` or :func:`load_dataset`, which
    validate and freeze the underlying buffers.
    """

    n_samples: int
    features: tuple[FeatureDescriptor, ...]
    design: sp.csc_matrix
    labels: np.ndarray
    outcome_rate: float

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_events(self) -> int:
        return int(self.labels.sum())

    def rows(self, indices: np.ndarray) -> sp.csc_matrix:
        """Row subset of the design as a fresh CSC matrix."""
        return self.design.tocsr()[indices].tocsc()


def _freeze(mat: sp.csc_matrix, *arrays: np.ndarray) -> None:
    for a in (mat.data, mat.indices, mat.indptr, *arrays):
        a.flags.writeable = False


def _default_features(n: int) -> tuple[FeatureDescriptor, ...]:
    width = max(4, len(str(max(n - 1, 0))))
    return tuple(FeatureDescriptor(j, f"f{j:0{width}d}") for j in range(n))


def from_arrays(
    design,
    labels,
    features: tuple[FeatureDescriptor, ...] | None = None,
    prune: bool = True,
) -> CohortDataset:
    """Validate raw arrays and build an immutable :class:`CohortDataset`.

    Parameters
    ----------
    design : scipy sparse matrix or ndarray, shape (n_samples, n_features)
        Binary design matrix; any entry outside {0,1} is rejected.
    labels : array-like of {0,1}, length n_samples
    features : optional feature dictionary; defaults to ``f0000``-style names.
    prune : drop constant columns (the default; matches the cohort-level
        pruning contract).

    Raises
    ------
    InputError
        On dimension mismatch, non-binary entries, or an outcome vector
        with a single class ("degenerate outcome").
    """
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InputError("labels must be one-dimensional")
    if not np.isin(labels, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    labels = labels.astype(np.int8)

    design = sp.csc_matrix(design)
    design.eliminate_zeros()
    if design.shape[0] != labels.size:
        raise InputError(
            f"design has {design.shape[0]} rows but labels has {labels.size}"
        )
    if design.nnz and not (design.data == 1).all():
        bad = design.data[design.data != 1][0]
        raise InputError(f"non-binary design entry {bad!r}")
    design = sp.csc_matrix(
        (np.ones(design.nnz), design.indices.copy(), design.indptr.copy()),
        shape=design.shape,
    )

    n_events = int(labels.sum())
    if n_events == 0 or n_events == labels.size:
        raise InputError("degenerate outcome: all labels identical")

    if features is None:
        features = _default_features(design.shape[1])
    if len(features) != design.shape[1]:
        raise InputError(
            f"{len(features)} feature descriptors for {design.shape[1]} columns"
        )
    if len({f.name for f in features}) != len(features):
        raise InputError("feature names must be unique")
    if [f.id for f in features] != list(range(len(features))):
        raise InputError("feature ids must be dense 0..P-1")

    ds = CohortDataset(
        n_samples=labels.size,
        features=tuple(features),
        design=design,
        labels=labels,
        outcome_rate=n_events / labels.size,
    )
    if prune:
        ds, report = prune_constant_features(ds)
        if report.n_removed:
            log.info(
                "pruned %d constant feature(s): %d -> %d columns",
                report.n_removed,
                len(features),
                ds.n_features,
            )
    _freeze(ds.design, ds.labels)
    return ds


def prune_constant_features(
    dataset: CohortDataset,
) -> tuple[CohortDataset, PruneReport]:
    """Drop all-0 and all-1 columns; re-densify feature ids.

    Idempotent.  Pruning to zero features is allowed but flagged with a
    warning.  The report carries the removed descriptors and the old->new
    id mapping for the surviving columns.
    """
    design = dataset.design
    n = dataset.n_samples
    col_sums = np.diff(design.indptr)
    keep = (col_sums > 0) & (col_sums < n)
    if keep.all():
        return dataset, PruneReport(removed=(), id_map={j: j for j in range(design.shape[1])})

    removed = tuple(f for f, k in zip(dataset.features, keep) if not k)
    kept_old_ids = [f.id for f, k in zip(dataset.features, keep) if k]
    id_map = {old: new for new, old in enumerate(kept_old_ids)}
    features = tuple(
        FeatureDescriptor(id_map[f.id], f.name, f.source)
        for f, k in zip(dataset.features, keep)
        if k
    )
    pruned_design = sp.csc_matrix(design[:, keep])
    if pruned_design.shape[1] == 0:
        warnings.warn("pruning removed every feature column", stacklevel=2)
    pruned = CohortDataset(
        n_samples=dataset.n_samples,
        features=features,
        design=pruned_design,
        labels=dataset.labels,
        outcome_rate=dataset.outcome_rate,
    )
    _freeze(pruned.design)
    return pruned, PruneReport(removed=removed, id_map=id_map)


def one_hot_bin(values, spec: BinningSpec) -> np.ndarray:
    """One-hot encode a numeric vector into per-bin binary columns.

    Returns an ``(n, spec.n_bins)`` array of {0,1}; every row sums to
    exactly 1.  Values outside ``[cuts[0], cuts[-1])`` raise an error
    naming the offending sample (bins are left-closed, right-open).
    """
    values = np.asarray(values, dtype=float)
    cuts = np.asarray(spec.cuts, dtype=float)
    out_of_range = (values < cuts[0]) | (values >= cuts[-1])
    if out_of_range.any():
        i = int(np.argmax(out_of_range))
        raise InputError(
            f"value {values[i]!r} at sample {i} outside "
            f"[{cuts[0]:g}, {cuts[-1]:g}) for {spec.feature_name!r}"
        )
    idx = np.searchsorted(cuts, values, side="right") - 1
    columns = np.zeros((values.size, spec.n_bins), dtype=np.int8)
    columns[np.arange(values.size), idx] = 1
    return columns


def read_sparse_matrix(path) -> sp.csc_matrix:
    """Read the plain-text triplet format.

    Header line ``n_samples n_features``; then one ``row col`` pair per
    line (0-based; the value is implicitly 1).  Duplicate pairs would sum
    to a non-binary entry and are rejected.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise InputError(f"{path}: header must be 'n_samples n_features'")
        try:
            n_samples, n_features = int(header[0]), int(header[1])
        except ValueError as exc:
            raise InputError(f"{path}: non-integer header") from exc
        if n_samples <= 0 or n_features < 0:
            raise InputError(f"{path}: non-positive dimensions in header")
        try:
            pairs = np.loadtxt(fh, dtype=np.int64, ndmin=2)
        except ValueError as exc:
            raise InputError(f"{path}: malformed triplet line ({exc})") from exc
    if pairs.size == 0:
        rows = cols = np.empty(0, dtype=np.int64)
    else:
        if pairs.shape[1] != 2:
            raise InputError(f"{path}: expected 'row col' pairs")
        rows, cols = pairs[:, 0], pairs[:, 1]
    if rows.size:
        if rows.min() < 0 or cols.min() < 0:
            raise InputError(f"{path}: negative row or column index")
        if rows.max() >= n_samples or cols.max() >= n_features:
            raise InputError(
                f"{path}: index ({rows.max()}, {cols.max()}) outside declared "
                f"shape ({n_samples}, {n_features})"
            )
        flat = rows * n_features + cols
        if np.unique(flat).size != flat.size:
            raise InputError(f"{path}: duplicate 'row col' pair (non-binary entry)")
    return sp.csc_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(n_samples, n_features)
    )


def read_labels(path) -> np.ndarray:
    """Read one {0,1} label per line."""
    try:
        labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise InputError(f"{path}: malformed label line ({exc})") from exc
    if labels.ndim != 1:
        raise InputError(f"{path}: labels must be one value per line")
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise InputError(f"{path}: labels must be 0 or 1")
    return labels.astype(np.int8)


def load_dataset(matrix_path, labels_path, names_path=None) -> CohortDataset:
    """Load, validate, and prune a dataset from its on-disk parts.

    Parameters
    ----------
    matrix_path : triplet-format sparse design matrix (see
        :func:`read_sparse_matrix`).
    labels_path : one {0,1} label per line.
    names_path : optional sidecar with one feature name per line.
    """
    design = read_sparse_matrix(matrix_path)
    labels = read_labels(labels_path)
    if labels.size != design.shape[0]:
        raise InputError(
            f"{labels_path}: {labels.size} labels for {design.shape[0]} samples"
        )
    features = None
    if names_path is not None:
        with open(names_path) as fh:
            names = [line.strip() for line in fh if line.strip()]
        if len(names) != design.shape[1]:
            raise InputError(
                f"{names_path}: {len(names)} names for {design.shape[1]} columns"
            )
        features = tuple(FeatureDescriptor(j, n) for j, n in enumerate(names))
    return from_arrays(design, labels, features=features)
