"""Data model and CSV persistence for designs, ensembles and observations.

All container types are immutable after construction (backing arrays are
frozen), so they can be shared freely between threads. CSV writers emit
full-precision decimal text (17 significant digits), which round-trips
bit-exactly through the readers.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ParameterPoint",
    "Design",
    "GridSpec",
    "SeriesEnsemble",
    "BinaryEnsemble",
    "SeriesObservation",
    "BinaryObservation",
    "load_matrix",
    "save_matrix",
    "exclude_unrealistic_runs",
]

N_PARAMS = 4

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % x


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ParameterPoint:
    """A single input setting, remapped to the unit hypercube."""

    coords: tuple[float, ...]

    def __post_init__(self):
        if len(self.coords) != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} coordinates, got {len(self.coords)}")
        for i, c in enumerate(self.coords):
            if not (0.0 <= c <= 1.0):
                raise ValueError(f"coordinate {i + 1} = {c} outside [0, 1]")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


def as_theta(theta) -> np.ndarray:
    """Coerce a point-like (ParameterPoint, sequence, array) to a (4,) array."""
    if isinstance(theta, ParameterPoint):
        return theta.array
    a = np.asarray(theta, dtype=float).reshape(-1)
    if a.shape != (N_PARAMS,):
        raise ValueError(f"expected a {N_PARAMS}-dimensional point, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Design:
    """Ordered set of input settings, one row per simulator run."""

    array: np.ndarray  # (p, 4), each entry in [0, 1]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=float).reshape(-1, N_PARAMS)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            bad = np.argwhere((arr < 0.0) | (arr > 1.0))[0]
            raise ValueError(
                f"design row {bad[0] + 1}, column p{bad[1] + 1} outside [0, 1]"
            )
        uniq = np.unique(arr, axis=0)
        if uniq.shape[0] != arr.shape[0]:
            raise ValueError("duplicate design points are not allowed")
        if self.labels is not None and len(self.labels) != arr.shape[0]:
            raise ValueError("label count does not match design size")
        object.__setattr__(self, "array", _freeze(arr))

    def __len__(self) -> int:
        return self.array.shape[0]

    def point(self, i: int) -> ParameterPoint:
        return ParameterPoint(tuple(self.array[i]))

    def subset(self, indices) -> "Design":
        idx = np.asarray(indices, dtype=int)
        labels = tuple(self.labels[i] for i in idx) if self.labels else None
        return Design(self.array[idx], labels)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned hull of the design points (prior support)."""
        return self.array.min(axis=0), self.array.max(axis=0)


@dataclass(frozen=True)
class GridSpec:
    """Physical raster behind a flattened binary field.

    ``mask`` lists flattened (row-major) cell indices that are permanently
    off-domain; masked cells are dropped before the field length m is counted.
    """

    rows: int
    cols: int
    mask: tuple[int, ...] = ()
    units: str = "none"

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("grid dimensions must be positive")
        mask = tuple(sorted(set(int(i) for i in self.mask)))
        if mask and (mask[0] < 0 or mask[-1] >= self.rows * self.cols):
            raise ValueError("mask index outside grid")
        object.__setattr__(self, "mask", mask)

    @property
    def m(self) -> int:
        return self.rows * self.cols - len(self.mask)

    def kept_indices(self) -> np.ndarray:
        keep = np.ones(self.rows * self.cols, dtype=bool)
        if self.mask:
            keep[list(self.mask)] = False
        return np.nonzero(keep)[0]

    def cell_labels(self) -> list[str]:
        return [f"r{i // self.cols}_c{i % self.cols}" for i in self.kept_indices()]

    def to_full(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        """Scatter an m-vector back onto the (rows, cols) raster."""
        full = np.full(self.rows * self.cols, fill, dtype=float)
        full[self.kept_indices()] = values
        return full.reshape(self.rows, self.cols)


@dataclass(frozen=True)
class SeriesEnsemble:
    """q runs of a continuous time series (q x n), aligned to a design."""

    values: np.ndarray
    time_coords: np.ndarray
    design: Design

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        t = np.asarray(self.time_coords, dtype=float)
        if vals.ndim != 2:
            raise ValueError("series values must be 2-D")
        if t.ndim != 1 or t.size != vals.shape[1]:
            raise ValueError(
                f"time axis length {t.size} does not match {vals.shape[1]} columns"
            )
        dt = np.diff(t)
        if np.any(dt <= 0):
            j = int(np.nonzero(dt <= 0)[0][0])
            raise ValueError(
                f"time coordinates not strictly increasing at column {j + 2} "
                f"({t[j]} -> {t[j + 1]})"
            )
        if vals.shape[0] != len(self.design):
            raise ValueError(
                f"{vals.shape[0]} runs but design has {len(self.design)} rows"
            )
        if not np.all(np.isfinite(vals)):
            i, j = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"non-finite value at run {i + 1}, column {j + 1}")
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "time_coords", _freeze(t))

    @property
    def n_runs(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BinaryEnsemble:
    """p runs of a flattened {0,1} spatial field (p x m), aligned to a design."""

    values: np.ndarray
    grid: GridSpec
    design: Design

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 2:
            raise ValueError("binary values must be 2-D")
        bad = (vals != 0) & (vals != 1)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise ValueError(
                f"entry at run {i + 1}, cell {j + 1} is {vals[i, j]!r}, not 0/1"
            )
        if vals.shape[1] != self.grid.m:
            raise ValueError(
                f"{vals.shape[1]} cells but grid keeps {self.grid.m} after masking"
            )
        if vals.shape[0] != len(self.design):
            raise ValueError(
                f"{vals.shape[0]} runs but design has {len(self.design)} rows"
            )
        object.__setattr__(self, "values", _freeze(vals.astype(np.int8)))

    @property
    def n_runs(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SeriesObservation:
    """One observed time series on the same time axis as its ensemble."""

    values: np.ndarray
    time_coords: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        t = np.asarray(self.time_coords, dtype=float)
        if vals.ndim != 1 or t.ndim != 1 or vals.size != t.size:
            raise ValueError("observation and time axis lengths differ")
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "time_coords", _freeze(t))

    def matches(self, e: SeriesEnsemble) -> bool:
        return self.values.size == e.n_times and np.array_equal(
            self.time_coords, e.time_coords
        )


@dataclass(frozen=True)
class BinaryObservation:
    """One observed {0,1} field on the same grid as its ensemble."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        vals = np.asarray(self.values)
        bad = (vals != 0) & (vals != 1)
        if vals.ndim != 1:
            raise ValueError("binary observation must be 1-D")
        if np.any(bad):
            j = int(np.argwhere(bad)[0])
            raise ValueError(f"entry at cell {j + 1} is {vals[j]!r}, not 0/1")
        if vals.size != self.grid.m:
            raise ValueError(f"{vals.size} cells but grid keeps {self.grid.m}")
        object.__setattr__(self, "values", _freeze(vals.astype(np.int8)))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path}: no rows")
    return rows


def _parse_floats(cells: list[str], path, row_no: int) -> np.ndarray:
    try:
        return np.array([float(c) for c in cells])
    except ValueError:
        for j, c in enumerate(cells):
            try:
                float(c)
            except ValueError:
                raise ValueError(
                    f"{path}: row {row_no}, column {j + 1}: cannot parse {c!r}"
                ) from None
        raise


def load_matrix(path, kind: str, *, design: Design | None = None,
                grid: GridSpec | None = None):
    """Load one CSV artifact and return the validated domain object.

    kind is one of design|series|binary|observation_series|observation_binary
    (plain "observation" is accepted as an alias for observation_series).
    Series and binary ensembles need the paired ``design``; binary artifacts
    need the ``grid`` (or a ``<path>.manifest.json`` next to the CSV).
    """
    path = Path(path)
    kind = {"observation": "observation_series"}.get(kind, kind)
    rows = _read_rows(path)

    if kind == "design":
        header = [h.strip() for h in rows[0]]
        expect = [f"p{i + 1}" for i in range(N_PARAMS)]
        if header[:N_PARAMS] != expect:
            raise ValueError(f"{path}: design header must start with {expect}")
        has_label = len(header) > N_PARAMS
        coords, labels = [], []
        for r, row in enumerate(rows[1:], start=2):
            coords.append(_parse_floats(row[:N_PARAMS], path, r))
            if has_label:
                labels.append(row[N_PARAMS])
        if not coords:
            raise ValueError(f"{path}: no rows")
        return Design(np.array(coords), tuple(labels) if has_label else None)

    if kind in ("series", "observation_series"):
        t = _parse_floats(rows[0], path, 1)
        data = np.array([_parse_floats(r, path, i + 2) for i, r in enumerate(rows[1:])])
        if kind == "observation_series":
            if data.shape[0] != 1:
                raise ValueError(f"{path}: observation must have exactly one data row")
            return SeriesObservation(data[0], t)
        if data.size == 0:
            raise ValueError(f"{path}: no rows")
        if design is None:
            raise ValueError("loading a series ensemble requires its design")
        return SeriesEnsemble(data, t, design)

    if kind in ("binary", "observation_binary"):
        if grid is None:
            grid = _load_grid_manifest(path)
        header = [h.strip() for h in rows[0]]
        if header != grid.cell_labels():
            raise ValueError(f"{path}: cell header does not match grid manifest")
        data = np.array([_parse_floats(r, path, i + 2) for i, r in enumerate(rows[1:])])
        if data.size == 0:
            raise ValueError(f"{path}: no rows")
        if kind == "observation_binary":
            if data.shape[0] != 1:
                raise ValueError(f"{path}: observation must have exactly one data row")
            return BinaryObservation(_check_binary(data[0], path), grid)
        if design is None:
            raise ValueError("loading a binary ensemble requires its design")
        return BinaryEnsemble(_check_binary(data, path), grid, design)

    raise ValueError(f"unknown kind {kind!r}")


def _check_binary(data: np.ndarray, path) -> np.ndarray:
    bad = (data != 0.0) & (data != 1.0)
    if np.any(bad):
        where = np.argwhere(np.atleast_2d(bad))[0]
        raise ValueError(
            f"{path}: row {where[0] + 2}, column {where[1] + 1}: "
            f"entry {np.atleast_2d(data)[tuple(where)]} is not 0/1"
        )
    return data.astype(np.int8)


def _manifest_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(csv_path.suffix + ".manifest.json")


def _load_grid_manifest(csv_path: Path) -> GridSpec:
    mpath = _manifest_path(csv_path)
    if not mpath.exists():
        raise ValueError(f"{csv_path}: grid manifest {mpath.name} not found")
    meta = json.loads(mpath.read_text())
    return GridSpec(meta["grid_rows"], meta["grid_cols"],
                    tuple(meta.get("mask", ())), meta.get("units", "none"))


def save_matrix(obj, path) -> None:
    """Write one domain object as CSV (plus a grid manifest for binary data)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, Design):
        header = [f"p{i + 1}" for i in range(N_PARAMS)]
        if obj.labels:
            header.append("label")
        lines = [",".join(header)]
        for i, row in enumerate(obj.array):
            cells = [_fmt(v) for v in row]
            if obj.labels:
                cells.append(obj.labels[i])
            lines.append(",".join(cells))
    elif isinstance(obj, (SeriesEnsemble, SeriesObservation)):
        lines = [",".join(_fmt(v) for v in obj.time_coords)]
        data = obj.values if obj.values.ndim == 2 else obj.values[None, :]
        lines += [",".join(_fmt(v) for v in row) for row in data]
    elif isinstance(obj, (BinaryEnsemble, BinaryObservation)):
        lines = [",".join(obj.grid.cell_labels())]
        data = obj.values if obj.values.ndim == 2 else obj.values[None, :]
        lines += [",".join(str(int(v)) for v in row) for row in data]
        manifest = {
            "grid_rows": obj.grid.rows,
            "grid_cols": obj.grid.cols,
            "mask": list(obj.grid.mask),
            "units": obj.grid.units,
        }
        _manifest_path(path).write_text(json.dumps(manifest, indent=1) + "\n")
    else:
        raise TypeError(f"cannot save object of type {type(obj).__name__}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# run screening
# ---------------------------------------------------------------------------


def exclude_unrealistic_runs(
    e: SeriesEnsemble, threshold_position: float, cutoff_time: float
) -> tuple[SeriesEnsemble, list[int]]:
    """Drop runs that cross the position threshold too early.

    A run is excluded when its position is at or beyond ``threshold_position``
    (value <= threshold) at any time strictly before ``cutoff_time``. Returns
    the retained sub-ensemble and the sorted excluded row indices, so retained
    and excluded rows together reconstruct the original row set.
    """
    t = e.time_coords
    if not (t[0] <= cutoff_time <= t[-1]):
        raise ValueError(
            f"cutoff_time {cutoff_time} outside time range [{t[0]}, {t[-1]}]"
        )
    before = t < cutoff_time  # strictly before the cutoff
    crossed = (e.values[:, before] <= threshold_position).any(axis=1)
    excluded = np.nonzero(crossed)[0]
    retained = np.nonzero(~crossed)[0]
    if retained.size == 0:
        warnings.warn("all runs excluded by the early-crossing rule")
    if retained.size == e.n_runs:
        return e, []
    sub = SeriesEnsemble(e.values[retained], t, e.design.subset(retained))
    return sub, [int(i) for i in excluded]
