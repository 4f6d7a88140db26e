"""Dataset ingestion (CSV) and synthetic bandlimited dataset generation."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import build_knn_graph, eigendecompose, laplacian
from .sampling import FrequencySet, build_projector


class DatasetParseError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class DatasetBundle:
    """Node coordinates and a ground-truth signal matrix (nodes x time)."""

    coords: np.ndarray
    signal_matrix: np.ndarray
    labels: tuple | None = None
    band: FrequencySet | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        sig = np.asarray(self.signal_matrix, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must have shape (n, 2)")
        if sig.ndim != 2 or sig.shape[0] != coords.shape[0]:
            raise ValueError("signal_matrix must have one row per node")
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(sig))):
            raise ValueError("dataset contains non-finite values")
        if self.labels is not None and len(self.labels) != coords.shape[0]:
            raise ValueError("one label per node required")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "signal_matrix", sig)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def n_nodes(self) -> int:
        return self.signal_matrix.shape[0]

    @property
    def n_steps(self) -> int:
        return self.signal_matrix.shape[1]

    def equals(self, other: "DatasetBundle") -> bool:
        return (
            np.array_equal(self.coords, other.coords)
            and np.array_equal(self.signal_matrix, other.signal_matrix)
            and self.labels == other.labels
        )


_TIME_COL = re.compile(r"t(\d+)$")


def load_dataset_csv(path) -> DatasetBundle:
    """Read ``station_id,lat,lon,t0,...,t{T-1}``; row order gives node indices."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetParseError("empty file", row=1) from None
    header = [h.strip() for h in header]
    if header[:3] != ["station_id", "lat", "lon"]:
        raise DatasetParseError("header must start with station_id,lat,lon", row=1)
    times = header[3:]
    if not times:
        raise DatasetParseError("no time columns", row=1)
    for k, name in enumerate(times):
        m = _TIME_COL.match(name)
        if m is None or int(m.group(1)) != k:
            raise DatasetParseError(f"expected time column t{k}, found {name!r}", row=1, column=k + 4)

    labels, coords, values = [], [], []
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetParseError(
                f"expected {len(header)} cells, found {len(row)}", row=rownum
            )
        nums = []
        for col, cell in enumerate(row[1:], start=2):
            cell = cell.strip()
            if cell == "":
                raise DatasetParseError("missing value", row=rownum, column=header[col - 1])
            try:
                nums.append(float(cell))
            except ValueError:
                raise DatasetParseError(
                    f"non-numeric value {cell!r}", row=rownum, column=header[col - 1]
                ) from None
        labels.append(row[0].strip())
        coords.append(nums[:2])
        values.append(nums[2:])
    if not labels:
        raise DatasetParseError("no station rows")
    return DatasetBundle(coords=np.array(coords), signal_matrix=np.array(values), labels=tuple(labels))


def dataset_csv_text(bundle: DatasetBundle) -> str:
    """CSV text in the format read by :func:`load_dataset_csv`.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    labels = bundle.labels or tuple(f"s{i:03d}" for i in range(bundle.n_nodes))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["station_id", "lat", "lon"] + [f"t{k}" for k in range(bundle.n_steps)])
    for i in range(bundle.n_nodes):
        row = [labels[i], repr(float(bundle.coords[i, 0])), repr(float(bundle.coords[i, 1]))]
        row += [repr(float(v)) for v in bundle.signal_matrix[i]]
        w.writerow(row)
    return buf.getvalue()


def save_dataset_csv(bundle: DatasetBundle, path) -> None:
    Path(path).write_text(dataset_csv_text(bundle), encoding="utf-8")


def random_coordinates(n: int, seed: int, lat_range=(35.0, 45.0), lon_range=(-110.0, -90.0)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(*lat_range, size=n), rng.uniform(*lon_range, size=n)])


def generate_synthetic_dataset(
    n_nodes: int = 197,
    k: int = 8,
    band_size: int = 120,
    n_steps: int = 95,
    seed: int = 0,
    *,
    band: FrequencySet | None = None,
    coords=None,
    amplitude: float = 5.0,
    drift: float = 1.0,
    offset: float = 0.0,
    metric: str = "haversine",
) -> DatasetBundle:
    """Exactly bandlimited time-varying signal on a random geographic k-NN graph.

    The spectral coefficients start as ``N(0, amplitude**2 / (1 + lambda))`` and
    follow a random walk with per-step standard deviation
    ``drift / sqrt(1 + lambda)``, so low frequencies dominate. ``band`` defaults
    to the ``band_size`` lowest frequencies. ``offset`` adds a constant level
    when frequency 0 is in the band.
    """
    rng = np.random.default_rng(seed)
    if coords is None:
        coords = random_coordinates(n_nodes, int(rng.integers(2**31)))
    coords = np.asarray(coords, dtype=float)
    n_nodes = coords.shape[0]
    spectrum = eigendecompose(laplacian(build_knn_graph(coords, k, metric=metric)))
    if band is None:
        band = FrequencySet(tuple(range(band_size)))
    projector = build_projector(spectrum, band)
    idx = band.as_array()
    lam = spectrum.eigenvalues[idx]
    std0 = amplitude / np.sqrt(1.0 + lam)
    stepstd = drift / np.sqrt(1.0 + lam)

    coef = np.empty((idx.size, n_steps))
    coef[:, 0] = rng.normal(0.0, std0)
    if idx.size and idx[0] == 0:
        coef[0, 0] += offset * np.sqrt(n_nodes)
    if n_steps > 1:
        incr = rng.normal(0.0, 1.0, size=(idx.size, n_steps - 1)) * stepstd[:, None]
        coef[:, 1:] = coef[:, :1] + np.cumsum(incr, axis=1)
    signal = projector.u_f @ coef
    labels = tuple(f"s{i:03d}" for i in range(n_nodes))
    return DatasetBundle(coords=coords, signal_matrix=signal, labels=labels, band=band)
