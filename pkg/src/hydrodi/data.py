"""Basin records and the on-disk CSV layout.

Layout under a data root::

    attributes.csv            basin_id,<17 attribute columns>
    forcing/<basin_id>.csv    date,PRCP,SRAD,Tmax,Tmin,Vp,Dayl
    discharge/<basin_id>.csv  date,value        (native units, cfs)
    sim/<basin_id>.csv        date,sim_discharge  (optional, exogenous model)
    twsa/<basin_id>.csv       date,value        (optional, monthly storage anomaly)

Negative or blank discharge values are treated as missing. ``convert_camels``
rewrites a native CAMELS download into this layout.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

FORCING_NAMES = ("PRCP", "SRAD", "Tmax", "Tmin", "Vp", "Dayl")
ATTRIBUTE_NAMES = (
    "elev_mean",
    "slope_mean",
    "area_gages2",
    "frac_forest",
    "lai_max",
    "lai_diff",
    "dom_land_cover_frac",
    "dom_land_cover",
    "root_depth_50",
    "soil_depth_statsgo",
    "soil_porosity",
    "soil_conductivity",
    "max_water_content",
    "geol_class_1st",
    "geol_class_2nd",
    "geol_porosity",
    "geol_permeability",
)
CATEGORICAL = ("dom_land_cover", "geol_class_1st", "geol_class_2nd")
MISSING_SENTINEL = -999.0


@dataclass
class BasinRecord:
    basin_id: str
    dates: np.ndarray  # datetime64[D], contiguous daily
    forcing: np.ndarray  # (T, 6) in FORCING_NAMES order
    discharge: np.ndarray  # (T,) native units, NaN = missing
    attributes: dict
    sim: np.ndarray | None = None
    twsa: tuple | None = None  # (month dates, values)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        T = self.dates.size
        if T and np.any(np.diff(self.dates).astype(int) != 1):
            raise DataError(f"basin {self.basin_id}: dates are not a contiguous daily calendar")
        if self.forcing.shape != (T, len(FORCING_NAMES)):
            raise DataError(f"basin {self.basin_id}: forcing shape {self.forcing.shape}")
        if self.discharge.shape != (T,):
            raise DataError(f"basin {self.basin_id}: discharge length {self.discharge.shape}")

    @property
    def area(self) -> float:
        return float(self.attributes["area_gages2"])

    @property
    def mask(self) -> np.ndarray:
        return np.isfinite(self.discharge)

    def __len__(self):
        return self.dates.size


def parse_date(s: str) -> np.datetime64:
    return np.datetime64(s.strip(), "D")


def _num(s: str) -> float:
    s = s.strip()
    if not s or s.lower() in ("nan", "na"):
        return math.nan
    return float(s)


def _read_rows(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for lineno, row in enumerate(reader, start=2):
            yield lineno, header, row


def _read_series(path: Path, columns: int):
    """Dated numeric rows; malformed rows are logged and skipped."""
    dates, values = [], []
    for lineno, header, row in _read_rows(path):
        if len(row) != columns + 1:
            log.warning("%s:%d: expected %d fields, got %d", path, lineno, columns + 1, len(row))
            continue
        try:
            d = parse_date(row[0])
            v = [_num(x) for x in row[1:]]
        except ValueError as exc:
            log.warning("%s:%d: %s", path, lineno, exc)
            continue
        dates.append(d)
        values.append(v)
    return np.array(dates, dtype="datetime64[D]"), np.array(values, dtype=np.float64).reshape(-1, columns)


def _align(dates, values, target_dates):
    out = np.full((target_dates.size,) + values.shape[1:], np.nan)
    if dates.size == 0:
        return out
    idx = (dates - target_dates[0]).astype(int)
    ok = (idx >= 0) & (idx < target_dates.size)
    out[idx[ok]] = values[ok]
    return out


def read_attributes(path: Path) -> dict:
    table = {}
    for lineno, header, row in _read_rows(path):
        if len(row) != len(header):
            log.warning("%s:%d: expected %d fields, got %d", path, lineno, len(header), len(row))
            continue
        rec = dict(zip(header, row))
        bid = rec.pop("basin_id").strip()
        table[bid] = rec
    return table


def _parse_attributes(raw: dict, basin_id: str) -> dict | None:
    attrs = {}
    for name in ATTRIBUTE_NAMES:
        v = raw.get(name, "").strip()
        if not v or v.lower() == "nan":
            log.warning("basin %s: attribute %s missing, basin skipped", basin_id, name)
            return None
        if name in CATEGORICAL:
            attrs[name] = v
        else:
            try:
                attrs[name] = float(v)
            except ValueError:
                log.warning("basin %s: attribute %s=%r not numeric, basin skipped", basin_id, name, v)
                return None
    return attrs


def load_basin(root: Path, basin_id: str, raw_attrs: dict) -> BasinRecord:
    attrs = _parse_attributes(raw_attrs, basin_id)
    if attrs is None:
        raise DataError(f"basin {basin_id}: incomplete attributes")
    fdates, forcing = _read_series(root / "forcing" / f"{basin_id}.csv", len(FORCING_NAMES))
    if fdates.size == 0:
        raise DataError(f"basin {basin_id}: empty forcing file")
    order = np.argsort(fdates)
    fdates, forcing = fdates[order], forcing[order]
    dates = np.arange(fdates[0], fdates[-1] + 1)
    forcing = _align(fdates, forcing, dates)
    if not np.all(np.isfinite(forcing)):
        raise DataError(f"basin {basin_id}: forcing has gaps or non-numeric values")
    qdates, q = _read_series(root / "discharge" / f"{basin_id}.csv", 1)
    q = _align(qdates, q, dates)[:, 0]
    q[q < 0] = np.nan
    sim = None
    sim_path = root / "sim" / f"{basin_id}.csv"
    if sim_path.exists():
        sdates, s = _read_series(sim_path, 1)
        sim = _align(sdates, s, dates)[:, 0]
    twsa = None
    twsa_path = root / "twsa" / f"{basin_id}.csv"
    if twsa_path.exists():
        tdates, tv = _read_series(twsa_path, 1)
        twsa = (tdates, tv[:, 0])
    return BasinRecord(basin_id, dates, forcing, q, attrs, sim, twsa)


def ingest(root, basins=None) -> list[BasinRecord]:
    """Load basins from ``root``; unreadable basins are skipped with a warning."""
    root = Path(root)
    attr_path = root / "attributes.csv"
    if not attr_path.exists():
        raise DataError(f"missing {attr_path}")
    table = read_attributes(attr_path)
    wanted = list(table) if basins is None else [str(b) for b in basins]
    records = []
    for bid in wanted:
        if bid not in table:
            log.warning("basin %s not in %s, skipped", bid, attr_path)
            continue
        try:
            records.append(load_basin(root, bid, table[bid]))
        except (DataError, OSError) as exc:
            log.warning("basin %s skipped: %s", bid, exc)
    if not records:
        raise DataError(f"no usable basins under {root}")
    return records


def _fmt(v) -> str:
    return repr(float(v))


def _atomic_write(path: Path, rows, header):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def write_records(records, root) -> None:
    """Write records in the layout read by :func:`ingest` (lossless for floats)."""
    root = Path(root)
    _atomic_write(
        root / "attributes.csv",
        [[r.basin_id] + [r.attributes[a] if a in CATEGORICAL else _fmt(r.attributes[a])
                         for a in ATTRIBUTE_NAMES] for r in records],
        ["basin_id", *ATTRIBUTE_NAMES],
    )
    for r in records:
        days = [str(d) for d in r.dates]
        _atomic_write(
            root / "forcing" / f"{r.basin_id}.csv",
            [[d, *map(_fmt, row)] for d, row in zip(days, r.forcing)],
            ["date", *FORCING_NAMES],
        )
        q = np.where(np.isfinite(r.discharge), r.discharge, MISSING_SENTINEL)
        _atomic_write(root / "discharge" / f"{r.basin_id}.csv",
                      [[d, _fmt(v)] for d, v in zip(days, q)], ["date", "value"])
        if r.sim is not None:
            _atomic_write(root / "sim" / f"{r.basin_id}.csv",
                          [[d, _fmt(v)] for d, v in zip(days, r.sim)], ["date", "sim_discharge"])
        if r.twsa is not None:
            _atomic_write(root / "twsa" / f"{r.basin_id}.csv",
                          [[str(d), _fmt(v)] for d, v in zip(*r.twsa)], ["date", "value"])


# --- native CAMELS adapter -------------------------------------------------

_CAMELS_ATTR_FILES = ("camels_topo.txt", "camels_vege.txt", "camels_soil.txt", "camels_geol.txt")
# native CAMELS column names that differ from ours (including its "porostiy" typo)
_CAMELS_ALIASES = {"geol_1st_class": "geol_class_1st", "geol_2nd_class": "geol_class_2nd",
                   "geol_porostiy": "geol_porosity"}
_CAMELS_FORCING_COLS = {"PRCP": "prcp(mm/day)", "SRAD": "srad(W/m2)", "Tmax": "tmax(C)",
                        "Tmin": "tmin(C)", "Vp": "vp(Pa)", "Dayl": "dayl(s)"}


def _camels_attr_table(camels_root: Path) -> dict:
    table: dict = {}
    for name in _CAMELS_ATTR_FILES:
        path = next(iter(camels_root.rglob(name)), None)
        if path is None:
            log.warning("CAMELS attribute file %s not found", name)
            continue
        with open(path) as fh:
            header = fh.readline().strip().split(";")
            for line in fh:
                parts = line.strip().split(";")
                if len(parts) != len(header):
                    continue
                rec = {_CAMELS_ALIASES.get(k, k): v for k, v in zip(header, parts)}
                table.setdefault(rec["gauge_id"].strip().zfill(8), {}).update(rec)
    return table


def _read_camels_forcing(path: Path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = lines[3].split()
    # the date occupies the first four whitespace-separated fields (Year Mnth Day Hr)
    cols = header[4:] if header[:2] == ["Year", "Mnth"] else header
    dates, rows = [], []
    for line in lines[4:]:
        parts = line.split()
        if len(parts) < 4 + len(cols):
            continue
        y, m, d = int(parts[0]), int(parts[1]), int(parts[2])
        dates.append(np.datetime64(f"{y:04d}-{m:02d}-{d:02d}", "D"))
        vals = dict(zip(cols, map(float, parts[4:])))
        rows.append([vals[_CAMELS_FORCING_COLS[n]] for n in FORCING_NAMES])
    return np.array(dates), np.array(rows)


def _read_camels_flow(path: Path):
    dates, q = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) < 5:
                continue
            y, m, d = int(parts[1]), int(parts[2]), int(parts[3])
            dates.append(np.datetime64(f"{y:04d}-{m:02d}-{d:02d}", "D"))
            v = float(parts[4])
            q.append(np.nan if v < 0 else v)
    return np.array(dates), np.array(q)


def convert_camels(camels_root, out_root, basins=None, forcing_source: str = "daymet") -> list[str]:
    """Rewrite a native CAMELS directory tree into the package layout.

    Expects ``basin_mean_forcing/<source>/<huc>/<id>_lump_*_forcing_leap.txt``,
    ``usgs_streamflow/<huc>/<id>_streamflow_qc.txt`` and the ``camels_*.txt``
    attribute tables somewhere below ``camels_root``.
    """
    camels_root = Path(camels_root)
    table = _camels_attr_table(camels_root)
    wanted = sorted(table) if basins is None else [str(b).zfill(8) for b in basins]
    records = []
    for bid in wanted:
        fpath = next(iter(camels_root.rglob(f"basin_mean_forcing/{forcing_source}/*/{bid}_lump_*forcing*.txt")), None)
        qpath = next(iter(camels_root.rglob(f"usgs_streamflow/*/{bid}_streamflow_qc.txt")), None)
        if fpath is None or qpath is None or bid not in table:
            log.warning("CAMELS basin %s incomplete, skipped", bid)
            continue
        attrs = _parse_attributes(table[bid], bid)
        if attrs is None:
            continue
        fdates, forcing = _read_camels_forcing(fpath)
        dates = np.arange(fdates.min(), fdates.max() + 1)
        forcing = _align(fdates, forcing, dates)
        if not np.all(np.isfinite(forcing)):
            log.warning("CAMELS basin %s has forcing gaps, skipped", bid)
            continue
        qd, q = _read_camels_flow(qpath)
        records.append(BasinRecord(bid, dates, forcing, _align(qd, q[:, None], dates)[:, 0], attrs))
    if not records:
        raise DataError(f"no CAMELS basins converted from {camels_root}")
    write_records(records, out_root)
    return [r.basin_id for r in records]
