import logging

import numpy as np
import pytest

from hydrodi.data import ATTRIBUTE_NAMES, CATEGORICAL, FORCING_NAMES, convert_camels, ingest, write_records
from hydrodi.errors import DataError


def _attrs(area="120.5"):
    row = {}
    for n in ATTRIBUTE_NAMES:
        row[n] = "Loam" if n in CATEGORICAL else ("%s" % area if n == "area_gages2" else "0.25")
    return row


def make_fixture(root, basins=("01", "02"), days=10, attrs_missing=()):
    (root / "forcing").mkdir(parents=True)
    (root / "discharge").mkdir()
    lines = ["basin_id," + ",".join(ATTRIBUTE_NAMES)]
    for b in basins:
        a = _attrs()
        if b in attrs_missing:
            a["soil_porosity"] = ""
        lines.append(b + "," + ",".join(a[n] for n in ATTRIBUTE_NAMES))
        dates = np.arange(np.datetime64("2001-03-01"), np.datetime64("2001-03-01") + days)
        f = ["date," + ",".join(FORCING_NAMES)]
        q = ["date,value"]
        for i, d in enumerate(dates):
            f.append(f"{d},{i * 0.5},200,{10 + i},{i},900,40000")
            q.append(f"{d},{-999 if i == 3 else 10 + i}")
        (root / "forcing" / f"{b}.csv").write_text("\n".join(f) + "\n")
        (root / "discharge" / f"{b}.csv").write_text("\n".join(q) + "\n")
    (root / "attributes.csv").write_text("\n".join(lines) + "\n")


def test_two_basin_fixture(tmp_path):
    make_fixture(tmp_path)
    recs = ingest(tmp_path)
    assert [r.basin_id for r in recs] == ["01", "02"]
    r = recs[0]
    assert r.dates.size == 10 and r.forcing.shape == (10, 6)
    assert r.forcing[4, 0] == 2.0 and r.forcing[4, 2] == 14.0
    assert r.attributes["area_gages2"] == 120.5 and r.attributes["dom_land_cover"] == "Loam"


def test_sentinel_becomes_missing(tmp_path):
    make_fixture(tmp_path)
    q = ingest(tmp_path)[0].discharge
    assert np.isnan(q[3]) and np.isfinite(q).sum() == 9


def test_incomplete_attributes_skip_basin(tmp_path, caplog):
    make_fixture(tmp_path, attrs_missing=("02",))
    with caplog.at_level(logging.WARNING):
        recs = ingest(tmp_path)
    assert [r.basin_id for r in recs] == ["01"]
    assert "soil_porosity" in caplog.text


def test_missing_files_skip_and_zero_basins_fatal(tmp_path, caplog):
    make_fixture(tmp_path)
    (tmp_path / "forcing" / "01.csv").unlink()
    assert [r.basin_id for r in ingest(tmp_path)] == ["02"]
    (tmp_path / "forcing" / "02.csv").unlink()
    with pytest.raises(DataError):
        ingest(tmp_path)
    with pytest.raises(DataError):
        ingest(tmp_path / "nowhere")


def test_malformed_row_reported_with_line(tmp_path, caplog):
    make_fixture(tmp_path)
    p = tmp_path / "discharge" / "01.csv"
    lines = p.read_text().splitlines()
    lines[5] = lines[5] + ",extra"
    p.write_text("\n".join(lines) + "\n")
    with caplog.at_level(logging.WARNING):
        q = ingest(tmp_path, ["01"])[0].discharge
    assert f"{p}:6" in caplog.text
    assert np.isnan(q[4])


def test_roundtrip_is_lossless(tmp_path, small_records):
    recs, _ = small_records
    write_records(recs, tmp_path / "a")
    back = ingest(tmp_path / "a")
    for r, b in zip(recs, back):
        assert r.basin_id == b.basin_id and np.array_equal(r.dates, b.dates)
        assert np.array_equal(r.forcing, b.forcing)
        assert np.array_equal(r.discharge, b.discharge, equal_nan=True)
        assert r.attributes == b.attributes
        assert np.array_equal(r.twsa[1], b.twsa[1])
    write_records(back, tmp_path / "b")
    for f in (tmp_path / "a").rglob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_camels_adapter(tmp_path):
    src = tmp_path / "camels"
    (src / "basin_mean_forcing" / "daymet" / "01").mkdir(parents=True)
    (src / "usgs_streamflow" / "01").mkdir(parents=True)
    bid = "01013500"
    rows = ["40", "250", "1000",
            "Year Mnth Day Hr dayl(s) prcp(mm/day) srad(W/m2) swe(mm) tmax(C) tmin(C) vp(Pa)"]
    flow = []
    for d in range(1, 6):
        rows.append(f"1990 01 {d:02d} 12 30000 {d}.5 150 0 {d} -{d} 500")
        flow.append(f"{bid} 1990 01 {d:02d} {-999 if d == 2 else 100 + d} A")
    (src / "basin_mean_forcing" / "daymet" / "01" / f"{bid}_lump_cida_forcing_leap.txt").write_text("\n".join(rows))
    (src / "usgs_streamflow" / "01" / f"{bid}_streamflow_qc.txt").write_text("\n".join(flow))
    native = {"geol_1st_class": "x", "geol_2nd_class": "y", "geol_porostiy": "0.1"}
    attrs = {n: ("1.0" if n not in CATEGORICAL else "c") for n in ATTRIBUTE_NAMES
             if n not in ("geol_class_1st", "geol_class_2nd", "geol_porosity")}
    attrs.update(native)
    keys = list(attrs)
    for name, part in (("camels_topo.txt", keys[:6]), ("camels_geol.txt", keys[6:])):
        (src / name).write_text("gauge_id;" + ";".join(part) + "\n" + "1013500;" + ";".join(attrs[k] for k in part) + "\n")
    out = tmp_path / "out"
    assert convert_camels(src, out) == [bid]
    rec = ingest(out)[0]
    assert rec.dates.size == 5 and rec.forcing[0].tolist() == [1.5, 150, 1, -1, 500, 30000]
    assert np.isnan(rec.discharge[1]) and rec.discharge[0] == 101
    assert rec.attributes["geol_class_1st"] == "x" and rec.attributes["geol_porosity"] == 0.1
