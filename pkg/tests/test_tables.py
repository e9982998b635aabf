import math

import numpy as np
import pytest

from eso_levy import tables
from eso_levy.fdm import FdmGrid
from eso_levy.spectral import GridSpec

SMALL = tables.Setting(models=("gbm",), grid=GridSpec(6.0, 4096, 256), fdm=FdmGrid(6.0, 1000, 250))


def series(rows):
    out = {}
    for r in rows:
        out.setdefault(r["series"], []).append((r["x"], r["y"]))
    return {k: np.array(v) for k, v in out.items()}


def test_table3_rows_and_references():
    rows = tables.table3(SMALL)
    assert len(rows) == 6
    for r in rows:
        assert abs(r["value"] - r["reference"]) / r["reference"] < 0.01


def test_table5_methods():
    rows = tables.table5(tables.Setting(models=("gbm",), t_v=(0.0,), grid=SMALL.grid, fdm=SMALL.fdm))
    assert [r["method"] for r in rows] == ["FSTA", "FSTG", "FDM"]
    assert all(abs(r["value"] / r["reference"] - 1) < 0.01 for r in rows)


def test_table4_and_table6():
    t4 = tables.table4(SMALL)
    assert len(t4) == 10 and all(abs(r["value"] / r["reference"] - 1) < 0.01 for r in t4)
    t6 = tables.table6(tables.Setting(models=("gbm",), grid=SMALL.grid))
    assert [r["method"] for r in t6] == ["Closed", "FST-FST", "FFT-FST"] * 2
    assert all(abs(r["value"] - r["reference"]) < 2e-3 for r in t6)


def test_unknown_reference_is_nan():
    rows = tables.table3(tables.Setting(models=("gbm",), t_v=(1.0,), grid=SMALL.grid, methods=("FST",)))
    assert math.isnan(rows[0]["reference"])


def test_figure3_boundaries_ordered():
    s = series(tables.figure3(SMALL))
    lo, hi = s["lambda=0.1"][:, 1], s["lambda=0.3"][:, 1]
    assert np.all(lo >= hi)
    assert np.all(s["alpha=1"][:, 1] > 10.0)


def test_figure4_shape():
    s = series(tables.figure4(SMALL))
    ys = np.array([s[f"lambda={v}"][:, 1] for v in ("0.1", "0.2", "0.3")])
    assert np.all(np.diff(ys, axis=1) >= 0) and np.all(np.diff(ys, axis=0) <= 0)


def test_figure5_and_6():
    s5 = series(tables.figure5(SMALL))
    st = [s5[f"s_star;lambda={v}"][0, 1] for v in ("0", "0.2", "1")]
    assert st[0] > st[1] > st[2]
    s6 = series(tables.figure6(SMALL))
    for v in ("0", "0.2", "1"):
        assert np.all(np.diff(s6[f"vesting;lambda={v}"][:, 1]) <= 1e-12)


def test_figure7_panels():
    s = series(tables.figure7(SMALL))
    assert np.allclose(s["voluntary;S=10"][:, 0], tables.FIG7_LAMS)
    assert np.all(np.diff(s["voluntary;S=10"][:, 1]) < 0)
    assert np.all(np.diff(s["termination;S=10"][:, 1]) > 0)
    for key in ("voluntary;lambda=0.2", "termination;lambda=0.2"):
        assert np.all(np.diff(s[key][:, 1]) > 0)
    h, hv = s["termination;lambda=0.2"][:, 1], s["voluntary;lambda=0.2"][:, 1]
    assert np.all(h >= hv)


def test_vesting_cost_series():
    s = series(tables.vesting_cost(SMALL, lams=(0.2,), vestings=(0.0, 2.0, 4.0)))
    assert set(s) == {"lambda=0.2", "lambda=0.2;lambda_pre=0.1"}
    assert np.all(np.diff(s["lambda=0.2"][:, 1]) < 0)


def test_write_rows_stdout(capsys):
    tables.write_rows([tables._row(3, "gbm", "tv=0", "FST", 1.25, 1.3)])
    out = capsys.readouterr().out.splitlines()
    assert out == ["table,model,case,method,value,reference", "3,gbm,tv=0,FST,1.25,1.3"]
