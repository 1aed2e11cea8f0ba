import json
import math
import subprocess

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from remshift.errors import ConfigurationError, IngestionError
from remshift.events import EventSequence
from remshift.ingest import (
    TimeOfDay, derive_time_of_day, load_config, read_distance_matrix, read_events, read_global_series,
    read_manifest, sha256_file, write_events, write_manifest,
)

WINDOW = ("2023-07-09T00:00:00", "2023-08-01T00:00:00")


def write_rows(path, rows, header="start_time,start_station,end_station"):
    path.write_text(header + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return path


def test_identical_timestamps_nudged_once(tmp_path):
    p = write_rows(tmp_path / "e.csv", [("2023-07-10 08:00:00", "A", "B"), ("2023-07-10 08:00:00", "B", "A"),
                                        ("2023-07-10 09:00:00", "A", "C")])
    ing = read_events(p, start=WINDOW[0], end=WINDOW[1], timezone="America/New_York")
    assert ing.report.tie_count == 1
    assert np.all(np.diff(ing.sequence.times) > 0)
    assert ing.sequence.times[1] - ing.sequence.times[0] < 1e-6


def test_window_filter_drops_and_counts(tmp_path):
    p = write_rows(tmp_path / "e.csv", [("2023-07-08 23:59:00", "A", "B"), ("2023-07-09 00:00:00", "A", "B"),
                                        ("2023-07-15 12:00:00", "B", "A"), ("2023-08-01 00:00:00", "A", "B"),
                                        ("2023-08-02 10:00:00", "A", "B")])
    ing = read_events(p, start=WINDOW[0], end=WINDOW[1])
    # the window is (start, end]: an event exactly at the origin would break t = 0 being event-free
    assert ing.report.dropped_window == 3
    assert len(ing.sequence) == 2
    assert ing.sequence.horizon == pytest.approx(23 * 86400.0)
    assert np.all((ing.sequence.times > 0) & (ing.sequence.times <= ing.sequence.horizon))


def test_thousand_row_fixture_matches_shell_counts(tmp_path):
    rng = np.random.default_rng(0)
    start = pd.Timestamp(WINDOW[0])
    secs = np.sort(rng.uniform(1, 22 * 86400, 1000)).round()
    stations = [f"S{k:03d}" for k in rng.integers(0, 60, size=(1000, 2)).ravel()]
    rows = [((start + pd.Timedelta(seconds=s)).isoformat(), stations[2 * i], stations[2 * i + 1])
            for i, s in enumerate(secs)]
    p = write_rows(tmp_path / "desk.csv", rows)
    ing = read_events(p, start=WINDOW[0], end=WINDOW[1])
    lines = int(subprocess.run(["wc", "-l", str(p)], capture_output=True, text=True).stdout.split()[0])
    nodes = subprocess.run(f"tail -n +2 {p} | cut -d, -f2,3 | tr , '\\n' | sort -u | wc -l", shell=True,
                           capture_output=True, text=True).stdout
    assert len(ing.sequence) == lines - 1
    assert ing.sequence.node_count == int(nodes)


def test_written_events_read_back_exactly(tmp_path):
    rng = np.random.default_rng(1)
    seq = EventSequence(np.cumsum(rng.exponential(size=50)), rng.integers(0, 4, 50), rng.integers(0, 4, 50), 4)
    write_events(seq, tmp_path / "e.csv")
    back = read_events(tmp_path / "e.csv").sequence
    np.testing.assert_array_equal(back.times, seq.times)
    np.testing.assert_array_equal(back.senders, seq.senders)
    np.testing.assert_array_equal(back.receivers, seq.receivers)


def test_bad_rows_reported_with_line_numbers(tmp_path):
    rows = [(f"{100 + i}", "A", "B") for i in range(200)]
    rows[4] = ("not-a-time", "A", "B")
    ing = read_events(write_rows(tmp_path / "e.csv", rows), max_error_fraction=0.01)
    assert [e[0] for e in ing.report.errors] == [6]
    assert len(ing.sequence) == 199
    rows[7] = ("107", "", "B")
    rows[9] = ("x", "A", "B")
    with pytest.raises(IngestionError) as err:
        read_events(write_rows(tmp_path / "f.csv", rows), max_error_fraction=0.01)
    assert err.value.rows == [6, 9, 11]


def test_missing_column_rejected(tmp_path):
    with pytest.raises(IngestionError, match="missing column"):
        read_events(write_rows(tmp_path / "e.csv", [("1", "A")], header="start_time,start_station"))


def weather(path, values, column="value", hours=None):
    hours = range(len(values)) if hours is None else hours
    stamps = [(pd.Timestamp(WINDOW[0]) + pd.Timedelta(hours=h)).isoformat() for h in hours]
    pd.DataFrame({"timestamp": stamps, column: values}).to_csv(path, index=False)
    return path


def test_constant_series_is_constant(tmp_path):
    f = read_global_series(weather(tmp_path / "w.csv", [21.5] * 48), start=WINDOW[0])
    assert np.all(f(np.linspace(0, 47 * 3600, 500)) == 21.5)


def test_log1p_of_zero_precipitation(tmp_path):
    f = read_global_series(weather(tmp_path / "w.csv", [0.0, 3.0, 0.0], "precip"), "precip", "log1p",
                           start=WINDOW[0])
    assert f(1800.0) == 0.0
    assert f(5400.0) == pytest.approx(math.log(4.0))


def test_series_is_left_continuous_at_hour_boundaries(tmp_path):
    f = read_global_series(weather(tmp_path / "w.csv", [1.0, 2.0, 3.0]), start=WINDOW[0])
    assert f(3600.0) == 1.0 and f(3600.0 + 1e-6) == 2.0 and f(7200.0) == 2.0


def test_long_gap_names_interval(tmp_path):
    p = weather(tmp_path / "w.csv", [1.0, 2.0, 3.0, 4.0], hours=[0, 1, 7, 8])
    with pytest.raises(IngestionError, match="gap from t=3600s to t=25200s"):
        read_global_series(p, start=WINDOW[0], gap_limit_hours=3)
    assert read_global_series(p, start=WINDOW[0], gap_limit_hours=6)(5 * 3600.0) == 2.0


def test_time_of_day_examples():
    origin = "2023-07-09T00:00:00"
    assert derive_time_of_day(0.0, origin) == 0.0
    assert derive_time_of_day(90 * 60.0, origin) == 1.5
    assert derive_time_of_day(24 * 3600.0, origin) == 0.0
    assert TimeOfDay("2023-07-09T06:30:00", "America/New_York")(3600.0) == 7.5


@given(st.floats(0, 1e7, allow_nan=False))
def test_time_of_day_in_range(t):
    h = derive_time_of_day(t, WINDOW[0])
    assert 0.0 <= h < 24.0


def test_distance_matrix(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("station_id_from,station_id_to,minutes\nA,B,4.5\nB,A,5\nA,C,9\n")
    labels, m = read_distance_matrix(p)
    assert labels == ["A", "B", "C"]
    assert m[0, 1] == 4.5 and m[1, 0] == 5.0 and np.isnan(m[2, 0]) and np.all(np.diag(m) == 0)
    p.write_text("station_id_from,station_id_to,minutes\nA,B,-1\n")
    with pytest.raises(IngestionError, match="line"):
        read_distance_matrix(p)


def test_config_and_manifest(tmp_path):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text("seed: 3\nnu: 1.0\n")
    cfg = load_config(cfg_path)
    assert cfg == {"seed": 3, "nu": 1.0}
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "none.yaml")
    out = tmp_path / "o.txt"
    out.write_text("x")
    man = read_manifest(write_manifest(tmp_path, "fit", cfg, cfg_path, 3, [cfg_path], [out]))
    assert man["seed"] == 3 and man["outputs"]["o.txt"] == sha256_file(out)
    assert man["inputs"][str(cfg_path)] == sha256_file(cfg_path)
    assert set(man["versions"]) >= {"python", "numpy", "scipy", "remshift"}
    json.dumps(man)
