import csv
import json

import numpy as np
import pytest

from ce_ofdma import pilots
from ce_ofdma import serialization as ser
from ce_ofdma.errors import ConfigurationError, DimensionError


def test_filter_round_trip(tmp_path, table_cfg, optimized_filter):
    path = ser.save_filter(tmp_path / "f.json", optimized_filter, table_cfg)
    back = ser.load_filter(path)
    np.testing.assert_allclose(back.time_taps, optimized_filter.time_taps, atol=1e-12)
    np.testing.assert_array_equal(back.theta, optimized_filter.theta)
    assert back.kind == optimized_filter.kind


def test_nce_filter_round_trip(tmp_path, nce_filter):
    back = ser.load_filter(ser.save_filter(tmp_path / "n.json", nce_filter))
    assert back.kind == "nce"
    np.testing.assert_allclose(back.freq_response, nce_filter.freq_response, atol=1e-9)


def test_tampered_filter_rejected(tmp_path, optimized_filter):
    path = ser.save_filter(tmp_path / "f.json", optimized_filter)
    data = json.loads(path.read_text())
    data["taps"][1] += 1e-3
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigurationError, match="disagree"):
        ser.load_filter(path)
    data["taps"] = data["taps"][:-1]
    path.write_text(json.dumps(data))
    with pytest.raises(DimensionError):
        ser.load_filter(path)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigurationError):
        ser.read_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ser.read_json(bad)
    bad.write_text("{}")
    with pytest.raises(ConfigurationError):
        ser.load_filter(bad)
    with pytest.raises(ConfigurationError):
        ser.load_pilot(bad)


def test_pilot_round_trip(tmp_path, rng):
    p = pilots.random_pilot(64, rng)
    back = ser.load_pilot(ser.save_pilot(tmp_path / "p.json", p))
    np.testing.assert_array_equal(back.bits, p.bits)
    assert back.objective == pytest.approx(p.objective, rel=1e-12)
    with pytest.raises(ConfigurationError):
        ser.pilot_to_dict(pilots.ideal_pilot(8, rng))


def test_complex_binary_round_trip(tmp_path, rng, table_cfg):
    z = rng.standard_normal(4352) + 1j * rng.standard_normal(4352)
    path = ser.write_complex_binary(tmp_path / "tx", z, table_cfg, kind="ce")
    assert path.stat().st_size == 16 * z.size
    back, head = ser.read_complex_binary(path)
    np.testing.assert_array_equal(back, z)
    assert head["cp_len"] == 256 and head["kind"] == "ce"
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(DimensionError):
        ser.read_complex_binary(path)


def test_vector_csv(tmp_path):
    path = ser.write_vector_csv(tmp_path / "d.csv", [1 + 2j, -0.5j], rho=[0.9, 0.1])
    rows = list(csv.reader(path.read_text().splitlines()))
    assert rows[0] == ["index", "re", "im", "rho"]
    assert [float(x) for x in rows[1][1:]] == [1.0, 2.0, 0.9]
    assert complex(float(rows[2][1]), float(rows[2][2])) == -0.5j


def test_records_csv_exact_floats(tmp_path):
    x = 0.1 + 0.2
    path = ser.write_records_csv(tmp_path / "r.csv", [{"a": x, "b": "s", "c": 3}], ["a", "b"])
    rows = list(csv.DictReader(path.read_text().splitlines()))
    assert float(rows[0]["a"]) == x
    assert set(rows[0]) == {"a", "b"}
