import json

import numpy as np
import pytest

from slabcausal.io import (
    ConfigError,
    atomic_write,
    fmt,
    read_covariance,
    read_data,
    read_document,
    write_covariance,
    write_csv,
)
from slabcausal.scenarios import SCENARIOS, get_scenario, load_scenario, scenario_from_document


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, -2.5e-300, 1e300, 0.0):
        assert float(fmt(x)) == x
    assert [fmt(v) for v in (np.inf, -np.inf, np.nan)] == ["inf", "-inf", "nan"]


def test_covariance_round_trip(tmp_path):
    S = SCENARIOS["d"].covariance
    write_covariance(tmp_path / "s.csv", S)
    np.testing.assert_array_equal(read_covariance(tmp_path / "s.csv"), S)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write(tmp_path / "sub" / "x.txt", "hello")
    assert (tmp_path / "sub" / "x.txt").read_text() == "hello"
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["x.txt"]


def test_failed_write_keeps_the_old_file(tmp_path):
    target = tmp_path / "x.csv"
    write_csv(target, [[1.0, 2.0]])
    with pytest.raises(TypeError):
        write_csv(target, [[1.0, object()]])
    assert target.read_text() == "1,2\n"
    assert [p.name for p in tmp_path.iterdir()] == ["x.csv"]


@pytest.mark.parametrize("text", ["1,2\n3,4,5\n", "1,x\n2,1\n", "1,2\n2,1\n", "1,0.5\n0.4,1\n", ""])
def test_bad_covariance_files(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ConfigError) as info:
        read_covariance(p)
    assert "bad.csv" in str(info.value)


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(ConfigError, match="nope.csv"):
        read_covariance(tmp_path / "nope.csv")
    with pytest.raises(ConfigError, match="nope.csv"):
        read_data(tmp_path / "nope.csv")


def test_documents(tmp_path):
    (tmp_path / "a.json").write_text('{"seed": 3}')
    (tmp_path / "a.toml").write_text("seed = 3\n[prior]\nv_slab = 2.0\n")
    assert read_document(tmp_path / "a.json") == {"seed": 3}
    assert read_document(tmp_path / "a.toml") == {"seed": 3, "prior": {"v_slab": 2.0}}
    (tmp_path / "a.yaml").write_text("seed: 3")
    (tmp_path / "b.json").write_text("[1, 2]")
    (tmp_path / "c.toml").write_text("seed = = 3")
    for name in ("a.yaml", "b.json", "c.toml"):
        with pytest.raises(ConfigError):
            read_document(tmp_path / name)


def test_builtin_scenarios():
    assert sorted(SCENARIOS) == list("abcdef")
    np.testing.assert_allclose(SCENARIOS["a"].covariance, [[1, 1, 1], [1, 2, 2], [1, 2, 3]], atol=1e-15)
    np.testing.assert_allclose(SCENARIOS["f"].covariance, [[1, 1, 2], [1, 3, 6], [2, 6, 15]], atol=1e-14)
    for sc in SCENARIOS.values():
        assert sc.free_pairs == ((1, 2),)
    assert get_scenario("E") is SCENARIOS["e"]
    with pytest.raises(ConfigError):
        get_scenario("g")


def test_document_round_trip(tmp_path):
    for sc in SCENARIOS.values():
        doc = json.loads(json.dumps(sc.to_document()))
        again = scenario_from_document(doc)
        np.testing.assert_array_equal(again.covariance, sc.covariance)
        assert again.free_pairs == sc.free_pairs
    p = tmp_path / "f.json"
    p.write_text(json.dumps(SCENARIOS["f"].to_document()))
    np.testing.assert_array_equal(load_scenario(str(p)).covariance, SCENARIOS["f"].covariance)


def test_toml_parameter_file(tmp_path):
    p = tmp_path / "two.toml"
    p.write_text('n = 2\nordering = ["A", "B"]\nB = [[2, 1, 0.5]]\nV = [1.0, 2.0]\n')
    sc = load_scenario(str(p))
    np.testing.assert_allclose(sc.covariance, [[1, 0.5], [0.5, 2.25]])
    assert sc.ordering == ("A", "B")
    assert sc.free_pairs == ((0, 1),)


@pytest.mark.parametrize("doc", [
    {},
    {"n": 0},
    {"n": 2, "B": [[1, 2, 0.5]]},
    {"n": 2, "B": [[3, 1, 0.5]]},
    {"n": 2, "B": [[2, 1]]},
    {"n": 3, "C": [[1, 2, 3, 1.0]]},
    {"n": 2, "V": [1.0, -1.0]},
    {"n": 2, "V": [1.0]},
    {"n": 2, "ordering": ["A", "A"]},
    {"n": 3, "confounded_pairs": [[2, 1]]},
])
def test_invalid_parameter_documents(doc):
    with pytest.raises(ConfigError):
        scenario_from_document(doc)


def test_unknown_scenario_name():
    with pytest.raises(ConfigError):
        load_scenario("zz")
