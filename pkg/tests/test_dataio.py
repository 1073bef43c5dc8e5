"""CSV and design JSON round trips and failure modes."""

import json

import numpy as np
import pytest

from medcurve import CurvePopulation, ParseError, TimeGrid
from medcurve.dataio import (
    load_design,
    read_curves,
    validate_design,
    write_curve,
    write_curves,
    write_sample,
    write_variance,
)
from medcurve.errors import DesignError


def test_curve_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    grid = TimeGrid.uniform(6, horizon=2.0)
    pop = CurvePopulation(rng.normal(size=(5, 6)), grid, ids=[11, 3, 7, 2, 9])
    path = tmp_path / "pop.csv"
    write_curves(path, pop)
    back = read_curves(path)
    assert np.allclose(back.values, pop.values, rtol=1e-11)
    assert list(back.ids) == [11, 3, 7, 2, 9]
    assert np.allclose(back.grid.points, grid.points, rtol=1e-11)
    assert np.allclose(back.grid.weights, grid.weights, rtol=1e-11)


def test_non_numeric_grid_header_falls_back_to_unit_interval(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("id,a,b,c,d\n1,0,1,2,3\n2,4,5,6,7\n")
    pop = read_curves(path)
    assert np.allclose(pop.grid.points, TimeGrid.uniform(4).points)
    assert pop.grid.horizon == pytest.approx(1.0)


def test_string_ids_survive_when_not_all_integers(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("id,0.5,1.5\nhouse-a,1,2\nhouse-b,3,4\n")
    pop = read_curves(path)
    assert list(pop.ids) == ["house-a", "house-b"]


def test_parse_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,0.5,1.5\n1,1,2\n2,3\n")
    with pytest.raises(ParseError) as err:
        read_curves(path)
    assert ":3:" in str(err.value)

    path.write_text("id,0.5,1.5\n1,1,2\n2,x,4\n")
    with pytest.raises(ParseError, match="non-numeric"):
        read_curves(path)

    path.write_text("id,0.5,1.5\n1,1,2\n1,3,4\n")
    with pytest.raises(ParseError, match="duplicate"):
        read_curves(path)

    path.write_text("")
    with pytest.raises(ParseError, match="empty"):
        read_curves(path)


def test_single_curve_and_variance_writers(tmp_path):
    grid = TimeGrid.uniform(3)
    from medcurve import Curve

    write_curve(tmp_path / "m.csv", Curve(np.array([1.0, 2.0, 3.0]), grid))
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "t,value"
    assert len(lines) == 4

    write_variance(tmp_path / "v.csv", grid, np.array([0.1, 0.2, 0.3]))
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "t,variance"
    assert lines[1].split(",")[1] == "0.1"

    write_sample(tmp_path / "s.csv", [4, 9], [0.25, 0.25], [4.0, 4.0])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "unit_id,pi,weight"
    assert lines[1] == "4,0.25,4"


def test_twelve_significant_digits(tmp_path):
    grid = TimeGrid.uniform(1)
    pop = CurvePopulation(np.array([[1.0 / 3.0]]), grid)
    write_curves(tmp_path / "p.csv", pop)
    cell = (tmp_path / "p.csv").read_text().splitlines()[1].split(",")[1]
    assert cell == "0.333333333333"


def test_design_json_load_and_validation(tmp_path):
    path = tmp_path / "design.json"
    path.write_text(json.dumps({"type": "srswor", "n": 10, "seed": 4}))
    design = load_design(path)
    assert design["type"] == "srswor" and design["n"] == 10

    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_design(path)

    with pytest.raises(DesignError, match="unknown design type"):
        validate_design({"type": "quota", "n": 5})
    with pytest.raises(DesignError, match="positive integer"):
        validate_design({"type": "srswor", "n": 0})
    with pytest.raises(DesignError, match="unexpected"):
        validate_design({"type": "srswor", "n": 5, "strata": [1, 2]})
    validate_design({"type": "stratified", "n": 8, "strata": [1, 1, 2, 2], "allocation": [4, 4]})
    with pytest.raises(DesignError, match="allocation"):
        validate_design({"type": "stratified", "n": 8, "allocation": [4, 0]})
    validate_design({"type": "systematic", "n": 8, "order_key_column": "mean"})
    validate_design({"type": "ppswr", "n": 8, "p_source": "aux"})
