from __future__ import annotations

import numpy as np
import pytest

from costsense import (
    CostDataset,
    CostRecord,
    EmptyDatasetError,
    InputNotFoundError,
    NoPositiveCostError,
    ParseError,
    SchemaError,
    load_dataset,
    save_dataset,
    zero_cost_shift,
)
from helpers import tiny_dataset


def test_dataset_basic_accessors():
    ds = tiny_dataset()
    assert len(ds) == 4
    assert ds.n_records == 4
    assert ds.n_covariates == 1
    assert ds.covariate_names == ("z1",)
    assert ds.censoring_rate == 0.0
    rec = ds.record(2)
    assert isinstance(rec, CostRecord)
    assert rec.cost == 150.0
    assert rec.treatment == 1
    assert rec.covariates == (1.1,)


def test_dataset_arrays_are_read_only():
    ds = tiny_dataset()
    with pytest.raises(ValueError):
        ds.cost[0] = 0.0
    with pytest.raises(ValueError):
        ds.covariates[0, 0] = 9.0


def test_dataset_iteration_matches_records():
    ds = tiny_dataset()
    assert list(ds) == ds.records
    assert [r.time for r in ds] == [3.0, 2.5, 4.0, 1.5]


def test_from_records_defaults_covariate_names():
    recs = [
        CostRecord(cost=1.0, time=1.0, uncensored=True, treatment=0, covariates=(0.1, 0.2)),
        CostRecord(cost=2.0, time=2.0, uncensored=False, treatment=1, covariates=(0.3, 0.4)),
    ]
    ds = CostDataset.from_records(recs)
    assert ds.covariate_names == ("z1", "z2")
    assert ds.censoring_rate == pytest.approx(0.5)
    np.testing.assert_array_equal(ds.covariates, [[0.1, 0.2], [0.3, 0.4]])


def test_negative_cost_rejected():
    with pytest.raises(ValueError, match="cost"):
        CostDataset(
            cost=np.array([-1.0]),
            time=np.array([1.0]),
            uncensored=np.array([True]),
            treatment=np.array([0]),
            covariates=np.zeros((1, 1)),
            covariate_names=("z1",),
        )


def test_nonpositive_time_rejected():
    with pytest.raises(ValueError, match="time"):
        CostDataset(
            cost=np.array([1.0]),
            time=np.array([0.0]),
            uncensored=np.array([True]),
            treatment=np.array([0]),
            covariates=np.zeros((1, 1)),
            covariate_names=("z1",),
        )


def test_treatment_must_be_binary():
    with pytest.raises(ValueError, match="treatment"):
        CostDataset(
            cost=np.array([1.0]),
            time=np.array([1.0]),
            uncensored=np.array([True]),
            treatment=np.array([2]),
            covariates=np.zeros((1, 1)),
            covariate_names=("z1",),
        )


def test_duplicate_covariate_names_rejected():
    with pytest.raises(ValueError, match="unique"):
        CostDataset(
            cost=np.array([1.0, 2.0]),
            time=np.array([1.0, 1.0]),
            uncensored=np.array([True, True]),
            treatment=np.array([0, 1]),
            covariates=np.zeros((2, 2)),
            covariate_names=("z1", "z1"),
        )


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        CostDataset(
            cost=np.array([1.0, 2.0]),
            time=np.array([1.0]),
            uncensored=np.array([True, True]),
            treatment=np.array([0, 1]),
            covariates=np.zeros((2, 1)),
            covariate_names=("z1",),
        )


def test_empty_dataset_rejected():
    with pytest.raises(EmptyDatasetError):
        CostDataset(
            cost=np.array([]),
            time=np.array([]),
            uncensored=np.array([], dtype=bool),
            treatment=np.array([], dtype=np.int64),
            covariates=np.zeros((0, 0)),
            covariate_names=(),
        )


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_header_file(tmp_path):
    path = _write(
        tmp_path / "toy.csv",
        "cost,time,event,treat,z1\n"
        "100.5,3.0,1,1,0.2\n"
        "80.0,2.0,0,0,-0.4\n"
        "55.25,1.5,1,0,1.0\n",
    )
    ds = load_dataset(path)
    assert ds.n_records == 3
    assert ds.covariate_names == ("z1",)
    np.testing.assert_array_equal(ds.cost, [100.5, 80.0, 55.25])
    np.testing.assert_array_equal(ds.uncensored, [True, False, True])
    np.testing.assert_array_equal(ds.treatment, [1, 0, 0])


def test_load_schema_renames_columns(tmp_path):
    path = _write(
        tmp_path / "renamed.csv",
        "totcost,fu_months,dead,arm,age\n"
        "10,2,1,0,61\n"
        "20,4,1,1,58\n",
    )
    ds = load_dataset(
        path,
        schema={"cost": "totcost", "time": "fu_months", "event": "dead", "treat": "arm"},
    )
    assert ds.covariate_names == ("age",)
    np.testing.assert_array_equal(ds.cost, [10.0, 20.0])


def test_load_positional_schema_headerless(tmp_path):
    path = _write(
        tmp_path / "plain.csv",
        "1,12.5,3.0,1,0.7\n"
        "0,9.0,2.0,0,-0.1\n",
    )
    ds = load_dataset(
        path,
        schema={"treat": 0, "cost": 1, "time": 2, "event": 3, "covariates": [4]},
    )
    assert ds.n_records == 2
    assert ds.covariate_names == ("z1",)
    np.testing.assert_array_equal(ds.cost, [12.5, 9.0])
    np.testing.assert_array_equal(ds.treatment, [1, 0])


def test_load_covariate_subset(tmp_path):
    path = _write(
        tmp_path / "wide.csv",
        "cost,time,event,treat,z1,z2,z3\n"
        "5,1,1,0,0.1,0.2,0.3\n"
        "6,2,1,1,0.4,0.5,0.6\n",
    )
    ds = load_dataset(path, schema={"covariates": ["z3", "z1"]})
    assert ds.covariate_names == ("z3", "z1")
    np.testing.assert_array_equal(ds.covariates, [[0.3, 0.1], [0.6, 0.4]])


def test_load_missing_column_names_it(tmp_path):
    path = _write(tmp_path / "short.csv", "cost,time,treat\n1,1,0\n")
    with pytest.raises(SchemaError, match="event"):
        load_dataset(path)


def test_load_unknown_schema_key(tmp_path):
    path = _write(tmp_path / "toy.csv", "cost,time,event,treat\n1,1,1,0\n")
    with pytest.raises(SchemaError, match="outcome"):
        load_dataset(path, schema={"outcome": "cost"})


def test_load_bad_cell_reports_row(tmp_path):
    path = _write(
        tmp_path / "bad.csv",
        "cost,time,event,treat\n"
        "1.0,1.0,1,0\n"
        "oops,2.0,1,1\n",
    )
    with pytest.raises(ParseError, match="row 2"):
        load_dataset(path)


def test_load_treatment_two_reports_row(tmp_path):
    path = _write(
        tmp_path / "badtreat.csv",
        "cost,time,event,treat\n"
        "1.0,1.0,1,0\n"
        "2.0,2.0,1,2\n",
    )
    with pytest.raises(ParseError, match="row 2"):
        load_dataset(path)


def test_load_empty_and_header_only_files(tmp_path):
    empty = _write(tmp_path / "empty.csv", "")
    with pytest.raises(EmptyDatasetError):
        load_dataset(empty)
    header_only = _write(tmp_path / "head.csv", "cost,time,event,treat\n")
    with pytest.raises(EmptyDatasetError):
        load_dataset(header_only)


def test_load_missing_file(tmp_path):
    with pytest.raises(InputNotFoundError):
        load_dataset(str(tmp_path / "nope.csv"))


def test_save_load_round_trip_is_bit_identical(tmp_path):
    rng = np.random.default_rng(7)
    n = 50
    ds = CostDataset(
        cost=rng.gamma(2.0, 50.0, size=n),
        time=rng.uniform(0.5, 9.5, size=n),
        uncensored=rng.uniform(size=n) < 0.7,
        treatment=(rng.uniform(size=n) < 0.5).astype(np.int64),
        covariates=rng.normal(size=(n, 3)),
        covariate_names=("z1", "z2", "z3"),
    )
    path = str(tmp_path / "round.csv")
    save_dataset(path, ds)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.cost, ds.cost)
    np.testing.assert_array_equal(back.time, ds.time)
    np.testing.assert_array_equal(back.uncensored, ds.uncensored)
    np.testing.assert_array_equal(back.treatment, ds.treatment)
    np.testing.assert_array_equal(back.covariates, ds.covariates)
    assert back.covariate_names == ds.covariate_names


def test_zero_cost_shift_half_smallest_positive():
    ds = tiny_dataset()
    shifted_costs = zero_cost_shift(
        CostDataset(
            cost=np.array([0.0, 2.0, 4.0]),
            time=np.array([1.0, 1.0, 1.0]),
            uncensored=np.array([True, True, True]),
            treatment=np.array([0, 1, 0]),
            covariates=np.zeros((3, 1)),
            covariate_names=("z1",),
        )
    ).cost
    np.testing.assert_array_equal(shifted_costs, [1.0, 3.0, 5.0])
    # No zeros means the shift is still applied uniformly.
    same = zero_cost_shift(ds)
    np.testing.assert_array_equal(same.cost, ds.cost + 30.0)


def test_zero_cost_shift_all_equal_positive():
    ds = CostDataset(
        cost=np.array([5.0, 5.0]),
        time=np.array([1.0, 1.0]),
        uncensored=np.array([True, True]),
        treatment=np.array([0, 1]),
        covariates=np.zeros((2, 1)),
        covariate_names=("z1",),
    )
    np.testing.assert_array_equal(zero_cost_shift(ds).cost, [7.5, 7.5])


def test_zero_cost_shift_requires_a_positive_cost():
    ds = CostDataset(
        cost=np.array([0.0, 0.0]),
        time=np.array([1.0, 1.0]),
        uncensored=np.array([True, True]),
        treatment=np.array([0, 1]),
        covariates=np.zeros((2, 1)),
        covariate_names=("z1",),
    )
    with pytest.raises(NoPositiveCostError):
        zero_cost_shift(ds)


def test_zero_cost_shift_is_not_idempotent():
    ds = CostDataset(
        cost=np.array([0.0, 2.0]),
        time=np.array([1.0, 1.0]),
        uncensored=np.array([True, True]),
        treatment=np.array([0, 1]),
        covariates=np.zeros((2, 1)),
        covariate_names=("z1",),
    )
    once = zero_cost_shift(ds)
    twice = zero_cost_shift(once)
    assert once.cost.min() > 0.0
    assert twice.cost[0] > once.cost[0]
