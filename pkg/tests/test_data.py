import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from choicenet.data import (ChoiceDataset, DataError, Schema, Standardizer, default_schema,
                            destandardize, load_csv, split, split_indices, standardize, write_csv)

from conftest import SCHEMAS, toy_dataset, train_csv_path


def _schema_k(K, d=2):
    return Schema(tuple(f"m{k}" for k in range(K)),
                  tuple(tuple((f"a{j}", f"m{k}_a{j}") for j in range(d)) for k in range(K)),
                  (("inc", "inc"),))


def _write(path, schema, rows):
    path.write_text(",".join(schema.columns()) + "\n" + "".join(r + "\n" for r in rows))
    return path


# ---------------------------------------------------------------- loading

def test_single_row_file(tmp_path):
    s = _schema_k(2)
    ds = load_csv(_write(tmp_path / "d.csv", s, ["1,2,3,4,0.5,1"]), s)
    assert ds.n == 1 and ds.k == 2 and ds.x_dims == (2, 2) and ds.d_z == 1
    assert ds.x[1].tolist() == [[3.0, 4.0]] and ds.y.tolist() == [1]


def test_out_of_range_choice_names_row_and_column(tmp_path):
    s = _schema_k(5, 1)
    rows = ["1,2,3,4,5,0,0", "1,2,3,4,5,0,7"]
    with pytest.raises(DataError, match=r"line 3.*'choice'.*7"):
        load_csv(_write(tmp_path / "d.csv", s, rows), s)


def test_unparseable_number_names_row_and_column(tmp_path):
    s = _schema_k(2)
    with pytest.raises(DataError, match=r"line 2.*'m1_a0'.*'abc'"):
        load_csv(_write(tmp_path / "d.csv", s, ["1,2,abc,4,0,1"]), s)


def test_non_finite_value_rejected(tmp_path):
    s = _schema_k(2)
    with pytest.raises(DataError, match="non-finite"):
        load_csv(_write(tmp_path / "d.csv", s, ["1,2,inf,4,0,1"]), s)


def test_missing_column_and_file(tmp_path):
    s = _schema_k(2)
    (tmp_path / "d.csv").write_text("m0_a0,m0_a1,choice\n1,2,0\n")
    with pytest.raises(DataError, match="missing column 'm1_a0'"):
        load_csv(tmp_path / "d.csv", s)
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv", s)
    with pytest.raises(DataError, match="not found"):
        Schema.load(tmp_path / "nope.json")


def test_choice_labels(tmp_path):
    s = Schema.load(SCHEMAS / "train.json")
    rows = ['"choice2",1,2,0,1,3,4,1,0']
    (tmp_path / "t.csv").write_text(",".join(f'"{c}"' for c in ["choice"] + s.columns()[:-1]) + "\n" + rows[0] + "\n")
    ds = load_csv(tmp_path / "t.csv", s)
    assert ds.y.tolist() == [1] and ds.x[1].tolist() == [[3.0, 4.0, 1.0, 0.0]]
    (tmp_path / "bad.csv").write_text("choice," + ",".join(s.columns()[:-1]) + "\nchoice3,1,2,0,1,3,4,1,0\n")
    with pytest.raises(DataError, match="unknown choice 'choice3'"):
        load_csv(tmp_path / "bad.csv", s)


def test_write_then_load_is_lossless(gen, tmp_path):
    ds = toy_dataset(gen, n=25)
    ds = ds.with_arrays(x=[a * np.pi * 1e7 for a in ds.x])
    schema = write_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", schema)
    for a, b in zip(ds.x, back.x):
        assert np.array_equal(a, b)
    assert np.array_equal(ds.z, back.z) and np.array_equal(ds.y, back.y)
    assert Schema.from_dict(schema.to_dict()) == schema


def test_shipped_schemas_parse():
    train = Schema.load(SCHEMAS / "train.json")
    assert train.alternatives == ("route1", "route2") and train.individual == ()
    assert [a for a, _ in train.attributes[0]] == ["price", "time", "change", "comfort"]
    sgp = Schema.load(SCHEMAS / "sgp.json")
    assert len(sgp.alternatives) == 5 and len(sgp.individual) == 8
    assert sgp.nest_indices() == ((0, 1), (2, 3, 4))


def test_dataset_invariants():
    with pytest.raises(DataError):
        ChoiceDataset((np.zeros((2, 1)),), np.zeros((2, 0)), np.array([0, 1]), ("a",), (("p",),))
    with pytest.raises(DataError):
        ChoiceDataset((np.zeros((2, 1)), np.zeros((3, 1))), np.zeros((2, 0)), np.array([0, 1]),
                      ("a", "b"), (("p",), ("p",)))


@pytest.mark.skipif(train_csv_path() is None, reason="TRAIN csv not supplied")
def test_train_file_shape():
    ds = load_csv(train_csv_path(), Schema.load(SCHEMAS / "train.json"))
    # the distributed file has 2929 rows
    assert ds.n in (2928, 2929) and ds.k == 2 and ds.x_dims == (4, 4) and ds.d_z == 0


# ---------------------------------------------------------------- splitting

@pytest.mark.parametrize("n,sizes", [(6, (4, 1, 1)), (8418, (5612, 1403, 1403)), (2929, (1952, 488, 489))])
def test_split_sizes(n, sizes):
    assert tuple(len(p) for p in split_indices(n, 0)) == sizes


@given(st.integers(6, 500), st.integers(0, 2**32))
def test_split_is_a_seeded_partition(n, seed):
    parts = split_indices(n, seed)
    assert np.array_equal(np.sort(np.concatenate(parts)), np.arange(n))
    for a, b in zip(parts, split_indices(n, seed)):
        assert np.array_equal(a, b)


def test_split_rejects_tiny_dataset(gen):
    with pytest.raises(DataError):
        split(toy_dataset(gen, n=5), 0)


def test_split_datasets(gen):
    ds = toy_dataset(gen, n=60)
    tr, va, te = split(ds, 3)
    assert (tr.n, va.n, te.n) == (40, 10, 10)
    idx = split_indices(60, 3)[2]
    assert np.array_equal(te.y, ds.y[idx]) and np.array_equal(te.x[1], ds.x[1][idx])


# ---------------------------------------------------------------- standardisation

def _with_binary(gen, n=200):
    ds = toy_dataset(gen, n=n)
    z = ds.z.copy()
    z[:, 1] = gen.integers(0, 2, n)
    return ds.with_arrays(x=[a * 7 + 3 for a in ds.x], z=z)


def test_training_moments(gen):
    ds = _with_binary(gen)
    tr, va, te = split(ds, 0)
    (str_, sva, ste), st_ = standardize(tr, va, te)
    for a in str_.x:
        np.testing.assert_allclose(a.mean(axis=0), 0, atol=1e-10)
        np.testing.assert_allclose(a.std(axis=0), 1, atol=1e-8)
    np.testing.assert_allclose(str_.z[:, 0].mean(), 0, atol=1e-10)
    assert np.array_equal(str_.z[:, 1], tr.z[:, 1])  # binary passes through
    assert np.all(np.abs(sva.x[0].mean(axis=0)) > 1e-6)  # validation stats are not reused


def test_statistics_come_from_training_split_only(gen):
    ds = _with_binary(gen)
    tr, va, te = split(ds, 0)
    a = Standardizer.fit(tr)
    b = standardize(tr, va.with_arrays(x=[x * 100 for x in va.x]))[1]
    for m1, m2 in zip(a.x_mean, b.x_mean):
        assert np.array_equal(m1, m2)


def test_round_trip(gen):
    ds = _with_binary(gen)
    (s,), st_ = standardize(ds)
    back = destandardize(s, st_)
    for a, b in zip(ds.x, back.x):
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)
    np.testing.assert_allclose(back.z, ds.z, atol=1e-12, rtol=0)
    d = Standardizer.from_dict(st_.to_dict())
    assert np.array_equal(d.transform(ds).x[0], s.x[0])


def test_constant_column_named(gen):
    ds = toy_dataset(gen)
    x = [a.copy() for a in ds.x]
    x[1][:, 2] = 4.2
    with pytest.raises(DataError, match="alt1:'a2'"):
        Standardizer.fit(ds.with_arrays(x=x))


def test_default_schema_naming(gen):
    ds = toy_dataset(gen, n=6)
    s = default_schema(ds, nests=((0, 1), (2,)))
    assert s.columns()[:2] == ["alt0_a0", "alt0_a1"] and s.columns()[-1] == "choice"
    assert s.nest_indices() == ((0, 1), (2,))
