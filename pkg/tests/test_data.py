import json
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabkanet.data import (Column, FitAudit, Preprocessor, TableSchema, inject_noise, load_csv,
                           load_schema, make_folds)
from tabkanet.errors import DataError, LabelError, LeakageError, SchemaError

ROOT = Path(__file__).resolve().parents[1]
CR_CSV = ROOT / "data" / "credit_risk" / "credit_risk.csv"
CR_SCHEMA = ROOT / "data" / "credit_risk" / "schema.json"


def toy_schema(task="binary"):
    cols = [Column("color", "categorical"), Column("size", "numerical"), Column("y", "target")]
    return TableSchema("toy", task, cols, positive_label="yes" if task == "binary" else None)


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_schema_requires_one_target():
    with pytest.raises(SchemaError):
        TableSchema("t", "binary", [Column("a", "numerical")], positive_label="1")
    with pytest.raises(SchemaError):
        TableSchema("t", "binary", [Column("a", "target"), Column("b", "target")], positive_label="1")


def test_schema_requires_a_feature():
    with pytest.raises(SchemaError):
        TableSchema("t", "regression", [Column("y", "target")])


def test_schema_round_trip_and_fingerprint(tmp_path):
    s = toy_schema()
    p = tmp_path / "s.json"
    p.write_text(json.dumps(s.to_dict()))
    again = load_schema(p)
    assert again == s
    assert again.fingerprint() == s.fingerprint()
    assert toy_schema("regression").fingerprint() != s.fingerprint()


def test_schema_file_errors(tmp_path):
    with pytest.raises(SchemaError):
        load_schema(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError):
        load_schema(bad)


def test_load_csv_parses_and_marks_missing(tmp_path):
    p = write_csv(tmp_path / "t.csv", "color,size,y\nred,1.5,yes\nblue,N/A,no\n,abc,yes\n")
    ds = load_csv(p, toy_schema())
    assert len(ds) == 3
    assert np.isnan(ds.num[1, 0]) and np.isnan(ds.num[2, 0])
    np.testing.assert_array_equal(ds.y, [1, 0, 1])


def test_load_csv_missing_column_is_named(tmp_path):
    p = write_csv(tmp_path / "t.csv", "color,y\nred,yes\n")
    with pytest.raises(SchemaError, match="size"):
        load_csv(p, toy_schema())


def test_load_csv_empty_and_unreadable(tmp_path):
    with pytest.raises(DataError, match="empty"):
        load_csv(write_csv(tmp_path / "t.csv", "color,size,y\n"), toy_schema())
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv", toy_schema())


def test_load_csv_ragged_row(tmp_path):
    with pytest.raises(DataError, match=":3"):
        load_csv(write_csv(tmp_path / "t.csv", "color,size,y\nred,1,yes\nred,1\n"), toy_schema())


def test_binary_target_with_three_labels(tmp_path):
    p = write_csv(tmp_path / "t.csv", "color,size,y\na,1,yes\nb,2,no\nc,3,maybe\n")
    with pytest.raises(LabelError):
        load_csv(p, toy_schema())


def test_multiclass_and_regression_targets(tmp_path):
    p = write_csv(tmp_path / "t.csv", "color,size,y\na,1,c2\nb,2,c0\nc,3,c1\n")
    ds = load_csv(p, toy_schema("multiclass"))
    np.testing.assert_array_equal(ds.y, [2, 0, 1])
    assert ds.n_classes == 3
    p = write_csv(tmp_path / "r.csv", "color,size,y\na,1,0.5\nb,2,-2\n")
    np.testing.assert_array_equal(load_csv(p, toy_schema("regression")).y, [0.5, -2.0])


def test_credit_risk_file_shape():
    ds = load_csv(CR_CSV, load_schema(CR_SCHEMA))
    assert len(ds) == 1000
    assert ds.cat.shape[1] + ds.num.shape[1] == 20
    assert (ds.cat.shape[1], ds.num.shape[1]) == (15, 5)
    assert ds.y.sum() == 300  # "bad" is the positive class


def test_folds_proportions_and_partition():
    folds = make_folds(1000, seed=0)
    assert len(folds) == 5
    tests = []
    for f in folds:
        assert (len(f.train), len(f.val), len(f.test)) == (600, 200, 200)
        assert not set(f.train) & set(f.val) and not set(f.train) & set(f.test) and not set(f.val) & set(f.test)
        tests.append(set(f.test.tolist()))
    assert set().union(*tests) == set(range(1000))
    assert sum(len(t) for t in tests) == 1000


@settings(max_examples=40, deadline=None)
@given(st.integers(10, 400), st.integers(0, 2**31 - 1))
def test_folds_partition_property(n, seed):
    folds = make_folds(n, seed)
    tests = np.concatenate([f.test for f in folds])
    np.testing.assert_array_equal(np.sort(tests), np.arange(n))
    for f in folds:
        assert len(f.train) + len(f.val) + len(f.test) == n
        assert abs(len(f.test) - n / 5) < 1 and abs(len(f.val) - n / 5) < 1


def test_folds_deterministic_and_seed_sensitive():
    a, b = make_folds(100, 3), make_folds(100, 3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.test, y.test)
    assert not np.array_equal(a[0].test, make_folds(100, 4)[0].test)


def test_folds_stratified():
    y = np.array([0] * 700 + [1] * 300)
    for f in make_folds(1000, 1, y):
        assert y[f.test].sum() == 60 and y[f.val].sum() == 60 and y[f.train].sum() == 180


def test_folds_rare_class_falls_back():
    y = np.array([0] * 97 + [1] * 3)
    with pytest.warns(UserWarning, match="unstratified"):
        folds = make_folds(100, 0, y)
    assert len(folds) == 5


def test_folds_too_few_rows():
    with pytest.raises(DataError):
        make_folds(9, 0)


def _numeric_dataset(n=1000, cols=6, seed=0):
    cols_ = [Column(f"x{i}", "numerical") for i in range(cols)] + [Column("y", "target")]
    schema = TableSchema("n", "regression", cols_)
    from tabkanet.data import Dataset
    rng = np.random.default_rng(seed)
    return Dataset(schema, np.empty((n, 0), dtype=object), rng.normal(size=(n, cols)), rng.normal(size=n),
                   np.arange(n))


def test_noise_p_zero_identity():
    ds = _numeric_dataset()
    out = inject_noise(ds.subset(np.arange(500, 1000), "test"), "numerical", 0.0,
                       ds.subset(np.arange(500), "train"), seed=1)
    np.testing.assert_array_equal(out.num, ds.num[500:])


def test_noise_fraction_concentrates():
    ds = _numeric_dataset(2000)
    test, train = ds.subset(np.arange(1000, 2000), "test"), ds.subset(np.arange(1000), "train")
    out = inject_noise(test, "numerical", 0.5, train, seed=2)
    frac = (out.num != test.num).mean()
    assert 0.45 <= frac <= 0.55
    # Every replaced value comes from the same column of the training rows.
    for j in range(6):
        changed = out.num[:, j][out.num[:, j] != test.num[:, j]]
        assert set(changed.tolist()) <= set(train.num[:, j].tolist())


def test_noise_single_valued_pool():
    ds = _numeric_dataset(20, 1)
    ds.num[:] = 4.0
    test, train = ds.subset(np.arange(10, 20), "test"), ds.subset(np.arange(10), "train")
    np.testing.assert_array_equal(inject_noise(test, "numerical", 1.0, train, 0).num, 4.0)


def test_noise_categorical_without_columns_warns():
    ds = _numeric_dataset(20, 2)
    test, train = ds.subset(np.arange(10, 20), "test"), ds.subset(np.arange(10), "train")
    with pytest.warns(UserWarning, match="no-op"):
        out = inject_noise(test, "categorical", 0.5, train, 0)
    assert out is test


def test_noise_leaves_other_kind_untouched():
    ds = load_csv(CR_CSV, load_schema(CR_SCHEMA))
    test, train = ds.subset(np.arange(800, 1000), "test"), ds.subset(np.arange(600), "train")
    out = inject_noise(test, "categorical", 0.5, train, 0)
    np.testing.assert_array_equal(out.num, test.num)
    assert (out.cat != test.cat).any()


def test_noise_reference_must_be_training_rows(private_audit):
    ds = _numeric_dataset(20, 1)
    with pytest.raises(LeakageError):
        inject_noise(ds.subset(np.arange(10), "test"), "numerical", 0.5, ds.subset(np.arange(10, 20), "val"), 0)


def test_audit_trips_on_val_rows_and_forbidden_ids():
    audit = FitAudit()
    ds = _numeric_dataset(50, 1)
    fold = make_folds(50, 0)[0]
    audit.register_fold(ds, fold)
    audit.check(ds.subset(fold.train, "train"), "ok")
    with pytest.raises(LeakageError):
        audit.check(ds.subset(fold.val, "val"), "bad-role")
    with pytest.raises(LeakageError):
        # Mislabelled as train, but the ids are test rows.
        audit.check(ds.subset(fold.test, "train"), "bad-ids")
    assert audit.tripped and len(audit.violations) == 2


def test_preprocessor_fits_only_on_training_rows(private_audit):
    ds = load_csv(CR_CSV, load_schema(CR_SCHEMA))
    with pytest.raises(LeakageError):
        Preprocessor.fit(ds)  # role "all"
    assert private_audit.tripped


def test_preprocessor_median_imputation_and_round_trip():
    ds = _numeric_dataset(10, 2)
    ds.num[0, 0] = np.nan
    train = ds.subset(np.arange(10), "train")
    pre = Preprocessor.fit(train)
    enc = pre.transform(train)
    assert enc.num[0, 0] == np.nanmedian(ds.num[:, 0])
    clone = Preprocessor.from_dict(json.loads(json.dumps(pre.to_dict())))
    np.testing.assert_array_equal(clone.transform(train).num, enc.num)


def test_preprocessor_all_missing_column():
    ds = _numeric_dataset(10, 2)
    ds.num[:, 1] = np.nan
    with pytest.raises(SchemaError, match="x1"):
        Preprocessor.fit(ds.subset(np.arange(10), "train"))


def test_unseen_category_maps_to_unknown():
    ds = load_csv(CR_CSV, load_schema(CR_SCHEMA))
    train = ds.subset(np.arange(600), "train")
    pre = Preprocessor.fit(train)
    test = ds.subset(np.arange(600, 610), "test").replace(cat=np.full((10, 15), "never-seen", dtype=object))
    ids = pre.transform(test).cat
    np.testing.assert_array_equal(ids[0], [pre.encoder.unknown_id(j) for j in range(15)])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pre.transform(test)
