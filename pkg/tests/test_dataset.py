import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xferbench.dataset import (
    Dataset,
    Domain,
    SplitSpec,
    align_feature_spaces,
    balance_classes,
    load_tabular,
    save_tabular,
    split,
    standardize,
)


def make_dataset(n, d=3, n_classes=2, seed=0, with_names=True):
    rng = np.random.default_rng(seed)
    return Dataset(
        features=rng.normal(size=(n, d)),
        labels=rng.integers(0, n_classes, n),
        domains=np.zeros(n, dtype=np.int64),
        class_names=tuple(f"c{i}" for i in range(n_classes)),
        feature_names=tuple(f"f{i}" for i in range(d)) if with_names else None,
    )


class TestLoadTabular:
    def test_three_row_csv(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("g1,g2,cls\n1.0,2.0,a\n3.0,4.0,b\n5.0,6.0,a\n")
        ds = load_tabular(path, "cls")
        assert ds.dimension == 2
        assert len(ds) == 3
        assert ds.feature_names == ("g1", "g2")
        np.testing.assert_array_equal(ds.features, [[1, 2], [3, 4], [5, 6]])

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,cls\n1,2,x\n3,x\n")
        with pytest.raises(ValueError, match="ragged"):
            load_tabular(path, "cls")

    def test_first_appearance_class_mapping(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f,cls\n1,pos\n2,neg\n3,pos\n")
        ds = load_tabular(path, "cls")
        assert ds.class_names == ("pos", "neg")
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_tabular(tmp_path / "nope.csv", "cls")

    def test_unknown_label_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="label column"):
            load_tabular(path, "cls")

    def test_non_numeric_feature(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,cls\nhello,x\n")
        with pytest.raises(ValueError, match="non-numeric"):
            load_tabular(path, "cls")

    def test_label_domain_tagging(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,cls\n1,x\n")
        ds = load_tabular(path, "cls", Domain.TARGET)
        assert ds.domains[0] == Domain.TARGET


class TestRoundTrip:
    def test_save_then_load_is_identity(self, tmp_path):
        path = tmp_path / "orig.csv"
        path.write_text("g1,g2,cls\n0.125,2.5,pos\n-3.75,0.0001,neg\n1e-12,4.0,pos\n")
        ds = load_tabular(path, "cls")
        out = tmp_path / "round.csv"
        save_tabular(ds, out, label_column="cls")
        ds2 = load_tabular(out, "cls")
        np.testing.assert_array_equal(ds.features, ds2.features)
        np.testing.assert_array_equal(ds.labels, ds2.labels)
        np.testing.assert_array_equal(ds.domains, ds2.domains)
        assert ds.class_names == ds2.class_names
        assert ds.feature_names == ds2.feature_names
        assert ds.ids == ds2.ids


class TestAlignFeatureSpaces:
    def test_intersection_sorted(self):
        a = make_dataset(4, d=3)
        a = Dataset(
            features=a.features, labels=a.labels, domains=a.domains,
            class_names=a.class_names, feature_names=("a", "b", "c"),
        )
        b = make_dataset(5, d=3, seed=1)
        b = Dataset(
            features=b.features, labels=b.labels, domains=b.domains,
            class_names=b.class_names, feature_names=("d", "c", "b"),
        )
        out_a, out_b = align_feature_spaces(a, b)
        assert out_a.feature_names == out_b.feature_names == ("b", "c")
        assert out_a.dimension == out_b.dimension == 2
        # columns reordered, not rewritten
        np.testing.assert_array_equal(out_a.features[:, 0], a.features[:, 1])
        np.testing.assert_array_equal(out_b.features[:, 0], b.features[:, 2])
        np.testing.assert_array_equal(out_a.labels, a.labels)

    def test_disjoint_names_error(self):
        a = make_dataset(2, d=1)
        a = Dataset(features=a.features, labels=a.labels, domains=a.domains,
                    class_names=a.class_names, feature_names=("a",))
        b = Dataset(features=a.features, labels=a.labels, domains=a.domains,
                    class_names=a.class_names, feature_names=("b",))
        with pytest.raises(ValueError, match="empty"):
            align_feature_spaces(a, b)

    def test_missing_names_error(self):
        a = make_dataset(2, with_names=False)
        b = make_dataset(2)
        with pytest.raises(ValueError, match="feature_names"):
            align_feature_spaces(a, b)

    def test_symmetric_outputs(self):
        a = make_dataset(3, d=3)
        a = Dataset(features=a.features, labels=a.labels, domains=a.domains,
                    class_names=a.class_names, feature_names=("z", "m", "a"))
        b = make_dataset(3, d=3, seed=2)
        b = Dataset(features=b.features, labels=b.labels, domains=b.domains,
                    class_names=b.class_names, feature_names=("m", "a", "q"))
        out_a, out_b = align_feature_spaces(a, b)
        rev_b, rev_a = align_feature_spaces(b, a)
        assert out_a.feature_names == rev_a.feature_names
        np.testing.assert_array_equal(out_a.features, rev_a.features)


class TestBalanceClasses:
    def test_exact_counts(self):
        rng = np.random.default_rng(0)
        labels = np.concatenate([np.zeros(1500, int), np.ones(2000, int)])
        ds = Dataset(
            features=rng.normal(size=(3500, 2)), labels=labels,
            domains=np.zeros(3500, int), class_names=("A", "B"),
        )
        out = balance_classes(ds, 1000, seed=3)
        np.testing.assert_array_equal(out.class_counts(), [1000, 1000])

    def test_exhaustive_draw_is_identity_as_set(self):
        ds = make_dataset(5, n_classes=1)
        out = balance_classes(ds, 5, seed=0)
        assert sorted(out.ids) == sorted(ds.ids)
        np.testing.assert_array_equal(out.features, ds.features)

    def test_insufficient_samples(self):
        ds = make_dataset(3, n_classes=1)
        with pytest.raises(ValueError, match="need 5"):
            balance_classes(ds, 5, seed=0)

    def test_deterministic(self):
        ds = make_dataset(60, n_classes=2, seed=4)
        per = int(ds.class_counts().min())
        a = balance_classes(ds, per, seed=11)
        b = balance_classes(ds, per, seed=11)
        np.testing.assert_array_equal(a.features, b.features)
        assert a.ids == b.ids


class TestSplit:
    def test_split_sizes_100(self):
        ds = make_dataset(100)
        train, val, test = split(ds, SplitSpec(test_fraction=0.3, val_fraction_of_train=0.3, seed=0))
        assert (len(train), len(val), len(test)) == (49, 21, 30)

    def test_zero_validation(self):
        ds = make_dataset(10)
        train, val, test = split(ds, SplitSpec(test_fraction=0.3, val_fraction_of_train=0.0, seed=0))
        assert (len(train), len(val), len(test)) == (7, 0, 3)

    def test_same_seed_same_partition(self):
        ds = make_dataset(50)
        spec = SplitSpec(test_fraction=0.25, val_fraction_of_train=0.2, seed=9)
        first = split(ds, spec)
        second = split(ds, spec)
        for a, b in zip(first, second):
            assert a.ids == b.ids

    def test_empty_dataset(self):
        ds = make_dataset(5)
        with pytest.raises(ValueError):
            split(ds.subset([]), SplitSpec(test_fraction=0.3))

    def test_empty_partition_error(self):
        ds = make_dataset(2)
        with pytest.raises(ValueError, match="empty"):
            split(ds, SplitSpec(test_fraction=0.1, seed=0))

    def test_stratified_keeps_fractions_per_class(self):
        ds = make_dataset(200, n_classes=2, seed=8)
        spec = SplitSpec(test_fraction=0.3, val_fraction_of_train=0.0, seed=1, stratified=True)
        train, _, test = split(ds, spec)
        for c in range(2):
            n_c = int(ds.class_counts()[c])
            assert int(test.class_counts()[c]) == int(np.floor(0.3 * n_c + 0.5))

    @given(
        n=st.integers(min_value=4, max_value=200),
        test_fraction=st.floats(min_value=0.05, max_value=0.6),
        val_fraction=st.floats(min_value=0.0, max_value=0.5),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, test_fraction, val_fraction, seed):
        ds = make_dataset(n, seed=1)
        spec = SplitSpec(test_fraction=test_fraction, val_fraction_of_train=val_fraction, seed=seed)
        try:
            train, val, test = split(ds, spec)
        except ValueError:
            return  # a partition with nonzero fraction rounded to zero
        ids = [*train.ids, *val.ids, *test.ids]
        assert sorted(ids) == sorted(ds.ids)
        assert len(set(train.ids) & set(val.ids)) == 0
        assert len(set(train.ids) & set(test.ids)) == 0
        assert len(set(val.ids) & set(test.ids)) == 0


class TestInvariants:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(test_fraction=0.0)
        with pytest.raises(ValueError):
            SplitSpec(test_fraction=1.0)
        with pytest.raises(ValueError):
            SplitSpec(test_fraction=0.3, val_fraction_of_train=1.0)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label"):
            Dataset(
                features=np.zeros((1, 2)), labels=np.array([2]),
                domains=np.zeros(1, int), class_names=("a", "b"),
            )

    def test_duplicate_feature_names(self):
        with pytest.raises(ValueError, match="unique"):
            Dataset(
                features=np.zeros((1, 2)), labels=np.array([0]),
                domains=np.zeros(1, int), class_names=("a",), feature_names=("x", "x"),
            )

    def test_standardize_zscores(self):
        ds = make_dataset(50, seed=3)
        out = standardize(ds)
        np.testing.assert_allclose(out.features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.features.std(axis=0), 1.0, atol=1e-12)

    def test_sample_view(self):
        ds = make_dataset(3)
        s = ds.sample(1)
        assert s.id == "1"
        np.testing.assert_array_equal(s.features, ds.features[1])
