import gzip
import io

import numpy as np
import pytest

from zoprox import (
    Dataset,
    LabelError,
    ParseError,
    SplitError,
    load_libsvm,
    parse_libsvm,
    serialize_libsvm,
    split,
)

GOLDEN = """\
# tiny sample set
+1 1:0.5 3:-2 7:1.25
-1 2:1 4:0.5   # trailing comment

+1 1:-0.25 5:3.5 6:-1 7:0.125
-1 3:2 5:-0.75
"""


def check_golden(ds):
    # counted by hand: 4 data lines, max index 7, 3+2+4+2 nonzeros
    assert ds.n == 4
    assert ds.d == 7
    assert ds.nnz == 11
    np.testing.assert_array_equal(ds.labels, [1.0, -1.0, 1.0, -1.0])
    label, idx, vals = ds.row(0)
    np.testing.assert_array_equal(idx, [0, 2, 6])
    np.testing.assert_array_equal(vals, [0.5, -2.0, 1.25])
    label, idx, vals = ds.row(3)
    np.testing.assert_array_equal(idx, [2, 4])
    np.testing.assert_array_equal(vals, [2.0, -0.75])


class TestParse:
    def test_golden_text(self):
        check_golden(parse_libsvm(io.StringIO(GOLDEN)))

    def test_golden_file(self, tiny_libsvm_path):
        check_golden(load_libsvm(tiny_libsvm_path))

    def test_single_line(self):
        ds = parse_libsvm(["+1 1:0.5 3:-2"])
        assert ds.n == 1 and ds.d == 3
        label, idx, vals = ds.row(0)
        assert label == 1.0
        np.testing.assert_array_equal(idx, [0, 2])
        np.testing.assert_array_equal(vals, [0.5, -2.0])

    def test_label_only_line(self):
        ds = parse_libsvm(["-1"])
        assert ds.n == 1 and ds.d == 0 and ds.nnz == 0
        assert ds.labels[0] == -1.0

    def test_gzip_transparent(self, tmp_path):
        path = tmp_path / "tiny.libsvm.gz"
        with gzip.open(path, "wt") as fh:
            fh.write(GOLDEN)
        check_golden(load_libsvm(str(path)))

    def test_zero_one_labels_mapped(self):
        ds = parse_libsvm(["0 1:1", "1 1:2"])
        np.testing.assert_array_equal(ds.labels, [-1.0, 1.0])
        assert ds.meta["label_map"] == "{0,1}->{-1,+1}"

    def test_one_two_labels_mapped(self):
        ds = parse_libsvm(["1 1:1", "2 1:2"])
        np.testing.assert_array_equal(ds.labels, [1.0, -1.0])
        assert ds.meta["label_map"] == "{1,2}->{+1,-1}"

    def test_native_labels_untouched(self):
        ds = parse_libsvm(["+1 1:1", "-1 1:2"])
        np.testing.assert_array_equal(ds.labels, [1.0, -1.0])

    def test_unknown_label_set(self):
        with pytest.raises(LabelError):
            parse_libsvm(["3 1:1", "7 1:2", "9 1:1"])

    def test_malformed_feature_token(self):
        with pytest.raises(ParseError) as exc:
            parse_libsvm(["+1 1:0.5", "+1 oops"])
        assert exc.value.line == 2
        assert exc.value.column == 4

    def test_bad_value(self):
        with pytest.raises(ParseError):
            parse_libsvm(["+1 1:zebra"])

    def test_nonfinite_value(self):
        with pytest.raises(ParseError):
            parse_libsvm(["+1 1:inf"])

    def test_non_increasing_indices(self):
        with pytest.raises(ParseError) as exc:
            parse_libsvm(["+1 3:1 2:1"])
        assert exc.value.line == 1

    def test_zero_index_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm(["+1 0:1"])

    def test_bad_label(self):
        with pytest.raises(ParseError):
            parse_libsvm(["maybe 1:1"])

    def test_empty_input(self):
        ds = parse_libsvm([])
        assert ds.n == 0 and ds.d == 0


class TestRoundTrip:
    def test_serialize_then_parse(self):
        ds = parse_libsvm(io.StringIO(GOLDEN))
        text = serialize_libsvm(ds)
        again = parse_libsvm(io.StringIO(text))
        assert ds.equal_to(again)

    def test_round_trip_preserves_exact_floats(self):
        ds = parse_libsvm(["+1 1:0.1 2:1e-17 3:123456789.123456"])
        again = parse_libsvm(io.StringIO(serialize_libsvm(ds)))
        np.testing.assert_array_equal(ds.data, again.data)


class TestSplit:
    def make(self, n):
        lines = [f"{'+1' if i % 2 else '-1'} 1:{i + 1}.0" for i in range(n)]
        return parse_libsvm(lines)

    def test_even_split(self):
        ds = self.make(100)
        train, tst = split(ds, 0.5, seed=0)
        assert train.n == 50 and tst.n == 50
        assert train.d == tst.d == ds.d
        # disjoint and exhaustive: every original value appears exactly once
        seen = sorted(train.data.tolist() + tst.data.tolist())
        assert seen == sorted(ds.data.tolist())

    def test_round_half_up(self):
        train, tst = split(self.make(101), 0.5, seed=0)
        assert train.n == 51 and tst.n == 50

    def test_deterministic(self):
        ds = self.make(30)
        a_train, a_test = split(ds, 0.4, seed=7)
        b_train, b_test = split(ds, 0.4, seed=7)
        assert a_train.equal_to(b_train) and a_test.equal_to(b_test)

    def test_seed_changes_split(self):
        ds = self.make(30)
        a_train, _ = split(ds, 0.5, seed=1)
        b_train, _ = split(ds, 0.5, seed=2)
        assert not a_train.equal_to(b_train)

    def test_too_small(self):
        with pytest.raises(SplitError):
            split(self.make(1), 0.5, seed=0)

    def test_bad_fraction(self):
        ds = self.make(10)
        for f in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(SplitError):
                split(ds, f, seed=0)

    def test_degenerate_part(self):
        # 3 rows at fraction 0.05 would leave an empty training side
        with pytest.raises(SplitError):
            split(self.make(3), 0.05, seed=0)

    def test_metadata_records_split(self):
        train, tst = split(self.make(10), 0.5, seed=4)
        assert "split" in train.meta and "split" in tst.meta


class TestDataset:
    def test_subset(self):
        ds = parse_libsvm(io.StringIO(GOLDEN))
        sub = ds.subset(np.array([0, 3]))
        assert sub.n == 2 and sub.d == ds.d
        label, idx, vals = sub.row(1)
        np.testing.assert_array_equal(idx, [2, 4])
        np.testing.assert_array_equal(vals, [2.0, -0.75])

    def test_equal_to(self):
        a = parse_libsvm(["+1 1:1"])
        b = parse_libsvm(["+1 1:1"])
        c = parse_libsvm(["-1 1:1"])
        assert a.equal_to(b)
        assert not a.equal_to(c)
