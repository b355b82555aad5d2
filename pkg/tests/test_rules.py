import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from rbp.errors import ConfigError, CoverageError, DomainError, ParseError
from rbp.rules import (
    KIND_ALL_ONES,
    KIND_BOOLEAN,
    KIND_DECIMAL,
    AnnotatorLabelSet,
    RuleMatrix,
    aggregate_annotations,
    all_ones,
    booleanize,
    ensure_coverage,
    load_annotations,
    load_rules,
    rule_row_mean,
    rules_from_dict,
    rules_to_dict,
    save_rules,
    validate_rules,
    write_heatmap_csv,
)
from rbp.taxonomy import ClassTable, HoiClass, PART_NAMES, partition_by_rarity


def label_set(annotator_id, rows):
    return AnnotatorLabelSet(annotator_id, {c: np.asarray(v, float) for c, v in rows.items()})


RARE_ROW_A = [0, 0, 0, 0, 0, 1, 1, 1, 0.5, 1]
RARE_ROW_B = [0, 0.5, 0, 0, 0, 1, 1, 0.5, 0.5, 1]


@pytest.fixture
def two_annotators(small_table):
    rows = {0: RARE_ROW_A, 2: [1] * 10}
    rows_b = {0: RARE_ROW_B, 2: [1] * 10}
    return [label_set("a1", rows), label_set("a2", rows_b)]


class TestAggregate:
    def test_rare_rows_are_means(self, small_table, small_partition, two_annotators):
        matrix = aggregate_annotations(two_annotators, small_table, small_partition)
        assert matrix.kind == KIND_DECIMAL
        expected = (np.asarray(RARE_ROW_A) + np.asarray(RARE_ROW_B)) / 2.0
        assert_array_equal(matrix.row(0), expected)

    def test_non_rare_rows_are_ones(self, small_table, small_partition, two_annotators):
        matrix = aggregate_annotations(two_annotators, small_table, small_partition)
        for class_id in small_partition.non_rare:
            assert_array_equal(matrix.row(class_id), np.ones(10))

    def test_bad_label_names_annotator_class_part(self, small_table, small_partition):
        bad = [0, 0, 0, 0, 0, 0.7, 0, 0, 0, 0]
        sets = [label_set("ann-x", {0: bad, 2: [1] * 10})]
        with pytest.raises(DomainError) as exc:
            aggregate_annotations(sets, small_table, small_partition)
        message = str(exc.value)
        assert "ann-x" in message and "class 0" in message and "Head" in message

    def test_missing_rare_class_is_coverage_error(self, small_table, small_partition):
        sets = [label_set("a1", {0: RARE_ROW_A})]
        with pytest.raises(CoverageError):
            aggregate_annotations(sets, small_table, small_partition)

    def test_unknown_class_rejected(self, small_table, small_partition):
        sets = [label_set("a1", {0: RARE_ROW_A, 2: [1] * 10, 77: [0] * 10})]
        with pytest.raises(DomainError):
            aggregate_annotations(sets, small_table, small_partition)

    def test_no_annotators_rejected(self, small_table, small_partition):
        with pytest.raises(CoverageError):
            aggregate_annotations([], small_table, small_partition)


class TestBooleanize:
    def test_threshold_is_inclusive(self, small_table, small_partition, two_annotators):
        decimal = aggregate_annotations(two_annotators, small_table, small_partition)
        boolean = booleanize(decimal)
        # mean of RARE_ROW_A/B at LArm is exactly 0.5 -> promoted to 1
        assert boolean.row(0)[PART_NAMES.index("LArm")] == 1.0
        assert boolean.row(0)[PART_NAMES.index("RThigh")] == 0.0
        assert boolean.kind == KIND_BOOLEAN

    def test_custom_threshold(self, small_table, small_partition, two_annotators):
        decimal = aggregate_annotations(two_annotators, small_table, small_partition)
        strict = booleanize(decimal, threshold=0.9)
        assert strict.row(0)[PART_NAMES.index("LArm")] == 0.0
        assert strict.row(0)[PART_NAMES.index("Head")] == 1.0

    def test_boolean_input_rejected(self, small_table):
        matrix = RuleMatrix(KIND_BOOLEAN, {0: np.ones(10)})
        with pytest.raises(DomainError):
            booleanize(matrix)

    def test_bad_threshold(self, small_table, small_partition, two_annotators):
        decimal = aggregate_annotations(two_annotators, small_table, small_partition)
        for t in (0.0, 1.5, -0.2):
            with pytest.raises(ConfigError):
                booleanize(decimal, threshold=t)


class TestAllOnesAndValidation:
    def test_all_ones(self, small_table):
        matrix = all_ones(small_table)
        assert matrix.kind == KIND_ALL_ONES
        for class_id in small_table.ids():
            assert_array_equal(matrix.row(class_id), np.ones(10))

    def test_validate_clean_matrix(self, small_table, small_partition, two_annotators):
        matrix = aggregate_annotations(two_annotators, small_table, small_partition)
        assert validate_rules(matrix, small_partition).ok

    def test_validate_catches_missing_row(self, small_partition):
        matrix = RuleMatrix(KIND_DECIMAL, {0: np.ones(10)})
        report = validate_rules(matrix, small_partition)
        assert not report.ok
        assert (2, "missing rule row") in report.violations

    def test_validate_catches_non_rare_not_ones(self, small_table, small_partition):
        rows = {c: np.ones(10) for c in small_table.ids()}
        rows[1] = np.full(10, 0.5)
        report = validate_rules(RuleMatrix(KIND_DECIMAL, rows), small_partition)
        assert (1, "non-rare class row is not all ones") in report.violations

    def test_validate_catches_boolean_impurity(self, small_table, small_partition):
        rows = {c: np.ones(10) for c in small_table.ids()}
        rows[0] = np.asarray([0.5] + [1.0] * 9)
        report = validate_rules(RuleMatrix(KIND_BOOLEAN, rows), small_partition)
        assert any("non-{0,1}" in msg for _, msg in report.violations)

    def test_validate_catches_out_of_range_weight(self, small_table, small_partition):
        rows = {c: np.ones(10) for c in small_table.ids()}
        rows[0] = np.asarray([1.5] + [1.0] * 9)
        report = validate_rules(RuleMatrix(KIND_DECIMAL, rows), small_partition)
        assert (0, "weight outside [0, 1]") in report.violations

    def test_wrong_row_shape_rejected_at_construction(self):
        with pytest.raises(DomainError):
            RuleMatrix(KIND_DECIMAL, {0: np.ones(9)})


class TestWithWeightAndCoverage:
    def test_with_weight_returns_decimal_copy(self, small_table):
        base = all_ones(small_table)
        edited = base.with_weight(0, "Head", 0.25)
        assert edited.kind == KIND_DECIMAL
        assert edited.row(0)[PART_NAMES.index("Head")] == 0.25
        # the source matrix is untouched
        assert base.row(0)[PART_NAMES.index("Head")] == 1.0

    def test_with_weight_rejects_out_of_range(self, small_table):
        with pytest.raises(DomainError):
            all_ones(small_table).with_weight(0, "Head", 1.5)

    def test_ensure_coverage_fills_non_rare(self, small_table, small_partition):
        matrix = RuleMatrix(KIND_DECIMAL, {0: np.ones(10), 2: np.ones(10)})
        full = ensure_coverage(matrix, small_table, small_partition)
        assert set(full.class_ids()) == set(small_table.ids())
        assert_array_equal(full.row(1), np.ones(10))

    def test_ensure_coverage_missing_rare_raises(self, small_table, small_partition):
        matrix = RuleMatrix(KIND_DECIMAL, {0: np.ones(10), 1: np.ones(10), 3: np.ones(10)})
        with pytest.raises(CoverageError):
            ensure_coverage(matrix, small_table, small_partition)


class TestRulesIo:
    def test_round_trip(self, small_table, small_partition, two_annotators, tmp_path):
        matrix = aggregate_annotations(two_annotators, small_table, small_partition)
        path = tmp_path / "rules.json"
        save_rules(matrix, path)
        again = load_rules(path)
        assert again.kind == matrix.kind
        for class_id in matrix.class_ids():
            assert_array_equal(again.row(class_id), matrix.row(class_id))

    def test_version_mismatch(self, small_table, tmp_path):
        payload = rules_to_dict(all_ones(small_table))
        payload["version"] = 99
        path = tmp_path / "v99.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(ParseError):
            load_rules(path)

    def test_parts_order_mismatch(self, small_table, tmp_path):
        payload = rules_to_dict(all_ones(small_table))
        payload["parts"] = list(reversed(payload["parts"]))
        path = tmp_path / "parts.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(ParseError):
            load_rules(path)

    def test_from_dict_rejects_bad_kind(self, small_table):
        payload = rules_to_dict(all_ones(small_table))
        payload["kind"] = "fuzzy"
        with pytest.raises(ParseError):
            rules_from_dict(payload)

    def test_heatmap_layout(self, small_table, tmp_path):
        matrix = all_ones(small_table).with_weight(0, "LHand", 0.5)
        path = tmp_path / "heat.csv"
        write_heatmap_csv(matrix, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "class_id," + ",".join(PART_NAMES)
        assert lines[1].startswith("0,") and lines[1].endswith("0.5")
        assert len(lines) == 1 + len(small_table)


class TestAnnotationCsv:
    HEADER = "annotator_id,class_id,part,label\n"

    def _rows(self, annotator, class_id, labels):
        return "".join(
            f"{annotator},{class_id},{part},{value}\n"
            for part, value in zip(PART_NAMES, labels)
        )

    def test_load_groups_by_annotator(self, tmp_path):
        text = self.HEADER + self._rows("a1", 0, [0] * 10) + self._rows("a2", 0, [1] * 10)
        path = tmp_path / "ann.csv"
        path.write_text(text)
        sets = load_annotations(path)
        assert [s.annotator_id for s in sets] == ["a1", "a2"]
        assert_array_equal(sets[1].labels[0], np.ones(10))

    def test_unknown_part_rejected_with_line(self, tmp_path):
        path = tmp_path / "ann.csv"
        path.write_text(self.HEADER + "a1,0,Tail,1\n")
        with pytest.raises(ParseError) as exc:
            load_annotations(path)
        assert exc.value.line == 2

    def test_duplicate_cell_rejected(self, tmp_path):
        path = tmp_path / "ann.csv"
        path.write_text(self.HEADER + "a1,0,Head,1\na1,0,Head,0\n")
        with pytest.raises(ParseError):
            load_annotations(path)

    def test_incomplete_part_coverage_rejected(self, tmp_path):
        rows = self._rows("a1", 0, [1] * 10).splitlines(keepends=True)
        path = tmp_path / "ann.csv"
        path.write_text(self.HEADER + "".join(rows[:9]))
        with pytest.raises(ParseError):
            load_annotations(path)

    def test_label_alphabet_not_checked_here(self, tmp_path):
        # 0.7 parses structurally; aggregation owns the domain check
        labels = [0.7] + [0] * 9
        path = tmp_path / "ann.csv"
        path.write_text(self.HEADER + self._rows("a1", 0, labels))
        sets = load_annotations(path)
        assert sets[0].labels[0][0] == 0.7


@settings(max_examples=60, deadline=None)
@given(
    labels=st.lists(
        st.lists(st.sampled_from([0.0, 0.5, 1.0]), min_size=10, max_size=10),
        min_size=1,
        max_size=6,
    )
)
def test_aggregated_weights_stay_in_unit_interval(labels):
    """Mean of any annotator stack lands in [0, 1] on the 1/(2n) lattice."""
    table = ClassTable([HoiClass(0, "v", "o", 1)])
    partition = partition_by_rarity(table, 10)
    sets = [
        AnnotatorLabelSet(f"a{i}", {0: np.asarray(row)}) for i, row in enumerate(labels)
    ]
    matrix = aggregate_annotations(sets, table, partition)
    row = matrix.row(0)
    assert np.all(row >= 0.0) and np.all(row <= 1.0)
    lattice = row * 2 * len(labels)
    assert np.allclose(lattice, np.round(lattice), atol=1e-9)
    assert 0.0 <= rule_row_mean(matrix, 0) <= 1.0
