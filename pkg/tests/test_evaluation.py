import json

import pytest

from rbp.errors import DomainError, NotFoundError, ParseError
from rbp.evaluation import (
    Box,
    ClassMatches,
    Detection,
    EvalReport,
    GtPair,
    average_precision,
    evaluate,
    format_percent,
    format_report_table,
    iou,
    load_detections,
    load_gt,
    match_detections,
    write_detections,
    write_gt,
    write_report,
)
from rbp.taxonomy import partition_by_rarity


def box(x1, y1, x2, y2):
    return Box(float(x1), float(y1), float(x2), float(y2))


UNIT = box(0, 0, 1, 1)


def det(image, c, score, human=UNIT, obj=UNIT):
    return Detection(image, c, score, human, obj)


def gt(image, c, human=UNIT, obj=UNIT):
    return GtPair(image, c, human, obj)


class TestIou:
    def test_quarter_overlap(self):
        # 5x5 intersection over 100 + 100 - 25
        assert iou(box(0, 0, 10, 10), box(5, 5, 15, 15)) == pytest.approx(25 / 175)

    def test_identical(self):
        assert iou(UNIT, UNIT) == 1.0

    def test_disjoint_and_touching(self):
        assert iou(box(0, 0, 1, 1), box(2, 2, 3, 3)) == 0.0
        assert iou(box(0, 0, 1, 1), box(1, 0, 2, 1)) == 0.0  # shared edge only

    def test_containment(self):
        assert iou(box(0, 0, 4, 4), box(1, 1, 3, 3)) == pytest.approx(4 / 16)

    def test_degenerate_box_rejected(self):
        with pytest.raises(DomainError):
            box(0, 0, 0, 1)


class TestMatching:
    def test_both_boxes_must_clear_threshold(self):
        g = [gt("i", 0, human=box(0, 0, 10, 10), obj=box(20, 0, 30, 10))]
        good = det("i", 0, 0.9, human=box(0, 0, 10, 10), obj=box(20, 0, 30, 10))
        bad_obj = det("i", 0, 0.8, human=box(0, 0, 10, 10), obj=box(28, 0, 38, 10))
        matches = match_detections([good, bad_obj], g)
        assert matches[0].flags == (True, False)
        assert matches[0].n_gt == 1

    def test_each_gt_consumed_once(self):
        g = [gt("i", 0)]
        d1, d2 = det("i", 0, 0.9), det("i", 0, 0.8)
        matches = match_detections([d1, d2], g)
        assert matches[0].flags == (True, False)

    def test_descending_score_order(self):
        g = [gt("i", 0)]
        low_first = [det("i", 0, 0.1), det("i", 0, 0.9)]
        matches = match_detections(low_first, g)
        # the 0.9 detection is evaluated first and takes the GT
        assert matches[0].flags == (True, False)

    def test_greedy_takes_larger_min_iou(self):
        human = box(0, 0, 10, 10)
        tight = gt("i", 0, human=human, obj=box(0, 0, 10, 10))
        wide = gt("i", 0, human=human, obj=box(0, 0, 10, 20))
        # overlaps tight at 100/120 and wide at 120/200: must claim tight
        d1 = det("i", 0, 0.9, human=human, obj=box(0, 0, 10, 12))
        # overlaps wide at 200/240 but tight at only 100/240 (< 0.5), so it
        # turns into a false positive if d1 grabbed the wrong pair
        d2 = det("i", 0, 0.8, human=human, obj=box(0, 0, 10, 24))
        matches = match_detections([d1, d2], [wide, tight])
        assert matches[0].flags == (True, True)

    def test_images_are_isolated(self):
        g = [gt("a", 0)]
        matches = match_detections([det("b", 0, 0.9)], g)
        assert matches[0].flags == (False,)

    def test_classes_are_isolated(self):
        g = [gt("i", 1)]
        matches = match_detections([det("i", 0, 0.9)], g)
        assert matches[0].flags == (False,)
        assert matches[1].flags == ()
        assert matches[1].n_gt == 1

    def test_bad_threshold(self):
        with pytest.raises(DomainError):
            match_detections([], [], iou_thresh=0.0)


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision((True, True), 2) == 1.0

    def test_miss_then_hit(self):
        # precision at the hit is 1/2, only recall level reached
        assert average_precision((False, True), 1) == 0.5

    def test_interpolation_looks_ahead(self):
        # precisions: 1, 1/2, 2/3; interpolated at first TP stays 1,
        # at second TP max(2/3) = 2/3
        assert average_precision((True, False, True), 2) == pytest.approx((1 + 2 / 3) / 2)

    def test_unreached_recall_contributes_zero(self):
        assert average_precision((True,), 2) == 0.5

    def test_no_detections(self):
        assert average_precision((), 3) == 0.0

    def test_no_gt_is_undefined(self):
        assert average_precision((False, False), 0) is None

    def test_negative_gt_rejected(self):
        with pytest.raises(DomainError):
            average_precision((), -1)


class TestEvaluate:
    def _table(self, small_table):
        return small_table, partition_by_rarity(small_table, 10)

    def test_zero_gt_class_excluded_from_map(self, small_table):
        table, partition = self._table(small_table)
        dets = [det("i", 0, 0.9), det("i", 1, 0.9)]
        gts = [gt("i", 0)]
        report = evaluate(dets, gts, table, partition, setting="default")
        assert 0 in report.per_class_ap
        assert 1 not in report.per_class_ap
        assert set(report.undefined_classes) == {1, 2, 3}
        assert report.map_full == report.per_class_ap[0]
        # rare mean covers class 0 only; class 2 has no gt
        assert report.map_rare == report.per_class_ap[0]
        assert report.map_nonrare is None

    def test_unknown_class_id_rejected(self, small_table):
        table, partition = self._table(small_table)
        with pytest.raises(NotFoundError):
            evaluate([det("i", 99, 0.5)], [gt("i", 0)], table, partition)
        with pytest.raises(NotFoundError):
            evaluate([], [gt("i", 99)], table, partition)

    def test_known_object_removes_foreign_image_fps(self, small_table):
        table, partition = self._table(small_table)
        # image "cat-img" contains a cat gt; image "bike-img" a bicycle gt
        gts = [gt("cat-img", 0), gt("bike-img", 2)]
        dets = [
            det("cat-img", 0, 0.9),
            det("bike-img", 0, 0.8),  # cat detection on a bicycle-only image
        ]
        default = evaluate(dets, gts, table, partition, setting="default")
        ko = evaluate(dets, gts, table, partition, setting="ko")
        assert default.per_class_ap[0] == 1.0  # FP ranks after the TP
        assert ko.per_class_ap[0] == 1.0
        worse = [det("bike-img", 0, 0.95), det("cat-img", 0, 0.9)]
        default = evaluate(worse, gts, table, partition, setting="default")
        ko = evaluate(worse, gts, table, partition, setting="ko")
        assert default.per_class_ap[0] == 0.5
        assert ko.per_class_ap[0] == 1.0  # the foreign-image FP is filtered out

    def test_ko_keeps_gt_count(self, small_table):
        table, partition = self._table(small_table)
        gts = [gt("a", 0), gt("b", 0)]
        dets = [det("a", 0, 0.9)]
        ko = evaluate(dets, gts, table, partition, setting="ko")
        assert ko.per_class_ap[0] == 0.5  # still 2 gt, only one recalled

    def test_bad_setting(self, small_table):
        table, partition = self._table(small_table)
        with pytest.raises(DomainError):
            evaluate([], [gt("i", 0)], table, partition, setting="known")


class TestFormatting:
    def test_format_percent(self):
        assert format_percent(None) == "n/a"
        assert format_percent(1.0) == "100.00"
        assert format_percent(0.32131897) == "32.13"
        assert format_percent(0.0) == "0.00"

    def test_table_layout(self):
        report = EvalReport(
            setting="default",
            per_class_ap={0: 0.5},
            undefined_classes=(),
            map_full=0.5,
            map_rare=None,
            map_nonrare=0.5,
        )
        text = format_report_table(report)
        lines = text.split("\n")
        assert lines[0].split() == ["Setting", "Full", "Rare", "Non-rare"]
        assert lines[1].split() == ["default", "50.00", "n/a", "50.00"]


class TestFiles:
    def test_detection_round_trip(self, tmp_path):
        dets = [det("i", 0, 0.25, human=box(0, 0, 2, 2), obj=box(1, 1, 3, 3))]
        path = tmp_path / "dets.jsonl"
        write_detections(dets, path)
        assert load_detections(path) == dets

    def test_gt_round_trip(self, tmp_path):
        gts = [gt("i", 2, human=box(0, 0, 2, 2))]
        path = tmp_path / "gt.jsonl"
        write_gt(gts, path)
        assert load_gt(path) == gts

    def test_bad_box_reports_line(self, tmp_path):
        path = tmp_path / "dets.jsonl"
        good = json.dumps(
            {"image_id": "i", "class_id": 0, "score": 0.5,
             "human_box": [0, 0, 1, 1], "object_box": [0, 0, 1, 1]}
        )
        bad = json.dumps(
            {"image_id": "i", "class_id": 0, "score": 0.5,
             "human_box": [1, 1, 0, 0], "object_box": [0, 0, 1, 1]}
        )
        path.write_text(good + "\n" + bad + "\n")
        with pytest.raises(ParseError) as exc:
            load_detections(path)
        assert exc.value.line == 2

    def test_report_json_shape(self, small_table, tmp_path):
        partition = partition_by_rarity(small_table, 10)
        report = evaluate([det("i", 0, 0.9)], [gt("i", 0)], small_table, partition)
        path = tmp_path / "report.json"
        write_report(report, path)
        payload = json.loads(path.read_text())
        assert payload["setting"] == "default"
        assert payload["per_class_ap"] == {"0": 1.0}
        assert payload["map_full"] == 1.0
        assert payload["map_nonrare"] is None
