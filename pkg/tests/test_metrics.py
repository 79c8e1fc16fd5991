from collections import Counter

import pytest

from redial_bench.config import BenchConfig
from redial_bench.errors import EmptyEvaluationError, InstanceFileError, PredictionMismatchError, UsageError
from redial_bench.metrics import (MetricReport, RankedPrediction, aggregate, hit_rank, rdl, read_predictions,
                                  recall_at_k, reward, score, success_rate, write_predictions)

from conftest import LIKED, NEITHER, SEEN_ONLY, instance


def pred(instance_id, *ranking):
    return RankedPrediction(instance_id=instance_id, ranking=ranking)


@pytest.mark.parametrize("ranking,k,expected", [
    (("1", "2", "3"), 1, 1 / 2),
    (("3", "1", "2"), 1, 0.0),
    (("3", "1", "2"), 2, 1 / 2),
    (("3", "1", "2"), 3, 1.0),
    ((), 10, 0.0),
])
def test_recall_examples(ranking, k, expected):
    assert recall_at_k(pred("D#1", *ranking), instance("D", 1, ["1", "2"]), k) == pytest.approx(expected)


def test_recall_with_k_beyond_ranking_length():
    assert recall_at_k(pred("D#1", "2"), instance("D", 1, ["2"]), 50) == 1.0


def test_recall_rejects_bad_cutoff():
    with pytest.raises(UsageError):
        recall_at_k(pred("D#1", "1"), instance("D", 1, ["1"]), 0)


def test_recall_rejects_mismatched_prediction():
    with pytest.raises(PredictionMismatchError):
        recall_at_k(pred("D#3", "1"), instance("D", 1, ["1"]), 1)


def test_negative_id_can_never_be_hit():
    inst = instance("D", 1, ["-101", "5"])
    assert recall_at_k(pred("D#1", "-101", "5"), inst, 1) == 0.0
    assert recall_at_k(pred("D#1", "-101", "5"), inst, 2) == 0.5
    assert hit_rank(pred("D#1", "-101", "5"), inst) == 2


def test_integer_ids_are_coerced():
    assert pred("D#1", 5, 7).ranking == ("5", "7")
    assert RankedPrediction(instance_id="D#1", ranking=[5, 7]).ranking == ("5", "7")


def test_duplicate_ids_in_ranking_are_rejected():
    with pytest.raises(ValueError):
        RankedPrediction(instance_id="D#1", ranking=["5", "5"])


def test_reward_table():
    assert reward(LIKED) == 1.0
    assert reward(SEEN_ONLY) == 0.5
    assert reward(NEITHER) == 0.0


def test_single_liked_hit_in_four_turn_dialogue():
    inst = instance("D", 1, ["5"], feedback={"5": LIKED}, dialogue_turns=4, recommender_turns=2)
    preds = {"D#1": pred("D#1", "5")}
    assert rdl(preds, [inst]) == pytest.approx(0.25)
    assert rdl(preds, [inst], denominator="recommender-turns") == pytest.approx(0.5)
    assert success_rate(preds, [inst]) == 1.0


def test_rdl_takes_best_hit_per_instance():
    inst = instance("D", 1, ["5", "6"], feedback={"5": SEEN_ONLY, "6": LIKED}, dialogue_turns=2)
    assert rdl({"D#1": pred("D#1", "5", "6")}, [inst], cutoff=2) == pytest.approx(0.5)


def test_explicit_forms_override_instance_feedback():
    inst = instance("D", 1, ["5"], feedback={"5": LIKED}, dialogue_turns=2)
    forms = {"D": {"5": SEEN_ONLY}}
    assert rdl({"D#1": pred("D#1", "5")}, [inst], forms=forms) == pytest.approx(0.25)


def test_hand_scored_success_rate(hand_scored):
    instances, preds = hand_scored
    assert success_rate(preds, instances) == pytest.approx(0.6)
    assert success_rate(preds, instances, cutoff=10) == pytest.approx(0.8)


def test_hand_scored_rdl(hand_scored):
    instances, preds = hand_scored
    tally = Counter()
    assert rdl(preds, instances, tally=tally) == pytest.approx(0.075)
    assert tally["missing_feedback"] == 1
    assert rdl(preds, instances, denominator="recommender-turns") == pytest.approx(0.15)


def test_hand_scored_report(hand_scored):
    instances, preds = hand_scored
    report = score(instances, preds, BenchConfig(k=[1, 10], threads=4), dropped=5, name="hand")
    assert report.recall_at["1"] == pytest.approx(13 / 60)
    assert report.recall_at["10"] == pytest.approx(49 / 120)
    assert report.recall_with_drops["1"] == pytest.approx(13 / 3 / 25)
    assert report.success_rate == pytest.approx(0.6)
    assert report.rdl == pytest.approx(0.075)
    assert report.missing_feedback == 1
    assert report.instance_count == 20 and report.dialogue_count == 5
    assert report.dropped_instances == 5
    row = report.to_csv_row()
    assert list(row)[:4] == ["name", "variant", "R@1", "R@10"]


def test_hand_scored_micro_recall(hand_scored):
    instances, preds = hand_scored
    report = score(instances, preds, BenchConfig(k=[1], recall_average="micro", threads=1))
    assert report.recall_at["1"] == pytest.approx(6 / 25)


def test_report_is_schedule_independent(hand_scored):
    instances, preds = hand_scored
    one = score(instances, preds, BenchConfig(threads=1))
    many = score(instances, preds, BenchConfig(threads=8))
    assert one == many


def test_report_config_fingerprint_follows_scoring_toggles(hand_scored):
    instances, preds = hand_scored
    a = score(instances, preds, BenchConfig(threads=1))
    b = score(instances, preds, BenchConfig(sr_cutoff=10, threads=1))
    assert a.config_fingerprint != b.config_fingerprint
    assert MetricReport.model_validate(a.model_dump()) == a


def test_missing_prediction_is_fatal(hand_scored):
    instances, preds = hand_scored
    del preds["D3#5"]
    with pytest.raises(PredictionMismatchError) as e:
        score(instances, preds, BenchConfig(threads=1))
    assert e.value.details["missing"] == ["D3#5"]


def test_aggregate_on_empty_set():
    with pytest.raises(EmptyEvaluationError):
        aggregate([], [], "standard")


def test_score_on_empty_set():
    with pytest.raises(EmptyEvaluationError):
        score([], {}, BenchConfig(threads=1))


def test_prediction_file_round_trip(tmp_path):
    path = tmp_path / "p.jsonl"
    write_predictions(path, [pred("A#1", "1", "2"), pred("B#1")], None)
    header, preds = read_predictions(path)
    assert header is None
    assert preds["A#1"].ranking == ("1", "2") and preds["B#1"].ranking == ()


def test_prediction_file_drops_negative_ids(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"instance_id": "A#1", "ranking": [5, -101, "-102", 7]}\n', encoding="utf-8")
    _, preds = read_predictions(path)
    assert preds["A#1"].ranking == ("5", "7")


def test_prediction_file_with_duplicate_instance(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"instance_id": "A#1", "ranking": [1]}\n{"instance_id": "A#1", "ranking": [2]}\n', encoding="utf-8")
    with pytest.raises(PredictionMismatchError):
        read_predictions(path)


def test_prediction_file_with_invalid_record(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"instance_id": "A#1", "ranking": [1, 1]}\n', encoding="utf-8")
    with pytest.raises(InstanceFileError):
        read_predictions(path)


def test_micro_recall_with_drops_counts_dropped_ground_truth(hand_scored):
    instances, preds = hand_scored
    report = score(instances, preds, BenchConfig(k=[1], recall_average="micro", threads=1),
                   dropped=2, dropped_ground_truth=5)
    assert report.recall_at["1"] == pytest.approx(6 / 25)
    assert report.recall_with_drops["1"] == pytest.approx(6 / 30)
    assert report.dropped_ground_truth == 5
