"""metrics.py v1.0.0 - Scoring of ranked predictions against evaluation instances
Recall@k per instance, Success Rate and Reward-per-Dialogue-Length per dialogue,
aggregated with compensated summation so any schedule gives the same report."""

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from redial_bench.artifacts import read_jsonl, write_jsonl
from redial_bench.config import BenchConfig, SCORING_KEYS, PREPROCESSING_KEYS, config_fingerprint
from redial_bench.corpus import Answer, MentionForm
from redial_bench.errors import EmptyEvaluationError, InstanceFileError, PredictionMismatchError, UsageError
from redial_bench.instances import EvaluationInstance
from redial_bench.logs import get_logger

VERSION, ARTIFACT_TYPE = "1.0.0", "metric_report"
PREDICTION_ARTIFACT_TYPE = "ranked_predictions"
log = get_logger(__name__)

# Reward rules for RDL (explicit table, did_not_say earns nothing)
REWARD_LIKED, REWARD_SEEN = 1.0, 0.5
MISSING_FORM = MentionForm(suggested=0, seen=Answer.DID_NOT_SAY, liked=Answer.DID_NOT_SAY)
MAX_LISTED_IDS = 20


def is_masked(item_id: str) -> bool:
    """Negative ids stand for items a catalog could not resolve."""
    return item_id.startswith("-")


class RankedPrediction(BaseModel):
    model_config = ConfigDict(frozen=True)

    instance_id: str
    ranking: Tuple[str, ...]

    @field_validator("ranking", mode="before")
    @classmethod
    def _ids_as_strings(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)):
            return tuple(str(v) if isinstance(v, int) and not isinstance(v, bool) else v for v in value)
        return value

    @field_validator("ranking")
    @classmethod
    def _no_duplicates(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        dupes = sorted({v for v, n in Counter(value).items() if n > 1})
        if dupes:
            raise ValueError(f"duplicate ids in ranking: {dupes[:MAX_LISTED_IDS]}")
        return value

    def to_record(self) -> Dict[str, Any]:
        return {"instance_id": self.instance_id, "ranking": list(self.ranking)}


@dataclass(frozen=True)
class InstanceScore:
    instance_id: str
    dialogue_id: str
    recall_at: Dict[int, float]
    hits_at: Dict[int, int]
    ground_truth_size: int
    hit_rank: Optional[int]


@dataclass(frozen=True)
class DialogueScore:
    dialogue_id: str
    success: bool
    reward: float
    denominator: int
    missing_feedback: int = 0

    @property
    def value(self) -> float:
        return self.reward / self.denominator if self.denominator else 0.0


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    artifact_type: str = ARTIFACT_TYPE
    version: str = VERSION
    variant: str
    cutoffs: List[int]
    recall_average: str
    recall_at: Dict[str, float]
    recall_with_drops: Dict[str, float]
    hit_rate_at: Dict[str, float]
    success_rate: float
    sr_cutoff: int
    rdl: float
    rdl_denominator: str
    instance_count: int
    dialogue_count: int
    dropped_instances: int = 0
    dropped_ground_truth: int = 0
    missing_feedback: int = 0
    name: str = ""
    config: Dict[str, Any] = {}
    config_fingerprint: str = ""
    instances_fingerprint: str = ""

    def to_csv_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"name": self.name, "variant": self.variant}
        row.update({f"R@{k}": v for k, v in self.recall_at.items()})
        row.update({"SR": self.success_rate, "RDL": self.rdl, "instances": self.instance_count,
                    "dialogues": self.dialogue_count, "dropped": self.dropped_instances,
                    "config_fingerprint": self.config_fingerprint})
        return row


def _check_k(k: int) -> None:
    if k < 1:
        raise UsageError(f"cutoff must be >= 1, got {k}")


def _hits(pred: RankedPrediction, inst: EvaluationInstance, k: int) -> int:
    top = set(pred.ranking[:k])
    return sum(1 for item in inst.ground_truth if not is_masked(item) and item in top)


def recall_at_k(pred: RankedPrediction, inst: EvaluationInstance, k: int) -> float:
    """|top-k ∩ ground truth| / |ground truth|; masked ground truth can never be hit."""
    _check_k(k)
    if pred.instance_id != inst.instance_id:
        raise PredictionMismatchError(f"prediction {pred.instance_id} scored against {inst.instance_id}")
    if not inst.ground_truth:
        raise EmptyEvaluationError(f"instance {inst.instance_id} has no ground truth", instance_id=inst.instance_id)
    return _hits(pred, inst, k) / len(inst.ground_truth)


def hit_rank(pred: RankedPrediction, inst: EvaluationInstance) -> Optional[int]:
    """1-based rank of the first ground-truth item in the ranking, or None."""
    relevant = {item for item in inst.ground_truth if not is_masked(item)}
    for rank, item in enumerate(pred.ranking, start=1):
        if item in relevant:
            return rank
    return None


def score_instance(pred: RankedPrediction, inst: EvaluationInstance, cutoffs: Sequence[int]) -> InstanceScore:
    recall = {k: recall_at_k(pred, inst, k) for k in cutoffs}
    hits = {k: _hits(pred, inst, k) for k in cutoffs}
    return InstanceScore(inst.instance_id, inst.dialogue_id, recall, hits, len(inst.ground_truth), hit_rank(pred, inst))


def reward(form: MentionForm) -> float:
    if form.liked == Answer.YES:
        return REWARD_LIKED
    if form.seen == Answer.YES:
        return REWARD_SEEN
    return 0.0


def group_by_dialogue(instances: Iterable[EvaluationInstance]) -> Dict[str, List[EvaluationInstance]]:
    groups: Dict[str, List[EvaluationInstance]] = {}
    for inst in instances:
        groups.setdefault(inst.dialogue_id, []).append(inst)
    return groups


def check_predictions(preds: Mapping[str, RankedPrediction], instances: Sequence[EvaluationInstance]) -> None:
    missing = [inst.instance_id for inst in instances if inst.instance_id not in preds]
    if missing:
        raise PredictionMismatchError(f"{len(missing)} instances have no prediction: {', '.join(missing[:MAX_LISTED_IDS])}",
                                      missing=missing)
    known = {inst.instance_id for inst in instances}
    unknown = [iid for iid in preds if iid not in known]
    if unknown:
        log.warning(f"Ignoring {len(unknown)} predictions for unknown instances, e.g. {unknown[0]}")


def score_dialogue(
    dialogue_id: str,
    instances: Sequence[EvaluationInstance],
    preds: Mapping[str, RankedPrediction],
    cutoff: int = 1,
    denominator: str = "all-turns",
    forms: Optional[Mapping[str, MentionForm]] = None,
) -> DialogueScore:
    """Success if any instance hits within top-cutoff; reward = sum of each instance's best hit."""
    _check_k(cutoff)
    success, rewards, missing = False, [], 0
    for inst in instances:
        top = set(preds[inst.instance_id].ranking[:cutoff])
        hits = [item for item in inst.ground_truth if not is_masked(item) and item in top]
        if not hits:
            continue
        success = True
        feedback = forms if forms is not None else inst.feedback
        best = 0.0
        for item in hits:
            form = feedback.get(item)
            if form is None:
                missing += 1
                form = MISSING_FORM
            best = max(best, reward(form))
        rewards.append(best)
    first = instances[0]
    turns = first.recommender_turns if denominator == "recommender-turns" else first.dialogue_turns
    return DialogueScore(dialogue_id, success, math.fsum(rewards), turns, missing)


def score_dialogues(preds, instances, cutoff=1, denominator="all-turns", forms=None, threads=1) -> List[DialogueScore]:
    check_predictions(preds, instances)
    groups = group_by_dialogue(instances)
    forms = forms or {}

    def run(item):
        dialogue_id, group = item
        return score_dialogue(dialogue_id, group, preds, cutoff, denominator, forms.get(dialogue_id))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, groups.items()))


def success_rate(preds: Mapping[str, RankedPrediction], instances: Sequence[EvaluationInstance], cutoff: int = 1) -> float:
    scores = score_dialogues(preds, instances, cutoff)
    if not scores:
        raise EmptyEvaluationError("no dialogues to score")
    return sum(1 for s in scores if s.success) / len(scores)


def rdl(
    preds: Mapping[str, RankedPrediction],
    instances: Sequence[EvaluationInstance],
    forms: Optional[Mapping[str, Mapping[str, MentionForm]]] = None,
    cutoff: int = 1,
    denominator: str = "all-turns",
    tally: Optional[Counter] = None,
) -> float:
    """Mean over dialogues of (sum of per-instance rewards) / turns in the dialogue.
    forms: dialogue_id -> item -> seeker form; defaults to the feedback stored on each instance."""
    scores = score_dialogues(preds, instances, cutoff, denominator, forms)
    if not scores:
        raise EmptyEvaluationError("no dialogues to score")
    if tally is not None:
        tally["missing_feedback"] += sum(s.missing_feedback for s in scores)
    return math.fsum(s.value for s in scores) / len(scores)


def aggregate(
    instance_scores: Sequence[InstanceScore],
    dialogue_scores: Sequence[DialogueScore],
    variant: str,
    config: Optional[BenchConfig] = None,
    dropped: int = 0,
    name: str = "",
    instances_fingerprint: str = "",
    dropped_ground_truth: int = 0,
) -> MetricReport:
    if not instance_scores or not dialogue_scores:
        raise EmptyEvaluationError("cannot aggregate an empty instance set")
    config = config or BenchConfig()
    cutoffs = sorted(instance_scores[0].recall_at)
    n = len(instance_scores)
    recall, with_drops, hit_rate = {}, {}, {}
    for k in cutoffs:
        if config.recall_average == "micro":
            total_gt = sum(s.ground_truth_size for s in instance_scores)
            hits = sum(s.hits_at[k] for s in instance_scores)
            value = hits / total_gt
            # dropped instances missed every one of their ground-truth items
            with_drops[str(k)] = hits / (total_gt + dropped_ground_truth)
        else:
            total = math.fsum(s.recall_at[k] for s in instance_scores)
            value = total / n
            with_drops[str(k)] = total / (n + dropped)
        recall[str(k)] = value
        hit_rate[str(k)] = sum(1 for s in instance_scores if s.hits_at[k] > 0) / n
    effective = {**config.subset(PREPROCESSING_KEYS + SCORING_KEYS), "variant": variant}
    return MetricReport(
        variant=variant,
        cutoffs=cutoffs,
        recall_average=config.recall_average,
        recall_at=recall,
        recall_with_drops=with_drops,
        hit_rate_at=hit_rate,
        success_rate=sum(1 for s in dialogue_scores if s.success) / len(dialogue_scores),
        sr_cutoff=config.sr_cutoff,
        rdl=math.fsum(s.value for s in dialogue_scores) / len(dialogue_scores),
        rdl_denominator=config.rdl_denominator,
        instance_count=n,
        dialogue_count=len(dialogue_scores),
        dropped_instances=dropped,
        dropped_ground_truth=dropped_ground_truth,
        missing_feedback=sum(s.missing_feedback for s in dialogue_scores),
        name=name,
        config=effective,
        config_fingerprint=config_fingerprint(effective),
        instances_fingerprint=instances_fingerprint,
    )


def score(
    instances: Sequence[EvaluationInstance],
    preds: Mapping[str, RankedPrediction],
    config: Optional[BenchConfig] = None,
    variant: Optional[str] = None,
    dropped: int = 0,
    name: str = "",
    instances_fingerprint: str = "",
    dropped_ground_truth: int = 0,
) -> MetricReport:
    """Full scoring pass: per-instance recall plus per-dialogue SR and RDL."""
    config = config or BenchConfig()
    if not instances:
        raise EmptyEvaluationError("instance set is empty")
    check_predictions(preds, instances)
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        instance_scores = list(pool.map(lambda inst: score_instance(preds[inst.instance_id], inst, config.k), instances))
    dialogue_scores = score_dialogues(preds, instances, config.sr_cutoff, config.rdl_denominator, threads=config.threads)
    report = aggregate(instance_scores, dialogue_scores, variant or instances[0].variant, config, dropped, name,
                       instances_fingerprint, dropped_ground_truth)
    if report.missing_feedback:
        log.warning(f"{report.missing_feedback} hits had no seeker form and earned no reward")
    log.info(f"Scored {report.instance_count} instances in {report.dialogue_count} dialogues: "
             + ", ".join(f"R@{k}={v:.3f}" for k, v in report.recall_at.items())
             + f", SR={report.success_rate:.3f}, RDL={report.rdl:.3f}")
    return report


# === Prediction files ===

def write_predictions(path: Path, predictions: Iterable[RankedPrediction], header: Optional[Dict[str, Any]]) -> int:
    return write_jsonl(path, header, (p.to_record() for p in predictions))


def read_predictions(path: Path) -> Tuple[Optional[Dict[str, Any]], Dict[str, RankedPrediction]]:
    """Headerless files from external models are accepted."""
    header, records = read_jsonl(path)
    if header is not None and header.get("artifact_type") != PREDICTION_ARTIFACT_TYPE:
        raise InstanceFileError(f"{path}: expected {PREDICTION_ARTIFACT_TYPE}, found {header.get('artifact_type')}")
    preds: Dict[str, RankedPrediction] = {}
    duplicates: List[str] = []
    dropped_negative = 0
    for line_no, record in records:
        ranking = record.get("ranking")
        if isinstance(ranking, list):
            kept = [v for v in ranking if not (isinstance(v, int) and v < 0) and not (isinstance(v, str) and is_masked(v))]
            dropped_negative += len(ranking) - len(kept)
            record = {**record, "ranking": kept}
        try:
            pred = RankedPrediction.model_validate(record)
        except ValidationError as e:
            first = e.errors(include_url=False)[0]
            raise InstanceFileError(f"{path}:{line_no}: invalid prediction: {first.get('msg')}", path=str(path), line=line_no)
        if pred.instance_id in preds:
            duplicates.append(pred.instance_id)
        preds[pred.instance_id] = pred
    if duplicates:
        raise PredictionMismatchError(f"{path}: duplicate predictions for {', '.join(duplicates[:MAX_LISTED_IDS])}",
                                      duplicates=duplicates)
    if dropped_negative:
        log.warning(f"{path}: removed {dropped_negative} negative ids from rankings")
    return header, preds
