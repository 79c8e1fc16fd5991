"""baselines.py v1.0.0 - Reference recommenders
naive: context items in reverse order of their most recent mention (no padding).
popularity: top-k training ground-truth items, independent of the context.
Both are pure functions of their inputs."""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from redial_bench.config import BenchConfig
from redial_bench.corpus import item_sort_key
from redial_bench.errors import UsageError
from redial_bench.instances import SEEKER, EvaluationInstance
from redial_bench.logs import get_logger
from redial_bench.metrics import RankedPrediction, is_masked

VERSION = "1.0.0"
BASELINES = ("naive", "popularity")
log = get_logger(__name__)


def naive_recommend(inst: EvaluationInstance, scope: str = "both-speakers") -> List[str]:
    roles = {SEEKER} if scope == "seeker-only" else None
    ranking: List[str] = []
    seen = set()
    for item in reversed(inst.context_mentions(roles)):
        if item not in seen:
            seen.add(item)
            ranking.append(item)
    return ranking


@dataclass(frozen=True)
class PopularityModel:
    items: Tuple[str, ...] = ()
    counts: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def fit(cls, train_instances: Iterable[EvaluationInstance]) -> "PopularityModel":
        """Ground-truth frequency over training instances; ties by ascending id."""
        counts = Counter(item for inst in train_instances for item in inst.ground_truth if not is_masked(item))
        order = sorted(counts, key=lambda item: (-counts[item], item_sort_key(item)))
        log.info(f"Popularity model fitted on {len(counts)} items")
        return cls(tuple(order), dict(counts))


def popularity_recommend(model: PopularityModel, inst: Optional[EvaluationInstance], k: int) -> List[str]:
    if k <= 0:
        raise UsageError(f"popularity baseline needs k >= 1, got {k}")
    return list(model.items[:k])


def predict_all(
    name: str,
    instances: Sequence[EvaluationInstance],
    config: Optional[BenchConfig] = None,
    model: Optional[PopularityModel] = None,
) -> List[RankedPrediction]:
    config = config or BenchConfig()
    if name == "naive":
        return [RankedPrediction(instance_id=inst.instance_id, ranking=tuple(naive_recommend(inst, config.naive_scope)))
                for inst in instances]
    if name == "popularity":
        if model is None:
            raise UsageError("popularity baseline needs training instances")
        k = max(config.k)
        return [RankedPrediction(instance_id=inst.instance_id, ranking=tuple(popularity_recommend(model, inst, k)))
                for inst in instances]
    raise UsageError(f"unknown baseline {name!r}, expected one of {', '.join(BASELINES)}")
