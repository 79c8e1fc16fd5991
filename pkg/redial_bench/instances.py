"""instances.py v1.0.0 - Evaluation instance construction
Merges consecutive same-speaker messages into turns, turns every recommender
turn with mentions and prior context into an evaluation instance, derives the
deduplicated variant and applies catalog masking. Rule-based and deterministic."""

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, ValidationError

from redial_bench.artifacts import expect_artifact, read_jsonl, write_jsonl
from redial_bench.catalog import ItemCatalog, NegativeIdAllocator
from redial_bench.corpus import MENTION, MentionForm, RawDialogue, Suggested, mention_ids
from redial_bench.errors import InstanceFileError
from redial_bench.logs import get_logger

VERSION, ARTIFACT_TYPE = "1.0.0", "evaluation_instances"
DROP_ARTIFACT_TYPE = "dedup_drop_log"
log = get_logger(__name__)

SEEKER, RECOMMENDER = "seeker", "recommender"
Role = Literal["seeker", "recommender"]
Variant = Literal["standard", "dedup"]


class Turn(BaseModel):
    """Consecutive messages of one speaker, merged."""

    model_config = ConfigDict(frozen=True)

    role: Role
    text: str
    mentions: Tuple[str, ...] = ()
    source_message_ids: Tuple[int, ...] = ()

    def to_record(self) -> Dict[str, Any]:
        return {"role": self.role, "text": self.text, "mentions": list(self.mentions)}


class EvaluationInstance(BaseModel):
    """One recommender turn paired with everything said before it."""

    model_config = ConfigDict(frozen=True)

    instance_id: str
    dialogue_id: str
    variant: Variant = "standard"
    turn_index: int
    context: Tuple[Turn, ...]
    ground_truth: Tuple[str, ...]
    dropped_ground_truth: Tuple[str, ...] = ()
    dialogue_turns: int
    recommender_turns: int
    titles: Dict[str, str] = {}
    feedback: Dict[str, MentionForm] = {}

    def context_mentions(self, roles: Optional[Set[str]] = None) -> List[str]:
        """All context mentions in order of occurrence, optionally for some roles only."""
        return [m for turn in self.context if roles is None or turn.role in roles for m in turn.mentions]

    def context_items(self) -> Set[str]:
        return set(self.context_mentions())

    def overlap(self) -> List[str]:
        """Ground-truth items already mentioned in the context."""
        seen = self.context_items()
        return [item for item in self.ground_truth if item in seen]

    def to_record(self) -> Dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "dialogue_id": self.dialogue_id,
            "variant": self.variant,
            "turn_index": self.turn_index,
            "context": [turn.to_record() for turn in self.context],
            "ground_truth": list(self.ground_truth),
            "dropped_ground_truth": list(self.dropped_ground_truth),
            "dialogue_turns": self.dialogue_turns,
            "recommender_turns": self.recommender_turns,
            "titles": dict(self.titles),
            "feedback": {item: form.model_dump(mode="json") for item, form in self.feedback.items()},
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "EvaluationInstance":
        return cls.model_validate(record)


@dataclass(frozen=True)
class Drop:
    """An instance removed from the dedup variant because nothing novel was left."""

    instance_id: str
    dialogue_id: str
    dropped_ground_truth: Tuple[str, ...]

    def to_record(self) -> Dict[str, Any]:
        return {"instance_id": self.instance_id, "dialogue_id": self.dialogue_id,
                "dropped_ground_truth": list(self.dropped_ground_truth)}


@dataclass
class TestVariant:
    name: str
    instances: List[EvaluationInstance] = field(default_factory=list)
    drop_log: List[Drop] = field(default_factory=list)

    __test__ = False  # not a pytest class

    def __len__(self) -> int:
        return len(self.instances)

    def ids(self) -> List[str]:
        return [inst.instance_id for inst in self.instances]


def merge_turns(d: RawDialogue) -> List[Turn]:
    """Initiator = seeker, everyone else = recommender; same-role runs are joined with a space."""
    turns: List[Turn] = []
    role, texts, ids = None, [], []

    def flush():
        if role is not None:
            text = " ".join(texts)
            turns.append(Turn(role=role, text=text, mentions=tuple(mention_ids(text)), source_message_ids=tuple(ids)))

    for msg in d.messages:
        msg_role = SEEKER if msg.sender_worker_id == d.initiator_worker_id else RECOMMENDER
        if msg_role != role:
            flush()
            role, texts, ids = msg_role, [], []
        texts.append(msg.text)
        ids.append(msg.message_id)
    flush()
    return turns


def recommendation_turns(turns: Sequence[Turn]) -> List[int]:
    """Indices of recommender turns with at least one mention and some prior context."""
    return [i for i, t in enumerate(turns) if i > 0 and t.role == RECOMMENDER and t.mentions]


def _unique(items: Iterable[str]) -> List[str]:
    seen: Set[str] = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def build_instances(
    turns: Sequence[Turn],
    dialogue_id: str,
    *,
    titles: Optional[Dict[str, str]] = None,
    seeker_forms: Optional[Dict[str, MentionForm]] = None,
    keep: Optional[Callable[[str], bool]] = None,
) -> List[EvaluationInstance]:
    """Standard instances for one dialogue, in turn order."""
    titles, seeker_forms = titles or {}, seeker_forms or {}
    recommender_turns = sum(1 for t in turns if t.role == RECOMMENDER)
    out = []
    for idx in recommendation_turns(turns):
        ground_truth = _unique(m for m in turns[idx].mentions if keep is None or keep(m))
        if not ground_truth:
            continue
        context = tuple(turns[:idx])
        used = {m for t in context for m in t.mentions} | set(ground_truth)
        out.append(EvaluationInstance(
            instance_id=f"{dialogue_id}#{idx}",
            dialogue_id=dialogue_id,
            turn_index=idx,
            context=context,
            ground_truth=tuple(ground_truth),
            dialogue_turns=len(turns),
            recommender_turns=recommender_turns,
            titles={m: titles[m] for m in sorted(used) if m in titles},
            feedback={m: seeker_forms[m] for m in ground_truth if m in seeker_forms},
        ))
    return out


def suggested_only(d: RawDialogue) -> Callable[[str], bool]:
    """Keep a mention only if the recommender's (else the seeker's) form marks it suggested."""
    def keep(mention_id: str) -> bool:
        form = d.respondent_forms.get(mention_id) or d.initiator_forms.get(mention_id)
        return form is not None and form.suggested == Suggested.YES
    return keep


def build_dialogue_instances(d: RawDialogue, gt_mode: str = "mentioned") -> List[EvaluationInstance]:
    keep = suggested_only(d) if gt_mode == "suggested-only" else None
    return build_instances(merge_turns(d), d.conversation_id, titles=d.movie_mentions,
                           seeker_forms=d.initiator_forms, keep=keep)


def deduplicate(inst: EvaluationInstance) -> Union[EvaluationInstance, Drop]:
    overlap = inst.overlap()
    if not overlap:
        return inst.model_copy(update={"variant": "dedup"})
    removed = set(overlap)
    remaining = tuple(item for item in inst.ground_truth if item not in removed)
    dropped = inst.dropped_ground_truth + tuple(overlap)
    if not remaining:
        return Drop(inst.instance_id, inst.dialogue_id, dropped)
    return inst.model_copy(update={
        "variant": "dedup",
        "ground_truth": remaining,
        "dropped_ground_truth": dropped,
        "feedback": {k: v for k, v in inst.feedback.items() if k not in removed},
    })


def deduplicate_variant(standard: TestVariant) -> TestVariant:
    dedup = TestVariant("dedup")
    for inst in standard.instances:
        result = deduplicate(inst)
        if isinstance(result, Drop):
            dedup.drop_log.append(result)
        else:
            dedup.instances.append(result)
    log.info(f"Dedup variant: {len(dedup)} of {len(standard)} instances kept, {len(dedup.drop_log)} dropped")
    return dedup


def build_variants(dialogues: Sequence[RawDialogue], gt_mode: str = "mentioned", threads: int = 1) -> Tuple[TestVariant, TestVariant]:
    """Standard and dedup variants in corpus order."""
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_dialogue = list(pool.map(lambda d: build_dialogue_instances(d, gt_mode), dialogues))
    standard = TestVariant("standard", [inst for group in per_dialogue for inst in group])
    log.info(f"Built {len(standard)} standard instances from {len(dialogues)} dialogues")
    return standard, deduplicate_variant(standard)


def _mask_text(text: str, covered: ItemCatalog, titles: Dict[str, str]) -> str:
    def replace(m: re.Match) -> str:
        mid = m.group(1)
        return m.group(0) if mid in covered else titles.get(mid, "")
    return MENTION.sub(replace, text)


def apply_catalog_mask(inst: EvaluationInstance, cat: ItemCatalog, neg: NegativeIdAllocator) -> EvaluationInstance:
    """Drop uncovered context mentions (title kept in text); uncovered ground truth gets a fresh negative id."""
    context = tuple(
        turn.model_copy(update={
            "text": _mask_text(turn.text, cat, inst.titles),
            "mentions": tuple(cat.canonical(m) for m in turn.mentions if m in cat),
        })
        for turn in inst.context
    )
    ground_truth: List[str] = []
    for item in inst.ground_truth:
        mapped = cat.canonical(item) if item in cat else str(neg.allocate())
        if mapped in ground_truth:
            # many-to-one catalog: the second item is unresolvable, not merged
            log.debug(f"{inst.instance_id}: {item} collides with {mapped}, masking it")
            mapped = str(neg.allocate())
        ground_truth.append(mapped)
    feedback: Dict[str, MentionForm] = {}
    for item, form in inst.feedback.items():
        if item in cat:
            feedback.setdefault(cat.canonical(item), form)
    return inst.model_copy(update={"context": context, "ground_truth": tuple(ground_truth), "feedback": feedback})


def mask_variant(variant: TestVariant, cat: ItemCatalog, neg: Optional[NegativeIdAllocator] = None) -> TestVariant:
    """Sequential in corpus order so negative ids are reproducible."""
    neg = neg or NegativeIdAllocator()
    masked = TestVariant(variant.name, [apply_catalog_mask(inst, cat, neg) for inst in variant.instances], list(variant.drop_log))
    log.info(f"Masked {len(masked)} instances with catalog '{cat.catalog_id}', {neg.allocated} negative ids allocated")
    return masked


# === Instance files ===

def write_instances(path: Path, variant: TestVariant, header: Dict[str, Any]) -> int:
    return write_jsonl(path, header, (inst.to_record() for inst in variant.instances))


def read_instances(path: Path) -> Tuple[Dict[str, Any], TestVariant]:
    header, records = read_jsonl(path)
    header = expect_artifact(header, ARTIFACT_TYPE, path)
    instances = []
    for line_no, record in records:
        try:
            instances.append(EvaluationInstance.from_record(record))
        except ValidationError as e:
            raise InstanceFileError(f"{path}:{line_no}: invalid instance ({e.error_count()} errors)", path=str(path), line=line_no)
    name = header.get("config", {}).get("variant") or (instances[0].variant if instances else "standard")
    return header, TestVariant(name, instances)


def write_drop_log(path: Path, variant: TestVariant, header: Dict[str, Any]) -> int:
    return write_jsonl(path, header, (drop.to_record() for drop in variant.drop_log))


def read_drop_log(path: Path) -> List[Drop]:
    header, records = read_jsonl(path)
    expect_artifact(header, DROP_ARTIFACT_TYPE, path)
    return [Drop(r["instance_id"], r["dialogue_id"], tuple(r.get("dropped_ground_truth", []))) for _, r in records]
