"""stats.py v1.0.0 - Descriptive dataset statistics
Per-split conversation / instance / mention counts and the repetition rate
(share of instances whose ground truth already appears in the context)."""

import io
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Set, Tuple

import pandas as pd
from rich.console import Console
from rich.table import Table

from redial_bench.artifacts import make_header
from redial_bench.corpus import RawDialogue, mention_ids
from redial_bench.instances import EvaluationInstance, TestVariant, merge_turns, recommendation_turns

VERSION, ARTIFACT_TYPE = "1.0.0", "dataset_statistics"
TOTAL = "total"
COLUMNS = ["split", "conversations", "rec_instances", "movie_mentions", "raw_mention_tokens", "unique_movies"]


@dataclass(frozen=True)
class StatsRow:
    split: str
    conversations: int = 0
    rec_instances: int = 0
    movie_mentions: int = 0        # ground-truth mention occurrences of rec-instances
    raw_mention_tokens: int = 0    # every "@id" token in every message
    unique_movies: int = 0


@dataclass(frozen=True)
class StatsTable:
    rows: List[StatsRow]

    def row(self, split: str) -> StatsRow:
        return next(r for r in self.rows if r.split == split)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=COLUMNS)

    def write_csv(self, path: Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def render(self) -> str:
        table = Table(title="Dataset statistics")
        for col in COLUMNS:
            table.add_column(col, justify="left" if col == "split" else "right")
        for r in self.rows:
            table.add_row(r.split, *(f"{getattr(r, c):,}" for c in COLUMNS[1:]))
        buf = io.StringIO()
        Console(file=buf, width=120, color_system=None).print(table)
        return buf.getvalue()

    def to_record(self, config: Dict[str, Any], fingerprint: str, repetition: Mapping[str, float]) -> Dict[str, Any]:
        """Sidecar JSON: the table plus the config that produced it."""
        return make_header(ARTIFACT_TYPE, VERSION, config, fingerprint, rows=[asdict(r) for r in self.rows],
                           repetition_rate=dict(repetition))


def _split_row(split: str, dialogues: Sequence[RawDialogue], instances: Sequence[EvaluationInstance]) -> Tuple[StatsRow, Set[str]]:
    by_id = {inst.instance_id: inst for inst in instances}
    gt_occurrences, raw_tokens, unique = 0, 0, set()
    for d in dialogues:
        for msg in d.messages:
            ids = mention_ids(msg.text)
            raw_tokens += len(ids)
            unique.update(ids)
        turns = merge_turns(d)
        for idx in recommendation_turns(turns):
            inst = by_id.get(f"{d.conversation_id}#{idx}")
            if inst is not None:
                kept = set(inst.ground_truth)
                gt_occurrences += sum(1 for m in turns[idx].mentions if m in kept)
    row = StatsRow(split, len(dialogues), len(instances), gt_occurrences, raw_tokens, len(unique))
    return row, unique


def corpus_stats(corpora: Mapping[str, Sequence[RawDialogue]], instances: Mapping[str, Sequence[EvaluationInstance]]) -> StatsTable:
    """One row per split, in the given order, plus a totals row."""
    rows, all_items = [], set()
    for split, dialogues in corpora.items():
        row, items = _split_row(split, dialogues, instances.get(split, []))
        rows.append(row)
        all_items |= items
    rows.append(StatsRow(
        TOTAL,
        sum(r.conversations for r in rows),
        sum(r.rec_instances for r in rows),
        sum(r.movie_mentions for r in rows),
        sum(r.raw_mention_tokens for r in rows),
        len(all_items),
    ))
    return StatsTable(rows)


def repetition_rate(instances: Sequence[EvaluationInstance]) -> float:
    if not instances:
        return 0.0
    return sum(1 for inst in instances if inst.overlap()) / len(instances)


def repetition_consistency(standard: TestVariant, dedup: TestVariant) -> List[str]:
    """Instance ids where "ground truth overlaps context" disagrees with "dedup changed it"."""
    dropped = {drop.instance_id for drop in dedup.drop_log}
    kept: Dict[str, EvaluationInstance] = {inst.instance_id: inst for inst in dedup.instances}
    bad = []
    for inst in standard.instances:
        after = kept.get(inst.instance_id)
        changed = inst.instance_id in dropped or (after is not None and len(after.ground_truth) < len(inst.ground_truth))
        if bool(inst.overlap()) != changed:
            bad.append(inst.instance_id)
    return bad
