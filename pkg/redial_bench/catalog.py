"""catalog.py v1.0.0 - Method-specific item catalogs
Loads the items a method can resolve, hands out unique negative ids for the
ones it cannot, and reports how much of the test data and corpus is covered.
Explicit lookup tables only, no fuzzy matching."""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from redial_bench.artifacts import read_lines
from redial_bench.config import FIRST_NEGATIVE_ID
from redial_bench.errors import CatalogError
from redial_bench.logs import get_logger

VERSION, ARTIFACT_TYPE = "1.0.0", "catalog_coverage"
HEADER_PREFIX = "catalog_id="
log = get_logger(__name__)


@dataclass(frozen=True)
class ItemCatalog:
    catalog_id: str
    entries: Dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(set(self.entries.values()))

    def __contains__(self, mention_id: object) -> bool:
        return mention_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def canonical(self, mention_id: str) -> str:
        return str(self.entries[mention_id])


class NegativeIdAllocator:
    """Strictly decreasing ids starting at -101; never repeats within a run."""

    def __init__(self, start: int = FIRST_NEGATIVE_ID):
        if start > FIRST_NEGATIVE_ID:
            raise ValueError(f"negative ids must start at or below {FIRST_NEGATIVE_ID}")
        self.next = start
        self.allocated = 0

    def allocate(self) -> int:
        value = self.next
        self.next -= 1
        self.allocated += 1
        return value


@dataclass(frozen=True)
class CoverageReport:
    catalog_id: str
    test_data_pct: float
    items_pct: float
    lenient_test_data_pct: float
    evaluable_instances: int
    total_instances: int
    covered_items: int
    total_items: int

    def to_record(self) -> Dict[str, Any]:
        return {"artifact_type": ARTIFACT_TYPE, "version": VERSION, **self.__dict__}


def _canonical_id(raw: str, mention_id: str, where: str) -> int:
    try:
        value = int(raw.strip())
    except ValueError:
        raise CatalogError(f"{where}: canonical id {raw!r} for mention {mention_id} is not an integer",
                           mention_id=mention_id)
    if value < 0:
        raise CatalogError(f"{where}: canonical id {value} for mention {mention_id} is negative", mention_id=mention_id)
    return value


def load_catalog(path: Path) -> ItemCatalog:
    """Header `catalog_id=<name>`, then `mention_id,canonical_id` rows or bare `mention_id` rows."""
    path = Path(path)
    lines = read_lines(path)
    bad = next((line_no for line_no, line in lines if line is None), None)
    if bad is not None:
        raise CatalogError(f"{path}:{bad}: not valid UTF-8", line=bad)
    catalog_id = path.stem
    if lines and lines[0][1].startswith(HEADER_PREFIX):
        catalog_id = lines[0][1][len(HEADER_PREFIX):].strip() or catalog_id
        lines = lines[1:]
    entries: Dict[str, int] = {}
    for (line_no, _), row in zip(lines, csv.reader(line for _, line in lines)):
        where = f"{path}:{line_no}"
        cells = [c.strip() for c in row]
        if not cells or not cells[0] or len(cells) > 2:
            raise CatalogError(f"{where}: expected 'mention_id' or 'mention_id,canonical_id'", line=line_no)
        mention_id = cells[0]
        if mention_id in entries:
            raise CatalogError(f"{where}: duplicate mention id {mention_id}", mention_id=mention_id, line=line_no)
        entries[mention_id] = _canonical_id(cells[1] if len(cells) == 2 else mention_id, mention_id, where)
    log.info(f"Loaded catalog '{catalog_id}' with {len(entries)} entries ({len(set(entries.values()))} canonical ids)")
    return ItemCatalog(catalog_id, entries)


def identity_catalog(items: Iterable[str], catalog_id: str = "identity") -> ItemCatalog:
    """Every numeric corpus item resolves to itself."""
    entries = {}
    for item in items:
        try:
            entries[item] = int(item)
        except ValueError:
            log.warning(f"Identity catalog skips non-numeric item {item!r}")
    return ItemCatalog(catalog_id, entries)


def write_catalog(path: Path, cat: ItemCatalog) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{HEADER_PREFIX}{cat.catalog_id}\n")
        for mention_id in sorted(cat.entries, key=lambda m: (len(m), m)):
            f.write(f"{mention_id},{cat.entries[mention_id]}\n")


def _fraction(part: int, whole: int) -> float:
    return part / whole if whole else 0.0


def compute_coverage(instances: List[Any], corpus_items: Iterable[str], cat: ItemCatalog) -> CoverageReport:
    """Strict rule: an instance is evaluable iff one of its ground-truth items is covered.
    Lenient rule: every instance stays, uncovered items count as misses."""
    items = set(corpus_items)
    covered_items = sum(1 for item in items if item in cat)
    evaluable = sum(1 for inst in instances if any(item in cat for item in inst.ground_truth))
    total = len(instances)
    return CoverageReport(
        catalog_id=cat.catalog_id,
        test_data_pct=_fraction(evaluable, total),
        items_pct=_fraction(covered_items, len(items)),
        lenient_test_data_pct=1.0 if total else 0.0,
        evaluable_instances=evaluable,
        total_instances=total,
        covered_items=covered_items,
        total_items=len(items),
    )
