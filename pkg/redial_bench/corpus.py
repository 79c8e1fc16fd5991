"""corpus.py v1.0.0 - ReDial corpus ingestion
Parses line-delimited ReDial records into immutable dialogues, extracts
inline "@<digits>" movie mentions and validates dialogues without mutating them.
Malformed lines are reported with their line number, never silently dropped."""

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from tqdm import tqdm

from redial_bench.artifacts import read_lines
from redial_bench.errors import CorpusReadError, InstanceFileError
from redial_bench.logs import get_logger, progress_enabled

VERSION, ARTIFACT_TYPE = "1.0.0", "redial_corpus"
log = get_logger(__name__)

MENTION = re.compile(r"@(\d+)")

# Issue codes reported by validate_dialogue
DANGLING_MENTION = "dangling_mention"   # token without a movieMentions entry
UNUSED_MENTION = "unused_mention"       # movieMentions entry never used in text
UNKNOWN_SENDER = "unknown_sender"       # sender is neither worker
EMPTY_TEXT = "empty_text"
ISSUE_CODES = (DANGLING_MENTION, UNUSED_MENTION, UNKNOWN_SENDER, EMPTY_TEXT)


class Suggested(IntEnum):
    NO = 0
    YES = 1


class Answer(IntEnum):
    NO = 0
    YES = 1
    DID_NOT_SAY = 2


class MentionForm(BaseModel):
    """Questionnaire answers about one mentioned movie."""

    model_config = ConfigDict(frozen=True)

    suggested: Suggested
    seen: Answer
    liked: Answer


class RawMessage(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    message_id: int = Field(alias="messageId")
    sender_worker_id: int = Field(alias="senderWorkerId")
    text: str
    time_offset: int = Field(alias="timeOffset")


def _as_map(value: Any) -> Any:
    # the release writes an empty map as []
    if value is None or value == []:
        return {}
    return value


class RawDialogue(BaseModel):
    """One seeker/recommender conversation exactly as released."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    conversation_id: str = Field(alias="conversationId")
    initiator_worker_id: int = Field(alias="initiatorWorkerId")
    respondent_worker_id: int = Field(alias="respondentWorkerId")
    messages: Tuple[RawMessage, ...]
    movie_mentions: Dict[str, str] = Field(default_factory=dict, alias="movieMentions")
    initiator_forms: Dict[str, MentionForm] = Field(default_factory=dict, alias="initiatorQuestions")
    respondent_forms: Dict[str, MentionForm] = Field(default_factory=dict, alias="respondentQuestions")

    @field_validator("conversation_id", mode="before")
    @classmethod
    def _id_as_string(cls, value: Any) -> Any:
        return str(value) if isinstance(value, int) else value

    @field_validator("movie_mentions", mode="before")
    @classmethod
    def _titles(cls, value: Any) -> Any:
        value = _as_map(value)
        if isinstance(value, dict):
            return {str(k): ("" if v is None else v) for k, v in value.items()}
        return value

    @field_validator("initiator_forms", "respondent_forms", mode="before")
    @classmethod
    def _forms(cls, value: Any) -> Any:
        value = _as_map(value)
        if isinstance(value, dict):
            return {str(k): v for k, v in value.items()}
        return value

    @model_validator(mode="after")
    def _check(self) -> "RawDialogue":
        if not self.messages:
            raise ValueError("dialogue has no messages")
        if self.initiator_worker_id == self.respondent_worker_id:
            raise ValueError("initiator and respondent are the same worker")
        return self

    def title(self, mention_id: str) -> str:
        return self.movie_mentions.get(mention_id, "")


class Mention(NamedTuple):
    mention_id: str
    span: Tuple[int, int]


@dataclass(frozen=True)
class ParseError:
    line: int
    message: str


@dataclass(frozen=True)
class ParsedCorpus:
    split: str
    dialogues: List[RawDialogue] = field(default_factory=list)
    errors: List[ParseError] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.dialogues)

    def __iter__(self):
        return iter(self.dialogues)


class Issue(NamedTuple):
    code: str
    message_id: Optional[int]
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    conversation_id: str
    issues: Tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> List[str]:
        return [issue.code for issue in self.issues]


def extract_mentions(text: str) -> List[Mention]:
    """Every maximal "@<digits>" token, left to right. Spans are character offsets."""
    return [Mention(m.group(1), m.span()) for m in MENTION.finditer(text)]


def mention_ids(text: str) -> List[str]:
    return [m.group(1) for m in MENTION.finditer(text)]


def parse_record(record: Dict[str, Any]) -> RawDialogue:
    return RawDialogue.model_validate(record)


def _parse_line(item: Tuple[int, Optional[str]]) -> Union[RawDialogue, ParseError]:
    line_no, line = item
    if line is None:
        return ParseError(line_no, "not valid UTF-8")
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        return ParseError(line_no, f"invalid JSON: {e.msg}")
    if not isinstance(record, dict):
        return ParseError(line_no, "record is not a JSON object")
    try:
        return parse_record(record)
    except ValidationError as e:
        first = e.errors(include_url=False)[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        return ParseError(line_no, f"{where}: {first.get('msg')}" if where else str(first.get("msg")))


def parse_corpus(path: Path, split: str, threads: int = 1) -> ParsedCorpus:
    """Parse one split. Output order equals file order regardless of threads."""
    try:
        lines = read_lines(Path(path))
    except (OSError, InstanceFileError) as e:
        raise CorpusReadError(f"cannot read corpus {path}: {e}", path=str(path))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(tqdm(pool.map(_parse_line, lines), total=len(lines), desc=f"parse {split}",
                            disable=not progress_enabled(), leave=False))
    dialogues = [r for r in results if isinstance(r, RawDialogue)]
    errors = [r for r in results if isinstance(r, ParseError)]
    for err in errors:
        log.warning(f"{path}:{err.line}: {err.message}")
    log.info(f"Parsed {len(dialogues)} dialogues from {path} ({split}), {len(errors)} malformed lines")
    return ParsedCorpus(split, dialogues, errors)


def dialogue_to_record(d: RawDialogue) -> Dict[str, Any]:
    """Serialize back to the release's field names."""
    record = d.model_dump(by_alias=True, mode="json")
    record["messages"] = list(record["messages"])
    return record


def validate_dialogue(d: RawDialogue) -> ValidationReport:
    issues: List[Issue] = []
    workers = {d.initiator_worker_id, d.respondent_worker_id}
    used: Set[str] = set()
    for msg in d.messages:
        if msg.sender_worker_id not in workers:
            issues.append(Issue(UNKNOWN_SENDER, msg.message_id, str(msg.sender_worker_id)))
        if not msg.text.strip():
            issues.append(Issue(EMPTY_TEXT, msg.message_id, ""))
        for mid in mention_ids(msg.text):
            used.add(mid)
            if mid not in d.movie_mentions:
                issues.append(Issue(DANGLING_MENTION, msg.message_id, mid))
    for mid in sorted(set(d.movie_mentions) - used, key=item_sort_key):
        issues.append(Issue(UNUSED_MENTION, None, mid))
    return ValidationReport(d.conversation_id, tuple(issues))


def issue_histogram(reports: Iterable[ValidationReport]) -> Dict[str, int]:
    counts = Counter(code for r in reports for code in r.codes())
    return {code: counts.get(code, 0) for code in ISSUE_CODES}


def filter_valid(dialogues: Sequence[RawDialogue], strict: bool) -> Tuple[List[RawDialogue], List[ValidationReport]]:
    """Validate every dialogue; in strict mode drop the ones with issues."""
    reports = [validate_dialogue(d) for d in dialogues]
    flagged = sum(1 for r in reports if not r.ok)
    if flagged:
        action = "dropping" if strict else "keeping"
        log.info(f"{flagged} dialogues have validation issues, {action} them: {issue_histogram(reports)}")
    if not strict:
        return list(dialogues), reports
    return [d for d, r in zip(dialogues, reports) if r.ok], reports


def corpus_items(dialogues: Iterable[RawDialogue]) -> Set[str]:
    """Distinct mention ids used in message text."""
    return {mid for d in dialogues for msg in d.messages for mid in mention_ids(msg.text)}


def item_sort_key(item_id: str) -> Tuple[int, int, str]:
    """Numeric ids in numeric order, anything else after them."""
    try:
        return (0, int(item_id), "")
    except ValueError:
        return (1, 0, item_id)
