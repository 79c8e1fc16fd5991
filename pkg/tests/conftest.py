import json
import random
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pytest

from redial_bench.corpus import MentionForm, RawDialogue, parse_record
from redial_bench.instances import EvaluationInstance, Turn
from redial_bench.metrics import RankedPrediction

SEEKER_ID, RECOMMENDER_ID = 1, 2

POLICE_ACADEMY = "111776"
SUPER_TROOPERS = "84779"
POLICE_ACADEMY_2 = "204870"


def form(suggested: int = 0, seen: int = 2, liked: int = 2) -> Dict[str, int]:
    return {"suggested": suggested, "seen": seen, "liked": liked}


def record(
    conversation_id: str,
    turns: Sequence[Tuple[str, str]],
    titles: Optional[Dict[str, str]] = None,
    seeker_forms: Optional[Dict[str, Dict[str, int]]] = None,
    respondent_forms: Optional[Dict[str, Dict[str, int]]] = None,
) -> Dict:
    """turns: ("S" | "R", text) in order; message ids start at 100."""
    messages = [
        {"messageId": 100 + i, "text": text, "timeOffset": 10 * i,
         "senderWorkerId": SEEKER_ID if who == "S" else RECOMMENDER_ID}
        for i, (who, text) in enumerate(turns)
    ]
    return {
        "conversationId": conversation_id,
        "initiatorWorkerId": SEEKER_ID,
        "respondentWorkerId": RECOMMENDER_ID,
        "messages": messages,
        "movieMentions": titles or {},
        "initiatorQuestions": seeker_forms or {},
        "respondentQuestions": respondent_forms or {},
    }


def example_record() -> Dict:
    """Two recommendations; the second repeats a movie the seeker already mentioned."""
    return record(
        "20001",
        [
            ("S", f"Hi! I'm looking for a funny movie like @{POLICE_ACADEMY}"),
            ("R", f"Have you seen @{SUPER_TROOPERS} ?"),
            ("S", f"No, I haven't. I liked @{POLICE_ACADEMY} a lot"),
            ("R", f"Then try @{POLICE_ACADEMY_2} or rewatch @{POLICE_ACADEMY}"),
        ],
        titles={
            POLICE_ACADEMY: "Police Academy (1984)",
            SUPER_TROOPERS: "Super Troopers (2001)",
            POLICE_ACADEMY_2: "Police Academy 2: Their First Assignment (1985)",
        },
        seeker_forms={
            POLICE_ACADEMY: form(0, 1, 1),
            SUPER_TROOPERS: form(1, 0, 2),
            POLICE_ACADEMY_2: form(1, 1, 0),
        },
        respondent_forms={
            POLICE_ACADEMY: form(0, 1, 1),
            SUPER_TROOPERS: form(1, 2, 2),
            POLICE_ACADEMY_2: form(1, 2, 2),
        },
    )


@pytest.fixture
def example_dialogue() -> RawDialogue:
    return parse_record(example_record())


def write_corpus(path: Path, records: Sequence[Dict], extra_lines: Sequence[str] = ()) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
        for line in extra_lines:
            f.write(line + "\n")
    return path


def random_records(n: int, seed: int = 7, items: int = 40) -> List[Dict]:
    """Synthetic dialogues with frequent repetition of earlier mentions."""
    rng = random.Random(seed)
    out = []
    for c in range(n):
        turns, titles, used = [], {}, []
        for i in range(rng.randint(1, 10)):
            who = rng.choice("SR") if i else "S"
            parts = ["message"]
            for _ in range(rng.randint(0, 3)):
                item = rng.choice(used) if used and rng.random() < 0.3 else str(rng.randint(1000, 1000 + items))
                used.append(item)
                titles[item] = f"Movie {item}"
                parts.append(f"@{item}")
            turns.append((who, " ".join(parts)))
        forms = {item: form(rng.randint(0, 1), rng.randint(0, 2), rng.randint(0, 2)) for item in titles}
        out.append(record(str(30000 + c), turns, titles, forms, forms))
    return out


@pytest.fixture
def corpus_path(tmp_path) -> Path:
    records = [example_record()] + random_records(30)
    return write_corpus(tmp_path / "test_data.jsonl", records)


def instance(dialogue_id: str, turn_index: int, ground_truth: Sequence[str], context_mentions: Sequence[str] = (),
             feedback: Optional[Dict[str, MentionForm]] = None, dialogue_turns: int = 8,
             recommender_turns: int = 4) -> EvaluationInstance:
    context = (Turn(role="seeker", text="context", mentions=tuple(context_mentions)),)
    return EvaluationInstance(
        instance_id=f"{dialogue_id}#{turn_index}",
        dialogue_id=dialogue_id,
        turn_index=turn_index,
        context=context,
        ground_truth=tuple(ground_truth),
        dialogue_turns=dialogue_turns,
        recommender_turns=recommender_turns,
        feedback=feedback or {},
    )


LIKED = MentionForm(suggested=1, seen=1, liked=1)
SEEN_ONLY = MentionForm(suggested=1, seen=1, liked=2)
NEITHER = MentionForm(suggested=1, seen=0, liked=0)

# (dialogue, turn, ground truth, ranking, feedback)
HAND_SCORED = [
    ("D1", 1, ["1"], ["1", "2", "3"], {"1": LIKED}),
    ("D1", 3, ["4", "5"], ["6", "4", "5"], {}),
    ("D1", 5, ["7"], ["8", "9"], {}),
    ("D1", 7, ["10", "11"], ["10"], {"10": SEEN_ONLY}),
    ("D2", 1, ["20"], ["21", "22", "20"], {}),
    ("D2", 3, ["23"], [], {}),
    ("D2", 5, ["24", "25", "26"], ["24", "25"], {"24": NEITHER}),
    ("D2", 7, ["27"], ["28"], {}),
    ("D3", 1, ["30"], ["31"], {}),
    ("D3", 3, ["32"], ["33"], {}),
    ("D3", 5, ["34"], ["35", "36", "37", "38", "39", "40", "41", "42", "43", "34"], {}),
    ("D3", 7, ["-101"], ["44"], {}),
    ("D4", 1, ["50"], ["50"], {}),
    ("D4", 3, ["51", "52"], ["52", "51"], {"52": SEEN_ONLY}),
    ("D4", 5, ["53"], ["54"], {}),
    ("D4", 7, ["55"], ["55"], {"55": LIKED}),
    ("D5", 1, ["60"], ["64"], {}),
    ("D5", 3, ["61"], ["65"], {}),
    ("D5", 5, ["62"], ["66"], {}),
    ("D5", 7, ["63"], ["67"], {}),
]


@pytest.fixture
def hand_scored() -> Tuple[List[EvaluationInstance], Dict[str, RankedPrediction]]:
    instances, preds = [], {}
    for dialogue, turn, gt, ranking, feedback in HAND_SCORED:
        inst = instance(dialogue, turn, gt, feedback=feedback)
        instances.append(inst)
        preds[inst.instance_id] = RankedPrediction(instance_id=inst.instance_id, ranking=tuple(ranking))
    return instances, preds
