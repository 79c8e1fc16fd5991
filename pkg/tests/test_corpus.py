import json

import pytest

from redial_bench.corpus import (DANGLING_MENTION, EMPTY_TEXT, UNKNOWN_SENDER, UNUSED_MENTION, Answer, Mention,
                                 corpus_items, dialogue_to_record, extract_mentions, filter_valid, issue_histogram,
                                 parse_corpus, parse_record, validate_dialogue)
from redial_bench.errors import InputMissingError

from conftest import POLICE_ACADEMY, example_record, random_records, record, write_corpus


def test_extract_single_mention():
    assert extract_mentions("I liked @111776 a lot") == [Mention("111776", (8, 15))]


def test_extract_no_mentions():
    assert extract_mentions("no mentions here") == []


def test_extract_repeated_mentions_keep_text_order():
    found = extract_mentions("@1 and @2 and @1")
    assert [m.mention_id for m in found] == ["1", "2", "1"]
    starts = [m.span[0] for m in found]
    assert starts == sorted(starts)
    assert all(a.span[1] <= b.span[0] for a, b in zip(found, found[1:]))


def test_extract_takes_maximal_digit_run_only():
    text = "try @123abc tonight"
    (m,) = extract_mentions(text)
    assert m.mention_id == "123"
    assert text[m.span[0]:m.span[1]] == "@123"


def test_parse_corpus_keeps_file_order_and_reports_bad_lines(tmp_path):
    records = random_records(5)
    path = write_corpus(tmp_path / "c.jsonl", records, extra_lines=["{not json", json.dumps({"conversationId": "x"})])
    parsed = parse_corpus(path, "test", threads=4)
    assert [d.conversation_id for d in parsed.dialogues] == [r["conversationId"] for r in records]
    assert [e.line for e in parsed.errors] == [6, 7]
    assert len(parsed.dialogues) + len(parsed.errors) == 7


def test_parse_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    parsed = parse_corpus(path, "test")
    assert parsed.dialogues == [] and parsed.errors == []


def test_parse_missing_file_is_fatal(tmp_path):
    with pytest.raises(InputMissingError):
        parse_corpus(tmp_path / "nope.jsonl", "test")


def test_dialogue_without_messages_is_rejected(tmp_path):
    rec = record("1", [])
    path = write_corpus(tmp_path / "c.jsonl", [rec])
    parsed = parse_corpus(path, "test")
    assert parsed.dialogues == []
    assert "no messages" in parsed.errors[0].message


def test_release_quirks_are_normalised():
    rec = record("5", [("S", "hello")])
    rec["movieMentions"] = []
    rec["respondentQuestions"] = []
    d = parse_record(rec)
    assert d.movie_mentions == {} and d.respondent_forms == {}


def test_round_trip_preserves_record():
    rec = example_record()
    d = parse_record(rec)
    assert dialogue_to_record(d) == rec
    assert d.initiator_forms[POLICE_ACADEMY].liked == Answer.YES


def test_validate_clean_dialogue(example_dialogue):
    report = validate_dialogue(example_dialogue)
    assert report.ok and report.issues == ()


def test_validate_reports_each_issue_kind():
    rec = record("9", [("S", "I like @999"), ("R", "  ")], titles={"5": "Unused"})
    rec["messages"].append({"messageId": 7, "text": "hi", "timeOffset": 3, "senderWorkerId": 42})
    d = parse_record(rec)
    report = validate_dialogue(d)
    assert sorted(report.codes()) == sorted([DANGLING_MENTION, EMPTY_TEXT, UNKNOWN_SENDER, UNUSED_MENTION])
    assert validate_dialogue(d) == report


def test_dangling_mention_only():
    d = parse_record(record("9", [("S", "seen @999 ?")]))
    assert validate_dialogue(d).codes() == [DANGLING_MENTION]


def test_strict_mode_drops_flagged_dialogues(example_dialogue):
    bad = parse_record(record("9", [("S", "seen @999 ?")]))
    kept, reports = filter_valid([example_dialogue, bad], strict=True)
    assert kept == [example_dialogue]
    assert issue_histogram(reports)[DANGLING_MENTION] == 1
    kept, _ = filter_valid([example_dialogue, bad], strict=False)
    assert len(kept) == 2


def test_corpus_items(example_dialogue):
    assert corpus_items([example_dialogue]) == {"111776", "84779", "204870"}


def test_unicode_line_separators_stay_inside_a_record(tmp_path):
    text = "I liked @5\u2028a lot\u2029and \u0085more"
    rec = record("7", [("S", text), ("R", "try @6 ")], titles={"5": "A", "6": "B"})
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(rec, ensure_ascii=False) + "\n", encoding="utf-8")
    parsed = parse_corpus(path, "test")
    assert parsed.errors == []
    (d,) = parsed.dialogues
    assert d.messages[0].text == text
    assert text.encode("utf-8") in path.read_bytes()


def test_one_undecodable_line_costs_one_dialogue(tmp_path):
    good = [json.dumps(r).encode("utf-8") for r in random_records(2)]
    bad = json.dumps(record("9", [("S", "caf_")])).encode("utf-8").replace(b"caf_", b"caf\xe9")
    path = tmp_path / "c.jsonl"
    path.write_bytes(b"\n".join([good[0], bad, good[1]]) + b"\n")
    parsed = parse_corpus(path, "test")
    assert len(parsed.dialogues) == 2
    assert [(e.line, e.message) for e in parsed.errors] == [(2, "not valid UTF-8")]


def test_utf16_corpus_with_bom(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_bytes(("\n".join(json.dumps(r) for r in random_records(3)) + "\n").encode("utf-16"))
    assert len(parse_corpus(path, "test").dialogues) == 3


def test_utf8_bom_and_crlf(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_bytes(b"\xef\xbb\xbf" + b"\r\n".join(json.dumps(r).encode("utf-8") for r in random_records(2)) + b"\r\n")
    parsed = parse_corpus(path, "test")
    assert len(parsed.dialogues) == 2 and parsed.errors == []
