"""artifacts.py - Versioned JSON / JSON-lines artifacts.
Every JSONL artifact starts with a header record carrying artifact_type,
version, the effective config and its fingerprint; data records follow,
one per line, serialized with sorted keys so reruns are byte-identical."""

import codecs
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from redial_bench.errors import InputMissingError, InstanceFileError

UTF16_BOMS = (codecs.BOM_UTF16_LE, codecs.BOM_UTF16_BE)
HEADER_KEY = "artifact_type"


def dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def read_bytes(path: Path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise InputMissingError(f"input file not found: {path}", path=str(path))
    return path.read_bytes()


def _decode_whole(raw: bytes, path: Path) -> str:
    # UTF-16 only with a BOM; it would accept almost any even-length input otherwise
    encoding = "utf-16" if raw.startswith(UTF16_BOMS) else "utf-8-sig"
    try:
        return raw.decode(encoding)
    except UnicodeDecodeError as e:
        raise InstanceFileError(f"cannot decode {path} as {encoding} (byte {e.start})", path=str(path))


def read_text(path: Path) -> str:
    """Whole file as text: UTF-16 when it starts with a UTF-16 BOM, UTF-8 otherwise."""
    return _decode_whole(read_bytes(path), path)


def make_header(artifact_type: str, version: str, config: Dict[str, Any], fingerprint: str, **extra: Any) -> Dict[str, Any]:
    return {HEADER_KEY: artifact_type, "version": version, "config": config, "config_fingerprint": fingerprint, **extra}

def write_jsonl(path: Path, header: Optional[Dict[str, Any]], records: Iterable[Dict[str, Any]]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if header is not None:
            f.write(dumps(header) + "\n")
        for record in records:
            f.write(dumps(record) + "\n")
            count += 1
    return count


def iter_lines(text: str) -> Iterator[Tuple[int, str]]:
    """(1-based line number, stripped line) for every non-empty line.
    Only "\\n" ends a line; U+2028, form feed and friends stay inside the record."""
    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if line:
            yield line_no, line


def read_lines(path: Path) -> List[Tuple[int, Optional[str]]]:
    """Non-empty lines of a line-oriented file, decoded one at a time.
    A line that is not valid UTF-8 comes back as None, so one bad byte costs one line."""
    raw = read_bytes(path)
    if raw.startswith(UTF16_BOMS):
        return list(iter_lines(_decode_whole(raw, path)))
    if raw.startswith(codecs.BOM_UTF8):
        raw = raw[len(codecs.BOM_UTF8):]
    lines: List[Tuple[int, Optional[str]]] = []
    for line_no, chunk in enumerate(raw.split(b"\n"), start=1):
        try:
            line = chunk.decode("utf-8").strip()
        except UnicodeDecodeError:
            lines.append((line_no, None))
            continue
        if line:
            lines.append((line_no, line))
    return lines


def read_jsonl(path: Path) -> Tuple[Optional[Dict[str, Any]], List[Tuple[int, Dict[str, Any]]]]:
    """Return (header or None, [(line_no, record)]). Headerless files are allowed."""
    header, records = None, []
    for line_no, line in read_lines(path):
        if line is None:
            raise InstanceFileError(f"{path}:{line_no}: not valid UTF-8", path=str(path), line=line_no)
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise InstanceFileError(f"{path}:{line_no}: invalid JSON ({e.msg})", path=str(path), line=line_no)
        if not isinstance(record, dict):
            raise InstanceFileError(f"{path}:{line_no}: expected a JSON object", path=str(path), line=line_no)
        if HEADER_KEY in record and header is None and not records:
            header = record
            continue
        records.append((line_no, record))
    return header, records


def expect_artifact(header: Optional[Dict[str, Any]], artifact_type: str, path: Path) -> Dict[str, Any]:
    if header is None or header.get(HEADER_KEY) != artifact_type:
        found = header.get(HEADER_KEY) if header else None
        raise InstanceFileError(f"{path}: expected a {artifact_type} artifact, found {found}", path=str(path))
    return header


def write_json(path: Path, data: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def read_json(path: Path) -> Dict[str, Any]:
    text = read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFileError(f"{path}: invalid JSON ({e.msg})", path=str(path))
    if not isinstance(data, dict):
        raise InstanceFileError(f"{path}: expected a JSON object", path=str(path))
    return data
