"""Line-delimited problem files: one JSON object per line with id, domain, problem, reference."""

from __future__ import annotations

import json
from pathlib import Path

from thinkswitch.core import DOMAINS, Query

REQUIRED = ("id", "domain", "problem", "reference")


class DatasetError(ValueError):
    def __init__(self, path: str | Path, line: int | None, message: str) -> None:
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class DuplicateIdError(DatasetError):
    def __init__(self, path: str | Path, line: int, query_id: str, first_line: int) -> None:
        super().__init__(path, line, f"duplicate id {query_id!r} (first seen on line {first_line})")
        self.query_id = query_id


class UnknownDomainError(DatasetError):
    def __init__(self, path: str | Path, line: int, domain: object) -> None:
        super().__init__(path, line, f"unknown domain {domain!r}; expected one of {', '.join(DOMAINS)}")
        self.domain = domain


def load_dataset(path: str | Path) -> list[Query]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(path, None, f"cannot read dataset: {exc.strerror or exc}") from exc
    queries: list[Query] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(path, lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise DatasetError(path, lineno, "record must be a JSON object")
        missing = [k for k in REQUIRED if k not in obj]
        if missing:
            raise DatasetError(path, lineno, f"missing field(s): {', '.join(missing)}")
        qid = obj["id"]
        if not isinstance(qid, (str, int)) or isinstance(qid, bool):
            raise DatasetError(path, lineno, "id must be a string or integer")
        qid = str(qid)
        if obj["domain"] not in DOMAINS:
            raise UnknownDomainError(path, lineno, obj["domain"])
        for key in ("problem", "reference"):
            if not isinstance(obj[key], str):
                raise DatasetError(path, lineno, f"{key} must be a string")
        if qid in seen:
            raise DuplicateIdError(path, lineno, qid, seen[qid])
        seen[qid] = lineno
        queries.append(Query(qid, obj["domain"], obj["problem"], obj["reference"], obj.get("grader_payload")))
    return queries


def dataset_name(path: str | Path) -> str:
    name = Path(path).name
    for suffix in (".jsonl", ".json", ".ndjson"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name
