"""Timeline export: Chrome trace JSON, events CSV, report JSON."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError
from .simulator import Stream, TimelineEvent

CSV_COLUMNS = ("stream", "layer", "expert", "start_s", "end_s")
_TID = {Stream.LOAD: 0, Stream.COMPUTE: 1}


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def chrome_trace(events: Sequence[TimelineEvent], metadata: dict | None = None) -> dict:
    """One process with threads ``load`` and ``compute``; ``X`` events in microseconds."""
    trace = [
        {"name": "process_name", "ph": "M", "pid": 0, "tid": 0, "args": {"name": "moe_layer"}},
    ]
    for stream, tid in _TID.items():
        trace.append({"name": "thread_name", "ph": "M", "pid": 0, "tid": tid,
                      "args": {"name": stream.value}})
    for ev in events:
        stream = Stream(ev.stream)
        trace.append({
            "name": f"{'L' if stream is Stream.LOAD else 'C'}{ev.expert_id}",
            "cat": stream.value,
            "ph": "X",
            "pid": 0,
            "tid": _TID[stream],
            "ts": ev.start * 1e6,
            "dur": (ev.end - ev.start) * 1e6,
            "args": {"layer": ev.layer_id, "expert": ev.expert_id},
        })
    return {"traceEvents": trace, "displayTimeUnit": "ms", "otherData": metadata or {}}


def events_csv(events: Iterable[TimelineEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for ev in events:
        writer.writerow([Stream(ev.stream).value, ev.layer_id, ev.expert_id,
                         repr(ev.start), repr(ev.end)])
    return buf.getvalue()


def read_events_csv(path) -> list[TimelineEvent]:
    path = Path(path)
    events = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ConfigError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                events.append(TimelineEvent(Stream(row["stream"]), int(row["layer"]),
                                            int(row["expert"]), float(row["start_s"]),
                                            float(row["end_s"])))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return events


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
