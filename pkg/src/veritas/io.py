"""Session-log (JSON lines) and capacity-trace (CSV) file formats."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .core import CapacityTrace, ChunkRecord, QuantGrid, SessionLog, TcpState

LOG_FORMAT = "veritas-log/1"
TCP_FIELDS = ("cwnd", "ssthresh", "rto_s", "min_rtt_s", "last_send_s", "srtt_s")
CHUNK_FIELDS = ("n", "size_bytes", "start_s", "end_s", "quality", "buffer_s", "tcp")


class LogFormatError(ValueError):
    """Malformed log file; ``line`` is 1-based."""

    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def _tcp_to_dict(w: TcpState) -> dict:
    return {"cwnd": w.cwnd, "ssthresh": w.ssthresh, "rto_s": w.rto, "min_rtt_s": w.min_rtt,
            "last_send_s": w.last_send, "srtt_s": w.srtt}


def chunk_to_dict(c: ChunkRecord) -> dict:
    return {"n": c.n, "size_bytes": c.size_bytes, "start_s": c.start_s, "end_s": c.end_s,
            "quality": c.quality, "buffer_s": c.buffer_s, "tcp": _tcp_to_dict(c.tcp)}


def dumps_log(log: SessionLog) -> str:
    lines = [json.dumps({"format": LOG_FORMAT, "delay_s": log.delay_s,
                         "chunk_duration_s": log.chunk_duration_s})]
    lines += [json.dumps(chunk_to_dict(c)) for c in log.chunks]
    return "\n".join(lines) + "\n"


def write_log(log: SessionLog, path: str | Path) -> None:
    Path(path).write_text(dumps_log(log))


def loads_log(text: str) -> SessionLog:
    rows = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not rows:
        raise LogFormatError(1, "empty log file")
    i, first = rows[0]
    try:
        header = json.loads(first)
    except json.JSONDecodeError as e:
        raise LogFormatError(i, f"invalid JSON: {e.msg}") from None
    if not isinstance(header, dict) or header.get("format") != LOG_FORMAT:
        raise LogFormatError(i, f"missing or unsupported header; expected format {LOG_FORMAT!r}")
    try:
        delay = float(header["delay_s"])
        chunk_dur = float(header["chunk_duration_s"])
    except (KeyError, TypeError, ValueError):
        raise LogFormatError(i, "header needs numeric delay_s and chunk_duration_s") from None

    chunks = []
    for i, ln in rows[1:]:
        try:
            d = json.loads(ln)
        except json.JSONDecodeError as e:
            raise LogFormatError(i, f"invalid JSON: {e.msg}") from None
        missing = [k for k in CHUNK_FIELDS if k not in d]
        if missing:
            raise LogFormatError(i, f"missing field(s) {', '.join(missing)}")
        tcp = d["tcp"]
        if not isinstance(tcp, dict) or any(k not in tcp for k in TCP_FIELDS):
            gone = [k for k in TCP_FIELDS if not isinstance(tcp, dict) or k not in tcp]
            raise LogFormatError(i, f"missing tcp field(s) {', '.join(gone)} (TCP state at chunk start is required)")
        try:
            w = TcpState(cwnd=int(tcp["cwnd"]), ssthresh=int(tcp["ssthresh"]), rto=float(tcp["rto_s"]),
                         min_rtt=float(tcp["min_rtt_s"]), last_send=float(tcp["last_send_s"]),
                         srtt=float(tcp["srtt_s"]))
            chunks.append(ChunkRecord(n=int(d["n"]), size_bytes=int(d["size_bytes"]),
                                      start_s=float(d["start_s"]), end_s=float(d["end_s"]), tcp=w,
                                      quality=int(d["quality"]), buffer_s=float(d["buffer_s"])))
        except (TypeError, ValueError) as e:
            raise LogFormatError(i, f"chunk {d.get('n')}: {e}") from None
    try:
        return SessionLog(tuple(chunks), chunk_dur, delay)
    except ValueError as e:
        raise LogFormatError(rows[0][0], str(e)) from None


def read_log(path: str | Path) -> SessionLog:
    return loads_log(Path(path).read_text())


def write_trace(trace: CapacityTrace, path: str | Path) -> None:
    delta = trace.grid.delta_s
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start_s", "mbps"])
        for t, v in enumerate(trace.values):
            w.writerow([repr(t * delta), repr(v)])


def read_trace(path: str | Path, grid: QuantGrid | None = None) -> CapacityTrace:
    """Read a trace CSV. δ is taken from ``grid`` or inferred from the row spacing."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["window_start_s", "mbps"]:
        raise LogFormatError(1, "trace CSV must start with header window_start_s,mbps")
    starts, vals = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            starts.append(float(row[0]))
            vals.append(float(row[1]))
        except (IndexError, ValueError):
            raise LogFormatError(i, "expected two numeric columns") from None
    if not vals:
        raise LogFormatError(2, "trace has no rows")
    if grid is None:
        grid = QuantGrid(delta_s=starts[1] - starts[0]) if len(starts) > 1 else QuantGrid()
    for k, s in enumerate(starts):
        if abs(s - k * grid.delta_s) > 1e-6 * max(1.0, s):
            raise LogFormatError(k + 2, f"window_start_s {s} is not {k}*delta")
    return CapacityTrace(grid, tuple(vals))
