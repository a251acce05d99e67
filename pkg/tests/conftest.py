import pytest

from veritas.core import INFINITE_SSTHRESH, ChunkRecord, SessionLog, TcpState


def tcp(cwnd=10, ssthresh=INFINITE_SSTHRESH, rto=0.2, rtt=0.08, last_send=0.0):
    return TcpState(cwnd=cwnd, ssthresh=ssthresh, rto=rto, min_rtt=rtt, last_send=last_send, srtt=rtt)


def make_log(spans, sizes=None, w=None, delay=0.08):
    """SessionLog from (start, end) pairs; sizes default to 100 kB."""
    sizes = sizes or [100_000] * len(spans)
    w = w or tcp(rtt=delay)
    chunks = [ChunkRecord(n=k, size_bytes=s, start_s=a, end_s=b, tcp=w)
              for k, ((a, b), s) in enumerate(zip(spans, sizes), start=1)]
    return SessionLog(tuple(chunks), 2.0, delay)


@pytest.fixture
def small_log():
    return make_log([(0.0, 0.5), (1.0, 1.4), (6.0, 6.3), (7.0, 7.2)])


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props:
                rows.append((props["criterion"], "PASS" if outcome == "passed" else "FAIL", props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"{status}  {crit}  {detail}".rstrip())
