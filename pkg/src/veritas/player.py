"""Discrete-event ABR session simulator.

Replays a capacity trace against a video and a player configuration; the
same loop produces deployment logs (setting A) and counterfactual replays
(setting B).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .abr import Observables, get_abr
from .core import INFINITE_SSTHRESH, CapacityTrace, ChunkRecord, SessionLog, TcpState, VideoModel, window_index
from .tcp import DEFAULT_ESTIMATOR, EstimatorConfig, apply_ssr, bdp_segments, grow, simulate_transfer

BACKENDS = ("model_f", "round_sim")


@dataclass(frozen=True)
class PlayerConfig:
    buffer_cap_s: float = 5.0
    abr: str = "mpc"
    abr_params: dict = field(default_factory=dict, hash=False)
    delay_s: float = 0.08
    backend: str = "model_f"
    estimator: EstimatorConfig = DEFAULT_ESTIMATOR
    hold_trace: bool = True

    def __post_init__(self):
        if self.delay_s <= 0:
            raise ValueError("delay_s must be > 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        get_abr(self.abr)

    def describe(self) -> dict:
        return {"buffer_cap_s": self.buffer_cap_s, "abr": self.abr, "abr_params": dict(self.abr_params),
                "delay_s": self.delay_s, "backend": self.backend}


@dataclass(frozen=True)
class SessionResult:
    log: SessionLog
    play_time_s: float
    rebuffer_time_s: float
    startup_time_s: float
    wall_time_s: float
    ssims: tuple[float, ...]
    bitrates_mbps: tuple[float, ...]
    max_buffer_s: float = 0.0


class TraceExhausted(RuntimeError):
    pass


def _first_positive_window(trace: CapacityTrace, t: float, hold: bool) -> tuple[float, float]:
    """(start time, capacity) of the first instant at or after t with positive capacity."""
    w = window_index(t, trace.grid)
    start = t
    while True:
        if w > trace.T and not hold:
            raise TraceExhausted(f"session runs past the trace horizon (window {w} > {trace.T})")
        c = trace.window_value(w)
        if c > 0:
            return start, c
        if w >= trace.T:
            raise TraceExhausted("capacity never becomes positive again")
        start = w * trace.grid.delta_s
        w += 1


def backend_model_f(trace: CapacityTrace, w: TcpState, size_bytes: int, t_start: float,
                    config: EstimatorConfig = DEFAULT_ESTIMATOR, hold: bool = True) -> tuple[float, TcpState]:
    """Download time from f at the capacity in force when the download starts.

    Returns (D, TCP state after the download, last_send reset).
    """
    if size_bytes <= 0:
        raise ValueError("chunk size must be > 0")
    t0, c = _first_positive_window(trace, t_start, hold)
    tr = simulate_transfer(c, w, size_bytes, config)
    d = (t0 - t_start) + size_bytes * 8 / (tr.throughput_mbps * 1e6)
    return d, replace(w, cwnd=tr.cwnd, ssthresh=tr.ssthresh, last_send=0.0)


def backend_round_sim(trace: CapacityTrace, w: TcpState, size_bytes: int, t_start: float,
                      config: EstimatorConfig = DEFAULT_ESTIMATOR, hold: bool = True) -> tuple[float, TcpState]:
    """Round-by-round transfer; capacity is re-read at every round start.

    A round sends min(cwnd, BDP) segments and lasts one srtt, or the time the
    link needs to serialize those bytes if that is longer (BDP is rounded up
    to whole segments, so a full round can slightly exceed c·srtt).
    """
    if size_bytes <= 0:
        raise ValueError("chunk size must be > 0")
    w = apply_ssr(w, config)
    cwnd, ssthresh, rtt, mss = w.cwnd, w.ssthresh, w.srtt, config.mss_bytes
    remaining = size_bytes
    t = t_start
    while remaining > 0:
        t, c = _first_positive_window(trace, t, hold)
        bdp = bdp_segments(c, rtt, config)
        nbytes = min(remaining, min(cwnd, bdp) * mss)
        t += max(rtt, nbytes * 8 / (c * 1e6))
        remaining -= nbytes
        if cwnd < bdp:
            cwnd = grow(cwnd, ssthresh)
    return t - t_start, replace(w, cwnd=cwnd, ssthresh=ssthresh, last_send=0.0)


_BACKEND_FNS = {"model_f": backend_model_f, "round_sim": backend_round_sim}


def initial_tcp_state(config: PlayerConfig) -> TcpState:
    rtt = config.delay_s
    return TcpState(cwnd=config.estimator.init_cwnd, ssthresh=INFINITE_SSTHRESH,
                    rto=max(config.estimator.rto_floor_s, 2 * rtt), min_rtt=rtt, last_send=0.0, srtt=rtt)


def run_session(trace: CapacityTrace, video: VideoModel, config: PlayerConfig, seed: int = 0) -> SessionResult:
    """Play ``video`` over ``trace``; ``seed`` fixes the VBR chunk sizes."""
    abr = get_abr(config.abr)
    download = _BACKEND_FNS[config.backend]
    L, cap = video.chunk_duration_s, config.buffer_cap_s
    if cap < L:
        raise ValueError("buffer_cap_s must be >= chunk duration")
    gate = cap - L
    n_chunks = video.total_chunks
    horizon = int(config.abr_params.get("horizon", 3)) if config.abr == "mpc" else 1

    t = buffer = 0.0
    play = rebuf = startup = 0.0
    max_buf = 0.0
    playing = False
    w = initial_tcp_state(config)
    last_end = None
    ys: list[float] = []
    chunks, ssims, rates = [], [], []
    last_rung = None
    for n in range(1, n_chunks + 1):
        if playing and buffer > gate:
            idle = buffer - gate
            t += idle
            buffer = gate
            play += idle
        w_start = replace(w, last_send=0.0 if last_end is None else t - last_end)
        nxt = tuple(tuple(video.chunk_size(k, q, seed) for q in range(len(video.ladder)))
                    for k in range(n, min(n + horizon, n_chunks) + 1))
        obs = Observables(buffer, cap, L, video.ladder, tuple(ys), nxt, last_rung)
        q = int(abr(obs, **config.abr_params))
        size = video.chunk_size(n, q, seed)
        d, w_after = download(trace, w_start, size, t, config.estimator, config.hold_trace)
        chunks.append(ChunkRecord(n=n, size_bytes=size, start_s=t, end_s=t + d, tcp=w_start,
                                  quality=video.ladder[q].level, buffer_s=buffer))
        if playing:
            if buffer >= d:
                buffer -= d
                play += d
            else:
                play += buffer
                rebuf += d - buffer
                buffer = 0.0
        else:
            startup += d
            playing = True
        buffer += L
        max_buf = max(max_buf, buffer)
        t += d
        last_end = t
        w = w_after
        ys.append(chunks[-1].throughput_mbps)
        ssims.append(video.ladder[q].ssim)
        rates.append(size * 8 / L / 1e6)
        last_rung = q
    play += buffer
    log = SessionLog(tuple(chunks), L, config.delay_s)
    return SessionResult(log, play, rebuf, startup, t + buffer, tuple(ssims), tuple(rates), max_buf)
