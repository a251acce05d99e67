"""End-to-end flows: Baseline reconstruction, counterfactual what-if replay,
interventional next-chunk prediction, and the estimator accuracy sweep."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .abr import harmonic_mean
from .core import CapacityTrace, QuantGrid, SessionLog, TcpState, VideoModel, window_index
from .ehmm import EhmmModel, abduct, emission_matrix, forward_backward, viterbi_map
from .metrics import METRIC_KEYS, MetricSet, compute_metrics
from .player import PlayerConfig, backend_round_sim, initial_tcp_state, run_session
from .tcp import simulate_transfer


def parallel_map(fn: Callable, items: Iterable) -> list:
    """Ordered map, parallel up to $VERITAS_THREADS workers (default 1)."""
    items = list(items)
    workers = max(1, int(os.environ.get("VERITAS_THREADS", "1")))
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class Setting:
    video: VideoModel
    player: PlayerConfig
    seed: int = 0

    def describe(self) -> dict:
        v = self.video
        return {"player": self.player.describe(), "seed": self.seed,
                "video": {"chunk_duration_s": v.chunk_duration_s, "total_chunks": v.total_chunks,
                          "vbr_sigma": v.vbr_sigma,
                          "ladder": [[r.level, r.bitrate_mbps, r.ssim] for r in v.ladder]}}

    def run(self, trace: CapacityTrace):
        return run_session(trace, self.video, self.player, self.seed)


def _pieces(log: SessionLog):
    """Piecewise-linear Baseline throughput as (t0, t1, v0, v1) segments."""
    ch = log.chunks
    out = []
    for k, c in enumerate(ch):
        y = c.throughput_mbps
        out.append((c.start_s, c.end_s, y, y))
        if k + 1 < len(ch) and ch[k + 1].start_s > c.end_s:
            out.append((c.end_s, ch[k + 1].start_s, y, ch[k + 1].throughput_mbps))
    return out


def baseline_reconstruct(log: SessionLog, grid: QuantGrid, T: int) -> CapacityTrace:
    """Observed throughput held over each download, linear across off periods,
    averaged per window. Values stay continuous (no ε quantization)."""
    if len(log) == 0:
        raise ValueError("cannot reconstruct from an empty log")
    pieces = _pieces(log)
    first, last = log.chunks[0], log.chunks[-1]
    delta = grid.delta_s
    horizon = max(T * delta, last.end_s)
    pieces = [(0.0, first.start_s, first.throughput_mbps, first.throughput_mbps)] + pieces
    pieces.append((last.end_s, horizon, last.throughput_mbps, last.throughput_mbps))
    vals = []
    for t in range(1, T + 1):
        w0, w1 = (t - 1) * delta, t * delta
        acc = 0.0
        for a, b, va, vb in pieces:
            lo, hi = max(a, w0), min(b, w1)
            if hi <= lo:
                continue
            slope = (vb - va) / (b - a)
            acc += (hi - lo) * (va + slope * ((lo - a) + (hi - a)) / 2)
        vals.append(acc / delta)
    return CapacityTrace(grid, tuple(vals))


@dataclass
class WhatIfReport:
    setting_a: dict
    setting_b: dict
    baseline: MetricSet
    veritas: list[MetricSet]
    veritas_low: dict
    veritas_high: dict
    gtbw: MetricSet | None = None
    traces: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        schemes = {"baseline": self.baseline.to_dict(), "veritas": [m.to_dict() for m in self.veritas]}
        if self.gtbw is not None:
            schemes = {"gtbw": self.gtbw.to_dict(), **schemes}
        return {"setting_a": self.setting_a, "setting_b": self.setting_b, "schemes": schemes,
                "veritas_low": self.veritas_low, "veritas_high": self.veritas_high}


def low_high(metrics: Sequence[MetricSet], trim: int = 1) -> tuple[dict, dict]:
    """Per-metric order statistics: (trim+1)-th lowest and (trim+1)-th highest."""
    if len(metrics) < 2:
        raise ValueError("need at least two samples for a low/high range")
    # small K: fall back towards the plain min/max
    k = min(trim, (len(metrics) - 1) // 2)
    lo, hi = {}, {}
    for key in METRIC_KEYS:
        v = sorted(getattr(m, key) for m in metrics)
        lo[key], hi[key] = v[k], v[-1 - k]
    return lo, hi


def whatif_counterfactual(log_a: SessionLog, setting_b: Setting, model: EhmmModel, K: int = 5, seed: int = 0,
                          true_trace: CapacityTrace | None = None, setting_a: Setting | None = None,
                          trim: int = 1, return_traces: bool = False) -> WhatIfReport:
    """Abduct K capacity traces from ``log_a`` and replay setting B on each,
    on the Baseline reconstruction, and optionally on the true trace."""
    if K < 2:
        raise ValueError("K must be >= 2 to report a low/high range")
    grid = model.grid
    T = window_index(log_a.chunks[-1].end_s, grid)
    if true_trace is not None:
        T = max(T, true_trace.T)
    ab = abduct(model, log_a, K, seed, T)
    base = baseline_reconstruct(log_a, grid, T)
    runs = parallel_map(lambda tr: compute_metrics(setting_b.run(tr)), [base, *ab.samples])
    lo, hi = low_high(runs[1:], trim)
    gt = compute_metrics(setting_b.run(true_trace)) if true_trace is not None else None
    traces = {"baseline": base, "samples": ab.samples, "map": ab.map_trace} if return_traces else None
    return WhatIfReport(setting_a.describe() if setting_a else {}, setting_b.describe(), runs[0], runs[1:],
                        lo, hi, gt, traces)


@dataclass(frozen=True)
class DownloadPrediction:
    size_bytes: int
    throughput_mbps: float
    download_s: float
    expected_capacity_mbps: float

    def to_dict(self) -> dict:
        return {"size_bytes": self.size_bytes, "throughput_mbps": self.throughput_mbps,
                "download_s": self.download_s, "expected_capacity_mbps": self.expected_capacity_mbps}


def _download_time(size: int, y: float) -> float:
    return size * 8 / (y * 1e6) if y > 0 else float("inf")


def next_tcp_state(log: SessionLog, capacity_mbps: float, now_s: float, model: EhmmModel) -> TcpState:
    """TCP state at the next request: the last chunk's state evolved through its
    implied rounds at ``capacity_mbps``, then idle until ``now_s``."""
    last = log.chunks[-1]
    tr = simulate_transfer(capacity_mbps, last.tcp, last.size_bytes, model.estimator)
    return replace(last.tcp, cwnd=tr.cwnd, ssthresh=tr.ssthresh, last_send=max(now_s - last.end_s, 0.0))


def predict_next_download(log_prefix: SessionLog, candidate_sizes: Sequence[int], model: EhmmModel,
                          now_s: float | None = None, mode: str = "map") -> list[DownloadPrediction]:
    """Download-time prediction for each candidate size of the next chunk.

    mode "map": expected capacity from the Viterbi state of the last chunk pushed
    through A^Δ. mode "posterior": same but starting from the filtered marginal.
    """
    if len(log_prefix) == 0:
        raise ValueError("prediction needs a non-empty log prefix")
    grid = model.grid
    last = log_prefix.chunks[-1]
    now_s = last.end_s if now_s is None else now_s
    if now_s < last.end_s:
        raise ValueError("next request cannot precede the end of the last download")
    log_e = emission_matrix(model, log_prefix)
    path, _ = viterbi_map(model, log_prefix, log_e)
    delta = window_index(now_s, grid) - window_index(last.start_s, grid)
    P = model.A.power(delta)
    if mode == "map":
        start = np.zeros(grid.n_states)
        start[path[-1]] = 1.0
    elif mode == "posterior":
        if len(log_prefix) > 1:
            start = forward_backward(model, log_prefix, log_e).alpha[-1]
        else:
            a = model.u * np.exp(log_e[0] - log_e[0].max())
            start = a / a.sum()
    else:
        raise ValueError(f"unknown mode {mode!r}")
    c_exp = float(start @ P @ grid.capacities)
    w_next = next_tcp_state(log_prefix, grid.capacity(int(path[-1])), now_s, model)
    out = []
    for s in candidate_sizes:
        y = simulate_transfer(c_exp, w_next, int(s), model.estimator).throughput_mbps
        out.append(DownloadPrediction(int(s), y, _download_time(int(s), y), c_exp))
    return out


def associational_predictor(log_prefix: SessionLog, candidate_size: int, history: int = 5) -> float:
    """Size over the harmonic mean of recent observed throughputs."""
    if len(log_prefix) == 0:
        raise ValueError("prediction needs a non-empty log prefix")
    y = harmonic_mean([c.throughput_mbps for c in log_prefix.chunks[-history:]])
    return _download_time(candidate_size, y)


# sweep ranges for the estimator accuracy check
F_SWEEP = {"payload_bytes": (2_000, 4_000_000), "gap_s": (0.12, 8.0),
           "capacity_mbps": (0.5, 10.0), "delay_s": (0.005, 0.040)}


@dataclass(frozen=True)
class AccuracySample:
    predicted_mbps: float
    observed_mbps: float
    capacity_mbps: float
    delay_s: float
    payload_bytes: int


def f_accuracy_sweep(seed: int, experiments: int = 60, payloads: int = 40,
                     ranges: dict | None = None, estimator=None) -> list[AccuracySample]:
    """Estimator vs. the round-level backend on persistent connections.

    Each experiment fixes capacity and RTT, then sends ``payloads`` transfers of
    log-uniform size separated by uniform idle gaps, so SSR and cwnd carry over.
    """
    r = {**F_SWEEP, **(ranges or {})}
    rng = np.random.default_rng(seed)
    grid = QuantGrid(delta_s=1e6)
    out = []
    for _ in range(experiments):
        c = float(rng.uniform(*r["capacity_mbps"]))
        delay = float(rng.uniform(*r["delay_s"]))
        cfg = PlayerConfig(delay_s=delay, backend="round_sim")
        est = estimator or cfg.estimator
        trace = CapacityTrace(grid, (c,))
        w = initial_tcp_state(cfg)
        t = 0.0
        lo, hi = np.log(r["payload_bytes"][0]), np.log(r["payload_bytes"][1])
        for k in range(payloads):
            if k:
                gap = float(rng.uniform(*r["gap_s"]))
                t += gap
                w = replace(w, last_send=gap)
            size = int(np.exp(rng.uniform(lo, hi)))
            pred = simulate_transfer(c, w, size, est).throughput_mbps
            d, w = backend_round_sim(trace, w, size, t, est)
            t += d
            out.append(AccuracySample(pred, size * 8 / d / 1e6, c, delay, size))
    return out


def error_cdf(samples: Sequence[AccuracySample]) -> list[tuple[float, float]]:
    """(relative error, empirical CDF) rows, sorted by error."""
    rel = np.sort([(s.predicted_mbps - s.observed_mbps) / s.observed_mbps for s in samples])
    n = len(rel)
    return [(float(e), (k + 1) / n) for k, e in enumerate(rel)]
