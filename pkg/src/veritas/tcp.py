"""Analytic TCP throughput estimator f(c, W, S).

Slow start, additive congestion avoidance and slow-start restart after idle;
no loss. Each round sends min(cwnd, BDP) segments and lasts one min RTT.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from .core import TcpState


@dataclass(frozen=True)
class EstimatorConfig:
    mss_bytes: int = 1500
    init_cwnd: int = 10
    rto_floor_s: float = 0.2

    def __post_init__(self):
        if self.mss_bytes <= 0 or self.init_cwnd < 1 or self.rto_floor_s <= 0:
            raise ValueError("invalid estimator config")


DEFAULT_ESTIMATOR = EstimatorConfig()


def get_segments(nbytes: float, config: EstimatorConfig = DEFAULT_ESTIMATOR) -> int:
    if nbytes <= 0:
        return 0
    # tolerance keeps exact multiples from tipping over on float noise
    return max(1, math.ceil(nbytes / config.mss_bytes - 1e-9))


def bdp_segments(c_mbps: float, rtt_s: float, config: EstimatorConfig = DEFAULT_ESTIMATOR) -> int:
    return get_segments(c_mbps * rtt_s * 1e6 / 8, config)


def apply_ssr(w: TcpState, config: EstimatorConfig = DEFAULT_ESTIMATOR) -> TcpState:
    """Slow-start restart: halve cwnd once per elapsed RTO of idleness."""
    if w.last_send <= w.rto:
        return w
    halvings = math.floor(w.last_send / w.rto + 1e-9)
    restart = min(config.init_cwnd, w.cwnd)
    cwnd = w.cwnd
    for _ in range(halvings):
        if cwnd <= restart:
            break
        cwnd >>= 1
    cwnd = max(cwnd, restart)
    ssthresh = max(w.ssthresh, (w.cwnd >> 1) + (w.cwnd >> 2))
    return replace(w, cwnd=cwnd, ssthresh=ssthresh)


def grow(cwnd: int, ssthresh: int) -> int:
    return 2 * cwnd if cwnd < ssthresh else cwnd + 1


def count_rounds(cwnd: int, ssthresh: int, data_segs: int, bdp_segs: int) -> tuple[int, int]:
    """Rounds needed for ``data_segs`` when each round sends min(cwnd, bdp).

    cwnd only grows in rounds where it limited the send. Returns (rounds, cwnd_after).
    """
    sent = rounds = 0
    while sent < data_segs:
        if cwnd >= bdp_segs:
            rounds += math.ceil((data_segs - sent) / bdp_segs)
            break
        sent += cwnd
        cwnd = grow(cwnd, ssthresh)
        rounds += 1
    return rounds, cwnd


class Transfer(NamedTuple):
    throughput_mbps: float
    rounds: int
    cwnd: int
    ssthresh: int


def simulate_transfer(c_mbps: float, w: TcpState, size_bytes: int,
                      config: EstimatorConfig = DEFAULT_ESTIMATOR) -> Transfer:
    """f plus the TCP state it implies after the transfer (SSR applied first)."""
    w = apply_ssr(w, config)
    if c_mbps <= 0:
        return Transfer(0.0, 0, w.cwnd, w.ssthresh)
    rtt = w.min_rtt
    data = get_segments(size_bytes, config)
    bdp = bdp_segments(c_mbps, rtt, config)
    one_round = size_bytes * 8 / rtt / 1e6
    if w.cwnd > bdp:
        if data > bdp:
            return Transfer(c_mbps, math.ceil(data / bdp), w.cwnd, w.ssthresh)
        return Transfer(min(one_round, c_mbps), 1, w.cwnd, w.ssthresh)
    rounds, cwnd = count_rounds(w.cwnd, w.ssthresh, data, bdp)
    y = size_bytes * 8 / (rounds * rtt) / 1e6
    # Capacities whose BDP is below cwnd pipeline at full rate; a larger capacity
    # must never predict less than the best of those.
    seg_mbps = config.mss_bytes * 8 / (rtt * 1e6)
    y = max(y, min(one_round, (w.cwnd - 1) * seg_mbps))
    return Transfer(min(y, c_mbps), rounds, cwnd, w.ssthresh)


def estimate_throughput(c_mbps: float, w: TcpState, size_bytes: int,
                        config: EstimatorConfig = DEFAULT_ESTIMATOR) -> float:
    if c_mbps < 0:
        raise ValueError("capacity must be >= 0")
    if size_bytes <= 0:
        raise ValueError("size must be > 0")
    return simulate_transfer(c_mbps, w, size_bytes, config).throughput_mbps
