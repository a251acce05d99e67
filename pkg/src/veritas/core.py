"""Domain types shared by the simulator, the EHMM and the pipelines.

Units: times in seconds, sizes in bytes, rates in Mbps (10^6 bit/s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

# Linux TCP_INFINITE_SSTHRESH
INFINITE_SSTHRESH = 0x7FFFFFFF
_TOL = 1e-9


def bytes_to_mbit(size_bytes: float) -> float:
    return size_bytes * 8 / 1e6


@dataclass(frozen=True)
class QuantGrid:
    delta_s: float = 5.0
    eps_mbps: float = 0.5
    c_max_mbps: float = 10.0

    def __post_init__(self):
        if self.delta_s <= 0:
            raise ValueError(f"delta_s must be > 0, got {self.delta_s}")
        if self.eps_mbps <= 0:
            raise ValueError(f"eps_mbps must be > 0, got {self.eps_mbps}")
        ratio = self.c_max_mbps / self.eps_mbps
        if self.c_max_mbps < 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("c_max_mbps must be a non-negative multiple of eps_mbps")

    @property
    def n_states(self) -> int:
        return int(round(self.c_max_mbps / self.eps_mbps)) + 1

    @property
    def capacities(self) -> np.ndarray:
        return np.arange(self.n_states) * self.eps_mbps

    def capacity(self, state: int) -> float:
        return state * self.eps_mbps


def window_index(wall_time_s: float, grid: QuantGrid) -> int:
    """1-based window holding ``wall_time_s``; window t covers ((t-1)δ, tδ]."""
    if wall_time_s < 0:
        raise ValueError(f"wall time must be >= 0, got {wall_time_s}")
    return max(1, math.ceil(wall_time_s / grid.delta_s - _TOL))


def quantize_capacity(c_mbps: float, grid: QuantGrid) -> int:
    if c_mbps < 0:
        raise ValueError(f"capacity must be >= 0, got {c_mbps}")
    i = math.floor(c_mbps / grid.eps_mbps + 0.5 + _TOL)
    return min(i, grid.n_states - 1)


@dataclass(frozen=True)
class CapacityTrace:
    grid: QuantGrid
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) < 1:
            raise ValueError("a capacity trace needs at least one window")
        if min(self.values) < 0:
            raise ValueError("capacity values must be >= 0")

    @property
    def T(self) -> int:
        return len(self.values)

    @property
    def duration_s(self) -> float:
        return self.T * self.grid.delta_s

    def window_value(self, t: int, hold: bool = True) -> float:
        """Capacity of 1-based window ``t``; past the horizon the last value is held."""
        if t < 1:
            raise ValueError(f"window index must be >= 1, got {t}")
        if t > self.T:
            if not hold:
                raise IndexError(f"window {t} beyond trace horizon {self.T}")
            return self.values[-1]
        return self.values[t - 1]

    def value_at(self, wall_time_s: float, hold: bool = True) -> float:
        return self.window_value(window_index(wall_time_s, self.grid), hold)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)


@dataclass(frozen=True)
class TcpState:
    cwnd: int
    ssthresh: int
    rto: float
    min_rtt: float
    last_send: float
    srtt: float

    def __post_init__(self):
        if self.cwnd < 1:
            raise ValueError(f"cwnd must be >= 1, got {self.cwnd}")
        if self.ssthresh < 2:
            raise ValueError(f"ssthresh must be >= 2, got {self.ssthresh}")
        if self.rto <= 0:
            raise ValueError(f"rto must be > 0, got {self.rto}")
        if not 0 < self.min_rtt <= self.srtt + _TOL:
            raise ValueError("need 0 < min_rtt <= srtt")
        if self.last_send < 0:
            raise ValueError("last_send must be >= 0")


@dataclass(frozen=True)
class ChunkRecord:
    n: int
    size_bytes: int
    start_s: float
    end_s: float
    tcp: TcpState
    quality: int = 0
    buffer_s: float = 0.0

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError(f"chunk {self.n}: size must be > 0")
        if not self.end_s > self.start_s:
            raise ValueError(f"chunk {self.n}: end_s must exceed start_s")

    @property
    def download_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def throughput_mbps(self) -> float:
        return bytes_to_mbit(self.size_bytes) / self.download_s


@dataclass(frozen=True)
class SessionLog:
    chunks: tuple[ChunkRecord, ...]
    chunk_duration_s: float = 2.0
    delay_s: float = 0.08

    def __post_init__(self):
        object.__setattr__(self, "chunks", tuple(self.chunks))
        for k, c in enumerate(self.chunks, start=1):
            if c.n != k:
                raise ValueError(f"chunk indices must be 1..N consecutive; found {c.n} at position {k}")
            if k > 1 and c.start_s < self.chunks[k - 2].end_s - _TOL:
                raise ValueError(f"chunk {k}: starts before chunk {k - 1} ends")

    def __len__(self) -> int:
        return len(self.chunks)

    @property
    def throughputs(self) -> np.ndarray:
        return np.array([c.throughput_mbps for c in self.chunks])

    def prefix(self, n: int) -> "SessionLog":
        return SessionLog(self.chunks[:n], self.chunk_duration_s, self.delay_s)


def delta_n(log: SessionLog, grid: QuantGrid, n: int) -> int:
    """Number of capacity windows elapsed between the starts of chunks n-1 and n."""
    if not 2 <= n <= len(log):
        raise IndexError(f"n must be in [2, {len(log)}], got {n}")
    return window_index(log.chunks[n - 1].start_s, grid) - window_index(log.chunks[n - 2].start_s, grid)


def all_deltas(log: SessionLog, grid: QuantGrid) -> list[int]:
    """Δ_n for n = 2..N."""
    w = [window_index(c.start_s, grid) for c in log.chunks]
    return [b - a for a, b in zip(w, w[1:])]


@dataclass(frozen=True)
class Rung:
    level: int
    bitrate_mbps: float
    ssim: float


DEFAULT_LADDER = (
    Rung(0, 0.1, 0.908),
    Rung(1, 0.5, 0.935),
    Rung(2, 1.2, 0.958),
    Rung(3, 2.4, 0.975),
    Rung(4, 4.0, 0.986),
)


@lru_cache(maxsize=256)
def _jitter(seed: int, level: int, n: int, sigma: float) -> np.ndarray:
    z = np.random.default_rng([seed, level]).standard_normal(n)
    return np.exp(sigma * z)


@dataclass(frozen=True)
class VideoModel:
    chunk_duration_s: float = 2.0
    ladder: tuple[Rung, ...] = DEFAULT_LADDER
    vbr_sigma: float = 0.15
    total_chunks: int = 300

    def __post_init__(self):
        object.__setattr__(self, "ladder", tuple(self.ladder))
        if not self.ladder:
            raise ValueError("ladder must not be empty")
        rates = [r.bitrate_mbps for r in self.ladder]
        ssims = [r.ssim for r in self.ladder]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("ladder must be sorted ascending by bitrate")
        if any(b <= a for a, b in zip(ssims, ssims[1:])):
            raise ValueError("ssim must increase strictly with bitrate")
        if not all(0 < s < 1 for s in ssims):
            raise ValueError("ssim values must lie in (0, 1)")
        if self.chunk_duration_s <= 0 or self.total_chunks < 1 or self.vbr_sigma < 0:
            raise ValueError("invalid video model parameters")

    def chunk_size(self, n: int, rung: int, seed: int) -> int:
        """Size in bytes of 1-based chunk n at ladder position ``rung``.

        The jitter is keyed by the rung's quality level, so two ladders sharing a
        level see identical sizes for it.
        """
        r = self.ladder[rung]
        jit = _jitter(seed, r.level, self.total_chunks, self.vbr_sigma)[n - 1]
        return max(1, int(round(r.bitrate_mbps * self.chunk_duration_s * 1e6 / 8 * jit)))

    def capped(self, max_mbps: float) -> "VideoModel":
        rungs = tuple(r for r in self.ladder if r.bitrate_mbps <= max_mbps + _TOL)
        return VideoModel(self.chunk_duration_s, rungs, self.vbr_sigma, self.total_chunks)


def generate_trace(kind: str, params: dict, seed: int, grid: QuantGrid | None = None) -> CapacityTrace:
    """Synthetic ground-truth capacity trace.

    kinds: ``constant`` (c, T), ``square_wave`` (lo, hi, period, T, optional phase;
    period is the number of windows spent at each level, phase shifts the wave
    left by that many windows), ``markov_walk`` (lo, hi, T, p_stay,
    optional start) on the ε grid.
    """
    grid = grid or QuantGrid()
    if kind not in ("constant", "square_wave", "markov_walk"):
        raise ValueError(f"unknown trace kind {kind!r}; expected constant, square_wave or markov_walk")
    p = dict(params)
    need = ("c",) if kind == "constant" else ("lo", "hi")
    missing = [k for k in need if k not in p]
    if missing:
        raise ValueError(f"{kind} trace needs parameter(s) {', '.join(missing)}")
    T = int(p.get("T", 120))
    if T < 1:
        raise ValueError("T must be >= 1")
    if kind == "constant":
        c = float(p["c"])
        if c < 0:
            raise ValueError("c must be >= 0")
        return CapacityTrace(grid, (c,) * T)
    lo, hi = float(p["lo"]), float(p["hi"])
    if lo < 0 or lo > hi:
        raise ValueError(f"need 0 <= lo <= hi, got lo={lo}, hi={hi}")
    if kind == "square_wave":
        period = int(p.get("period", 4))
        phase = int(p.get("phase", 0))
        if period < 1 or phase < 0:
            raise ValueError("need period >= 1 and phase >= 0")
        return CapacityTrace(grid, tuple(lo if ((t + phase) // period) % 2 == 0 else hi for t in range(T)))
    p_stay = float(p.get("p_stay", 0.8))
    if not 0 < p_stay < 1:
        raise ValueError("p_stay must be in (0, 1)")
    i_lo = math.ceil(lo / grid.eps_mbps - _TOL)
    i_hi = math.floor(hi / grid.eps_mbps + _TOL)
    if i_lo > i_hi:
        raise ValueError("no grid state inside [lo, hi]")
    rng = np.random.default_rng(seed)
    if "start" in p:
        i = min(max(quantize_capacity(float(p["start"]), grid), i_lo), i_hi)
    else:
        i = int(rng.integers(i_lo, i_hi + 1))
    out = []
    for _ in range(T):
        out.append(i * grid.eps_mbps)
        r = rng.random()
        if r >= p_stay:
            step = -1 if r < p_stay + (1 - p_stay) / 2 else 1
            # reflect at the band edges
            if not i_lo <= i + step <= i_hi:
                step = -step
            if i_lo <= i + step <= i_hi:
                i += step
    return CapacityTrace(grid, tuple(out))


def trace_from_values(values: Sequence[float], grid: QuantGrid | None = None) -> CapacityTrace:
    return CapacityTrace(grid or QuantGrid(), tuple(values))
