"""ABR policies. Each sees only player-side observables, never the true trace."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import Rung


@dataclass(frozen=True)
class Observables:
    buffer_s: float
    buffer_cap_s: float
    chunk_duration_s: float
    ladder: tuple[Rung, ...]
    throughputs: tuple[float, ...]  # observed Y of past chunks, oldest first
    next_sizes: tuple[tuple[int, ...], ...]  # [k][rung] bytes for the next chunks
    last_rung: int | None = None


def harmonic_mean(xs: Sequence[float]) -> float:
    xs = [x for x in xs if x > 0]
    if not xs:
        return 0.0
    return len(xs) / sum(1.0 / x for x in xs)


def ssim_db(ssim: float) -> float:
    return 10 * math.log10(1 / (1 - ssim))


def abr_fixed(obs: Observables, level: int = 0) -> int:
    """Always the same ladder position (clamped); used for controlled scenarios."""
    return min(max(int(level), 0), len(obs.ladder) - 1)


def abr_mpc(obs: Observables, horizon: int = 3, history: int = 5, rebuf_penalty: float = 100.0) -> int:
    """Exhaustive-search MPC over the next ``horizon`` chunks.

    QoE = Σ ssim_db − rebuf_penalty·stall_s − |Δ ssim_db|, buffer simulated with the
    harmonic mean of the last ``history`` throughputs as the rate forecast.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pred = harmonic_mean(obs.throughputs[-history:])
    if pred <= 0:
        return 0
    H = min(horizon, len(obs.next_sizes))
    q_db = [ssim_db(r.ssim) for r in obs.ladder]
    L, gate = obs.chunk_duration_s, obs.buffer_cap_s - obs.chunk_duration_s
    best, best_q = -math.inf, 0
    for seq in itertools.product(range(len(obs.ladder)), repeat=H):
        buf = obs.buffer_s
        prev = obs.last_rung
        qoe = 0.0
        for k, q in enumerate(seq):
            buf = min(buf, max(gate, 0.0))
            d = obs.next_sizes[k][q] * 8 / (pred * 1e6)
            stall = max(d - buf, 0.0)
            buf = max(buf - d, 0.0) + L
            qoe += q_db[q] - rebuf_penalty * stall
            if prev is not None:
                qoe -= abs(q_db[q] - q_db[prev])
            prev = q
        if qoe > best:
            best, best_q = qoe, seq[0]
    return best_q


def buffer_fraction(obs: Observables) -> float:
    # requests go out only once buffer <= cap - L, so that is the largest level an ABR ever sees
    span = obs.buffer_cap_s - obs.chunk_duration_s
    if span <= 0:
        return 1.0
    return min(max(obs.buffer_s / span, 0.0), 1.0)


def abr_bba(obs: Observables, reservoir: float = 0.1, upper: float = 0.95) -> int:
    """Buffer-based: linear map of buffer fraction in [reservoir, upper] onto the ladder."""
    if not 0 <= reservoir < upper <= 1:
        raise ValueError("need 0 <= reservoir < upper <= 1")
    top = len(obs.ladder) - 1
    f = buffer_fraction(obs)
    if f <= reservoir:
        return 0
    if f >= upper:
        return top
    x = (f - reservoir) / (upper - reservoir)
    return min(int(math.floor(x * top + 1e-9)), top)


def abr_bola(obs: Observables, gamma_p: float = 1.0) -> int:
    """BOLA-basic with V sized so the top rung wins at the request threshold.

    gamma_p >= 1 guarantees the lowest rung at an empty buffer for log utilities.
    """
    sizes = obs.next_sizes[0] if obs.next_sizes else ()
    if not sizes:
        return 0
    s_min = min(sizes)
    if all(s == s_min for s in sizes):
        return len(sizes) - 1  # equal cost: take the best picture
    util = [math.log(s / s_min) for s in sizes]
    q_max = obs.buffer_cap_s / obs.chunk_duration_s
    V = max(q_max - 1, 1e-6) / (max(util) + gamma_p)
    Q = obs.buffer_s / obs.chunk_duration_s
    best, best_q = -math.inf, 0
    for q, (s, v) in enumerate(zip(sizes, util)):
        score = (V * (v + gamma_p) - Q) / s
        if score > best + 1e-15:
            best, best_q = score, q
    return best_q


ABRS: dict[str, Callable[..., int]] = {"mpc": abr_mpc, "bba": abr_bba, "bola": abr_bola, "fixed": abr_fixed}


def get_abr(name: str) -> Callable[..., int]:
    try:
        return ABRS[name]
    except KeyError:
        raise ValueError(f"unknown abr {name!r}; choose from {{{', '.join(ABRS)}}}") from None
