"""Embedded HMM over quantized capacity states.

Hidden state per chunk is the capacity of the window in which the chunk
starts. Consecutive chunks are linked by A^Δ, Δ being the number of windows
between their starts; emissions are Gaussian around the estimator f.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CapacityTrace, QuantGrid, SessionLog, all_deltas, quantize_capacity, window_index
from .tcp import DEFAULT_ESTIMATOR, EstimatorConfig, estimate_throughput


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    grid: QuantGrid
    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        m = self.grid.n_states
        if A.shape != (m, m):
            raise ValueError(f"transition matrix must be {m}x{m}, got {A.shape}")
        if (A < 0).any() or not np.allclose(A.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise ValueError("transition matrix must be row-stochastic")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "_powers", {})

    def power(self, delta: int) -> np.ndarray:
        cache = self._powers
        if delta not in cache:
            cache[delta] = transition_power(self.A, delta)
        return cache[delta]


def tridiagonal_matrix(grid: QuantGrid, p_stay: float = 0.9) -> TransitionMatrix:
    if not 0 < p_stay < 1:
        raise ValueError(f"p_stay must be in (0, 1), got {p_stay}")
    m = grid.n_states
    A = np.zeros((m, m))
    side = (1 - p_stay) / 2
    for i in range(m):
        A[i, i] = p_stay
        # a missing neighbor's mass folds back onto the diagonal
        if i > 0:
            A[i, i - 1] = side
        else:
            A[i, i] += side
        if i < m - 1:
            A[i, i + 1] = side
        else:
            A[i, i] += side
    return TransitionMatrix(grid, A)


def transition_power(A: np.ndarray, delta: int) -> np.ndarray:
    if delta < 0 or int(delta) != delta:
        raise ValueError(f"Δ must be a non-negative integer, got {delta}")
    P = np.linalg.matrix_power(np.asarray(A, dtype=float), int(delta))
    # renormalize rows against drift in long products
    return P / P.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class EhmmModel:
    grid: QuantGrid
    A: TransitionMatrix
    u: np.ndarray
    sigma_mbps: float = 0.5
    estimator: EstimatorConfig = DEFAULT_ESTIMATOR

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape != (self.grid.n_states,) or (u < 0).any() or abs(u.sum() - 1) > 1e-9:
            raise ValueError("u must be a distribution over the grid states")
        if self.sigma_mbps <= 0:
            raise ValueError("sigma must be > 0")
        object.__setattr__(self, "u", u)

    @classmethod
    def default(cls, grid: QuantGrid | None = None, p_stay: float = 0.9, sigma_mbps: float = 0.5,
                estimator: EstimatorConfig = DEFAULT_ESTIMATOR) -> "EhmmModel":
        grid = grid or QuantGrid()
        m = grid.n_states
        return cls(grid, tridiagonal_matrix(grid, p_stay), np.full(m, 1.0 / m), sigma_mbps, estimator)


@dataclass(frozen=True, eq=False)
class PairPosterior:
    gamma: np.ndarray  # (states, states, N-1); [:, :, k] is the pair (chunk k+1, chunk k+2)
    alpha: np.ndarray = field(repr=False)  # filtered marginals, (N, states)

    def __getitem__(self, idx):
        return self.gamma[idx]


@dataclass(frozen=True, eq=False)
class AbductionResult:
    map_states: np.ndarray
    log_likelihood: float
    sample_states: np.ndarray  # (K, N)
    samples: tuple[CapacityTrace, ...]
    map_trace: CapacityTrace

    def to_dict(self, sample_paths: list[str] | None = None) -> dict:
        d = {"map_states": [int(i) for i in self.map_states],
             "log_likelihood": float(self.log_likelihood),
             "samples": len(self.samples)}
        if sample_paths is not None:
            d["sample_traces"] = list(sample_paths)
        return d


_LOG_NORM = -0.5 * math.log(2 * math.pi)


def emission_logprob(model: EhmmModel, state: int, chunk) -> float:
    mu = estimate_throughput(model.grid.capacity(state), chunk.tcp, chunk.size_bytes, model.estimator)
    z = (chunk.throughput_mbps - mu) / model.sigma_mbps
    return _LOG_NORM - math.log(model.sigma_mbps) - 0.5 * z * z


def emission_matrix(model: EhmmModel, log: SessionLog) -> np.ndarray:
    """log e[n, i] for every chunk and state."""
    caps = model.grid.capacities
    out = np.empty((len(log), len(caps)))
    for n, ch in enumerate(log.chunks):
        mu = np.array([estimate_throughput(c, ch.tcp, ch.size_bytes, model.estimator) for c in caps])
        z = (ch.throughput_mbps - mu) / model.sigma_mbps
        out[n] = _LOG_NORM - math.log(model.sigma_mbps) - 0.5 * z * z
    return out


def _transitions(model: EhmmModel, log: SessionLog) -> list[np.ndarray]:
    return [model.A.power(d) for d in all_deltas(log, model.grid)]


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def viterbi_map(model: EhmmModel, log: SessionLog, log_e: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Most likely chunk-state sequence and its log score.

    Ties go to the lower state index (np.argmax keeps the first maximum).
    """
    if len(log) == 0:
        raise ValueError("cannot decode an empty log")
    log_e = emission_matrix(model, log) if log_e is None else log_e
    N, m = log_e.shape
    score = _log(model.u) + log_e[0]
    back = np.zeros((N, m), dtype=int)
    for n, P in enumerate(_transitions(model, log), start=1):
        cand = score[:, None] + _log(P)
        back[n] = np.argmax(cand, axis=0)
        score = cand[back[n], np.arange(m)] + log_e[n]
    path = np.empty(N, dtype=int)
    path[-1] = int(np.argmax(score))
    for n in range(N - 1, 0, -1):
        path[n - 1] = back[n, path[n]]
    return path, float(score[path[-1]])


def _lse(x: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out if axis is None else np.squeeze(out, axis=axis)


def forward_backward(model: EhmmModel, log: SessionLog, log_e: np.ndarray | None = None) -> PairPosterior:
    """Pair posteriors Γ[i, j, n] = P(C_{s_n}=i, C_{s_{n+1}}=j | all observations).

    α and β are carried as normalized log vectors, so sharp emissions that
    contradict the prior cannot underflow to 0/0.
    """
    if len(log) < 2:
        raise ValueError("forward-backward needs at least two chunks")
    log_e = emission_matrix(model, log) if log_e is None else log_e
    N, m = log_e.shape
    logP = [_log(P) for P in _transitions(model, log)]

    la = np.empty((N, m))
    a = _log(model.u) + log_e[0]
    la[0] = a - _lse(a)
    for n in range(1, N):
        a = _lse(la[n - 1][:, None] + logP[n - 1], axis=0) + log_e[n]
        la[n] = a - _lse(a)

    lb = np.empty((N, m))
    lb[-1] = 0.0
    for n in range(N - 2, -1, -1):
        b = _lse(logP[n] + (log_e[n + 1] + lb[n + 1])[None, :], axis=1)
        lb[n] = b - _lse(b)

    gamma = np.empty((m, m, N - 1))
    for n in range(N - 1):
        g = la[n][:, None] + logP[n] + (log_e[n + 1] + lb[n + 1])[None, :]
        gamma[:, :, n] = np.exp(g - _lse(g))
    return PairPosterior(gamma, np.exp(la))


def sample_paths(model: EhmmModel, log: SessionLog, K: int, seed: int,
                 log_e: np.ndarray | None = None, viterbi: tuple[np.ndarray, float] | None = None,
                 posterior: PairPosterior | None = None) -> np.ndarray:
    """K chunk-state paths, last state pinned to the Viterbi one, earlier states
    drawn backwards from the normalized Γ columns. Path k uses rng([seed, k])."""
    if K < 1:
        raise ValueError("K must be >= 1")
    log_e = emission_matrix(model, log) if log_e is None else log_e
    path, _ = viterbi if viterbi is not None else viterbi_map(model, log, log_e)
    N, m = log_e.shape
    out = np.empty((K, N), dtype=int)
    out[:, -1] = path[-1]
    if N == 1:
        return out
    post = posterior if posterior is not None else forward_backward(model, log, log_e)
    gamma = post.gamma
    for k in range(K):
        rng = np.random.default_rng([seed, k])
        nxt = path[-1]
        for n in range(N - 2, -1, -1):
            col = gamma[:, nxt, n]
            z = col.sum()
            if z > 0:
                pi = col / z
            else:
                # column underflowed; fall back to the filtered backward kernel
                w = post.alpha[n] * model.A.power(all_deltas(log, model.grid)[n])[:, nxt]
                pi = w / w.sum()
            nxt = int(rng.choice(m, p=pi))
            out[k, n] = nxt
    return out


def reconstruct_trace(states, log: SessionLog, grid: QuantGrid, T: int) -> CapacityTrace:
    """Window-level trace from per-chunk states.

    Windows holding a chunk start take that chunk's capacity (the last such chunk
    wins); windows between anchors are linearly interpolated and re-quantized;
    the ends hold the nearest anchor.
    """
    states = list(states)
    if len(states) != len(log) or not states:
        raise ValueError("need one state per chunk")
    anchors: dict[int, float] = {}
    for st, ch in zip(states, log.chunks):
        anchors[window_index(ch.start_s, grid)] = grid.capacity(int(st))
    if T < max(anchors):
        raise ValueError(f"horizon T={T} ends before the last chunk window {max(anchors)}")
    keys = sorted(anchors)
    vals = [0.0] * T
    for t in range(1, T + 1):
        if t <= keys[0]:
            v = anchors[keys[0]]
        elif t >= keys[-1]:
            v = anchors[keys[-1]]
        elif t in anchors:
            v = anchors[t]
        else:
            k = np.searchsorted(keys, t)
            t0, t1 = keys[k - 1], keys[k]
            v0, v1 = anchors[t0], anchors[t1]
            v = grid.capacity(quantize_capacity(v0 + (v1 - v0) * (t - t0) / (t1 - t0), grid))
        vals[t - 1] = v
    return CapacityTrace(grid, tuple(vals))


def abduct(model: EhmmModel, log: SessionLog, K: int, seed: int, T: int | None = None) -> AbductionResult:
    """Viterbi MAP plus K posterior sample traces over horizon T."""
    log_e = emission_matrix(model, log)
    vit = viterbi_map(model, log, log_e)
    post = forward_backward(model, log, log_e) if len(log) > 1 else None
    states = sample_paths(model, log, K, seed, log_e, vit, post)
    T = T or window_index(log.chunks[-1].end_s, model.grid)
    T = max(T, window_index(log.chunks[-1].start_s, model.grid))
    traces = tuple(reconstruct_trace(s, log, model.grid, T) for s in states)
    return AbductionResult(vit[0], vit[1], states, traces, reconstruct_trace(vit[0], log, model.grid, T))
