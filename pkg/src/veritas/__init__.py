"""Capacity abduction and what-if replay for ABR video sessions."""
from .core import (CapacityTrace, ChunkRecord, QuantGrid, Rung, SessionLog, TcpState, VideoModel, delta_n,
                   generate_trace, quantize_capacity, window_index)
from .ehmm import (AbductionResult, EhmmModel, PairPosterior, TransitionMatrix, abduct, emission_logprob,
                   forward_backward, reconstruct_trace, sample_paths, transition_power, tridiagonal_matrix,
                   viterbi_map)
from .metrics import MetricSet, compute_metrics
from .player import PlayerConfig, SessionResult, backend_model_f, backend_round_sim, run_session
from .tcp import EstimatorConfig, apply_ssr, estimate_throughput, get_segments

__version__ = "0.1.0"
