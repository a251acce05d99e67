#!/usr/bin/env python3
"""Next-chunk download time under a small-chunk deployment: the interventional
predictor against the harmonic-mean stand-in, for large candidate chunks."""
import argparse

import numpy as np

from veritas.core import VideoModel, generate_trace
from veritas.ehmm import EhmmModel
from veritas.pipelines import associational_predictor, predict_next_download
from veritas.player import PlayerConfig, backend_model_f, run_session


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ladder-cap", type=float, default=0.5)
    a = ap.parse_args()

    model = EhmmModel.default()
    full = VideoModel(total_chunks=120)
    top = len(full.ladder) - 1
    print("scenario  veritas_err_s  assoc_err_s")
    all_v, all_a = [], []
    for i in range(a.scenarios):
        seed = a.seed + i
        truth = generate_trace("markov_walk", {"lo": 6, "hi": 9, "T": 80}, seed)
        log = run_session(truth, full.capped(a.ladder_cap), PlayerConfig(), seed).log
        ev, ea = [], []
        for n in range(20, len(log), 20):
            nxt = log.chunks[n]
            size = full.chunk_size(n + 1, top, seed)
            d_true = backend_model_f(truth, nxt.tcp, size, nxt.start_s)[0]
            prefix = log.prefix(n)
            ev.append(abs(predict_next_download(prefix, [size], model, now_s=nxt.start_s)[0].download_s - d_true))
            ea.append(abs(associational_predictor(prefix, size) - d_true))
        print(f"{i:8d}  {np.mean(ev):13.3f}  {np.mean(ea):11.3f}")
        all_v += ev
        all_a += ea
    print(f"{'mean':>8}  {np.mean(all_v):13.3f}  {np.mean(all_a):11.3f}")


if __name__ == "__main__":
    main()
