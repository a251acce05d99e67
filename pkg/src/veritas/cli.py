"""veritas command line: trace generation, emulation, abduction, what-if,
interventional prediction and the estimator accuracy harness."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import __version__
from .core import DEFAULT_LADDER, QuantGrid, Rung, SessionLog, TcpState, VideoModel, generate_trace, window_index
from .ehmm import EhmmModel, abduct
from .io import read_log, read_trace, write_log, write_trace
from .metrics import compute_metrics
from .pipelines import (F_SWEEP, Setting, associational_predictor, baseline_reconstruct, error_cdf,
                        f_accuracy_sweep, predict_next_download, whatif_counterfactual)
from .player import PlayerConfig, run_session
from .tcp import estimate_throughput


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    grid: dict = field(default_factory=lambda: {"delta_s": 5.0, "eps_mbps": 0.5, "c_max_mbps": 10.0})
    video: dict = field(default_factory=lambda: {
        "chunk_duration_s": 2.0, "vbr_sigma": 0.15, "total_chunks": 300, "ladder_cap_mbps": None,
        "ladder": [[r.level, r.bitrate_mbps, r.ssim] for r in DEFAULT_LADDER]})
    player: dict = field(default_factory=lambda: {
        "buffer_cap_s": 5.0, "abr": "mpc", "abr_params": {}, "delay_s": 0.08, "backend": "model_f"})
    ehmm: dict = field(default_factory=lambda: {"sigma_mbps": 0.5, "p_stay": 0.9})
    samples: int = 5
    trim: int = 1
    seed: int | None = None

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        cfg = cls()
        if path is None:
            return cfg
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise CliError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise CliError(f"config {path}: invalid JSON at line {e.lineno}: {e.msg}") from None
        for key, val in raw.items():
            if not hasattr(cfg, key):
                raise CliError(f"config {path}: unknown key {key!r}")
            cur = getattr(cfg, key)
            if isinstance(cur, dict):
                if not isinstance(val, dict):
                    raise CliError(f"config {path}: {key!r} must be an object")
                unknown = set(val) - set(cur)
                if unknown:
                    raise CliError(f"config {path}: unknown {key} field(s) {sorted(unknown)}")
                cur.update(val)
            else:
                setattr(cfg, key, val)
        return cfg

    def snapshot(self) -> dict:
        return asdict(self)

    def make_grid(self) -> QuantGrid:
        return QuantGrid(**self.grid)

    def make_video(self) -> VideoModel:
        v = self.video
        ladder = tuple(Rung(int(a), float(b), float(c)) for a, b, c in v["ladder"])
        video = VideoModel(float(v["chunk_duration_s"]), ladder, float(v["vbr_sigma"]), int(v["total_chunks"]))
        if v.get("ladder_cap_mbps") is not None:
            video = video.capped(float(v["ladder_cap_mbps"]))
            if not video.ladder:
                raise CliError("ladder_cap_mbps removes every rung")
        return video

    def make_player(self) -> PlayerConfig:
        p = self.player
        return PlayerConfig(buffer_cap_s=float(p["buffer_cap_s"]), abr=p["abr"], abr_params=dict(p["abr_params"]),
                            delay_s=float(p["delay_s"]), backend=p["backend"])

    def make_model(self) -> EhmmModel:
        return EhmmModel.default(self.make_grid(), p_stay=float(self.ehmm["p_stay"]),
                                 sigma_mbps=float(self.ehmm["sigma_mbps"]))

    def require_seed(self) -> int:
        if self.seed is None:
            raise CliError("an explicit --seed (or \"seed\" in the config) is required")
        return int(self.seed)


def _dump_json(obj: dict, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _envelope(cfg: RunConfig, command: str, body: dict) -> dict:
    return {"tool_version": __version__, "command": command, "config": cfg.snapshot(), **body}


def _apply_common(cfg: RunConfig, a: argparse.Namespace) -> RunConfig:
    """Flags override the config file."""
    if getattr(a, "seed", None) is not None:
        cfg.seed = a.seed
    for flag, (section, key) in {"buffer": ("player", "buffer_cap_s"), "abr": ("player", "abr"),
                                 "delay": ("player", "delay_s"), "backend": ("player", "backend"),
                                 "ladder_cap": ("video", "ladder_cap_mbps"), "chunks": ("video", "total_chunks"),
                                 "chunk_duration": ("video", "chunk_duration_s"),
                                 "sigma": ("ehmm", "sigma_mbps"), "p_stay": ("ehmm", "p_stay"),
                                 "delta": ("grid", "delta_s"), "eps": ("grid", "eps_mbps")}.items():
        val = getattr(a, flag, None)
        if val is not None:
            getattr(cfg, section)[key] = val
    if getattr(a, "abr_param", None):
        params = dict(cfg.player["abr_params"])
        params.update(_parse_pairs(a.abr_param, "--abr-param"))
        cfg.player["abr_params"] = params
    if getattr(a, "samples", None) is not None:
        cfg.samples = a.samples
    return cfg


def _parse_value(v: str):
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v


def _parse_pairs(items: list[str], flag: str) -> dict:
    out = {}
    for it in items:
        if "=" not in it:
            raise CliError(f"{flag} expects key=value, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = _parse_value(v.strip())
    return out


def _read_log_checked(path: str) -> SessionLog:
    if not Path(path).exists():
        raise CliError(f"log file not found: {path}")
    return read_log(path)


def _read_trace_checked(path: str, grid: QuantGrid) -> "CapacityTrace":
    if not Path(path).exists():
        raise CliError(f"trace file not found: {path}")
    return read_trace(path, grid)


# --- commands ---------------------------------------------------------------

_KINDS = {"constant": "constant", "square": "square_wave", "square_wave": "square_wave",
          "markov": "markov_walk", "markov_walk": "markov_walk"}


def cmd_gen_traces(a, cfg: RunConfig) -> None:
    seed = cfg.require_seed()
    kind = _KINDS[a.kind]
    grid = cfg.make_grid()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(a.n):
        params = {"T": a.T}
        if kind == "constant":
            if a.c is None:
                raise CliError("--kind constant needs --c")
            params["c"] = a.c
        else:
            params.update(lo=a.lo, hi=a.hi)
            if kind == "square_wave":
                # trace i is the same wave shifted by a seed-dependent phase
                params.update(period=a.period, phase=(seed + i) % (2 * a.period))
            else:
                params["p_stay"] = a.p_stay
        tr = generate_trace(kind, params, seed + i, grid)
        path = out / f"trace_{i:03d}.csv"
        write_trace(tr, path)
        files.append(str(path))
    _dump_json(_envelope(cfg, "gen-traces", {"kind": kind, "files": files}), a.manifest)


def cmd_emulate(a, cfg: RunConfig) -> None:
    seed = cfg.require_seed()
    grid = cfg.make_grid()
    trace = _read_trace_checked(a.trace, grid)
    res = run_session(trace, cfg.make_video(), cfg.make_player(), seed)
    write_log(res.log, a.out_log)
    body = {"log": a.out_log, "metrics": compute_metrics(res).to_dict(),
            "play_time_s": res.play_time_s, "rebuffer_time_s": res.rebuffer_time_s,
            "startup_time_s": res.startup_time_s, "chunks": len(res.log)}
    _dump_json(_envelope(cfg, "emulate", body), a.metrics)


def cmd_abduct(a, cfg: RunConfig) -> None:
    seed = cfg.require_seed()
    log = _read_log_checked(a.log)
    if len(log) == 0:
        raise CliError("log has no chunks")
    model = cfg.make_model()
    T = a.T or window_index(log.chunks[-1].end_s, model.grid)
    res = abduct(model, log, int(cfg.samples), seed, T)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(res.map_trace, out / "map.csv")
    paths = []
    for k, tr in enumerate(res.samples, start=1):
        p = out / f"sample_{k}.csv"
        write_trace(tr, p)
        paths.append(str(p))
    write_trace(baseline_reconstruct(log, model.grid, T), out / "baseline.csv")
    body = res.to_dict(paths)
    body.update(map_trace=str(out / "map.csv"), baseline_trace=str(out / "baseline.csv"))
    _dump_json(_envelope(cfg, "abduct", body), str(out / "abduction.json"))


_CHANGE_KEYS = {"abr": ("player", "abr"), "buffer": ("player", "buffer_cap_s"),
                "buffer_cap_s": ("player", "buffer_cap_s"), "backend": ("player", "backend"),
                "ladder_cap": ("video", "ladder_cap_mbps"), "ladder_cap_mbps": ("video", "ladder_cap_mbps"),
                "abr_params": ("player", "abr_params")}


def cmd_whatif(a, cfg: RunConfig) -> None:
    seed = cfg.require_seed()
    log = _read_log_checked(a.log)
    model = cfg.make_model()
    setting_a = Setting(cfg.make_video(), cfg.make_player(), seed)
    cfg_b = RunConfig(**{k: (dict(v) if isinstance(v, dict) else v) for k, v in asdict(cfg).items()})
    changes = _parse_pairs(a.change or [], "--change")
    for k, v in changes.items():
        if k == "ladder" and v in ("full", "upgrade"):
            cfg_b.video["ladder_cap_mbps"] = None
            continue
        if k not in _CHANGE_KEYS:
            raise CliError(f"unknown --change key {k!r}; choose from {sorted([*_CHANGE_KEYS, 'ladder'])}")
        section, key = _CHANGE_KEYS[k]
        getattr(cfg_b, section)[key] = v
    setting_b = Setting(cfg_b.make_video(), cfg_b.make_player(), seed)
    truth = _read_trace_checked(a.with_gtbw, model.grid) if a.with_gtbw else None
    rep = whatif_counterfactual(log, setting_b, model, int(cfg.samples), seed, truth, setting_a, trim=cfg.trim)
    body = rep.to_dict()
    body["changes"] = changes
    _dump_json(_envelope(cfg, "whatif", body), a.out)


def cmd_predict(a, cfg: RunConfig) -> None:
    log = _read_log_checked(a.log)
    if a.prefix is not None:
        log = log.prefix(a.prefix)
    if len(log) == 0:
        raise CliError("prediction needs a non-empty log prefix")
    try:
        sizes = [int(s) for s in a.candidates.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"--candidates must be comma-separated integers, got {a.candidates!r}") from None
    if not sizes or min(sizes) <= 0:
        raise CliError("--candidates needs at least one positive size")
    if a.predictor == "associational":
        preds = [{"size_bytes": s, "download_s": associational_predictor(log, s)} for s in sizes]
    else:
        out = predict_next_download(log, sizes, cfg.make_model(), now_s=a.now, mode=a.mode)
        preds = [p.to_dict() for p in out]
    body = {"predictor": a.predictor, "prefix_chunks": len(log), "predictions": preds}
    _dump_json(_envelope(cfg, "predict", body), a.out)


def cmd_f_accuracy(a, cfg: RunConfig) -> None:
    seed = cfg.require_seed()
    samples = f_accuracy_sweep(seed, experiments=a.experiments, payloads=a.payloads)
    rows = error_cdf(samples)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rel_error", "cdf"])
        for e, p in rows:
            w.writerow([repr(e), repr(p)])
    within = sum(abs(s.predicted_mbps - s.observed_mbps) <= 1.0 for s in samples) / len(samples)
    body = {"cdf": a.out, "n": len(samples), "within_1mbps": within,
            "ranges": {k: list(v) for k, v in F_SWEEP.items()}}
    _dump_json(_envelope(cfg, "f-accuracy", body), a.summary)


def cmd_estimate(a, cfg: RunConfig) -> None:
    rtt = a.rtt if a.rtt is not None else float(cfg.player["delay_s"])
    w = TcpState(cwnd=a.cwnd, ssthresh=a.ssthresh, rto=max(0.2, 2 * rtt) if a.rto is None else a.rto,
                 min_rtt=rtt, last_send=a.last_send, srtt=rtt)
    y = estimate_throughput(a.c, w, a.size)
    _dump_json(_envelope(cfg, "estimate", {"throughput_mbps": y, "download_s": a.size * 8 / (y * 1e6) if y > 0 else None}),
               None)


# --- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _add_common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help="run-config JSON; flags take precedence")
    if seed:
        p.add_argument("--seed", type=int)


def _add_model(p):
    p.add_argument("--sigma", type=float, help="emission noise (Mbps)")
    p.add_argument("--p-stay", dest="p_stay", type=float)
    p.add_argument("--delta", type=float, help="window length (s)")
    p.add_argument("--eps", type=float, help="capacity step (Mbps)")
    p.add_argument("--samples", type=int, help="K sampled traces (default 5)")


def _add_player(p):
    p.add_argument("--abr", help="mpc | bba | bola | fixed")
    p.add_argument("--abr-param", action="append", metavar="KEY=VALUE")
    p.add_argument("--buffer", type=float, help="buffer cap (s)")
    p.add_argument("--delay", type=float, help="RTT (s)")
    p.add_argument("--backend", choices=("model_f", "round_sim"))
    p.add_argument("--ladder-cap", dest="ladder_cap", type=float, help="drop rungs above this bitrate (Mbps)")
    p.add_argument("--chunks", type=int, help="chunks in the video")
    p.add_argument("--chunk-duration", dest="chunk_duration", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="veritas", description=__doc__)
    ap.add_argument("--version", action="version", version=f"veritas {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-traces", help="write synthetic capacity traces")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=sorted(_KINDS))
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--T", type=int, default=120, help="windows per trace")
    p.add_argument("--c", type=float)
    p.add_argument("--lo", type=float, default=2.0)
    p.add_argument("--hi", type=float, default=8.0)
    p.add_argument("--period", type=int, default=12, help="windows per square-wave level")
    p.add_argument("--p-stay", dest="p_stay", type=float, default=0.8)
    p.add_argument("--out", default="traces")
    p.add_argument("--manifest", help="manifest JSON path (default stdout)")
    p.set_defaults(fn=cmd_gen_traces)

    p = sub.add_parser("emulate", help="run a session over a trace (setting A)")
    _add_common(p)
    _add_player(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--out-log", dest="out_log", required=True)
    p.add_argument("--metrics", help="metrics JSON path (default stdout)")
    p.set_defaults(fn=cmd_emulate)

    p = sub.add_parser("abduct", help="infer capacity traces from a session log")
    _add_common(p)
    _add_model(p)
    p.add_argument("--log", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--T", type=int, help="windows to reconstruct (default: session length)")
    p.set_defaults(fn=cmd_abduct)

    p = sub.add_parser("whatif", help="counterfactual replay of a changed setting")
    _add_common(p)
    _add_model(p)
    _add_player(p)
    p.add_argument("--log", required=True)
    p.add_argument("--change", action="append", metavar="KEY=VALUE",
                   help="abr=bba, buffer=30, ladder=full, ladder_cap=4.0, backend=round_sim")
    p.add_argument("--with-gtbw", dest="with_gtbw", metavar="TRACE_CSV")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_whatif)

    p = sub.add_parser("predict", help="download-time prediction for the next chunk")
    _add_common(p, seed=False)
    _add_model(p)
    p.add_argument("--log", required=True)
    p.add_argument("--candidates", required=True, help="comma-separated sizes in bytes")
    p.add_argument("--prefix", type=int, help="use only the first N chunks")
    p.add_argument("--now", type=float, help="request time (default: end of last chunk)")
    p.add_argument("--predictor", choices=("veritas", "associational"), default="veritas")
    p.add_argument("--mode", choices=("map", "posterior"), default="map")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("f-accuracy", help="estimator vs round-level backend error CDF")
    _add_common(p)
    p.add_argument("--experiments", type=int, default=60)
    p.add_argument("--payloads", type=int, default=40)
    p.add_argument("--out", required=True, help="CDF CSV path")
    p.add_argument("--summary", help="summary JSON path (default stdout)")
    p.set_defaults(fn=cmd_f_accuracy)

    p = sub.add_parser("estimate", help="evaluate f once")
    _add_common(p, seed=False)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--cwnd", type=int, default=10)
    p.add_argument("--ssthresh", type=int, default=0x7FFFFFFF)
    p.add_argument("--last-send", dest="last_send", type=float, default=0.0)
    p.add_argument("--rtt", type=float)
    p.add_argument("--rto", type=float)
    p.set_defaults(fn=cmd_estimate)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        a = build_parser().parse_args(argv)
        cfg = _apply_common(RunConfig.load(getattr(a, "config", None)), a)
        a.fn(a, cfg)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except (CliError, ValueError, OSError, KeyError) as e:
        msg = str(e).replace("\n", " ")
        print(f"veritas: error: {msg}", file=sys.stderr)
        return 2 if isinstance(e, CliError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
