"""Command-line harness: gen-corpus, build-traj, run, eval."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import corpus as corpus_mod
from .config import HarnessConfig
from .decoder import Decoder
from .encoder import CHUNK_MS, StreamEncoder
from .errors import ConfigError, InvariantViolation, StreamSSTError
from .metrics import latency_report, laal
from .records import emit_training_records
from .session import run_session
from .trajectory import augment_latency, build_robust_segments, utterance_trajectory

log = logging.getLogger("streamsst")

OUT_ENV = "STREAMSST_OUT"
CSV_FIELDS = ["talk_id", "m", "w_s", "w_t", "stream_laal_ms", "stream_laal_ca_ms", "rtf", "tokens", "truncated_turns"]
EXIT_CODES = {
    "config_error": 2,
    "io_error": 3,
    "stream_discontinuity": 4,
    "invariant_violation": 5,
    "alignment_error": 6,
    "segmentation_error": 6,
}


def _out_dir(arg: str | None, default: str) -> Path:
    return Path(os.environ.get(OUT_ENV) or arg or default)


def _load_config(args) -> HarnessConfig:
    cfg = HarnessConfig.load(args.config) if getattr(args, "config", None) else HarnessConfig()
    overrides = {}
    for name in ("seed", "m", "w_s", "w_t", "ca_mode"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


# gen-corpus ------------------------------------------------------------------

def cmd_gen_corpus(args) -> int:
    cfg = _load_config(args)
    params = cfg.corpus
    if args.max_utterance_ms is not None:
        params = dataclasses.replace(params, max_utterance_ms=args.max_utterance_ms)
    manifest = corpus_mod.generate_corpus(cfg.seed, args.n_talks, params)
    corpus_mod.write_manifest(manifest, args.out)
    print(json.dumps({"manifest": str(args.out), "talks": len(manifest["talks"])}))
    return 0


# build-traj ------------------------------------------------------------------

def cmd_build_traj(args) -> int:
    cfg = _load_config(args)
    M = args.M if args.M is not None else cfg.max_multiplier
    if not 1 <= M <= 12:
        raise ConfigError("M must lie in [1, 12]")
    manifest = corpus_mod.load_manifest(args.manifest)
    out = _out_dir(args.out_dir, "traj")
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(cfg.seed)
    stats = {"talks": [], "skipped": [], "errors": {}}
    n_steps = n_empty = 0
    with open(out / "trajectories.jsonl", "w") as ft, open(out / "robust_segments.jsonl", "w") as fs, \
            open(out / "training_records.jsonl", "w") as fr:
        for talk in manifest["talks"]:
            utts = corpus_mod.talk_utterances(talk)
            talk_laal = []
            for u in utts:
                try:
                    traj = utterance_trajectory(u)
                except StreamSSTError as exc:
                    stats["errors"][u.id] = str(exc)
                    continue
                for st in traj.steps:
                    ft.write(json.dumps({"talk_id": talk["id"], "utterance_id": u.id, "chunk_start": st.chunk_start,
                                         "chunk_end": st.chunk_end, "tokens": st.tokens}) + "\n")
                    n_steps += 1
                    n_empty += not st.tokens
                if u.translation:
                    talk_laal.append(laal(traj.delays_ms(), len(u.translation), u.duration_ms))
            result = build_robust_segments(utts, talk.get("duration_ms"))
            stats["skipped"].extend(result.skipped)
            stats["errors"].update(result.errors)
            for seg in result.segments:
                m = rng.randint(1, M)
                aug = augment_latency(seg.trajectory, m)
                fs.write(json.dumps({
                    "talk_id": talk["id"], "start_ms": seg.start_ms, "start_chunk": seg.start_chunk,
                    "span": seg.span, "utterance_ids": seg.utterance_ids, "m": m,
                    "steps": [{"chunk_start": s.chunk_start, "chunk_end": s.chunk_end, "tokens": s.tokens}
                              for s in aug.steps],
                }) + "\n")
                fr.write(json.dumps({"talk_id": talk["id"], "start_ms": seg.start_ms, "m": m,
                                     **emit_training_records(aug)}) + "\n")
            stats["talks"].append({
                "talk_id": talk["id"],
                "segments": len(result.segments),
                "trajectory_laal_ms": round(sum(talk_laal) / len(talk_laal), 3) if talk_laal else None,
            })
    stats["steps"] = n_steps
    stats["empty_step_ratio"] = round(n_empty / n_steps, 4) if n_steps else 0.0
    for uid, msg in stats["errors"].items():
        print(json.dumps({"warning": "alignment_error", "utterance_id": uid, "message": msg}), file=sys.stderr)
    print(json.dumps(stats, indent=1))
    return 0


# run -------------------------------------------------------------------------

def run_name(talk_id: str, m: int, ws: int, wt: int) -> str:
    return f"{talk_id}_m{m}_ws{ws}_wt{wt}"


def _fmt(x):
    return None if x != x else round(x, 3)


def run_one(cfg: HarnessConfig, talk: dict, m: int, ws: int, wt: int, out: Path) -> dict:
    enc_cfg = dataclasses.replace(cfg.encoder, window=ws)
    dec_cfg = dataclasses.replace(cfg.decoder, window=wt)
    encoder = StreamEncoder(enc_cfg, seed=cfg.seed)
    decoder = Decoder(dec_cfg, seed=cfg.seed + 1)
    name = run_name(talk["id"], m, ws, wt)
    chunks = corpus_mod.talk_chunks(talk, cfg.seed, enc_cfg.feature_dim)
    with open(out / "traces" / f"{name}.jsonl", "w") as sink:
        trace = run_session(chunks, m, encoder, decoder, cfg.constraints, cfg.cost, sink=sink, ca_mode=cfg.ca_mode)
        compute = trace.sim_compute_ms if cfg.ca_mode == "simulated" else trace.wall_compute_ms
        summary = {"type": "summary", "duration_ms": trace.duration_ms, "compute_ms": round(compute, 6),
                   "ca_mode": cfg.ca_mode, "turns": trace.turns, "truncated_turns": trace.truncated_turns}
        sink.write(json.dumps(summary) + "\n")
    ca = trace.ca_ms(cfg.ca_mode)
    for i, (g, w) in enumerate(zip(trace.delays, ca)):
        if w < g or g % CHUNK_MS or (i and g < trace.delays[i - 1]):
            raise InvariantViolation(f"{name}: token {i} has g={g} ms, ca={w} ms")
    hyp = [f"w{t}" for t in trace.tokens]
    (out / "hyps" / f"{name}.txt").write_text(" ".join(hyp) + "\n")
    report = latency_report(hyp, trace.delays, ca, corpus_mod.talk_references(talk),
                            trace.duration_ms or CHUNK_MS, compute, cfg.weighting)
    report.extra = {"talk_id": talk["id"], "m": m, "w_s": ws, "w_t": wt, "truncated_turns": trace.truncated_turns}
    (out / "reports" / f"{name}.json").write_text(json.dumps(report.to_json(), indent=1, sort_keys=True) + "\n")
    return {"talk_id": talk["id"], "m": m, "w_s": ws, "w_t": wt,
            "stream_laal_ms": _fmt(report.stream_laal_ms), "stream_laal_ca_ms": _fmt(report.stream_laal_ca_ms),
            "rtf": round(report.rtf, 6), "tokens": report.tokens, "truncated_turns": trace.truncated_turns}


def _run_job(payload):
    cfg_dict, talk, m, ws, wt, out = payload
    return run_one(HarnessConfig.from_dict(cfg_dict), talk, m, ws, wt, Path(out))


def cmd_run(args) -> int:
    cfg = _load_config(args)
    manifest_path = args.manifest or cfg.manifest
    if not manifest_path:
        raise ConfigError("no manifest given (--manifest or config 'manifest')")
    manifest = corpus_mod.load_manifest(manifest_path)
    out = _out_dir(args.out_dir, cfg.out_dir)
    for sub in ("traces", "hyps", "reports"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    jobs = [(talk, m, ws, wt) for talk in manifest["talks"] for m in cfg.m for ws in cfg.w_s for wt in cfg.w_t]
    if args.jobs > 1 and len(jobs) > 1:
        payloads = [(cfg.to_dict(), t, m, ws, wt, str(out)) for t, m, ws, wt in jobs]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_job, payloads))
    else:
        rows = [run_one(cfg, t, m, ws, wt, out) for t, m, ws, wt in jobs]
    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    print(json.dumps({"runs": len(rows), "csv": str(out / "sweep.csv")}))
    return 0


# eval ------------------------------------------------------------------------

def read_trace(path) -> dict:
    tokens, delays, ca, summary = [], [], [], {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec.get("type") == "token":
                tokens.append(rec["text"])
                delays.append(rec["g_ms"])
                ca.append(rec["wall_ms"])
            elif rec.get("type") == "summary":
                summary = rec
    return {"tokens": tokens, "delays": delays, "ca": ca, "summary": summary}


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    manifest = corpus_mod.load_manifest(args.manifest)
    talks = {t["id"]: t for t in manifest["talks"]}
    talk_id = args.talk or (next(iter(talks)) if len(talks) == 1 else None)
    if talk_id not in talks:
        raise ConfigError(f"talk {args.talk!r} not in manifest (choose with --talk)")
    talk = talks[talk_id]
    tr = read_trace(args.trace)
    duration = tr["summary"].get("duration_ms") or talk["duration_ms"]
    compute = tr["summary"].get("compute_ms", 0.0)
    report = latency_report(tr["tokens"], tr["delays"], tr["ca"], corpus_mod.talk_references(talk),
                            duration, compute, cfg.weighting)
    text = json.dumps(report.to_json(), indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


# entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamsst", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="write a seeded synthetic talk manifest")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-talks", type=int, default=3)
    g.add_argument("--max-utterance-ms", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_corpus)

    b = sub.add_parser("build-traj", help="trajectories, robust segments and training records")
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--manifest", required=True)
    b.add_argument("--M", type=int, help="maximum latency multiplier for augmentation")
    b.add_argument("--out-dir")
    b.set_defaults(func=cmd_build_traj)

    r = sub.add_parser("run", help="stream every talk through the session for each sweep point")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--manifest")
    r.add_argument("--out-dir")
    r.add_argument("--m", type=int, nargs="+")
    r.add_argument("--ws", dest="w_s", type=int, nargs="+")
    r.add_argument("--wt", dest="w_t", type=int, nargs="+")
    r.add_argument("--ca-mode", choices=["simulated", "wallclock"])
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="latency report for one trace")
    e.add_argument("--config")
    e.add_argument("--trace", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--talk")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except StreamSSTError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES.get(exc.code, 1)
    except OSError as exc:
        print(json.dumps({"error": "io_error", "message": str(exc)}), file=sys.stderr)
        return EXIT_CODES["io_error"]


if __name__ == "__main__":
    sys.exit(main())
