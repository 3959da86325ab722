"""Long-stream soak: cache bounds, resident memory and real-time factor.

    python scripts/soak.py --minutes 30 --m 1 --ws 10 --wt 1000
"""
import argparse
import json
import time

import psutil

from streamsst.corpus import random_chunks
from streamsst.decoder import Decoder, DecoderConfig
from streamsst.encoder import CHUNK_MS, EncoderConfig, StreamEncoder
from streamsst.generation import GenerationConstraints
from streamsst.session import run_session


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--minutes", type=float, default=30.0)
    ap.add_argument("--warmup-minutes", type=float, default=5.0)
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--ws", type=int, default=10)
    ap.add_argument("--wt", type=int, default=1000)
    ap.add_argument("--beam", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trace", default="soak_trace.jsonl")
    args = ap.parse_args()

    n_chunks = int(args.minutes * 60_000 // CHUNK_MS)
    warm = int(args.warmup_minutes * 60_000 // CHUNK_MS) // args.m
    enc = StreamEncoder(EncoderConfig(window=args.ws), seed=args.seed)
    dec = Decoder(DecoderConfig(window=args.wt), seed=args.seed + 1)
    proc = psutil.Process()
    samples = []

    def probe(s):
        samples.append((s.cache.ring_len, s.enc_cache.n_chunks, proc.memory_info().rss))
        if len(samples) % 200 == 0:
            print(f"  {s.state.stream_ms / 60_000:6.1f} min  tokens={s.state.n_tokens}  "
                  f"rss={samples[-1][2] / 2**20:.1f} MiB", flush=True)

    t0 = time.perf_counter()
    with open(args.trace, "w") as sink:
        tr = run_session(random_chunks(n_chunks, args.seed), args.m, enc, dec,
                         GenerationConstraints(beam_width=args.beam), sink=sink, retain=False,
                         on_step=probe, ca_mode="wallclock")
    rss = [s[2] for s in samples]
    base = rss[min(warm, len(rss) - 1)]
    print(json.dumps({
        "chunks": n_chunks,
        "tokens": tr.n_tokens,
        "max_ring": max(s[0] for s in samples),
        "max_encoder_chunks": max(s[1] for s in samples),
        "rss_growth_after_warmup": round(max(rss[warm:] or [base]) / base - 1, 4),
        "rtf": round(tr.wall_compute_ms / tr.duration_ms, 4),
        "truncated_turns": tr.truncated_turns,
        "elapsed_s": round(time.perf_counter() - t0, 1),
    }, indent=1))


if __name__ == "__main__":
    main()
