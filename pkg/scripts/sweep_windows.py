"""Latency sweeps over the multiplier m and both cache windows.

Generates a seeded corpus, then runs three sweeps through the CLI harness:
m in 1..5 at the default windows, w^t in {500, 1000, 2000, 4000} and
w^s in {5, 10, 20, 40}. Prints mean StreamLAAL per sweep point.
"""
import argparse
import csv
import json
from collections import defaultdict
from pathlib import Path

from streamsst.cli import main as cli


def summarize(csv_path, key):
    acc = defaultdict(list)
    for row in csv.DictReader(open(csv_path)):
        if row["stream_laal_ms"]:
            acc[row[key]].append((float(row["stream_laal_ms"]), float(row["stream_laal_ca_ms"]), float(row["rtf"])))
    for k in sorted(acc, key=int):
        vals = acc[k]
        n = len(vals)
        print(f"  {key}={k:>5}  StreamLAAL={sum(v[0] for v in vals) / n:9.1f} ms  "
              f"CA={sum(v[1] for v in vals) / n:9.1f} ms  RTF={sum(v[2] for v in vals) / n:.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="sweeps")
    ap.add_argument("--talks", type=int, default=3)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "config.json"
    cfg.write_text(json.dumps({"corpus": {"utterances_per_talk": [3, 5]}}))
    manifest = out / "manifest.json"
    cli(["gen-corpus", "--config", str(cfg), "--seed", str(args.seed), "--n-talks", str(args.talks),
         "--out", str(manifest)])
    sweeps = {
        "m": ["--m", "1", "2", "3", "4", "5"],
        "w_t": ["--m", "1", "--wt", "500", "1000", "2000", "4000"],
        "w_s": ["--m", "1", "--ws", "5", "10", "20", "40"],
    }
    for key, flags in sweeps.items():
        run_dir = out / f"sweep_{key}"
        code = cli(["run", "--config", str(cfg), "--manifest", str(manifest), "--out-dir", str(run_dir),
                    "--jobs", str(args.jobs), *flags])
        if code:
            raise SystemExit(code)
        print(f"{key} sweep ({run_dir / 'sweep.csv'}):")
        summarize(run_dir / "sweep.csv", key)


if __name__ == "__main__":
    main()
