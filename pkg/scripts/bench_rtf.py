#!/usr/bin/env python3
"""RTF sweep: run the streaming engine on synthetic input at several
durations and print the per-stage real-time-factor breakdown.

Useful sanity checks on a new machine:
  * total RTF < 1.0 at paper scale on one core (real-time headroom),
  * the vocoder dominating the breakdown,
  * RTF roughly flat in input length (no per-stream state growth).

    python3 scripts/bench_rtf.py --preset paper-scale --seconds 2 5 10
"""

import argparse
import json

from vcstream import config as cfgmod
from vcstream import engine
from vcstream.container import WeightContainer, init_random

STAGE_ORDER = ("frontend", "encoders", "decoder", "vocoder", "other")


def run(container, seconds, seed):
    rows = []
    for s in seconds:
        rep = engine.bench(container, seconds=s, seed=seed)
        rows.append(rep.as_dict())
        cells = " ".join(f"{rep.stage_rtf[k]:8.4f}" for k in STAGE_ORDER)
        print(f"{s:7.1f}s  rtf={rep.rtf:6.4f}  [{cells}]"
              f"  max_frame={rep.max_frame_seconds * 1e3:6.2f} ms")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="paper-scale",
                    choices=sorted(cfgmod.PRESETS))
    ap.add_argument("--weights", help="bench an existing container instead")
    ap.add_argument("--seconds", type=float, nargs="+", default=[2.0, 5.0, 10.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write all reports to this JSON file")
    args = ap.parse_args()

    if args.weights:
        container = WeightContainer.load(args.weights)
        label = args.weights
    else:
        container = init_random(cfgmod.preset(args.preset), seed=args.seed)
        label = f"preset {args.preset}"
    print(f"benching {label}; stages: {' '.join(STAGE_ORDER)}")
    rows = run(container, args.seconds, args.seed)

    rtfs = [r["rtf"] for r in rows]
    spread = (max(rtfs) - min(rtfs)) / max(rtfs)
    print(f"rtf spread across lengths: {spread:.1%}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump({"label": label, "runs": rows}, f, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
