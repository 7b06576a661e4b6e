"""One-axis sweeps on the synthetic benchmark; writes PR and timing CSV tables."""

import argparse
from pathlib import Path

from lcdstream.evaluation import SyntheticConfig, generate_synthetic, sweep
from lcdstream.pipeline import PipelineConfig

DEFAULT_VALUES = {
    "M": "6,12,24,48",
    "ef_search": "10,20,40,80",
    "m": "64,128,256",
    "epsilon": "0.4,0.5,0.6,0.7,0.8",
    "n": "1,2,3",
}


def revisit_for(n_frames):
    # second half revisits the first half, as in the default 2000-frame layout
    half = n_frames // 2
    return ((half, (4 * n_frames) // 10, half),)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axes", default="M,ef_search,m,epsilon,n")
    ap.add_argument("--frames", type=int, default=2000)
    ap.add_argument("--bit-flip-rate", type=float, default=0.15)
    ap.add_argument("--out", type=Path, default=Path("sweeps"))
    args = ap.parse_args()
    ds = generate_synthetic(SyntheticConfig(n_frames=args.frames, revisits=revisit_for(args.frames), bit_flip_rate=args.bit_flip_rate))
    base = PipelineConfig(phi=ds.fps)
    args.out.mkdir(parents=True, exist_ok=True)
    for axis in args.axes.split(","):
        cast = float if axis == "epsilon" else int
        values = [cast(v) for v in DEFAULT_VALUES[axis].split(",")]
        res = sweep(axis, values, ds.records, ds.ground_truth, base)
        (args.out / f"{axis}_pr.csv").write_text(res.pr_csv())
        (args.out / f"{axis}_timing.csv").write_text(res.timing_csv())
        print(res.pr_csv())


if __name__ == "__main__":
    main()
