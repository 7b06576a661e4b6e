"""Command line entry point: ``lcdstream {run,generate,score,sweep}``."""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path
from typing import List, Optional

from .evaluation.scoring import score
from .evaluation.sweep import AXES, sweep
from .evaluation.synthetic import SyntheticConfig, generate_synthetic
from .formats import MAGIC, container_dims, iter_records, read_detections, read_ground_truth
from .frame_store import IngestError
from .geometry import RansacParams
from .hnsw import HnswParams
from .pipeline import LoopClosureDetector, PipelineConfig, detections_to_csv


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector parameters")
    g.add_argument("--ef", type=int, default=40, help="nearest elements returned by graph search (ef_search)")
    g.add_argument("--ef-construction", type=int, default=200)
    g.add_argument("--M", type=int, default=48, help="max connections per element per layer")
    g.add_argument("--psi", type=float, default=40.0, help="search area time constant, seconds")
    g.add_argument("--phi", "--fps", dest="phi", type=float, default=None,
                   help="frame rate of the stream; defaults to the timestamps' rate")
    g.add_argument("--m", type=int, default=256, help="hashing bits")
    g.add_argument("--epsilon", type=float, default=0.7, help="binary ratio test ratio")
    g.add_argument("--tau", type=int, default=20, help="geometric verification inliers")
    g.add_argument("--beta", type=int, default=2, help="temporal consistency")
    g.add_argument("--n", type=int, default=1, help="number of returned nearest neighbours")
    g.add_argument("--window", type=int, default=10, help="frame window for temporal consistency")
    g.add_argument("--ransac-iterations", type=int, default=500)
    g.add_argument("--threshold", type=float, default=1.0, help="epipolar threshold in pixels")
    g.add_argument("--seed", type=int, default=0)


def _dims(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return container_dims(path)
    first = next(iter_records(path), None)
    if first is None:
        raise IngestError("empty descriptor file")
    return first.global_values.shape[0], first.locals.shape[1]


def _infer_fps(path: Path) -> float:
    stamps = [r.timestamp for r in itertools.islice(iter_records(path), 50)]
    if len(stamps) < 2 or stamps[-1] <= stamps[0]:
        raise ValueError("cannot infer the frame rate from timestamps; pass --phi")
    return (len(stamps) - 1) / (stamps[-1] - stamps[0])


def _config(args, path: Path) -> PipelineConfig:
    gdim, ldim = _dims(path)
    phi = args.phi if args.phi is not None else _infer_fps(path)
    return PipelineConfig(
        psi=args.psi,
        phi=phi,
        n=args.n,
        beta=args.beta,
        epsilon=args.epsilon,
        consistency_window=args.window,
        hnsw=HnswParams(M=args.M, ef_construction=args.ef_construction, ef_search=args.ef, rng_seed=args.seed),
        ransac=RansacParams(
            max_iterations=args.ransac_iterations, epipolar_threshold=args.threshold,
            min_inliers=args.tau, rng_seed=args.seed,
        ),
        hash_bits=args.m,
        hash_seed=args.seed,
        global_dim=gdim,
        local_dim=ldim,
    )


def cmd_run(args) -> int:
    path = Path(args.data)
    cfg = _config(args, path)
    det = LoopClosureDetector(cfg)
    detections = list(det.run(iter_records(path)))
    text = detections_to_csv(detections)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.graph_out:
        Path(args.graph_out).write_bytes(det.index.serialize())
    if args.timings:
        print(json.dumps(det.mean_timings_ms(), indent=2), file=sys.stderr)
    return 0


def cmd_generate(args) -> int:
    cfg = SyntheticConfig(
        n_frames=args.frames,
        revisits=tuple(tuple(int(v) for v in seg.split(":")) for seg in args.revisit),
        fps=args.fps,
        psi=args.psi,
        global_dim=args.global_dim,
        local_dim=args.local_dim,
        locals_per_frame=args.locals,
        global_noise=args.global_noise,
        bit_flip_rate=args.bit_flip_rate,
        seed=args.seed,
    )
    ds = generate_synthetic(cfg)
    data, gt = ds.save(args.out)
    print(f"wrote {len(ds.records)} frames to {data} and {len(ds.ground_truth)} loop queries to {gt}")
    return 0


def cmd_score(args) -> int:
    dets = read_detections(args.detections)
    gt = read_ground_truth(args.ground_truth)
    report = score(dets, gt, args.tolerance)
    print(json.dumps(report.as_dict(), indent=2))
    return 0


def cmd_sweep(args) -> int:
    path = Path(args.data)
    base = _config(args, path)
    records = list(iter_records(path))
    gt = read_ground_truth(args.ground_truth)
    cast = float if args.axis == "epsilon" else int
    values = [cast(v) for v in args.values.split(",")]
    result = sweep(args.axis, values, records, gt, base, args.tolerance)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    pr_path = prefix.with_name(prefix.name + f"_{args.axis}_pr.csv")
    time_path = prefix.with_name(prefix.name + f"_{args.axis}_timing.csv")
    pr_path.write_text(result.pr_csv())
    time_path.write_text(result.timing_csv())
    sys.stdout.write(result.pr_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcdstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="detect loops in a descriptor file, write detections CSV")
    p.add_argument("data")
    p.add_argument("-o", "--output")
    p.add_argument("--graph-out", help="write the canonical graph serialization here")
    p.add_argument("--timings", action="store_true", help="print mean per-stage times to stderr")
    _add_params(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("generate", help="write a synthetic planted-loop dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=2000)
    p.add_argument("--revisit", action="append", default=None, metavar="START:LENGTH:OFFSET")
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--psi", type=float, default=40.0)
    p.add_argument("--global-dim", type=int, default=1280)
    p.add_argument("--local-dim", type=int, default=128)
    p.add_argument("--locals", type=int, default=150)
    p.add_argument("--global-noise", type=float, default=0.02)
    p.add_argument("--bit-flip-rate", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", help="precision/recall of detections against ground truth")
    p.add_argument("detections")
    p.add_argument("ground_truth")
    p.add_argument("--tolerance", type=int, default=10)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="run the pipeline over values of one parameter")
    p.add_argument("data")
    p.add_argument("ground_truth")
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out-prefix", default="sweep")
    p.add_argument("--tolerance", type=int, default=10)
    _add_params(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "revisit", "unset") is None:
        args.revisit = ["1000:800:1000"]
    try:
        return args.func(args)
    except (IngestError, ValueError, OSError, KeyError) as exc:
        print(f"lcdstream {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
