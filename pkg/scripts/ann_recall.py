"""Recall@k of the graph index against an exact scan, across ef_search.

Two descriptor families are compared: isotropic random unit vectors (the
hardest case for any proximity graph, all pairwise similarities near zero)
and trajectory-like vectors drawn from a slowly drifting latent walk, which is
closer to what consecutive camera frames produce.
"""

import argparse
import time

import numpy as np

from lcdstream.hnsw import HnswIndex, HnswParams


def isotropic(rng, n, dim):
    return rng.standard_normal((n, dim))


def trajectory(rng, n, dim, rho=0.9, noise=0.3):
    out = np.empty((n, dim))
    z = rng.standard_normal(dim)
    for i in range(n):
        z = rho * z + np.sqrt(1 - rho * rho) * rng.standard_normal(dim)
        out[i] = z
    return out + noise * rng.standard_normal((n, dim))


def evaluate(data, queries, k, M, ef_construction, efs):
    unit = data / np.linalg.norm(data, axis=1, keepdims=True)
    idx = HnswIndex(data.shape[1], HnswParams(M=M, ef_construction=ef_construction), capacity=len(data))
    t0 = time.perf_counter()
    for i, v in enumerate(data):
        idx.insert(i, v)
    build = time.perf_counter() - t0
    qn = queries / np.linalg.norm(queries, axis=1, keepdims=True)
    truth = np.argsort(-(qn @ unit.T), axis=1, kind="stable")[:, :k]
    rows = []
    for ef in efs:
        t0 = time.perf_counter()
        res = [idx.knn_search(q, k, ef_search=max(ef, k)) for q in queries]
        ms = 1e3 * (time.perf_counter() - t0) / len(queries)
        hits = sum(len({r.frame_id for r in rr} & set(t.tolist())) for rr, t in zip(res, truth))
        rows.append((ef, hits / (k * len(queries)), ms))
    return build, rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--queries", type=int, default=1000)
    ap.add_argument("--dim", type=int, default=1280)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--M", type=int, default=48)
    ap.add_argument("--ef-construction", type=int, default=200)
    ap.add_argument("--ef", type=str, default="10,20,40,100,200,400")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    efs = [int(v) for v in args.ef.split(",")]
    rng = np.random.default_rng(args.seed)
    for name, gen in (("isotropic", isotropic), ("trajectory", trajectory)):
        data = gen(rng, args.n + args.queries, args.dim)
        # held-out queries are spread along the whole sequence
        mask = np.zeros(len(data), bool)
        mask[rng.choice(len(data), args.queries, replace=False)] = True
        build, rows = evaluate(data[~mask], data[mask], args.k, args.M, args.ef_construction, efs)
        print(f"{name}: build {build:.1f} s")
        print("  ef_search  recall@k  ms/query")
        for ef, rec, ms in rows:
            print(f"  {ef:9d}  {rec:8.4f}  {ms:8.3f}")


if __name__ == "__main__":
    main()
