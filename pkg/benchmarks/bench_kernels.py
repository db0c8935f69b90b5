"""Time the compiled walk/skip-gram kernels against the pure-Python reference.

Usage::

    python3 benchmarks/bench_kernels.py [--relations 60] [--dim 64] [--repeats 2] [--json out.json]

Both backends run the same seeded workload through the public
``generate_walks``/``train_skipgram`` entry points; the script also checks
that they produce the same walks and (to float tolerance) the same vectors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import types

import numpy as np

from indlp import _kernels_py, kernels, relwalk
from indlp.kg import build_graph
from indlp.relwalk import WalkConfig, generate_walks, train_skipgram
from indlp.weidner import build_network


def workload(n_relations: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    n_entities = 4 * n_relations
    triples = [(f"e{rng.integers(n_entities)}", f"r{rng.integers(n_relations)}", f"e{rng.integers(n_entities)}")
               for _ in range(20 * n_relations)]
    return build_network(build_graph(triples))


def backend(module) -> types.SimpleNamespace:
    return types.SimpleNamespace(walk_kernel=module.walk_kernel, sgns_kernel=module.sgns_kernel,
                                 IMPLEMENTATION=module.IMPLEMENTATION)


def best_of(fn, repeats: int):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(args) -> dict:
    net = workload(args.relations)
    config = WalkConfig(dim=args.dim, epochs=args.epochs, num_walks_per_node=10, walk_length=10,
                        window_size=5, seed=0)
    impls = {"python": backend(_kernels_py)}
    if kernels.COMPILED:
        impls["cython"] = backend(kernels)
    results, outputs = {}, {}
    saved = relwalk.kernels
    try:
        for name, impl in impls.items():
            relwalk.kernels = impl
            t_walk, corpus = best_of(lambda: generate_walks(net, config), args.repeats)
            t_sgns, emb = best_of(lambda: train_skipgram(corpus, config), args.repeats)
            steps = int(len(corpus.flat))
            results[name] = {"walk_s": t_walk, "sgns_s": t_sgns, "walk_tokens": steps,
                             "walk_tokens_per_s": steps / t_walk}
            outputs[name] = (corpus.flat, emb.vectors)
    finally:
        relwalk.kernels = saved
    doc = {"relations": net.n_nodes, "edges": net.n_edges, "dim": args.dim, "epochs": args.epochs,
           "results": results}
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        doc["speedup"] = {"walk": py["walk_s"] / cy["walk_s"], "sgns": py["sgns_s"] / cy["sgns_s"]}
        doc["walks_identical"] = bool(np.array_equal(outputs["python"][0], outputs["cython"][0]))
        doc["vectors_max_abs_diff"] = float(np.max(np.abs(outputs["python"][1] - outputs["cython"][1])))
    return doc


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--relations", type=int, default=60)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=2)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    doc = run(args)
    print(f"network: {doc['relations']} relations, {doc['edges']} edges; dim={doc['dim']} epochs={doc['epochs']}")
    print(f"{'backend':<8} {'walks (s)':>10} {'skip-gram (s)':>14} {'tokens/s':>12}")
    for name, r in doc["results"].items():
        print(f"{name:<8} {r['walk_s']:>10.4f} {r['sgns_s']:>14.4f} {r['walk_tokens_per_s']:>12.0f}")
    if "speedup" in doc:
        print(f"speedup: walks x{doc['speedup']['walk']:.1f}, skip-gram x{doc['speedup']['sgns']:.1f}; "
              f"walks identical: {doc['walks_identical']}; "
              f"max |vector diff|: {doc['vectors_max_abs_diff']:.2e}")
    else:
        print("compiled kernels not built; only the Python reference was timed")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
