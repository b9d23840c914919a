"""Command line interface.

One subcommand per pipeline stage plus the exploration helpers; run
``exactbn <command> --help`` for the flags of each.  Exit codes: 0 success,
2 bad flags or values, 3 unreadable/invalid data, 4 cache file problems,
5 too many variables, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .dataset import Dataset, load, members
from .errors import (CacheFormatError, DataError, ExactBNError,
                     TooManyVariablesError)
from .explore import (ess_sweep, fit_expected, predict_logp, rotations,
                      sample, swaps, write_rotations_csv, write_sample,
                      write_swaps_csv, write_sweep_csv)
from .local_scores import (compute_all, compute_all_parallel, load_store,
                           merge_shards, plan_shards, save_shard, save_store)
from .optimizer import (all_best_parents, learn_from_store, network_score,
                        ord_to_net)
from .scoring import BDE, SCORE_KINDS, ScoreSpec

CACHE_DIR_VAR = "EXACTBN_CACHE_DIR"


# ---------------------------------------------------------------------------
# small parsers

def _parse_arities(text):
    try:
        out = [int(t) for t in text.split(",")]
    except ValueError:
        raise ValueError(f"--arities must be comma-separated integers: {text!r}")
    if not out or any(a < 1 for a in out):
        raise ValueError("--arities entries must be >= 1")
    return out


def _parse_order(text, n):
    try:
        order = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ValueError(f"--order must be comma-separated integers: {text!r}")
    if sorted(order) != list(range(n)):
        raise ValueError(
            f"--order must be a permutation of 0..{n - 1}: {text!r}")
    return order


def _parse_shard(text):
    try:
        i, m = text.split("/")
        i, m = int(i), int(m)
    except ValueError:
        raise ValueError(f"--shard takes INDEX/COUNT, e.g. 0/4: {text!r}")
    if m < 1 or not 0 <= i < m:
        raise ValueError(f"--shard index out of range: {text!r}")
    return i, m


def _parse_grid(text):
    """Either comma-separated values or START:STOP:COUNT (geometric)."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            grid = np.geomspace(float(start), float(stop), int(count))
        else:
            grid = np.array([float(t) for t in text.split(",")])
    except ValueError:
        raise ValueError(f"--grid takes VALUES,... or START:STOP:COUNT: {text!r}")
    if len(grid) == 0 or not (grid > 0).all() or not np.isfinite(grid).all():
        raise ValueError("--grid values must be positive and finite")
    return [float(g) for g in grid]


def _resolve_spec(args, ess_always=False):
    kind = args.score or BDE
    if kind == BDE:
        return ScoreSpec(BDE, args.ess if args.ess is not None else 1.0)
    if args.ess is not None and not ess_always:
        raise ValueError("--ess only applies to the bde score")
    return ScoreSpec(kind)


def _load_data(args, attr="data"):
    arities = _parse_arities(args.arities) if args.arities else None
    return load(getattr(args, attr), arities=arities)


def _auto_cache_path(data_path, spec, suffix=".bnls"):
    cache_dir = os.environ.get(CACHE_DIR_VAR) or os.path.dirname(
        os.path.abspath(data_path))
    stem = os.path.splitext(os.path.basename(data_path))[0]
    tag = f"-ess{spec.ess:g}" if spec.kind == BDE else ""
    return os.path.join(cache_dir, f"{stem}-{spec.kind}{tag}{suffix}")


def _store_for(args, data):
    """Score store for a command: from --cache if given, else computed."""
    if getattr(args, "cache", None):
        store = load_store(args.cache)
        if store.n != data.n:
            raise CacheFormatError(
                f"{args.cache}: cache is for {store.n} variables, "
                f"data has {data.n}")
        if not np.array_equal(store.arities, data.arities):
            raise CacheFormatError(
                f"{args.cache}: cache arities do not match the data")
        if args.score and args.score != store.spec.kind:
            raise CacheFormatError(
                f"{args.cache}: cache was scored with {store.spec.kind}, "
                f"--score asked for {args.score}")
        if args.ess is not None and store.spec.kind == BDE \
                and args.ess != store.spec.ess:
            raise CacheFormatError(
                f"{args.cache}: cache ess {store.spec.ess!r} differs from "
                f"--ess {args.ess!r}")
        return store
    spec = _resolve_spec(args)
    jobs = getattr(args, "jobs", None)
    if jobs and jobs > 1:
        return compute_all_parallel(data, spec, jobs)
    return compute_all(data, spec)


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="") if path else None


def _emit(path, text):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# result rendering

def network_doc(network, ordering, score, spec):
    """The structured result document as a plain dict."""
    return {
        "score_spec": {
            "kind": spec.kind,
            "ess": spec.ess if spec.kind == BDE else None,
        },
        "total_score": score,
        "ordering": list(ordering),
        "parents": [sorted(members(p)) for p in network.parents],
    }


def render_network_doc(network, ordering, score, spec):
    doc = network_doc(network, ordering, score, spec)
    return json.dumps(doc, indent=2) + "\n"


def render_dot(network, names=None):
    if names is None:
        names = [f"V{v}" for v in range(network.n)]
    if len(names) != network.n:
        raise ValueError(
            f"need {network.n} names, got {len(names)}")
    quoted = ['"%s"' % name.replace('"', r'\"') for name in names]
    lines = ["digraph network {"]
    for v in range(network.n):
        lines.append(f"  {quoted[v]};")
    for v in range(network.n):
        for u in members(network.parents[v]):
            lines.append(f"  {quoted[u]} -> {quoted[v]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _read_names(path, n):
    with open(path, "r", encoding="utf-8") as fh:
        names = [line.strip() for line in fh if line.strip()]
    if len(names) != n:
        raise ValueError(f"{path}: need {n} names, found {len(names)}")
    return names


def _emit_network(args, data, network, ordering, score, spec):
    text = render_network_doc(network, ordering, score, spec)
    _emit(getattr(args, "out", None), text)
    if getattr(args, "dot", None):
        names = _read_names(args.names, data.n) if args.names else None
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(render_dot(network, names))


# ---------------------------------------------------------------------------
# subcommands

def cmd_scores(args):
    data = _load_data(args)
    spec = _resolve_spec(args)
    if args.shard:
        index, count = _parse_shard(args.shard)
        if args.depth is not None:
            plan = plan_shards(data.n, depth=args.depth)
        else:
            plan = plan_shards(data.n, min_jobs=count)
        out = args.out or _auto_cache_path(
            args.data, spec, f"-d{plan.depth}-{index}of{count}.bnlp")
        save_shard(data, spec, plan, index, count, out,
                   precision=args.precision)
        print(out)
        return 0
    if args.jobs and args.jobs > 1:
        store = compute_all_parallel(data, spec, args.jobs)
    else:
        store = compute_all(data, spec)
    out = args.out or _auto_cache_path(args.data, spec)
    save_store(store, out, precision=args.precision)
    print(out)
    return 0


def cmd_merge(args):
    merge_shards(args.shards, args.out)
    print(args.out)
    return 0


def cmd_learn(args):
    data = _load_data(args)
    store = _store_for(args, data)
    result = learn_from_store(store)
    _emit_network(args, data, result.network, result.ordering, result.score,
                  store.spec)
    return 0


def cmd_best_order(args):
    data = _load_data(args)
    store = _store_for(args, data)
    result = learn_from_store(store)
    print(" ".join(str(v) for v in result.ordering))
    return 0


def cmd_net_for_order(args):
    data = _load_data(args)
    store = _store_for(args, data)
    ordering = _parse_order(args.order, data.n)
    bp = all_best_parents(store)
    network = ord_to_net(ordering, bp)
    _emit_network(args, data, network, ordering,
                  network_score(network, store), store.spec)
    return 0


def _base_ordering(args, data, store):
    if args.order:
        return _parse_order(args.order, data.n)
    return learn_from_store(store).ordering


def cmd_rotations(args):
    data = _load_data(args)
    store = _store_for(args, data)
    bp = all_best_parents(store)
    scan = rotations(_base_ordering(args, data, store), bp,
                     max_shift=args.max_shift)
    fh = _open_out(args.out)
    write_rotations_csv(scan, fh or sys.stdout)
    if fh:
        fh.close()
    return 0


def cmd_swaps(args):
    data = _load_data(args)
    store = _store_for(args, data)
    bp = all_best_parents(store)
    scan = swaps(_base_ordering(args, data, store), bp)
    fh = _open_out(args.out)
    write_swaps_csv(scan, fh or sys.stdout)
    if fh:
        fh.close()
    return 0


def cmd_sweep_ess(args):
    data = _load_data(args)
    grid = _parse_grid(args.grid) if args.grid else None
    points = ess_sweep(data, grid, jobs=args.jobs)
    fh = _open_out(args.out)
    write_sweep_csv(points, fh or sys.stdout)
    if fh:
        fh.close()
    return 0


def _structure_store(args, data):
    """Score store for commands where --ess may exceed its bde role.

    The spec used for structure learning only sees --ess under bde; with
    bic/aic the flag still smooths fitted parameters downstream.
    """
    _resolve_spec(args, ess_always=True)  # validates the combination
    shim = argparse.Namespace(
        cache=getattr(args, "cache", None), score=args.score,
        ess=args.ess if (args.score or BDE) == BDE else None,
        jobs=getattr(args, "jobs", None))
    return _store_for(shim, data)


def cmd_sample(args):
    data = _load_data(args)
    store = _structure_store(args, data)
    result = learn_from_store(store)
    fit_ess = args.ess if args.ess is not None else 1.0
    pnet = fit_expected(result.network, data, ess=fit_ess)
    drawn = sample(pnet, args.count, seed=args.seed)
    fh = _open_out(args.out)
    write_sample(fh or sys.stdout, pnet, drawn, args.seed, spec=store.spec)
    if fh:
        fh.close()
    return 0


def cmd_predict(args):
    arities = _parse_arities(args.arities) if args.arities else None
    train = load(args.train, arities=arities)
    store = _structure_store(args, train)
    result = learn_from_store(store)
    test = load(args.test, arities=[int(a) for a in train.arities])
    fit_ess = args.ess if args.ess is not None else 1.0
    logps, mean = predict_logp(result.network, train, test, ess=fit_ess)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("row,logp\n")
            for i, lp in enumerate(logps):
                fh.write(f"{i},{float(lp)!r}\n")
    print(f"mean_logp {mean!r}")
    return 0


def cmd_report(args):
    t0 = time.perf_counter()
    data = _load_data(args)
    stats = {}
    if getattr(args, "cache", None):
        store = _store_for(args, data)
    else:
        spec = _resolve_spec(args)
        if args.jobs and args.jobs > 1:
            store = compute_all_parallel(data, spec, args.jobs, stats=stats)
        else:
            store = compute_all(data, spec, stats=stats)
    t1 = time.perf_counter()
    result = learn_from_store(store, stats=stats)
    t2 = time.perf_counter()
    spec = store.spec
    lines = [
        ("variables", data.n),
        ("rows", data.num_rows),
        ("arities", ",".join(str(int(a)) for a in data.arities)),
        ("score", spec.kind),
        ("ess", repr(spec.ess) if spec.kind == BDE else "-"),
        ("total_score", repr(result.score)),
        ("ordering", " ".join(str(v) for v in result.ordering)),
        ("arcs", result.network.arc_count),
        ("max_in_degree", result.network.max_in_degree),
        ("score_seconds", f"{t1 - t0:.3f}"),
        ("dp_seconds", f"{t2 - t1:.3f}"),
    ]
    for key in ("emitted", "peak_live_tables", "comparisons", "subsets"):
        if key in stats:
            lines.append((key, stats[key]))
    for key, value in lines:
        print(f"{key}: {value}")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_data(p, name="data", help_="dataset file (rows of integers)"):
    p.add_argument(name, help=help_)
    p.add_argument("--arities",
                   help="comma-separated states per column (default: inferred)")


def _add_score(p, ess_help="equivalent sample size (bde prior strength)"):
    p.add_argument("--score", choices=SCORE_KINDS,
                   help="scoring function (default bde)")
    p.add_argument("--ess", type=float, help=ess_help)


def _add_cache(p):
    p.add_argument("--cache",
                   help="read local scores from this cache file instead of "
                        "computing them")


def _add_jobs(p):
    p.add_argument("--jobs", type=int, default=os.cpu_count(),
                   help="worker processes for the score pass "
                        "(default: all cores)")


def build_parser():
    top = argparse.ArgumentParser(
        prog="exactbn",
        description="Exact Bayesian network structure learning by "
                    "dynamic programming.",
        epilog=f"Default cache location honors ${CACHE_DIR_VAR}.")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scores", help="compute and save the local score cache")
    _add_data(p)
    _add_score(p)
    _add_jobs(p)
    p.add_argument("--out", help="output file (default: next to the data)")
    p.add_argument("--precision", type=int, choices=(4, 8), default=4,
                   help="bytes per stored score (default 4)")
    p.add_argument("--shard", metavar="I/M",
                   help="compute only shard I of M for distributed runs")
    p.add_argument("--depth", type=int,
                   help="subset depth at which the walk is split into jobs")
    p.set_defaults(func=cmd_scores)

    p = sub.add_parser("merge", help="merge score shards into one cache")
    p.add_argument("shards", nargs="+", help="shard files from 'scores --shard'")
    p.add_argument("--out", required=True, help="merged cache file")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("learn", help="learn the globally optimal network")
    _add_data(p)
    _add_score(p)
    _add_cache(p)
    _add_jobs(p)
    p.add_argument("--out", help="write the result document here (default: stdout)")
    p.add_argument("--dot", help="also write a Graphviz digraph here")
    p.add_argument("--names", help="file with one variable name per line (for --dot)")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("best-order", help="print one optimal variable ordering")
    _add_data(p)
    _add_score(p)
    _add_cache(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_best_order)

    p = sub.add_parser("net-for-order",
                       help="best network consistent with a given ordering")
    _add_data(p)
    _add_score(p)
    _add_cache(p)
    _add_jobs(p)
    p.add_argument("--order", required=True,
                   help="comma-separated variable ordering, e.g. 2,0,1")
    p.add_argument("--out", help="write the result document here (default: stdout)")
    p.add_argument("--dot", help="also write a Graphviz digraph here")
    p.add_argument("--names", help="file with one variable name per line (for --dot)")
    p.set_defaults(func=cmd_net_for_order)

    p = sub.add_parser("rotations",
                       help="scores of cyclic shifts of an ordering")
    _add_data(p)
    _add_score(p)
    _add_cache(p)
    _add_jobs(p)
    p.add_argument("--order", help="base ordering (default: the learned one)")
    p.add_argument("--max-shift", type=int, default=None,
                   help="largest |shift| to scan (default n//2)")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_rotations)

    p = sub.add_parser("swaps",
                       help="scores of position transpositions of an ordering")
    _add_data(p)
    _add_score(p)
    _add_cache(p)
    _add_jobs(p)
    p.add_argument("--order", help="base ordering (default: the learned one)")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_swaps)

    p = sub.add_parser("sweep-ess",
                       help="relearn across a grid of bde prior strengths")
    _add_data(p)
    _add_jobs(p)
    p.add_argument("--grid",
                   help="VALUES,... or START:STOP:COUNT (geometric); "
                        "default spans 2e-20 to 34000")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_sweep_ess)

    p = sub.add_parser("sample", help="draw rows from the learned network")
    _add_data(p)
    _add_score(p, ess_help="prior strength; also smooths the fitted parameters")
    _add_cache(p)
    _add_jobs(p)
    p.add_argument("--count", type=int, required=True, help="rows to draw")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("predict",
                       help="log probability of held-out rows under the "
                            "network learned from training data")
    p.add_argument("train", help="training dataset")
    p.add_argument("test", help="held-out dataset")
    p.add_argument("--arities",
                   help="comma-separated states per column (default: inferred "
                        "from training data)")
    _add_score(p, ess_help="prior strength; also smooths the fitted parameters")
    _add_cache(p)
    _add_jobs(p)
    p.add_argument("--out", help="per-row CSV output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="one-stop summary of a learning run")
    _add_data(p)
    _add_score(p)
    _add_cache(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_report)

    return top


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        rc = args.func(args)
        return 0 if rc is None else rc
    except TooManyVariablesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CacheFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExactBNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
