"""Command-line entry point: ``masc <command> ...``.

Data goes to files or stdout; progress and diagnostics go to stderr.
Exit codes: 0 success, 1 validation/format/I-O error, 2 resource error,
3 verification mismatch.
"""

from __future__ import annotations

import argparse
import logging
import os
import resource
import sys
import time
from pathlib import Path

import numpy as np

from . import codebook as cbk
from .baselines import KMeansConfig, kmeans
from .errors import MascError, ValidationError, VerificationError
from .linkage import LinkageKind
from .mapping import ClusterMapping, cut, load_mapping, mapping_stats, save_mapping
from .metrics import compare_priors, render_table, save_report
from .oracle import BUILD_CAP, oracle_build
from .sequence import coarsen, decode_random, load_sequence, save_sequence
from .tree import build, load_trace, save_trace

log = logging.getLogger("masc")

HEIGHT_RTOL = 1e-9


def _peak_rss_bytes() -> int:
    # ru_maxrss is KiB on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def _default_threads() -> int:
    raw = os.environ.get("MASC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def read_labels(path: str | Path) -> np.ndarray:
    vals = []
    for lineno, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals.append(int(line))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: expected an integer label, got {line!r}") from None
    return np.array(vals, dtype=np.int64)


def write_labels(labels, path: str | Path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels), encoding="ascii")


def compare_traces(got, want, rtol: float = HEIGHT_RTOL) -> list[str]:
    """Differences between two traces: merge pairs must match exactly, heights within ``rtol``."""
    problems = []
    if got.n != want.n or got.linkage != want.linkage:
        problems.append(f"header differs: n={got.n}/{want.n}, linkage={got.linkage.label}/{want.linkage.label}")
    if len(got.records) != len(want.records):
        problems.append(f"record count differs: {len(got.records)} vs {len(want.records)}")
    for a, b in zip(got.records, want.records):
        if (a.left, a.right, a.new) != (b.left, b.right, b.new):
            problems.append(f"step {a.step}: merged ({a.left}, {a.right}), reference merged ({b.left}, {b.right})")
            break
        if abs(a.height - b.height) > rtol * max(abs(b.height), 1e-300) and a.height != b.height:
            problems.append(f"step {a.step}: height {a.height!r} vs reference {b.height!r}")
            break
    return problems


# --- commands -------------------------------------------------------------


def cmd_build(args) -> int:
    cb = cbk.load_codebook(args.codebook)
    kind = LinkageKind.parse(args.linkage)
    log.info("building %s-linkage tree: N=%d d=%d stop_at=%d threads=%d", kind.label, cb.n, cb.d, args.k, args.threads)
    t0 = time.perf_counter()
    trace = build(cb, args.k, kind, threads=args.threads)
    wall = time.perf_counter() - t0
    save_trace(trace, args.out)
    estimate = trace.stats["distance_store_bytes"] + 8 * cb.n * (cb.d + 16)
    print(f"steps={len(trace.records)}")
    print(f"final_active={len(trace.final_active)}")
    print(f"wall_seconds={wall:.3f}")
    print(f"peak_memory_estimate_bytes={estimate}")
    print(f"peak_rss_bytes={_peak_rss_bytes()}")
    return 0


def cmd_cut(args) -> int:
    trace = load_trace(args.trace)
    m = cut(trace, args.k)
    if args.check_refines:
        finer = load_mapping(args.check_refines)
        if not finer.refines(m):
            raise VerificationError(f"{args.check_refines} (k={finer.k}) does not refine the cut at k={m.k}")
    save_mapping(m, args.out, args.format)
    print(f"k={m.k} n={m.n}")
    return 0


def cmd_map(args) -> int:
    m = load_mapping(args.mapping)
    seq = load_sequence(args.inp, vocab=m.n)
    out = coarsen(seq, m)
    save_sequence(out, args.out, binary=args.binary)
    return 0


def cmd_decode(args) -> int:
    m = load_mapping(args.mapping)
    seq = load_sequence(args.inp, vocab=m.k)
    out = decode_random(seq, m, args.seed)
    save_sequence(out, args.out, binary=args.binary)
    return 0


def cmd_kmeans(args) -> int:
    cb = cbk.load_codebook(args.codebook)
    cfg = KMeansConfig(k=args.k, init=args.init, restarts=args.restarts, max_iter=args.max_iter, tol=args.tol, seed=args.seed)
    print(f"restarts={cfg.restarts} max_iter={cfg.max_iter} tol={cfg.tol}")
    res = kmeans(cb, cfg)
    save_mapping(res.mapping, args.out, args.format)
    print(f"init={cfg.init} k={cfg.k} seed={cfg.seed}")
    print(f"inertia={res.inertia!r}")
    print(f"best_restart={res.restart_index} iterations={res.iterations_run}")
    return 0


def _named_mappings(specs: list[str]) -> list[tuple[str, ClusterMapping]]:
    out = []
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        out.append((name, load_mapping(path)))
    return out


def cmd_stats(args) -> int:
    cb = cbk.load_codebook(args.codebook)
    maps = _named_mappings(args.mapping)
    if len(maps) == 1 and not args.corpus and not args.truth:
        report = mapping_stats(maps[0][1], cb)
        report = {"name": maps[0][0], **report}
        save_report({"priors": [report]}, args.out)
        print(f"k={report['k']} intra_mean={report['intra_mean']:.6f} inter_mean={report['inter_mean']:.6f}")
        return 0
    return cmd_compare(args)


def cmd_compare(args) -> int:
    cb = cbk.load_codebook(args.codebook)
    maps = _named_mappings(args.mapping)
    corpus = [load_sequence(p, vocab=cb.n) for p in args.corpus] if args.corpus else None
    truth = read_labels(args.truth) if args.truth else None
    report = compare_priors(cb, maps, corpus, truth)
    save_report(report, args.out)
    table = render_table(report)
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_synth(args) -> int:
    if args.kind == "bridge":
        cb, labels = cbk.synth_bridge(args.seed)
    else:
        sizes = [int(s) for s in args.sizes.split(",")]
        cb, labels = cbk.synth_blobs(len(sizes), sizes, args.d, args.separation, args.sigma, args.seed)
    cbk.save_codebook(cb, args.out)
    if args.labels_out:
        write_labels(labels, args.labels_out)
    print(f"kind={args.kind} n={cb.n} d={cb.d}")
    return 0


def cmd_verify(args) -> int:
    cb = cbk.load_codebook(args.codebook)
    cap = min(args.n_cap, BUILD_CAP)
    if cb.n > cap:
        raise ValidationError(f"codebook has {cb.n} rows; oracle cap is {cap}")
    if args.trace:
        got = load_trace(args.trace)
        if got.n != cb.n:
            raise VerificationError(f"trace covers n={got.n}, codebook has {cb.n}")
        kinds = [got.linkage]
        candidates = {got.linkage: got}
        k = args.k if args.k is not None else got.stop_at
    else:
        kinds = [LinkageKind.parse(x) for x in args.linkage]
        k = args.k if args.k is not None else 1
        candidates = {kind: build(cb, k, kind, threads=args.threads) for kind in kinds}
    failed = False
    for kind in kinds:
        ref = oracle_build(cb, k, kind, n_cap=cap)
        problems = compare_traces(candidates[kind], ref)
        if problems:
            failed = True
            print(f"{kind.label}: MISMATCH {problems[0]}")
        else:
            print(f"{kind.label}: OK ({len(ref.records)} merges)")
    if failed:
        raise VerificationError("optimised trace differs from the brute-force reference")
    return 0


# --- parser ---------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker cap (default: $MASC_THREADS or 1); never changes outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="masc", description="Semantic trees over VQ codebooks and coarse token vocabularies.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", parents=[common], help="agglomerate a codebook into a merge trace")
    b.add_argument("--codebook", required=True)
    b.add_argument("--k", type=int, default=1, help="stop when this many clusters remain")
    b.add_argument("--linkage", choices=["average", "single", "complete"], default="average")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    c = sub.add_parser("cut", parents=[common], help="cut a trace into k clusters")
    c.add_argument("--trace", required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--format", choices=["json", "csv"], default=None)
    c.add_argument("--check-refines", metavar="PATH", help="finer mapping that must refine this cut")
    c.set_defaults(func=cmd_cut)

    for name, func, help_ in (("map", cmd_map, "fine tokens -> coarse indices"),
                              ("decode", cmd_decode, "coarse indices -> sampled fine tokens")):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("--mapping", required=True)
        s.add_argument("--in", dest="inp", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--binary", action="store_true", default=None, help="write SEQ1 binary")
        if name == "decode":
            s.add_argument("--seed", type=int, required=True)
        s.set_defaults(func=func)

    km = sub.add_parser("kmeans", parents=[common], help="k-means baseline mapping")
    km.add_argument("--codebook", required=True)
    km.add_argument("--k", type=int, required=True)
    km.add_argument("--init", choices=["random", "pp"], default="random")
    km.add_argument("--restarts", type=int, default=10)
    km.add_argument("--max-iter", type=int, default=300)
    km.add_argument("--tol", type=float, default=1e-4)
    km.add_argument("--seed", type=int, default=0)
    km.add_argument("--out", required=True)
    km.add_argument("--format", choices=["json", "csv"], default=None)
    km.set_defaults(func=cmd_kmeans)

    for name, func in (("stats", cmd_stats), ("compare", cmd_compare)):
        s = sub.add_parser(name, parents=[common], help="cluster statistics / prior comparison report")
        s.add_argument("--codebook", required=True)
        s.add_argument("--mapping", nargs="+", required=True, metavar="[NAME=]PATH")
        s.add_argument("--corpus", nargs="*", default=None, metavar="SEQ")
        s.add_argument("--truth", metavar="LABELS")
        s.add_argument("--out", required=True)
        s.add_argument("--table", metavar="PATH", help="also write the plain-text table here")
        s.set_defaults(func=func)

    sy = sub.add_parser("synth", parents=[common], help="write a synthetic fixture codebook")
    sy.add_argument("--kind", choices=["blobs", "bridge"], required=True)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--sizes", default="100,100", help="comma-separated blob sizes (blobs only)")
    sy.add_argument("--d", type=int, default=2)
    sy.add_argument("--separation", type=float, default=20.0)
    sy.add_argument("--sigma", type=float, default=1.0)
    sy.add_argument("--out", required=True)
    sy.add_argument("--labels-out")
    sy.set_defaults(func=cmd_synth)

    v = sub.add_parser("verify", parents=[common], help="check the fast build against the brute-force oracle")
    v.add_argument("--codebook", required=True)
    v.add_argument("--k", type=int, default=None)
    v.add_argument("--n-cap", type=int, default=256)
    v.add_argument("--linkage", nargs="+", choices=["average", "single", "complete"], default=["average"])
    v.add_argument("--trace", help="verify this trace file instead of building one")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except MascError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: I/O failure on {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except MemoryError as exc:
        print(f"error: out of memory: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
