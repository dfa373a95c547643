"""Command-line front end: gen, solve, verify, check, oracle, bench.

Exit codes: 0 success, 1 definitive negative or solver failure,
2 usage or parse error, 3 hypothesis violation.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .core import (
    Partition,
    SolverParams,
    TightCycle,
    TightPath,
    format_certificate,
    format_graph,
    format_partition,
    is_hamiltonian_certificate,
    min_codegree,
    parse_comments,
    read_certificate,
    read_graph,
    read_partition,
)
from .errors import H4Error, HypothesisViolated, ParseError, TooLarge
from .extremal import (
    InstanceRecipe,
    build_benchmark,
    build_h0,
    build_h0_prime,
    complete_graph,
    compute_b,
    default_recipes,
    planted_partition,
)

EXIT_OK, EXIT_NO, EXIT_USAGE, EXIT_HYPOTHESIS = 0, 1, 2, 3

EPS_NAMES = ("eps0", "eps1", "eps2", "eps3", "eps4", "eps5")


class UsageError(Exception):
    pass


def _params(args) -> SolverParams:
    overrides = {k: getattr(args, k) for k in EPS_NAMES if getattr(args, k, None) is not None}
    seed = getattr(args, "seed", 0) or 0
    try:
        if args.profile == "paper":
            base = SolverParams.paper(args.paper_eps, rng_seed=seed)
            return base.with_(**overrides) if overrides else base
        return SolverParams.desk(rng_seed=seed, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _add_profile(p):
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--paper-eps", type=float, default=1e-3, help="base eps of the paper profile")
    for name in EPS_NAMES:
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)


def _read(path, reader):
    try:
        return reader(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc


def _load_partition(args, H, text_comments):
    if getattr(args, "partition", None):
        part = _read(args.partition, read_partition)
        if part.vertex_count != H.vertex_count:
            raise ParseError("partition and graph disagree on the vertex count")
        return part, "file"
    if "side_a" in text_comments:
        side = [int(v) for v in text_comments["side_a"].split(",") if v]
        return Partition.from_side_a(H.vertex_count, side), "comment"
    return compute_b(H).partition, "compute_b"


# ---------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    n = args.n
    if n is None or n < 2:
        raise UsageError("--n must be at least 2")
    comments = {}
    if args.h0 or args.h0_prime or args.complete:
        if args.h0:
            H = build_h0(n, n, args.neutral)
            part = planted_partition(n, n)
            comments["recipe"] = "h0"
        elif args.h0_prime:
            H = build_h0_prime(n, n)
            part = planted_partition(n, n)
            comments["recipe"] = "h0prime"
        else:
            H = complete_graph(n)
            part = None
            comments["recipe"] = "complete"
        comments["half_size" if not args.complete else "vertex_count"] = n
    else:
        recipe = InstanceRecipe(n, include_neutral=args.neutral, medium_seeds=args.mediums,
                                anarchists=args.anarchists, deletion_rate=args.deletion_rate,
                                rng_seed=args.seed, pair_cover=args.pair_cover, odd=args.odd)
        try:
            recipe.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        bench = build_benchmark(recipe)
        H, part = bench.graph, bench.partition
        comments.update(recipe.to_comments())
        comments["min_codegree"] = bench.min_codegree
        comments["aabb"] = bench.aabb
    if part is not None:
        comments["side_a"] = ",".join(map(str, sorted(part.side_a)))
    text = format_graph(H, comments)
    if args.out:
        Path(args.out).write_text(text)
        if part is not None and args.partition_out:
            Path(args.partition_out).write_text(format_partition(part))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def regenerate(comments: dict):
    """Rebuild a benchmark from the recipe block of a generated file."""
    return build_benchmark(InstanceRecipe.from_comments(comments))


# ---------------------------------------------------------------------
# solve / verify


def _solve(H, mode, params, trace, force_case3=False, partition=None):
    from .assembly import solve_ham_path
    from .parity import solve_ham_cycle
    if mode == "path":
        return solve_ham_path(H, params, trace, partition=partition)
    return solve_ham_cycle(H, params, trace, partition=partition, force_case3=force_case3)


def cmd_solve(args) -> int:
    from .assembly import Trace
    text = _read(args.graph, lambda t: t)
    H = read_graph(text)
    params = _params(args)
    trace = Trace(echo=(lambda line: print("trace " + line)) if args.trace else None)
    t0 = time.perf_counter()
    print(f"instance {args.graph} N={H.vertex_count} M={H.edge_count} mode={args.mode} profile={params.profile}")
    try:
        C = _solve(H, args.mode, params, trace, args.force_case3)
    except HypothesisViolated as exc:
        print(f"failure stage={exc.stage or '?'} reason={type(exc).__name__} {exc}")
        return EXIT_HYPOTHESIS
    except H4Error as exc:
        print(f"failure stage={exc.stage or '?'} reason={type(exc).__name__} {exc}")
        return EXIT_NO
    # never report success on the solver's word alone
    verdict = is_hamiltonian_certificate(H, C)
    if not verdict:
        print(f"failure stage=verify reason=CertificateRejected {verdict.reason}")
        return EXIT_NO
    out = args.out or f"{args.graph}.{args.mode}.cert"
    Path(out).write_text(format_certificate(C))
    if not is_hamiltonian_certificate(H, read_certificate(Path(out).read_text())):
        print("failure stage=verify reason=CertificateRejected written file does not re-verify")
        return EXIT_NO
    print(f"success size={len(C)} seconds={time.perf_counter() - t0:.3f} certificate={out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    H = _read(args.graph, read_graph)
    C = _read(args.certificate, read_certificate)
    if args.path and not isinstance(C, TightPath):
        print("NO certificate is not a path")
        return EXIT_NO
    if args.cycle and not isinstance(C, TightCycle):
        print("NO certificate is not a cycle")
        return EXIT_NO
    verdict = is_hamiltonian_certificate(H, C)
    print("YES" if verdict else f"NO {verdict.reason}")
    return EXIT_OK if verdict else EXIT_NO


# ---------------------------------------------------------------------
# check / oracle


def cmd_check(args) -> int:
    from .typicality import check_counting_claims, classify_all
    text = _read(args.graph, lambda t: t)
    H = read_graph(text)
    comments = parse_comments(text)
    part, source = _load_partition(args, H, comments)
    params = _params(args)
    floor = args.codegree_floor
    if floor is None and comments.get("recipe") == "h0":
        # pure H0 sits one below the usual floor
        floor = H.vertex_count // 2 - 2
    print(f"partition {source} min_codegree={min_codegree(H)}")
    try:
        claims = check_counting_claims(H, part, params, codegree_floor=floor)
    except HypothesisViolated as exc:
        print(f"hypothesis violated: {exc}")
        return EXIT_HYPOTHESIS
    report = classify_all(H, part, params)
    report.claims = claims
    sys.stdout.write(report.format() if args.classes else "".join(c.line() + "\n" for c in claims))
    return EXIT_OK if all(c.passed for c in claims) else EXIT_NO


def cmd_oracle(args) -> int:
    from .oracle import exact_ham_cycle, exact_ham_path
    H = _read(args.graph, read_graph)
    try:
        W = exact_ham_cycle(H) if args.cycle else exact_ham_path(H)
    except TooLarge as exc:
        print(f"TOO-LARGE {exc}")
        return EXIT_USAGE
    if W is None:
        print("NO")
        return EXIT_NO
    print("YES " + " ".join(map(str, W.sequence)))
    return EXIT_OK


# ---------------------------------------------------------------------
# bench


def parse_sizes(text: str, step: int = 20) -> list[int]:
    """'20..60' -> [20, 40, 60]; '20,30' -> [20, 30]."""
    out = []
    try:
        for chunk in text.split(","):
            if ".." in chunk:
                lo, hi = (int(x) for x in chunk.split(".."))
                out.extend(range(lo, hi + 1, step))
            else:
                out.append(int(chunk))
    except ValueError:
        raise UsageError(f"bad size list {text!r}") from None
    if not out or min(out) < 2:
        raise UsageError(f"bad size list {text!r}")
    return out


BENCH_FIELDS = ["n", "rep", "mode", "medium_seeds", "anarchists", "deletion_rate", "rng_seed", "outcome",
                "stage", "reason", "case", "seconds", "gen_seconds", "size"]


def bench_one(job) -> dict:
    from .assembly import Trace
    recipe, mode, params, force_case3, rep = job
    t0 = time.perf_counter()
    bench = build_benchmark(recipe)
    t1 = time.perf_counter()
    trace = Trace()
    row = {"n": recipe.half_size, "rep": rep, "mode": mode, "medium_seeds": recipe.medium_seeds,
           "anarchists": recipe.anarchists, "deletion_rate": recipe.deletion_rate, "rng_seed": recipe.rng_seed,
           "stage": "", "reason": "", "case": "", "size": 0, "gen_seconds": round(t1 - t0, 3)}
    try:
        C = _solve(bench.graph, mode, params, trace, force_case3)
        ok = bool(is_hamiltonian_certificate(bench.graph, C))
        row.update(outcome="success" if ok else "rejected", size=len(C))
    except H4Error as exc:
        row.update(outcome="failure", stage=exc.stage or "", reason=type(exc).__name__)
    cases = [ln.split()[1] for ln in trace.grep("case ")]
    row["case"] = cases[-1] if cases else ""
    row["seconds"] = round(time.perf_counter() - t1, 3)
    return row


def cmd_bench(args) -> int:
    params = _params(args)
    sizes = parse_sizes(args.n, args.step)
    modes = ["path", "cycle"] if args.mode == "both" else [args.mode]
    jobs = []
    for n in sizes:
        for i, recipe in enumerate(default_recipes(n, args.reps, args.seed, args.deletion_rate)):
            for mode in modes:
                jobs.append((recipe, mode, params, args.force_case3, i))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            rows = list(pool.map(bench_one, jobs))
    else:
        rows = [bench_one(j) for j in jobs]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=BENCH_FIELDS)
        w.writeheader()
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    for mode in modes:
        mine = [r for r in rows if r["mode"] == mode]
        good = sum(r["outcome"] == "success" for r in mine)
        case3 = sum(r["case"] == "3" for r in mine)
        print(f"# {mode}: {good}/{len(mine)} success, case3 runs {case3}", file=sys.stderr)
    return EXIT_OK if all(r["outcome"] == "success" for r in rows) else EXIT_NO


# ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="h4ham", description="Tight Hamiltonian paths and cycles in near-extremal 4-graphs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write an H0, H0', complete or benchmark graph")
    kind = g.add_mutually_exclusive_group()
    kind.add_argument("--h0", action="store_true")
    kind.add_argument("--h0-prime", action="store_true")
    kind.add_argument("--complete", action="store_true", help="complete 4-graph on --n vertices")
    kind.add_argument("--bench", action="store_true", help="benchmark recipe (default)")
    g.add_argument("--n", type=int, required=True, help="side size (vertex count for --complete)")
    g.add_argument("--mediums", type=int, default=1)
    g.add_argument("--anarchists", type=int, default=0)
    g.add_argument("--deletion-rate", type=float, default=0.0)
    g.add_argument("--pair-cover", action="store_true")
    g.add_argument("--odd", action="store_true")
    g.add_argument("--neutral", action="store_true", help="add the AABB edges of the neutral variant")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", "-o")
    g.add_argument("--partition-out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="build and verify a tight Hamiltonian path or cycle")
    s.add_argument("graph")
    s.add_argument("--mode", choices=("path", "cycle"), default="cycle")
    s.add_argument("--out", "-o", help="certificate file (default <graph>.<mode>.cert)")
    s.add_argument("--trace", action="store_true")
    s.add_argument("--force-case3", action="store_true", help="suppress seeds in the parity step")
    _add_profile(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check a certificate against a graph")
    v.add_argument("graph")
    v.add_argument("certificate")
    shape = v.add_mutually_exclusive_group()
    shape.add_argument("--path", action="store_true")
    shape.add_argument("--cycle", action="store_true")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("check", help="counting claims and vertex classes")
    c.add_argument("graph")
    c.add_argument("--partition")
    c.add_argument("--codegree-floor", type=int, default=None)
    c.add_argument("--classes", action="store_true", help="print vertex classes and atypical counts too")
    _add_profile(c)
    c.set_defaults(func=cmd_check)

    o = sub.add_parser("oracle", help="exact path/cycle decision for N <= 16")
    o.add_argument("graph")
    shape = o.add_mutually_exclusive_group()
    shape.add_argument("--path", action="store_true")
    shape.add_argument("--cycle", action="store_true")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="solve the default recipe family and write a CSV")
    b.add_argument("--n", default="20..60", help="sizes, e.g. 20..60 or 20,40")
    b.add_argument("--step", type=int, default=20)
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--mode", choices=("path", "cycle", "both"), default="both")
    b.add_argument("--deletion-rate", type=float, default=0.01)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--force-case3", action="store_true")
    b.add_argument("--out", "-o")
    _add_profile(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisViolated as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS


if __name__ == "__main__":
    sys.exit(main())
