"""Command-line entry point: ``mfrep {doubling,chain,baumslag,certify}``.

Exit codes: 0 pass, 1 certified failure, 2 usage or internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from . import doubling
from .assembly import BudgetError, build_baumslag, check_budget, window_words
from .certify import certify
from .chain import ChainCapError, build_chain, check_prime
from .matkernel import default_threads
from .words import (
    GeneratorAssignment,
    LabelledWord,
    Presentation,
    WordSyntaxError,
    baumslag_relator,
    chain_presentation,
)

log = logging.getLogger("mfrep")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def cmd_doubling(args) -> int:
    n, bins = args.n, args.bins
    if n < 1 or n % 2 == 0:
        raise UsageError(f"--n must be a positive odd integer, got {n}")
    if bins < 1:
        raise UsageError("--bins must be positive")
    census = doubling.cycle_structure(n)
    hist = doubling.spectrum_histogram(n, bins)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "cycles.csv"), "w", encoding="utf-8") as fh:
        fh.write("length,count\n")
        for L, c in census:
            fh.write(f"{L},{c}\n")
    doubling.write_histogram_csv(os.path.join(args.out, "histogram.csv"), n, hist)
    top = max(h.fraction for h in hist)
    print(f"n={n} cycles={doubling.format_census(census)} max_bin_fraction={top!r}")
    return EXIT_PASS


def cmd_chain(args) -> int:
    try:
        check_prime(args.p)
    except ChainCapError as exc:
        raise UsageError(str(exc)) from exc
    if args.j < 0:
        raise UsageError("--j must be nonnegative")
    rep = build_chain(args.p, args.j)
    rep.save(args.out)
    for i in sorted(rep.defects):
        print(f"defect[{i}]={rep.defects[i]!r}")
    print(f"max_defect={rep.max_defect()!r}")
    return EXIT_PASS


def baumslag_presentation(k0: int) -> Presentation:
    """Words checked on a block instance: window generators, quotients, relator window."""
    window = chain_presentation(k0)
    words = [LabelledWord(label, w) for label, w in window_words(k0)]
    return Presentation(
        f"Baumslag(k0={k0})",
        window.generators + ["a", "b"],
        window.relators + [baumslag_relator()],
        words,
    )


def cmd_baumslag(args) -> int:
    try:
        check_budget(args.p, args.k0, args.N)
        check_prime(args.p)
    except (BudgetError, ChainCapError) as exc:
        raise UsageError(str(exc)) from exc
    threads = _threads(args)
    inst = build_baumslag(args.p, args.k0, args.N, threads=threads)
    eps = args.epsilon if args.epsilon is not None else 17 * inst.epsilon_eff
    pres = baumslag_presentation(args.k0)
    params = {
        "p": inst.p,
        "f": inst.f,
        "k0": inst.k0,
        "N": inst.N,
        "j": inst.j,
        "dim": inst.dim,
        "epsilon_eff": inst.epsilon_eff,
        "delta_chain": inst.delta_chain,
        "delta_step": inst.delta_step,
        "delta_conj": inst.delta_conj,
        "interior_defect": inst.interior_defect(),
        "wrap_defect": inst.wrap_defect(),
        "bounds": inst.bound_flags(),
        "seed": args.seed,
    }
    report = certify(pres, inst, eps, args.threshold, params, threads=threads)
    os.makedirs(args.out, exist_ok=True)
    report.write(os.path.join(args.out, "report.json"))
    if args.save_instance:
        inst.save(os.path.join(args.out, "instance"))
    print(f"dim={inst.dim} epsilon_eff={inst.epsilon_eff!r} pass={report.passed}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_certify(args) -> int:
    try:
        pres = Presentation.load(args.presentation)
        asg = GeneratorAssignment.load_dir(args.matrices, pres.generators)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON at line {exc.lineno} column {exc.colno} "
                         f"(char {exc.pos}): {exc.msg}") from exc
    except (OSError, ValueError, WordSyntaxError) as exc:
        raise UsageError(str(exc)) from exc
    report = certify(pres, asg, args.epsilon, args.threshold, {"dim": asg.dim, "seed": args.seed},
                     threads=_threads(args))
    os.makedirs(args.out, exist_ok=True)
    report.write(os.path.join(args.out, "report.json"))
    print(f"dim={asg.dim} pass={report.passed}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed recorded for reproducibility")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for block-level work (default: $MFREP_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="mfrep",
        description="Construct and certify almost representations of finitely presented groups.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "doubling", parents=[common],
        help="cycle census and spectral histogram of x -> 2x mod n",
        description="The doubling permutation T of Z/n (n odd) satisfies T^-1 D_n T = D_n^2. "
                    "Writes its cycle census and the distribution of its eigenvalues over "
                    "equal arcs of the circle.")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bins", type=int, default=12)
    p.set_defaults(func=cmd_doubling)

    p = sub.add_parser(
        "chain", parents=[common],
        help="almost representation of the chain group H_{j+1}",
        description="Builds generators a_{-j-1}..a_{j+1} of size 2^p - 1, each with the simple "
                    "roots of unity as spectrum, with a_{i+1}^-1 a_i a_{i+1} close to a_i^2. "
                    "Writes gen_<i>.json and manifest.json.")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--j", type=int, default=0)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser(
        "baumslag", parents=[common],
        help="block matrices A, B for <a,b | a^(a^b) = a^2> and their certificate",
        description="Assembles A (block diagonal, conjugated chain generators along a geodesic "
                    "path) and B (block shift) for the Baumslag group <a, b | a^(a^b) = a^2>, "
                    "then certifies relator "
                    "defects and separation of window words. Exit 0 iff the report passes.")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--k0", type=int, default=1)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=None,
                   help="defect tolerance (default: 17 * epsilon_eff of the instance)")
    p.add_argument("--threshold", type=float, default=1.0, help="separation threshold")
    p.add_argument("--save-instance", action="store_true",
                   help="also write phi, path and the block structure of A and B")
    p.set_defaults(func=cmd_baumslag)

    p = sub.add_parser(
        "certify", parents=[common],
        help="check a presentation against matrices",
        description="Given generators A_1..A_n, checks every relator r(A) is within epsilon of "
                    "I and every listed word w has ||w(A) - I|| >= threshold. Matrices are read "
                    "from <generator>.json. Exit 0 iff the report passes.")
    p.add_argument("--presentation", required=True)
    p.add_argument("--matrices", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--threshold", type=float, default=1.0, help="separation threshold")
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        # BLAS stays single-threaded so results do not depend on --threads
        with threadpool_limits(limits=1):
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
