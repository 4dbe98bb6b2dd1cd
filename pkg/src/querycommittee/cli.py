"""Command-line entry point: ``querycommittee <subcommand> ...``.

Exit codes: 0 on success, 2 on invalid input, 3 when an enumeration or
query budget is exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys

from querycommittee._util import BudgetExceeded, ValidationError, as_fraction
from querycommittee.fairness import check_ejr, check_jr, check_oas
from querycommittee.harness import (
    RunManifest,
    approval_fraction_curve,
    format_alpha,
    impute,
    ingest_vote_matrix,
    run_experiment,
)
from querycommittee.io import (
    distribution_to_json,
    parse_committee,
    read_distribution,
    read_profile,
    write_distribution,
    write_profile,
)
from querycommittee.lowerbound import build_polyhedron, solve_feasibility
from querycommittee.profiles import (
    filter_popular,
    gen_adversary_population,
    gen_fig1a_distribution,
    gen_product_population,
)
from querycommittee.queries import atomic_write_text
from querycommittee.scoring import alpha_hat, delta_star

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3


def _emit(text: str, out: str | None):
    if out:
        atomic_write_text(out, text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def cmd_ingest(args) -> int:
    matrix = ingest_vote_matrix(args.path)
    info = matrix.describe()
    if args.out:
        profile = impute(matrix, args.impute, args.seed)
        write_profile(profile, args.out)
        info["profile"] = args.out
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def cmd_filter(args) -> int:
    profile = read_profile(args.profile)
    kept = filter_popular(profile, as_fraction(args.threshold))
    write_profile(kept, args.out)
    print(json.dumps({"before": profile.m, "after": kept.m,
                      "removed": [profile.label(c) for c in range(profile.m)
                                  if profile.label(c) not in {kept.label(j) for j in range(kept.m)}]},
                     sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    if args.manifest:
        man = RunManifest.read(args.manifest)
        if args.out:
            man.out_dir = args.out
    else:
        if not args.dataset:
            raise ValidationError("run needs --manifest or --dataset")
        man = RunManifest(dataset=args.dataset, ks=tuple(args.k or (5, 7, 10)), t=args.t,
                          alpha=args.alpha, delta=args.delta, ell=args.ell, theta=args.theta,
                          seeds=tuple(args.seed or (0,)), budget=args.budget,
                          imputation=args.impute, threshold=args.threshold,
                          out_dir=args.out or "results")
    report = run_experiment(man)
    print(json.dumps({"paths": man.paths, "cells": len(report.rows), "errors": len(report.errors)},
                     sort_keys=True))
    return EXIT_OK


def cmd_certify(args) -> int:
    profile = read_profile(args.profile)
    w = parse_committee(args.committee)
    alpha = as_fraction(args.alpha)
    ds = delta_star(profile, w)
    out = {
        "committee": list(w),
        "delta_star": str(ds.exact),
        "alpha_hat": format_alpha(alpha_hat(profile, w)),
        "certified": ds.exact * alpha * len(w) < 1,
        "jr": check_jr(profile, w).to_dict(),
        "ejr": check_ejr(profile, w, alpha).to_dict(),
        "oas": check_oas(profile, w, alpha).to_dict(),
    }
    _emit(json.dumps(out, sort_keys=True), args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.kind == "fig1a":
        x = gen_fig1a_distribution(args.ell)
        if args.out:
            write_distribution(x, args.out)
        else:
            print(distribution_to_json(x))
        return EXIT_OK
    if args.kind == "product":
        pop = gen_product_population(args.m, args.special, args.k)
        desc = {"kind": "product", "m": pop.m, "special": args.special, "k": args.k,
                "p_special": str(pop.marginal(args.special)),
                "p_other": str(pop.marginal(0 if args.special else 1))}
        _emit(json.dumps(desc, sort_keys=True), args.out)
        return EXIT_OK
    x = read_distribution(args.dist) if args.dist else gen_fig1a_distribution(args.ell)
    pop = gen_adversary_population(x, args.m, args.k, args.k0, args.seed)
    if args.n:
        if not args.out:
            raise ValidationError("--out is required when materializing a profile")
        write_profile(pop.materialize(args.n), args.out)
        print(json.dumps({"profile": args.out, "n": args.n, "m": pop.m,
                          "distinguished": list(pop.distinguished)}, sort_keys=True))
    else:
        desc = {"kind": "adversary", "m": pop.m, "k": pop.k, "k0": pop.k0, "p": pop.p, "r": pop.r,
                "hidden": [list(h) for h in pop.hidden], "distinguished": list(pop.distinguished),
                "singletons": list(pop.singletons), "seed": args.seed}
        _emit(json.dumps(desc, sort_keys=True), args.out)
    return EXIT_OK


def cmd_lp_search(args) -> int:
    res = solve_feasibility(build_polyhedron(args.h, args.k0, args.ell), maximize_x10=args.maximize_x10,
                            max_pivots=args.max_pivots)
    _emit(res.to_json(), args.out)
    return EXIT_OK


def cmd_curve(args) -> int:
    profile = read_profile(args.profile)
    w = parse_committee(args.committee)
    lines = ["j,fraction"] + [f"{j},{float(f):.10g}"
                              for j, f in enumerate(approval_fraction_curve(profile, w), start=1)]
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="querycommittee", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse a vote-matrix CSV and optionally write a profile")
    s.add_argument("path")
    s.add_argument("--impute", default="missing_as_disapprove")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("filter", help="drop comments approved by more than a threshold")
    s.add_argument("profile")
    s.add_argument("--threshold", default="0.6")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("run", help="run the experiment pipeline")
    s.add_argument("--manifest")
    s.add_argument("--dataset")
    s.add_argument("--k", type=int, nargs="+")
    s.add_argument("--t", type=int, default=20)
    s.add_argument("--alpha", default="1")
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--ell", type=int, default=6)
    s.add_argument("--theta", type=float, default=0.05)
    s.add_argument("--seed", type=int, nargs="+")
    s.add_argument("--budget", type=int)
    s.add_argument("--impute", default="missing_as_disapprove")
    s.add_argument("--threshold", default="0.6")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("certify", help="alpha-hat and JR/EJR/OAS audit of a committee")
    s.add_argument("profile")
    s.add_argument("--committee", required=True, help='"0,2,5", a JSON list or a JSON object')
    s.add_argument("--alpha", default="1")
    s.add_argument("--out")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("generate", help="generate a population")
    s.add_argument("kind", choices=("fig1a", "product", "adversary"))
    s.add_argument("--ell", type=int, default=3)
    s.add_argument("--m", type=int, default=9)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--k0", type=int, default=2)
    s.add_argument("--special", type=int, default=0)
    s.add_argument("--dist", help="distribution JSON for the adversary")
    s.add_argument("--n", type=int, help="materialize the adversary as a profile of n voters")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("lp-search", help="exact feasibility of the symmetric adversary polyhedron")
    s.add_argument("--h", type=int, required=True)
    s.add_argument("--k0", type=int, required=True)
    s.add_argument("--ell", type=int, required=True)
    s.add_argument("--maximize-x10", action="store_true")
    s.add_argument("--max-pivots", type=int, default=100_000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lp_search)

    s = sub.add_parser("curve", help="fraction of voters approving at least j members")
    s.add_argument("profile")
    s.add_argument("--committee", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_curve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
