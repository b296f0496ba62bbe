"""Command-line interface: ``mfteam <subcommand> ...`` or ``python -m mfteam``.

Exit codes: 0 success, 1 model validation failure, 2 usage or I/O error,
3 compute cap exceeded, 4 acceptance check failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import dp, sim
from .convergence import InsufficientRowsError, NoFitEligibleRowsError, fit_rate, run_convergence
from .model import ModelFileError, load_model, validate_model
from .simplex import CapExceededError

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_CAP, EXIT_CHECK = 0, 1, 2, 3, 4


class _Invalid(Exception):
    pass


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of integers: {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("agent counts must be positive")
    return vals


def _admissible(path):
    model = load_model(path)
    report = validate_model(model)
    if not report.ok:
        print(report, file=sys.stderr)
        raise _Invalid(path)
    return model


def _write_json(doc, path):
    text = json.dumps(doc, indent=1)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_validate(args):
    model = load_model(args.model)
    report = validate_model(model)
    print(report)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_solve(args):
    model = _admissible(args.model)
    if args.tree:
        sol = dp.solve_decentralized_tree(model)
    else:
        sol = dp.solve_decentralized_grid(model, args.grid_res)
    _write_json(sol.to_dict(), args.out)
    if args.out:
        print(f"value {sol.value!r} policies {sol.policies.tolist()}")
    return EXIT_OK


def cmd_sharing(args):
    model = _admissible(args.model)
    sol = dp.solve_sharing(model, args.agents)
    _write_json(sol.to_dict(), args.out)
    if args.out:
        print(f"J_star {sol.J_star!r}")
    return EXIT_OK


def cmd_gap(args):
    model = _admissible(args.model)
    dec = dp.solve_decentralized_grid(model, args.grid_res)
    J_star = dp.solve_sharing(model, args.agents).J_star
    if args.exact:
        J_g = dp.evaluate_strategy_exact(model, args.agents, dec)
        print(f"J_g {J_g!r}\nJ_star {J_star!r}\ngap {J_g - J_star!r}")
    else:
        est = sim.simulate_population(model, args.agents, dec, args.seed, args.reps,
                                      workers=args.workers).cost_estimate()
        print(f"J_g {est.mean!r}\nstderr {est.stderr!r}\nJ_star {J_star!r}\n"
              f"gap {est.mean - J_star!r}")
    return EXIT_OK


def cmd_convergence(args):
    model = _admissible(args.model)
    table = run_convergence(model, args.agents, nu=args.grid_res, seed=args.seed,
                            mc_reps=args.mc_reps, exact_cap=args.exact_cap,
                            workers=args.workers)
    table.write_csv(args.out)
    try:
        print(fit_rate(table))
    except InsufficientRowsError as exc:
        print(f"no rate fit: {exc}")
    return EXIT_OK


def cmd_deviation(args):
    if not 0 <= args.p <= 1:
        raise _Usage("--p must lie in [0, 1]")
    pmf = [args.p, 1 - args.p]
    print("n,mean,stderr,exact,sqrt_n_mean")
    for i, n in enumerate(args.agents):
        est = sim.iid_deviation(pmf, n, seed=args.seed + i, reps=args.reps, workers=args.workers)
        exact = repr(sim.exact_binomial_deviation(args.p, n)) if n <= 1000 else ""
        mean, se = float(est.mean[0]), float(est.stderr[0])
        print(f"{n},{mean!r},{se!r},{exact},{math.sqrt(n) * mean!r}")
    return EXIT_OK


def cmd_check(args):
    from .acceptance import run_all

    model = _admissible(args.model) if args.model else None
    results = run_all(model)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_CHECK if failed else EXIT_OK


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfteam", description=(
        "Decentralized control of mean-field coupled Markov chains."))
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a model file for admissibility")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="solve the decentralized (lifted) DP")
    s.add_argument("--model", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid-res", type=_positive)
    g.add_argument("--tree", action="store_true", help="exhaustive policy-sequence search")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sharing", help="solve the mean-field sharing DP for n agents")
    s.add_argument("--model", required=True)
    s.add_argument("--agents", type=_positive, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sharing)

    s = sub.add_parser("gap", help="optimality gap of the decentralized strategy")
    s.add_argument("--model", required=True)
    s.add_argument("--agents", type=_positive, required=True)
    s.add_argument("--grid-res", type=_positive, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--exact", action="store_true")
    g.add_argument("--mc", action="store_true")
    s.add_argument("--reps", type=_positive, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=_positive, default=1)
    s.set_defaults(func=cmd_gap)

    s = sub.add_parser("convergence", help="gap across population sizes, written as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--agents", type=_int_list, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--grid-res", type=_positive)
    g.add_argument("--grid-follows-n", action="store_true", help="use nu = n (default)")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mc-reps", type=_positive, default=10_000)
    s.add_argument("--exact-cap", type=_positive, default=2_000,
                   help="largest |M_n| evaluated exactly")
    s.add_argument("--workers", type=_positive, default=1)
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("deviation", help="i.i.d. empirical deviation on a binary alphabet")
    s.add_argument("--p", type=float, required=True)
    s.add_argument("--agents", type=_int_list, required=True)
    s.add_argument("--reps", type=_positive, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--workers", type=_positive, default=1)
    s.set_defaults(func=cmd_deviation)

    s = sub.add_parser("check", help="run the acceptance suite")
    s.add_argument("--model", help="benchmark model for the rate and determinism checks")
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _Invalid:
        return EXIT_INVALID
    except _Usage as exc:
        print(f"mfteam: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ModelFileError) as exc:
        print(f"mfteam: {exc}", file=sys.stderr)
        return EXIT_IO
    except CapExceededError as exc:
        print(f"mfteam: compute cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except NoFitEligibleRowsError as exc:
        print(f"mfteam: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
