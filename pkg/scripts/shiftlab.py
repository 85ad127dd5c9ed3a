"""
Command-line entry point for shiftlab.

Runs scenario files, merges certificates into a summary, or runs a single
task with flag equivalents of the scenario fields.

Usage:
    python scripts/shiftlab.py run scenarios/classic_p1_certify.json
    python scripts/shiftlab.py run scenarios/*.json --workers 4
    python scripts/shiftlab.py report data/runs --output data/runs
    python scripts/shiftlab.py weights --space ClassicBargmann --p 1
    python scripts/shiftlab.py certify --space ClassicBargmann --p 1 --lambda-abs 1 2
    python scripts/shiftlab.py recurrence --weights-constant 1 --lambda 2 --N 40
    python scripts/shiftlab.py orbit --space PoincareDisk --nu 1.5 --basis 3 --steps 5
    python scripts/shiftlab.py periodic --space PoincareDisk --nu 1.5 --mode hp
    python scripts/shiftlab.py quadrature --space PoincareDisk --nu 1.1
    python scripts/shiftlab.py asymptotics --betas 1 2 3 4

Exit status: 0 all checks pass, 2 inconclusive, 1 failure or error.
"""

import argparse
import logging
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import orjson

from backend import config
from backend.exceptions import ShiftLabError
from backend.recurrence import Verdict
from backend.runner import (
    load_certificates,
    parse_scenario,
    report_bundle,
    run_many,
    run_scenario,
)

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] - %(message)s"
)
logger = logging.getLogger(__name__)

SPACE_KINDS = ["ClassicBargmann", "GeneralizedBargmann", "ThetaFockBargmann", "PoincareDisk"]


def _param_value(text: str):
    """JSON value when it parses (lists, objects, ints, booleans), else the raw string."""
    try:
        value = orjson.loads(text)
    except orjson.JSONDecodeError:
        return text
    # floats stay decimal strings
    return text if isinstance(value, float) else value


def _add_space_args(parser: argparse.ArgumentParser, required: bool = True):
    parser.add_argument("--space", choices=SPACE_KINDS, required=required, help="Space kind")
    parser.add_argument("--p", type=int, default=0, help="Shift order p (default: 0)")
    parser.add_argument("--beta", help="beta for GeneralizedBargmann (decimal string)")
    parser.add_argument("--nu", help="nu for ThetaFockBargmann / PoincareDisk (decimal string)")
    parser.add_argument("--alpha", help="alpha for ThetaFockBargmann (decimal string)")
    parser.add_argument("--dps", type=int, help="Working precision in decimal digits")
    parser.add_argument("--output", help="Output directory")
    parser.add_argument("--name", help="Run name (default: the task)")
    parser.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="Extra task parameter; VALUE is JSON or a decimal string")


def _space(args) -> dict:
    space = {"kind": args.space, "p": args.p}
    for key in ("beta", "nu", "alpha"):
        if getattr(args, key) is not None:
            space[key] = getattr(args, key)
    return space


def _scenario_from_args(task: str, args, params: dict) -> dict:
    data = {"task": task, "name": args.name or task, "params": params}
    weights_constant = getattr(args, "weights_constant", None)
    if weights_constant is not None:
        data["weights"] = {"constant": weights_constant}
    elif args.space is not None:
        data["space"] = _space(args)
    if args.dps is not None:
        data["dps"] = args.dps
    if args.output is not None:
        data["output"] = os.path.abspath(args.output)
    for item in args.param:
        if "=" not in item:
            raise SystemExit(f"--param expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        params[key.strip()] = _param_value(value)
    return data


def _drop_none(params: dict) -> dict:
    return {k: v for k, v in params.items() if v is not None}


def cmd_run(args) -> int:
    outcomes = run_many(args.scenarios, workers=args.workers, output_root=args.output_root)
    for outcome in outcomes:
        status = outcome.error or (", ".join(outcome.failing) if outcome.failing else "all checks pass")
        logger.info(f"{outcome.name}: {outcome.verdict.value} - {status}")
    return Verdict.worst(o.verdict for o in outcomes).exit_code


def cmd_report(args) -> int:
    certificates = load_certificates(args.paths) if args.paths else []
    report = report_bundle(certificates, args.output)
    print(report.text, end="")
    return report.exit_code


def cmd_task(args) -> int:
    params = _drop_none(args.build_params(args))
    data = _scenario_from_args(args.task, args, params)
    scenario = parse_scenario(orjson.dumps(data).decode(), source=None)
    return run_scenario(scenario).exit_code


def _weights_params(args) -> dict:
    return {"n_max": args.n_max, "p_values": args.p_values}


def _certify_params(args) -> dict:
    return {"lambda_abs": args.lambda_abs, "gamma": args.gamma, "hypotheses": args.hypotheses,
            "hyp3_n_hi": args.n_hi, "beta_prime": args.beta_prime}


def _recurrence_params(args) -> dict:
    return {"lambda": args.lam, "N": args.N, "gamma": args.gamma,
            "certify": False if args.no_certify else None}


def _orbit_params(args) -> dict:
    vector = None
    if args.basis is not None:
        vector = {"basis": args.basis}
    elif args.eigenvector is not None:
        vector = {"eigenvector": args.eigenvector}
    return {"operator": args.operator, "N": args.N, "steps": args.steps, "vector": vector}


def _periodic_params(args) -> dict:
    if args.mode == "sum":
        return {"roots": args.roots, "N": args.N, "gamma": args.gamma}
    cases = None
    if args.s is not None and args.n_period is not None:
        cases = [{"s": args.s, "N_period": args.n_period}]
    return {"cases": cases, "telescoping_k": args.k}


def _quadrature_params(args) -> dict:
    return {"n_max": args.n_max, "radial": args.radial, "angular": args.angular}


def _asymptotics_params(args) -> dict:
    return {"probes": args.probes, "betas": args.betas}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Weighted backward shifts on Fock-Bargmann spaces")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run scenario files")
    run.add_argument("scenarios", nargs="+", help="Scenario JSON files")
    run.add_argument("--workers", type=int, default=config.WORKERS, help="Process pool size")
    run.add_argument("--output-root", help="Write each scenario into <root>/<name>")
    run.set_defaults(func=cmd_run)

    report = sub.add_parser("report", help="Merge certificates into a summary table")
    report.add_argument("paths", nargs="*", help="Run directories or certificates.json files")
    report.add_argument("--output", help="Directory for summary.csv and summary.txt")
    report.set_defaults(func=cmd_report)

    weights = sub.add_parser("weights", help="Weight consistency checks")
    _add_space_args(weights)
    weights.add_argument("--n-max", type=int)
    weights.add_argument("--p-values", type=int, nargs="+")
    weights.set_defaults(func=cmd_task, task="weights", build_params=_weights_params)

    certify = sub.add_parser("certify", help="Hypothesis certificates")
    _add_space_args(certify)
    certify.add_argument("--lambda-abs", nargs="+")
    certify.add_argument("--gamma", help="Dominating sequence name")
    certify.add_argument("--hypotheses", nargs="+")
    certify.add_argument("--n-hi", type=int, help="Upper end of the damping scan")
    certify.add_argument("--beta-prime", help="beta' for theta certificates")
    certify.set_defaults(func=cmd_task, task="certify", build_params=_certify_params)

    recurrence = sub.add_parser("recurrence", help="Solve the eigenvector recurrence")
    _add_space_args(recurrence, required=False)
    recurrence.add_argument("--weights-constant", help="Use constant raw weights instead of a space")
    recurrence.add_argument("--lambda", dest="lam", help="Complex lambda, e.g. 1+0.5j")
    recurrence.add_argument("--N", type=int)
    recurrence.add_argument("--gamma")
    recurrence.add_argument("--no-certify", action="store_true")
    recurrence.set_defaults(func=cmd_task, task="recurrence", build_params=_recurrence_params)

    orbit = sub.add_parser("orbit", help="Orbit of a vector under a truncated operator")
    _add_space_args(orbit)
    orbit.add_argument("--operator", choices=["BackwardShift", "ForwardShift", "JacobiSum"])
    orbit.add_argument("--N", type=int)
    orbit.add_argument("--steps", type=int)
    orbit.add_argument("--basis", type=int, help="Start from P_n")
    orbit.add_argument("--eigenvector", help="Start from the H_p eigenvector at this lambda")
    orbit.set_defaults(func=cmd_task, task="orbit", build_params=_orbit_params)

    periodic = sub.add_parser("periodic", help="Periodic points (sum of eigenvectors or of H_p)")
    _add_space_args(periodic)
    periodic.add_argument("--mode", choices=["sum", "hp"], default="hp")
    periodic.add_argument("--roots", nargs="+", help="Roots of unity as n/k")
    periodic.add_argument("--N", type=int)
    periodic.add_argument("--gamma")
    periodic.add_argument("--s", type=int)
    periodic.add_argument("--n-period", type=int)
    periodic.add_argument("--k", type=int, help="Largest block index for the block identities")
    periodic.set_defaults(func=cmd_task, build_params=_periodic_params)

    quadrature = sub.add_parser("quadrature", help="Function-space ground truth")
    _add_space_args(quadrature)
    quadrature.add_argument("--n-max", type=int)
    quadrature.add_argument("--radial", type=int)
    quadrature.add_argument("--angular", type=int)
    quadrature.set_defaults(func=cmd_task, task="quadrature", build_params=_quadrature_params)

    asymptotics = sub.add_parser("asymptotics", help="Weight asymptotics and m_n deviation")
    _add_space_args(asymptotics, required=False)
    asymptotics.add_argument("--probes", type=int, nargs="+")
    asymptotics.add_argument("--betas", nargs="+")
    asymptotics.set_defaults(func=cmd_task, task="asymptotics", build_params=_asymptotics_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "periodic":
        args.task = "periodic_sum" if args.mode == "sum" else "periodic_hp"
    try:
        return args.func(args)
    except ShiftLabError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
