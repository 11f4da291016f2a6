"""Command line front end.

    lindley-grad estimate --scenario FILE [--out DIR]
    lindley-grad validate --scenario FILE --oracle {closed_form,quadrature,fd}
    lindley-grad fd-check --scenario FILE [--h 0.01,0.001]
    lindley-grad print-scenario --scenario FILE

Exit codes: 0 success, 1 a validation cell failed, 2 usage or configuration
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .distributions import RandomStream
from .errors import (
    BoundaryError,
    LindleyGradError,
    ParameterRegionError,
    ParseError,
    UnsupportedScenarioError,
    ValidationError,
)
from .estimators import estimate_path
from .lindley import first_busy_period_end
from .montecarlo import (
    NAIVE_KINDS,
    AggregateReport,
    ComparisonTable,
    compare,
    default_h,
    finite_difference,
    run_replications,
)
from .oracles import MAX_CUSTOMER, closed_form_w2, quadrature_derivatives
from .scenario import Scenario, load_scenario, scenario_to_dict, validate_scenario

SEED_ENV = "LINDLEY_GRAD_SEED"
SUMMARY_CUSTOMERS = 20
FD_SEED_OFFSET = 0x9E3779B97F4A7C15

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
_USAGE_ERRORS = (ParseError, ValidationError, UnsupportedScenarioError, ParameterRegionError, BoundaryError)


def _err(exc: Exception) -> None:
    text = str(exc)
    code = getattr(exc, "code", None)
    if code and not text.startswith("["):
        text = f"[{code}] {text}"
    print(f"error: {type(exc).__name__}: {text}", file=sys.stderr)


def _load(args) -> Scenario:
    scenario = load_scenario(args.scenario, validate=False)
    changes = {}
    env_seed = os.environ.get(SEED_ENV)
    if args.seed is not None:
        changes["seed"] = args.seed
    elif env_seed:
        try:
            changes["seed"] = int(env_seed, 0)
        except ValueError as exc:
            raise ParseError(f"{SEED_ENV}={env_seed!r} is not an integer") from exc
    for key, attr in (("replications", "reps"), ("order", "order"), ("alpha", "alpha"), ("z_threshold", "z_threshold")):
        value = getattr(args, attr, None)
        if value is not None:
            changes[key] = value
    if getattr(args, "h", None):
        changes["fd_h"] = tuple(args.h)
    if changes:
        scenario = scenario.replace(**changes)
    return validate_scenario(scenario)


def _fd_seed(seed: int) -> int:
    return (seed + FD_SEED_OFFSET) % 2**64


def _print_summary(report: AggregateReport, scenario: Scenario) -> None:
    kinds = report.kinds
    print(f"scenario {scenario.name or '(unnamed)'}  theta={report.theta:g}  R={report.replications}  "
          f"seed={report.seed}  method={report.method}")
    print("customer " + " ".join(f"{k:>22}" for k in kinds))
    for customer in range(1, min(report.n_customers, SUMMARY_CUSTOMERS) + 1):
        cols = []
        for kind in kinds:
            c = report.cell(customer, kind)
            cols.append(f"{c.mean:>11.6g} +-{c.se:<8.2g}")
        print(f"{customer:>8} " + " ".join(cols))
    if report.n_customers > SUMMARY_CUSTOMERS:
        print(f"... {report.n_customers - SUMMARY_CUSTOMERS} more customers in the report files")
    path = estimate_path(scenario, report.n_customers, 1, RandomStream.substream(report.seed, 0)).path
    end = first_busy_period_end(path)
    suffix = " (still open at the horizon)" if end.open_ended else ""
    print(f"replication 0: first busy period ends at customer i*={end.index}{suffix}")
    for note in report.notes:
        print(f"note: {note}")


def _print_table(table: ComparisonTable) -> None:
    print(f"{'customer':>8} {'statistic':>10} {'vs':>4} {'estimate':>14} {'reference':>14} {'z':>9}  status")
    for c in table.cells:
        if c.customer == 1:
            continue
        print(f"{c.customer:>8} {c.kind:>10} {c.reference_kind:>4} {c.estimate:>14.8g} {c.reference:>14.8g} "
              f"{c.z:>9.3g}  {c.status}")


def cmd_estimate(args) -> int:
    scenario = _load(args)
    report = run_replications(scenario, workers=args.workers)
    report.write(args.out)
    _print_summary(report, scenario)
    return EXIT_OK


def _oracle_reference(scenario: Scenario, oracle: str) -> dict:
    order = scenario.order
    if scenario.n_customers < 2:
        raise UnsupportedScenarioError("validation needs at least two customers")
    if oracle == "closed_form":
        return closed_form_w2(scenario).as_reference(order)
    ref = {}
    for i in range(2, min(scenario.n_customers, MAX_CUSTOMER) + 1):
        ref.update(quadrature_derivatives(scenario, i, tol=1e-6).as_reference(order))
    return ref


def _pairs(order: int, with_naive: bool = True) -> list[tuple[str, str]]:
    pairs = [(f"d{k}", f"d{k}") for k in range(1, order + 1)]
    if with_naive:
        pairs += [(naive, naive[:2]) for naive in NAIVE_KINDS if int(naive[1]) <= order]
    return pairs


def cmd_validate(args) -> int:
    scenario = _load(args)
    report = run_replications(scenario, workers=args.workers)
    zt = scenario.z_threshold
    if args.oracle == "fd":
        cells = []
        for k in range(1, scenario.order + 1):
            h = scenario.fd_h[0] if scenario.fd_h else default_h(scenario.theta, k)
            fd = finite_difference(scenario, order=k, h=h, seed=_fd_seed(scenario.seed), workers=args.workers)
            pairs = [(f"d{k}", f"d{k}")] + [(n, f"d{k}") for n in NAIVE_KINDS if int(n[1]) == k]
            cells.extend(compare(report, fd, pairs, zt).cells)
        cells.sort(key=lambda c: (c.customer, c.kind))
        table = ComparisonTable(tuple(cells), zt, {"oracle": "fd"})
    else:
        reference = _oracle_reference(scenario, args.oracle)
        table = compare(report, reference, _pairs(scenario.order), zt)
        table = ComparisonTable(table.cells, zt, {"oracle": args.oracle})
    report.write(args.out)
    table.write(args.out)
    _print_table(table)
    ok = table.all_pass
    print("all unbiased-estimator cells PASS" if ok else "some unbiased-estimator cells FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_fd_check(args) -> int:
    scenario = _load(args)
    order = scenario.order
    h_list = list(scenario.fd_h) if scenario.fd_h else [default_h(scenario.theta, order), default_h(scenario.theta, order) / 4]
    report = run_replications(scenario, workers=args.workers)
    runs = []
    for h in h_list:
        fd = finite_difference(scenario, order=order, h=h, seed=_fd_seed(scenario.seed), workers=args.workers)
        runs.append((h, compare(report, fd, _pairs(order, with_naive=False), scenario.z_threshold)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = None
    for h, table in runs:
        rows = list(csv.reader(io.StringIO(table.to_csv())))
        if header is None:
            header = ["h"] + rows[0]
            writer.writerow(header)
        for row in rows[1:]:
            writer.writerow([format(h, ".17g")] + row)
    (out / "comparison.csv").write_text(buf.getvalue())
    (out / "comparison.json").write_text(json.dumps(
        {"oracle": "fd", "runs": [{"h": h, **table.to_dict()} for h, table in runs]}, indent=2))
    report.write(args.out)

    print("finite-difference means by h (estimator mean in the last column)")
    for kind, _ in _pairs(order, with_naive=False):
        print(f"{kind}:")
        for customer in range(2, min(report.n_customers, SUMMARY_CUSTOMERS) + 1):
            fd_means = "  ".join(f"h={h:<8.3g} {t.cell(customer, kind).reference:>12.6g}" for h, t in runs)
            print(f"  {customer:>4}  {fd_means}  est {report.cell(customer, kind).mean:>12.6g}")
    return EXIT_OK


def cmd_print_scenario(args) -> int:
    scenario = _load(args)
    print(json.dumps(scenario_to_dict(scenario), indent=2))
    return EXIT_OK


def _h_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--h expects comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lindley-grad", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--seed", type=lambda s: int(s, 0), help=f"master seed (else ${SEED_ENV}, else the file)")
        p.add_argument("--reps", type=int, help="number of replications R")
        p.add_argument("--order", type=int, choices=(1, 2, 3))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--alpha", type=float)
        p.add_argument("--z-threshold", dest="z_threshold", type=float)
        p.add_argument("--h", type=_h_list, help="finite-difference steps, comma separated")
        return p

    common(sub.add_parser("estimate", help="run replications and write report.csv / report.json"))
    p = common(sub.add_parser("validate", help="compare estimator means with an oracle"))
    p.add_argument("--oracle", choices=("closed_form", "quadrature", "fd"), required=True)
    common(sub.add_parser("fd-check", help="tabulate CRN finite differences against the estimators"))
    common(sub.add_parser("print-scenario", help="print the validated scenario as JSON"))
    return parser


_COMMANDS = {
    "estimate": cmd_estimate,
    "validate": cmd_validate,
    "fd-check": cmd_fd_check,
    "print-scenario": cmd_print_scenario,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _USAGE_ERRORS as exc:
        _err(exc)
        return EXIT_USAGE
    except LindleyGradError as exc:
        _err(exc)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract
        _err(exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
