"""Command-line driver: ``evopf solve | study | validate | census``.

Exit codes: 0 success, 1 internal error, 2 input error, 3 infeasible,
4 solver failure (no incumbent / limits), 5 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data_io
from .bnb import MipStatus
from .builder import CHARGER_MIXES, BuildError, ScenarioConfig, census, prepare
from .fleet import FleetError
from .network import NetworkError
from .scenarios import (
    PRESETS, REPORT_BUS, STUDIES, RunSettings, ScenarioResult, StudyInputs, run_scenario, run_study, study_spec,
    validate_solution, write_scenario, write_study,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_VALIDATION = 5

log = logging.getLogger("evopf")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, solve_flags: bool = True) -> None:
    p.add_argument("--case", default="33bus", help="case file or bundled name (default: 33bus)")
    p.add_argument("--profiles", default=None, help="24-hour profile CSV (default: the one the case references)")
    p.add_argument("--fleet", default=None, help="file holding a fleet section (default: the case file)")
    p.add_argument("--preset", default="desk", choices=sorted(PRESETS), help="problem size preset")
    if solve_flags:
        p.add_argument("--out", default=None, help="output directory for tables, plots and the solution")
        p.add_argument("--gap", type=float, default=None, help="relative optimality gap (default: preset value)")
        p.add_argument("--time-limit", type=float, default=None, help="branch-and-bound wall-clock limit in seconds")
        p.add_argument("--threads", type=int, default=1, help="parallel node relaxations")
        p.add_argument("--seedless", action="store_true",
                       help="re-run single-threaded and fail unless the results are bit-identical")
        p.add_argument("-v", "--verbose", action="store_true", help="log branch-and-bound progress")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evopf", description="Mixed-integer conic OPF with multi-level EV charging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a single scenario")
    _common(s)
    s.add_argument("--mix", default="fast", choices=CHARGER_MIXES, help="charger levels offered at each point")
    s.add_argument("--solar", type=float, default=0.10, help="solar energy share of load energy")
    s.add_argument("--degradation-cost", type=float, default=0.05, help="C_D per (100 kW)^2 per EV-hour")
    s.add_argument("--ev-penetration", type=float, default=0.5)
    s.add_argument("--name", default="scenario")

    st = sub.add_parser("study", help="run one of the named studies")
    st.add_argument("study_name", nargs="?", choices=STUDIES, help="study to run")
    st.add_argument("--study", dest="study_flag", choices=STUDIES, default=None, help="alternative to the positional")
    _common(st)

    v = sub.add_parser("validate", help="re-check a saved solution.json")
    v.add_argument("solution")
    v.add_argument("--case", default=None, help="override the case recorded in the solution")
    v.add_argument("--profiles", default=None)
    v.add_argument("--tol", type=float, default=1e-6)

    c = sub.add_parser("census", help="print the variable and constraint counts of a scenario")
    _common(c, solve_flags=False)
    c.add_argument("--mix", default="fast", choices=CHARGER_MIXES)
    c.add_argument("--out", default=None, help="also write census.json here")
    return p


def _settings(args) -> RunSettings:
    if args.threads < 1:
        raise InputError("--threads must be >= 1")
    if args.gap is not None and not args.gap > 0:
        raise InputError("--gap must be positive")
    return RunSettings.for_preset(PRESETS[args.preset], args.threads, args.time_limit, args.gap)


def _result_code(r: ScenarioResult) -> int:
    if r.ok:
        return EXIT_OK if r.post.ok else EXIT_VALIDATION
    if r.mip is not None and r.mip.status == MipStatus.INFEASIBLE:
        return EXIT_INFEASIBLE
    if r.error and r.error.startswith("BuildError"):
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def _summary(r: ScenarioResult) -> str:
    if not r.ok:
        return f"{r.config.name}: {r.status}: {r.error}"
    rep, q = r.report, r.quality
    lines = [
        f"{r.config.name}: {r.mip.status.value}, gap {r.mip.gap:.2e}, {r.mip.nodes} nodes, {r.mip.elapsed:.1f} s",
        f"  cost total {rep.costs['total']:.2f}  energy {rep.costs['energy']:.2f}  "
        f"degradation {rep.costs['degradation']:.4f}",
        f"  exactness residual {q.max_exactness:.2e}  AC residual {r.ac.max:.2e}  post-checks "
        f"{'ok' if r.post.ok else 'FAILED'}",
    ]
    if REPORT_BUS in rep.bus_ids:
        lines.append(f"  bus {REPORT_BUS}: min voltage {rep.bus_voltage(REPORT_BUS).min():.4f} pu, "
                     f"{rep.hours_below_at(REPORT_BUS)} h below {rep.threshold}")
    if not r.post.ok:
        lines += [f"  ! {m}" for m in r.post.failures()]
    return "\n".join(lines)


def _same_result(a: ScenarioResult, b: ScenarioResult) -> bool:
    if a.ok != b.ok:
        return False
    if not a.ok:
        return a.error == b.error
    return np.array_equal(a.mip.x, b.mip.x) and data_io.report_tables(a.report) == data_io.report_tables(b.report)


def cmd_solve(args) -> int:
    settings = _settings(args)
    inputs = StudyInputs.load(args.case, args.profiles, args.fleet)
    try:
        cfg = ScenarioConfig(args.name, args.mix, args.solar, args.degradation_cost, args.ev_penetration,
                             PRESETS[args.preset].points)
    except BuildError as exc:
        raise InputError(str(exc)) from exc
    res = run_scenario(inputs, cfg, settings)
    print(_summary(res))
    if args.seedless:
        again = run_scenario(inputs, cfg, replace(settings, bnb=replace(settings.bnb, workers=1)))
        if not _same_result(res, again):
            print("determinism check FAILED: single-threaded re-run differs", file=sys.stderr)
            return EXIT_VALIDATION
        print("determinism check ok")
    if args.out and res.ok:
        for p in write_scenario(res, inputs, args.out):
            log.info("wrote %s", p)
        print(f"outputs in {args.out}")
    return _result_code(res)


def cmd_study(args) -> int:
    kind = args.study_name or args.study_flag
    if kind is None:
        raise InputError("study: name a study (" + ", ".join(STUDIES) + ")")
    if args.study_name and args.study_flag and args.study_name != args.study_flag:
        raise InputError("study: positional name and --study disagree")
    settings = _settings(args)
    inputs = StudyInputs.load(args.case, args.profiles, args.fleet)
    spec = study_spec(kind, args.preset)
    study = run_study(spec, inputs, settings)
    for r in study.results:
        print(_summary(r))
    print()
    print(study.table.to_csv(), end="")
    if args.seedless:
        again = run_study(spec, inputs, replace(settings, bnb=replace(settings.bnb, workers=1)))
        same = all(_same_result(a, b) for a, b in zip(study.results, again.results))
        if not same or again.table.to_csv() != study.table.to_csv():
            print("determinism check FAILED: single-threaded re-run differs", file=sys.stderr)
            return EXIT_VALIDATION
        print("determinism check ok")
    if args.out:
        write_study(study, inputs, args.out)
        print(f"outputs in {args.out}")
    return max((_result_code(r) for r in study.results), default=EXIT_OK)


def cmd_validate(args) -> int:
    res = validate_solution(args.solution, args.case, args.profiles, args.tol)
    if res.ok:
        print(f"{args.solution}: valid")
        return EXIT_OK
    print(f"{args.solution}: INVALID")
    for m in res.messages:
        print(f"  {m}")
    return EXIT_VALIDATION


def cmd_census(args) -> int:
    inputs = StudyInputs.load(args.case, args.profiles, args.fleet)
    cfg = ScenarioConfig("census", args.mix, points=PRESETS[args.preset].points)
    counts = census(prepare(inputs.network, inputs.profiles, inputs.fleet, cfg).build())
    text = json.dumps(counts, indent=1, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "census.json").write_text(text + "\n")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "validate": cmd_validate, "census": cmd_census}


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except InputError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (data_io.CaseFormatError, NetworkError, FleetError, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
