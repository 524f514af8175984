"""``cbrtwin`` command line.

Exit codes: 0 success, 1 model/validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from .casebase import parse_case_base
from .config import load_config
from .domain import parse_domain_model
from .errors import CbrError, ParseError, PersistenceError
from .explain import explain, read_log
from .pddl import KnowledgeBase, LimitExceeded, Unsolvable, parse_pddl_domain, parse_pddl_problem, plan, validate_plan
from .plugins import default_registry
from .runtime import CycleTrace, Twin, check_fallbacks, format_timings, report_timings
from .similarity import parse_similarity_spec

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise UsageError(f"{self.prog}: error: {message}")


def bundled(name: str) -> Path:
    return Path(str(resources.files("cbrtwin.data").joinpath(name)))


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cbrtwin", description="Case-based reasoning digital twin for injection molding.",
                allow_abbrev=False)
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="parse and cross-check model files", allow_abbrev=False,
                       description="Parse domain models (.dm), case bases (.cb) and similarity models (.cs) "
                                   "and check them against each other. Without PATHS the bundled models are used.")
    v.add_argument("paths", nargs="*", metavar="PATH", help="model files; domain models are loaded first")
    v.add_argument("--kb", metavar="DIR", help="planning knowledge base that pddl fallbacks must resolve against")

    r = sub.add_parser("run", help="run the twin against the simulator", allow_abbrev=False,
                       description="Run the twin loop against the machine simulator and write traces, "
                                   "the explain log, the situation log and the timing table.")
    r.add_argument("config", nargs="?", metavar="CONFIG", help="twin config file (default: bundled twin.cfg)")
    r.add_argument("--cycles", type=_positive, default=100, metavar="N", help="production cycles to run (default 100)")
    r.add_argument("--seed", type=int, metavar="S", help="simulator noise seed (overrides the config)")
    r.add_argument("--write", action=argparse.BooleanOptionalAction, default=None,
                   help="apply solutions to the machine (--no-write: recommendations only)")

    rp = sub.add_parser("replay", help="run the twin over recorded cycles", allow_abbrev=False,
                        description="Feed a recorded situation CSV through the twin. The source is read-only, "
                                    "so every solution is logged as a recommendation.")
    rp.add_argument("csv", metavar="CSV", help="situation log (header of dotted attribute paths)")
    rp.add_argument("--config", metavar="CONFIG", help="twin config file (default: bundled twin.cfg)")
    rp.add_argument("--cycles", type=_positive, metavar="N", help="stop after N rows (default: all)")

    pl = sub.add_parser("plan", help="solve a PDDL problem", allow_abbrev=False,
                        description="Plan with greedy best-first search and check the plan with the validator.")
    pl.add_argument("domain", metavar="DOMAIN", help="domain file")
    pl.add_argument("problem", metavar="PROBLEM", help="problem file")
    pl.add_argument("--max-expansions", type=_positive, default=100_000, metavar="N",
                    help="node expansion budget (default 100000)")
    pl.add_argument("--max-length", type=_positive, default=1_000, metavar="N", help="plan length bound (default 1000)")

    e = sub.add_parser("explain", help="report reasoning episodes from an explain log", allow_abbrev=False,
                       description="Print the episodes of an explain log in chronological order.")
    e.add_argument("log", metavar="LOG", help="explain log (explain.jsonl)")
    e.add_argument("--case", metavar="NAME", help="only episodes involving this case")
    e.add_argument("--from", dest="cycle_from", type=int, metavar="CYCLE", help="first cycle to include")
    e.add_argument("--to", dest="cycle_to", type=int, metavar="CYCLE", help="last cycle to include")

    rep = sub.add_parser("report", help="timing table from cycle traces", allow_abbrev=False,
                         description="Summarize per-cycle timings as FirstCycle / NoCase / CaseDetected rows.")
    rep.add_argument("traces", metavar="TRACES", help="cycle trace file (traces.jsonl)")
    return p


# -- subcommands -----------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    paths = [Path(p) for p in args.paths] or [bundled(n) for n in ("injection.dm", "injection.cb", "injection.cs")]
    kb_dir = args.kb if args.kb is not None else (str(bundled("kb")) if not args.paths else None)
    for p in paths:
        if not p.is_file():
            print(f"{p}: cannot read file", file=sys.stderr)
            return EXIT_IO
    order = {".dm": 0, ".cs": 1, ".cb": 2}
    unknown = [p for p in paths if p.suffix not in order]
    if unknown:
        print(f"{unknown[0]}: unknown model kind (expected .dm, .cb or .cs)", file=sys.stderr)
        return EXIT_DOMAIN
    kb = None
    errors = 0
    if kb_dir is not None:
        try:
            kb = KnowledgeBase.load(kb_dir)
        except ParseError as exc:
            print(exc, file=sys.stderr)
            errors += 1
        except OSError as exc:
            print(f"{kb_dir}: {exc}", file=sys.stderr)
            return EXIT_IO
    domains = []
    ok = 0
    registry = default_registry()
    for p in sorted(paths, key=lambda q: order[q.suffix]):
        text = p.read_text(encoding="utf-8")
        try:
            if p.suffix == ".dm":
                model = parse_domain_model(text, str(p))
                domains.append(model)
                detail = f"domain model {model.name}, {len(model.classes)} classes, {len(model.paths())} attributes"
            elif p.suffix == ".cs":
                spec = parse_similarity_spec(text, domains, str(p))
                spec.bind(registry)
                detail = f"similarity {spec.name}, {len(spec.locals)} local metrics"
            else:
                cb = parse_case_base(text, domains, str(p))
                if kb is not None:
                    check_fallbacks(cb, kb, str(p))
                detail = (f"case base {cb.name}, {len(cb.known_cases())} known and "
                          f"{len(cb.cases) - len(cb.known_cases())} unknown cases")
        except CbrError as exc:
            print(exc if isinstance(exc, ParseError) and exc.source else f"{p}: {exc}", file=sys.stderr)
            errors += 1
            continue
        ok += 1
        print(f"{p}: OK ({detail})")
    if errors:
        print(f"{errors} error{'s' if errors != 1 else ''}")
        return EXIT_DOMAIN
    print(f"{ok} model{'s' if ok != 1 else ''} OK")
    return EXIT_OK


def _config(path: str | None):
    return load_config(path if path is not None else bundled("twin.cfg"))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args.config)
    changes = {"port": "sim"}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.write is not None:
        changes["write"] = args.write
    cfg = cfg.with_overrides(**changes)
    summary = Twin(cfg).run(args.cycles)
    print(summary.render(), end="")
    print(f"\nartifacts in {cfg.log_dir}")
    return EXIT_DOMAIN if summary.aborted else EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    csv_path = Path(args.csv)
    if not csv_path.is_file():
        print(f"{csv_path}: cannot read file", file=sys.stderr)
        return EXIT_IO
    cfg = _config(args.config).with_overrides(port="replay", replay=csv_path, write=False)
    summary = Twin(cfg).run(args.cycles)
    print(summary.render(), end="")
    print(f"\nartifacts in {cfg.log_dir}")
    return EXIT_DOMAIN if summary.aborted else EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    domain = parse_pddl_domain(Path(args.domain).read_text(encoding="utf-8"), args.domain)
    problem = parse_pddl_problem(Path(args.problem).read_text(encoding="utf-8"), domain, args.problem)
    try:
        found = plan(domain, problem, args.max_expansions, args.max_length)
    except Unsolvable as exc:
        print(f"UNSOLVABLE ({exc.expansions} expansions, {exc.generated} states generated)")
        return EXIT_OK
    except LimitExceeded as exc:
        print(f"LIMIT EXCEEDED: {exc} ({exc.expansions} expansions, {exc.generated} states generated)")
        return EXIT_OK
    print(f"plan with {len(found.steps)} step{'s' if len(found.steps) != 1 else ''} "
          f"({found.expansions} expansions):")
    for i, step in enumerate(found.steps, 1):
        print(f"  {i}. {step}")
    verdict = validate_plan(domain, problem, found.steps)
    if verdict.valid:
        print("VALID")
        return EXIT_OK
    where = "end" if verdict.failed_step is None else f"step {verdict.failed_step + 1}"
    print(f"INVALID at {where}: {verdict.reason}")
    return EXIT_DOMAIN


def cmd_explain(args: argparse.Namespace) -> int:
    records = read_log(args.log)
    print(explain(records, args.case, args.cycle_from, args.cycle_to), end="")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    traces = []
    with open(args.traces, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                traces.append(CycleTrace(data["cycle_id"], data["path"], data["triggered"], data["timings"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise CbrError(f"{args.traces}:{n}: malformed trace record ({exc})") from None
    if not traces:
        raise CbrError(f"{args.traces}: no cycle traces")
    print(format_timings(report_timings(traces)), end="")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "replay": cmd_replay, "plan": cmd_plan,
            "explain": cmd_explain, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DOMAIN
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except PersistenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc.__cause__, OSError) else EXIT_DOMAIN
    except CbrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
