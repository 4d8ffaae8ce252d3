"""Command-line front end.

Exit codes: 0 success (or models equivalent), 1 differences or conformance
violations found, 2 usage error, 3 processing error.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .diff import diff as diff_models
from .engine import MigratorRegistry, chain_migrate, detect_version, migrate
from .errors import MigrataError, RegistryError
from .instance import ResourceSet, check_conformance
from .metamodel import Metamodel, load_metamodel
from .plans import PLANS, build_plan, builtin_metamodel_path, builtin_metamodels
from .xmi import read_resource_set, write_resource_set

log = logging.getLogger("migrata")

EXIT_OK = 0
EXIT_DIFFERENT = 1
EXIT_USAGE = 2
EXIT_FAILED = 3

LENIENT_ENV = "MIGRATA_LENIENT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _metamodel_ref(text: str, base: Path = Path(".")) -> Path:
    """``builtin:<key>`` or a path relative to ``base``."""
    if text.startswith("builtin:"):
        return builtin_metamodel_path(text[len("builtin:"):])
    p = Path(text)
    return p if p.is_absolute() else base / p


def load_registry(config: Path) -> MigratorRegistry:
    """Read a registry config.

    One ``key = value`` pair per line, ``#`` starts a comment::

        version.1.0 = gmfmap_1_0.ecore     # oldest first
        version.2.0 = gmfmap_2_0.ecore
        plan.1.0 = gmf-map-chain           # plan leading out of 1.0

    Metamodel paths are relative to the config file; ``builtin:<name>``
    selects a bundled metamodel.  Versions without a ``plan.`` entry use the
    conservative plan.
    """
    versions: List[tuple] = []
    plans: Dict[str, str] = {}
    for lineno, line in enumerate(config.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise RegistryError(f"{config}:{lineno}: expected 'key = value'")
        kind, _, label = key.partition(".")
        if kind == "version" and label:
            versions.append((label, value))
        elif kind == "plan" and label:
            plans[label] = value
        else:
            raise RegistryError(f"{config}:{lineno}: unknown key {key!r}")
    if not versions:
        raise RegistryError(f"{config}: no versions declared")
    unknown = set(plans) - {label for label, _ in versions}
    if unknown:
        raise RegistryError(f"{config}: plans for undeclared versions {sorted(unknown)}")

    reg = MigratorRegistry()
    prev_label, prev_mm = None, None
    for label, ref in versions:
        mm = load_metamodel(_metamodel_ref(ref, config.parent))
        plan = None
        if prev_mm is not None:
            plan = build_plan(plans.get(prev_label, "conservative"), prev_mm, mm)
        reg.register(label, mm, plan)
        prev_label, prev_mm = label, mm
    if versions[-1][0] in plans:
        raise RegistryError(f"{config}: the latest version {versions[-1][0]} cannot have a plan")
    return reg


def _lenient(args) -> bool:
    return bool(getattr(args, "lenient", False)) or os.environ.get(LENIENT_ENV) == "1"


def _write_staged(rs: ResourceSet, out: Path) -> List[Path]:
    """Write all files or none: stage next to ``out`` and move into place."""
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".migrata-", dir=out))
    try:
        staged = write_resource_set(rs, stage)
        final = []
        for p in staged:
            dest = out / p.relative_to(stage)
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(p, dest)
            final.append(dest)
        return final
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _reading_registry(extra: Sequence[Metamodel]) -> Dict[str, Metamodel]:
    reg = builtin_metamodels()
    for mm in extra:
        reg[mm.ns_uri] = mm
    return reg


def _model_files(target: Path) -> List[Path]:
    if target.is_dir():
        return sorted(p for p in target.rglob("*")
                      if p.is_file() and not any(part.startswith(".") for part in p.relative_to(target).parts))
    return [target]


# -- subcommands -------------------------------------------------------------

def cmd_migrate(args) -> int:
    source = load_metamodel(_metamodel_ref(args.source_mm))
    target = load_metamodel(_metamodel_ref(args.target_mm))
    plan = build_plan(args.plan, source, target)
    rs = read_resource_set(args.models, {source.ns_uri: source}, lenient=_lenient(args))
    out, trace = migrate(rs, source, target, plan, check=not args.no_check)
    log.info("migrated %d objects (%d dropped)", len(trace), len(trace.dropped()))
    for p in _write_staged(out, Path(args.out)):
        print(p)
    return EXIT_OK


def cmd_chain(args) -> int:
    reg = load_registry(Path(args.registry))
    start = detect_version(args.models[0], reg)
    log.info("detected version %s, latest is %s", start.label, reg.latest.label)
    rs = chain_migrate(args.models, reg, lenient=_lenient(args))
    for p in _write_staged(rs, Path(args.out)):
        print(p)
    return EXIT_OK


def cmd_detect(args) -> int:
    reg = load_registry(Path(args.registry))
    print(detect_version(args.model, reg).label)
    return EXIT_OK


def cmd_validate(args) -> int:
    mm = load_metamodel(_metamodel_ref(args.mm))
    extra = [mm] + [load_metamodel(_metamodel_ref(p)) for p in args.with_mm]
    rs = read_resource_set(args.models, _reading_registry(extra), lenient=_lenient(args))
    violations = check_conformance(rs, mm)
    for v in violations:
        print(v)
    if violations:
        log.error("%d violation(s) against %s", len(violations), mm.ns_uri)
        return EXIT_DIFFERENT
    return EXIT_OK


def cmd_diff(args) -> int:
    extra = [load_metamodel(_metamodel_ref(p)) for p in args.mm]
    reg = _reading_registry(extra)
    expected = read_resource_set(_model_files(Path(args.expected)), reg, lenient=_lenient(args))
    actual = read_resource_set(_model_files(Path(args.actual)), reg, lenient=_lenient(args))
    report = diff_models(expected, actual, ignore_xmi_ids=args.ignore_ids, unordered_features=args.unordered)
    if args.json:
        print(report.to_json())
    else:
        sys.stdout.write(report.to_text())
    return EXIT_OK if report.empty else EXIT_DIFFERENT


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="migrata", description="Metamodel-driven model migration.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    # -v is accepted after the subcommand too; SUPPRESS keeps it from resetting the top-level value
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("migrate", parents=[common], help="migrate models with one plan")
    p.add_argument("--plan", required=True, help=f"plan id ({', '.join(sorted(PLANS))})")
    p.add_argument("--source-mm", required=True, help="source .ecore path or builtin:<name>")
    p.add_argument("--target-mm", required=True, help="target .ecore path or builtin:<name>")
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true", help="drop unknown features instead of failing")
    p.add_argument("--no-check", action="store_true", help="skip the target conformance check")
    p.add_argument("models", nargs="+")
    p.set_defaults(func=cmd_migrate)

    p = sub.add_parser("chain", parents=[common], help="detect the version and migrate to the latest")
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("models", nargs="+")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("detect", parents=[common], help="print the metamodel version of a model file")
    p.add_argument("--registry", required=True)
    p.add_argument("model")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("validate", parents=[common], help="check models against a metamodel")
    p.add_argument("--mm", required=True)
    p.add_argument("--with-mm", action="append", default=[],
                   help="extra metamodel needed to read the models (repeatable)")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("models", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("diff", parents=[common], help="compare two models or two directories of models")
    p.add_argument("--ignore-ids", action="store_true", help="do not compare xmi:id values")
    p.add_argument("--unordered", action="append", default=[], metavar="FEATURE",
                   help="compare this feature as a multiset (repeatable)")
    p.add_argument("--mm", action="append", default=[], help="extra metamodel (repeatable)")
    p.add_argument("--json", action="store_true", help="structured report")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("expected")
    p.add_argument("actual")
    p.set_defaults(func=cmd_diff)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except MigrataError as exc:
        print(f"migrata: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"migrata: {exc}", file=sys.stderr)
        return EXIT_FAILED
    finally:
        log.removeHandler(handler)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
