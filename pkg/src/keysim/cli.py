"""Command-line interface: ``keysim ingest|sign|diff|inspect``.

Exit codes: 0 ok, 2 unreadable or invalid input, 3 no eligible functions,
4 invalid or mismatched parameters, 5 unknown function selector.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .analysis import AnalysisParams, analyze_function, analyze_program, select_function
from .config import KeysimSettings
from .diffing import FunctionSignature, dump_signatures, load_signatures
from .errors import (
    EmptyProgramError,
    FunctionNotFoundError,
    KeysimError,
    ListingParseError,
    SignatureMismatchError,
)
from .graph import to_dot
from .listing import parse_listing, serialize_listing
from .matching import rank_all, report_csv, report_json
from .models import Program
from .objdump import parse_objdump

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_PARAMS = 4
EXIT_SELECTION = 5

STAGES = ("symexec", "keys", "graph", "tokens", "signature")

# argparse destination -> KeysimSettings field
_SETTING_FLAGS = {
    "min_blocks": "min_blocks",
    "k": "minhash_k",
    "shingle": "shingle_w",
    "seed": "master_seed",
    "top_n": "top_n",
    "rule_budget": "rule_budget",
    "workers": "workers",
    "log_level": "log_level",
}


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    common.add_argument("--log-level", help="logging level (env KEYSIM_LOG_LEVEL)")
    common.add_argument("--min-blocks", type=int, help="skip functions with fewer basic blocks (default 5)")
    common.add_argument("--k", type=int, help="MinHash slots per signature (default 128)")
    common.add_argument("--shingle", type=int, help="token w-gram width (default 1)")
    common.add_argument("--seed", type=int, help="MinHash master seed (default 0)")
    common.add_argument("--top-n", type=int, help="candidates kept per query (default 10)")
    common.add_argument("--rule-budget", type=int, help="simplifier rewrite budget (default 1000)")
    common.add_argument("--workers", type=int, help="analysis processes (default 1)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="keysim",
        description="Semantic similarity of functions across x86-64 binaries.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", parents=[common], help="normalize a disassembly into a listing")
    ingest.add_argument("input", help="objdump -d -M intel text or a listing JSON file")
    ingest.add_argument("--format", choices=("auto", "objdump", "listing"), default="auto")
    ingest.add_argument("-o", "--output", help="listing file to write (default stdout)")
    ingest.set_defaults(handler=cmd_ingest)

    sign = commands.add_parser("sign", parents=[common], help="precompute function signatures")
    sign.add_argument("listing", help="listing JSON or objdump text")
    sign.add_argument("-o", "--output", help="signature file to write (default stdout)")
    sign.set_defaults(handler=cmd_sign)

    diff = commands.add_parser("diff", parents=[common], help="rank the functions of B for every function of A")
    diff.add_argument("listing_a", nargs="?", help="query listing")
    diff.add_argument("listing_b", nargs="?", help="target listing")
    diff.add_argument("--signatures-a", help="precomputed signatures for the query side")
    diff.add_argument("--signatures-b", help="precomputed signatures for the target side")
    formats = diff.add_mutually_exclusive_group()
    formats.add_argument("--json", dest="report_format", action="store_const", const="json", help="JSON report (default)")
    formats.add_argument("--csv", dest="report_format", action="store_const", const="csv", help="CSV report")
    diff.add_argument("-o", "--output", help="report file to write (default stdout)")
    diff.set_defaults(handler=cmd_diff, report_format="json")

    inspect = commands.add_parser("inspect", parents=[common], help="show intermediate results for one function")
    inspect.add_argument("listing", help="listing JSON or objdump text")
    inspect.add_argument("--function", required=True, help="function name, sub_<hex> label or entry address")
    inspect.add_argument("--stage", choices=STAGES, default="keys")
    inspect.set_defaults(handler=cmd_inspect)
    return parser


def _settings(args: argparse.Namespace) -> KeysimSettings:
    overrides = {
        field: getattr(args, dest) for dest, field in _SETTING_FLAGS.items() if getattr(args, dest, None) is not None
    }
    return KeysimSettings(**overrides)


def _configure_logging(settings: KeysimSettings, verbose: int) -> None:
    level = logging.getLevelName(settings.log_level)
    if verbose:
        level = min(level, logging.DEBUG if verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def load_program(path: str, fmt: str = "auto") -> Program:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "auto":
        fmt = "listing" if text.lstrip().startswith("{") else "objdump"
    program = parse_listing(text) if fmt == "listing" else parse_objdump(text)
    if not program.binary:
        program = replace(program, binary=Path(path).name)
    return program


def cmd_ingest(args: argparse.Namespace, settings: KeysimSettings) -> int:
    program = load_program(args.input, args.format)
    _emit(serialize_listing(program), args.output)
    instructions = sum(len(function.instructions) for function in program)
    print(f"{len(program)} functions, {instructions} instructions", file=sys.stderr)
    return EXIT_OK


def cmd_sign(args: argparse.Namespace, settings: KeysimSettings) -> int:
    program = load_program(args.listing)
    result = analyze_program(program, AnalysisParams.from_settings(settings), workers=settings.workers)
    text = dump_signatures(
        program.binary,
        result.analyzed,
        k=settings.minhash_k,
        seed=settings.master_seed,
        w=settings.shingle_w,
    )
    _emit(text, args.output)
    return EXIT_OK


def _side(
    listing: Optional[str],
    signatures: Optional[str],
    settings: KeysimSettings,
    role: str,
) -> tuple[str, list[Optional[FunctionSignature]], list[str], dict[str, Any]]:
    """Signatures of one side of a diff, from a signature file or a listing."""
    if signatures:
        binary, params, items = load_signatures(Path(signatures).read_bytes())
        expected = (settings.minhash_k, settings.shingle_w, settings.master_seed)
        if (params.k, params.w, params.seed) != expected:
            raise SignatureMismatchError(
                f"{role} signatures were built with k={params.k}, w={params.w}, seed={params.seed}; "
                f"configuration asks for k={expected[0]}, w={expected[1]}, seed={expected[2]}"
            )
        return binary, list(items), [], {"source": "signatures", "functions": len(items)}
    if not listing:
        raise ListingParseError(f"no {role} listing or signature file given")
    program = load_program(listing)
    result = analyze_program(program, AnalysisParams.from_settings(settings), workers=settings.workers)
    return program.binary, list(result.signatures), list(result.skipped), result.stats()


def cmd_diff(args: argparse.Namespace, settings: KeysimSettings) -> int:
    # positional listings fill the sides that have no signature file, query first
    listings = [path for path in (args.listing_a, args.listing_b) if path]
    query_listing = None if args.signatures_a else (listings.pop(0) if listings else None)
    target_listing = None if args.signatures_b else (listings.pop(0) if listings else None)
    query_binary, queries, skipped, query_stats = _side(query_listing, args.signatures_a, settings, "query")
    target_binary, targets, _, target_stats = _side(target_listing, args.signatures_b, settings, "target")
    if not any(query is not None for query in queries):
        raise EmptyProgramError(f"query binary has no functions with at least {settings.min_blocks} basic blocks")
    available_targets = [target for target in targets if target is not None]
    if not available_targets:
        raise EmptyProgramError(f"target binary has no functions with at least {settings.min_blocks} basic blocks")

    report = rank_all(queries, available_targets, top_n=settings.top_n, skipped=skipped)
    if args.report_format == "csv":
        text = report_csv(report, version=__version__, config=settings.report_params())
    else:
        text = report_json(
            report,
            version=__version__,
            config=settings.report_params(),
            binaries={"query": query_binary, "target": target_binary},
            analysis={"query": query_stats, "target": target_stats},
        )
    _emit(text, args.output)
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace, settings: KeysimSettings) -> int:
    program = load_program(args.listing)
    function = select_function(program, args.function)
    analysis = analyze_function(function, AnalysisParams.from_settings(settings))
    for diagnostic in analysis.diagnostics:
        logger.info("%s: %s", function.label, diagnostic)

    if args.stage == "symexec":
        text = analysis.record.dump(function) + "\n"
    elif args.stage == "keys":
        text = "".join(f"{address:#x}: {expr}\n" for address, expr in analysis.keys)
    elif args.stage == "graph":
        text = to_dot(analysis.graph, name=function.label)
    elif args.stage == "tokens":
        text = "".join(f"{token}\n" for token in analysis.tokens)
    else:
        text = dump_signatures(
            program.binary,
            [FunctionSignature(entry=function.entry, name=function.name, signature=analysis.signature)],
            k=settings.minhash_k,
            seed=settings.master_seed,
            w=settings.shingle_w,
        )
    sys.stdout.write(text)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args)
    except ValidationError as exc:
        print(f"keysim: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    _configure_logging(settings, args.verbose)

    handler: Callable[[argparse.Namespace, KeysimSettings], int] = args.handler
    try:
        return handler(args, settings)
    except FunctionNotFoundError as exc:
        print(f"keysim: {exc}; available functions:", file=sys.stderr)
        for name in exc.available:
            print(f"  {name}", file=sys.stderr)
        return EXIT_SELECTION
    except EmptyProgramError as exc:
        print(f"keysim: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (ListingParseError, OSError, UnicodeDecodeError) as exc:
        print(f"keysim: cannot read input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SignatureMismatchError as exc:
        print(f"keysim: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except KeysimError as exc:
        logger.exception("analysis failed")
        print(f"keysim: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
