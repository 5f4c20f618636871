"""Process entry point for demo managers.

The demo driver spawns each manager as `python -m whiteboard.workers ROLE
--request-box PATH ...`, one OS process per manager, so components and the
coordinator only ever meet through the file system.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .chart import load_grammar
from .components import IslandParser, MatrixSource, WordForWordTranslator
from .grid import Thresholds
from .manager import run_manager
from .translate import load_dictionary


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whiteboard-worker")
    parser.add_argument("role", choices=["source", "parser", "translator"])
    parser.add_argument("--request-box", required=True, type=Path)
    parser.add_argument("--sleep", type=float, default=0.05,
                        help="poll period in seconds")
    parser.add_argument("--matrices", type=Path)
    parser.add_argument("--topk", type=int, default=3)
    parser.add_argument("--grammar", type=Path)
    parser.add_argument("--dict", dest="dictionary", type=Path)
    parser.add_argument("--max-gap", type=int, default=2)
    parser.add_argument("--max-overlap", type=int, default=2)
    parser.add_argument("--beam", type=int, default=16)
    return parser


def build_component(args) -> tuple[object, bool]:
    """Returns (component, deliver_incrementally)."""
    thresholds = Thresholds(args.max_gap, args.max_overlap)
    if args.role == "source":
        if args.matrices is None:
            raise SystemExit("source worker needs --matrices FILE")
        return MatrixSource(args.matrices, args.topk), True
    if args.role == "parser":
        if args.grammar is None:
            raise SystemExit("parser worker needs --grammar FILE")
        grammar = load_grammar(args.grammar.read_text(encoding="utf-8"))
        beam = args.beam if args.beam > 0 else None
        return IslandParser(grammar, thresholds, beam), False
    if args.dictionary is None or args.grammar is None:
        raise SystemExit("translator worker needs --dict FILE and --grammar FILE")
    grammar = load_grammar(args.grammar.read_text(encoding="utf-8"))
    dictionary = load_dictionary(args.dictionary.read_text(encoding="utf-8"))
    return WordForWordTranslator(dictionary, grammar.lexical_labels), False


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO,
        format=f"%(asctime)s {args.role}: %(message)s")
    component, incremental = build_component(args)
    run_manager(component, args.request_box, name=args.role,
                incremental=incremental, sleep_time=args.sleep)
    return 0


if __name__ == "__main__":
    sys.exit(main())
