"""Stand-in evaluator for offline runs.

Reads a program from standard input, ignores it, prints ``#t`` and exits
with the requested status.  ``python -m ilp_forge.stub_evaluator --exit 1``
simulates a crashing interpreter.
"""

from __future__ import annotations

import argparse
import sys


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ilp-stub-evaluator")
    parser.add_argument("--exit", type=int, default=0, dest="status", help="exit status to return")
    parser.add_argument("--print", default="#t", dest="text", help="line to print")
    args = parser.parse_args(argv)
    sys.stdin.read()
    print(args.text)
    return args.status


if __name__ == "__main__":
    sys.exit(main())
