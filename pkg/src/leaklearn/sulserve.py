"""Serve the built-in simulator over the line protocol (stdin/stdout), so
the external-process driver can be exercised end-to-end and the toy can
stand in behind other tooling.

Usage: python -m leaklearn.sulserve --secret 0 [--flag name=bool ...]
"""

from __future__ import annotations

import argparse
import sys

from .sul import serve_sim
from .toysim import ObservationProfile, ToyEnclaveSim, VersionFlags


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="leaklearn-sulserve")
    parser.add_argument("--secret", type=int, required=True)
    parser.add_argument("--flag", action="append", default=[],
                        metavar="NAME=BOOL")
    parser.add_argument("--timera", action="store_true")
    parser.add_argument("--umem", action="store_true")
    parser.add_argument("--reg", action="store_true")
    args = parser.parse_args(argv)
    flags = {}
    for pair in args.flag:
        name, _, value = pair.partition("=")
        flags[name] = value.lower() in ("true", "on", "1")
    sim = ToyEnclaveSim(
        args.secret,
        flags=VersionFlags(**flags),
        profile=ObservationProfile(timera=args.timera, umem=args.umem,
                                   reg=args.reg))
    serve_sim(sim, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
