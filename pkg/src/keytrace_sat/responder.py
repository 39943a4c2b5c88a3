"""Stock responders for the extern protocol.

    python -m keytrace_sat.responder pass
    python -m keytrace_sat.responder expert TRACE.kt
    python -m keytrace_sat.responder bc MODEL.bcm
    python -m keytrace_sat.responder const LITERAL
"""
from __future__ import annotations

import argparse

from .extern import serve


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(prog="keytrace_sat.responder")
    ap.add_argument("kind", choices=["pass", "expert", "bc", "const"])
    ap.add_argument("arg", nargs="?")
    args = ap.parse_args(argv)
    if args.kind == "pass":
        serve(lambda f, k: None)
    elif args.kind == "const":
        lit = int(args.arg)
        serve(lambda f, k: lit)
    elif args.kind == "expert":
        from .keytrace import load_keytrace
        from .policy import ExpertPolicy

        _, kt = load_keytrace(args.arg)
        serve(ExpertPolicy(kt).query)
    else:
        from .policy import BCModel, BCPolicy

        serve(BCPolicy(BCModel.load(args.arg)).query)


if __name__ == "__main__":
    main()
