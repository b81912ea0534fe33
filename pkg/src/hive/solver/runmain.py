"""Console entry points for the bundled solver engines.

`hive-solve-cdcl` and `hive-solve-bdd` (equivalently
`python -m hive.solver.runmain cdcl|bdd`) each read SMT-LIB 2 commands
from stdin and answer on stdout, one reply per check-sat or get-value.
"""

from __future__ import annotations

import sys

from .front import serve

__all__ = ["cdcl_main", "bdd_main", "main"]


class CdclBackend:
    name = "cdcl"

    def check(self, tb, goal):
        from .bitblast import Blaster
        from .cdcl import new_solver

        solver = new_solver()
        blaster = Blaster(solver)
        try:
            blaster.assert_true(goal)
        except RecursionError:
            return "unknown", None
        res = solver.solve()
        if res is False:
            return "unsat", None
        if res is None:
            return "unknown", None
        m = solver.model()
        model = {
            name: blaster.model_value(name, len(bits), m)
            for name, bits in blaster.sym_bits.items()
        }
        return "sat", model


class BddFactory:
    def __call__(self):
        from .bdd import BddBackend

        return BddBackend()


def _run(factory) -> int:
    sys.setrecursionlimit(1_000_000)
    return serve(factory)


def cdcl_main() -> int:
    return _run(CdclBackend)


def bdd_main() -> int:
    return _run(BddFactory())


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    engine = argv[0] if argv else "cdcl"
    if engine == "cdcl":
        return cdcl_main()
    if engine == "bdd":
        return bdd_main()
    sys.stderr.write(f"unknown engine {engine!r}; expected cdcl or bdd\n")
    return 64


if __name__ == "__main__":
    sys.exit(main())
