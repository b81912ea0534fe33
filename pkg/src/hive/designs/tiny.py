"""Small closed designs: exhaustive-oracle food and randomized agreement stock.

toggler is a two-state machine small enough to check anything against
anything. rand_design() emits feed-forward register designs (no feedback,
so every reachable state shows up within two steps) paired with a spec
whose contract row restates one wire through randomized algebraic
rewrites; with mutate=True the rewrite is sabotaged, which usually - not
always - breaks it. Ground truth comes from the exhaustive oracle, never
from the generator.
"""

from __future__ import annotations

import random

from ..netlist import Netlist, parse_netlist

TOGGLER_HNL = """\
module toggler
  input en:1
  output lamp:1
  reg q:1 reset=0
  fsm q { OFF=0, ON=1 }
  next q = (mux en (not q) q)
  assign lamp = q
endmodule
"""


def toggler() -> Netlist:
    return parse_netlist(TOGGLER_HNL)


# ---------------------------------------------------------------------------
# Randomized feed-forward designs

_OPS = ("and", "or", "xor", "add", "sub", "mul")


def _leaf(rng: random.Random, names: list[str], w: int) -> str:
    if rng.random() < 0.25:
        return f"{w}'d{rng.randrange(1 << w)}"
    return rng.choice(names)


def _tree(rng: random.Random, names: list[str], w: int, depth: int) -> str:
    if depth <= 0 or rng.random() < 0.2:
        return _leaf(rng, names, w)
    if rng.random() < 0.15:
        return f"(not {_tree(rng, names, w, depth - 1)})"
    op = rng.choice(_OPS)
    x = _tree(rng, names, w, depth - 1)
    y = _tree(rng, names, w, depth - 1)
    return f"({op} {x} {y})"


def _rewrite(rng: random.Random, e: str) -> str:
    """Semantics-preserving randomized rewrite of a prefix expression."""
    toks = _parse(e)
    return _emit(_rw(rng, toks))


def _parse(e: str):
    out, stack = [], []
    for tok in e.replace("(", " ( ").replace(")", " ) ").split():
        if tok == "(":
            stack.append(out)
            out = []
        elif tok == ")":
            node = out
            out = stack.pop()
            out.append(node)
        else:
            out.append(tok)
    return out[0]


def _emit(n) -> str:
    if isinstance(n, str):
        return n
    return "(" + " ".join(_emit(c) for c in n) + ")"


def _rw(rng: random.Random, n):
    if isinstance(n, str):
        return n
    op, *args = n
    args = [_rw(rng, a) for a in args]
    r = rng.random()
    if op == "and" and r < 0.5:
        return ["not", ["or", ["not", args[0]], ["not", args[1]]]]
    if op == "or" and r < 0.5:
        return ["not", ["and", ["not", args[0]], ["not", args[1]]]]
    if op == "xor" and r < 0.5:
        return ["or", ["and", args[0], ["not", args[1]]],
                ["and", ["not", args[0]], args[1]]]
    if op in ("add", "mul") and r < 0.5:
        return [op, args[1], args[0]]
    if op == "sub" and r < 0.5:
        # p - q == p + ~q + 1 in two's complement
        w = _const_width(args)
        if w is not None:
            return ["add", args[0], ["add", ["not", args[1]], f"{w}'d1"]]
    return [op, *args]


def _const_width(args) -> int | None:
    for a in args:
        if isinstance(a, str) and "'" in a:
            return int(a.split("'")[0])
    return None


def _sabotage(rng: random.Random, n):
    """Make one structural edit that usually changes the function."""
    if isinstance(n, str):
        if "'" in n:
            w, v = n.split("'d")
            return f"{w}'d{(int(v) + 1) % (1 << int(w))}"
        return n
    op, *args = n
    r = rng.random()
    if op == "not" and r < 0.6:
        return args[0]
    if op == "sub" and r < 0.6:
        return ["sub", args[1], args[0]]
    if op in ("and", "or") and r < 0.5:
        return [("or" if op == "and" else "and"), *args]
    k = rng.randrange(len(args))
    args[k] = _sabotage(rng, args[k])
    return [op, *args]


def rand_design(seed: int, *, mutate: bool = False) -> tuple[Netlist, dict]:
    """One feed-forward design plus a spec document.

    The design: two inputs, two chained registers, one checked wire. The
    spec restates the wire's function through algebraic rewrites. With
    mutate=True the restatement is sabotaged instead; whether that breaks
    it is for the oracle to say.
    """
    rng = random.Random(seed)
    w = rng.choice((1, 2, 3))
    f0 = _tree(rng, ["a", "b"], w, 2)
    f1 = _tree(rng, ["a", "b", "r0"], w, 2)
    g = _tree(rng, ["a", "b", "r0", "r1"], w, 3)
    # widths are uniform, so a sub rewrite can always find its width
    spec_expr = _rewrite(rng, _rewrite(rng, g)) if "(" in g else g
    if mutate:
        spec_expr = _emit(_sabotage(rng, _parse(spec_expr)))

    hnl = f"""\
module rnd{seed}
  input a:{w}
  input b:{w}
  output x:{w}
  reg r0:{w} reset={rng.randrange(1 << w)}
  reg r1:{w} reset={rng.randrange(1 << w)}
  next r0 = {f0}
  next r1 = {f1}
  assign x = {g}
endmodule
"""
    doc = {
        "module": f"rnd{seed}",
        "description": "randomized feed-forward design",
        "proof_cycles": 6,
        "contract": [
            {"then": [{"signal": "x", "equals": spec_expr}]},
        ],
    }
    return parse_netlist(hnl), doc
