"""FSM extraction, KISS2 serialization, and state path conditions.

A register is recognized as a state register when its next-state function is
a mux decision tree whose leaves are all constants or the register itself,
with at least one constant leaf and at least one mux select comparing the
register against a constant. That is the common `state == ENC ? ... : ...`
decision-tree idiom; registers driven any other way are left alone. `fsm`
annotations in the source supply state names and may add encodings the tree
never mentions; extraction works unannotated too, with synthesized names.

Extracted machines serialize to KISS2. Guards that are conjunctions of
1-bit literals become input cubes; anything else stays '-' in the KISS2 row
and the exact guard expression lives in a JSON sidecar keyed by transition
index, together with the state encodings, so the pair round-trips losslessly.

Nested machines are extracted independently per register: a design with a
controller and a protocol engine yields two Fsm objects with no coupling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .netlist import Expr, FlatDesign, HnlError, comb_support, const, expr_to_text, parse_expr
from .trace import Bits, Trace

__all__ = [
    "Fsm",
    "Transition",
    "FsmError",
    "extract_fsms",
    "visited_states",
    "state_path_conditions",
    "write_kiss2",
    "parse_kiss2",
    "eval_expr_on_trace",
    "check_fsm_against_trace",
]


class FsmError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    src: str
    dst: str
    guard: Expr | None  # None means unconditional

    def guard_text(self) -> str:
        return "1" if self.guard is None else expr_to_text(self.guard)


@dataclass
class Fsm:
    reg: str  # hierarchical state register name
    width: int
    states: dict[str, int]  # name -> encoding
    reset_state: str
    transitions: list[Transition] = field(default_factory=list)

    def encoding(self, name: str) -> int:
        return self.states[name]

    def name_of(self, enc: int) -> str | None:
        for n, e in self.states.items():
            if e == enc:
                return n
        return None

    def same_shape(self, other: "Fsm") -> bool:
        return (
            self.states == other.states
            and self.reset_state == other.reset_state
            and {(t.src, t.dst, t.guard_text()) for t in self.transitions}
            == {(t.src, t.dst, t.guard_text()) for t in other.transitions}
        )


def _mux_paths(e: Expr):
    """Yield (conditions, leaf) where conditions is a list of (Expr, bool)."""
    if e.kind == "mux":
        for conds, leaf in _mux_paths(e.a[1]):
            yield [(e.a[0], True)] + conds, leaf
        for conds, leaf in _mux_paths(e.a[2]):
            yield [(e.a[0], False)] + conds, leaf
    else:
        yield [], e


def _is_state_test(cond: Expr, reg: str) -> int | None:
    """Encoding tested by `(eq reg CONST)` or `(eq CONST reg)`, else None."""
    if cond.kind != "eq":
        return None
    x, y = cond.a
    if x.kind == "ref" and x.name == reg and y.kind == "const":
        return y.value
    if y.kind == "ref" and y.name == reg and x.kind == "const":
        return x.value
    return None


def _conjoin(conds: list[Expr]) -> Expr | None:
    if not conds:
        return None
    out = conds[0]
    for c in conds[1:]:
        out = Expr("and", (out, c))
    return out


def extract_fsms(f: FlatDesign) -> dict[str, Fsm]:
    """Extract one Fsm per state register found in the flat design."""
    out: dict[str, Fsm] = {}
    for reg_name in sorted(f.regs):
        r = f.regs[reg_name]
        paths = list(_mux_paths(r.next))
        if len(paths) < 2:
            continue
        const_leaves = []
        ok = True
        for _, leaf in paths:
            if leaf.kind == "const":
                const_leaves.append(leaf.value)
            elif leaf.kind == "ref" and leaf.name == reg_name:
                pass
            else:
                ok = False
                break
        if not ok or not const_leaves:
            continue
        tested = set()
        for conds, _ in paths:
            for cond, _pol in conds:
                enc = _is_state_test(cond, reg_name)
                if enc is not None:
                    tested.add(enc)
        if not tested:
            continue

        notes = f.fsm_notes.get(reg_name, {})
        encodings = sorted(set(const_leaves) | tested | set(notes.values()) | {r.reset})
        names: dict[int, str] = {}
        for sname, enc in notes.items():
            if enc in names:
                raise FsmError(f"{reg_name}: encoding {enc} has two names")
            names[enc] = sname
        for enc in encodings:
            names.setdefault(enc, f"S{enc}")
        states = {names[enc]: enc for enc in encodings}

        transitions: list[Transition] = []
        for conds, leaf in paths:
            from_set = set(encodings)
            guard_parts: list[Expr] = []
            for cond, pol in conds:
                enc = _is_state_test(cond, reg_name)
                if enc is not None:
                    if pol:
                        from_set &= {enc}
                    else:
                        from_set.discard(enc)
                else:
                    guard_parts.append(cond if pol else Expr("not", (cond,)))
            if not from_set:
                continue
            guard = _conjoin(guard_parts)
            for src_enc in sorted(from_set):
                dst_enc = leaf.value if leaf.kind == "const" else src_enc
                transitions.append(Transition(names[src_enc], names[dst_enc], guard))

        out[reg_name] = Fsm(
            reg=reg_name,
            width=r.width,
            states=states,
            reset_state=names[r.reset],
            transitions=transitions,
        )
    return out


def visited_states(fsm: Fsm, trace: Trace) -> set[str]:
    """Names of states the trace actually occupied. X samples are skipped."""
    lst = trace.changes.get(fsm.reg, [])
    seen: set[str] = set()
    for _, value in lst:
        if not value.is_known():
            continue
        name = fsm.name_of(value.to_int())
        seen.add(name if name is not None else f"S{value.to_int()}")
    return seen


def state_path_conditions(fsm: Fsm) -> dict[str, Expr]:
    """Entry condition per state: OR over incoming edges from other states
    of (state == source) AND guard. A state with no incoming edges gets
    constant false. Self-loops do not count as entry.
    """
    out: dict[str, Expr] = {}
    for sname in fsm.states:
        terms: list[Expr] = []
        for t in fsm.transitions:
            if t.dst != sname or t.src == sname:
                continue
            test = Expr("eq", (Expr("ref", name=fsm.reg), const(fsm.states[t.src], fsm.width)))
            terms.append(test if t.guard is None else Expr("and", (test, t.guard)))
        if not terms:
            out[sname] = const(0, 1)
        else:
            cond = terms[0]
            for term in terms[1:]:
                cond = Expr("or", (cond, term))
            out[sname] = cond
    return out


# ---------------------------------------------------------------------------
# KISS2


def _guard_as_cube(guard: Expr | None) -> dict[str, int] | None:
    """Decompose a guard into 1-bit literal assignments, or None."""
    if guard is None:
        return {}
    cube: dict[str, int] = {}
    stack = [guard]
    while stack:
        e = stack.pop()
        if e.kind == "and":
            stack.extend(e.a)
        elif e.kind == "ref":
            if cube.setdefault(e.name, 1) != 1:
                return None
            cube[e.name] = 1
        elif e.kind == "not" and e.a[0].kind == "ref":
            name = e.a[0].name
            if cube.setdefault(name, 0) != 0:
                return None
            cube[name] = 0
        else:
            return None
    return cube


def write_kiss2(fsm: Fsm) -> tuple[str, str]:
    """Serialize to (kiss2 text, sidecar JSON text)."""
    cubes = [_guard_as_cube(t.guard) for t in fsm.transitions]
    input_names = sorted({n for c in cubes if c for n in c})
    ni = len(input_names)

    lines = [
        f".i {ni}",
        ".o 1",
        f".p {len(fsm.transitions)}",
        f".s {len(fsm.states)}",
        f".r {fsm.reset_state}",
    ]
    for t, cube in zip(fsm.transitions, cubes):
        if cube is None or ni == 0:
            field_in = "-" * max(ni, 1)
        else:
            field_in = "".join(str(cube[n]) if n in cube else "-" for n in input_names)
        lines.append(f"{field_in} {t.src} {t.dst} -")
    kiss = "\n".join(lines) + "\n"

    sidecar = {
        "register": fsm.reg,
        "width": fsm.width,
        "encodings": dict(sorted(fsm.states.items())),
        "inputs": input_names,
        "guards": {str(i): t.guard_text() for i, t in enumerate(fsm.transitions)},
    }
    return kiss, json.dumps(sidecar, indent=2, sort_keys=True) + "\n"


def parse_kiss2(kiss_text: str, sidecar_text: str | None = None) -> Fsm:
    ni = no = np_ = ns = None
    reset_state = None
    rows: list[tuple[str, str, str]] = []
    for raw in kiss_text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == ".i":
            ni = int(toks[1])
        elif toks[0] == ".o":
            no = int(toks[1])
        elif toks[0] == ".p":
            np_ = int(toks[1])
        elif toks[0] == ".s":
            ns = int(toks[1])
        elif toks[0] == ".r":
            reset_state = toks[1]
        elif toks[0].startswith("."):
            raise FsmError(f"unsupported KISS2 directive {toks[0]!r}")
        else:
            if len(toks) != 4:
                raise FsmError(f"bad KISS2 row {line!r}")
            rows.append((toks[0], toks[1], toks[2]))
    if reset_state is None:
        raise FsmError("KISS2 is missing .r")
    if np_ is not None and np_ != len(rows):
        raise FsmError(f".p says {np_} transitions, file has {len(rows)}")
    del no

    side = json.loads(sidecar_text) if sidecar_text else {}
    encodings: dict[str, int] = dict(side.get("encodings", {}))
    inputs: list[str] = list(side.get("inputs", []))
    guards: dict[str, str] = dict(side.get("guards", {}))

    state_order: list[str] = []
    for _, src, dst in rows:
        for s in (src, dst):
            if s not in state_order:
                state_order.append(s)
    if reset_state not in state_order:
        state_order.insert(0, reset_state)
    if ns is not None and ns != len(state_order):
        raise FsmError(f".s says {ns} states, rows mention {len(state_order)}")
    if not encodings:
        encodings = {s: i for i, s in enumerate(state_order)}
    missing = [s for s in state_order if s not in encodings]
    if missing:
        raise FsmError(f"states without encodings: {missing}")

    width = side.get("width") or max(1, (max(encodings.values())).bit_length())
    reg = side.get("register", "state")

    transitions: list[Transition] = []
    for idx, (cube_text, src, dst) in enumerate(rows):
        gtext = guards.get(str(idx))
        if gtext is not None:
            guard = None if gtext == "1" else parse_expr(gtext)
        elif set(cube_text) <= {"-"}:
            guard = None
        else:
            if ni is None or len(cube_text) != max(ni, 1):
                raise FsmError(f"cannot reconstruct guard from cube {cube_text!r}")
            names = inputs if len(inputs) >= len(cube_text) else [
                f"in{i}" for i in range(len(cube_text))
            ]
            parts = []
            for ch, name in zip(cube_text, names):
                if ch == "1":
                    parts.append(Expr("ref", name=name))
                elif ch == "0":
                    parts.append(Expr("not", (Expr("ref", name=name),)))
                elif ch != "-":
                    raise FsmError(f"bad cube character {ch!r}")
            guard = _conjoin(parts)
        transitions.append(Transition(src, dst, guard))

    return Fsm(
        reg=reg,
        width=int(width),
        states={s: int(encodings[s]) for s in state_order},
        reset_state=reset_state,
        transitions=transitions,
    )


# ---------------------------------------------------------------------------
# Trace-level expression evaluation and extraction soundness


def eval_expr_on_trace(e: Expr, trace: Trace, cycle: int) -> Bits:
    """Evaluate an expression over trace values at one cycle.

    Memory reads are unsupported here: traces dump signals, not memories.
    Uses the simulator's X pessimism so guards decode identically.
    """
    k = e.kind
    if k == "ref":
        return trace.value_at(e.name, cycle)
    if k == "const":
        return Bits.from_int(e.value, e.width)
    if k == "read":
        raise FsmError("memory reads cannot be evaluated on a trace")
    args = [eval_expr_on_trace(x, trace, cycle) for x in e.a]
    return _apply_op(k, args, e)


def _apply_op(k: str, args: list[Bits], e: Expr) -> Bits:
    a = args[0]
    if k == "not":
        return Bits(a.width, ~a.val, a.xmask | a.zmask)
    if k in ("and", "or", "xor"):
        b = args[1]
        ax, bx = a.xmask | a.zmask, b.xmask | b.zmask
        if k == "and":
            known0 = (~a.val & ~ax) | (~b.val & ~bx)
            x = (ax | bx) & ~known0
            return Bits(a.width, a.val & b.val, x)
        if k == "or":
            known1 = a.val | b.val
            x = (ax | bx) & ~known1
            return Bits(a.width, known1, x)
        return Bits(a.width, a.val ^ b.val, ax | bx)
    if k in ("add", "sub", "mul"):
        b = args[1]
        if not (a.is_known() and b.is_known()):
            return Bits.all_x(a.width)
        v = {"add": a.val + b.val, "sub": a.val - b.val, "mul": a.val * b.val}[k]
        return Bits(a.width, v)
    if k in ("eq", "neq", "ult"):
        b = args[1]
        if not (a.is_known() and b.is_known()):
            return Bits.all_x(1)
        r = {"eq": a.val == b.val, "neq": a.val != b.val, "ult": a.val < b.val}[k]
        return Bits(1, 1 if r else 0)
    if k == "concat":
        b = args[1]
        return Bits(
            a.width + b.width,
            (a.val << b.width) | b.val,
            ((a.xmask | a.zmask) << b.width) | b.xmask | b.zmask,
        )
    if k == "extract":
        return Bits(e.hi - e.lo + 1, a.val >> e.lo, (a.xmask | a.zmask) >> e.lo)
    if k == "mux":
        if not a.is_known():
            return Bits.all_x(args[1].width)
        return args[1] if a.val else args[2]
    raise FsmError(f"unhandled operator {k!r}")


def check_fsm_against_trace(fsm: Fsm, trace: Trace) -> list[str]:
    """Extraction soundness: every observed state step must be witnessed by
    a declared transition whose guard held. Returns human-readable failures.
    """
    failures: list[str] = []
    end = trace.end_cycle
    for cycle in range(end):
        cur = trace.value_at(fsm.reg, cycle)
        nxt = trace.value_at(fsm.reg, cycle + 1)
        if not (cur.is_known() and nxt.is_known()):
            continue
        src = fsm.name_of(cur.to_int())
        dst = fsm.name_of(nxt.to_int())
        if src is None or dst is None:
            failures.append(f"cycle {cycle}: undeclared encoding {cur} -> {nxt}")
            continue
        witnessed = False
        for t in fsm.transitions:
            if t.src != src or t.dst != dst:
                continue
            if t.guard is None:
                witnessed = True
                break
            g = eval_expr_on_trace(t.guard, trace, cycle)
            if g.is_known() and g.to_int() == 1:
                witnessed = True
                break
        if not witnessed:
            failures.append(f"cycle {cycle}: step {src} -> {dst} has no enabled transition")
    return failures


def support_of_fsm(fsm: Fsm) -> set[str]:
    """Signals referenced by any guard, the state register excluded."""
    out: set[str] = set()
    for t in fsm.transitions:
        if t.guard is not None:
            out |= comb_support(t.guard)
    out.discard(fsm.reg)
    return out
