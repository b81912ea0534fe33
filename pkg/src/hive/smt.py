"""Symbolic unrolling and SMT-LIB 2 backend plumbing.

The machinery here turns a flat design plus a cycle horizon into a term
graph: registers start at their reset values, inputs become either bound
stimulus constants (with hold semantics, matching the simulator) or fresh
per-cycle symbols, and memories become array terms seeded from their
images. Terms are hash-consed through a builder that constant-folds and
applies cheap structural rewrites, so identical subcircuits across cycles
collapse before anything reaches a solver.

Scripts are emitted as flat define-fun chains: every term becomes one
definition whose body mentions only symbols and earlier definitions. That
keeps the grammar the bundled engines must parse small and makes the
scripts linear in the term count. Sessions speak to any SMT-LIB 2 solver
subprocess over stdin/stdout; `get-value` runs after a sat answer, and a
wall-clock budget kills the process and reports a timeout.
"""

from __future__ import annotations

import shlex
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field

from .netlist import Expr, FlatDesign, HnlError, load_memory_image, topo_order

__all__ = [
    "Term",
    "TermBuilder",
    "Unrolling",
    "unroll",
    "term_of_expr",
    "emit_script",
    "CheckResult",
    "solve",
    "solver_command",
    "input_symbol",
    "decode_symbol",
]


class Term:
    """Hash-consed term node. Compare with `is`; identity is interning."""

    __slots__ = ("op", "args", "width", "info", "tid")

    def __init__(self, op: str, args: tuple, width: int, info, tid: int):
        self.op = op
        self.args = args
        self.width = width
        self.info = info
        self.tid = tid

    def __repr__(self):  # debug aid only
        if self.op == "const":
            return f"<{self.width}'d{self.info}>"
        if self.op == "sym":
            return f"<{self.info}:{self.width}>"
        return f"<t{self.tid} {self.op}>"


def _mask(w: int) -> int:
    return (1 << w) - 1


class TermBuilder:
    """Interning constructor with constant folding and light rewrites."""

    def __init__(self):
        self._table: dict[tuple, Term] = {}
        self.terms: list[Term] = []

    def _mk(self, op: str, args: tuple = (), width: int = 0, info=None) -> Term:
        key = (op, tuple(t.tid for t in args), width, info)
        hit = self._table.get(key)
        if hit is not None:
            return hit
        t = Term(op, args, width, info, len(self.terms))
        self._table[key] = t
        self.terms.append(t)
        return t

    # -- leaves ------------------------------------------------------------

    def const(self, value: int, width: int) -> Term:
        if width <= 0:
            raise ValueError("constant width must be positive")
        return self._mk("const", (), width, value & _mask(width))

    def sym(self, name: str, width: int) -> Term:
        return self._mk("sym", (), width, name)

    def array_const(self, idx_width: int, elem_width: int, base: int = 0) -> Term:
        return self._mk("arrayconst", (), elem_width, (idx_width, base))

    def array_sym(self, name: str, idx_width: int, elem_width: int) -> Term:
        return self._mk("arraysym", (), elem_width, (idx_width, name))

    # -- bitvector ops -----------------------------------------------------

    def not_(self, a: Term) -> Term:
        if a.op == "const":
            return self.const(~a.info, a.width)
        if a.op == "not":
            return a.args[0]
        return self._mk("not", (a,), a.width)

    def and_(self, a: Term, b: Term) -> Term:
        if a.op == "const" and b.op == "const":
            return self.const(a.info & b.info, a.width)
        for x, y in ((a, b), (b, a)):
            if x.op == "const":
                if x.info == 0:
                    return self.const(0, a.width)
                if x.info == _mask(a.width):
                    return y
        if a is b:
            return a
        return self._mk("and", self._ordered(a, b), a.width)

    def or_(self, a: Term, b: Term) -> Term:
        if a.op == "const" and b.op == "const":
            return self.const(a.info | b.info, a.width)
        for x, y in ((a, b), (b, a)):
            if x.op == "const":
                if x.info == 0:
                    return y
                if x.info == _mask(a.width):
                    return self.const(_mask(a.width), a.width)
        if a is b:
            return a
        return self._mk("or", self._ordered(a, b), a.width)

    def xor(self, a: Term, b: Term) -> Term:
        if a.op == "const" and b.op == "const":
            return self.const(a.info ^ b.info, a.width)
        if a is b:
            return self.const(0, a.width)
        for x, y in ((a, b), (b, a)):
            if x.op == "const" and x.info == 0:
                return y
        return self._mk("xor", self._ordered(a, b), a.width)

    @staticmethod
    def _ordered(a: Term, b: Term) -> tuple[Term, Term]:
        return (a, b) if a.tid <= b.tid else (b, a)

    def add(self, a: Term, b: Term) -> Term:
        if a.op == "const" and b.op == "const":
            return self.const(a.info + b.info, a.width)
        for x, y in ((a, b), (b, a)):
            if x.op == "const" and x.info == 0:
                return y
        return self._mk("add", self._ordered(a, b), a.width)

    def sub(self, a: Term, b: Term) -> Term:
        if a.op == "const" and b.op == "const":
            return self.const(a.info - b.info, a.width)
        if b.op == "const" and b.info == 0:
            return a
        if a is b:
            return self.const(0, a.width)
        return self._mk("sub", (a, b), a.width)

    def mul(self, a: Term, b: Term) -> Term:
        if a.op == "const" and b.op == "const":
            return self.const(a.info * b.info, a.width)
        for x, y in ((a, b), (b, a)):
            if x.op == "const":
                if x.info == 0:
                    return self.const(0, a.width)
                if x.info == 1:
                    return y
        return self._mk("mul", self._ordered(a, b), a.width)

    def eq(self, a: Term, b: Term) -> Term:
        if a is b:
            return self.const(1, 1)
        if a.op == "const" and b.op == "const":
            return self.const(1 if a.info == b.info else 0, 1)
        return self._mk("eq", self._ordered(a, b), 1)

    def neq(self, a: Term, b: Term) -> Term:
        return self.not_(self.eq(a, b))

    def ult(self, a: Term, b: Term) -> Term:
        if a.op == "const" and b.op == "const":
            return self.const(1 if a.info < b.info else 0, 1)
        if a is b:
            return self.const(0, 1)
        if b.op == "const" and b.info == 0:
            return self.const(0, 1)
        return self._mk("ult", (a, b), 1)

    def concat(self, hi: Term, lo: Term) -> Term:
        if hi.op == "const" and lo.op == "const":
            return self.const((hi.info << lo.width) | lo.info, hi.width + lo.width)
        return self._mk("concat", (hi, lo), hi.width + lo.width)

    def extract(self, a: Term, hi: int, lo: int) -> Term:
        if not (0 <= lo <= hi < a.width):
            raise ValueError(f"extract [{hi}:{lo}] out of range for width {a.width}")
        w = hi - lo + 1
        if w == a.width:
            return a
        if a.op == "const":
            return self.const(a.info >> lo, w)
        if a.op == "concat":
            h, l = a.args
            if lo >= l.width:
                return self.extract(h, hi - l.width, lo - l.width)
            if hi < l.width:
                return self.extract(l, hi, lo)
        if a.op == "extract":
            return self.extract(a.args[0], a.info[1] + hi, a.info[1] + lo)
        return self._mk("extract", (a,), w, (hi, lo))

    def mux(self, sel: Term, a: Term, b: Term) -> Term:
        if sel.width != 1:
            raise ValueError("mux select must be 1 bit")
        if sel.op == "const":
            return a if sel.info == 1 else b
        if a is b:
            return a
        if sel.op == "not":
            return self.mux(sel.args[0], b, a)
        return self._mk("mux", (sel, a, b), a.width)

    # -- arrays --------------------------------------------------------------

    def store(self, arr: Term, idx: Term, val: Term) -> Term:
        return self._mk("store", (arr, idx, val), arr.width, self._arr_idx_width(arr))

    def select(self, arr: Term, idx: Term) -> Term:
        cur = arr
        while cur.op == "store":
            sidx = cur.args[1]
            if sidx is idx:
                return cur.args[2]
            if sidx.op == "const" and idx.op == "const":
                if sidx.info == idx.info:
                    return cur.args[2]
                cur = cur.args[0]
                continue
            break
        if cur.op == "arrayconst" and idx.op == "const":
            return self.const(cur.info[1], cur.width)
        return self._mk("select", (cur if cur is not arr and idx.op == "const" else arr, idx), arr.width)

    @staticmethod
    def _arr_idx_width(arr: Term) -> int:
        t = arr
        while True:
            if t.op == "store":
                t = t.args[0]
            elif t.op == "mux":
                t = t.args[1]
            else:
                break
        if t.op not in ("arrayconst", "arraysym"):
            raise ValueError(f"not an array term: {arr!r}")
        return t.info[0]

    # -- n-ary helpers -------------------------------------------------------

    def any_(self, terms: list[Term]) -> Term:
        out = self.const(0, 1)
        for t in terms:
            out = self.or_(out, t)
        return out

    def all_(self, terms: list[Term]) -> Term:
        out = self.const(1, 1)
        for t in terms:
            out = self.and_(out, t)
        return out


def term_of_expr(tb: TermBuilder, e: Expr, env: dict[str, Term], mems: dict[str, Term]) -> Term:
    """Translate a netlist expression into a term under an environment."""
    k = e.kind
    if k == "ref":
        try:
            return env[e.name]
        except KeyError:
            raise HnlError(f"no binding for signal {e.name!r}") from None
    if k == "const":
        return tb.const(e.value, e.width)
    if k == "read":
        arr = mems.get(e.name)
        if arr is None:
            raise HnlError(f"no binding for memory {e.name!r}")
        return tb.select(arr, term_of_expr(tb, e.a[0], env, mems))
    args = [term_of_expr(tb, x, env, mems) for x in e.a]
    if k == "not":
        return tb.not_(args[0])
    if k == "and":
        return tb.and_(args[0], args[1])
    if k == "or":
        return tb.or_(args[0], args[1])
    if k == "xor":
        return tb.xor(args[0], args[1])
    if k == "add":
        return tb.add(args[0], args[1])
    if k == "sub":
        return tb.sub(args[0], args[1])
    if k == "mul":
        return tb.mul(args[0], args[1])
    if k == "eq":
        return tb.eq(args[0], args[1])
    if k == "neq":
        return tb.neq(args[0], args[1])
    if k == "ult":
        return tb.ult(args[0], args[1])
    if k == "concat":
        return tb.concat(args[0], args[1])
    if k == "extract":
        return tb.extract(args[0], e.hi, e.lo)
    if k == "mux":
        return tb.mux(args[0], args[1], args[2])
    raise HnlError(f"unhandled expression kind {k!r}")


# ---------------------------------------------------------------------------
# Unrolling


def input_symbol(name: str, cycle: int) -> str:
    return f"in!{name}!{cycle}"


def decode_symbol(sym: str) -> tuple[str, str, int] | None:
    """Split 'kind!signal!cycle' symbol names. None for other symbols."""
    parts = sym.split("!")
    if len(parts) == 3 and parts[0] in ("in", "ov", "ab") and parts[2].isdigit():
        return parts[0], parts[1], int(parts[2])
    return None


@dataclass
class Unrolling:
    tb: TermBuilder
    design: FlatDesign
    n_cycles: int
    values: list[dict[str, Term]]  # per cycle: every named signal
    mems: list[dict[str, Term]]  # per cycle: memory array state
    assumptions: list[Term] = field(default_factory=list)

    def at(self, name: str, cycle: int) -> Term:
        return self.values[cycle][name]

    def assume(self, t: Term) -> None:
        if t.width != 1:
            raise ValueError("assumptions must be 1-bit terms")
        self.assumptions.append(t)

    def expr_at(self, e: Expr, cycle: int) -> Term:
        return term_of_expr(self.tb, e, self.values[cycle], self.mems[cycle])

    def uses_arrays(self) -> bool:
        seen: set[int] = set()
        stack = list(self.assumptions)
        for v in self.values:
            stack.extend(v.values())
        while stack:
            t = stack.pop()
            if t.tid in seen:
                continue
            seen.add(t.tid)
            if t.op in ("arrayconst", "arraysym", "store", "select"):
                return True
            stack.extend(t.args)
        return False


def _image_array(tb: TermBuilder, idx_w: int, elem_w: int, words) -> Term:
    arr = tb.array_const(idx_w, elem_w, 0)
    if words:
        for i, w in enumerate(words):
            if w:
                arr = tb.store(arr, tb.const(i, idx_w), tb.const(w, elem_w))
    return arr


def unroll(
    f: FlatDesign,
    n_cycles: int,
    *,
    tb: TermBuilder | None = None,
    stimulus: list[tuple[int, str, int]] | None = None,
    images: dict[str, list[int]] | None = None,
    overrides: dict[str, object] | None = None,
    free_mems: bool = False,
    reg_init: str = "reset",
) -> Unrolling:
    """Build the symbolic transition unrolling over `n_cycles` cycles.

    stimulus entries are (cycle, input, value) and hold until redriven,
    exactly like the simulator; inputs with no binding at a cycle become
    fresh symbols there. `overrides` maps a signal name to a callable
    (cycle, builder, original_term) -> Term replacing that signal's value;
    hint application is implemented as a re-unroll with overrides.
    `reg_init` is "reset" or "free".
    """
    if n_cycles <= 0:
        raise ValueError("n_cycles must be positive")
    tb = tb or TermBuilder()
    images = images or {}
    overrides = overrides or {}

    drive: dict[str, dict[int, int]] = {}
    for cyc, name, val in stimulus or []:
        if name not in f.inputs:
            raise HnlError(f"stimulus target {name!r} is not an input")
        drive.setdefault(name, {})[cyc] = val

    order = topo_order(f)
    u = Unrolling(tb, f, n_cycles, [], [])

    regs_now: dict[str, Term] = {}
    for rname, r in sorted(f.regs.items()):
        if reg_init == "reset":
            regs_now[rname] = tb.const(r.reset, r.width)
        elif reg_init == "free":
            regs_now[rname] = tb.sym(f"r0!{rname}", r.width)
        else:
            raise ValueError(f"bad reg_init {reg_init!r}")

    mems_now: dict[str, Term] = {}
    for mname, m in sorted(f.mems.items()):
        idx_w = max(1, (m.depth - 1).bit_length())
        if mname in images:
            mems_now[mname] = _image_array(tb, idx_w, m.width, images[mname])
        elif m.image is not None:
            words = load_memory_image(m.image, m.width, m.depth)
            mems_now[mname] = _image_array(tb, idx_w, m.width, words)
        elif free_mems:
            mems_now[mname] = tb.array_sym(f"mem!{mname}", idx_w, m.width)
        else:
            mems_now[mname] = _image_array(tb, idx_w, m.width, [])

    held: dict[str, tuple[int, int] | None] = {n: None for n in f.inputs}

    def apply_override(name: str, k: int, val: Term) -> Term:
        ov = overrides.get(name)
        return ov(k, tb, val) if ov is not None else val

    for k in range(n_cycles):
        env: dict[str, Term] = {}
        for rname, val in regs_now.items():
            env[rname] = apply_override(rname, k, val)
        for name in sorted(f.inputs):
            d = drive.get(name, {})
            if k in d:
                held[name] = (k, d[k])
            h = held[name]
            if h is not None:
                val = tb.const(h[1], f.width(name))
            else:
                val = tb.sym(input_symbol(name, k), f.width(name))
            env[name] = apply_override(name, k, val)

        for name in order:
            if name in env:
                raise HnlError(f"signal {name!r} both assigned and stateful")
            env[name] = apply_override(
                name, k, term_of_expr(tb, f.assigns[name], env, mems_now)
            )

        u.values.append(env)
        u.mems.append(dict(mems_now))

        if k + 1 == n_cycles:
            break

        regs_next: dict[str, Term] = {}
        for rname, r in sorted(f.regs.items()):
            regs_next[rname] = term_of_expr(tb, r.next, env, mems_now)
        mems_next = dict(mems_now)
        for mname, m in sorted(f.mems.items()):
            if m.write is None:
                continue
            addr_e, data_e, en_e = m.write
            en = term_of_expr(tb, en_e, env, mems_now)
            addr = term_of_expr(tb, addr_e, env, mems_now)
            data = term_of_expr(tb, data_e, env, mems_now)
            stored = tb.store(mems_next[mname], addr, data)
            if en.op == "const":
                if en.info == 1:
                    mems_next[mname] = stored
            else:
                mems_next[mname] = tb.mux(en, stored, mems_next[mname])
        regs_now = regs_next
        mems_now = mems_next

    return u


# ---------------------------------------------------------------------------
# Script emission


def _bv_lit(value: int, width: int) -> str:
    return "#b" + format(value & _mask(width), f"0{width}b")


def _is_array_term(t: Term) -> bool:
    while t.op == "mux":
        t = t.args[1]
    return t.op in ("arrayconst", "arraysym", "store")


def _sort_of(t: Term) -> str:
    if _is_array_term(t):
        iw = TermBuilder._arr_idx_width(t)
        return f"(Array (_ BitVec {iw}) (_ BitVec {t.width}))"
    return f"(_ BitVec {t.width})"


def _body(t: Term, ref) -> str:
    op = t.op
    a = [ref(x) for x in t.args]
    if op == "not":
        return f"(bvnot {a[0]})"
    if op in ("and", "or", "xor", "add", "sub", "mul"):
        word = {"and": "bvand", "or": "bvor", "xor": "bvxor",
                "add": "bvadd", "sub": "bvsub", "mul": "bvmul"}[op]
        return f"({word} {a[0]} {a[1]})"
    if op == "eq":
        return f"(ite (= {a[0]} {a[1]}) #b1 #b0)"
    if op == "ult":
        return f"(ite (bvult {a[0]} {a[1]}) #b1 #b0)"
    if op == "concat":
        return f"(concat {a[0]} {a[1]})"
    if op == "extract":
        hi, lo = t.info
        return f"((_ extract {hi} {lo}) {a[0]})"
    if op == "mux":
        return f"(ite (= {a[0]} #b1) {a[1]} {a[2]})"
    if op == "store":
        return f"(store {a[0]} {a[1]} {a[2]})"
    if op == "select":
        return f"(select {a[0]} {a[1]})"
    if op == "arrayconst":
        iw, base = t.info
        sort = f"(Array (_ BitVec {iw}) (_ BitVec {t.width}))"
        return f"((as const {sort}) {_bv_lit(base, t.width)})"
    raise ValueError(f"cannot emit {op!r}")


def emit_script(
    goal: Term,
    assumptions: list[Term] | None = None,
    *,
    logic: str | None = None,
    comment: str | None = None,
) -> tuple[str, list[str]]:
    """Emit a full SMT-LIB 2 script asserting assumptions and the goal.

    The goal and each assumption are 1-bit terms asserted equal to 1. The
    script ends at (check-sat); value queries happen interactively in the
    session afterwards. Returns (script text, symbol names in the cone).
    """
    roots = [goal] + list(assumptions or [])
    for r in roots:
        if r.width != 1:
            raise ValueError("asserted terms must be 1-bit")

    reach: list[Term] = []
    seen: set[int] = set()
    stack = list(roots)
    while stack:
        t = stack.pop()
        if t.tid in seen:
            continue
        seen.add(t.tid)
        reach.append(t)
        stack.extend(t.args)
    reach.sort(key=lambda t: t.tid)

    uses_arrays = any(t.op in ("arrayconst", "arraysym", "store", "select") for t in reach)
    lg = logic or ("QF_ABV" if uses_arrays else "QF_BV")

    names: dict[int, str] = {}
    syms: list[str] = []
    lines: list[str] = []
    if comment:
        for c in comment.splitlines():
            lines.append(f"; {c}")
    lines.append(f"(set-logic {lg})")

    def ref(t: Term) -> str:
        return names[t.tid]

    for t in reach:
        if t.op == "const":
            names[t.tid] = _bv_lit(t.info, t.width)
        elif t.op == "sym":
            nm = f"|{t.info}|"
            names[t.tid] = nm
            syms.append(t.info)
            lines.append(f"(declare-fun {nm} () (_ BitVec {t.width}))")
        elif t.op == "arraysym":
            nm = f"|{t.info[1]}|"
            names[t.tid] = nm
            syms.append(t.info[1])
            lines.append(f"(declare-fun {nm} () {_sort_of(t)})")
        else:
            nm = f"t{t.tid}"
            names[t.tid] = nm
            lines.append(f"(define-fun {nm} () {_sort_of(t)} {_body(t, ref)})")

    for r in roots:
        lines.append(f"(assert (= {ref(r)} #b1))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n", syms


# ---------------------------------------------------------------------------
# Solver subprocess session


@dataclass
class CheckResult:
    status: str  # sat | unsat | unknown | timeout | error
    model: dict[str, int] = field(default_factory=dict)
    detail: str = ""
    seconds: float = 0.0

    def __bool__(self):
        raise TypeError("inspect .status explicitly")


def solver_command(spec: str | None) -> list[str]:
    """Resolve a solver spec to an argv.

    'cdcl' and 'bdd' run the bundled engines through the current
    interpreter; anything else is split as an external command line
    (e.g. 'z3 -in' or 'cvc5 --incremental').
    """
    if spec in (None, "", "cdcl"):
        return [sys.executable, "-m", "hive.solver.runmain", "cdcl"]
    if spec == "bdd":
        return [sys.executable, "-m", "hive.solver.runmain", "bdd"]
    return shlex.split(spec)


def _parse_sexpr(text: str):
    toks = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def walk():
        nonlocal pos
        tok = toks[pos]
        pos += 1
        if tok == "(":
            out = []
            while toks[pos] != ")":
                out.append(walk())
            pos += 1
            return out
        return tok

    return walk()


def _value_of(node) -> int | None:
    if isinstance(node, str):
        if node.startswith("#b"):
            return int(node[2:], 2)
        if node.startswith("#x"):
            return int(node[2:], 16)
        return None
    if len(node) == 3 and node[0] == "_" and str(node[1]).startswith("bv"):
        return int(str(node[1])[2:])
    return None


def solve(
    script: str,
    symbols: list[str],
    *,
    solver: str | None = None,
    timeout_s: float = 60.0,
    want_model: bool = True,
) -> CheckResult:
    """Run one check-sat against a solver subprocess.

    On sat, queries the listed symbols with get-value. The subprocess is
    killed at the wall-clock budget and the result reported as a timeout.
    """
    cmd = solver_command(solver)
    t0 = time.monotonic()
    try:
        proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as exc:
        return CheckResult("error", detail=f"cannot start solver {cmd!r}: {exc}")

    timed_out = threading.Event()

    def _kill():
        timed_out.set()
        proc.kill()

    timer = threading.Timer(timeout_s, _kill)
    timer.start()
    try:
        query = ""
        if symbols and want_model:
            query = "(get-value (" + " ".join(f"|{s}|" for s in symbols) + "))\n"
        out, err = proc.communicate(script + query + "(exit)\n")
    except Exception as exc:  # broken pipe and friends
        proc.kill()
        timer.cancel()
        return CheckResult("error", detail=str(exc), seconds=time.monotonic() - t0)
    finally:
        timer.cancel()
    dt = time.monotonic() - t0

    if timed_out.is_set():
        return CheckResult("timeout", seconds=dt)

    lines = [ln.strip() for ln in out.splitlines() if ln.strip()]
    status = None
    rest = []
    for ln in lines:
        if status is None and ln in ("sat", "unsat", "unknown"):
            status = ln
        elif status is not None:
            rest.append(ln)
    if status is None:
        return CheckResult("error", detail=(err or out)[-2000:], seconds=dt)

    model: dict[str, int] = {}
    if status == "sat" and rest:
        blob = "\n".join(rest)
        try:
            node = _parse_sexpr(blob)
            for pair in node:
                if isinstance(pair, list) and len(pair) == 2:
                    name = str(pair[0]).strip("|")
                    v = _value_of(pair[1])
                    if v is not None:
                        model[name] = v
        except (IndexError, ValueError):
            pass
    return CheckResult(status, model=model, seconds=dt)
