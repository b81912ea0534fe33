"""Word-level netlist intermediate representation.

A design is a set of modules, each holding typed signals (inputs, outputs,
wires, registers, memories), single-driver combinational assignments,
register next-state functions, child instances, and optional FSM state-name
annotations. The textual form is line-oriented:

    module NAME            ; starts a module, endmodule closes it
      input  a:8           ; :WIDTH is optional and defaults to 1
      output y:8
      wire   t:8
      reg    q:8 reset=8'h00
      mem    table width=16 depth=256 image="rom.hex"
      assign t = (add a 8'h01)
      next   q = (mux (eq q 8'hFF) 8'h00 t)
      write  table addr=wp data=d en=we
      inst   u0 of child (p=t, q=y)
      fsm    q { IDLE=0, RUN=1 }
    endmodule

Expressions use prefix notation: (and a b), (mux c t e), (extract 3 0 x),
(read table addr). Constants are written 8'hFF, 3'b010, 8'd7, or as bare
decimals whose width is inferred from context. Everything after ';' is a
comment. Statements may span lines while parentheses or braces are open.

Flattening inlines the instance tree into a FlatDesign whose signal names are
the instance path segments joined by '.', rooted at the top module's name
(instance `uart` inside top `soc`, local `state` -> `soc.uart.state`).
Port bindings become alias assignments, so every hierarchical signal keeps an
identity of its own and the dependency graph stays faithful to the source.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

__all__ = [
    "HnlError",
    "Expr",
    "ref",
    "const",
    "Reg",
    "Mem",
    "Inst",
    "ModuleDef",
    "Netlist",
    "FlatDesign",
    "parse_netlist",
    "parse_expr",
    "expr_to_text",
    "flatten",
    "dependency_graph",
    "cone_of_influence",
    "comb_support",
    "topo_order",
    "load_memory_image",
    "image_digest",
]


class HnlError(ValueError):
    """Raised for syntax, type, or structural errors in a netlist."""


# Operator arities for the prefix expression language. extract carries two
# integer fields instead of child expressions; read names a memory.
_UNARY = {"not"}
_BINARY = {"and", "or", "xor", "add", "sub", "mul", "eq", "neq", "ult", "concat"}
_BOOL_RESULT = {"eq", "neq", "ult"}


class Expr:
    """One expression node. Immutable once built.

    kind is one of: ref, const, not, and, or, xor, add, sub, mul, eq, neq,
    ult, concat, extract, mux, read. `a` holds child nodes; `name` is the
    signal for ref and the memory for read; const uses value/width (width is
    None until inference sizes a bare decimal); extract uses hi/lo.
    """

    __slots__ = ("kind", "a", "name", "value", "width", "hi", "lo")

    def __init__(self, kind, a=(), name=None, value=None, width=None, hi=None, lo=None):
        self.kind = kind
        self.a = tuple(a)
        self.name = name
        self.value = value
        self.width = width
        self.hi = hi
        self.lo = lo

    def __repr__(self):
        return f"Expr({expr_to_text(self)})"

    def __eq__(self, other):
        if not isinstance(other, Expr):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.a == other.a
            and self.name == other.name
            and self.value == other.value
            and self.width == other.width
            and self.hi == other.hi
            and self.lo == other.lo
        )

    def __hash__(self):
        return hash((self.kind, self.a, self.name, self.value, self.width, self.hi, self.lo))


def ref(name: str) -> Expr:
    return Expr("ref", name=name)


def const(value: int, width: int | None = None) -> Expr:
    if width is not None and value >= (1 << width):
        raise HnlError(f"constant {value} does not fit in {width} bits")
    if value < 0:
        raise HnlError("constants are unsigned")
    return Expr("const", value=value, width=width)


@dataclass
class Reg:
    width: int
    reset: int
    next: Expr | None = None


@dataclass
class Mem:
    width: int
    depth: int
    image: str | None = None
    write: tuple[Expr, Expr, Expr] | None = None  # (addr, data, en)


@dataclass
class Inst:
    module: str
    portmap: dict[str, str]


@dataclass
class ModuleDef:
    name: str
    inputs: dict[str, int] = field(default_factory=dict)
    outputs: dict[str, int] = field(default_factory=dict)
    wires: dict[str, int] = field(default_factory=dict)
    regs: dict[str, Reg] = field(default_factory=dict)
    mems: dict[str, Mem] = field(default_factory=dict)
    assigns: dict[str, Expr] = field(default_factory=dict)
    insts: dict[str, Inst] = field(default_factory=dict)
    fsm_notes: dict[str, dict[str, int]] = field(default_factory=dict)

    def signal_width(self, name: str) -> int | None:
        for table in (self.inputs, self.outputs, self.wires):
            if name in table:
                return table[name]
        if name in self.regs:
            return self.regs[name].width
        return None

    def signals(self) -> dict[str, int]:
        out = dict(self.inputs)
        out.update(self.outputs)
        out.update(self.wires)
        for n, r in self.regs.items():
            out[n] = r.width
        return out


@dataclass
class Netlist:
    modules: dict[str, ModuleDef]

    def top(self) -> str:
        instantiated = set()
        for m in self.modules.values():
            for inst in m.insts.values():
                instantiated.add(inst.module)
        roots = [n for n in self.modules if n not in instantiated]
        if len(roots) != 1:
            raise HnlError(f"cannot infer a unique top module, candidates: {sorted(roots)}")
        return roots[0]


@dataclass
class FlatDesign:
    """Flattened, validated design. All names are hierarchical."""

    top: str
    signals: dict[str, int]
    inputs: list[str]
    outputs: list[str]
    assigns: dict[str, Expr]
    regs: dict[str, Reg]
    mems: dict[str, Mem]
    origin: dict[str, tuple[str, str, tuple[str, ...]]]  # name -> (module, local, instance path)
    fsm_notes: dict[str, dict[str, int]]
    instances: dict[tuple[str, ...], str]  # instance path -> module name

    def width(self, name: str) -> int:
        return self.signals[name]

    def instance_of(self, name: str) -> tuple[str, ...]:
        return self.origin[name][2]

    def module_of(self, name: str) -> str:
        return self.origin[name][0]

    def instance_signals(self, path: tuple[str, ...]) -> list[str]:
        return [n for n, (_, _, p) in self.origin.items() if p == path]

    def instance_paths_of_module(self, module: str) -> list[tuple[str, ...]]:
        return sorted(p for p, m in self.instances.items() if m == module)


# ---------------------------------------------------------------------------
# Tokenizing and parsing


_CONST_RE = re.compile(r"^(\d+)'([hbd])([0-9a-fA-F_]+)$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _strip_comment(line: str) -> str:
    cut = line.find(";")
    return line if cut < 0 else line[:cut]


def _tokenize(text: str):
    """Yield (lineno, [tokens]) per logical statement.

    A statement continues onto following lines while '(' or '{' remain open.
    """
    pending: list[str] = []
    start_line = 0
    depth = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip() and depth == 0:
            continue
        if not pending:
            start_line = lineno
        toks = re.findall(r"[(){},=]|[^\s(){},=]+", line)
        for t in toks:
            if t == "(" or t == "{":
                depth += 1
            elif t == ")" or t == "}":
                depth -= 1
                if depth < 0:
                    raise HnlError(f"line {lineno}: unbalanced ')'")
        pending.extend(toks)
        if depth == 0 and pending:
            yield start_line, pending
            pending = []
    if pending:
        raise HnlError(f"line {start_line}: unterminated statement")


def _parse_const_token(tok: str) -> Expr | None:
    m = _CONST_RE.match(tok)
    if m:
        width = int(m.group(1))
        base = {"h": 16, "b": 2, "d": 10}[m.group(2)]
        value = int(m.group(3).replace("_", ""), base)
        if width <= 0:
            raise HnlError(f"bad constant width in {tok!r}")
        if value >= (1 << width):
            raise HnlError(f"constant {tok!r} does not fit its width")
        return Expr("const", value=value, width=width)
    if tok.isdigit():
        return Expr("const", value=int(tok), width=None)
    return None


def _parse_expr_tokens(toks: list[str], pos: int, where: str) -> tuple[Expr, int]:
    if pos >= len(toks):
        raise HnlError(f"{where}: expression expected")
    t = toks[pos]
    if t == "(":
        if pos + 1 >= len(toks):
            raise HnlError(f"{where}: operator expected after '('")
        op = toks[pos + 1]
        pos += 2
        if op in _UNARY:
            x, pos = _parse_expr_tokens(toks, pos, where)
            args = (x,)
            node = Expr(op, args)
        elif op in _BINARY:
            x, pos = _parse_expr_tokens(toks, pos, where)
            y, pos = _parse_expr_tokens(toks, pos, where)
            node = Expr(op, (x, y))
        elif op == "mux":
            c, pos = _parse_expr_tokens(toks, pos, where)
            x, pos = _parse_expr_tokens(toks, pos, where)
            y, pos = _parse_expr_tokens(toks, pos, where)
            node = Expr("mux", (c, x, y))
        elif op == "extract":
            if pos + 1 >= len(toks) or not (toks[pos].isdigit() and toks[pos + 1].isdigit()):
                raise HnlError(f"{where}: extract needs two integer bit positions")
            hi, lo = int(toks[pos]), int(toks[pos + 1])
            pos += 2
            x, pos = _parse_expr_tokens(toks, pos, where)
            if hi < lo:
                raise HnlError(f"{where}: extract hi < lo")
            node = Expr("extract", (x,), hi=hi, lo=lo)
        elif op == "read":
            if pos >= len(toks) or not _NAME_RE.match(toks[pos]):
                raise HnlError(f"{where}: read needs a memory name")
            mem = toks[pos]
            pos += 1
            addr, pos = _parse_expr_tokens(toks, pos, where)
            node = Expr("read", (addr,), name=mem)
        else:
            raise HnlError(f"{where}: unknown operator {op!r}")
        if pos >= len(toks) or toks[pos] != ")":
            raise HnlError(f"{where}: missing ')'")
        return node, pos + 1
    c = _parse_const_token(t)
    if c is not None:
        return c, pos + 1
    if _NAME_RE.match(t):
        return Expr("ref", name=t), pos + 1
    raise HnlError(f"{where}: cannot parse token {t!r}")


def parse_expr(text: str) -> Expr:
    """Parse a standalone prefix expression."""
    toks = re.findall(r"[()]|[^\s()]+", _strip_comment(text))
    node, pos = _parse_expr_tokens(toks, 0, "expr")
    if pos != len(toks):
        raise HnlError(f"expr: trailing tokens {toks[pos:]!r}")
    return node


def expr_to_text(e: Expr) -> str:
    """Render an expression back to the textual prefix form."""
    if e.kind == "ref":
        return e.name
    if e.kind == "const":
        if e.width is None:
            return str(e.value)
        return f"{e.width}'h{e.value:X}"
    if e.kind == "extract":
        return f"(extract {e.hi} {e.lo} {expr_to_text(e.a[0])})"
    if e.kind == "read":
        return f"(read {e.name} {expr_to_text(e.a[0])})"
    inner = " ".join(expr_to_text(x) for x in e.a)
    return f"({e.kind} {inner})"


def _parse_width_suffix(tok: str, lineno: int) -> tuple[str, int]:
    if ":" in tok:
        name, w = tok.split(":", 1)
        if not w.isdigit() or int(w) <= 0:
            raise HnlError(f"line {lineno}: bad width in {tok!r}")
        return name, int(w)
    return tok, 1


def _expect_name(tok: str, lineno: int) -> str:
    if not _NAME_RE.match(tok) or "." in tok:
        raise HnlError(f"line {lineno}: bad name {tok!r}")
    return tok


def _kv(tokens: list[str], lineno: int) -> dict[str, list[str]]:
    """Split `k=v k=v ...` runs into a dict of value token lists.

    Values may be parenthesized prefix expressions; a new key starts at the
    next `name =` pair seen at parenthesis depth zero.
    """
    out: dict[str, list[str]] = {}
    i, n = 0, len(tokens)
    while i < n:
        key = tokens[i]
        if i + 1 >= n or tokens[i + 1] != "=":
            raise HnlError(f"line {lineno}: expected '=' after {key!r}")
        if key in out:
            raise HnlError(f"line {lineno}: duplicate key {key!r}")
        i += 2
        val: list[str] = []
        depth = 0
        while i < n:
            t = tokens[i]
            if depth == 0 and val and i + 1 < n and tokens[i + 1] == "=" and t not in "(){}":
                break
            if t in "({":
                depth += 1
            elif t in ")}":
                depth -= 1
            val.append(t)
            i += 1
        if not val or depth != 0:
            raise HnlError(f"line {lineno}: bad value for {key!r}")
        out[key] = val
    return out


def parse_netlist(text: str) -> Netlist:
    modules: dict[str, ModuleDef] = {}
    cur: ModuleDef | None = None

    for lineno, toks in _tokenize(text):
        head = toks[0]
        if head == "module":
            if cur is not None:
                raise HnlError(f"line {lineno}: nested module")
            if len(toks) != 2:
                raise HnlError(f"line {lineno}: module takes one name")
            name = _expect_name(toks[1], lineno)
            if name in modules:
                raise HnlError(f"line {lineno}: duplicate module {name!r}")
            cur = ModuleDef(name=name)
            continue
        if head == "endmodule":
            if cur is None:
                raise HnlError(f"line {lineno}: endmodule outside module")
            modules[cur.name] = cur
            cur = None
            continue
        if cur is None:
            raise HnlError(f"line {lineno}: statement outside module")

        if head in ("input", "output", "wire"):
            if len(toks) != 2:
                raise HnlError(f"line {lineno}: {head} takes one name")
            name, width = _parse_width_suffix(toks[1], lineno)
            _expect_name(name, lineno)
            _check_fresh(cur, name, lineno)
            getattr(cur, head + "s")[name] = width
        elif head == "reg":
            name, width = _parse_width_suffix(toks[1], lineno)
            _expect_name(name, lineno)
            _check_fresh(cur, name, lineno)
            kv = _kv(toks[2:], lineno)
            if set(kv) != {"reset"}:
                raise HnlError(f"line {lineno}: reg needs exactly reset=CONST")
            cexp = _parse_const_token(kv["reset"][0])
            if cexp is None or len(kv["reset"]) != 1:
                raise HnlError(f"line {lineno}: reg reset must be a constant")
            if cexp.width is not None and cexp.width != width:
                raise HnlError(f"line {lineno}: reset width mismatch for {name!r}")
            if cexp.value >= (1 << width):
                raise HnlError(f"line {lineno}: reset value does not fit {name!r}")
            cur.regs[name] = Reg(width=width, reset=cexp.value)
        elif head == "mem":
            name = _expect_name(toks[1], lineno)
            _check_fresh(cur, name, lineno)
            kv = _kv(toks[2:], lineno)
            extra = set(kv) - {"width", "depth", "image"}
            if extra or "width" not in kv or "depth" not in kv:
                raise HnlError(f"line {lineno}: mem needs width= depth= [image=]")
            width = int(kv["width"][0])
            depth = int(kv["depth"][0])
            if depth < 2 or depth & (depth - 1):
                raise HnlError(f"line {lineno}: mem depth must be a power of two >= 2")
            image = None
            if "image" in kv:
                image = kv["image"][0].strip('"')
            cur.mems[name] = Mem(width=width, depth=depth, image=image)
        elif head == "assign" or head == "next":
            name = _expect_name(toks[1], lineno)
            if toks[2] != "=":
                raise HnlError(f"line {lineno}: expected '='")
            expr, pos = _parse_expr_tokens(toks, 3, f"line {lineno}")
            if pos != len(toks):
                raise HnlError(f"line {lineno}: trailing tokens")
            if head == "assign":
                if name in cur.assigns:
                    raise HnlError(f"line {lineno}: {name!r} already assigned")
                cur.assigns[name] = expr
            else:
                if name not in cur.regs:
                    raise HnlError(f"line {lineno}: next target {name!r} is not a reg")
                if cur.regs[name].next is not None:
                    raise HnlError(f"line {lineno}: {name!r} already has a next")
                cur.regs[name].next = expr
        elif head == "write":
            name = _expect_name(toks[1], lineno)
            if name not in cur.mems:
                raise HnlError(f"line {lineno}: write target {name!r} is not a mem")
            if cur.mems[name].write is not None:
                raise HnlError(f"line {lineno}: {name!r} already has a write port")
            kv = _kv(toks[2:], lineno)
            if set(kv) != {"addr", "data", "en"}:
                raise HnlError(f"line {lineno}: write needs addr= data= en=")
            parts = []
            for key in ("addr", "data", "en"):
                e, pos = _parse_expr_tokens(kv[key], 0, f"line {lineno}")
                if pos != len(kv[key]):
                    raise HnlError(f"line {lineno}: trailing tokens in {key}")
                parts.append(e)
            cur.mems[name].write = tuple(parts)
        elif head == "inst":
            if len(toks) < 4 or toks[2] != "of":
                raise HnlError(f"line {lineno}: inst NAME of MODULE (...)")
            iname = _expect_name(toks[1], lineno)
            mname = _expect_name(toks[3], lineno)
            if iname in cur.insts:
                raise HnlError(f"line {lineno}: duplicate instance {iname!r}")
            rest = toks[4:]
            if not rest or rest[0] != "(" or rest[-1] != ")":
                raise HnlError(f"line {lineno}: inst needs a (port=signal, ...) map")
            portmap: dict[str, str] = {}
            body = [t for t in rest[1:-1] if t != ","]
            i = 0
            while i < len(body):
                if i + 2 >= len(body) + 1 or body[i + 1] != "=":
                    raise HnlError(f"line {lineno}: bad port binding near {body[i]!r}")
                p = _expect_name(body[i], lineno)
                s = _expect_name(body[i + 2], lineno)
                if p in portmap:
                    raise HnlError(f"line {lineno}: port {p!r} bound twice")
                portmap[p] = s
                i += 3
            cur.insts[iname] = Inst(module=mname, portmap=portmap)
        elif head == "fsm":
            name = _expect_name(toks[1], lineno)
            rest = toks[2:]
            if not rest or rest[0] != "{" or rest[-1] != "}":
                raise HnlError(f"line {lineno}: fsm needs {{ NAME=CONST, ... }}")
            body = [t for t in rest[1:-1] if t != ","]
            states: dict[str, int] = {}
            i = 0
            while i < len(body):
                if i + 2 > len(body) or body[i + 1] != "=":
                    raise HnlError(f"line {lineno}: bad fsm entry near {body[i]!r}")
                sname = _expect_name(body[i], lineno)
                cexp = _parse_const_token(body[i + 2])
                if cexp is None:
                    raise HnlError(f"line {lineno}: fsm encoding must be a constant")
                if sname in states:
                    raise HnlError(f"line {lineno}: duplicate fsm state {sname!r}")
                if cexp.value in states.values():
                    raise HnlError(f"line {lineno}: duplicate fsm encoding {cexp.value}")
                states[sname] = cexp.value
                i += 3
            if not states:
                raise HnlError(f"line {lineno}: empty fsm annotation")
            cur.fsm_notes[name] = states
        else:
            raise HnlError(f"line {lineno}: unknown statement {head!r}")

    if cur is not None:
        raise HnlError(f"module {cur.name!r} missing endmodule")
    if not modules:
        raise HnlError("no modules found")

    net = Netlist(modules=modules)
    for m in modules.values():
        _validate_module(net, m)
    return net


def _check_fresh(m: ModuleDef, name: str, lineno: int):
    if m.signal_width(name) is not None or name in m.mems:
        raise HnlError(f"line {lineno}: duplicate declaration of {name!r}")


# ---------------------------------------------------------------------------
# Width inference and module validation


def _infer(e: Expr, m: ModuleDef, want: int | None, where: str) -> tuple[Expr, int]:
    """Type-check `e`, sizing bare decimal constants from context.

    Returns a fully sized copy of the expression and its width.
    """
    k = e.kind
    if k == "ref":
        w = m.signal_width(e.name)
        if w is None:
            raise HnlError(f"{where}: unknown signal {e.name!r}")
        return e, w
    if k == "const":
        w = e.width if e.width is not None else want
        if w is None:
            raise HnlError(f"{where}: constant {e.value} needs a width from context")
        if e.value >= (1 << w):
            raise HnlError(f"{where}: constant {e.value} does not fit in {w} bits")
        return (e if e.width == w else Expr("const", value=e.value, width=w)), w
    if k == "not":
        x, w = _infer(e.a[0], m, want, where)
        return Expr("not", (x,)), w
    if k in ("and", "or", "xor", "add", "sub", "mul"):
        x, y = e.a
        if x.kind == "const" and x.width is None:
            y, w = _infer(y, m, want, where)
            x, _ = _infer(x, m, w, where)
        else:
            x, w = _infer(x, m, want, where)
            y, _ = _infer(y, m, w, where)
        _same(x, y, m, w, where)
        return Expr(k, (x, y)), w
    if k in ("eq", "neq", "ult"):
        x, y = e.a
        if x.kind == "const" and x.width is None:
            y, w = _infer(y, m, None, where)
            x, _ = _infer(x, m, w, where)
        else:
            x, w = _infer(x, m, None, where)
            y, _ = _infer(y, m, w, where)
        _same(x, y, m, w, where)
        return Expr(k, (x, y)), 1
    if k == "concat":
        x, wx = _infer(e.a[0], m, None, where)
        y, wy = _infer(e.a[1], m, None, where)
        return Expr("concat", (x, y)), wx + wy
    if k == "extract":
        x, wx = _infer(e.a[0], m, None, where)
        if e.hi >= wx:
            raise HnlError(f"{where}: extract {e.hi}:{e.lo} out of range for width {wx}")
        return Expr("extract", (x,), hi=e.hi, lo=e.lo), e.hi - e.lo + 1
    if k == "mux":
        c, wc = _infer(e.a[0], m, 1, where)
        if wc != 1:
            raise HnlError(f"{where}: mux select must be 1 bit wide, got {wc}")
        x, y = e.a[1], e.a[2]
        if x.kind == "const" and x.width is None:
            y, w = _infer(y, m, want, where)
            x, _ = _infer(x, m, w, where)
        else:
            x, w = _infer(x, m, want, where)
            y, _ = _infer(y, m, w, where)
        _same(x, y, m, w, where)
        return Expr("mux", (c, x, y)), w
    if k == "read":
        if e.name not in m.mems:
            raise HnlError(f"{where}: unknown memory {e.name!r}")
        mem = m.mems[e.name]
        aw = mem.depth.bit_length() - 1
        a, wa = _infer(e.a[0], m, aw, where)
        if wa != aw:
            raise HnlError(
                f"{where}: read address width {wa} does not match log2(depth)={aw} of {e.name!r}"
            )
        return Expr("read", (a,), name=e.name), mem.width
    raise HnlError(f"{where}: unhandled expression kind {k!r}")


def _same(x: Expr, y: Expr, m: ModuleDef, w: int, where: str):
    _, wx = _infer_width_only(x, m)
    _, wy = _infer_width_only(y, m)
    if wx != wy:
        raise HnlError(f"{where}: operand widths differ ({wx} vs {wy})")


def _infer_width_only(e: Expr, m: ModuleDef):
    # Children are already sized when this is called.
    if e.kind == "ref":
        return e, m.signal_width(e.name)
    if e.kind == "const":
        return e, e.width
    if e.kind in _BOOL_RESULT:
        return e, 1
    if e.kind == "concat":
        return e, _infer_width_only(e.a[0], m)[1] + _infer_width_only(e.a[1], m)[1]
    if e.kind == "extract":
        return e, e.hi - e.lo + 1
    if e.kind == "mux":
        return e, _infer_width_only(e.a[1], m)[1]
    if e.kind == "read":
        return e, m.mems[e.name].width
    return e, _infer_width_only(e.a[0], m)[1]


def _validate_module(net: Netlist, m: ModuleDef):
    where = f"module {m.name}"
    for name, expr in list(m.assigns.items()):
        w = m.signal_width(name)
        if name in m.inputs:
            raise HnlError(f"{where}: cannot assign input {name!r}")
        if name in m.regs:
            raise HnlError(f"{where}: use next for register {name!r}")
        if w is None:
            raise HnlError(f"{where}: assign target {name!r} undeclared")
        sized, we = _infer(expr, m, w, f"{where}, assign {name}")
        if we != w:
            raise HnlError(f"{where}: assign {name!r} width {w} got expression width {we}")
        m.assigns[name] = sized
    for name, r in m.regs.items():
        if r.next is not None:
            sized, we = _infer(r.next, m, r.width, f"{where}, next {name}")
            if we != r.width:
                raise HnlError(f"{where}: next {name!r} width {r.width} got {we}")
            r.next = sized
    for name, mem in m.mems.items():
        if mem.write is not None:
            aw = mem.depth.bit_length() - 1
            addr, wa = _infer(mem.write[0], m, aw, f"{where}, write {name} addr")
            data, wd = _infer(mem.write[1], m, mem.width, f"{where}, write {name} data")
            en, wen = _infer(mem.write[2], m, 1, f"{where}, write {name} en")
            if wa != aw:
                raise HnlError(f"{where}: write {name!r} address width {wa} != {aw}")
            if wd != mem.width:
                raise HnlError(f"{where}: write {name!r} data width {wd} != {mem.width}")
            if wen != 1:
                raise HnlError(f"{where}: write {name!r} enable must be 1 bit")
            mem.write = (addr, data, en)
    for iname, inst in m.insts.items():
        if inst.module not in net.modules:
            raise HnlError(f"{where}: instance {iname!r} of unknown module {inst.module!r}")
        child = net.modules[inst.module]
        ports = dict(child.inputs)
        ports.update(child.outputs)
        for p, s in inst.portmap.items():
            if p not in ports:
                raise HnlError(f"{where}: {inst.module!r} has no port {p!r}")
            sw = m.signal_width(s)
            if sw is None:
                raise HnlError(f"{where}: instance {iname!r} binds unknown signal {s!r}")
            if sw != ports[p]:
                raise HnlError(
                    f"{where}: port {p!r} width {ports[p]} bound to {s!r} width {sw}"
                )
        missing = [p for p in child.inputs if p not in inst.portmap]
        if missing:
            raise HnlError(f"{where}: instance {iname!r} leaves inputs unbound: {missing}")
    for rname, states in m.fsm_notes.items():
        if rname not in m.regs:
            raise HnlError(f"{where}: fsm annotation on non-register {rname!r}")
        w = m.regs[rname].width
        for sname, enc in states.items():
            if enc >= (1 << w):
                raise HnlError(f"{where}: fsm state {sname!r} encoding does not fit {rname!r}")


# ---------------------------------------------------------------------------
# Flattening


def _rewrite(e: Expr, sub: dict[str, str], mem_sub: dict[str, str]) -> Expr:
    if e.kind == "ref":
        return Expr("ref", name=sub[e.name])
    if e.kind == "read":
        return Expr("read", (_rewrite(e.a[0], sub, mem_sub),), name=mem_sub[e.name])
    if not e.a:
        return e
    return Expr(
        e.kind,
        tuple(_rewrite(x, sub, mem_sub) for x in e.a),
        name=e.name,
        value=e.value,
        width=e.width,
        hi=e.hi,
        lo=e.lo,
    )


def flatten(net: Netlist, top: str | None = None) -> FlatDesign:
    """Inline the instance tree into a single flat design.

    Hierarchy is instantiated recursively; port bindings become alias
    assignments so both sides of a boundary keep their own named signal.
    Raises on recursive instantiation and on combinational cycles.
    """
    top = top or net.top()
    if top not in net.modules:
        raise HnlError(f"unknown top module {top!r}")

    f = FlatDesign(
        top=top,
        signals={},
        inputs=[],
        outputs=[],
        assigns={},
        regs={},
        mems={},
        origin={},
        fsm_notes={},
        instances={},
    )

    def emit(module: str, path: tuple[str, ...], stack: tuple[str, ...]):
        if module in stack:
            raise HnlError(f"recursive instantiation of {module!r}")
        m = net.modules[module]
        prefix = ".".join(path)
        f.instances[path] = module
        sub = {local: f"{prefix}.{local}" for local in m.signals()}
        mem_sub = {local: f"{prefix}.{local}" for local in m.mems}
        for local, w in m.signals().items():
            name = sub[local]
            f.signals[name] = w
            f.origin[name] = (module, local, path)
        for local, mem in m.mems.items():
            name = mem_sub[local]
            write = None
            if mem.write is not None:
                write = tuple(_rewrite(x, sub, mem_sub) for x in mem.write)
            f.mems[name] = Mem(width=mem.width, depth=mem.depth, image=mem.image, write=write)
            f.origin[name] = (module, local, path)
        for local, expr in m.assigns.items():
            f.assigns[sub[local]] = _rewrite(expr, sub, mem_sub)
        for local, r in m.regs.items():
            nxt = _rewrite(r.next, sub, mem_sub) if r.next is not None else Expr("ref", name=sub[local])
            f.regs[sub[local]] = Reg(width=r.width, reset=r.reset, next=nxt)
        for rname, states in m.fsm_notes.items():
            f.fsm_notes[sub[rname]] = dict(states)
        for iname, inst in m.insts.items():
            child = net.modules[inst.module]
            cpath = path + (iname,)
            emit(inst.module, cpath, stack + (module,))
            cprefix = ".".join(cpath)
            for p, s in inst.portmap.items():
                child_sig = f"{cprefix}.{p}"
                parent_sig = sub[s]
                if p in child.inputs:
                    if child_sig in f.assigns:
                        raise HnlError(f"{child_sig} driven twice")
                    f.assigns[child_sig] = Expr("ref", name=parent_sig)
                else:
                    if parent_sig in f.assigns:
                        raise HnlError(f"{parent_sig} driven twice")
                    f.assigns[parent_sig] = Expr("ref", name=child_sig)

    emit(top, (top,), ())
    m = net.modules[top]
    f.inputs = [f"{top}.{n}" for n in m.inputs]
    f.outputs = [f"{top}.{n}" for n in m.outputs]

    driven = set(f.assigns) | set(f.regs) | set(f.inputs)
    for name in f.signals:
        if name not in driven:
            raise HnlError(f"signal {name} has no driver")

    topo_order(f)  # raises on combinational cycles
    return f


def comb_support(e: Expr) -> set[str]:
    """Signal and memory names an expression reads directly."""
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if n.kind == "ref":
            out.add(n.name)
        elif n.kind == "read":
            out.add(n.name)
        stack.extend(n.a)
    return out


def dependency_graph(f: FlatDesign) -> dict[str, tuple[str, ...]]:
    """Edges s -> signals appearing in the driver of s.

    Wires depend on their assignment support, registers on their next-state
    support, memories on their write-port support. Reads contribute the
    memory name itself plus the address support.
    """
    g: dict[str, tuple[str, ...]] = {}
    for name, expr in f.assigns.items():
        g[name] = tuple(sorted(comb_support(expr)))
    for name, r in f.regs.items():
        g[name] = tuple(sorted(comb_support(r.next)))
    for name, mem in f.mems.items():
        deps: set[str] = set()
        if mem.write is not None:
            for e in mem.write:
                deps |= comb_support(e)
        g[name] = tuple(sorted(deps))
    for name in f.inputs:
        g.setdefault(name, ())
    return g


def cone_of_influence(f: FlatDesign, s: str, comb_only: bool = False) -> set[str]:
    """Transitive dependency cone of signal s (s itself excluded).

    With comb_only=True the walk stops at registers, memories, and top-level
    inputs: the result is the combinational support cone of s's driver.
    """
    g = dependency_graph(f)
    if s not in g:
        raise HnlError(f"unknown signal {s!r}")
    seen: set[str] = set()
    stack = list(g.get(s, ()))
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        if comb_only and (n in f.regs or n in f.mems or n in f.inputs):
            continue
        stack.extend(g.get(n, ()))
    return seen


def topo_order(f: FlatDesign) -> list[str]:
    """Topological evaluation order of the combinational assignments.

    Registers, memories, and inputs are sources. Raises HnlError naming the
    signals on a combinational cycle.
    """
    order: list[str] = []
    state: dict[str, int] = {}  # 0 visiting, 1 done

    def visit(name: str, chain: list[str]):
        st = state.get(name)
        if st == 1:
            return
        if st == 0:
            cycle = chain[chain.index(name):] + [name]
            raise HnlError("combinational cycle: " + " -> ".join(cycle))
        state[name] = 0
        for dep in sorted(comb_support(f.assigns[name])):
            if dep in f.assigns:
                visit(dep, chain + [name])
        state[name] = 1
        order.append(name)

    for name in sorted(f.assigns):
        visit(name, [])
    return order


# ---------------------------------------------------------------------------
# Memory images


def load_memory_image(path: str, width: int, depth: int) -> list[int]:
    """Read a hex image: whitespace-separated words, '#' or '//' comments.

    Returns exactly `depth` words, zero-filled past the image end.
    """
    words: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].split("//", 1)[0].strip()
            if not line:
                continue
            for tok in line.split():
                try:
                    v = int(tok, 16)
                except ValueError:
                    raise HnlError(f"{path}: bad hex word {tok!r}") from None
                if v >= (1 << width):
                    raise HnlError(f"{path}: word {tok!r} wider than {width} bits")
                words.append(v)
    if len(words) > depth:
        raise HnlError(f"{path}: {len(words)} words exceed depth {depth}")
    words.extend(0 for _ in range(depth - len(words)))
    return words


def image_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
