"""SMT-LIB 2 front end shared by the bundled engines.

Parses a practical subset of the language: declare-fun / declare-const of
bitvector and array sort, zero-argument define-fun, assert, check-sat,
get-value, push-free linear scripts, and the usual bitvector operators.
Bool is modeled as a 1-bit bitvector throughout, so `(= a b)` and `bvult`
produce 1-bit terms and `assert` accepts them directly.

Arrays never reach the decision cores: a rewriting pass removes them by
pushing selects through store and ite chains, and Ackermann constraints
keep selects on symbolic array bases consistent. Engines therefore only
ever see pure bitvector terms.
"""

from __future__ import annotations

import sys

from ..smt import Term, TermBuilder

__all__ = ["Session", "serve", "parse_tokens", "tokenize_stream", "FrontError"]


class FrontError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Streaming tokenizer and reader


def tokenize_stream(stream):
    """Yield tokens from an SMT-LIB character stream, lazily."""
    buf = ""
    while True:
        ch = stream.read(1)
        if ch == "":
            if buf:
                yield buf
            return
        if ch == ";":
            if buf:
                yield buf
                buf = ""
            while ch not in ("", "\n"):
                ch = stream.read(1)
            continue
        if ch == "|":
            if buf:
                yield buf
            buf = "|"
            while True:
                ch = stream.read(1)
                if ch == "":
                    raise FrontError("unterminated quoted symbol")
                buf += ch
                if ch == "|":
                    break
            yield buf
            buf = ""
            continue
        if ch in "()":
            if buf:
                yield buf
                buf = ""
            yield ch
            continue
        if ch.isspace():
            if buf:
                yield buf
                buf = ""
            continue
        buf += ch


def parse_tokens(tokens):
    """Yield one complete s-expression at a time from a token iterator."""
    stack: list[list] = []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise FrontError("unbalanced ')'")
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                yield done
        else:
            atom = tok[1:-1] if tok.startswith("|") and tok.endswith("|") and len(tok) > 1 else tok
            if stack:
                stack[-1].append(atom)
            else:
                yield atom
    if stack:
        raise FrontError("unexpected end of input inside s-expression")


# ---------------------------------------------------------------------------
# Sorts and terms


def _parse_sort(node) -> tuple:
    """Return ('bv', w) | ('bool',) | ('array', iw, ew)."""
    if node == "Bool":
        return ("bool",)
    if isinstance(node, list):
        if len(node) == 3 and node[0] == "_" and node[1] == "BitVec":
            return ("bv", int(node[2]))
        if len(node) == 3 and node[0] == "Array":
            idx = _parse_sort(node[1])
            elem = _parse_sort(node[2])
            if idx[0] != "bv" or elem[0] != "bv":
                raise FrontError("only bitvector-indexed bitvector arrays")
            return ("array", idx[1], elem[1])
    raise FrontError(f"unsupported sort {node!r}")


def _lit_of(atom: str, tb: TermBuilder) -> Term | None:
    if atom.startswith("#b"):
        return tb.const(int(atom[2:], 2), len(atom) - 2)
    if atom.startswith("#x"):
        return tb.const(int(atom[2:], 16), (len(atom) - 2) * 4)
    return None


class _Env:
    def __init__(self):
        self.names: dict[str, Term] = {}
        self.sorts: dict[str, tuple] = {}


def _parse_term(node, env: _Env, tb: TermBuilder) -> Term:
    if isinstance(node, str):
        if node == "true":
            return tb.const(1, 1)
        if node == "false":
            return tb.const(0, 1)
        lit = _lit_of(node, tb)
        if lit is not None:
            return lit
        t = env.names.get(node)
        if t is None:
            raise FrontError(f"unknown symbol {node!r}")
        return t

    if not node:
        raise FrontError("empty application")
    head = node[0]

    if isinstance(head, list):
        # applied indexed/qualified heads: ((_ extract hi lo) x), ((as const S) v)
        if len(head) == 4 and head[0] == "_" and head[1] == "extract":
            a = _parse_term(node[1], env, tb)
            return tb.extract(a, int(head[2]), int(head[3]))
        if len(head) == 3 and head[0] == "as" and head[1] == "const":
            sort = _parse_sort(head[2])
            if sort[0] != "array":
                raise FrontError("as-const needs an array sort")
            base = _parse_term(node[1], env, tb)
            if base.op != "const":
                raise FrontError("as-const base must be a literal")
            return tb.array_const(sort[1], sort[2], base.info)
        raise FrontError(f"unsupported applied head {head!r}")

    if head == "_":
        if len(node) == 3 and str(node[1]).startswith("bv"):
            return tb.const(int(str(node[1])[2:]), int(node[2]))
        raise FrontError(f"unsupported indexed term {node!r}")

    if head == "let":
        inner = _Env()
        inner.names = dict(env.names)
        inner.sorts = dict(env.sorts)
        for pair in node[1]:
            inner.names[pair[0]] = _parse_term(pair[1], env, tb)
        return _parse_term(node[2], inner, tb)

    if head == "ite":
        c = _parse_term(node[1], env, tb)
        a = _parse_term(node[2], env, tb)
        b = _parse_term(node[3], env, tb)
        return tb.mux(c, a, b)

    if head == "concat":
        args = [_parse_term(x, env, tb) for x in node[1:]]
        out = args[0]
        for a in args[1:]:
            out = tb.concat(out, a)
        return out
    if head == "select":
        return tb.select(_parse_term(node[1], env, tb), _parse_term(node[2], env, tb))
    if head == "store":
        return tb.store(
            _parse_term(node[1], env, tb),
            _parse_term(node[2], env, tb),
            _parse_term(node[3], env, tb),
        )
    if head not in _KNOWN_HEADS:
        raise FrontError(f"unsupported operator {head!r}")

    args = [_parse_term(x, env, tb) for x in node[1:]]

    if head == "not":
        _want_bool(args)
        return tb.not_(args[0])
    if head in ("and", "or", "xor"):
        _want_bool(args)
        out = args[0]
        fn = {"and": tb.and_, "or": tb.or_, "xor": tb.xor}[head]
        for a in args[1:]:
            out = fn(out, a)
        return out
    if head == "=>":
        _want_bool(args)
        out = args[-1]
        for a in reversed(args[:-1]):
            out = tb.or_(tb.not_(a), out)
        return out
    if head == "=":
        out = None
        for a, b in zip(args, args[1:]):
            e = tb.eq(a, b)
            out = e if out is None else tb.and_(out, e)
        return out
    if head == "distinct":
        out = None
        for i, a in enumerate(args):
            for b in args[i + 1:]:
                e = tb.not_(tb.eq(a, b))
                out = e if out is None else tb.and_(out, e)
        return out
    if head == "bvnot":
        return tb.not_(args[0])
    if head in ("bvand", "bvor", "bvxor", "bvadd", "bvsub", "bvmul"):
        fn = {
            "bvand": tb.and_, "bvor": tb.or_, "bvxor": tb.xor,
            "bvadd": tb.add, "bvsub": tb.sub, "bvmul": tb.mul,
        }[head]
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out
    if head == "bvult":
        return tb.ult(args[0], args[1])
    if head == "bvule":
        return tb.not_(tb.ult(args[1], args[0]))
    if head == "bvugt":
        return tb.ult(args[1], args[0])
    if head == "bvuge":
        return tb.not_(tb.ult(args[0], args[1]))
    raise FrontError(f"unsupported operator {head!r}")


_KNOWN_HEADS = {
    "not", "and", "or", "xor", "=>", "=", "distinct", "ite",
    "bvnot", "bvand", "bvor", "bvxor", "bvadd", "bvsub", "bvmul",
    "bvult", "bvule", "bvugt", "bvuge", "concat", "select", "store", "let",
}


def _want_bool(args: list[Term]) -> None:
    for a in args:
        if a.width != 1:
            raise FrontError("boolean operator applied to wide bitvector")


# ---------------------------------------------------------------------------
# Array elimination


def eliminate_arrays(tb: TermBuilder, roots: list[Term]) -> tuple[list[Term], list[Term]]:
    """Rewrite away select/store/array terms.

    Returns (rewritten roots, side constraints). Selects push through
    store and ite chains; selects on symbolic array bases become fresh
    symbols with Ackermann consistency constraints (equal indices force
    equal values). Scheduling is an explicit worklist: a select node
    depends on its index plus every scalar buried in its array chain, so
    no recursion tracks the term graph depth.
    """
    cache: dict[int, Term] = {}
    acker: dict[str, list[tuple[Term, Term]]] = {}
    side: list[Term] = []

    def scalar_deps(t: Term) -> list[Term]:
        if t.op != "select":
            return list(t.args)
        deps = [t.args[1]]
        chain = [t.args[0]]
        while chain:
            a = chain.pop()
            if a.op == "store":
                chain.append(a.args[0])
                deps.append(a.args[1])
                deps.append(a.args[2])
            elif a.op == "mux":
                deps.append(a.args[0])
                chain.append(a.args[1])
                chain.append(a.args[2])
            elif a.op not in ("arrayconst", "arraysym"):
                raise FrontError(f"select over non-array {a.op!r}")
        return deps

    def sel(arr: Term, idx: Term) -> Term:
        # depth here is the array chain length, bounded by image size
        # plus writes, not by the whole term graph
        if arr.op == "store":
            base, i, v = arr.args
            return tb.mux(tb.eq(idx, cache[i.tid]), cache[v.tid], sel(base, idx))
        if arr.op == "mux":
            c, a, b = arr.args
            return tb.mux(cache[c.tid], sel(a, idx), sel(b, idx))
        if arr.op == "arrayconst":
            return tb.const(arr.info[1], arr.width)
        name = arr.info[1]
        fresh = tb.sym(f"{name}@{idx.tid}", arr.width)
        for prev_idx, prev_val in acker.setdefault(name, []):
            if prev_idx is not idx:
                side.append(tb.or_(tb.not_(tb.eq(prev_idx, idx)), tb.eq(prev_val, fresh)))
            else:
                side.append(tb.eq(prev_val, fresh))
        acker[name].append((idx, fresh))
        return fresh

    def build(t: Term) -> Term:
        if t.op == "select":
            return sel(t.args[0], cache[t.args[1].tid])
        if t.op in ("arrayconst", "arraysym", "store"):
            raise FrontError("array term in bitvector position")
        args = tuple(cache[a.tid] for a in t.args)
        return t if args == t.args else _rebuild(tb, t, args)

    stack = list(roots)
    while stack:
        cur = stack[-1]
        if cur.tid in cache:
            stack.pop()
            continue
        pending = [d for d in scalar_deps(cur) if d.tid not in cache]
        if pending:
            stack.extend(pending)
            continue
        stack.pop()
        cache[cur.tid] = build(cur)

    return [cache[r.tid] for r in roots], side


def _rebuild(tb: TermBuilder, t: Term, args: tuple[Term, ...]) -> Term:
    op = t.op
    if op == "not":
        return tb.not_(args[0])
    if op == "and":
        return tb.and_(args[0], args[1])
    if op == "or":
        return tb.or_(args[0], args[1])
    if op == "xor":
        return tb.xor(args[0], args[1])
    if op == "add":
        return tb.add(args[0], args[1])
    if op == "sub":
        return tb.sub(args[0], args[1])
    if op == "mul":
        return tb.mul(args[0], args[1])
    if op == "eq":
        return tb.eq(args[0], args[1])
    if op == "ult":
        return tb.ult(args[0], args[1])
    if op == "concat":
        return tb.concat(args[0], args[1])
    if op == "extract":
        return tb.extract(args[0], t.info[0], t.info[1])
    if op == "mux":
        return tb.mux(args[0], args[1], args[2])
    raise FrontError(f"cannot rebuild {op!r}")


# ---------------------------------------------------------------------------
# Session and server loop


class Session:
    """One solver process: command dispatch over a backend decision core."""

    def __init__(self, backend_factory, out=None):
        self.tb = TermBuilder()
        self.env = _Env()
        self.assertions: list[Term] = []
        self.backend_factory = backend_factory
        self.out = out or sys.stdout
        self.model: dict[str, int] | None = None
        self.sym_widths: dict[str, int] = {}

    def _reply(self, text: str) -> None:
        self.out.write(text + "\n")
        self.out.flush()

    def handle(self, cmd) -> bool:
        """Process one command; False stops the loop."""
        if not isinstance(cmd, list) or not cmd:
            self._reply('(error "malformed command")')
            return True
        head = cmd[0]
        try:
            if head in ("set-logic", "set-option", "set-info"):
                pass
            elif head in ("declare-fun", "declare-const"):
                name = cmd[1]
                if head == "declare-fun":
                    if cmd[2]:
                        raise FrontError("only zero-arity declare-fun")
                    sort = _parse_sort(cmd[3])
                else:
                    sort = _parse_sort(cmd[2])
                if sort[0] == "bv":
                    self.env.names[name] = self.tb.sym(name, sort[1])
                    self.sym_widths[name] = sort[1]
                elif sort[0] == "bool":
                    self.env.names[name] = self.tb.sym(name, 1)
                    self.sym_widths[name] = 1
                else:
                    self.env.names[name] = self.tb.array_sym(name, sort[1], sort[2])
                self.env.sorts[name] = sort
            elif head == "define-fun":
                name, params, _sort, body = cmd[1], cmd[2], cmd[3], cmd[4]
                if params:
                    raise FrontError("only zero-arity define-fun")
                self.env.names[name] = _parse_term(body, self.env, self.tb)
            elif head == "assert":
                t = _parse_term(cmd[1], self.env, self.tb)
                if t.width != 1:
                    raise FrontError("assert needs a boolean term")
                self.assertions.append(t)
                self.model = None
            elif head == "check-sat":
                self._check()
            elif head == "get-value":
                self._get_value(cmd[1])
            elif head in ("exit",):
                return False
            elif head == "reset":
                self.__init__(self.backend_factory, self.out)
            else:
                raise FrontError(f"unsupported command {head!r}")
        except FrontError as exc:
            self._reply(f'(error "{exc}")')
        except RecursionError:
            self._reply('(error "term too deep")')
        return True

    def _check(self) -> None:
        roots, side = eliminate_arrays(self.tb, self.assertions)
        goal = self.tb.all_(roots + side)
        if goal.op == "const":
            if goal.info == 1:
                self.model = {}
                self._reply("sat")
            else:
                self.model = None
                self._reply("unsat")
            return
        backend = self.backend_factory()
        status, model = backend.check(self.tb, goal)
        self.model = model if status == "sat" else None
        self._reply(status)

    def _get_value(self, names) -> None:
        if self.model is None:
            self._reply('(error "no model available")')
            return
        parts = []
        for raw in names:
            name = raw
            w = self.sym_widths.get(name)
            if w is None:
                self._reply(f'(error "unknown or unvalued symbol {name}")')
                return
            v = self.model.get(name, 0)
            parts.append(f"(|{name}| #b{format(v & ((1 << w) - 1), f'0{w}b')})")
        self._reply("(" + " ".join(parts) + ")")


def serve(backend_factory, instream=None, outstream=None) -> int:
    """Run the command loop until exit or EOF."""
    instream = instream or sys.stdin
    session = Session(backend_factory, out=outstream)
    try:
        for cmd in parse_tokens(tokenize_stream(instream)):
            if not session.handle(cmd):
                break
    except FrontError as exc:
        session._reply(f'(error "{exc}")')
        return 1
    except (BrokenPipeError, KeyboardInterrupt):
        return 1
    return 0
