"""Reduced ordered BDD decision core.

The second, independently constructed engine. Terms are translated bit
by bit into ROBDDs over the input variables in declaration order; the
assertion conjunction is satisfiable exactly when its diagram is not the
zero terminal, and a model falls out of any path to the one terminal.

The bit-level constructions intentionally differ from the CDCL engine's
Tseitin encodings: subtraction is a direct borrow-chain full subtractor,
unsigned comparison walks most-significant-bit first, and multiplication
accumulates partial products from the top down. Disagreement between the
engines on the same script therefore flags an encoding bug in one of
them, not just a search bug.
"""

from __future__ import annotations

from ..smt import Term

__all__ = ["Bdd", "BddBackend"]


class Bdd:
    """Node store: id 0 is false, 1 is true; nodes are (var, lo, hi)."""

    def __init__(self):
        self.nodes: list[tuple[int, int, int]] = [(-1, 0, 0), (-1, 1, 1)]
        self.unique: dict[tuple[int, int, int], int] = {}
        self.ite_cache: dict[tuple[int, int, int], int] = {}
        self.nvars = 0

    def var(self) -> int:
        self.nvars += 1
        return self._node(self.nvars - 1, 0, 1)

    def _node(self, v: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        key = (v, lo, hi)
        hit = self.unique.get(key)
        if hit is None:
            hit = len(self.nodes)
            self.nodes.append(key)
            self.unique[key] = hit
        return hit

    def _top(self, f: int) -> int:
        v = self.nodes[f][0]
        return v if v >= 0 else 1 << 60

    def ite(self, f: int, g: int, h: int) -> int:
        if f == 1:
            return g
        if f == 0:
            return h
        if g == h:
            return g
        if g == 1 and h == 0:
            return f
        key = (f, g, h)
        hit = self.ite_cache.get(key)
        if hit is not None:
            return hit
        v = min(self._top(f), self._top(g), self._top(h))

        def co(x: int, neg: bool) -> int:
            node = self.nodes[x]
            if node[0] == v:
                return node[2] if not neg else node[1]
            return x

        lo = self.ite(co(f, True), co(g, True), co(h, True))
        hi = self.ite(co(f, False), co(g, False), co(h, False))
        out = self._node(v, lo, hi)
        self.ite_cache[key] = out
        return out

    def not_(self, f: int) -> int:
        return self.ite(f, 0, 1)

    def and_(self, f: int, g: int) -> int:
        return self.ite(f, g, 0)

    def or_(self, f: int, g: int) -> int:
        return self.ite(f, 1, g)

    def xor_(self, f: int, g: int) -> int:
        return self.ite(f, self.ite(g, 0, 1), g)

    def any_path(self, f: int) -> dict[int, int] | None:
        """var index -> bit along one satisfying path, None when f is 0."""
        if f == 0:
            return None
        out: dict[int, int] = {}
        cur = f
        while cur != 1:
            v, lo, hi = self.nodes[cur]
            if hi != 0:
                out[v] = 1
                cur = hi
            else:
                out[v] = 0
                cur = lo
        return out


class BddBackend:
    """Engine adapter: blast a goal term over a Bdd and decide it."""

    name = "bdd"

    def __init__(self, node_budget: int = 2_000_000):
        self.node_budget = node_budget

    def check(self, tb, goal: Term):
        bdd = Bdd()
        sym_bits: dict[str, list[int]] = {}
        cache: dict[int, list[int]] = {}

        def bits(t: Term) -> list[int]:
            hit = cache.get(t.tid)
            if hit is not None:
                return hit
            stack = [t]
            while stack:
                cur = stack[-1]
                if cur.tid in cache:
                    stack.pop()
                    continue
                pending = [a for a in cur.args if a.tid not in cache]
                if pending:
                    stack.extend(pending)
                    continue
                stack.pop()
                cache[cur.tid] = blast(cur)
                if len(bdd.nodes) > self.node_budget:
                    raise _Blowup()
            return cache[t.tid]

        def full_add(a, b, carry):
            out = []
            for x, y in zip(a, b):
                s = bdd.xor_(bdd.xor_(x, y), carry)
                carry = bdd.or_(bdd.and_(x, y), bdd.and_(carry, bdd.xor_(x, y)))
                out.append(s)
            return out

        def blast(t: Term) -> list[int]:
            op = t.op
            if op == "const":
                return [1 if (t.info >> i) & 1 else 0 for i in range(t.width)]
            if op == "sym":
                bs = sym_bits.get(t.info)
                if bs is None:
                    bs = [bdd.var() for _ in range(t.width)]
                    sym_bits[t.info] = bs
                return bs
            if op == "not":
                return [bdd.not_(x) for x in bits(t.args[0])]
            if op in ("and", "or", "xor"):
                a, b = bits(t.args[0]), bits(t.args[1])
                g = {"and": bdd.and_, "or": bdd.or_, "xor": bdd.xor_}[op]
                return [g(x, y) for x, y in zip(a, b)]
            if op == "add":
                return full_add(bits(t.args[0]), bits(t.args[1]), 0)
            if op == "sub":
                # direct borrow-propagating subtractor
                a, b = bits(t.args[0]), bits(t.args[1])
                borrow = 0
                out = []
                for x, y in zip(a, b):
                    d = bdd.xor_(bdd.xor_(x, y), borrow)
                    nx = bdd.not_(x)
                    borrow = bdd.or_(
                        bdd.and_(nx, y), bdd.and_(borrow, bdd.or_(nx, y))
                    )
                    out.append(d)
                return out
            if op == "mul":
                # partial products accumulated from the most significant end
                a, b = bits(t.args[0]), bits(t.args[1])
                w = t.width
                acc = [0] * w
                for j in reversed(range(w)):
                    if b[j] == 0:
                        continue
                    pp = [0] * j + [bdd.and_(x, b[j]) for x in a[: w - j]]
                    acc = full_add(acc, pp, 0)
                return acc
            if op == "eq":
                a, b = bits(t.args[0]), bits(t.args[1])
                out = 1
                for x, y in zip(a, b):
                    out = bdd.and_(out, bdd.not_(bdd.xor_(x, y)))
                return [out]
            if op == "ult":
                # most-significant-first lexicographic compare
                a, b = bits(t.args[0]), bits(t.args[1])
                lt = 0
                eq_so_far = 1
                for x, y in zip(reversed(a), reversed(b)):
                    bit_lt = bdd.and_(bdd.not_(x), y)
                    lt = bdd.or_(lt, bdd.and_(eq_so_far, bit_lt))
                    eq_so_far = bdd.and_(eq_so_far, bdd.not_(bdd.xor_(x, y)))
                return [lt]
            if op == "concat":
                hi, lo = t.args
                return bits(lo) + bits(hi)
            if op == "extract":
                hi, lo = t.info
                return bits(t.args[0])[lo : hi + 1]
            if op == "mux":
                c = bits(t.args[0])[0]
                a, b = bits(t.args[1]), bits(t.args[2])
                return [bdd.ite(c, x, y) for x, y in zip(a, b)]
            raise ValueError(f"cannot blast operator {op!r}")

        try:
            root = bits(goal)[0]
        except _Blowup:
            return "unknown", None
        except RecursionError:
            return "unknown", None
        path = bdd.any_path(root)
        if path is None:
            return "unsat", None
        model: dict[str, int] = {}
        for name, bs in sym_bits.items():
            v = 0
            for i, node in enumerate(bs):
                var_idx = bdd.nodes[node][0]
                if path.get(var_idx, 0):
                    v |= 1 << i
            model[name] = v
        return "sat", model


class _Blowup(Exception):
    pass
