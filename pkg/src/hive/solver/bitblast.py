"""Tseitin bit-blasting of bitvector terms to CNF.

Every term bit becomes a SAT literal. Gates are memoized so shared
subterms cost one encoding, and constant literals fold before any clause
is emitted. Arithmetic uses ripple-carry adders, subtraction goes through
two's complement, unsigned comparison is a borrow chain, and
multiplication is the shift-and-add expansion, which keeps constant
operands cheap because zero partial products vanish.

Literals follow the DIMACS convention: positive/negative ints, variable
numbers from 1. Variable 1 is reserved and forced true so constants are
plain literals too.
"""

from __future__ import annotations

from ..smt import Term

__all__ = ["Blaster"]


class Blaster:
    def __init__(self, solver):
        self.solver = solver
        self.cache: dict[int, list[int]] = {}
        self.sym_bits: dict[str, list[int]] = {}
        self._and_cache: dict[tuple[int, int], int] = {}
        self._xor_cache: dict[tuple[int, int], int] = {}
        self._ite_cache: dict[tuple[int, int, int], int] = {}
        self.TRUE = solver.new_var()
        solver.add_clause([self.TRUE])
        self.FALSE = -self.TRUE

    # -- gates ---------------------------------------------------------------

    def and2(self, a: int, b: int) -> int:
        if a == self.FALSE or b == self.FALSE or a == -b:
            return self.FALSE
        if a == self.TRUE:
            return b
        if b == self.TRUE or a == b:
            return a
        key = (a, b) if a < b else (b, a)
        z = self._and_cache.get(key)
        if z is None:
            z = self.solver.new_var()
            self.solver.add_clause([-z, a])
            self.solver.add_clause([-z, b])
            self.solver.add_clause([z, -a, -b])
            self._and_cache[key] = z
        return z

    def or2(self, a: int, b: int) -> int:
        return -self.and2(-a, -b)

    def xor2(self, a: int, b: int) -> int:
        if a == self.TRUE:
            return -b
        if a == self.FALSE:
            return b
        if b == self.TRUE:
            return -a
        if b == self.FALSE:
            return a
        if a == b:
            return self.FALSE
        if a == -b:
            return self.TRUE
        ka, kb = abs(a), abs(b)
        flip = (a < 0) != (b < 0)
        key = (ka, kb) if ka < kb else (kb, ka)
        z = self._xor_cache.get(key)
        if z is None:
            z = self.solver.new_var()
            x, y = key
            self.solver.add_clause([-x, -y, -z])
            self.solver.add_clause([x, y, -z])
            self.solver.add_clause([x, -y, z])
            self.solver.add_clause([-x, y, z])
            self._xor_cache[key] = z
        return -z if flip else z

    def ite(self, c: int, t: int, e: int) -> int:
        if c == self.TRUE:
            return t
        if c == self.FALSE:
            return e
        if t == e:
            return t
        if t == self.TRUE and e == self.FALSE:
            return c
        if t == self.FALSE and e == self.TRUE:
            return -c
        if t == e == self.TRUE:
            return self.TRUE
        key = (c, t, e)
        z = self._ite_cache.get(key)
        if z is None:
            z = self.solver.new_var()
            self.solver.add_clause([-c, -t, z])
            self.solver.add_clause([-c, t, -z])
            self.solver.add_clause([c, -e, z])
            self.solver.add_clause([c, e, -z])
            self._ite_cache[key] = z
        return z

    def maj(self, a: int, b: int, c: int) -> int:
        return self.or2(self.and2(a, b), self.and2(c, self.or2(a, b)))

    # -- word level ------------------------------------------------------------

    def _const_bits(self, value: int, width: int) -> list[int]:
        return [self.TRUE if (value >> i) & 1 else self.FALSE for i in range(width)]

    def _add(self, a: list[int], b: list[int], carry: int) -> list[int]:
        out = []
        for x, y in zip(a, b):
            s = self.xor2(self.xor2(x, y), carry)
            carry = self.maj(x, y, carry)
            out.append(s)
        return out

    def _ult(self, a: list[int], b: list[int]) -> int:
        borrow = self.FALSE
        for x, y in zip(a, b):
            nb = self.or2(self.and2(-x, y), self.and2(self.xor2(-x, y), borrow))
            borrow = nb
        return borrow

    def _mul(self, a: list[int], b: list[int]) -> list[int]:
        w = len(a)
        acc = self._const_bits(0, w)
        for j, bj in enumerate(b):
            if bj == self.FALSE:
                continue
            pp = [self.FALSE] * j + [self.and2(x, bj) for x in a[: w - j]]
            acc = self._add(acc, pp, self.FALSE)
        return acc

    def _eq(self, a: list[int], b: list[int]) -> int:
        out = self.TRUE
        for x, y in zip(a, b):
            out = self.and2(out, -self.xor2(x, y))
        return out

    # -- term walk -------------------------------------------------------------

    def bits(self, t: Term) -> list[int]:
        hit = self.cache.get(t.tid)
        if hit is not None:
            return hit
        # iterative postorder so arbitrarily deep term chains cannot
        # exhaust the interpreter stack
        stack = [t]
        while stack:
            cur = stack[-1]
            if cur.tid in self.cache:
                stack.pop()
                continue
            pending = [a for a in cur.args if a.tid not in self.cache]
            if pending:
                stack.extend(pending)
                continue
            stack.pop()
            out = self._blast(cur)
            if len(out) != cur.width:
                raise AssertionError(f"width skew blasting {cur!r}")
            self.cache[cur.tid] = out
        return self.cache[t.tid]

    def _blast(self, t: Term) -> list[int]:
        op = t.op
        if op == "const":
            return self._const_bits(t.info, t.width)
        if op == "sym":
            bs = self.sym_bits.get(t.info)
            if bs is None:
                bs = [self.solver.new_var() for _ in range(t.width)]
                self.sym_bits[t.info] = bs
            return bs
        if op == "not":
            return [-x for x in self.bits(t.args[0])]
        if op in ("and", "or", "xor"):
            a, b = (self.bits(x) for x in t.args)
            g = {"and": self.and2, "or": self.or2, "xor": self.xor2}[op]
            return [g(x, y) for x, y in zip(a, b)]
        if op == "add":
            a, b = (self.bits(x) for x in t.args)
            return self._add(a, b, self.FALSE)
        if op == "sub":
            a, b = (self.bits(x) for x in t.args)
            return self._add(a, [-y for y in b], self.TRUE)
        if op == "mul":
            a, b = (self.bits(x) for x in t.args)
            return self._mul(a, b)
        if op == "eq":
            a, b = (self.bits(x) for x in t.args)
            return [self._eq(a, b)]
        if op == "ult":
            a, b = (self.bits(x) for x in t.args)
            return [self._ult(a, b)]
        if op == "concat":
            hi, lo = t.args
            return self.bits(lo) + self.bits(hi)
        if op == "extract":
            hi, lo = t.info
            return self.bits(t.args[0])[lo : hi + 1]
        if op == "mux":
            c = self.bits(t.args[0])[0]
            a, b = self.bits(t.args[1]), self.bits(t.args[2])
            return [self.ite(c, x, y) for x, y in zip(a, b)]
        raise ValueError(f"cannot blast operator {op!r}")

    def assert_true(self, t: Term) -> None:
        if t.width != 1:
            raise ValueError("asserted term must be 1 bit wide")
        self.solver.add_clause([self.bits(t)[0]])

    def model_value(self, name: str, width: int, model) -> int:
        bs = self.sym_bits.get(name)
        if bs is None:
            return 0
        v = 0
        for i, lit in enumerate(bs):
            var = abs(lit)
            bit = model[var]
            if lit < 0:
                bit = not bit
            if bit:
                v |= 1 << i
        return v & ((1 << width) - 1)
