"""Pure-Python tape interpreter.

Reference implementation of the stepper backend contract; the compiled
backend must agree with it bit for bit. Values are (val, xmask) integer
pairs. Commit reads every next-value slot before writing any register so
cross-register moves stay simultaneous.

X rules: bitwise ops work per bit with and/or dominance, arithmetic and
comparisons go all-X when any operand bit is X, concat/extract wire masks
through, mux with an X select is all-X, a memory read at an X address is
all-X, and a write with an X enable or X address (while the enable is not
a known 0) pessimistically poisons the whole memory.
"""

from __future__ import annotations

from ._tape import Op, Tape

__all__ = ["PyStepper"]


class PyStepper:
    name = "pure-python"

    def __init__(self, tape: Tape):
        self.tape = tape
        n = len(tape.widths)
        self.masks = [(1 << w) - 1 for w in tape.widths]
        self.val = [0] * n
        self.xm = [0] * n
        for slot, w in zip(range(n), tape.widths):
            self.xm[slot] = (1 << w) - 1
        self.base_words: list[list[int]] = []
        self.mem_val: list[list[int]] = []
        self.mem_xm: list[list[int]] = []
        for m in tape.mems:
            words = list(m.init_words) + [0] * (m.depth - len(m.init_words))
            self.base_words.append(words)
            self.mem_val.append(list(words))
            self.mem_xm.append([0] * m.depth)

    def reset(self):
        for slot in range(len(self.val)):
            self.val[slot] = 0
            self.xm[slot] = self.masks[slot]
        for rslot, _nslot, rv in self.tape.reg_slots:
            self.val[rslot] = rv
            self.xm[rslot] = 0
        for i in range(len(self.tape.mems)):
            self.mem_val[i] = list(self.base_words[i])
            self.mem_xm[i] = [0] * self.tape.mems[i].depth

    def load_mem(self, index: int, words):
        m = self.tape.mems[index]
        if len(words) > m.depth:
            raise ValueError(f"{m.name}: image longer than depth")
        self.base_words[index] = list(words) + [0] * (m.depth - len(words))
        self.mem_val[index] = list(self.base_words[index])
        self.mem_xm[index] = [0] * m.depth

    def set_input(self, slot: int, value: int, xmask: int = 0):
        mask = self.masks[slot]
        self.val[slot] = value & mask & ~xmask
        self.xm[slot] = xmask & mask

    def read(self, slot: int):
        return self.val[slot], self.xm[slot]

    def eval_comb(self):
        val = self.val
        xm = self.xm
        masks = self.masks
        for op, dst, a, b, c, aux in self.tape.instrs:
            mask = masks[dst]
            if op == Op.CONST:
                val[dst] = aux
                xm[dst] = 0
            elif op == Op.COPY:
                val[dst] = val[a]
                xm[dst] = xm[a]
            elif op == Op.NOT:
                xm[dst] = xm[a]
                val[dst] = ~val[a] & mask & ~xm[a]
            elif op == Op.AND:
                known0 = (~val[a] & ~xm[a]) | (~val[b] & ~xm[b])
                x = (xm[a] | xm[b]) & ~known0 & mask
                xm[dst] = x
                val[dst] = val[a] & val[b] & ~x
            elif op == Op.OR:
                known1 = val[a] | val[b]
                x = (xm[a] | xm[b]) & ~known1 & mask
                xm[dst] = x
                val[dst] = known1 & ~x & mask
            elif op == Op.XOR:
                x = xm[a] | xm[b]
                xm[dst] = x
                val[dst] = (val[a] ^ val[b]) & ~x & mask
            elif op == Op.ADD:
                if xm[a] | xm[b]:
                    xm[dst] = mask
                    val[dst] = 0
                else:
                    xm[dst] = 0
                    val[dst] = (val[a] + val[b]) & mask
            elif op == Op.SUB:
                if xm[a] | xm[b]:
                    xm[dst] = mask
                    val[dst] = 0
                else:
                    xm[dst] = 0
                    val[dst] = (val[a] - val[b]) & mask
            elif op == Op.MUL:
                if xm[a] | xm[b]:
                    xm[dst] = mask
                    val[dst] = 0
                else:
                    xm[dst] = 0
                    val[dst] = (val[a] * val[b]) & mask
            elif op == Op.EQ:
                if xm[a] | xm[b]:
                    xm[dst] = 1
                    val[dst] = 0
                else:
                    xm[dst] = 0
                    val[dst] = 1 if val[a] == val[b] else 0
            elif op == Op.NEQ:
                if xm[a] | xm[b]:
                    xm[dst] = 1
                    val[dst] = 0
                else:
                    xm[dst] = 0
                    val[dst] = 1 if val[a] != val[b] else 0
            elif op == Op.ULT:
                if xm[a] | xm[b]:
                    xm[dst] = 1
                    val[dst] = 0
                else:
                    xm[dst] = 0
                    val[dst] = 1 if val[a] < val[b] else 0
            elif op == Op.CONCAT:
                val[dst] = (val[a] << aux) | val[b]
                xm[dst] = (xm[a] << aux) | xm[b]
            elif op == Op.EXTRACT:
                val[dst] = (val[a] >> aux) & mask
                xm[dst] = (xm[a] >> aux) & mask
            elif op == Op.MUX:
                if xm[a]:
                    xm[dst] = mask
                    val[dst] = 0
                elif val[a]:
                    val[dst] = val[b]
                    xm[dst] = xm[b]
                else:
                    val[dst] = val[c]
                    xm[dst] = xm[c]
            elif op == Op.READ:
                if xm[a]:
                    xm[dst] = mask
                    val[dst] = 0
                else:
                    val[dst] = self.mem_val[aux][val[a]]
                    xm[dst] = self.mem_xm[aux][val[a]]
            else:
                raise AssertionError(f"bad opcode {op}")

    def commit(self):
        staged = [(rslot, self.val[nslot], self.xm[nslot]) for rslot, nslot, _ in self.tape.reg_slots]
        for rslot, v, x in staged:
            self.val[rslot] = v
            self.xm[rslot] = x
        for i, m in enumerate(self.tape.mems):
            if m.en_slot < 0:
                continue
            en_v, en_x = self.val[m.en_slot], self.xm[m.en_slot]
            if en_x == 0 and en_v == 0:
                continue
            addr_v, addr_x = self.val[m.addr_slot], self.xm[m.addr_slot]
            if en_x or addr_x:
                full = (1 << m.width) - 1
                self.mem_val[i] = [0] * m.depth
                self.mem_xm[i] = [full] * m.depth
            else:
                self.mem_val[i][addr_v] = self.val[m.data_slot]
                self.mem_xm[i][addr_v] = self.xm[m.data_slot]

    def snapshot(self):
        regs = tuple((self.val[r], self.xm[r]) for r, _, _ in self.tape.reg_slots)
        mems = tuple((tuple(v), tuple(x)) for v, x in zip(self.mem_val, self.mem_xm))
        return regs, mems

    def restore(self, state):
        regs, mems = state
        for (rslot, _, _), (v, x) in zip(self.tape.reg_slots, regs):
            self.val[rslot] = v
            self.xm[rslot] = x
        for i, (v, x) in enumerate(mems):
            self.mem_val[i] = list(v)
            self.mem_xm[i] = list(x)
