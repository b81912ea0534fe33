"""Compilation of a FlatDesign into a linear evaluation tape.

The tape is the shared input of the pure-Python and compiled stepper
backends: one three-address instruction per expression node, evaluated in
topological order, with register next-values landing in shadow slots that a
commit phase copies over. Values are (val, xmask) pairs; X propagation
follows the simulator's pessimism rules, identically in both backends.

Opcodes double as the backend contract. All widths are explicit so a
backend may specialize to machine words when every width fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .netlist import Expr, FlatDesign, HnlError, topo_order

__all__ = ["Op", "Tape", "compile_tape"]


class Op:
    CONST = 0
    COPY = 1
    NOT = 2
    AND = 3
    OR = 4
    XOR = 5
    ADD = 6
    SUB = 7
    MUL = 8
    EQ = 9
    NEQ = 10
    ULT = 11
    CONCAT = 12  # aux = width of low part
    EXTRACT = 13  # aux = lo shift
    MUX = 14  # a=cond, b=then, c=else
    READ = 15  # aux = memory index, a = address slot


@dataclass
class TapeMem:
    name: str
    width: int
    depth: int
    addr_slot: int = -1  # write port, -1 when absent
    data_slot: int = -1
    en_slot: int = -1
    init_words: tuple[int, ...] = ()


@dataclass
class Tape:
    slot_of: dict[str, int]
    widths: list[int]
    n_named: int  # slots [0, n_named) are design signals, rest are temps
    input_slots: dict[str, int]
    reg_slots: list[tuple[int, int, int]]  # (reg slot, next-value slot, reset value)
    instrs: list[tuple[int, int, int, int, int, int]]  # (op, dst, a, b, c, aux)
    mems: list[TapeMem]
    mem_index: dict[str, int]
    max_width: int = 0
    consts: list[tuple[int, int]] = field(default_factory=list)  # (dst, value)

    def fits_machine_words(self) -> bool:
        return self.max_width <= 64


def compile_tape(f: FlatDesign) -> Tape:
    names = list(f.inputs)
    names += sorted(n for n in f.regs)
    names += sorted(n for n in f.signals if n not in f.regs and n not in set(f.inputs))
    slot_of = {n: i for i, n in enumerate(names)}
    widths = [f.signals[n] for n in names]

    mem_index = {}
    mems: list[TapeMem] = []
    for mname in sorted(f.mems):
        m = f.mems[mname]
        mem_index[mname] = len(mems)
        mems.append(TapeMem(name=mname, width=m.width, depth=m.depth))

    instrs: list[tuple[int, int, int, int, int, int]] = []
    consts: list[tuple[int, int]] = []

    def alloc(width: int) -> int:
        widths.append(width)
        return len(widths) - 1

    def emit(e: Expr, dst: int | None = None) -> int:
        k = e.kind
        if k == "ref":
            src = slot_of[e.name]
            if dst is None:
                return src
            instrs.append((Op.COPY, dst, src, 0, 0, 0))
            return dst
        if k == "const":
            d = alloc(e.width) if dst is None else dst
            consts.append((d, e.value))
            instrs.append((Op.CONST, d, 0, 0, 0, e.value))
            return d
        if k == "not":
            a = emit(e.a[0])
            d = alloc(widths[a]) if dst is None else dst
            instrs.append((Op.NOT, d, a, 0, 0, 0))
            return d
        if k in ("and", "or", "xor", "add", "sub", "mul", "eq", "neq", "ult", "concat"):
            a = emit(e.a[0])
            b = emit(e.a[1])
            op = {
                "and": Op.AND, "or": Op.OR, "xor": Op.XOR, "add": Op.ADD,
                "sub": Op.SUB, "mul": Op.MUL, "eq": Op.EQ, "neq": Op.NEQ,
                "ult": Op.ULT, "concat": Op.CONCAT,
            }[k]
            if k in ("eq", "neq", "ult"):
                w = 1
            elif k == "concat":
                w = widths[a] + widths[b]
            else:
                w = widths[a]
            d = alloc(w) if dst is None else dst
            aux = widths[b] if k == "concat" else 0
            instrs.append((op, d, a, b, 0, aux))
            return d
        if k == "extract":
            a = emit(e.a[0])
            d = alloc(e.hi - e.lo + 1) if dst is None else dst
            instrs.append((Op.EXTRACT, d, a, 0, 0, e.lo))
            return d
        if k == "mux":
            c = emit(e.a[0])
            x = emit(e.a[1])
            y = emit(e.a[2])
            d = alloc(widths[x]) if dst is None else dst
            instrs.append((Op.MUX, d, c, x, y, 0))
            return d
        if k == "read":
            a = emit(e.a[0])
            mi = mem_index[e.name]
            d = alloc(mems[mi].width) if dst is None else dst
            instrs.append((Op.READ, d, a, 0, 0, mi))
            return d
        raise HnlError(f"cannot compile expression kind {e.kind!r}")

    for name in topo_order(f):
        emit(f.assigns[name], dst=slot_of[name])

    reg_slots = []
    for rname in sorted(f.regs):
        r = f.regs[rname]
        nslot = emit(r.next)
        if nslot == slot_of[rname]:  # plain hold: route through a copy slot
            nslot = alloc(r.width)
            instrs.append((Op.COPY, nslot, slot_of[rname], 0, 0, 0))
        reg_slots.append((slot_of[rname], nslot, r.reset))

    for mname in sorted(f.mems):
        m = f.mems[mname]
        tm = mems[mem_index[mname]]
        if m.write is not None:
            tm.addr_slot = emit(m.write[0])
            tm.data_slot = emit(m.write[1])
            tm.en_slot = emit(m.write[2])

    tape = Tape(
        slot_of=slot_of,
        widths=widths,
        n_named=len(names),
        input_slots={n: slot_of[n] for n in f.inputs},
        reg_slots=reg_slots,
        instrs=instrs,
        mems=mems,
        mem_index=mem_index,
        max_width=max(widths + [m.width for m in mems], default=1),
        consts=consts,
    )
    return tape
