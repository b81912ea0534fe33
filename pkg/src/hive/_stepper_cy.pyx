# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tape interpreter specialized to 64-bit machine words.

Drop-in twin of the pure-Python stepper: same constructor, same methods,
same (val, xmask) semantics, selected by `make_stepper` only when every
width on the tape fits a machine word. The hot loop runs over flat C
arrays; snapshot/restore round-trip through the same Python tuples the
pure backend produces so the two are interchangeable mid-run.
"""

from libc.stdint cimport int32_t, uint64_t
from libc.stdlib cimport calloc, free
from libc.string cimport memcpy

__all__ = ["CyStepper"]


cdef enum:
    OP_CONST = 0
    OP_COPY = 1
    OP_NOT = 2
    OP_AND = 3
    OP_OR = 4
    OP_XOR = 5
    OP_ADD = 6
    OP_SUB = 7
    OP_MUL = 8
    OP_EQ = 9
    OP_NEQ = 10
    OP_ULT = 11
    OP_CONCAT = 12
    OP_EXTRACT = 13
    OP_MUX = 14
    OP_READ = 15


cdef inline uint64_t _width_mask(int w) noexcept nogil:
    # w == 64 would shift out of range; widen through the all-ones word
    if w >= 64:
        return <uint64_t>0xFFFFFFFFFFFFFFFFULL
    return ((<uint64_t>1) << w) - 1


cdef class CyStepper:
    name = "compiled"

    cdef readonly object tape
    cdef Py_ssize_t n_slots, n_instrs, n_regs, n_mems
    cdef uint64_t* masks
    cdef uint64_t* val
    cdef uint64_t* xm
    cdef int32_t* code        # op, dst, a, b, c per instruction
    cdef uint64_t* aux        # CONST value / concat shift / extract lo / mem index
    cdef int32_t* reg_r
    cdef int32_t* reg_n
    cdef uint64_t* reg_reset
    cdef uint64_t* stage_v
    cdef uint64_t* stage_x
    cdef int32_t* m_depth
    cdef uint64_t* m_full
    cdef int32_t* m_addr
    cdef int32_t* m_data
    cdef int32_t* m_en
    cdef uint64_t** mem_v
    cdef uint64_t** mem_x
    cdef uint64_t** mem_base

    def __cinit__(self, tape):
        self.tape = tape
        cdef Py_ssize_t n = len(tape.widths)
        cdef Py_ssize_t ni = len(tape.instrs)
        cdef Py_ssize_t nr = len(tape.reg_slots)
        cdef Py_ssize_t nm = len(tape.mems)
        self.n_slots = n
        self.n_instrs = ni
        self.n_regs = nr
        self.n_mems = nm

        self.masks = <uint64_t*>calloc(max(n, 1), sizeof(uint64_t))
        self.val = <uint64_t*>calloc(max(n, 1), sizeof(uint64_t))
        self.xm = <uint64_t*>calloc(max(n, 1), sizeof(uint64_t))
        self.code = <int32_t*>calloc(max(ni * 5, 1), sizeof(int32_t))
        self.aux = <uint64_t*>calloc(max(ni, 1), sizeof(uint64_t))
        self.reg_r = <int32_t*>calloc(max(nr, 1), sizeof(int32_t))
        self.reg_n = <int32_t*>calloc(max(nr, 1), sizeof(int32_t))
        self.reg_reset = <uint64_t*>calloc(max(nr, 1), sizeof(uint64_t))
        self.stage_v = <uint64_t*>calloc(max(nr, 1), sizeof(uint64_t))
        self.stage_x = <uint64_t*>calloc(max(nr, 1), sizeof(uint64_t))
        self.m_depth = <int32_t*>calloc(max(nm, 1), sizeof(int32_t))
        self.m_full = <uint64_t*>calloc(max(nm, 1), sizeof(uint64_t))
        self.m_addr = <int32_t*>calloc(max(nm, 1), sizeof(int32_t))
        self.m_data = <int32_t*>calloc(max(nm, 1), sizeof(int32_t))
        self.m_en = <int32_t*>calloc(max(nm, 1), sizeof(int32_t))
        self.mem_v = <uint64_t**>calloc(max(nm, 1), sizeof(uint64_t*))
        self.mem_x = <uint64_t**>calloc(max(nm, 1), sizeof(uint64_t*))
        self.mem_base = <uint64_t**>calloc(max(nm, 1), sizeof(uint64_t*))
        if (self.masks is NULL or self.val is NULL or self.xm is NULL
                or self.code is NULL or self.aux is NULL
                or self.reg_r is NULL or self.reg_n is NULL
                or self.reg_reset is NULL or self.stage_v is NULL
                or self.stage_x is NULL or self.m_depth is NULL
                or self.m_full is NULL or self.m_addr is NULL
                or self.m_data is NULL or self.m_en is NULL
                or self.mem_v is NULL or self.mem_x is NULL
                or self.mem_base is NULL):
            raise MemoryError()

        cdef Py_ssize_t i
        cdef int w
        for i in range(n):
            w = tape.widths[i]
            if w > 64:
                raise ValueError(f"slot width {w} exceeds machine words")
            self.masks[i] = _width_mask(w)
            self.xm[i] = self.masks[i]

        cdef Py_ssize_t k = 0
        for instr in tape.instrs:
            self.code[k] = instr[0]
            self.code[k + 1] = instr[1]
            self.code[k + 2] = instr[2]
            self.code[k + 3] = instr[3]
            self.code[k + 4] = instr[4]
            self.aux[k // 5] = <uint64_t>instr[5]
            k += 5

        for i in range(nr):
            rslot, nslot, rv = tape.reg_slots[i]
            self.reg_r[i] = rslot
            self.reg_n[i] = nslot
            self.reg_reset[i] = <uint64_t>rv

        cdef Py_ssize_t d, j
        for i in range(nm):
            m = tape.mems[i]
            if m.width > 64:
                raise ValueError(f"{m.name}: memory width {m.width} exceeds machine words")
            d = m.depth
            self.m_depth[i] = <int32_t>d
            self.m_full[i] = _width_mask(m.width)
            self.m_addr[i] = m.addr_slot
            self.m_data[i] = m.data_slot
            self.m_en[i] = m.en_slot
            self.mem_v[i] = <uint64_t*>calloc(d, sizeof(uint64_t))
            self.mem_x[i] = <uint64_t*>calloc(d, sizeof(uint64_t))
            self.mem_base[i] = <uint64_t*>calloc(d, sizeof(uint64_t))
            if self.mem_v[i] is NULL or self.mem_x[i] is NULL or self.mem_base[i] is NULL:
                raise MemoryError()
            for j, word in enumerate(m.init_words):
                self.mem_base[i][j] = <uint64_t>word
            memcpy(self.mem_v[i], self.mem_base[i], d * sizeof(uint64_t))

    def __dealloc__(self):
        cdef Py_ssize_t i
        if self.mem_v is not NULL:
            for i in range(self.n_mems):
                free(self.mem_v[i])
        if self.mem_x is not NULL:
            for i in range(self.n_mems):
                free(self.mem_x[i])
        if self.mem_base is not NULL:
            for i in range(self.n_mems):
                free(self.mem_base[i])
        free(self.mem_v)
        free(self.mem_x)
        free(self.mem_base)
        free(self.masks)
        free(self.val)
        free(self.xm)
        free(self.code)
        free(self.aux)
        free(self.reg_r)
        free(self.reg_n)
        free(self.reg_reset)
        free(self.stage_v)
        free(self.stage_x)
        free(self.m_depth)
        free(self.m_full)
        free(self.m_addr)
        free(self.m_data)
        free(self.m_en)

    def reset(self):
        cdef Py_ssize_t i, j
        for i in range(self.n_slots):
            self.val[i] = 0
            self.xm[i] = self.masks[i]
        for i in range(self.n_regs):
            self.val[self.reg_r[i]] = self.reg_reset[i]
            self.xm[self.reg_r[i]] = 0
        for i in range(self.n_mems):
            memcpy(self.mem_v[i], self.mem_base[i], self.m_depth[i] * sizeof(uint64_t))
            for j in range(self.m_depth[i]):
                self.mem_x[i][j] = 0

    def load_mem(self, index, words):
        cdef Py_ssize_t i = index
        m = self.tape.mems[i]
        if len(words) > m.depth:
            raise ValueError(f"{m.name}: image longer than depth")
        cdef Py_ssize_t j
        cdef Py_ssize_t d = self.m_depth[i]
        for j in range(d):
            self.mem_base[i][j] = 0
        for j, word in enumerate(words):
            self.mem_base[i][j] = <uint64_t>word
        memcpy(self.mem_v[i], self.mem_base[i], d * sizeof(uint64_t))
        for j in range(d):
            self.mem_x[i][j] = 0

    def set_input(self, slot, value, xmask=0):
        cdef Py_ssize_t s = slot
        wide = (1 << self.tape.widths[s]) - 1  # Python-int mask tolerates oversized values
        self.val[s] = <uint64_t>(value & wide & ~xmask)
        self.xm[s] = <uint64_t>(xmask & wide)

    def read(self, slot):
        cdef Py_ssize_t s = slot
        return self.val[s], self.xm[s]

    def eval_comb(self):
        cdef uint64_t* val = self.val
        cdef uint64_t* xm = self.xm
        cdef uint64_t* masks = self.masks
        cdef int32_t* code = self.code
        cdef uint64_t* auxv = self.aux
        cdef Py_ssize_t i, k
        cdef int op, dst, a, b, c
        cdef uint64_t aux, mask, known0, known1, x, addr
        with nogil:
            k = 0
            for i in range(self.n_instrs):
                op = code[k]
                dst = code[k + 1]
                a = code[k + 2]
                b = code[k + 3]
                c = code[k + 4]
                aux = auxv[i]
                k += 5
                mask = masks[dst]
                if op == OP_CONST:
                    val[dst] = aux
                    xm[dst] = 0
                elif op == OP_COPY:
                    val[dst] = val[a]
                    xm[dst] = xm[a]
                elif op == OP_NOT:
                    xm[dst] = xm[a]
                    val[dst] = ~val[a] & mask & ~xm[a]
                elif op == OP_AND:
                    known0 = (~val[a] & ~xm[a]) | (~val[b] & ~xm[b])
                    x = (xm[a] | xm[b]) & ~known0 & mask
                    xm[dst] = x
                    val[dst] = val[a] & val[b] & ~x
                elif op == OP_OR:
                    known1 = val[a] | val[b]
                    x = (xm[a] | xm[b]) & ~known1 & mask
                    xm[dst] = x
                    val[dst] = known1 & ~x & mask
                elif op == OP_XOR:
                    x = xm[a] | xm[b]
                    xm[dst] = x
                    val[dst] = (val[a] ^ val[b]) & ~x & mask
                elif op == OP_ADD:
                    if xm[a] | xm[b]:
                        xm[dst] = mask
                        val[dst] = 0
                    else:
                        xm[dst] = 0
                        val[dst] = (val[a] + val[b]) & mask
                elif op == OP_SUB:
                    if xm[a] | xm[b]:
                        xm[dst] = mask
                        val[dst] = 0
                    else:
                        xm[dst] = 0
                        val[dst] = (val[a] - val[b]) & mask
                elif op == OP_MUL:
                    if xm[a] | xm[b]:
                        xm[dst] = mask
                        val[dst] = 0
                    else:
                        xm[dst] = 0
                        val[dst] = (val[a] * val[b]) & mask
                elif op == OP_EQ:
                    if xm[a] | xm[b]:
                        xm[dst] = 1
                        val[dst] = 0
                    else:
                        xm[dst] = 0
                        val[dst] = 1 if val[a] == val[b] else 0
                elif op == OP_NEQ:
                    if xm[a] | xm[b]:
                        xm[dst] = 1
                        val[dst] = 0
                    else:
                        xm[dst] = 0
                        val[dst] = 1 if val[a] != val[b] else 0
                elif op == OP_ULT:
                    if xm[a] | xm[b]:
                        xm[dst] = 1
                        val[dst] = 0
                    else:
                        xm[dst] = 0
                        val[dst] = 1 if val[a] < val[b] else 0
                elif op == OP_CONCAT:
                    val[dst] = (val[a] << aux) | val[b]
                    xm[dst] = (xm[a] << aux) | xm[b]
                elif op == OP_EXTRACT:
                    val[dst] = (val[a] >> aux) & mask
                    xm[dst] = (xm[a] >> aux) & mask
                elif op == OP_MUX:
                    if xm[a]:
                        xm[dst] = mask
                        val[dst] = 0
                    elif val[a]:
                        val[dst] = val[b]
                        xm[dst] = xm[b]
                    else:
                        val[dst] = val[c]
                        xm[dst] = xm[c]
                else:  # OP_READ
                    if xm[a]:
                        xm[dst] = mask
                        val[dst] = 0
                    else:
                        addr = val[a]
                        val[dst] = self.mem_v[aux][addr]
                        xm[dst] = self.mem_x[aux][addr]

    def commit(self):
        cdef Py_ssize_t i, j
        cdef int32_t en_slot
        cdef uint64_t en_v, en_x, addr_v, addr_x, full
        for i in range(self.n_regs):
            self.stage_v[i] = self.val[self.reg_n[i]]
            self.stage_x[i] = self.xm[self.reg_n[i]]
        for i in range(self.n_regs):
            self.val[self.reg_r[i]] = self.stage_v[i]
            self.xm[self.reg_r[i]] = self.stage_x[i]
        for i in range(self.n_mems):
            en_slot = self.m_en[i]
            if en_slot < 0:
                continue
            en_v = self.val[en_slot]
            en_x = self.xm[en_slot]
            if en_x == 0 and en_v == 0:
                continue
            addr_v = self.val[self.m_addr[i]]
            addr_x = self.xm[self.m_addr[i]]
            if en_x or addr_x:
                full = self.m_full[i]
                for j in range(self.m_depth[i]):
                    self.mem_v[i][j] = 0
                    self.mem_x[i][j] = full
            else:
                self.mem_v[i][addr_v] = self.val[self.m_data[i]]
                self.mem_x[i][addr_v] = self.xm[self.m_data[i]]

    def snapshot(self):
        cdef Py_ssize_t i, j
        regs = tuple(
            (self.val[self.reg_r[i]], self.xm[self.reg_r[i]])
            for i in range(self.n_regs)
        )
        mems = []
        for i in range(self.n_mems):
            vs = tuple(self.mem_v[i][j] for j in range(self.m_depth[i]))
            xs = tuple(self.mem_x[i][j] for j in range(self.m_depth[i]))
            mems.append((vs, xs))
        return regs, tuple(mems)

    def restore(self, state):
        regs, mems = state
        cdef Py_ssize_t i, j
        for i in range(self.n_regs):
            v, x = regs[i]
            self.val[self.reg_r[i]] = <uint64_t>v
            self.xm[self.reg_r[i]] = <uint64_t>x
        for i in range(self.n_mems):
            vs, xs = mems[i]
            for j in range(self.m_depth[i]):
                self.mem_v[i][j] = <uint64_t>(vs[j])
                self.mem_x[i][j] = <uint64_t>(xs[j])
