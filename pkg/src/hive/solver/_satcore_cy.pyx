# cython: language_level=3, boundscheck=False, wraparound=False
# distutils: language = c++
"""Compiled conflict-driven clause learning core.

Same algorithm as the pure-Python solver: two watched literals, first
unique implication point learning, decayed activity with a lazy max-heap,
saved phases, Luby restarts. Clauses live in C++ vectors and literals stay
signed ints; watch lists are indexed by (var << 1) | sign. Verdicts match
the pure core on every formula; decision order matches too, so the two
cores are interchangeable beyond speed.
"""

from libcpp.vector cimport vector
from libcpp.utility cimport pair
from libcpp.queue cimport priority_queue

__all__ = ["SatSolver"]

cdef int UNSET = -1

ctypedef pair[double, int] HeapItem


cdef inline int widx(int lit) noexcept nogil:
    # watch-list index for a signed literal
    if lit < 0:
        return ((-lit) << 1) | 1
    return lit << 1


cdef class SatSolver:
    name = "compiled"

    cdef readonly int nvars
    cdef readonly long long conflicts
    cdef readonly long long decisions
    cdef readonly long long propagations
    cdef vector[vector[int]] clauses
    cdef vector[vector[int]] watches   # indexed by widx(lit)
    cdef vector[int] assign_           # UNSET / 0 / 1, indexed by var
    cdef vector[int] level
    cdef vector[int] reason
    cdef vector[int] saved
    cdef vector[double] activity
    cdef vector[int] trail
    cdef vector[int] trail_lim
    cdef int qhead
    cdef double var_inc
    cdef priority_queue[HeapItem] heap  # (activity, -var): max activity, then min var
    cdef public bint ok

    def __cinit__(self):
        self.nvars = 0
        self.assign_.push_back(UNSET)
        self.level.push_back(0)
        self.reason.push_back(-1)
        self.saved.push_back(0)
        self.activity.push_back(0.0)
        self.watches.push_back(vector[int]())
        self.watches.push_back(vector[int]())
        self.qhead = 0
        self.var_inc = 1.0
        self.ok = True
        self.conflicts = 0
        self.decisions = 0
        self.propagations = 0

    # -- variables and clauses ----------------------------------------------

    def new_var(self):
        self.nvars += 1
        self.assign_.push_back(UNSET)
        self.level.push_back(0)
        self.reason.push_back(-1)
        self.saved.push_back(0)
        self.activity.push_back(0.0)
        self.watches.push_back(vector[int]())
        self.watches.push_back(vector[int]())
        self.heap.push(HeapItem(0.0, -self.nvars))
        return self.nvars

    cdef inline int _value(self, int lit) noexcept nogil:
        cdef int v = lit if lit > 0 else -lit
        cdef int a = self.assign_[v]
        if a == UNSET:
            return UNSET
        return a ^ 1 if lit < 0 else a

    def add_clause(self, lits):
        if not self.ok:
            return False
        cdef vector[int] out
        cdef int l, v
        seen = set()
        for lo in lits:
            l = lo
            if -l in seen:
                return True  # tautology
            if l in seen:
                continue
            v = self._value(l)
            if v == 1:
                return True
            if v == 0 and self.level[l if l > 0 else -l] == 0:
                continue
            seen.add(l)
            out.push_back(l)
        if out.size() == 0:
            self.ok = False
            return False
        if out.size() == 1:
            self._enqueue(out[0], -1)
            self.ok = self._propagate() == -1
            return self.ok
        cdef int cid = <int>self.clauses.size()
        self.clauses.push_back(out)
        self.watches[widx(out[0])].push_back(cid)
        self.watches[widx(out[1])].push_back(cid)
        return True

    # -- trail ----------------------------------------------------------------

    cdef void _enqueue(self, int lit, int reason_cid) noexcept nogil:
        cdef int v = lit if lit > 0 else -lit
        self.assign_[v] = 1 if lit > 0 else 0
        self.level[v] = <int>self.trail_lim.size()
        self.reason[v] = reason_cid
        self.trail.push_back(lit)

    cdef int _propagate(self) noexcept nogil:
        # exhaust unit propagation; returns conflicting clause id or -1
        cdef int p, falsified, cid, first, moved
        cdef size_t i, j, n, k
        cdef vector[int]* wl
        cdef vector[int]* c
        while self.qhead < <int>self.trail.size():
            p = self.trail[self.qhead]
            self.qhead += 1
            self.propagations += 1
            falsified = -p
            wl = &self.watches[widx(falsified)]
            i = 0
            j = 0
            n = wl[0].size()
            while i < n:
                cid = wl[0][i]
                i += 1
                c = &self.clauses[cid]
                if c[0][0] == falsified:
                    c[0][0] = c[0][1]
                    c[0][1] = falsified
                first = c[0][0]
                if self._value(first) == 1:
                    wl[0][j] = cid
                    j += 1
                    continue
                moved = 0
                for k in range(2, c[0].size()):
                    if self._value(c[0][k]) != 0:
                        c[0][1], c[0][k] = c[0][k], c[0][1]
                        self.watches[widx(c[0][1])].push_back(cid)
                        moved = 1
                        break
                if moved:
                    continue
                wl[0][j] = cid
                j += 1
                if self._value(first) == 0:
                    while i < n:
                        wl[0][j] = wl[0][i]
                        j += 1
                        i += 1
                    wl[0].resize(j)
                    return cid
                self._enqueue(first, cid)
            wl[0].resize(j)
        return -1

    cdef void _cancel_until(self, int lvl):
        if <int>self.trail_lim.size() <= lvl:
            return
        cdef int limit = self.trail_lim[lvl]
        cdef int t, lit, v
        for t in range(<int>self.trail.size() - 1, limit - 1, -1):
            lit = self.trail[t]
            v = lit if lit > 0 else -lit
            self.saved[v] = self.assign_[v]
            self.assign_[v] = UNSET
            self.heap.push(HeapItem(self.activity[v], -v))
        self.trail.resize(limit)
        self.trail_lim.resize(lvl)
        self.qhead = limit

    # -- learning ---------------------------------------------------------------

    cdef void _bump(self, int v) noexcept nogil:
        cdef int i
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(1, self.nvars + 1):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100

    cdef int _analyze(self, int confl, vector[int]& learnt) noexcept nogil:
        cdef vector[char] seen = vector[char](self.nvars + 1, 0)
        cdef int counter = 0
        cdef int p = 0
        cdef int index = <int>self.trail.size() - 1
        cdef int cur_level = <int>self.trail_lim.size()
        cdef int cid = confl
        cdef int q, v, tmp
        cdef size_t s, start, pi, max_i, i
        cdef vector[int]* c
        learnt.clear()
        learnt.push_back(0)
        while True:
            c = &self.clauses[cid]
            start = 1 if p else 0
            for s in range(start, c[0].size()):
                q = c[0][s]
                v = q if q > 0 else -q
                if not seen[v] and self.level[v] > 0:
                    seen[v] = 1
                    self._bump(v)
                    if self.level[v] == cur_level:
                        counter += 1
                    else:
                        learnt.push_back(q)
            while True:
                q = self.trail[index]
                v = q if q > 0 else -q
                if seen[v]:
                    break
                index -= 1
            p = self.trail[index]
            v = p if p > 0 else -p
            seen[v] = 0
            index -= 1
            counter -= 1
            if counter == 0:
                break
            cid = self.reason[v]
            c = &self.clauses[cid]
            if c[0][0] != p:
                # put the implied literal first for the skip above
                pi = 0
                for s in range(c[0].size()):
                    if c[0][s] == p:
                        pi = s
                        break
                tmp = c[0][0]
                c[0][0] = c[0][pi]
                c[0][pi] = tmp
        learnt[0] = -p
        if learnt.size() == 1:
            return 0
        max_i = 1
        for i in range(2, learnt.size()):
            q = learnt[i]
            v = q if q > 0 else -q
            p = learnt[max_i]
            if self.level[v] > self.level[p if p > 0 else -p]:
                max_i = i
        tmp = learnt[1]
        learnt[1] = learnt[max_i]
        learnt[max_i] = tmp
        q = learnt[1]
        return self.level[q if q > 0 else -q]

    cdef void _record(self, vector[int]& learnt) noexcept nogil:
        if learnt.size() == 1:
            self._enqueue(learnt[0], -1)
            return
        cdef int cid = <int>self.clauses.size()
        self.clauses.push_back(learnt)
        self.watches[widx(learnt[0])].push_back(cid)
        self.watches[widx(learnt[1])].push_back(cid)
        self._enqueue(learnt[0], cid)

    # -- search -------------------------------------------------------------------

    cdef int _decide(self):
        cdef HeapItem top
        cdef int v
        cdef double act
        while not self.heap.empty():
            top = self.heap.top()
            self.heap.pop()
            act = top.first
            v = -top.second
            if self.assign_[v] == UNSET and act == self.activity[v]:
                return v
            if self.assign_[v] == UNSET:
                self.heap.push(HeapItem(self.activity[v], -v))
        for v in range(1, self.nvars + 1):
            if self.assign_[v] == UNSET:
                return v
        return 0

    @staticmethod
    def _luby(x):
        size, seq = 1, 0
        while size < x + 1:
            seq += 1
            size = 2 * size + 1
        while size - 1 != x:
            size = (size - 1) // 2
            seq -= 1
            x = x % size
        return 1 << seq

    def solve(self, conflict_budget=None):
        """True=sat, False=unsat, None=budget exhausted."""
        if not self.ok:
            return False
        if self._propagate() != -1:
            self.ok = False
            return False
        cdef long long budget = -1
        if conflict_budget is not None:
            budget = conflict_budget
        cdef int restart_idx = 0
        cdef int restart_unit = 64
        cdef long long limit = restart_unit * <long long>SatSolver._luby(restart_idx)
        cdef long long since_restart = 0
        cdef int confl, back, v
        cdef vector[int] learnt
        while True:
            confl = self._propagate()
            if confl != -1:
                self.conflicts += 1
                since_restart += 1
                if budget >= 0 and self.conflicts > budget:
                    self._cancel_until(0)
                    return None
                if self.trail_lim.size() == 0:
                    self.ok = False
                    return False
                back = self._analyze(confl, learnt)
                self._cancel_until(back)
                self._record(learnt)
                self.var_inc *= 1.052
                continue
            if since_restart >= limit:
                since_restart = 0
                restart_idx += 1
                limit = restart_unit * <long long>SatSolver._luby(restart_idx)
                self._cancel_until(0)
                continue
            v = self._decide()
            if v == 0:
                return True
            self.decisions += 1
            self.trail_lim.push_back(<int>self.trail.size())
            self._enqueue(v if self.saved[v] == 1 else -v, -1)

    def model(self):
        """Assignment indexed by variable; index 0 unused."""
        return [0] + [1 if self.assign_[v] == 1 else 0 for v in range(1, self.nvars + 1)]

    def _dbg(self):
        cdef Py_ssize_t i
        return (
            [self.assign_[i] for i in range(<Py_ssize_t>self.assign_.size())],
            [self.trail[i] for i in range(<Py_ssize_t>self.trail.size())],
            self.qhead,
            self.ok,
        )
