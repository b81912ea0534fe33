"""Conflict-driven clause learning SAT core.

A compact MiniSat-shaped solver: two watched literals per clause, first
unique implication point learning, exponential decay variable activity
with a lazy max-heap, saved phases, and Luby-sequence restarts. Clause
minimization and garbage collection are deliberately absent; the clause
databases this package produces stay small enough not to need them.

Variables are 1-based, literals signed ints. `solve()` returns True with
a complete model, or False. A compiled twin of this class may be built at
install time; `new_solver()` picks whichever is available.
"""

from __future__ import annotations

import heapq

__all__ = ["SatSolver", "new_solver", "core_name"]

_UNSET = -1


class SatSolver:
    name = "pure-python"

    def __init__(self):
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.watches: dict[int, list[int]] = {}
        self.assign: list[int] = [_UNSET]  # indexed by var, _UNSET/0/1
        self.level: list[int] = [0]
        self.reason: list[int] = [-1]
        self.saved: list[int] = [0]
        self.activity: list[float] = [0.0]
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.var_inc = 1.0
        self.heap: list[tuple[float, int]] = []
        self.ok = True
        self.conflicts = 0
        self.decisions = 0
        self.propagations = 0

    # -- variables and clauses ----------------------------------------------

    def new_var(self) -> int:
        self.nvars += 1
        self.assign.append(_UNSET)
        self.level.append(0)
        self.reason.append(-1)
        self.saved.append(0)
        self.activity.append(0.0)
        heapq.heappush(self.heap, (0.0, self.nvars))
        return self.nvars

    def _value(self, lit: int) -> int:
        a = self.assign[abs(lit)]
        if a == _UNSET:
            return _UNSET
        return a ^ 1 if lit < 0 else a

    def add_clause(self, lits: list[int]) -> bool:
        if not self.ok:
            return False
        seen = set()
        out = []
        for l in lits:
            if -l in seen:
                return True  # tautology
            if l in seen:
                continue
            v = self._value(l)
            if v == 1:
                return True
            if v == 0 and self.level[abs(l)] == 0:
                continue
            seen.add(l)
            out.append(l)
        if not out:
            self.ok = False
            return False
        if len(out) == 1:
            self._enqueue(out[0], -1)
            self.ok = self._propagate() == -1
            return self.ok
        cid = len(self.clauses)
        self.clauses.append(out)
        self.watches.setdefault(out[0], []).append(cid)
        self.watches.setdefault(out[1], []).append(cid)
        return True

    # -- trail ----------------------------------------------------------------

    def _enqueue(self, lit: int, reason_cid: int) -> None:
        v = abs(lit)
        self.assign[v] = 1 if lit > 0 else 0
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason_cid
        self.trail.append(lit)

    def _propagate(self) -> int:
        """Exhaust unit propagation. Returns conflicting clause id or -1."""
        while self.qhead < len(self.trail):
            p = self.trail[self.qhead]
            self.qhead += 1
            self.propagations += 1
            falsified = -p
            watchlist = self.watches.get(falsified)
            if not watchlist:
                continue
            i = 0
            j = 0
            n = len(watchlist)
            while i < n:
                cid = watchlist[i]
                i += 1
                c = self.clauses[cid]
                if c[0] == falsified:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                if self._value(first) == 1:
                    watchlist[j] = cid
                    j += 1
                    continue
                moved = False
                for k in range(2, len(c)):
                    if self._value(c[k]) != 0:
                        c[1], c[k] = c[k], c[1]
                        self.watches.setdefault(c[1], []).append(cid)
                        moved = True
                        break
                if moved:
                    continue
                watchlist[j] = cid
                j += 1
                if self._value(first) == 0:
                    while i < n:
                        watchlist[j] = watchlist[i]
                        j += 1
                        i += 1
                    del watchlist[j:]
                    return cid
                self._enqueue(first, cid)
            del watchlist[j:]
        return -1

    def _cancel_until(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        limit = self.trail_lim[lvl]
        for lit in reversed(self.trail[limit:]):
            v = abs(lit)
            self.saved[v] = self.assign[v]
            self.assign[v] = _UNSET
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[limit:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    # -- learning ---------------------------------------------------------------

    def _bump(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(1, self.nvars + 1):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        learnt = [0]
        seen = [False] * (self.nvars + 1)
        counter = 0
        p = 0
        index = len(self.trail) - 1
        cur_level = len(self.trail_lim)
        cid = confl
        while True:
            c = self.clauses[cid]
            start = 1 if p else 0
            for q in c[start:]:
                v = abs(q)
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump(v)
                    if self.level[v] == cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[abs(self.trail[index])]:
                index -= 1
            p = self.trail[index]
            v = abs(p)
            seen[v] = False
            index -= 1
            counter -= 1
            if counter == 0:
                break
            cid = self.reason[v]
            c = self.clauses[cid]
            if c[0] != p:
                # put the implied literal first for the skip above
                pi = c.index(p)
                c[0], c[pi] = c[pi], c[0]
        learnt[0] = -p
        if len(learnt) == 1:
            return learnt, 0
        max_i = 1
        for i in range(2, len(learnt)):
            if self.level[abs(learnt[i])] > self.level[abs(learnt[max_i])]:
                max_i = i
        learnt[1], learnt[max_i] = learnt[max_i], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    def _record(self, learnt: list[int]) -> None:
        if len(learnt) == 1:
            self._enqueue(learnt[0], -1)
            return
        cid = len(self.clauses)
        self.clauses.append(learnt)
        self.watches.setdefault(learnt[0], []).append(cid)
        self.watches.setdefault(learnt[1], []).append(cid)
        self._enqueue(learnt[0], cid)

    # -- search -------------------------------------------------------------------

    def _decide(self) -> int:
        while self.heap:
            act, v = heapq.heappop(self.heap)
            if self.assign[v] == _UNSET and -act == self.activity[v]:
                return v
            if self.assign[v] == _UNSET:
                heapq.heappush(self.heap, (-self.activity[v], v))
        for v in range(1, self.nvars + 1):
            if self.assign[v] == _UNSET:
                return v
        return 0

    @staticmethod
    def _luby(x: int) -> int:
        size, seq = 1, 0
        while size < x + 1:
            seq += 1
            size = 2 * size + 1
        while size - 1 != x:
            size = (size - 1) // 2
            seq -= 1
            x = x % size
        return 1 << seq

    def solve(self, conflict_budget: int | None = None) -> bool | None:
        """True=sat, False=unsat, None=budget exhausted."""
        if not self.ok:
            return False
        if self._propagate() != -1:
            self.ok = False
            return False
        restart_idx = 0
        restart_unit = 64
        limit = restart_unit * self._luby(restart_idx)
        since_restart = 0
        while True:
            confl = self._propagate()
            if confl != -1:
                self.conflicts += 1
                since_restart += 1
                if conflict_budget is not None and self.conflicts > conflict_budget:
                    self._cancel_until(0)
                    return None
                if not self.trail_lim:
                    self.ok = False
                    return False
                learnt, back = self._analyze(confl)
                self._cancel_until(back)
                self._record(learnt)
                self.var_inc *= 1.052
                continue
            if since_restart >= limit:
                since_restart = 0
                restart_idx += 1
                limit = restart_unit * self._luby(restart_idx)
                self._cancel_until(0)
                continue
            v = self._decide()
            if v == 0:
                return True
            self.decisions += 1
            self.trail_lim.append(len(self.trail))
            self._enqueue(v if self.saved[v] == 1 else -v, -1)

    def model(self) -> list[int]:
        """Assignment indexed by variable; index 0 unused."""
        return [0] + [1 if self.assign[v] == 1 else 0 for v in range(1, self.nvars + 1)]


def new_solver():
    """Fastest available SAT core: compiled twin when built, else this one."""
    try:
        from . import _satcore_cy

        return _satcore_cy.SatSolver()
    except ImportError:
        return SatSolver()


def core_name() -> str:
    try:
        from . import _satcore_cy

        return _satcore_cy.SatSolver.name
    except ImportError:
        return SatSolver.name
