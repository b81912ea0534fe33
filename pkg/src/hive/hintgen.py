"""Hint generation from ranked simulation activity, and hint checking.

Four hint kinds, chosen per signal from its scenario behavior:

- concretize: the signal barely moved (at most one change) and nothing in
  its driver logic is gated by a machine state the scenario visited, so
  pin it to the observed step function. Classic target: firmware-written
  configuration registers.
- overapproximate: the signal churned (count >= tau); replace it with a
  fresh unconstrained symbol each cycle so the prover stops tracking it.
- abstract: mid-activity signal whose combinational cone bottoms out in
  instance ports and already-abstracted signals; swap the cone for an
  uninterpreted per-cycle value.
- weaken: two origins. Signals that ever went unknown get an advisory
  weaken (their values cannot be relied on); machine states the scenario
  never reached contribute their entry conditions, to be assumed
  unreachable during proofs.

State registers are protected: no concretize, overapproximate, or
abstract hint ever targets one, since collapsing the control machine is
exactly what must not happen.

Checking runs against a fresh unrolling of the same scenario with
undriven inputs left free: a concretize hint must be unsatisfiable to
contradict, an unreachable-state weaken must have an unsatisfiable entry
condition, an unknown-signal weaken must actually float, abstract hints
get their cone recheck, and overapproximations are vacuously fine. Goals
that constant-fold settle without a solver call; solver timeouts reject
the hint rather than trusting it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .fsmkit import Fsm, state_path_conditions, visited_states
from .netlist import (
    Expr,
    FlatDesign,
    Netlist,
    comb_support,
    const,
    expr_to_text,
    parse_expr,
)
from .rank import RankedSignal
from .smt import emit_script, solve, unroll
from .trace import Trace

__all__ = [
    "Hint",
    "HintSet",
    "HintError",
    "hint_generation",
    "path_prioritization",
    "verify_hints",
    "instance_input_ports",
    "hints_to_json",
    "hints_from_json",
    "overrides_for",
    "weaken_assumptions",
]

KINDS = ("concretize", "weaken", "overapproximate", "abstract")
ORIGINS = ("low-activity", "high-activity", "combinational", "unknown-signal", "unvisited-state")
STATUSES = ("proposed", "verified", "rejected")


class HintError(ValueError):
    pass


@dataclass(frozen=True)
class Hint:
    kind: str
    signal: str
    origin: str
    segments: tuple[tuple[int, int], ...] = ()  # concretize step function
    condition: Expr | None = None  # weaken payload
    state: str | None = None  # unvisited-state weaken
    status: str = "proposed"
    note: str = ""

    def value_at(self, cycle: int) -> int:
        v = None
        for start, val in self.segments:
            if cycle >= start:
                v = val
        if v is None:
            raise HintError(f"{self.signal}: no segment covers cycle {cycle}")
        return v


@dataclass
class HintSet:
    scenario: str
    instance: str
    tau: int
    hints: list[Hint] = field(default_factory=list)

    def by_kind(self, kind: str) -> list[Hint]:
        return [h for h in self.hints if h.kind == kind]

    def verified(self) -> list[Hint]:
        return [h for h in self.hints if h.status == "verified"]


# ---------------------------------------------------------------------------
# Structure helpers


def instance_input_ports(net: Netlist, f: FlatDesign, prefix: str) -> set[str]:
    """Flat names of the input ports of one instance."""
    path = tuple(prefix.split("."))
    out = set()
    for name, (module, local, ipath) in f.origin.items():
        if ipath == path and local in net.modules[module].inputs:
            out.add(name)
    return out


def _driver_expr(f: FlatDesign, sig: str) -> Expr | None:
    if sig in f.assigns:
        return f.assigns[sig]
    if sig in f.regs:
        return f.regs[sig].next
    return None


def _cone_exprs(f: FlatDesign, sig: str) -> list[Expr]:
    """Driver expression of sig plus every wire expression feeding it
    combinationally, stopping at registers, memories, and inputs."""
    root = _driver_expr(f, sig)
    if root is None:
        return []
    out = [root]
    seen = {sig}
    frontier = list(comb_support(root))
    while frontier:
        n = frontier.pop()
        if n in seen:
            continue
        seen.add(n)
        if n in f.assigns and n not in f.regs:
            e = f.assigns[n]
            out.append(e)
            frontier.extend(comb_support(e))
    return out


def _comb_frontier(f: FlatDesign, sig: str, stop: set[str]) -> tuple[set[str], bool]:
    """Signals the driver cone rests on that are not in `stop`.

    Expansion walks through wires but halts at anything in `stop` (ports,
    already-abstracted signals); registers and inputs outside `stop` are
    hard leaves. Second result reports whether the cone reads a memory.
    """
    root = _driver_expr(f, sig)
    if root is None:
        return set(), False
    reads_mem = False
    hard: set[str] = set()
    seen: set[str] = set()
    stack = [root]
    while stack:
        e = stack.pop()
        if e.kind == "read":
            reads_mem = True
        if e.kind == "ref":
            n = e.name
            if n in seen or n in stop:
                continue
            seen.add(n)
            if n in f.regs or n in f.inputs:
                hard.add(n)
            elif n in f.assigns:
                stack.append(f.assigns[n])
            continue
        stack.extend(e.a)
    return hard, reads_mem


def _assigning_states(f: FlatDesign, sig: str, fsms: dict[str, Fsm]) -> dict[str, set[str]]:
    """Per state register: names of states tested in sig's driver cone."""
    found: dict[str, set[str]] = {}
    for e in _cone_exprs(f, sig):
        stack = [e]
        while stack:
            x = stack.pop()
            if x.kind == "eq":
                a, b = x.a
                ref, cst = (a, b) if a.kind == "ref" else (b, a)
                if ref.kind == "ref" and cst.kind == "const" and ref.name in fsms:
                    m = fsms[ref.name]
                    nm = m.name_of(cst.value)
                    if nm is not None:
                        found.setdefault(ref.name, set()).add(nm)
            stack.extend(x.a)
    return found


# ---------------------------------------------------------------------------
# Generation


def _observed_segments(trace: Trace, sig: str) -> tuple[tuple[int, int], ...]:
    segs = []
    for cycle, bits in trace.changes.get(sig, []):
        if not bits.is_known():
            raise HintError(f"{sig}: unknown value cannot be concretized")
        segs.append((cycle, bits.to_int()))
    return tuple(segs)


def hint_generation(
    f: FlatDesign,
    trace: Trace,
    ranked: list[RankedSignal],
    fsms: dict[str, Fsm],
    tau: int,
    *,
    scenario: str,
    instance: str,
    ports: set[str] | None = None,
) -> HintSet:
    """Propose hints for one instance from one scenario's ranking.

    `ranked` should already be filtered to the instance. Signals are
    visited in rank order; the abstract rule may lean on signals
    abstracted earlier in the pass.
    """
    ports = ports or set()
    visited: dict[str, set[str]] = {
        reg: visited_states(m, trace) for reg, m in fsms.items()
    }
    state_regs = set(fsms)
    abstracted: set[str] = set()
    hs = HintSet(scenario=scenario, instance=instance, tau=tau)

    for r in ranked:
        sig = r.name
        if sig in state_regs:
            continue
        if sig in f.inputs:
            continue
        if r.unknown:
            hs.hints.append(
                Hint(
                    kind="weaken",
                    signal=sig,
                    origin="unknown-signal",
                    condition=Expr("neq", (Expr("ref", name=sig), const(0, f.width(sig)))),
                    note="carried unknown values during the scenario",
                )
            )
            continue
        if r.changes <= 1:
            assigning = _assigning_states(f, sig, fsms)
            clash = [
                reg
                for reg, states in assigning.items()
                if states & visited.get(reg, set())
            ]
            if not clash:
                hs.hints.append(
                    Hint(
                        kind="concretize",
                        signal=sig,
                        origin="low-activity",
                        segments=_observed_segments(trace, sig),
                        note=f"{r.changes} change(s) observed",
                    )
                )
            continue
        if r.changes >= tau:
            hs.hints.append(
                Hint(
                    kind="overapproximate",
                    signal=sig,
                    origin="high-activity",
                    note=f"{r.changes} changes >= tau {tau}",
                )
            )
            continue
        hard, reads_mem = _comb_frontier(f, sig, ports | abstracted)
        if not reads_mem and not hard:
            abstracted.add(sig)
            hs.hints.append(
                Hint(
                    kind="abstract",
                    signal=sig,
                    origin="combinational",
                    note="cone rests on ports and abstracted signals",
                )
            )
        continue

    return hs


def path_prioritization(
    fsms: dict[str, Fsm], trace: Trace, hs: HintSet
) -> list[tuple[str, str]]:
    """Append weaken hints for states the scenario never reached.

    The payload is the state's entry condition: the disjunction over
    incoming transitions from other states. Returns (register, state)
    pairs for reporting.
    """
    missed: list[tuple[str, str]] = []
    for reg, fsm in sorted(fsms.items()):
        entry = state_path_conditions(fsm)
        seen = visited_states(fsm, trace)
        for state in sorted(fsm.states):
            if state in seen:
                continue
            missed.append((reg, state))
            hs.hints.append(
                Hint(
                    kind="weaken",
                    signal=reg,
                    origin="unvisited-state",
                    condition=entry[state],
                    state=state,
                    note=f"state {state} not visited",
                )
            )
    return missed


# ---------------------------------------------------------------------------
# Verification


def verify_hints(
    hs: HintSet,
    f: FlatDesign,
    *,
    run_cycles: int,
    stimulus: list[tuple[int, str, int]] | None = None,
    images: dict[str, list[int]] | None = None,
    solver: str | None = None,
    timeout_s: float = 60.0,
    ports: set[str] | None = None,
) -> HintSet:
    """Check every hint against a fresh unrolling of the scenario.

    Driven inputs are bound, undriven inputs stay free, so verification
    asks "could any legal input history contradict this hint", not just
    "did the one simulated run".
    """
    u = unroll(f, run_cycles, stimulus=stimulus, images=images)
    tb = u.tb
    out = HintSet(scenario=hs.scenario, instance=hs.instance, tau=hs.tau)

    for h in hs.hints:
        if h.signal not in f.signals:
            out.hints.append(
                replace(h, status="rejected", note="names no signal in the design")
            )
            continue
        try:
            if h.kind == "concretize":
                bad = []
                for k in range(run_cycles):
                    want = tb.const(h.value_at(k), f.width(h.signal))
                    bad.append(tb.not_(tb.eq(u.at(h.signal, k), want)))
                goal = tb.any_(bad)
                status, note = _unsat_means_verified(goal, solver, timeout_s)
            elif h.kind == "weaken":
                # A weaken is an assumed-false path condition. It may only
                # be exported when no legal input history can raise it, or
                # the proof premises would contradict reality.
                fire = [u.expr_at(h.condition, k) for k in range(run_cycles)]
                goal = tb.any_(fire)
                status, note = _unsat_means_verified(goal, solver, timeout_s)
            elif h.kind == "abstract":
                prior = {
                    hh.signal
                    for hh in out.hints
                    if hh.kind == "abstract" and hh.status == "verified"
                }
                hard, reads_mem = _comb_frontier(f, h.signal, (ports or set()) | prior)
                if reads_mem or hard:
                    status, note = "rejected", f"cone escapes: {sorted(hard)[:4]}"
                else:
                    status, note = "verified", "structural cone check"
            else:  # overapproximate
                status, note = "verified", "unconstrained by construction"
        except HintError as exc:
            status, note = "rejected", str(exc)
        out.hints.append(replace(h, status=status, note=note or h.note))
    return out


def _unsat_means_verified(goal, solver, timeout_s):
    if goal.op == "const":
        if goal.info == 0:
            return "verified", "counterexample folds to false"
        return "rejected", "the driven run itself is a counterexample"
    script, syms = emit_script(goal)
    r = solve(script, syms, solver=solver, timeout_s=timeout_s, want_model=False)
    if r.status == "unsat":
        return "verified", "no contradicting input history"
    if r.status == "sat":
        return "rejected", "contradicted by a legal input history"
    return "rejected", f"solver {r.status}; kept out conservatively"


# ---------------------------------------------------------------------------
# Applying hints to an unrolling


def overrides_for(hints: list[Hint], f: FlatDesign) -> dict[str, object]:
    """Build unroll() overrides implementing concretize/over/abstract."""
    out: dict[str, object] = {}
    for h in hints:
        if h.status != "verified":
            continue
        if h.kind == "concretize":
            w = f.width(h.signal)

            def mk_conc(hh, ww):
                def ov(k, tb, orig):
                    return tb.const(hh.value_at(k), ww)

                return ov

            out[h.signal] = mk_conc(h, w)
        elif h.kind == "overapproximate":

            def mk_free(name, tag):
                def ov(k, tb, orig):
                    return tb.sym(f"{tag}!{name}!{k}", orig.width)

                return ov

            out[h.signal] = mk_free(h.signal, "ov")
        elif h.kind == "abstract":

            def mk_abs(name):
                def ov(k, tb, orig):
                    return tb.sym(f"ab!{name}!{k}", orig.width)

                return ov

            out[h.signal] = mk_abs(h.signal)
    return out


def weaken_assumptions(u, hints: list[Hint]) -> int:
    """Assume unreachable-state entry conditions stay false, every cycle."""
    n = 0
    for h in hints:
        if h.kind != "weaken" or h.origin != "unvisited-state" or h.status != "verified":
            continue
        for k in range(u.n_cycles):
            u.assume(u.tb.not_(u.expr_at(h.condition, k)))
        n += 1
    return n


# ---------------------------------------------------------------------------
# Serialization


def hints_to_json(hs: HintSet) -> str:
    doc = {
        "scenario": hs.scenario,
        "instance": hs.instance,
        "tau": hs.tau,
        "hints": [
            {
                "kind": h.kind,
                "signal": h.signal,
                "origin": h.origin,
                "segments": [list(s) for s in h.segments],
                "condition": expr_to_text(h.condition) if h.condition is not None else None,
                "state": h.state,
                "status": h.status,
                "note": h.note,
            }
            for h in hs.hints
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def hints_from_json(text: str) -> HintSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise HintError(f"not valid JSON: {exc}") from None
    extra = set(doc) - {"scenario", "instance", "tau", "hints"}
    if extra:
        raise HintError(f"unknown fields: {sorted(extra)}")
    for want in ("scenario", "instance", "tau", "hints"):
        if want not in doc:
            raise HintError(f"missing field {want!r}")
    if not isinstance(doc["tau"], int) or doc["tau"] < 2:
        raise HintError("tau must be an integer >= 2")
    hs = HintSet(scenario=doc["scenario"], instance=doc["instance"], tau=doc["tau"])
    for i, h in enumerate(doc["hints"]):
        where = f"hints[{i}]"
        extra = set(h) - {"kind", "signal", "origin", "segments", "condition",
                          "state", "status", "note"}
        if extra:
            raise HintError(f"{where}: unknown fields {sorted(extra)}")
        kind = h.get("kind")
        if kind not in KINDS:
            raise HintError(f"{where}: bad kind {kind!r}")
        origin = h.get("origin")
        if origin not in ORIGINS:
            raise HintError(f"{where}: bad origin {origin!r}")
        status = h.get("status", "proposed")
        if status not in STATUSES:
            raise HintError(f"{where}: bad status {status!r}")
        if not isinstance(h.get("signal"), str) or not h["signal"]:
            raise HintError(f"{where}: bad signal")
        segments = []
        last = -1
        for seg in h.get("segments") or []:
            if (
                not isinstance(seg, list)
                or len(seg) != 2
                or not all(isinstance(x, int) for x in seg)
                or seg[0] < 0
                or seg[1] < 0
            ):
                raise HintError(f"{where}: bad segment {seg!r}")
            if seg[0] <= last:
                raise HintError(f"{where}: segments must be strictly increasing")
            last = seg[0]
            segments.append((seg[0], seg[1]))
        if kind == "concretize" and not segments:
            raise HintError(f"{where}: concretize needs segments")
        cond = None
        if h.get("condition") is not None:
            try:
                cond = parse_expr(h["condition"])
            except Exception as exc:
                raise HintError(f"{where}: bad condition: {exc}") from None
        if kind == "weaken" and cond is None:
            raise HintError(f"{where}: weaken needs a condition")
        hs.hints.append(
            Hint(
                kind=kind,
                signal=h["signal"],
                origin=origin,
                segments=tuple(segments),
                condition=cond,
                state=h.get("state"),
                status=status,
                note=h.get("note", ""),
            )
        )
    return hs
