"""Scenario-based equivalence checking of modules against their spec models.

The SoC-level problem is cut into per-module sub-problems: each scenario
contributes its verified hint set, the module is projected out of the
hierarchy, and the spec's obligations are checked on a bounded unrolling of
the projection with free inputs. Hints play the assume side of the
assume-guarantee argument; the guarantee is the spec.

A satisfying assignment is never trusted as-is. Its input history is
replayed through the concrete simulator and the spec is re-evaluated on the
replay trace: only a reproducible violation is reported as Fail, anything
else stays Unknown. That keeps over-approximation artifacts (fresh symbols
standing in for high-activity or abstracted signals) from masquerading as
bugs.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .fsmkit import eval_expr_on_trace, extract_fsms
from .hintgen import Hint, overrides_for, weaken_assumptions
from .netlist import (
    Expr,
    FlatDesign,
    Netlist,
    cone_of_influence,
    comb_support,
    flatten,
)
from .sim import Scenario, reset, run_scenario
from .smt import TermBuilder, emit_script, input_symbol, solve, unroll
from .specmodel import (
    SpecModel,
    _row_condition,
    bind_states,
    check_trace,
    qualify_expr,
    validate_against_design,
    violation_obligations,
)
from .trace import Bits


class EquivError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Renaming hints from an instance prefix to the projected module prefix


def rename_prefix(name: str, old: str, new: str) -> str:
    if name == old:
        return new
    if name.startswith(old + "."):
        return new + name[len(old):]
    return name


def rename_expr(e: Expr, old: str, new: str) -> Expr:
    """Rewrite every signal and memory reference under a new prefix."""
    if e.kind in ("ref", "read"):
        return Expr(
            e.kind,
            tuple(rename_expr(x, old, new) for x in e.a),
            name=rename_prefix(e.name, old, new),
            value=e.value,
            width=e.width,
            hi=e.hi,
            lo=e.lo,
        )
    if not e.a:
        return e
    return Expr(
        e.kind,
        tuple(rename_expr(x, old, new) for x in e.a),
        name=e.name,
        value=e.value,
        width=e.width,
        hi=e.hi,
        lo=e.lo,
    )


def localize_hint(h: Hint, inst: str, module: str) -> Hint:
    """Map a hint mined at SoC scope onto the projected module's names."""
    return Hint(
        kind=h.kind,
        signal=rename_prefix(h.signal, inst, module),
        origin=h.origin,
        segments=h.segments,
        condition=rename_expr(h.condition, inst, module) if h.condition is not None else None,
        state=h.state,
        status=h.status,
        note=h.note,
    )


# ---------------------------------------------------------------------------
# Hint restriction: keep value-freeing hints out of the property cone


def checked_signals(spec: SpecModel, prefix: str, binding) -> set[str]:
    """Every flat signal whose value the spec constrains or reads."""
    names: set[str] = set()
    for row in spec.contract:
        if row.when is not None:
            names |= comb_support(qualify_expr(row.when, prefix))
        if row.when_state is not None and binding is not None:
            names.add(binding.reg)
        for sig, val in row.then:
            names.add(f"{prefix}.{sig}")
            names |= comb_support(qualify_expr(val, prefix))
    for tx in spec.transactions:
        names |= comb_support(qualify_expr(tx.trigger, prefix))
        for c in tx.checks:
            names.add(f"{prefix}.{c.signal}")
            names |= comb_support(qualify_expr(c.value, prefix))
    return names


def restrict_hints(
    fproj: FlatDesign, spec: SpecModel, hints: list[Hint], binding, prefix: str
) -> tuple[list[Hint], list[str]]:
    """Split hints into (kept, dropped-signal-names) for one proof.

    Overapproximate and abstract hints replace a signal with fresh symbols;
    applying one anywhere in the cone of influence of a spec-checked signal
    would let the solver fabricate behaviour the spec is supposed to pin
    down. Those are dropped. Concretize and weaken hints only constrain, so
    they always stay.
    """
    protected = checked_signals(spec, prefix, binding)
    cone: set[str] = set(protected)
    for s in protected:
        if s in fproj.signals:
            cone |= cone_of_influence(fproj, s)
    kept: list[Hint] = []
    dropped: list[str] = []
    for h in hints:
        if h.kind in ("overapproximate", "abstract") and h.signal in cone:
            dropped.append(h.signal)
        else:
            kept.append(h)
    return kept, sorted(set(dropped))


# ---------------------------------------------------------------------------
# Decomposition


@dataclass(frozen=True)
class SubProblem:
    """One bounded proof: a module projection against one spec.

    Sub-problems from different scenarios merge when they agree on module,
    spec content, proof depth, and the restricted hint set; the scenarios
    tuple records every contributor. `unhinted` flags scenarios that
    arrived with no hint set at all: the proof proceeds, but the report
    should say the assume side was empty.
    """

    module: str
    instance: str
    spec: SpecModel
    depth: int
    hints: tuple[Hint, ...]
    dropped: tuple[str, ...]
    scenarios: tuple[str, ...]
    key: str
    unhinted: bool = False

    def name(self) -> str:
        return f"{self.module}[{'+'.join(self.scenarios)}]@{self.depth}"


def _hint_fingerprint(hints: list[Hint]) -> str:
    from .netlist import expr_to_text

    rows = sorted(
        (
            h.kind,
            h.signal,
            h.state or "",
            list(map(list, h.segments)),
            expr_to_text(h.condition) if h.condition is not None else "",
        )
        for h in hints
    )
    return hashlib.sha256(json.dumps(rows).encode()).hexdigest()


def decompose(
    net: Netlist,
    f: FlatDesign,
    specs: list[SpecModel],
    scenarios: list[Scenario],
    hint_sets: dict[tuple[str, str], object],
    *,
    depth_divisor: int = 1,
    depth_override: int | None = None,
) -> list[SubProblem]:
    """Cut (scenario x spec'd instance) into merged per-module sub-problems.

    hint_sets maps (scenario name, instance prefix) to that pair's verified
    HintSet; a missing entry flags the sub-problem unhinted. Proof depth
    defaults to the scenario's simulated cycle count over `depth_divisor`,
    capped by the spec's own horizon, so the hint premises (checked over
    the whole simulation) always cover the proof window.
    """
    if depth_divisor < 1:
        raise EquivError("depth_divisor must be >= 1")
    merged: dict[str, SubProblem] = {}
    projections: dict[str, FlatDesign] = {}
    for spec in specs:
        paths = f.instance_paths_of_module(spec.module)
        if not paths:
            raise EquivError(f"no instance of module {spec.module!r} in the design")
        fproj = projections.get(spec.module)
        if fproj is None:
            fproj = projections[spec.module] = flatten(net, top=spec.module)
        binding = bind_states(spec, extract_fsms(fproj), spec.module)
        for path in paths:
            inst = ".".join(path)
            for sc in scenarios:
                hs = hint_sets.get((sc.name, inst))
                verified = [h for h in (hs.hints if hs else []) if h.status == "verified"]
                local = [localize_hint(h, inst, spec.module) for h in verified]
                kept, dropped = restrict_hints(fproj, spec, local, binding, spec.module)
                if depth_override is not None:
                    depth = depth_override
                else:
                    depth = min(spec.proof_cycles, max(2, sc.run_cycles // depth_divisor))
                key = hashlib.sha256(
                    json.dumps(
                        [spec.module, spec.content_key(), depth, _hint_fingerprint(kept)]
                    ).encode()
                ).hexdigest()[:16]
                prev = merged.get(key)
                if prev is not None:
                    if sc.name not in prev.scenarios:
                        merged[key] = SubProblem(
                            module=prev.module,
                            instance=prev.instance,
                            spec=prev.spec,
                            depth=prev.depth,
                            hints=prev.hints,
                            dropped=prev.dropped,
                            scenarios=prev.scenarios + (sc.name,),
                            key=key,
                            unhinted=prev.unhinted or hs is None,
                        )
                    continue
                merged[key] = SubProblem(
                    module=spec.module,
                    instance=inst,
                    spec=spec,
                    depth=depth,
                    hints=tuple(kept),
                    dropped=tuple(dropped),
                    scenarios=(sc.name,),
                    key=key,
                    unhinted=hs is None,
                )
    return sorted(merged.values(), key=lambda s: (s.module, s.scenarios, s.key))


def premise_problems(sub: SubProblem) -> list[str]:
    """Sanity-check the assume side before leaning on it."""
    problems = []
    for h in sub.hints:
        if h.status != "verified":
            problems.append(f"{h.kind} hint on {h.signal} is {h.status}, not verified")
        if h.kind == "concretize" and not h.segments:
            problems.append(f"concretize hint on {h.signal} has no value history")
        if h.kind == "weaken" and h.condition is None:
            problems.append(f"weaken hint on {h.signal} has no condition")
    return problems


def check_premises(results: list["ProofResult"]) -> tuple[list["ProofResult"], dict]:
    """Audit finished verdicts: a Pass may only rest on verified hints.

    Any Pass whose assumptions fail the audit is downgraded to Unknown.
    Returns the (possibly rewritten) results and a small report.
    """
    out: list[ProofResult] = []
    downgraded: list[str] = []
    for r in results:
        bad = premise_problems(r.sub)
        if r.status == "Pass" and bad:
            downgraded.append(r.sub.name())
            out.append(
                ProofResult(
                    r.sub,
                    "Unknown",
                    reason="premise audit: " + "; ".join(bad),
                    seconds=r.seconds,
                    term_count=r.term_count,
                    hints_applied=r.hints_applied,
                )
            )
        else:
            out.append(r)
    report = {
        "checked": len(results),
        "downgraded": downgraded,
        "clean": not downgraded,
    }
    return out, report


# ---------------------------------------------------------------------------
# Proving one sub-problem


@dataclass
class ProofResult:
    sub: SubProblem
    status: str  # Pass | Fail | Unknown
    reason: str = ""
    obligation: str | None = None
    seconds: float = 0.0
    counterexample: list[tuple[int, str, int]] | None = None
    replay_notes: tuple[str, ...] = ()
    hints_applied: int = 0
    term_count: int = 0


def _replay_stimulus(
    fproj: FlatDesign, model: dict[str, int], depth: int, hints: tuple[Hint, ...]
):
    """Concrete input history for the replay run.

    Inputs pinned by a verified concretize hint replay their observed
    values: that reconstructs the scenario context the proof assumed.
    Everything else takes the model's choice, or zero where the model is
    silent.
    """
    pinned = {
        h.signal: h
        for h in hints
        if h.kind == "concretize" and h.status == "verified" and h.signal in fproj.inputs
    }
    stim = []
    for k in range(depth):
        for name in sorted(fproj.inputs):
            h = pinned.get(name)
            if h is not None:
                stim.append((k, name, h.value_at(k)))
            else:
                stim.append((k, name, model.get(input_symbol(name, k), 0)))
    return stim


def prove(
    sub: SubProblem,
    net: Netlist,
    *,
    solver: str | None = None,
    timeout_s: float = 600.0,
    images: dict[str, list[int]] | None = None,
    script_sink=None,
) -> ProofResult:
    """Discharge one sub-problem: Pass, Fail, or Unknown.

    Unsat on every obligation is Pass. A sat obligation is replayed
    concretely on the module simulation; only a reproduced violation is
    Fail. Solver timeouts and non-reproducible models are Unknown.
    `script_sink(label, script)` receives every emitted solver script.
    """
    t0 = time.monotonic()
    bad = premise_problems(sub)
    if bad:
        return ProofResult(sub, "Unknown", reason="; ".join(bad))

    fproj = flatten(net, top=sub.module)
    binding = bind_states(sub.spec, extract_fsms(fproj), sub.module)
    validate_against_design(sub.spec, fproj, sub.module, binding)

    hints = list(sub.hints)
    tb = TermBuilder()
    u = unroll(fproj, sub.depth, tb=tb, images=images, overrides=overrides_for(hints, fproj))
    applied = sum(1 for h in hints if h.kind != "weaken" or h.origin == "unvisited-state")
    weaken_assumptions(u, hints)

    unknowns: list[str] = []
    for label, goal in violation_obligations(sub.spec, u, sub.module, binding):
        if goal.op == "const" and goal.info == 0:
            continue
        if goal.op == "const" and goal.info == 1:
            r_status, model = "sat", {}
        else:
            script, syms = emit_script(goal, assumptions=u.assumptions)
            if script_sink is not None:
                script_sink(label, script)
            r = solve(script, syms, solver=solver, timeout_s=timeout_s, want_model=True)
            r_status, model = r.status, r.model or {}
        if r_status == "unsat":
            continue
        if r_status != "sat":
            unknowns.append(f"solver {r_status} on {label}")
            continue
        stim = _replay_stimulus(fproj, model, sub.depth, sub.hints)
        trace, _ = run_scenario(
            fproj, Scenario(name=f"cex-{sub.key}", run_cycles=sub.depth, stimulus=stim)
        )
        viol, replay_unknown = check_trace(sub.spec, trace, sub.module, binding)
        if viol:
            return ProofResult(
                sub,
                "Fail",
                reason=viol[0],
                obligation=label,
                seconds=time.monotonic() - t0,
                counterexample=stim,
                replay_notes=tuple(viol[:8]),
                hints_applied=applied,
                term_count=len(tb.terms),
            )
        unknowns.append(f"{label}: model did not replay to a concrete violation")

    dt = time.monotonic() - t0
    if unknowns:
        return ProofResult(
            sub,
            "Unknown",
            reason="; ".join(unknowns[:4]),
            seconds=dt,
            hints_applied=applied,
            term_count=len(tb.terms),
        )
    return ProofResult(
        sub,
        "Pass",
        reason="all obligations unsatisfiable within the horizon",
        seconds=dt,
        hints_applied=applied,
        term_count=len(tb.terms),
    )


def prove_all(
    subs: list[SubProblem],
    net: Netlist,
    *,
    solver: str | None = None,
    timeout_s: float = 600.0,
    jobs: int = 1,
    images: dict[str, list[int]] | None = None,
    script_sink=None,
) -> list[ProofResult]:
    """Prove every sub-problem, optionally with a worker pool.

    Results come back in sub-problem order no matter how workers finish.
    """
    kw = dict(solver=solver, timeout_s=timeout_s, images=images, script_sink=script_sink)
    if jobs <= 1:
        return [prove(s, net, **kw) for s in subs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(prove, s, net, **kw) for s in subs]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# Exhaustive oracle for small projections


def exhaustive_oracle(
    fproj: FlatDesign,
    spec: SpecModel,
    *,
    max_states: int = 100_000,
    max_input_bits: int = 10,
) -> tuple[str, dict]:
    """Breadth-first reachability check of the contract rows.

    Walks every reachable state under every input assignment and evaluates
    each contract row concretely. Transactions are ignored: they need path
    history, and this oracle exists to cross-check the per-state contract.
    Returns ("holds" | "violated" | "capped", details).
    """
    prefix = fproj.top
    binding = bind_states(spec, extract_fsms(fproj), prefix)
    inputs = sorted(fproj.inputs)
    total_bits = sum(fproj.width(i) for i in inputs)
    if total_bits > max_input_bits:
        raise EquivError(
            f"{total_bits} input bits is too wide to enumerate (cap {max_input_bits})"
        )
    rows = []
    for row in spec.contract:
        cond = _row_condition(row, binding, prefix)
        then = [(f"{prefix}.{s}", qualify_expr(v, prefix)) for s, v in row.then]
        rows.append((row.label(), cond, then))

    combos = list(itertools.product(*[range(1 << fproj.width(i)) for i in inputs]))
    st = reset(fproj)

    class _Now:
        def value_at(self, name, cycle):
            return st.value(name)

    now = _Now()
    start = st.stepper.snapshot()
    seen = {start}
    frontier = [start]
    violations: list[str] = []
    while frontier:
        snap = frontier.pop()
        for combo in combos:
            st.stepper.restore(snap)
            for name, v in zip(inputs, combo):
                st.drive(name, Bits.from_int(v, fproj.width(name)))
            st.stepper.eval_comb()
            for label, cond, then in rows:
                if cond is not None:
                    c = eval_expr_on_trace(cond, now, 0)
                    if not c.is_known():
                        raise EquivError(f"{label}: condition unknown in oracle walk")
                    if c.to_int() == 0:
                        continue
                for sig, val_e in then:
                    got = st.value(sig)
                    want = eval_expr_on_trace(val_e, now, 0)
                    if not (got.is_known() and want.is_known()):
                        raise EquivError(f"{label}: unknown value in oracle walk")
                    if got.val != want.val:
                        ins = ", ".join(f"{n}={v}" for n, v in zip(inputs, combo))
                        violations.append(f"{label}: {sig}={got.val} wanted {want.val} [{ins}]")
            st.stepper.commit()
            st.stepper.eval_comb()
            nxt = st.stepper.snapshot()
            if nxt not in seen:
                if len(seen) >= max_states:
                    return "capped", {"states": len(seen), "violations": violations}
                seen.add(nxt)
                frontier.append(nxt)
    details = {"states": len(seen), "violations": sorted(set(violations))[:32]}
    return ("violated" if violations else "holds"), details


# ---------------------------------------------------------------------------
# Reporting


def report_json(results: list[ProofResult], *, meta: dict | None = None) -> dict:
    rows = []
    for r in results:
        kinds: dict[str, int] = {}
        for h in r.sub.hints:
            kinds[h.kind] = kinds.get(h.kind, 0) + 1
        rows.append(
            {
                "module": r.sub.module,
                "instance": r.sub.instance,
                "scenarios": list(r.sub.scenarios),
                "depth": r.sub.depth,
                "key": r.sub.key,
                "status": r.status,
                "reason": r.reason,
                "obligation": r.obligation,
                "seconds": round(r.seconds, 3),
                "term_count": r.term_count,
                "hints_applied": r.hints_applied,
                "hints_by_kind": kinds,
                "hints_dropped": list(r.sub.dropped),
                "unhinted": r.sub.unhinted,
                "counterexample": (
                    [list(t) for t in r.counterexample] if r.counterexample else None
                ),
                "replay_notes": list(r.replay_notes),
            }
        )
    doc = {
        "results": rows,
        "summary": {
            "total": len(results),
            "pass": sum(1 for r in results if r.status == "Pass"),
            "fail": sum(1 for r in results if r.status == "Fail"),
            "unknown": sum(1 for r in results if r.status == "Unknown"),
        },
    }
    if meta:
        doc["meta"] = meta
    return doc


def report_text(results: list[ProofResult]) -> str:
    lines = []
    width = max((len(r.sub.name()) for r in results), default=10)
    for r in results:
        lines.append(f"{r.sub.name():<{width}}  {r.status:<7}  {r.reason}")
    s = report_json(results)["summary"]
    lines.append(
        f"{s['total']} sub-problems: {s['pass']} pass, {s['fail']} fail, "
        f"{s['unknown']} unknown"
    )
    return "\n".join(lines)


def exit_code(results: list[ProofResult]) -> int:
    """0 all pass, 1 any fail, 2 any unknown without a fail."""
    if any(r.status == "Fail" for r in results):
        return 1
    if any(r.status == "Unknown" for r in results):
        return 2
    return 0
