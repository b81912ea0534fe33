"""Declarative specification models for module-level checking.

A spec is a JSON document naming a module and stating what it must do,
in three optional parts:

- `expected_fsm`: path to a KISS2 file (plus `.guards` sidecar) giving
  the control machine the module is supposed to implement;
- `contract`: rows of the form "when the machine is in state S and
  condition C holds, these signals equal these expressions", checked at
  every cycle;
- `transactions`: a trigger expression plus timed checks. `at: n` pins a
  check exactly n cycles after the trigger; `within: n` allows it to land
  anywhere in the next n cycles. Check values are expressions evaluated
  at trigger time, so "the byte on the wire equals the byte handed in"
  is expressible without naming cycle counts twice.

Signal names in spec expressions are module-local; binding against a
flattened design qualifies them with the instance prefix. Constants in
spec expressions must be width-sized literals (e.g. 1'd0), since there is
no surrounding netlist context to infer widths from.

The same spec evaluates two ways: symbolically, as a violation term over
an unrolling (the equivalence checker's goal), and concretely over a
simulation trace (counterexample replay and the brute-force oracle).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .fsmkit import Fsm, eval_expr_on_trace, parse_kiss2
from .netlist import Expr, FlatDesign, comb_support, const, parse_expr
from .smt import Term, TermBuilder, Unrolling
from .trace import Bits, Trace

__all__ = [
    "SpecError",
    "ContractRow",
    "TxCheck",
    "Transaction",
    "SpecModel",
    "load_spec",
    "qualify_expr",
    "bind_states",
    "validate_against_design",
    "violation_obligations",
    "check_trace",
]


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ContractRow:
    when_state: str | None
    when: Expr | None
    then: tuple[tuple[str, Expr], ...]

    def label(self) -> str:
        parts = []
        if self.when_state:
            parts.append(f"state={self.when_state}")
        if self.when is not None:
            parts.append("when")
        tgt = ",".join(s for s, _ in self.then)
        return f"contract[{' '.join(parts) or 'always'} -> {tgt}]"


@dataclass(frozen=True)
class TxCheck:
    signal: str
    relation: str
    value: Expr
    at: int | None = None
    within: int | None = None


@dataclass(frozen=True)
class Transaction:
    name: str
    trigger: Expr
    checks: tuple[TxCheck, ...]


@dataclass
class SpecModel:
    module: str
    contract: list[ContractRow] = field(default_factory=list)
    transactions: list[Transaction] = field(default_factory=list)
    expected_fsm: str | None = None
    state_register: str | None = None
    proof_cycles: int = 32
    source_path: str | None = None

    def content_key(self) -> str:
        """Stable fingerprint of what is being required, for merging."""
        import hashlib

        blob = json.dumps(_spec_to_jsonable(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def expected_fsm_model(self) -> Fsm | None:
        if self.expected_fsm is None:
            return None
        base = os.path.dirname(self.source_path or ".")
        path = os.path.join(base, self.expected_fsm)
        with open(path) as fh:
            kiss = fh.read()
        sidecar = None
        guards = path + ".guards"
        if os.path.exists(guards):
            with open(guards) as fh:
                sidecar = fh.read()
        return parse_kiss2(kiss, sidecar)


_ROW_KEYS = {"when_state", "when", "then"}
_CHECK_KEYS = {"signal", "relation", "value", "at", "within"}
_TX_KEYS = {"name", "trigger", "checks"}
_TOP_KEYS = {"module", "contract", "transactions", "expected_fsm",
             "state_register", "proof_cycles", "description"}


def _parse_spec_expr(text: str, where: str) -> Expr:
    try:
        e = parse_expr(text)
    except Exception as exc:
        raise SpecError(f"{where}: bad expression {text!r}: {exc}") from None
    for sub in _walk(e):
        if sub.kind == "const" and sub.width is None:
            raise SpecError(f"{where}: unsized constant in {text!r}; use forms like 4'd7")
    return e


def _walk(e: Expr):
    yield e
    for a in e.a:
        yield from _walk(a)


def load_spec(path: str) -> SpecModel:
    with open(path) as fh:
        doc = json.load(fh)
    return spec_from_dict(doc, source_path=path)


def spec_from_dict(doc: dict, source_path: str | None = None) -> SpecModel:
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise SpecError(f"unknown spec fields: {sorted(extra)}")
    if "module" not in doc or not isinstance(doc["module"], str):
        raise SpecError("spec needs a 'module' name")
    rows: list[ContractRow] = []
    for i, row in enumerate(doc.get("contract", [])):
        where = f"contract[{i}]"
        extra = set(row) - _ROW_KEYS
        if extra:
            raise SpecError(f"{where}: unknown fields {sorted(extra)}")
        when = row.get("when")
        then = row.get("then")
        if not then:
            raise SpecError(f"{where}: empty 'then'")
        pairs = []
        for j, item in enumerate(then):
            if set(item) != {"signal", "equals"}:
                raise SpecError(f"{where}.then[{j}]: needs exactly signal+equals")
            pairs.append((item["signal"], _parse_spec_expr(item["equals"], where)))
        rows.append(
            ContractRow(
                when_state=row.get("when_state"),
                when=_parse_spec_expr(when, where) if when else None,
                then=tuple(pairs),
            )
        )
    txs: list[Transaction] = []
    for i, tx in enumerate(doc.get("transactions", [])):
        where = f"transactions[{i}]"
        extra = set(tx) - _TX_KEYS
        if extra:
            raise SpecError(f"{where}: unknown fields {sorted(extra)}")
        checks = []
        for j, ck in enumerate(tx.get("checks", [])):
            cw = f"{where}.checks[{j}]"
            extra = set(ck) - _CHECK_KEYS
            if extra:
                raise SpecError(f"{cw}: unknown fields {sorted(extra)}")
            rel = ck.get("relation", "eq")
            if rel not in ("eq", "neq", "ult"):
                raise SpecError(f"{cw}: relation must be eq, neq, or ult")
            at, within = ck.get("at"), ck.get("within")
            if (at is None) == (within is None):
                raise SpecError(f"{cw}: exactly one of 'at' or 'within'")
            if at is not None and (not isinstance(at, int) or at < 0):
                raise SpecError(f"{cw}: 'at' must be a nonnegative integer")
            if within is not None and (not isinstance(within, int) or within < 1):
                raise SpecError(f"{cw}: 'within' must be a positive integer")
            checks.append(
                TxCheck(
                    signal=ck["signal"],
                    relation=rel,
                    value=_parse_spec_expr(ck["value"], cw),
                    at=at,
                    within=within,
                )
            )
        if not checks:
            raise SpecError(f"{where}: no checks")
        txs.append(
            Transaction(
                name=tx.get("name", f"tx{i}"),
                trigger=_parse_spec_expr(tx["trigger"], where),
                checks=tuple(checks),
            )
        )
    pc = doc.get("proof_cycles", 32)
    if not isinstance(pc, int) or pc < 2:
        raise SpecError("proof_cycles must be an integer >= 2")
    return SpecModel(
        module=doc["module"],
        contract=rows,
        transactions=txs,
        expected_fsm=doc.get("expected_fsm"),
        state_register=doc.get("state_register"),
        proof_cycles=pc,
        source_path=source_path,
    )


def _spec_to_jsonable(spec: SpecModel) -> dict:
    from .netlist import expr_to_text

    return {
        "module": spec.module,
        "contract": [
            {
                "when_state": r.when_state,
                "when": expr_to_text(r.when) if r.when is not None else None,
                "then": [(s, expr_to_text(v)) for s, v in r.then],
            }
            for r in spec.contract
        ],
        "transactions": [
            {
                "name": t.name,
                "trigger": expr_to_text(t.trigger),
                "checks": [
                    (c.signal, c.relation, expr_to_text(c.value), c.at, c.within)
                    for c in t.checks
                ],
            }
            for t in spec.transactions
        ],
        "proof_cycles": spec.proof_cycles,
        "state_register": spec.state_register,
    }


# ---------------------------------------------------------------------------
# Binding to a design


def qualify_expr(e: Expr, prefix: str) -> Expr:
    """Prefix every signal reference with an instance path."""
    if e.kind == "ref":
        return Expr("ref", name=f"{prefix}.{e.name}")
    if e.kind == "read":
        return Expr("read", tuple(qualify_expr(a, prefix) for a in e.a), name=f"{prefix}.{e.name}")
    if e.kind == "const":
        return e
    return Expr(
        e.kind,
        tuple(qualify_expr(a, prefix) for a in e.a),
        name=e.name,
        value=e.value,
        width=e.width,
        hi=e.hi,
        lo=e.lo,
    )


@dataclass
class StateBinding:
    reg: str  # qualified state register name
    width: int
    encodings: dict[str, int]

    def test_expr(self, state: str) -> Expr:
        enc = self.encodings.get(state)
        if enc is None:
            raise SpecError(f"spec names unknown state {state!r}")
        return Expr("eq", (Expr("ref", name=self.reg), const(enc, self.width)))


def bind_states(spec: SpecModel, fsms: dict[str, Fsm], prefix: str) -> StateBinding | None:
    """Resolve when_state names against the design's extracted machines."""
    needs = [r.when_state for r in spec.contract if r.when_state]
    if not needs and spec.state_register is None:
        return None
    if spec.state_register is not None:
        want = f"{prefix}.{spec.state_register}"
        fsm = fsms.get(want)
        if fsm is None:
            raise SpecError(f"state_register {spec.state_register!r} is not a state machine")
    else:
        local = [m for name, m in fsms.items() if name.startswith(prefix + ".")]
        if not local:
            raise SpecError(f"no state machine found under {prefix!r}")
        if len(local) > 1:
            raise SpecError(
                f"multiple state machines under {prefix!r}; set state_register"
            )
        fsm = local[0]
    return StateBinding(reg=fsm.reg, width=fsm.width, encodings=dict(fsm.states))


def validate_against_design(
    spec: SpecModel, f: FlatDesign, prefix: str, binding: StateBinding | None
) -> None:
    """Reject specs that mention signals the design does not have."""
    names: set[str] = set()
    for r in spec.contract:
        if r.when is not None:
            names |= comb_support(qualify_expr(r.when, prefix))
        for s, v in r.then:
            names.add(f"{prefix}.{s}")
            names |= comb_support(qualify_expr(v, prefix))
        if r.when_state and binding is None:
            raise SpecError("when_state used but no state machine bound")
    for t in spec.transactions:
        names |= comb_support(qualify_expr(t.trigger, prefix))
        for c in t.checks:
            names.add(f"{prefix}.{c.signal}")
            names |= comb_support(qualify_expr(c.value, prefix))
    missing = sorted(n for n in names if n not in f.signals)
    if missing:
        raise SpecError(f"spec references unknown signals: {missing}")


# ---------------------------------------------------------------------------
# Symbolic obligations


def _row_condition(row: ContractRow, binding, prefix: str) -> Expr | None:
    conds = []
    if row.when_state:
        conds.append(binding.test_expr(row.when_state))
    if row.when is not None:
        conds.append(qualify_expr(row.when, prefix))
    if not conds:
        return None
    out = conds[0]
    for c in conds[1:]:
        out = Expr("and", (out, c))
    return out


def violation_obligations(
    spec: SpecModel,
    u: Unrolling,
    prefix: str,
    binding: StateBinding | None,
) -> list[tuple[str, Term]]:
    """One 1-bit violation term per contract row and transaction.

    A term being satisfiable means the unrolled implementation can break
    that requirement within the horizon. Transaction windows that do not
    fit the horizon are dropped rather than half-checked.
    """
    tb = u.tb
    out: list[tuple[str, Term]] = []
    n = u.n_cycles

    for row in spec.contract:
        cond_e = _row_condition(row, binding, prefix)
        bad_cycles: list[Term] = []
        for k in range(n):
            cond_t = u.expr_at(cond_e, k) if cond_e is not None else tb.const(1, 1)
            if cond_t.op == "const" and cond_t.info == 0:
                continue
            mismatches = []
            for sig, val_e in row.then:
                lhs = u.at(f"{prefix}.{sig}", k)
                rhs = u.expr_at(qualify_expr(val_e, prefix), k)
                mismatches.append(tb.not_(tb.eq(lhs, rhs)))
            bad_cycles.append(tb.and_(cond_t, tb.any_(mismatches)))
        out.append((row.label(), tb.any_(bad_cycles)))

    for tx in spec.transactions:
        trig_e = qualify_expr(tx.trigger, prefix)
        span = max(
            (c.at if c.at is not None else c.within) for c in tx.checks
        )
        bad_cycles = []
        for k in range(n):
            if k + span >= n:
                break
            trig_t = u.expr_at(trig_e, k)
            if trig_t.op == "const" and trig_t.info == 0:
                continue
            fails = []
            for c in tx.checks:
                want = u.expr_at(qualify_expr(c.value, prefix), k)
                if c.at is not None:
                    got = u.at(f"{prefix}.{c.signal}", k + c.at)
                    fails.append(tb.not_(_rel_term(tb, c.relation, got, want)))
                else:
                    hits = []
                    for j in range(1, c.within + 1):
                        got = u.at(f"{prefix}.{c.signal}", k + j)
                        hits.append(_rel_term(tb, c.relation, got, want))
                    fails.append(tb.not_(tb.any_(hits)))
            bad_cycles.append(tb.and_(trig_t, tb.any_(fails)))
        out.append((f"transaction[{tx.name}]", tb.any_(bad_cycles)))

    return out


def _rel_term(tb: TermBuilder, rel: str, a: Term, b: Term) -> Term:
    if rel == "eq":
        return tb.eq(a, b)
    if rel == "neq":
        return tb.not_(tb.eq(a, b))
    return tb.ult(a, b)


# ---------------------------------------------------------------------------
# Concrete trace checking


def _rel_bits(rel: str, a: Bits, b: Bits) -> bool:
    if rel == "eq":
        return a.val == b.val
    if rel == "neq":
        return a.val != b.val
    return a.val < b.val


def check_trace(
    spec: SpecModel,
    trace: Trace,
    prefix: str,
    binding: StateBinding | None,
) -> tuple[list[str], list[str]]:
    """Evaluate the spec over a concrete trace.

    Returns (violations, unknowns): violations are definite breakages with
    both sides fully known; unknowns are places the trace had X where the
    spec needed a value, or windows running off the end of the trace.
    """
    violations: list[str] = []
    unknowns: list[str] = []
    end = trace.end_cycle

    for row in spec.contract:
        cond_e = _row_condition(row, binding, prefix)
        for k in range(end + 1):
            if cond_e is not None:
                c = eval_expr_on_trace(cond_e, trace, k)
                if not c.is_known():
                    unknowns.append(f"{row.label()} @ {k}: condition unknown")
                    continue
                if c.to_int() == 0:
                    continue
            for sig, val_e in row.then:
                got = trace.value_at(f"{prefix}.{sig}", k)
                want = eval_expr_on_trace(qualify_expr(val_e, prefix), trace, k)
                if not (got.is_known() and want.is_known()):
                    unknowns.append(f"{row.label()} @ {k}: {sig} unknown")
                elif got.val != want.val:
                    violations.append(
                        f"{row.label()} @ {k}: {sig} is {got} wanted {want}"
                    )

    for tx in spec.transactions:
        trig_e = qualify_expr(tx.trigger, prefix)
        span = max((c.at if c.at is not None else c.within) for c in tx.checks)
        for k in range(end + 1):
            t = eval_expr_on_trace(trig_e, trace, k)
            if not t.is_known():
                unknowns.append(f"transaction[{tx.name}] @ {k}: trigger unknown")
                continue
            if t.to_int() == 0:
                continue
            if k + span > end:
                unknowns.append(f"transaction[{tx.name}] @ {k}: window truncated")
                continue
            for c in tx.checks:
                want = eval_expr_on_trace(qualify_expr(c.value, prefix), trace, k)
                if not want.is_known():
                    unknowns.append(f"transaction[{tx.name}] @ {k}: value unknown")
                    continue
                if c.at is not None:
                    got = trace.value_at(f"{prefix}.{c.signal}", k + c.at)
                    if not got.is_known():
                        unknowns.append(
                            f"transaction[{tx.name}] @ {k}: {c.signal}@+{c.at} unknown"
                        )
                    elif not _rel_bits(c.relation, got, want):
                        violations.append(
                            f"transaction[{tx.name}] @ {k}: {c.signal}@+{c.at} "
                            f"is {got} wanted {c.relation} {want}"
                        )
                else:
                    hit = False
                    saw_x = False
                    for j in range(1, c.within + 1):
                        got = trace.value_at(f"{prefix}.{c.signal}", k + j)
                        if not got.is_known():
                            saw_x = True
                            continue
                        if _rel_bits(c.relation, got, want):
                            hit = True
                            break
                    if not hit:
                        if saw_x:
                            unknowns.append(
                                f"transaction[{tx.name}] @ {k}: {c.signal} window unknown"
                            )
                        else:
                            violations.append(
                                f"transaction[{tx.name}] @ {k}: {c.signal} never "
                                f"{c.relation} {want} within {c.within}"
                            )
    return violations, unknowns
