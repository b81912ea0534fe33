"""Concrete cycle-accurate simulation of flattened designs.

Two-phase synchronous semantics: all combinational assignments evaluate in
topological order, then registers and memory write ports commit together.
One global active-high synchronous reset initializes every register to its
declared value at cycle 0; memory images load at reset. Undriven top-level
inputs read as X until a stimulus drives them, and a driven value holds
until the next stimulus event on the same pin.

A scenario bundles firmware images, input stimulus, a cycle budget, and
trace checks. run_scenario simulates, dumps every signal every cycle into a
Trace, and rejects the scenario if any expected trace check fails, so broken
test setups stop the pipeline before any formal work builds on them.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

from ._stepper_py import PyStepper
from ._tape import Tape, compile_tape
from .netlist import FlatDesign, HnlError, load_memory_image
from .trace import Bits, Trace

__all__ = [
    "Scenario",
    "ScenarioError",
    "SimState",
    "backend_name",
    "make_stepper",
    "reset",
    "step",
    "run_scenario",
    "load_scenario",
    "save_scenario",
    "parse_value",
]

_COMPILED = None
try:  # compiled kernel is optional; absence is not an error
    from . import _stepper_cy as _COMPILED  # type: ignore
except ImportError:
    _COMPILED = None


def backend_name(tape: Tape | None = None) -> str:
    if _COMPILED is not None and (tape is None or tape.fits_machine_words()):
        return "compiled"
    return "pure-python"


def make_stepper(tape: Tape, force: str | None = None):
    """Pick the stepper backend for a tape.

    The compiled kernel handles designs whose widths all fit machine words;
    anything wider falls back to the pure interpreter. `force` pins one
    backend ("pure" or "compiled") for benchmarks and differential tests.
    """
    if force == "pure":
        return PyStepper(tape)
    if force == "compiled":
        if _COMPILED is None:
            raise RuntimeError("compiled stepper kernel is not built")
        if not tape.fits_machine_words():
            raise RuntimeError("design widths exceed the compiled kernel's 64-bit words")
        return _COMPILED.CyStepper(tape)
    if _COMPILED is not None and tape.fits_machine_words():
        return _COMPILED.CyStepper(tape)
    return PyStepper(tape)


class ScenarioError(ValueError):
    pass


_VALUE_RE = re.compile(r"^(\d+)'([hbd])([0-9a-fA-F_]+)$")


def parse_value(text, width: int) -> Bits:
    """Parse a stimulus or check value: int, "W'hXX" constant, or "b0x1z"."""
    if isinstance(text, int):
        return Bits.from_int(text, width)
    text = str(text).strip()
    m = _VALUE_RE.match(text)
    if m:
        w = int(m.group(1))
        if w != width:
            raise ScenarioError(f"value {text!r} width {w} does not match signal width {width}")
        base = {"h": 16, "b": 2, "d": 10}[m.group(2)]
        return Bits.from_int(int(m.group(3).replace("_", ""), base), width)
    if text.startswith("b"):
        v = Bits.from_str(text[1:])
        if v.width != width:
            raise ScenarioError(f"value {text!r} width {v.width} does not match {width}")
        return v
    if text.isdigit():
        return Bits.from_int(int(text), width)
    raise ScenarioError(f"cannot parse value {text!r}")


@dataclass
class Scenario:
    """One firmware-driven test case.

    stimulus entries are (cycle, input, value). expected entries are
    (cycle, signal, value) checks evaluated against the finished trace.
    spec_refs lists the declarative spec files this scenario verifies
    against; tau is the hint-generation activity threshold.
    """

    name: str
    run_cycles: int
    firmware: dict[str, str] = field(default_factory=dict)
    stimulus: list[tuple[int, str, object]] = field(default_factory=list)
    expected: list[tuple[int, str, object]] = field(default_factory=list)
    spec_refs: list[str] = field(default_factory=list)
    tau: int = 5

    def validate(self):
        if self.run_cycles <= 0:
            raise ScenarioError(f"{self.name}: run_cycles must be positive")
        if self.tau < 2:
            raise ScenarioError(f"{self.name}: tau must be at least 2")


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {"name", "run_cycles", "firmware", "stimulus", "expected", "spec_ref", "tau"}
    extra = set(raw) - known
    if extra:
        raise ScenarioError(f"{path}: unknown scenario fields {sorted(extra)}")
    spec_ref = raw.get("spec_ref", [])
    if isinstance(spec_ref, str):
        spec_ref = [spec_ref]
    sc = Scenario(
        name=raw["name"],
        run_cycles=int(raw["run_cycles"]),
        firmware=dict(raw.get("firmware", {})),
        stimulus=[(int(c), str(s), v) for c, s, v in raw.get("stimulus", [])],
        expected=[(int(c), str(s), v) for c, s, v in raw.get("expected", [])],
        spec_refs=[str(p) for p in spec_ref],
        tau=int(raw.get("tau", 5)),
    )
    sc.validate()
    return sc


def resolve_firmware_paths(sc: Scenario, base: str) -> Scenario:
    """Rewrite a scenario's relative firmware paths against `base`.

    Scenario files reference ROM images relative to their own location;
    call this with the scenario file's directory before simulating.
    """
    fw = {
        mem: path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))
        for mem, path in sc.firmware.items()
    }
    return Scenario(
        name=sc.name,
        run_cycles=sc.run_cycles,
        firmware=fw,
        stimulus=list(sc.stimulus),
        expected=list(sc.expected),
        spec_refs=list(sc.spec_refs),
        tau=sc.tau,
    )


def save_scenario(sc: Scenario, path: str) -> None:
    doc = {
        "name": sc.name,
        "run_cycles": sc.run_cycles,
        "firmware": dict(sorted(sc.firmware.items())),
        "stimulus": [[c, s, v] for c, s, v in sc.stimulus],
        "expected": [[c, s, v] for c, s, v in sc.expected],
        "spec_ref": list(sc.spec_refs),
        "tau": sc.tau,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


class SimState:
    """A design plus its stepper, positioned at some cycle."""

    def __init__(self, design: FlatDesign, tape: Tape | None = None, backend: str | None = None):
        self.design = design
        self.tape = tape if tape is not None else compile_tape(design)
        self.stepper = make_stepper(self.tape, force=backend)
        self.cycle = 0

    def value(self, name: str) -> Bits:
        slot = self.tape.slot_of[name]
        v, x = self.stepper.read(slot)
        return Bits(self.design.signals[name], val=v, xmask=x)

    def drive(self, name: str, value: Bits):
        if name not in self.tape.input_slots:
            raise ScenarioError(f"{name} is not a top-level input")
        if value.zmask:
            raise ScenarioError(f"{name}: cannot drive Z")
        self.stepper.set_input(self.tape.input_slots[name], value.val, value.xmask)

    def load_firmware(self, mem_name: str, path: str):
        if mem_name not in self.tape.mem_index:
            raise ScenarioError(f"unknown memory {mem_name!r}")
        m = self.design.mems[mem_name]
        words = load_memory_image(path, m.width, m.depth)
        self.stepper.load_mem(self.tape.mem_index[mem_name], words)


def reset(design_or_state, backend: str | None = None) -> SimState:
    """Fresh SimState at cycle 0 with registers at reset values."""
    if isinstance(design_or_state, SimState):
        st = design_or_state
    else:
        st = SimState(design_or_state, backend=backend)
    st.stepper.reset()
    st.cycle = 0
    for mem_name, m in st.design.mems.items():
        if m.image is not None:
            st.load_firmware(mem_name, m.image)
    st.stepper.eval_comb()
    return st


def step(st: SimState) -> None:
    """Commit the current cycle and evaluate the next one."""
    st.stepper.commit()
    st.cycle += 1
    st.stepper.eval_comb()


def _dump_all(st: SimState, trace: Trace) -> None:
    for name in trace.signals:
        trace.record(st.cycle, name, st.value(name))


def run_scenario(design: FlatDesign, sc: Scenario, backend: str | None = None) -> tuple[Trace, SimState]:
    """Simulate a scenario and return its full trace.

    Raises ScenarioError when an expected trace check fails: a scenario that
    cannot even reproduce its own expectations must not feed hint generation.
    """
    sc.validate()
    st = SimState(design, backend=backend)
    st.stepper.reset()
    st.cycle = 0
    for mem_name, m in design.mems.items():
        if m.image is not None:
            st.load_firmware(mem_name, m.image)
    for mem_name, path in sorted(sc.firmware.items()):
        st.load_firmware(mem_name, path)

    stim: dict[int, list[tuple[str, Bits]]] = {}
    for cycle, name, value in sc.stimulus:
        if name not in design.signals:
            raise ScenarioError(f"{sc.name}: stimulus on unknown signal {name!r}")
        if cycle < 0 or cycle >= sc.run_cycles:
            raise ScenarioError(f"{sc.name}: stimulus cycle {cycle} outside the run")
        stim.setdefault(cycle, []).append((name, parse_value(value, design.signals[name])))

    trace = Trace(signals=dict(design.signals), regs=set(design.regs))
    trace.end_cycle = sc.run_cycles - 1

    for cycle in range(sc.run_cycles):
        for name, value in stim.get(cycle, ()):
            st.drive(name, value)
        st.stepper.eval_comb()
        _dump_all(st, trace)
        if cycle != sc.run_cycles - 1:
            st.stepper.commit()
            st.cycle += 1

    failures = []
    for cycle, name, value in sc.expected:
        if name not in design.signals:
            raise ScenarioError(f"{sc.name}: expected check on unknown signal {name!r}")
        want = parse_value(value, design.signals[name])
        got = trace.value_at(name, cycle)
        if got != want:
            failures.append(f"cycle {cycle}: {name} = {got} wanted {want}")
    if failures:
        raise ScenarioError(f"{sc.name}: trace checks failed: " + "; ".join(failures))
    return trace, st


def run_free(design: FlatDesign, cycles: int, drive=None, backend: str | None = None) -> Trace:
    """Simulate without a scenario file; drive maps cycle -> {input: Bits}."""
    st = reset(design, backend=backend)
    trace = Trace(signals=dict(design.signals), regs=set(design.regs))
    trace.end_cycle = cycles - 1
    for cycle in range(cycles):
        if drive and cycle in drive:
            for name, value in drive[cycle].items():
                st.drive(name, value)
        st.stepper.eval_comb()
        _dump_all(st, trace)
        if cycle != cycles - 1:
            st.stepper.commit()
            st.cycle += 1
    return trace
