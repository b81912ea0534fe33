"""Desk-scale demonstration SoC: CPU + ROM + UART + traffic light controller.

The system is small enough to simulate and prove in seconds but has the
shape of the real problem: firmware in a ROM drives memory-mapped-style
peripheral controls, a serial port with a 9-state frame engine, and a
5-state traffic light controller whose lamp patterns double as the state
encodings.

CPU instruction set (16-bit words, opcode in [15:8], immediate in [7:0]):

    00 HALT          stay in EXEC forever
    01 TXB  imm      send byte imm over the UART, wait for completion
    02 WAITRX        wait for a received byte, store it to scratch
    03 CFG0 imm      traffic light green duration := imm
    04 CFG1 imm      traffic light yellow duration := imm
    05 REQS          raise the side-street request line (level, sticky)
    06 REQW          raise the pedestrian request line (level, sticky)
    07 WAIT imm      busy-wait imm+1 execute cycles
    08 SETU imm      UART spare config := imm
    09 STM  imm      store imm to scratch[sp++]

Every instruction takes a FETCH / LOAD / EXEC round trip through the
registered ROM; TXB, WAITRX and WAIT stretch EXEC until their condition
clears.

Four firmware scenarios ship with the design: s1_send transmits
"request()\\r\\n", s2_recv waits for one byte from the serial line,
s3_side reconfigures the light timings and requests the side street,
s4_walk requests a pedestrian crossing. s3 also exists in a deliberately
buggy build where the CFG0/CFG1 operands are swapped, so yellow runs for
the duration meant for green.
"""

from __future__ import annotations

import json
import os

from ..fsmkit import extract_fsms, write_kiss2
from ..netlist import Netlist, flatten, parse_netlist
from ..sim import Scenario

# Serial timing: two clock cycles per baud step, with the divider held at
# zero while idle so every frame leaves the start state phase-aligned.
BAUD = 2

SOC_HNL = """\
module uart
  input tx_start:1
  input tx_data:8
  input rx:1
  input spare_cfg:8
  output tx:1
  output tx_busy:1
  output rx_valid:1
  output rx_byte:8
  reg state:4 reset=0
  reg divcnt:1 reset=0
  reg shf:8 reset=0
  reg bitcnt:3 reset=0
  reg rshf:8 reset=0
  reg scratch_q:8 reset=0
  fsm state { A=0, B=1, C=2, D=3, E=4, F=5, G=6, H=7, I=8 }
  wire in_a:1
  wire tick:1
  assign in_a = (eq state 4'd0)
  assign tick = (and (not in_a) divcnt)
  assign tx = (mux (eq state 4'd2) 1'd0 (mux (eq state 4'd3) (extract 0 0 shf) 1'd1))
  assign tx_busy = (not in_a)
  assign rx_valid = (eq state 4'd8)
  assign rx_byte = rshf
  next divcnt = (mux in_a 1'd0 (not divcnt))
  next state = (mux (eq state 4'd0) (mux tx_start 4'd1 (mux rx 4'd0 4'd6)) (mux (eq state 4'd5) 4'd0 (mux (not tick) state (mux (eq state 4'd1) 4'd2 (mux (eq state 4'd2) 4'd3 (mux (eq state 4'd3) (mux (eq bitcnt 3'd7) 4'd4 4'd3) (mux (eq state 4'd4) 4'd5 (mux (eq state 4'd6) 4'd7 (mux (eq state 4'd7) (mux (eq bitcnt 3'd7) 4'd8 4'd7) (mux (eq state 4'd8) 4'd0 state))))))))))
  next shf = (mux (and (eq state 4'd0) tx_start) tx_data (mux (and (eq state 4'd3) tick) (concat 1'd0 (extract 7 1 shf)) shf))
  next bitcnt = (mux (eq state 4'd0) 3'd0 (mux (and tick (or (eq state 4'd3) (eq state 4'd7))) (add bitcnt 3'd1) bitcnt))
  next rshf = (mux (and (eq state 4'd7) tick) (concat rx (extract 7 1 rshf)) rshf)
  next scratch_q = spare_cfg

endmodule

module tlc
  input go:1
  input walk:1
  input cfg_green:8
  input cfg_yellow:8
  input sense:1
  output led:7
  output sq:1
  reg state:7 reset=24
  reg timer:8 reset=0
  reg sense_q:1 reset=0
  fsm state { MAINGRN=24, MAINYEL=40, SIDEGRN=66, SIDEYEL=68, WALKALL=73 }
  wire req:1
  wire tz:1
  assign req = (or go walk)
  assign tz = (eq timer 8'd0)
  assign led = (mux (eq state 7'd24) 7'd24 (mux (eq state 7'd40) 7'd40 (mux (eq state 7'd66) 7'd66 (mux (eq state 7'd68) 7'd68 7'd73))))
  assign sq = sense_q
  next sense_q = sense
  next state = (mux (eq state 7'd24) (mux req 7'd40 7'd24) (mux tz (mux (eq state 7'd40) (mux walk 7'd73 7'd66) (mux (eq state 7'd66) 7'd68 (mux (eq state 7'd68) 7'd24 (mux (eq state 7'd73) 7'd24 state)))) state))
  next timer = (mux (eq state 7'd24) (mux req cfg_yellow 8'd0) (mux tz (mux (eq state 7'd40) cfg_green (mux (eq state 7'd66) cfg_yellow 8'd0)) (sub timer 8'd1)))

endmodule

module rom
  input addr:8
  output data:16
  mem table width=16 depth=256
  reg rdata:16 reset=0
  next rdata = (read table addr)
  assign data = rdata

endmodule

module cpu
  input rom_data:16
  input tx_busy:1
  input rx_valid:1
  input rx_byte:8
  output rom_addr:8
  output tx_start:1
  output tx_data:8
  output go:1
  output walk:1
  output cfg_green:8
  output cfg_yellow:8
  output ucfg:8
  reg pc:8 reset=0
  reg ir:16 reset=0
  reg phase:2 reset=0
  reg started:1 reset=0
  reg wcnt:8 reset=0
  reg cg_r:8 reset=12
  reg cy_r:8 reset=3
  reg go_r:1 reset=0
  reg wk_r:1 reset=0
  reg ucfg_r:8 reset=0
  reg sp:4 reset=0
  mem scratch width=8 depth=16
  fsm phase { FETCH=0, LOAD=1, EXEC=2 }
  wire op:8
  wire imm:8
  wire in_exec:1
  wire txp:1
  wire txdone:1
  wire adv:1
  wire st_en:1
  wire st_data:8
  assign op = (extract 15 8 ir)
  assign imm = (extract 7 0 ir)
  assign in_exec = (eq phase 2'd2)
  assign txp = (and in_exec (and (eq op 8'd1) (and (not started) (not tx_busy))))
  assign txdone = (and in_exec (and (eq op 8'd1) (and started (not tx_busy))))
  assign adv = (and in_exec (mux (eq op 8'd0) 1'd0 (mux (eq op 8'd1) txdone (mux (eq op 8'd2) rx_valid (mux (eq op 8'd7) (eq wcnt imm) 1'd1)))))
  assign st_en = (and adv (or (eq op 8'd9) (eq op 8'd2)))
  assign st_data = (mux (eq op 8'd2) rx_byte imm)
  next phase = (mux (eq phase 2'd0) 2'd1 (mux (eq phase 2'd1) 2'd2 (mux adv 2'd0 2'd2)))
  next pc = (mux adv (add pc 8'd1) pc)
  next ir = (mux (eq phase 2'd1) rom_data ir)
  next started = (mux txp 1'd1 (mux txdone 1'd0 started))
  next wcnt = (mux (and in_exec (eq op 8'd7)) (mux (eq wcnt imm) 8'd0 (add wcnt 8'd1)) 8'd0)
  next cg_r = (mux (and adv (eq op 8'd3)) imm cg_r)
  next cy_r = (mux (and adv (eq op 8'd4)) imm cy_r)
  next go_r = (mux (and adv (eq op 8'd5)) 1'd1 go_r)
  next wk_r = (mux (and adv (eq op 8'd6)) 1'd1 wk_r)
  next ucfg_r = (mux (and adv (eq op 8'd8)) imm ucfg_r)
  next sp = (mux st_en (add sp 4'd1) sp)
  write scratch addr=sp data=st_data en=st_en
  assign rom_addr = pc
  assign tx_start = txp
  assign tx_data = imm
  assign go = go_r
  assign walk = wk_r
  assign cfg_green = cg_r
  assign cfg_yellow = cy_r
  assign ucfg = ucfg_r

endmodule

module soc
  input rx:1
  input ext_sense:1
  output tx:1
  output led:7
  output status:2
  wire f_addr:8
  wire f_data:16
  wire c_txs:1
  wire c_txd:8
  wire c_go:1
  wire c_walk:1
  wire c_cg:8
  wire c_cy:8
  wire c_ucfg:8
  wire u_tx:1
  wire u_busy:1
  wire u_valid:1
  wire u_byte:8
  wire t_led:7
  wire t_sq:1
  inst cpu0 of cpu (rom_data=f_data, tx_busy=u_busy, rx_valid=u_valid, rx_byte=u_byte, rom_addr=f_addr, tx_start=c_txs, tx_data=c_txd, go=c_go, walk=c_walk, cfg_green=c_cg, cfg_yellow=c_cy, ucfg=c_ucfg)
  inst rom0 of rom (addr=f_addr, data=f_data)
  inst u0 of uart (tx_start=c_txs, tx_data=c_txd, rx=rx, spare_cfg=c_ucfg, tx=u_tx, tx_busy=u_busy, rx_valid=u_valid, rx_byte=u_byte)
  inst t0 of tlc (go=c_go, walk=c_walk, cfg_green=c_cg, cfg_yellow=c_cy, sense=ext_sense, led=t_led, sq=t_sq)
  assign tx = u_tx
  assign led = t_led
  assign status = (concat u_valid t_sq)
endmodule
"""

ISA: dict[str, int] = {
    "HALT": 0x00,
    "TXB": 0x01,
    "WAITRX": 0x02,
    "CFG0": 0x03,
    "CFG1": 0x04,
    "REQS": 0x05,
    "REQW": 0x06,
    "WAIT": 0x07,
    "SETU": 0x08,
    "STM": 0x09,
}

MESSAGE = "request()\r\n"


def build_netlist() -> Netlist:
    return parse_netlist(SOC_HNL)


def assemble(program: list[tuple[str, int]]) -> list[int]:
    """Encode (mnemonic, immediate) pairs into 16-bit ROM words."""
    words: list[int] = []
    for mn, imm in program:
        if mn not in ISA:
            raise ValueError(f"unknown mnemonic {mn!r}")
        if not 0 <= imm <= 0xFF:
            raise ValueError(f"{mn}: immediate {imm} out of range")
        words.append((ISA[mn] << 8) | imm)
    return words


def program(name: str, *, bug: bool = False) -> list[tuple[str, int]]:
    """Firmware for one scenario. bug=True swaps the CFG0/CFG1 operands
    of s3_side, handing the green duration to yellow and vice versa."""
    if name == "s1_send":
        prog = [("CFG0", 9), ("STM", ord("r"))]
        prog += [("TXB", ord(ch)) for ch in MESSAGE]
        return prog + [("HALT", 0)]
    if name == "s2_recv":
        return [("WAITRX", 0), ("HALT", 0)]
    if name == "s3_side":
        g, y = (2, 6) if bug else (6, 2)
        return [("SETU", 5), ("CFG0", g), ("CFG1", y), ("REQS", 0), ("HALT", 0)]
    if name == "s4_walk":
        return [("WAIT", 3), ("REQW", 0), ("HALT", 0)]
    raise ValueError(f"unknown scenario {name!r}")


def rom_image_text(words: list[int], title: str) -> str:
    lines = [f"# {title}", ""]
    lines += [f"{w:04x}" for w in words]
    return "\n".join(lines) + "\n"


def _rx_frame_stimulus(byte: int, start: int) -> list[list[object]]:
    """Drive one serial frame on soc.rx: start bit low at `start`, data
    bits LSB-first half a baud ahead of each sample point, stop bit high."""
    stim: list[list[object]] = [[start, "soc.rx", 0]]
    for j in range(8):
        stim.append([start + 3 + BAUD * j, "soc.rx", (byte >> j) & 1])
    stim.append([start + 3 + BAUD * 8, "soc.rx", 1])
    return stim


# Trace anchors below are frozen from the instruction timing: three cycles
# per instruction, 3 + 24i cycles into a TXB frame for serial edge i, and
# yellow/green phases lasting duration+1 cycles (the timer counts D..0).
def scenario_docs() -> dict[str, dict]:
    """Scenario JSON documents keyed by name, with fixture-relative paths."""
    rx_byte = 0xA5
    docs: dict[str, dict] = {
        "s1_send": {
            "name": "s1_send",
            "run_cycles": 320,
            "firmware": {"soc.rom0.table": "../roms/s1_send.hex"},
            "stimulus": [[0, "soc.rx", 1]],
            "expected": [
                [11, "soc.tx", 0],
                [15, "soc.tx", 1],
                [302, "soc.u0.tx_busy", 0],
                [319, "soc.t0.state", 24],
                [319, "soc.cpu0.phase", 2],
            ],
            "spec_ref": ["../specs/uart.json", "../specs/tlc.json"],
            "tau": 5,
        },
        "s2_recv": {
            "name": "s2_recv",
            "run_cycles": 60,
            "firmware": {"soc.rom0.table": "../roms/s2_recv.hex"},
            "stimulus": [[0, "soc.rx", 1]] + _rx_frame_stimulus(rx_byte, 6),
            "expected": [
                [25, "soc.u0.rx_valid", 1],
                [25, "soc.u0.rx_byte", rx_byte],
                [30, "soc.cpu0.sp", 1],
                [59, "soc.t0.state", 24],
            ],
            "spec_ref": ["../specs/uart.json", "../specs/tlc.json"],
            "tau": 5,
        },
        "s3_side": {
            "name": "s3_side",
            "run_cycles": 48,
            "firmware": {"soc.rom0.table": "../roms/s3_side.hex"},
            "stimulus": [[0, "soc.rx", 1]],
            "expected": [
                [10, "soc.u0.scratch_q", 5],
                [16, "soc.t0.state", 66],
                [17, "soc.led", 66],
                [23, "soc.t0.state", 68],
                [26, "soc.t0.state", 24],
            ],
            "spec_ref": ["../specs/uart.json", "../specs/tlc.json"],
            "tau": 5,
        },
        "s4_walk": {
            "name": "s4_walk",
            "run_cycles": 56,
            "firmware": {"soc.rom0.table": "../roms/s4_walk.hex"},
            "stimulus": [[0, "soc.rx", 1]],
            "expected": [
                [14, "soc.t0.state", 73],
                [15, "soc.led", 73],
                [27, "soc.t0.state", 24],
            ],
            "spec_ref": ["../specs/uart.json", "../specs/tlc.json"],
            "tau": 5,
        },
    }
    return docs


def bug_scenario_doc() -> dict:
    """s3 rerun against the swapped-operand firmware build."""
    doc = {
        "name": "s3_side_bug",
        "run_cycles": 48,
        "firmware": {"soc.rom0.table": "../roms/s3_side_bug.hex"},
        "stimulus": [[0, "soc.rx", 1]],
        # The swapped build still drives the light around the loop; only
        # the phase durations are wrong, which the spec catches.
        "expected": [
            [13, "soc.t0.state", 40],
            [20, "soc.t0.state", 66],
        ],
        "spec_ref": ["../specs/uart.json", "../specs/tlc.json"],
        "tau": 5,
    }
    return doc


def uart_spec_doc() -> dict:
    """Serial port spec: state/line identities plus the byte frame.

    Frame timing from a trigger in the idle state: the start bit hits the
    line after one state hop plus one baud period (3 cycles), data bit j
    follows at 5+2j, the stop bit at 21, and the engine is idle again at
    24. The data-bit checks read tx_data at trigger time, so the proof is
    over the latched byte, not a particular firmware constant.
    """
    checks = [
        {"signal": "tx_busy", "value": "1'd1", "at": 1},
        {"signal": "tx", "value": "1'd0", "at": 1 + BAUD},
    ]
    for j in range(8):
        checks.append(
            {"signal": "tx", "value": f"(extract {j} {j} tx_data)", "at": 3 + BAUD * (j + 1)}
        )
    checks.append({"signal": "tx", "value": "1'd1", "at": 3 + BAUD * 9})
    checks.append({"signal": "tx_busy", "value": "1'd0", "at": 24})
    return {
        "module": "uart",
        "description": "serial frame engine: 8N1 at two cycles per baud",
        "state_register": "state",
        "expected_fsm": "uart_expected.kiss2",
        "proof_cycles": 30,
        "contract": [
            {"when_state": "A", "then": [
                {"signal": "tx", "equals": "1'd1"},
                {"signal": "tx_busy", "equals": "1'd0"},
            ]},
            {"when_state": "C", "then": [{"signal": "tx", "equals": "1'd0"}]},
            {"when_state": "E", "then": [{"signal": "tx", "equals": "1'd1"}]},
            {"when_state": "I", "then": [{"signal": "rx_valid", "equals": "1'd1"}]},
            {"when": "(not (eq state 4'd8))", "then": [{"signal": "rx_valid", "equals": "1'd0"}]},
        ],
        "transactions": [
            {"name": "byte_frame",
             "trigger": "(and (eq state 4'd0) (eq tx_start 1'd1))",
             "checks": checks},
        ],
    }


def tlc_spec_doc() -> dict:
    """Traffic light spec: lamp decode per state plus bounded responses."""
    rows = [
        {"when_state": name, "then": [{"signal": "led", "equals": f"7'd{enc}"}]}
        for name, enc in (
            ("MAINGRN", 24), ("MAINYEL", 40), ("SIDEGRN", 66),
            ("SIDEYEL", 68), ("WALKALL", 73),
        )
    ]
    return {
        "module": "tlc",
        "description": "five-phase intersection controller",
        "state_register": "state",
        "expected_fsm": "tlc_expected.kiss2",
        "proof_cycles": 40,
        "contract": rows,
        "transactions": [
            # Yellow must clear within 5 cycles; a sane yellow duration is
            # at most 4 since a phase lasts duration+1 cycles.
            {"name": "yellow_bounded",
             "trigger": "(eq state 7'd40)",
             "checks": [{"signal": "state", "relation": "neq", "value": "7'd40", "within": 5}]},
            {"name": "side_green_grant",
             "trigger": "(and (eq state 7'd24) (and (eq go 1'd1) (not walk)))",
             "checks": [{"signal": "state", "value": "7'd66", "within": 12}]},
            {"name": "walk_grant",
             "trigger": "(and (eq state 7'd24) (eq walk 1'd1))",
             "checks": [{"signal": "state", "value": "7'd73", "within": 12}]},
        ],
    }


GOOD_SCENARIOS = ("s1_send", "s2_recv", "s3_side", "s4_walk")
ALL_SCENARIOS = GOOD_SCENARIOS + ("s3_side_bug",)


def write_fixture_tree(
    root: str, *, scenarios: tuple[str, ...] = GOOD_SCENARIOS
) -> dict[str, object]:
    """Materialize the whole fixture under `root`.

    Layout: design.hnl, roms/*.hex, scenarios/*.json, specs/*.json plus
    the expected-FSM KISS2 files extracted from the clean modules.
    `scenarios` picks which test cases (and their ROMs) land in the tree:
    the default is the four clean ones; swap in "s3_side_bug" to build the
    tree with the swapped-operand firmware. Returns the written paths.
    """
    unknown = set(scenarios) - set(ALL_SCENARIOS)
    if unknown:
        raise ValueError(f"unknown scenarios {sorted(unknown)}")
    os.makedirs(os.path.join(root, "roms"), exist_ok=True)
    os.makedirs(os.path.join(root, "scenarios"), exist_ok=True)
    os.makedirs(os.path.join(root, "specs"), exist_ok=True)

    design_path = os.path.join(root, "design.hnl")
    with open(design_path, "w", encoding="utf-8") as fh:
        fh.write(SOC_HNL)

    rom_paths: dict[str, str] = {}
    for name in scenarios:
        p = os.path.join(root, "roms", f"{name}.hex")
        if name == "s3_side_bug":
            words = assemble(program("s3_side", bug=True))
            comment = "s3_side firmware, CFG0/CFG1 operands swapped"
        else:
            words = assemble(program(name))
            comment = f"{name} firmware"
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(rom_image_text(words, comment))
        rom_paths[name] = p

    scenario_paths: dict[str, str] = {}
    docs = scenario_docs()
    docs["s3_side_bug"] = bug_scenario_doc()
    docs = {name: docs[name] for name in scenarios}
    for name, doc in docs.items():
        p = os.path.join(root, "scenarios", f"{name}.json")
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        scenario_paths[name] = p

    net = build_netlist()
    spec_paths: dict[str, str] = {}
    for mod, doc in (("uart", uart_spec_doc()), ("tlc", tlc_spec_doc())):
        p = os.path.join(root, "specs", f"{mod}.json")
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        spec_paths[mod] = p
        fproj = flatten(net, top=mod)
        fsm = extract_fsms(fproj)[f"{mod}.state"]
        kiss, sidecar = write_kiss2(fsm)
        kp = os.path.join(root, "specs", doc["expected_fsm"])
        with open(kp, "w", encoding="utf-8") as fh:
            fh.write(kiss)
        with open(kp + ".guards", "w", encoding="utf-8") as fh:
            fh.write(sidecar)

    return {
        "design": design_path,
        "roms": rom_paths,
        "scenarios": scenario_paths,
        "specs": spec_paths,
    }
