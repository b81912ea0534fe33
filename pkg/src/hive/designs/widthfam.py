"""Width-parameterized shift-add multiplier for hinted-vs-unhinted scaling.

mulcheck(W) latches a key operand on `strobe`, then a `start` pulse runs a
W-step shift-add multiply of the live `a` input against the latched key.
The spec's transaction compares the result against a word-level `mul` of
the trigger-time operands, so an unhinted proof has to establish that two
structurally different W-bit multipliers agree - which is exactly the kind
of obligation that blows up with width. The scenario pins the key through
a strobe, so the generated Concretize hint turns the same obligation into
multiply-by-constant.
"""

from __future__ import annotations

from ..netlist import Netlist, parse_netlist

# Operand patterns; masked to the width, forced odd so the product is
# never trivially zero.
A_PATTERN = 0x6D6D6D6D
KEY_PATTERN = 0xB5B5B5B5


def mulcheck_hnl(width: int) -> str:
    if width < 2:
        raise ValueError("width must be at least 2")
    w = width
    cw = max(2, (w).bit_length())  # counter must hold 0..w-1
    return f"""\
module mulcheck
  input a:{w}
  input key:{w}
  input strobe:1
  input start:1
  output out:{w}
  output done:1
  reg key_sv:{w} reset=0
  reg acc:{w} reset=0
  reg asr:{w} reset=0
  reg keyr:{w} reset=0
  reg cnt:{cw} reset=0
  reg busy:1 reset=0
  reg done_r:1 reset=0
  wire kick:1
  wire last:1
  assign kick = (and start (not busy))
  assign last = (and busy (eq cnt {cw}'d{w - 1}))
  next key_sv = (mux strobe key key_sv)
  next acc = (mux kick {w}'d0 (mux (and busy (extract 0 0 keyr)) (add acc asr) acc))
  next asr = (mux kick a (mux busy (concat (extract {w - 2} 0 asr) 1'd0) asr))
  next keyr = (mux kick key_sv (mux busy (concat 1'd0 (extract {w - 1} 1 keyr)) keyr))
  next cnt = (mux kick {cw}'d0 (mux busy (add cnt {cw}'d1) cnt))
  next busy = (mux kick 1'd1 (mux last 1'd0 busy))
  next done_r = (mux kick 1'd0 (mux last 1'd1 done_r))
  assign out = acc
  assign done = done_r
endmodule
"""


def build(width: int) -> Netlist:
    return parse_netlist(mulcheck_hnl(width))


def operands(width: int) -> tuple[int, int]:
    mask = (1 << width) - 1
    return (A_PATTERN & mask) | 1, (KEY_PATTERN & mask) | 1


def spec_doc(width: int) -> dict:
    """One transaction: a start pulse from idle yields the product of the
    trigger-time operands width+1 cycles later, with done raised."""
    return {
        "module": "mulcheck",
        "description": f"{width}-bit shift-add multiplier against word-level mul",
        "proof_cycles": width + 4,
        "transactions": [
            {
                "name": "mul_result",
                "trigger": "(and (eq start 1'd1) (eq busy 1'd0))",
                "checks": [
                    {"signal": "out", "value": "(mul a key_sv)", "at": width + 1},
                    {"signal": "done", "value": "1'd1", "at": width + 1},
                ],
            }
        ],
    }


def scenario_doc(width: int) -> dict:
    """Strobe the key at cycle 0, then run two back-to-back multiplies.

    Two transactions keep every datapath register moving (either past tau,
    or into the mid-activity band where a register-rooted cone blocks the
    abstract rule). The latched key is the only register with exactly one
    change, so it carries the lone Concretize hint.
    """
    a, key = operands(width)
    product = (a * key) & ((1 << width) - 1)
    finish = 2 + width + 1
    start2 = width + 4
    finish2 = start2 + width + 1
    return {
        "name": f"mul{width}",
        "run_cycles": 2 * width + 8,
        "firmware": {},
        "stimulus": [
            [0, "mulcheck.key", key],
            [0, "mulcheck.strobe", 1],
            [0, "mulcheck.a", a],
            [0, "mulcheck.start", 0],
            [1, "mulcheck.strobe", 0],
            [2, "mulcheck.start", 1],
            [3, "mulcheck.start", 0],
            [start2, "mulcheck.start", 1],
            [start2 + 1, "mulcheck.start", 0],
        ],
        "expected": [
            [finish, "mulcheck.out", product],
            [finish, "mulcheck.done", 1],
            [finish2, "mulcheck.out", product],
            [finish2, "mulcheck.done", 1],
        ],
        "spec_ref": [],
        "tau": 5,
    }
