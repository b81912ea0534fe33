"""Four-value signal traces and VCD input/output.

Values are bit vectors over {0, 1, X, Z}. X marks unknown/uninitialized bits,
Z marks undriven bits seen in externally produced dumps; the simulator itself
never emits Z. A Trace stores change lists per signal: the entry at dump time
0 is the initial value and is not counted as a transition.

The VCD subset: $timescale, nested $scope module sections following the
hierarchical name segments, $var wire/reg declarations, $enddefinitions,
one $dumpvars block, #TIME markers (one per simulation cycle), scalar changes
like `0!` and vector changes like `b1010 !`. Within a time block, changes are
emitted in declaration order. Parsing is single-pass and the streaming
interface keeps only per-signal accumulators, so counting activity in a dump
much larger than memory works.
"""

from __future__ import annotations

import io
from bisect import bisect_right
from dataclasses import dataclass, field

__all__ = [
    "Bits",
    "Trace",
    "VcdError",
    "write_vcd",
    "parse_vcd",
    "iter_vcd_changes",
    "count_vcd_activity",
]


class VcdError(ValueError):
    pass


class Bits:
    """An immutable bit vector over {0, 1, X, Z}.

    val holds the known bits; bits covered by xmask or zmask read as X or Z
    and are kept zero in val so equality is structural.
    """

    __slots__ = ("width", "val", "xmask", "zmask")

    def __init__(self, width: int, val: int = 0, xmask: int = 0, zmask: int = 0):
        if width <= 0:
            raise ValueError("width must be positive")
        full = (1 << width) - 1
        xmask &= full
        zmask &= full
        zmask &= ~xmask  # X wins where both are claimed
        self.width = width
        self.val = val & full & ~xmask & ~zmask
        self.xmask = xmask
        self.zmask = zmask

    @classmethod
    def from_int(cls, value: int, width: int) -> "Bits":
        return cls(width, val=value)

    @classmethod
    def all_x(cls, width: int) -> "Bits":
        return cls(width, xmask=(1 << width) - 1)

    @classmethod
    def from_str(cls, text: str) -> "Bits":
        """Parse an MSB-first string like '10x1z'."""
        if not text:
            raise VcdError("empty bit string")
        val = xm = zm = 0
        for ch in text:
            val <<= 1
            xm <<= 1
            zm <<= 1
            if ch == "1":
                val |= 1
            elif ch == "0":
                pass
            elif ch in "xX":
                xm |= 1
            elif ch in "zZ":
                zm |= 1
            else:
                raise VcdError(f"bad bit character {ch!r}")
        return cls(len(text), val=val, xmask=xm, zmask=zm)

    def is_known(self) -> bool:
        return self.xmask == 0 and self.zmask == 0

    def has_x(self) -> bool:
        return self.xmask != 0

    def to_int(self) -> int:
        if not self.is_known():
            raise VcdError("value contains x or z bits")
        return self.val

    def __str__(self):
        out = []
        for i in range(self.width - 1, -1, -1):
            bit = 1 << i
            if self.xmask & bit:
                out.append("x")
            elif self.zmask & bit:
                out.append("z")
            else:
                out.append("1" if self.val & bit else "0")
        return "".join(out)

    def __repr__(self):
        return f"Bits('{self}')"

    def __eq__(self, other):
        if not isinstance(other, Bits):
            return NotImplemented
        return (
            self.width == other.width
            and self.val == other.val
            and self.xmask == other.xmask
            and self.zmask == other.zmask
        )

    def __hash__(self):
        return hash((self.width, self.val, self.xmask, self.zmask))


@dataclass
class Trace:
    """Per-signal change lists: name -> [(cycle, Bits)], first entry at 0."""

    signals: dict[str, int] = field(default_factory=dict)
    regs: set[str] = field(default_factory=set)
    changes: dict[str, list[tuple[int, Bits]]] = field(default_factory=dict)
    end_cycle: int = 0

    def record(self, cycle: int, name: str, value: Bits):
        lst = self.changes.setdefault(name, [])
        if lst and lst[-1][1] == value:
            return
        if lst and cycle < lst[-1][0]:
            raise VcdError(f"{name}: time went backwards at {cycle}")
        if lst and lst[-1][0] == cycle:
            lst[-1] = (cycle, value)
            if len(lst) >= 2 and lst[-2][1] == value:
                lst.pop()
            return
        lst.append((cycle, value))
        if cycle > self.end_cycle:
            self.end_cycle = cycle

    def value_at(self, name: str, cycle: int) -> Bits:
        lst = self.changes.get(name)
        if not lst or cycle < lst[0][0]:
            return Bits.all_x(self.signals[name])
        i = bisect_right(lst, cycle, key=lambda e: e[0]) - 1
        return lst[i][1]

    def change_count(self, name: str) -> int:
        """Transitions after the initial dump. Missing signals count 0."""
        lst = self.changes.get(name)
        if not lst:
            return 0
        return len(lst) - 1

    def has_unknown(self, name: str) -> bool:
        """True when the signal was never dumped or ever held an X bit."""
        lst = self.changes.get(name)
        if not lst:
            return True
        return any(v.has_x() for _, v in lst)


# ---------------------------------------------------------------------------
# Writing


def _id_alloc(n: int) -> str:
    # printable identifier from the VCD character range '!'..'~'
    chars = []
    n += 1
    while n:
        n, r = divmod(n - 1, 94)
        chars.append(chr(33 + r))
    return "".join(reversed(chars))


def write_vcd(trace: Trace, fh) -> None:
    names = list(trace.signals)
    ids = {name: _id_alloc(i) for i, name in enumerate(names)}

    fh.write("$timescale 1 ns $end\n")
    scope: list[str] = []
    for name in names:
        parts = name.split(".")
        path, leaf = parts[:-1], parts[-1]
        common = 0
        while common < len(scope) and common < len(path) and scope[common] == path[common]:
            common += 1
        for _ in range(len(scope) - common):
            fh.write("$upscope $end\n")
            scope.pop()
        for seg in path[common:]:
            fh.write(f"$scope module {seg} $end\n")
            scope.append(seg)
        kind = "reg" if name in trace.regs else "wire"
        fh.write(f"$var {kind} {trace.signals[name]} {ids[name]} {leaf} $end\n")
    while scope:
        fh.write("$upscope $end\n")
        scope.pop()
    fh.write("$enddefinitions $end\n")

    cursor = {name: 0 for name in names}
    fh.write("$dumpvars\n")
    for name in names:
        lst = trace.changes.get(name)
        if lst and lst[0][0] == 0:
            fh.write(_format_change(lst[0][1], ids[name]))
            cursor[name] = 1
        else:
            fh.write(_format_change(Bits.all_x(trace.signals[name]), ids[name]))
    fh.write("$end\n")

    for cycle in range(1, trace.end_cycle + 1):
        block: list[str] = []
        for name in names:
            lst = trace.changes.get(name, [])
            i = cursor[name]
            if i < len(lst) and lst[i][0] == cycle:
                block.append(_format_change(lst[i][1], ids[name]))
                cursor[name] = i + 1
        if block:
            fh.write(f"#{cycle}\n")
            fh.writelines(block)


def _format_change(v: Bits, ident: str) -> str:
    if v.width == 1:
        return f"{v}{ident}\n"
    return f"b{v} {ident}\n"


# ---------------------------------------------------------------------------
# Parsing


def _read_tokens(fh):
    for line in fh:
        yield from line.split()


def _parse_header(tokens) -> tuple[dict[str, int], dict[str, str], set[str]]:
    signals: dict[str, int] = {}
    ids: dict[str, str] = {}
    regs: set[str] = set()
    scope: list[str] = []
    directive: list[str] | None = None
    for tok in tokens:
        if directive is not None:
            if tok == "$end":
                kind = directive[0]
                body = directive[1:]
                if kind == "$scope":
                    if len(body) != 2 or body[0] != "module":
                        raise VcdError(f"unsupported scope {body!r}")
                    scope.append(body[1])
                elif kind == "$upscope":
                    if not scope:
                        raise VcdError("$upscope with no open scope")
                    scope.pop()
                elif kind == "$var":
                    if len(body) != 4 or body[0] not in ("wire", "reg"):
                        raise VcdError(f"unsupported var {body!r}")
                    width = int(body[1])
                    ident, leaf = body[2], body[3]
                    name = ".".join(scope + [leaf])
                    if ident in ids:
                        raise VcdError(f"duplicate id {ident!r}")
                    signals[name] = width
                    ids[ident] = name
                    if body[0] == "reg":
                        regs.add(name)
                elif kind == "$enddefinitions":
                    if scope:
                        raise VcdError("unclosed scopes at $enddefinitions")
                    return signals, ids, regs
                # $timescale, $comment, $date, $version: accepted and ignored
                directive = None
            else:
                directive.append(tok)
        elif tok.startswith("$"):
            directive = [tok]
        else:
            raise VcdError(f"unexpected token {tok!r} before $enddefinitions")
    raise VcdError("missing $enddefinitions")


def iter_vcd_changes(fh):
    """Single-pass VCD reader.

    Yields (signals, regs) first, then (cycle, name, Bits) tuples in file
    order. Values wider or narrower than the declaration are zero-extended
    or rejected the way the writer produces them (exact width).
    """
    tokens = _read_tokens(fh)
    signals, ids, regs = _parse_header(tokens)
    yield signals, regs

    time = 0
    in_dump = False
    pending_vec: str | None = None
    for tok in tokens:
        if pending_vec is not None:
            name = ids.get(tok)
            if name is None:
                raise VcdError(f"unknown id {tok!r}")
            v = Bits.from_str(pending_vec)
            w = signals[name]
            if v.width != w:
                if v.width > w:
                    raise VcdError(f"{name}: vector wider than declared")
                pad = w - v.width
                # VCD left-extension: pad with 0, or with x/z if the MSB is x/z
                msb = str(v)[0]
                v = Bits.from_str(msb * pad + str(v)) if msb in "xz" else Bits.from_str("0" * pad + str(v))
            yield time, name, v
            pending_vec = None
        elif tok.startswith("#"):
            time = int(tok[1:])
        elif tok == "$dumpvars":
            in_dump = True
        elif tok == "$end":
            in_dump = False
        elif tok.startswith("$"):
            raise VcdError(f"unsupported directive {tok!r} in value section")
        elif tok[0] in "01xXzZ":
            name = ids.get(tok[1:])
            if name is None:
                raise VcdError(f"unknown id {tok[1:]!r}")
            if signals[name] != 1:
                raise VcdError(f"{name}: scalar change on {signals[name]}-bit signal")
            yield time, name, Bits.from_str(tok[0].lower())
        elif tok[0] in "bB":
            pending_vec = tok[1:]
        else:
            raise VcdError(f"cannot parse token {tok!r}")
    if pending_vec is not None:
        raise VcdError("dangling vector value at end of file")
    del in_dump


def parse_vcd(fh) -> Trace:
    if isinstance(fh, str):
        with open(fh, "r", encoding="utf-8") as real:
            return parse_vcd(real)
    it = iter_vcd_changes(fh)
    signals, regs = next(it)
    t = Trace(signals=signals, regs=regs)
    for cycle, name, value in it:
        t.record(cycle, name, value)
    return t


def count_vcd_activity(fh) -> dict[str, tuple[int, bool]]:
    """Streaming activity count: name -> (transitions, saw_x).

    Holds one previous value per signal, nothing else, so it handles dumps
    of unbounded length. Repeated identical dumps do not count.
    """
    if isinstance(fh, str):
        with open(fh, "r", encoding="utf-8") as real:
            return count_vcd_activity(real)
    it = iter_vcd_changes(fh)
    signals, _regs = next(it)
    last: dict[str, Bits] = {}
    counts = {name: 0 for name in signals}
    saw_x = {name: False for name in signals}
    seen = set()
    for _cycle, name, value in it:
        if value.has_x():
            saw_x[name] = True
        prev = last.get(name)
        if prev is None:
            seen.add(name)
        elif value != prev:
            counts[name] += 1
        last[name] = value
    for name in signals:
        if name not in seen:
            saw_x[name] = True  # never dumped reads as unknown
    return {name: (counts[name], saw_x[name]) for name in signals}


def trace_to_string(trace: Trace) -> str:
    buf = io.StringIO()
    write_vcd(trace, buf)
    return buf.getvalue()
