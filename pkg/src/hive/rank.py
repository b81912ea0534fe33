"""Signal ranking by simulation activity.

Signals are ordered by how often they changed during a scenario run, fewest
changes first, names breaking ties so the order is total and reproducible.
Signals that ever carried an unknown value sort after every fully-known
signal regardless of count: their observed activity cannot be trusted, and
downstream hint generation treats them separately.

Counts can come from an in-memory trace or from streaming a VCD file; both
paths must agree and the tests hold them to that.
"""

from __future__ import annotations

from dataclasses import dataclass

from .trace import Trace, count_vcd_activity

__all__ = [
    "RankedSignal",
    "signal_ranking",
    "ranking_from_vcd",
    "bucketize",
    "filter_instance",
]


@dataclass(frozen=True)
class RankedSignal:
    name: str
    changes: int
    unknown: bool

    def sort_key(self) -> tuple[int, int, str]:
        return (1 if self.unknown else 0, self.changes, self.name)


def signal_ranking(trace: Trace, signals: list[str] | None = None) -> list[RankedSignal]:
    """Rank signals ascending by change count, unknowns last.

    `signals` restricts and validates the set; by default every signal the
    trace knows about is ranked.
    """
    names = list(signals) if signals is not None else sorted(trace.signals)
    rows = []
    for n in names:
        if n not in trace.signals:
            raise KeyError(f"signal {n!r} is not in the trace")
        rows.append(RankedSignal(n, trace.change_count(n), trace.has_unknown(n)))
    rows.sort(key=RankedSignal.sort_key)
    return rows


def ranking_from_vcd(path) -> list[RankedSignal]:
    """Rank directly from a VCD file without materializing the trace."""
    activity = count_vcd_activity(path)
    rows = [RankedSignal(n, c, x) for n, (c, x) in activity.items()]
    rows.sort(key=RankedSignal.sort_key)
    return rows


def filter_instance(ranked: list[RankedSignal], prefix: str) -> list[RankedSignal]:
    """Keep signals under one instance path, e.g. 'soc.uart0'."""
    dotted = prefix if prefix.endswith(".") else prefix + "."
    return [r for r in ranked if r.name.startswith(dotted)]


def bucketize(ranked: list[RankedSignal], tau: int) -> dict[str, dict]:
    """Partition ranked signals into activity buckets.

    Buckets: 'freq<=1' (stuck or single-change), '2..tau', '>tau', and
    'unknown' (X at any point, takes precedence over counts). Percentages
    are exact over the ranked population and sum to 100 when nonempty.
    """
    if tau < 2:
        raise ValueError("tau must be at least 2")
    keys = ("freq<=1", "2..tau", ">tau", "unknown")
    counts = {k: 0 for k in keys}
    members: dict[str, list[str]] = {k: [] for k in keys}
    for r in ranked:
        if r.unknown:
            k = "unknown"
        elif r.changes <= 1:
            k = "freq<=1"
        elif r.changes <= tau:
            k = "2..tau"
        else:
            k = ">tau"
        counts[k] += 1
        members[k].append(r.name)
    total = len(ranked)
    out = {}
    for k in keys:
        pct = 100.0 * counts[k] / total if total else 0.0
        out[k] = {"count": counts[k], "percent": pct, "signals": members[k]}
    return out
