"""Hardware-firmware co-verification toolkit.

Pipeline stages: parse and flatten a word-level netlist, run firmware-driven
scenarios on a cycle-accurate simulator, rank signals by activity, extract
FSMs, generate and verify abstraction hints, then discharge per-module
equivalence proofs against declarative specs with an SMT solver.
"""

__version__ = "0.1.0"
