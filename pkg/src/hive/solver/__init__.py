"""Bundled SMT-LIB 2 solver engines.

Two independent decision procedures for quantifier-free bitvector (plus
array) problems ship with the package so the verification pipeline works
with no external solver installed:

- a CDCL engine: terms are bit-blasted to CNF through a Tseitin encoding
  and decided by a conflict-driven clause-learning SAT core;
- a BDD engine: each bit of the assertion set becomes a reduced ordered
  binary decision diagram and satisfiability is a constant-node test.

Both speak the same SMT-LIB 2 subset on stdin/stdout (scripts ending in
check-sat, then get-value interactively), so they are drop-in subprocess
peers of external solvers like z3 or cvc5.
"""
