"""Bundled fixture designs.

socdemo builds the CPU+ROM+UART+TLC system used throughout the docs and
tests; widthfam builds the width-parameterized multiplier family for
hinted-vs-unhinted scaling runs; tiny holds small closed designs for
oracle work.
"""

from . import socdemo, tiny, widthfam

__all__ = ["socdemo", "tiny", "widthfam"]
