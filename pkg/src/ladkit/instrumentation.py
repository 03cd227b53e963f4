"""Counters for the expensive linear-algebra operations.

The inversion-free detector variants advertise that they never invert a
covariance matrix nor run an eigendecomposition; these counters make that
claim checkable. Code paths that factorize/invert a covariance call
:func:`count_inversion`, eigensolver call sites call
:func:`count_eigendecomposition`.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class OperationCounters:
    inversions: int = 0
    eigendecompositions: int = 0

    def reset(self) -> None:
        self.inversions = 0
        self.eigendecompositions = 0

    def snapshot(self) -> dict:
        return {
            "inversions": self.inversions,
            "eigendecompositions": self.eigendecompositions,
        }


counters = OperationCounters()


def count_inversion() -> None:
    counters.inversions += 1


def count_eigendecomposition() -> None:
    counters.eigendecompositions += 1
