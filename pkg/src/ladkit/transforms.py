"""Eigenbasis transforms and energy-based component selection.

Covers the decorrelating transform of the covariance eigenbasis (KLT),
the graph Fourier transform pair of a Laplacian eigenbasis, cumulative
energy bookkeeping, and the rule that picks how many components a
de-noised detector keeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ValidationError
from .graph import GraphModel, _deterministic_signs
from .instrumentation import count_eigendecomposition
from .stats import BackgroundStats

DEFAULT_ENERGY_FRACTION = 0.99


@dataclass(frozen=True)
class TruncationPolicy:
    """How many eigencomponents a de-noised score keeps.

    Modes: ``full`` keeps the whole basis, ``fixed`` keeps an explicit
    count, ``energy`` keeps the smallest count whose cumulative energy
    share reaches ``psi``.
    """

    mode: str
    p: int | None = None
    psi: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("full", "fixed", "energy"):
            raise ParameterError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "fixed":
            if self.p is None or self.p < 1:
                raise ParameterError(f"fixed truncation needs p >= 1, got {self.p}")
        if self.mode == "energy":
            psi = self.psi if self.psi is not None else DEFAULT_ENERGY_FRACTION
            if not 0.0 < psi <= 1.0:
                raise ParameterError(f"energy fraction must lie in (0, 1], got {psi}")
            object.__setattr__(self, "psi", float(psi))

    @classmethod
    def full(cls) -> "TruncationPolicy":
        return cls(mode="full")

    @classmethod
    def fixed(cls, p: int) -> "TruncationPolicy":
        return cls(mode="fixed", p=None if p is None else int(p))

    @classmethod
    def energy(cls, psi: float = DEFAULT_ENERGY_FRACTION) -> "TruncationPolicy":
        return cls(mode="energy", psi=None if psi is None else float(psi))

    def resolve(self, basis_size: int, energies: np.ndarray | None = None) -> int:
        """Resolve the retained component count against a concrete basis."""
        if self.mode == "full":
            return basis_size
        if self.mode == "fixed":
            if not 1 <= self.p <= basis_size:
                raise ParameterError(
                    f"p={self.p} outside the valid range [1, {basis_size}]"
                )
            return self.p
        if energies is None:
            raise ValidationError("energy truncation needs the cumulative energy curve")
        return select_p(energies, self.psi)


def klt_basis(stats: BackgroundStats) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and unit eigenvectors of the covariance.

    Counted as one eigendecomposition by the instrumentation module.
    Eigenvector signs follow the same first-nonzero-positive rule as the
    graph eigenbasis.
    """
    count_eigendecomposition()
    try:
        vals, vecs = np.linalg.eigh(stats.covariance)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"covariance eigendecomposition failed (order {stats.n_bands}): {exc}",
            order=stats.n_bands,
        ) from exc
    order = np.arange(vals.shape[0])[::-1]
    return vals[order].copy(), _deterministic_signs(vecs[:, order])


def klt_transform(x_centered: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Project centered pixel vectors onto the covariance eigenbasis.

    Accepts a single length-m vector or an (N, m) matrix of them.
    """
    x_centered = np.asarray(x_centered, dtype=np.float64)
    if x_centered.shape[-1] != basis.shape[0]:
        raise ValidationError(
            f"signal length {x_centered.shape[-1]} does not match basis order {basis.shape[0]}"
        )
    return x_centered @ basis


def gft_transform(s: np.ndarray, model: GraphModel) -> np.ndarray:
    """Graph Fourier transform: coefficients of s in the Laplacian eigenbasis."""
    _, vecs = model.require_eigensystem()
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != vecs.shape[0]:
        raise ValidationError(
            f"signal length {s.shape[-1]} does not match graph order {vecs.shape[0]}"
        )
    return s @ vecs


def inverse_gft(coefficients: np.ndarray, model: GraphModel) -> np.ndarray:
    """Inverse graph Fourier transform back to the vertex domain."""
    _, vecs = model.require_eigensystem()
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape[-1] != vecs.shape[0]:
        raise ValidationError(
            f"coefficient length {coefficients.shape[-1]} does not match graph order {vecs.shape[0]}"
        )
    return coefficients @ vecs.T


def cumulative_energy(coefficients: np.ndarray, p: int) -> float:
    """Total squared energy of the first p components over all pixels."""
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=np.float64))
    n = coefficients.shape[1]
    if not 1 <= p <= n:
        raise ParameterError(f"p={p} outside [1, {n}]")
    return float((coefficients[:, :p] ** 2).sum())


def cumulative_energy_curve(coefficients: np.ndarray) -> np.ndarray:
    """Cumulative energy for every p = 1..n in one pass."""
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=np.float64))
    return np.cumsum((coefficients**2).sum(axis=0))


def select_p(energies: np.ndarray, psi: float = DEFAULT_ENERGY_FRACTION) -> int:
    """Smallest p whose cumulative energy share reaches psi.

    ``energies`` is the nondecreasing cumulative energy curve; the share
    is measured against its final (total) entry.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if energies.ndim != 1 or energies.size == 0:
        raise ValidationError("energies must be a nonempty 1-D cumulative curve")
    if not 0.0 < psi <= 1.0:
        raise ParameterError(f"energy fraction must lie in (0, 1], got {psi}")
    total = float(energies[-1])
    if total <= 0.0:
        raise ValidationError("total energy is zero; cannot select a component count")
    ratios = energies / total
    hits = np.flatnonzero(ratios >= psi)
    # psi <= 1 and ratios end at 1.0, so a hit always exists
    return int(hits[0]) + 1
