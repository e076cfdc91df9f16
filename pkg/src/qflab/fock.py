"""Truncated Fock spaces with dense ladder-operator matrices.

Modes are labelled ``1..n_modes`` in the public ladder-operator API (the same
labels used by the textual polynomial grammar). Everything that returns one
array per mode, such as :meth:`ModeSpace.annihilators`, is indexed from zero.

Bosonic spaces are truncated by total occupation. Fermionic matrices use the
Jordan-Wigner sign convention relative to the ordered product
``c*_{k1} ... c*_{kN} Omega`` with ``k1 < ... < kN``.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from qflab.errors import CutoffUnsafe, DimensionOverflow, NotADensityMatrix

DEFAULT_MAX_DIM = 4096
EQ_TOL = 1e-8
PSD_FLOOR = 1e-9


class Statistics(str, enum.Enum):
    BOSON = "boson"
    FERMION = "fermion"

    @classmethod
    def parse(cls, value) -> "Statistics":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown statistics {value!r}") from None


def max_dimension() -> int:
    """Dimension guard, overridable through ``QFLAB_MAX_DIM``."""
    raw = os.environ.get("QFLAB_MAX_DIM")
    return int(raw) if raw else DEFAULT_MAX_DIM


def _compositions(total: int, parts: int):
    """Occupation tuples summing to ``total``, reverse-lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _boson_basis(n_modes: int, cutoff: int) -> list[tuple[int, ...]]:
    return [occ for total in range(cutoff + 1) for occ in _compositions(total, n_modes)]


def _fermion_basis(n_modes: int) -> list[tuple[int, ...]]:
    basis = []
    for total in range(n_modes + 1):
        for occupied in itertools.combinations(range(n_modes), total):
            basis.append(tuple(1 if k in occupied else 0 for k in range(n_modes)))
    return basis


@dataclass(frozen=True)
class ModeSpace:
    """A concrete truncated Fock space.

    Parameters
    ----------
    n_modes : int
        Number of one-particle modes.
    statistics : Statistics
        Boson or fermion.
    cutoff : int
        Maximal total occupation. Fixed to ``n_modes`` for fermions.
    """

    n_modes: int
    statistics: Statistics
    cutoff: int
    basis: tuple[tuple[int, ...], ...] = field(repr=False, compare=False)
    _index: dict = field(repr=False, compare=False, hash=False)

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def is_boson(self) -> bool:
        return self.statistics is Statistics.BOSON

    def index(self, occupation) -> int:
        """Basis position of an occupation tuple."""
        return self._index[tuple(int(x) for x in occupation)]

    def totals(self) -> np.ndarray:
        """Total occupation of every basis vector."""
        return _totals(self)

    def annihilators(self) -> tuple[np.ndarray, ...]:
        """All annihilation matrices, zero-indexed by mode."""
        return _ladder(self)

    def creators(self) -> tuple[np.ndarray, ...]:
        return _creators(self)

    def ket(self, occupation) -> np.ndarray:
        """Basis vector for an occupation tuple."""
        out = np.zeros(self.dim, dtype=complex)
        out[self.index(occupation)] = 1.0
        return out

    def to_json(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "statistics": self.statistics.value,
            "cutoff": self.cutoff,
        }


def build_space(
    n_modes: int,
    statistics,
    cutoff: int | None = None,
    max_dim: int | None = None,
) -> ModeSpace:
    """Construct a :class:`ModeSpace` with a graded, vacuum-first basis.

    Raises
    ------
    DimensionOverflow
        If the Fock dimension exceeds ``max_dim`` (default from
        :func:`max_dimension`).
    """
    statistics = Statistics.parse(statistics)
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    limit = max_dimension() if max_dim is None else max_dim
    if statistics is Statistics.FERMION:
        if 2**n_modes > limit:
            raise DimensionOverflow(f"fermion dimension 2^{n_modes} exceeds {limit}")
        basis = _fermion_basis(n_modes)
        cutoff = n_modes
    else:
        if cutoff is None or cutoff < 1:
            raise ValueError("bosonic spaces need cutoff >= 1")
        dim = math.comb(cutoff + n_modes, n_modes)
        if dim > limit:
            raise DimensionOverflow(f"boson dimension {dim} exceeds {limit}")
        basis = _boson_basis(n_modes, cutoff)
    index = {occ: i for i, occ in enumerate(basis)}
    return ModeSpace(n_modes, statistics, int(cutoff), tuple(basis), index)


@functools.lru_cache(maxsize=64)
def _totals(space: ModeSpace) -> np.ndarray:
    out = np.array([sum(occ) for occ in space.basis], dtype=float)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def _ladder(space: ModeSpace) -> tuple[np.ndarray, ...]:
    mats = []
    for k in range(space.n_modes):
        a = np.zeros((space.dim, space.dim), dtype=complex)
        for col, occ in enumerate(space.basis):
            if occ[k] == 0:
                continue
            lowered = list(occ)
            lowered[k] -= 1
            row = space._index[tuple(lowered)]
            if space.is_boson:
                a[row, col] = np.sqrt(occ[k])
            else:
                a[row, col] = (-1) ** sum(occ[:k])
        a.setflags(write=False)
        mats.append(a)
    return tuple(mats)


@functools.lru_cache(maxsize=64)
def _creators(space: ModeSpace) -> tuple[np.ndarray, ...]:
    out = []
    for a in _ladder(space):
        c = a.conj().T.copy()
        c.setflags(write=False)
        out.append(c)
    return tuple(out)


def _check_mode(space: ModeSpace, k: int) -> None:
    if not 1 <= k <= space.n_modes:
        raise ValueError(f"mode {k} outside 1..{space.n_modes}")


def annihilator(space: ModeSpace, k: int) -> np.ndarray:
    """Matrix of the annihilation operator for mode ``k`` (1-based)."""
    _check_mode(space, k)
    return _ladder(space)[k - 1]


def creator(space: ModeSpace, k: int) -> np.ndarray:
    """Matrix of the creation operator for mode ``k`` (1-based)."""
    _check_mode(space, k)
    return _creators(space)[k - 1]


def annihilate(space: ModeSpace, f) -> np.ndarray:
    """``a(f) = sum_k conj(f_k) a_k``; antilinear in ``f``."""
    f = np.asarray(f, dtype=complex)
    return sum(np.conj(fk) * a for fk, a in zip(f, _ladder(space)))


def create(space: ModeSpace, f) -> np.ndarray:
    """``a*(f) = sum_k f_k a*_k``; linear in ``f``."""
    f = np.asarray(f, dtype=complex)
    return sum(fk * c for fk, c in zip(f, _creators(space)))


def number_operator(space: ModeSpace) -> np.ndarray:
    """Diagonal particle-number operator."""
    return np.diag(space.totals()).astype(complex)


def vacuum(space: ModeSpace) -> np.ndarray:
    """Vacuum vector, the first basis element."""
    out = np.zeros(space.dim, dtype=complex)
    out[0] = 1.0
    return out


def projector(psi: np.ndarray) -> np.ndarray:
    """Normalized rank-one density matrix ``|psi><psi|``."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def validate_density_matrix(rho: np.ndarray, tol: float = EQ_TOL) -> None:
    """Raise :class:`NotADensityMatrix` unless ``rho`` is Hermitian PSD with unit trace."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise NotADensityMatrix("density matrix must be square")
    scale = max(1.0, float(np.abs(rho).max(initial=0.0)))
    if np.abs(rho - rho.conj().T).max(initial=0.0) > tol * scale:
        raise NotADensityMatrix("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise NotADensityMatrix(f"trace {np.trace(rho).real:.3g} differs from 1")
    evals = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    if evals[0] < -PSD_FLOOR * max(1.0, abs(evals[-1])):
        raise NotADensityMatrix(f"negative eigenvalue {evals[0]:.3g}")


def expectation(rho: np.ndarray, obs: np.ndarray, tol: float = EQ_TOL) -> complex:
    """``tr(rho @ obs)`` after validating ``rho``."""
    validate_density_matrix(rho, tol)
    return complex(np.einsum("ij,ji->", rho, obs))


def mass_above(space: ModeSpace, rho: np.ndarray, level: int) -> float:
    """Probability that the total occupation exceeds ``level``."""
    mask = space.totals() > level
    if not mask.any():
        return 0.0
    if np.ndim(rho) == 1:
        return float(np.sum(np.abs(np.asarray(rho)[mask]) ** 2))
    return float(np.diagonal(rho)[mask].sum().real)


def require_cutoff_safe(
    space: ModeSpace, rho: np.ndarray, margin: int = 2, threshold: float = 1e-12
) -> None:
    """Raise :class:`CutoffUnsafe` if too much weight sits near the boson cutoff.

    Fermionic spaces are never truncated, so the check is a no-op for them.
    """
    if not space.is_boson:
        return
    level = space.cutoff - margin
    mass = mass_above(space, rho, level)
    if mass >= threshold:
        raise CutoffUnsafe(
            f"probability {mass:.3g} above occupation {level} (cutoff {space.cutoff})"
        )


def safe_projector(space: ModeSpace, margin: int = 2) -> np.ndarray:
    """Boolean mask selecting basis states with total occupation <= cutoff - margin."""
    if not space.is_boson:
        return np.ones(space.dim, dtype=bool)
    return space.totals() <= space.cutoff - margin
