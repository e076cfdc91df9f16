"""Quasifree state data ``(gamma, alpha, b)`` and purity characterizations.

Conventions, with ``a_i`` the annihilator of basis mode ``i``::

    gamma[i, j] = omega(a*_j a_i)
    alpha[i, j] = omega(a_j a_i)
    b[i]        = omega(a_i)

The generalized one-particle density matrix is the block matrix
``[[gamma, alpha], [alpha^*, 1 +/- conj(gamma)]]`` (plus sign for bosons) and
the further generalized one adds a row and column carrying ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qflab.errors import SpeciesMismatch
from qflab.fock import (
    ModeSpace,
    Statistics,
    require_cutoff_safe,
    validate_density_matrix,
)

PURE_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class GaussianData:
    """One- and two-point data of a (possibly non-quasifree) state."""

    gamma: np.ndarray
    alpha: np.ndarray
    b: np.ndarray
    statistics: Statistics

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=complex))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=complex))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=complex).reshape(-1))
        object.__setattr__(self, "statistics", Statistics.parse(self.statistics))
        n = self.gamma.shape[0]
        if self.gamma.shape != (n, n) or self.alpha.shape != (n, n) or self.b.shape != (n,):
            raise ValueError("gamma, alpha must be n x n and b of length n")

    @property
    def n_modes(self) -> int:
        return self.gamma.shape[0]

    @property
    def is_boson(self) -> bool:
        return self.statistics is Statistics.BOSON

    @classmethod
    def vacuum(cls, n_modes: int, statistics) -> "GaussianData":
        zeros = np.zeros((n_modes, n_modes))
        return cls(zeros, zeros, np.zeros(n_modes), statistics)

    def violations(self, tol: float = 1e-8) -> list[str]:
        """Invariants that fail, as human readable strings."""
        issues = []
        g = self.gamma
        if np.linalg.norm(g - g.conj().T, 2) > tol:
            issues.append("gamma not Hermitian")
        evals = np.linalg.eigvalsh((g + g.conj().T) / 2)
        if evals.size and evals[0] < -tol:
            issues.append("gamma not positive semi-definite")
        sign = 1 if self.is_boson else -1
        if np.linalg.norm(self.alpha.T - sign * self.alpha, 2) > tol:
            issues.append("alpha symmetry violated")
        if not self.is_boson:
            if evals.size and evals[-1] > 1 + tol:
                issues.append("gamma exceeds 1")
            if np.linalg.norm(self.b) > tol:
                issues.append("fermion first moment must vanish")
        return issues


def gaussian_from_density_matrix(
    rho: np.ndarray, space: ModeSpace, tol: float = 1e-8, threshold: float = 1e-12
) -> GaussianData:
    """Extract ``(gamma, alpha, b)`` from a Fock density matrix.

    Raises
    ------
    NotADensityMatrix
        If ``rho`` is not a density matrix.
    CutoffUnsafe
        For bosons with weight above occupation ``cutoff - 2``.
    """
    validate_density_matrix(rho, tol)
    require_cutoff_safe(space, rho, margin=2, threshold=threshold)
    ann = np.array(space.annihilators())
    cre = np.array(space.creators())
    gamma = np.einsum("xy,jyz,izx->ij", rho, cre, ann, optimize=True)
    alpha = np.einsum("xy,jyz,izx->ij", rho, ann, ann, optimize=True)
    b = np.einsum("xy,iyx->i", rho, ann)
    if not space.is_boson:
        b = np.zeros_like(b)
    return GaussianData(gamma, alpha, b, space.statistics)


def gen1pdm(g: GaussianData) -> np.ndarray:
    """Generalized one-particle density matrix, shape ``(2n, 2n)``."""
    n = g.n_modes
    sign = 1.0 if g.is_boson else -1.0
    return np.block(
        [
            [g.gamma, g.alpha],
            [g.alpha.conj().T, np.eye(n) + sign * g.gamma.conj()],
        ]
    )


def further_gen1pdm(g: GaussianData) -> np.ndarray:
    """Further generalized one-particle density matrix, shape ``(2n+1, 2n+1)``."""
    n = g.n_modes
    out = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    out[: 2 * n, : 2 * n] = gen1pdm(g)
    out[:n, 2 * n] = g.b
    out[n : 2 * n, 2 * n] = g.b.conj()
    out[2 * n, :n] = g.b.conj()
    out[2 * n, n : 2 * n] = g.b
    out[2 * n, 2 * n] = 1.0
    return out


def gaussian_from_gen1pdm(gt: np.ndarray, statistics, b=None) -> GaussianData:
    """Read ``(gamma, alpha)`` back out of a generalized 1-pdm."""
    n = gt.shape[0] // 2
    b = np.zeros(n) if b is None else b
    return GaussianData(gt[:n, :n], gt[:n, n:], b, statistics)


def gaussian_from_further(fg: np.ndarray) -> GaussianData:
    """Read boson data back out of a further generalized 1-pdm."""
    n = (fg.shape[0] - 1) // 2
    return GaussianData(fg[:n, :n], fg[:n, n : 2 * n], fg[:n, 2 * n], Statistics.BOSON)


def symplectic_form(n: int) -> np.ndarray:
    """``S = diag(1, -1)`` in block form."""
    return np.diag(np.concatenate([np.ones(n), -np.ones(n)])).astype(complex)


@dataclass(frozen=True)
class PurityReport:
    """Purity verdict.

    ``residual`` is the block-matrix residual. ``reduced_residual`` is the
    boson-only ``gamma^2 + gamma - alpha alpha^*`` residual, else ``None``.
    """

    pure: bool
    residual: float
    reduced_residual: float | None = None
    tol: float = PURE_TOL

    @property
    def verdicts_agree(self) -> bool:
        if self.reduced_residual is None:
            return True
        return (self.reduced_residual <= self.tol) == self.pure


def check_boson_purity(g: GaussianData, tol: float = PURE_TOL) -> PurityReport:
    """Test ``gt S gt = -gt`` and, independently, ``gamma^2 + gamma = alpha alpha^*``.

    ``pure`` reports the block-matrix verdict. Both verdicts are exposed so
    callers can confirm they coincide.
    """
    if not g.is_boson:
        raise SpeciesMismatch("boson purity test needs boson data")
    if np.linalg.norm(g.b) > tol:
        raise ValueError("boson purity test needs centered data; use recenter() first")
    gt = gen1pdm(g)
    s = symplectic_form(g.n_modes)
    residual = np.linalg.norm(gt @ s @ gt + gt, 2)
    reduced = np.linalg.norm(
        g.gamma @ g.gamma + g.gamma - g.alpha @ g.alpha.conj().T, 2
    )
    return PurityReport(bool(residual <= tol), float(residual), float(reduced), tol)


def check_fermion_purity(g: GaussianData, tol: float = PURE_TOL) -> PurityReport:
    """Test the projection property of the generalized 1-pdm."""
    if g.is_boson:
        raise SpeciesMismatch("fermion purity test needs fermion data")
    gt = gen1pdm(g)
    residual = np.linalg.norm(gt @ gt - gt, 2)
    return PurityReport(bool(residual <= tol), float(residual), None, tol)


def check_purity(g: GaussianData, tol: float = PURE_TOL) -> PurityReport:
    """Dispatch on statistics; boson data is recentered first."""
    if g.is_boson:
        return check_boson_purity(recenter(g), tol)
    return check_fermion_purity(g, tol)


def quasiprojection_form(b: np.ndarray) -> np.ndarray:
    """The form ``Q_b`` with ``ghat Q_b ghat = -ghat`` exactly for pure states."""
    b = np.asarray(b, dtype=complex)
    n = b.size
    q = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
    q[:n, :n] = np.eye(n)
    q[n : 2 * n, n : 2 * n] = -np.eye(n)
    q[:n, 2 * n] = -b
    q[n : 2 * n, 2 * n] = b.conj()
    q[2 * n, :n] = -b.conj()
    q[2 * n, n : 2 * n] = b
    q[2 * n, 2 * n] = -1.0
    return q


def recentering_map(b: np.ndarray) -> np.ndarray:
    """Matrix ``R_b`` with ``Q_b = R_b diag(1, -1, -1) R_b^*``."""
    b = np.asarray(b, dtype=complex)
    n = b.size
    r = -np.eye(2 * n + 1, dtype=complex)
    r[2 * n, :n] = b.conj()
    r[2 * n, n : 2 * n] = b
    r[2 * n, 2 * n] = 1.0
    return r


def further_purity_residual(fg: np.ndarray) -> float:
    """``||ghat Q_b ghat + ghat||`` with ``b`` read from ``fg``."""
    n = (fg.shape[0] - 1) // 2
    q = quasiprojection_form(fg[:n, 2 * n])
    return float(np.linalg.norm(fg @ q @ fg + fg, 2))


def check_further_purity(fg: np.ndarray, tol: float = PURE_TOL) -> bool:
    """Purity test on a further generalized boson 1-pdm."""
    return further_purity_residual(fg) <= tol


def conjugate_gen1pdm(gt: np.ndarray, U) -> np.ndarray:
    """Return ``U^* gt U`` for a Bogoliubov map ``U``.

    The statistics of ``gt`` is read off its lower-right block and must match
    ``U``.
    """
    n = gt.shape[0] // 2
    if U.n_modes != n:
        raise ValueError("dimension mismatch between gen1pdm and Bogoliubov map")
    sign = 1.0 if U.statistics is Statistics.BOSON else -1.0
    lower = gt[n:, n:] - sign * gt[:n, :n].conj()
    if np.linalg.norm(lower - np.eye(n), 2) > 1e-6:
        raise SpeciesMismatch(
            f"{U.statistics.value} map applied to a gen1pdm of the other species"
        )
    m = U.matrix
    return m.conj().T @ gt @ m


def recenter(g: GaussianData) -> GaussianData:
    """Data of the state with its first moment removed."""
    if not g.is_boson:
        return g
    b = g.b
    return GaussianData(
        g.gamma - np.outer(b, b.conj()),
        g.alpha - np.outer(b, b),
        np.zeros_like(b),
        g.statistics,
    )
