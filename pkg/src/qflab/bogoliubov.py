"""Bogoliubov maps, their Fock-space implementation, Weyl operators and Gamma(C).

A Bogoliubov map is stored as the pair ``(u, v)`` and acts on the field vector
``(a*_1, ..., a*_n, a_1, ..., a_n)`` through the block matrix
``U = [[u, v], [conj(v), conj(u)]]``::

    UU A_k UU^* = sum_j U[j, k] A_j

so in particular ``UU a_k UU^* = a(u e_k) + a*(v e_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.stats import poisson

from qflab.errors import BranchAmbiguity, CutoffUnsafe, InvalidBogoliubov, NotPure
from qflab.fock import ModeSpace, Statistics, annihilate, build_space, create, max_dimension
from qflab.gaussian import (
    GaussianData,
    check_purity,
    gen1pdm,
    recenter,
    symplectic_form,
)

RELATION_TOL = 1e-10
VACUUM_MASS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BogoliubovMap:
    u: np.ndarray
    v: np.ndarray
    statistics: Statistics

    def __post_init__(self):
        object.__setattr__(self, "u", np.atleast_2d(np.asarray(self.u, dtype=complex)))
        object.__setattr__(self, "v", np.atleast_2d(np.asarray(self.v, dtype=complex)))
        object.__setattr__(self, "statistics", Statistics.parse(self.statistics))
        if self.u.shape != self.v.shape or self.u.shape[0] != self.u.shape[1]:
            raise ValueError("u and v must be square matrices of equal size")

    @property
    def n_modes(self) -> int:
        return self.u.shape[0]

    @property
    def is_boson(self) -> bool:
        return self.statistics is Statistics.BOSON

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.u, self.v], [self.v.conj(), self.u.conj()]])

    @classmethod
    def identity(cls, n_modes: int, statistics) -> "BogoliubovMap":
        return cls(np.eye(n_modes), np.zeros((n_modes, n_modes)), statistics)

    @classmethod
    def from_matrix(cls, m: np.ndarray, statistics) -> "BogoliubovMap":
        n = m.shape[0] // 2
        return cls(m[:n, :n], m[:n, n:], statistics)

    @classmethod
    def from_generator(cls, A, B, statistics) -> "BogoliubovMap":
        """``exp`` of the one-particle flow of a quadratic generator.

        ``A`` must be anti-Hermitian; ``B`` symmetric for bosons and
        antisymmetric for fermions.
        """
        return cls.from_matrix(sla.expm(generator_matrix(A, B, statistics)), statistics)

    def compose(self, other: "BogoliubovMap") -> "BogoliubovMap":
        """Map whose Fock implementation is ``UU_self UU_other``."""
        return BogoliubovMap.from_matrix(self.matrix @ other.matrix, self.statistics)


def generator_matrix(A, B, statistics) -> np.ndarray:
    """One-particle block generator ``K`` with ``[X, A_k] = sum_j K[j, k] A_j``.

    ``X = sum A_ij a*_i a_j + P - P^*`` with ``P = 1/2 sum B_ij a*_i a*_j``.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if Statistics.parse(statistics) is Statistics.BOSON:
        return np.block([[A, -B], [-B.conj(), A.conj()]])
    return np.block([[A, B], [B.conj(), A.conj()]])


def random_generator(n: int, statistics, rng: np.random.Generator, scale: float = 0.5):
    """Random ``(A, B)`` pair of the right symmetry type."""
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    A = scale * (x - x.conj().T) / 2
    y = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    sign = 1 if Statistics.parse(statistics) is Statistics.BOSON else -1
    B = scale * (y + sign * y.T) / 2
    return A, B


def random_bogoliubov(n: int, statistics, rng: np.random.Generator, scale: float = 0.5):
    A, B = random_generator(n, statistics, rng, scale)
    return BogoliubovMap.from_generator(A, B, statistics)


@dataclass(frozen=True)
class RelationReport:
    """Residuals of the four defining relations and of the aggregate form."""

    uu: float
    uhu: float
    cross: float
    sym: float
    aggregate: float
    scale: float = 1.0

    @property
    def worst(self) -> float:
        return max(self.uu, self.uhu, self.cross, self.sym, self.aggregate)

    def ok(self, tol: float = RELATION_TOL) -> bool:
        return self.worst <= tol * max(1.0, self.scale)


def verify_relations(U: BogoliubovMap) -> RelationReport:
    """Residuals (spectral norm) of the defining relations of ``U``."""
    u, v = U.u, U.v
    n = U.n_modes
    one = np.eye(n)
    s = 1.0 if U.is_boson else -1.0
    norm = lambda x: float(np.linalg.norm(x, 2))  # noqa: E731
    m = U.matrix
    if U.is_boson:
        sf = symplectic_form(n)
        aggregate = norm(m.conj().T @ sf @ m - sf)
    else:
        aggregate = norm(m.conj().T @ m - np.eye(2 * n))
    return RelationReport(
        uu=norm(u @ u.conj().T - s * v @ v.conj().T - one),
        uhu=norm(u.conj().T @ u - s * v.T @ v.conj() - one),
        cross=norm(u.conj().T @ v - s * v.T @ u.conj()),
        sym=norm(u @ v.T - s * v @ u.T),
        aggregate=aggregate,
        scale=float(np.linalg.norm(m, 2)) ** 2,
    )


def require_valid(U: BogoliubovMap, tol: float = 1e-8) -> None:
    report = verify_relations(U)
    if not report.ok(tol):
        raise InvalidBogoliubov(f"relation residual {report.worst:.3g}")


def inverse(U: BogoliubovMap) -> BogoliubovMap:
    """Inverse map: ``S U^* S`` for bosons and ``U^*`` for fermions."""
    sign = -1.0 if U.is_boson else 1.0
    return BogoliubovMap(U.u.conj().T, sign * U.v.T, U.statistics)


def transformed_annihilators(U: BogoliubovMap, space: ModeSpace) -> list[np.ndarray]:
    """Matrices of ``UU a_k UU^*`` built from ``a(u e_k) + a*(v e_k)``."""
    return [
        annihilate(space, U.u[:, k]) + create(space, U.v[:, k]) for k in range(U.n_modes)
    ]


def _apply_creators(
    space: ModeSpace, creators: list[np.ndarray], root: np.ndarray, n_cols: int | None = None
):
    """Matrix whose column for occupation ``n`` is ``prod_k (C_k)^{n_k} root / sqrt(n!)``.

    The product is ordered with the lowest mode leftmost, matching the basis
    convention of :mod:`qflab.fock`. Only the first ``n_cols`` columns are
    built; the graded basis makes that prefix closed under lowering.
    """
    n_cols = space.dim if n_cols is None else n_cols
    out = np.zeros((space.dim, n_cols), dtype=complex)
    out[:, 0] = root
    for col, occ in enumerate(space.basis[1:n_cols], start=1):
        k = next(i for i, x in enumerate(occ) if x)
        lowered = list(occ)
        lowered[k] -= 1
        prev = out[:, space.index(lowered)]
        out[:, col] = creators[k] @ prev / np.sqrt(occ[k])
    return out


def working_space(space: ModeSpace) -> ModeSpace:
    """Boson space with a raised cutoff, used to build operators free of edge effects.

    The cutoff is at most doubled and the dimension stays within
    :func:`qflab.fock.max_dimension`. The basis of ``space`` is a prefix of
    the returned basis.
    """
    if not space.is_boson:
        return space
    limit = max(max_dimension(), space.dim)
    pad = space.cutoff
    while pad > 0 and math.comb(space.cutoff + pad + space.n_modes, space.n_modes) > limit:
        pad -= 1
    return build_space(space.n_modes, space.statistics, space.cutoff + pad, max_dim=limit)


def _fix_phase(op: np.ndarray) -> np.ndarray:
    overlap = op[0, 0]
    if abs(overlap) > 1e-12:
        return op * (abs(overlap) / overlap)
    col = op[:, 0]
    pivot = col[np.argmax(np.abs(col))]
    return op * (abs(pivot) / pivot)


def bogoliubov_vacuum(U: BogoliubovMap, space: ModeSpace) -> np.ndarray:
    """Unit vector annihilated by every ``UU a_k UU^*``, phase unfixed.

    For bosons only equations at total occupation below the cutoff are kept,
    since the rows at the cutoff involve amplitudes outside the truncation.
    """
    ops = transformed_annihilators(U, space)
    rows = space.totals() <= space.cutoff - 1 if space.is_boson else slice(None)
    gram = sum(t[rows].conj().T @ t[rows] for t in ops)
    _, vecs = sla.eigh((gram + gram.conj().T) / 2, subset_by_index=[0, 0])
    return vecs[:, 0]


def implement_unitary(
    U: BogoliubovMap, space: ModeSpace, method: str = "vacuum", tol: float = 1e-8
) -> np.ndarray:
    """Fock-space unitary ``UU`` implementing ``U``.

    Parameters
    ----------
    method : {"vacuum", "generator"}
        ``"vacuum"`` finds the transformed vacuum and applies the transformed
        creators to it; it handles every valid map, including maps with
        eigenvalue ``-1`` or odd fermion parity. ``"generator"`` exponentiates
        the quadratic generator recovered from the principal matrix logarithm.

    Returns
    -------
    ndarray
        Unitary on the cutoff-safe subspace, with ``<Omega, UU Omega>`` real and
        non-negative (when zero, the largest vacuum-column entry is made real
        positive instead).

    Raises
    ------
    InvalidBogoliubov, CutoffUnsafe, BranchAmbiguity
    """
    if U.statistics is not space.statistics or U.n_modes != space.n_modes:
        raise InvalidBogoliubov("map does not match the mode space")
    require_valid(U, tol)
    work = working_space(space)
    if method == "vacuum":
        root = bogoliubov_vacuum(U, work)
        creators = [t.conj().T for t in transformed_annihilators(U, work)]
        op = _apply_creators(work, creators, root, space.dim)
    elif method == "generator":
        op = sla.expm(_quadratic_generator(U, work))[:, : space.dim]
    else:
        raise ValueError(f"unknown method {method!r}")
    if space.is_boson:
        level = space.cutoff - 2
        mass = float(np.sum(np.abs(op[work.totals() > level, 0]) ** 2))
        if mass >= VACUUM_MASS_TOL:
            raise CutoffUnsafe(f"transformed vacuum has mass {mass:.3g} above {level}")
    return _fix_phase(op[: space.dim])


def generator_from_map(U: BogoliubovMap, tol: float = 1e-8):
    """Recover ``(A, B)`` from the principal logarithm of ``U``.

    Raises
    ------
    BranchAmbiguity
        When ``U`` has eigenvalues near ``-1`` or the logarithm lacks the
        block structure of a quadratic generator.
    """
    m = U.matrix
    n = U.n_modes
    if np.min(np.abs(np.linalg.eigvals(m) + 1)) < 1e-6:
        raise BranchAmbiguity("map has an eigenvalue at -1")
    k = sla.logm(m)
    A = k[:n, :n]
    B = -k[:n, n:] if U.is_boson else k[:n, n:]
    expected = generator_matrix(A, B, U.statistics)
    sign = 1 if U.is_boson else -1
    bad = (
        np.linalg.norm(k - expected, 2)
        + np.linalg.norm(A + A.conj().T, 2)
        + np.linalg.norm(B - sign * B.T, 2)
    )
    if bad > tol * max(1.0, np.linalg.norm(k, 2)):
        raise BranchAmbiguity(f"logarithm is not a quadratic generator (defect {bad:.3g})")
    return A, B


def quadratic_generator(A, B, space: ModeSpace) -> np.ndarray:
    """Fock matrix of ``sum A_ij a*_i a_j + P - P^*``, ``P = 1/2 sum B_ij a*_i a*_j``."""
    ann = space.annihilators()
    cre = space.creators()
    n = space.n_modes
    x = np.zeros((space.dim, space.dim), dtype=complex)
    pair = np.zeros_like(x)
    for i in range(n):
        for j in range(n):
            if A[i, j] != 0:
                x += A[i, j] * cre[i] @ ann[j]
            if B[i, j] != 0:
                pair += 0.5 * B[i, j] * cre[i] @ cre[j]
    return x + pair - pair.conj().T


def _quadratic_generator(U: BogoliubovMap, space: ModeSpace) -> np.ndarray:
    A, B = generator_from_map(U)
    return quadratic_generator(A, B, space)


def weyl_operator(f, space: ModeSpace) -> np.ndarray:
    """``exp(i Phi(f))`` with ``Phi(f) = (a(f) + a*(f)) / sqrt(2)``.

    The operator factorizes over modes; each single-mode factor is an exact
    exponential on a one-mode space padded well past the cutoff, so entries
    carry no truncation error from the cutoff edge.

    Raises
    ------
    CutoffUnsafe
        If the displaced vacuum (Poisson with mean ``|f|^2 / 2``) has mass
        ``>= 1e-10`` above occupation ``cutoff - 2``.
    """
    if not space.is_boson:
        raise ValueError("Weyl operators need a boson space")
    f = np.asarray(f, dtype=complex).reshape(space.n_modes)
    mean = float(np.vdot(f, f).real) / 2
    tail = float(poisson.sf(space.cutoff - 2, mean)) if mean > 0 else 0.0
    if tail >= VACUUM_MASS_TOL:
        raise CutoffUnsafe(f"displacement tail {tail:.3g} beyond cutoff {space.cutoff}")
    # exp(i Phi(f)) = prod_k exp(beta_k a*_k - conj(beta_k) a_k) with beta = i f / sqrt(2)
    beta = 1j * f / np.sqrt(2)
    levels = 2 * space.cutoff + 24
    lower = np.diag(np.sqrt(np.arange(1, levels)), -1)
    occ = np.array(space.basis)
    out = np.ones((space.dim, space.dim), dtype=complex)
    for k, b in enumerate(beta):
        if b == 0:
            out *= occ[:, k][:, None] == occ[:, k][None, :]
            continue
        factor = sla.expm(b * lower - np.conj(b) * lower.T)
        out *= factor[np.ix_(occ[:, k], occ[:, k])]
    return out


def weyl_transformation(g, space: ModeSpace) -> np.ndarray:
    """``exp(a(g) - a*(g))``, which shifts ``a_k`` by ``g_k`` under conjugation."""
    return weyl_operator(1j * np.sqrt(2) * np.asarray(g, dtype=complex), space)


def second_quantize(C, space: ModeSpace, tol: float = 1e-12) -> np.ndarray:
    """``Gamma(C)``, the direct sum of the tensor powers of ``C``.

    Bosonic ``C`` must satisfy ``||C|| <= 1``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=complex))
    if C.shape != (space.n_modes, space.n_modes):
        raise ValueError("C must be n_modes x n_modes")
    if space.is_boson and np.linalg.norm(C, 2) > 1 + tol:
        raise ValueError("boson second quantization needs ||C|| <= 1")
    creators = [create(space, C[:, k]) for k in range(space.n_modes)]
    root = np.zeros(space.dim, dtype=complex)
    root[0] = 1.0
    return _apply_creators(space, creators, root)


def _psd_power(h: np.ndarray, power: float, floor: float = 1e-12) -> np.ndarray:
    """Power of a Hermitian PSD matrix; eigenvalues in ``(-floor, 0)`` become 0."""
    w, q = np.linalg.eigh((h + h.conj().T) / 2)
    w = np.where(w > -floor, np.clip(w, 0, None), w)
    if np.any(w < 0):
        raise ValueError("matrix is not positive semi-definite")
    if power < 0:
        keep = w > floor
        wp = np.zeros_like(w)
        wp[keep] = w[keep] ** power
    else:
        wp = w**power
    return (q * wp) @ q.conj().T


def bogoliubov_from_gaussian(g: GaussianData, tol: float = 1e-7) -> BogoliubovMap:
    """Bogoliubov map whose implementation sends the vacuum to the pure state ``g``.

    Boson data is recentered first; the map covers the centered part and the
    first moment is restored by a Weyl transformation.

    Raises
    ------
    NotPure
        When the species purity test fails.
    """
    centered = recenter(g)
    report = check_purity(centered, tol)
    if not report.pure:
        raise NotPure(f"purity residual {report.residual:.3g}")
    gamma, alpha = centered.gamma, centered.alpha
    n = g.n_modes
    if g.is_boson:
        u = _psd_power(np.eye(n) + gamma, 0.5)
        v = -alpha @ _psd_power(np.eye(n) + gamma.conj(), -0.5)
        return BogoliubovMap(u, v, g.statistics)
    return _fermion_from_projection(centered, tol)


def _fermion_from_projection(g: GaussianData, tol: float) -> BogoliubovMap:
    gamma, alpha = g.gamma, g.alpha
    n = g.n_modes
    w, q = np.linalg.eigh((gamma + gamma.conj().T) / 2)
    occupied = q[:, w > 0.5]
    p = occupied @ occupied.conj().T
    u = _psd_power(np.eye(n) - gamma, 0.5)
    v = alpha @ _psd_power(np.eye(n) - gamma.conj(), -0.5, floor=1e-9) + p
    candidate = BogoliubovMap(u, v, g.statistics)
    if _reproduces(candidate, gen1pdm(g), tol):
        return candidate
    # The closed form assumes the occupied projection is real. In general,
    # take an orthonormal basis of range(gt) and rotate it so u is Hermitian PSD.
    gt = gen1pdm(g)
    w, q = np.linalg.eigh((gt + gt.conj().T) / 2)
    basis = q[:, w > 0.5]
    lower = basis[n:]
    left, _, right = np.linalg.svd(lower)
    rot = (left @ right).conj().T
    basis = basis @ rot
    return BogoliubovMap(basis[n:].conj(), basis[:n], g.statistics)


def _reproduces(U: BogoliubovMap, gt: np.ndarray, tol: float) -> bool:
    return verify_relations(U).ok(tol) and np.linalg.norm(vacuum_image(U) - gt, 2) <= tol


def vacuum_image(U: BogoliubovMap) -> np.ndarray:
    """Generalized 1-pdm of ``UU Omega``, that is ``(U^*)^{-1} diag(0, 1) U^{-1}``."""
    n = U.n_modes
    d = np.diag(np.concatenate([np.zeros(n), np.ones(n)]))
    t = inverse(U).matrix.conj().T
    return t @ d @ t.conj().T


def transport_gen1pdm(gt: np.ndarray, U: BogoliubovMap) -> np.ndarray:
    """Generalized 1-pdm of ``UU rho UU^*`` given that of ``rho``."""
    t = inverse(U).matrix.conj().T
    return t @ gt @ t.conj().T


def diagonalize_gen1pdm(gt: np.ndarray, statistics, tol: float = 1e-8):
    """Normal form of a generalized 1-pdm.

    Returns ``(U, occ)`` such that ``transport_gen1pdm(diag-state, U) == gt``,
    where the diag-state has ``gamma = diag(occ)`` and ``alpha = 0``. Fermion
    occupations lie in ``[0, 1/2]``; boson occupations are non-negative.
    """
    statistics = Statistics.parse(statistics)
    n = gt.shape[0] // 2
    if statistics is Statistics.FERMION:
        first, occ = _fermion_normal_modes(gt, tol)
    else:
        first, occ = _boson_normal_modes(gt, tol)
    U = BogoliubovMap(first[:n], first[n:].conj(), statistics)
    return U, occ


def _swap_conj(x: np.ndarray) -> np.ndarray:
    n = x.shape[0] // 2
    return np.concatenate([x[n:].conj(), x[:n].conj()])


def _fermion_normal_modes(gt: np.ndarray, tol: float):
    n = gt.shape[0] // 2
    w, q = np.linalg.eigh((gt + gt.conj().T) / 2)
    half_band = max(tol, 1e-7)
    low = w < 0.5 - half_band
    half = np.abs(w - 0.5) <= half_band
    cols = [q[:, low]]
    occ = [w[low]]
    if half.any():
        h = q[:, half]
        # basis of the self-conjugate half space made of conjugation-invariant vectors
        cand = np.concatenate([(h + _swap_conj(h)) / 2, (h - _swap_conj(h)) / 2j], axis=1)
        gram = (cand.conj().T @ cand).real
        gw, gv = np.linalg.eigh(gram)
        keep = gw > 1e-10 * gw.max()
        real_basis = cand @ (gv[:, keep] / np.sqrt(gw[keep]))
        r = real_basis.shape[1] // 2
        paired = (real_basis[:, 0 : 2 * r : 2] + 1j * real_basis[:, 1 : 2 * r : 2]) / np.sqrt(2)
        cols.append(paired)
        occ.append(np.full(r, 0.5))
    first = np.concatenate(cols, axis=1)
    if first.shape[1] != n:
        raise ValueError("generalized 1-pdm lacks the particle-hole pairing structure")
    return first, np.concatenate(occ)


def _boson_normal_modes(gt: np.ndarray, tol: float):
    n = gt.shape[0] // 2
    sf = symplectic_form(n)
    w, q = np.linalg.eig(sf @ gt)
    keep = w.real > -0.5
    if keep.sum() != n:
        raise ValueError("generalized 1-pdm is not a boson covariance")
    vecs = q[:, keep]
    vals = w[keep].real
    order = np.argsort(vals)
    vecs, vals = vecs[:, order], vals[order]
    gram = vecs.conj().T @ sf @ vecs
    gram = (gram + gram.conj().T) / 2
    first = vecs @ _psd_power(gram, -0.5)
    return first, np.clip(vals, 0, None)
