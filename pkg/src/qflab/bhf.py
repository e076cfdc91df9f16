"""Bogoliubov-Hartree-Fock energies and variation over quasifree states.

A quasifree state is parameterized as

    rho = W UU rho_0 UU^* W^*

with ``UU`` implementing a Bogoliubov map, ``W`` the Weyl transformation
``exp(a(f) - a*(f))`` (bosons only, so the first moment is ``-f``), and
``rho_0`` a product state diagonal in the occupation basis: ``Gamma(C)/tr``
with ``C = diag(c)`` for bosons and a Slater factor times ``Gamma(B)/tr`` with
``B = diag(b)`` for fermions.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize as scipy_minimize

from qflab.bogoliubov import (
    BogoliubovMap,
    diagonalize_gen1pdm,
    generator_matrix,
    implement_unitary,
    second_quantize,
    transport_gen1pdm,
    weyl_transformation,
)
from qflab.errors import CutoffUnsafe, SpeciesMismatch
from qflab.fock import ModeSpace, Statistics, build_space, mass_above
from qflab.gaussian import GaussianData, gen1pdm, recenter
from qflab.representability import exchange_operator

log = logging.getLogger(__name__)

TOL = 1e-6
TOL_OPT = 1e-4


@dataclass(frozen=True, eq=False)
class TwoBodyHamiltonian:
    """``sum h_ij a*_i a_j + 1/2 sum V_(ij),(kl) a*_j a*_i a_k a_l`` plus optional extras.

    ``pairing`` adds ``1/2 sum (P_ij a*_i a*_j + h.c.)`` and ``drive`` adds
    ``sum (d_i a*_i + h.c.)`` (bosons only).
    """

    h: np.ndarray
    V: np.ndarray
    statistics: Statistics
    pairing: np.ndarray | None = None
    drive: np.ndarray | None = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        n = h.shape[0]
        V = np.asarray(self.V, dtype=complex).reshape(n * n, n * n)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "statistics", Statistics.parse(self.statistics))
        if self.pairing is not None:
            object.__setattr__(self, "pairing", np.asarray(self.pairing, dtype=complex).reshape(n, n))
        if self.drive is not None:
            if self.statistics is Statistics.FERMION:
                raise ValueError("a linear drive breaks fermion parity")
            object.__setattr__(self, "drive", np.asarray(self.drive, dtype=complex).reshape(n))
        if np.abs(h - h.conj().T).max() > 1e-12 or np.abs(V - V.conj().T).max() > 1e-12:
            raise ValueError("h and V must be Hermitian")
        ex = exchange_operator(n)
        if np.abs(ex @ V @ ex - V).max() > 1e-12:
            raise ValueError("V must be exchange symmetric")

    @property
    def n_modes(self) -> int:
        return self.h.shape[0]

    @property
    def conserves_number(self) -> bool:
        return self.pairing is None and self.drive is None

    def fock_matrix(self, space: ModeSpace) -> np.ndarray:
        """Dense matrix of the Hamiltonian on ``space``."""
        if space.statistics is not self.statistics or space.n_modes != self.n_modes:
            raise SpeciesMismatch("Hamiltonian does not match the mode space")
        a, c = space.annihilators(), space.creators()
        n = self.n_modes
        out = np.zeros((space.dim, space.dim), dtype=complex)
        for i, j in itertools.product(range(n), repeat=2):
            if self.h[i, j] != 0:
                out += self.h[i, j] * c[i] @ a[j]
        for (i, j), (k, l) in itertools.product(itertools.product(range(n), repeat=2), repeat=2):
            coeff = self.V[i * n + j, k * n + l]
            if coeff != 0:
                out += 0.5 * coeff * c[j] @ c[i] @ a[k] @ a[l]
        extra = np.zeros_like(out)
        if self.pairing is not None:
            for i, j in itertools.product(range(n), repeat=2):
                extra += 0.5 * self.pairing[i, j] * c[i] @ c[j]
        if self.drive is not None:
            for i in range(n):
                extra += self.drive[i] * c[i]
        return out + extra + extra.conj().T


def quasifree_two_pdm(g: GaussianData) -> np.ndarray:
    """Closed-form 2-pdm of a quasifree state from its ``(gamma, alpha, b)``."""
    gam, alp = g.gamma, g.alpha
    n = g.n_modes
    if g.is_boson:
        b = g.b
        t = (
            np.einsum("lk,ij->ijkl", alp.conj(), alp)
            + np.einsum("il,jk->ijkl", gam, gam)
            + np.einsum("jl,ik->ijkl", gam, gam)
            - 2 * np.einsum("i,j,k,l->ijkl", b, b, b.conj(), b.conj())
        )
    else:
        t = (
            np.einsum("lk,ji->ijkl", alp.conj(), alp)
            - np.einsum("il,jk->ijkl", gam, gam)
            + np.einsum("jl,ik->ijkl", gam, gam)
        )
    return t.reshape(n * n, n * n)


def energy_functional(
    gamma: np.ndarray,
    Gamma: np.ndarray,
    H: TwoBodyHamiltonian,
    alpha: np.ndarray | None = None,
    b: np.ndarray | None = None,
) -> float:
    """``tr(h gamma) + 1/2 tr(V Gamma)`` plus pairing and drive contributions.

    ``alpha`` and ``b`` are required when ``H`` carries the matching extra terms.
    """
    energy = np.trace(H.h @ gamma) + 0.5 * np.trace(H.V @ Gamma)
    if H.pairing is not None:
        if alpha is None:
            raise ValueError("pairing term needs alpha")
        energy += np.sum(H.pairing * alpha.conj()).real
    if H.drive is not None:
        if b is None:
            raise ValueError("drive term needs b")
        energy += 2 * np.vdot(H.drive, b).real
    return float(np.real(energy))


def quasifree_energy(g: GaussianData, H: TwoBodyHamiltonian) -> float:
    return energy_functional(g.gamma, quasifree_two_pdm(g), H, g.alpha, g.b)


# --- parameters ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuasifreeParams:
    """Parameters of ``W UU rho_0 UU^* W^*``.

    ``mixing`` holds ``c_k`` in ``[0, 1)`` for bosons and ``b_k >= 0`` for
    fermions; ``slater`` lists zero-based fermion modes occupied with
    certainty (their ``mixing`` entry is ignored).
    """

    statistics: Statistics
    bogoliubov: BogoliubovMap
    displacement: np.ndarray
    mixing: np.ndarray
    slater: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "statistics", Statistics.parse(self.statistics))
        n = self.bogoliubov.n_modes
        object.__setattr__(self, "displacement", np.asarray(self.displacement, dtype=complex).reshape(n))
        object.__setattr__(self, "mixing", np.asarray(self.mixing, dtype=float).reshape(n))
        object.__setattr__(self, "slater", tuple(sorted(int(k) for k in self.slater)))
        if self.bogoliubov.statistics is not self.statistics:
            raise SpeciesMismatch("Bogoliubov map has the wrong statistics")
        if self.statistics is Statistics.BOSON:
            if self.slater:
                raise ValueError("bosons take no Slater factor")
            if np.any(self.mixing < 0) or np.any(self.mixing >= 1):
                raise ValueError("boson mixing must lie in [0, 1)")
        else:
            if np.any(self.displacement != 0):
                raise ValueError("fermion states are even; displacement must vanish")
            if np.any(self.mixing < 0):
                raise ValueError("fermion mixing must be non-negative")

    @property
    def n_modes(self) -> int:
        return self.bogoliubov.n_modes

    @classmethod
    def vacuum(cls, n_modes: int, statistics) -> "QuasifreeParams":
        return cls(
            statistics,
            BogoliubovMap.identity(n_modes, statistics),
            np.zeros(n_modes),
            np.zeros(n_modes),
        )

    def occupations(self) -> np.ndarray:
        """Mode occupations of ``rho_0``."""
        if self.statistics is Statistics.BOSON:
            return self.mixing / (1 - self.mixing)
        occ = self.mixing / (1 + self.mixing)
        occ[list(self.slater)] = 1.0
        return occ

    @property
    def is_pure(self) -> bool:
        free = [k for k in range(self.n_modes) if k not in self.slater]
        return bool(np.all(self.mixing[free] == 0))

    def moments(self) -> GaussianData:
        """Exact ``(gamma, alpha, b)`` of the parameterized state."""
        n = self.n_modes
        occ = self.occupations()
        sign = 1.0 if self.statistics is Statistics.BOSON else -1.0
        gt0 = np.diag(np.concatenate([occ, 1 + sign * occ])).astype(complex)
        gt = transport_gen1pdm(gt0, self.bogoliubov)
        b = -self.displacement
        gamma = gt[:n, :n] + np.outer(b, b.conj())
        alpha = gt[:n, n:] + np.outer(b, b)
        return GaussianData(gamma, alpha, b, self.statistics)


def _reference_state(p: QuasifreeParams, space: ModeSpace) -> np.ndarray:
    if p.statistics is Statistics.BOSON:
        gc = second_quantize(np.diag(p.mixing), space)
        return gc / np.trace(gc)
    occ = p.occupations()
    weights = np.array(
        [np.prod([o if x else 1 - o for o, x in zip(occ, basis)]) for basis in space.basis]
    )
    return np.diag(weights).astype(complex)


def realize_state(p: QuasifreeParams, space: ModeSpace, threshold: float = 1e-10) -> np.ndarray:
    """Fock density matrix of the parameterized quasifree state.

    Raises
    ------
    CutoffUnsafe
        When the realized boson state has weight ``>= threshold`` above
        occupation ``cutoff - 2``.
    BranchAmbiguity, InvalidBogoliubov
        Propagated from the unitary implementation.
    """
    if p.statistics is not space.statistics or p.n_modes != space.n_modes:
        raise SpeciesMismatch("parameters do not match the mode space")
    uu = implement_unitary(p.bogoliubov, space)
    rho = uu @ _reference_state(p, space) @ uu.conj().T
    if p.statistics is Statistics.BOSON:
        if np.any(p.displacement != 0):
            w = weyl_transformation(p.displacement, space)
            rho = w @ rho @ w.conj().T
        mass = mass_above(space, rho, space.cutoff - 2)
        if mass >= threshold:
            raise CutoffUnsafe(f"realized state has weight {mass:.3g} near the cutoff")
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def decompose_quasifree(g: GaussianData, tol: float = 1e-8) -> QuasifreeParams:
    """Parameters of the quasifree state with data ``g``.

    Fermion occupations are taken in ``[0, 1/2]``, so no Slater factor is
    needed; particle-hole exchanges are absorbed into the Bogoliubov map.
    """
    centered = recenter(g)
    U, occ = diagonalize_gen1pdm(gen1pdm(centered), g.statistics, tol)
    if g.is_boson:
        mixing = occ / (1 + occ)
        return QuasifreeParams(g.statistics, U, -g.b, mixing)
    occ = np.clip(occ, 0, 0.5)
    return QuasifreeParams(g.statistics, U, np.zeros(g.n_modes), occ / (1 - occ))


def convex_decompose(p: QuasifreeParams, K: int | None = None) -> list[tuple[float, QuasifreeParams]]:
    """Expand a mixed fermion quasifree state into weighted pure ones.

    Terms are indexed by the set of additionally occupied modes; ``K`` caps its
    size (``None`` keeps every term). Zero-weight terms are dropped.
    """
    if p.statistics is not Statistics.FERMION:
        raise SpeciesMismatch("convex decomposition is implemented for fermions")
    occ = p.occupations()
    free = [k for k in range(p.n_modes) if k not in p.slater]
    K = len(free) if K is None else K
    zeros = np.zeros(p.n_modes)
    terms = []
    for size in range(min(K, len(free)) + 1):
        for extra in itertools.combinations(free, size):
            weight = float(np.prod([occ[k] if k in extra else 1 - occ[k] for k in free]))
            if weight == 0:
                continue
            pure = replace(p, mixing=zeros, slater=tuple(p.slater) + extra)
            terms.append((weight, pure))
    return terms


# --- optimizer ------------------------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    restarts: int = 20
    seed: int = 0
    maxiter: int = 20000
    polish_rounds: int = 3
    init_scale: float = 0.7
    tol: float = TOL
    tol_opt: float = TOL_OPT


@dataclass
class BHFResult:
    energy: float
    params: QuasifreeParams
    mode: str
    converged: bool
    restart_energies: list[float] = field(default_factory=list)
    trace: list[list[float]] = field(default_factory=list)
    vector: np.ndarray | None = field(default=None, repr=False)


class _Encoding:
    """Real parameter vector <-> :class:`QuasifreeParams`.

    Mixing entries are squared maps (``x^2`` for boson occupations and
    ``sin^2 x`` for fermion occupations) so pure states sit at interior
    points of the search space.
    """

    def __init__(self, n: int, statistics: Statistics, mixed: bool, slater=()):
        self.n = n
        self.statistics = statistics
        self.mixed = mixed
        self.slater = tuple(slater)
        self.iu = np.triu_indices(n, 1)
        boson = statistics is Statistics.BOSON
        self.b_idx = np.triu_indices(n, 0 if boson else 1)
        self.sizes = [n, len(self.iu[0]) * 2, len(self.b_idx[0]) * 2]
        self.sizes.append(2 * n if boson else 0)
        self.sizes.append(n if mixed else 0)
        self.size = sum(self.sizes)

    def unpack(self, x: np.ndarray):
        """Split ``x`` into ``(A, B, f, mixing)``."""
        n = self.n
        diag, off, pair, disp, mix = np.split(x, np.cumsum(self.sizes)[:-1])
        A = np.diag(1j * diag).astype(complex)
        upper = off[: len(off) // 2] + 1j * off[len(off) // 2 :]
        A[self.iu] = upper
        A[(self.iu[1], self.iu[0])] = -upper.conj()
        B = np.zeros((n, n), dtype=complex)
        B[self.b_idx] = pair[: len(pair) // 2] + 1j * pair[len(pair) // 2 :]
        if self.statistics is Statistics.BOSON:
            B = B + np.triu(B, 1).T
            f = disp[:n] + 1j * disp[n:]
            nu = mix**2 if self.mixed else np.zeros(n)
            mixing = nu / (1 + nu)
        else:
            B = B - B.T
            f = np.zeros(n, dtype=complex)
            lam = np.sin(mix) ** 2 if self.mixed else np.zeros(n)
            lam = np.minimum(lam, 1 - 1e-15)
            mixing = lam / (1 - lam)
        return A, B, f, mixing

    def decode(self, x: np.ndarray) -> QuasifreeParams:
        A, B, f, mixing = self.unpack(x)
        U = BogoliubovMap.from_generator(A, B, self.statistics)
        return QuasifreeParams(self.statistics, U, f, mixing, () if self.mixed else self.slater)

    def moments(self, x: np.ndarray) -> GaussianData:
        """Same as ``decode(x).moments()`` without building intermediate objects."""
        n = self.n
        A, B, f, mixing = self.unpack(x)
        boson = self.statistics is Statistics.BOSON
        t = expm(generator_matrix(A, B, self.statistics))
        if boson:
            occ = mixing / (1 - mixing)
            t[:n, n:] *= -1
            t[n:, :n] *= -1
        else:
            occ = mixing / (1 + mixing)
            occ[list(self.slater if not self.mixed else ())] = 1.0
        sign = 1.0 if boson else -1.0
        d = np.concatenate([occ, 1 + sign * occ])
        gt = (t * d) @ t.conj().T
        b = -f
        return GaussianData(gt[:n, :n] + np.outer(b, b.conj()), gt[:n, n:] + np.outer(b, b), b, self.statistics)


def _objective(enc: _Encoding, H: TwoBodyHamiltonian):
    def energy(x):
        return quasifree_energy(enc.moments(x), H)

    return energy


def minimize(
    H: TwoBodyHamiltonian,
    space: ModeSpace | None = None,
    mode: str = "pure",
    opts: SolverOptions | None = None,
) -> BHFResult:
    """Minimize the quasifree energy by multi-start Nelder-Mead.

    ``mode="pure"`` fixes the mixing spectrum to zero; fermions then search
    both parity sectors (empty and one-mode Slater factor). For bosons the
    Hamiltonian must first pass :func:`boundedness_probe` on ``space``.
    """
    opts = opts or SolverOptions()
    if mode not in ("pure", "mixed"):
        raise ValueError("mode must be 'pure' or 'mixed'")
    if H.statistics is Statistics.BOSON and space is not None:
        boundedness_probe(H, space)
    rng = np.random.default_rng(opts.seed)
    mixed = mode == "mixed"
    sectors = [()] if (mixed or H.statistics is Statistics.BOSON) else [(), (0,)]
    best: BHFResult | None = None
    energies, traces = [], []
    for restart in range(opts.restarts):
        slater = sectors[restart % len(sectors)]
        enc = _Encoding(H.n_modes, H.statistics, mixed, slater)
        fun = _objective(enc, H)
        x = opts.init_scale * rng.normal(size=enc.size)
        history: list[float] = []
        converged = False
        value = fun(x)
        for _ in range(opts.polish_rounds):
            res = scipy_minimize(
                fun,
                x,
                method="Nelder-Mead",
                callback=lambda intermediate_result: history.append(float(intermediate_result.fun)),
                options={
                    "maxiter": opts.maxiter,
                    "maxfev": 2 * opts.maxiter,
                    "xatol": 1e-8,
                    "fatol": 1e-11,
                    "adaptive": enc.size > 4,
                },
            )
            improvement = value - res.fun
            x, value = res.x, float(res.fun)
            if improvement < 1e-12:
                converged = bool(res.success)
                break
        energies.append(value)
        traces.append(history)
        log.debug("restart %d sector %s energy %.12g", restart, slater, value)
        if best is None or value < best.energy:
            best = BHFResult(value, enc.decode(x), mode, converged, vector=x)
    best.restart_energies = energies
    best.trace = traces
    return best


def stationarity(H: TwoBodyHamiltonian, result: BHFResult, step: float = 1e-6) -> float:
    """Central finite-difference gradient norm of the energy at ``result``.

    A diagnostic only: small values indicate a stationary point in the
    optimizer's coordinates.
    """
    enc = _Encoding(H.n_modes, H.statistics, result.mode == "mixed", result.params.slater)
    fun = _objective(enc, H)
    x = np.asarray(result.vector, dtype=float)
    grad = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        grad[k] = (fun(x + e) - fun(x - e)) / (2 * step)
    return float(np.linalg.norm(grad))


def exact_ground_energy(H: TwoBodyHamiltonian, space: ModeSpace) -> float:
    """Lowest eigenvalue of the truncated Hamiltonian."""
    mat = H.fock_matrix(space)
    return float(np.linalg.eigvalsh((mat + mat.conj().T) / 2)[0])


def boundedness_probe(H: TwoBodyHamiltonian, space: ModeSpace, step: int = 4, tol: float = 1e-3) -> float:
    """Check that the boson ground energy is stable when the cutoff grows by ``step``.

    Returns the ground energy at the larger cutoff.
    """
    if H.statistics is not Statistics.BOSON:
        return exact_ground_energy(H, space)
    e_small = exact_ground_energy(H, space)
    bigger = build_space(space.n_modes, space.statistics, space.cutoff + step)
    e_big = exact_ground_energy(H, bigger)
    if abs(e_small - e_big) > tol:
        raise ValueError(
            f"Hamiltonian looks unbounded: ground energy {e_small:.6g} vs {e_big:.6g}"
        )
    return e_big


def random_mixed_params(n: int, statistics, rng: np.random.Generator, scale: float = 0.5):
    """Random mixed quasifree parameters, used to sample the mixed side."""
    enc = _Encoding(n, Statistics.parse(statistics), mixed=True)
    return enc.decode(scale * rng.normal(size=enc.size))


@dataclass
class PureMixedReport:
    e_pure: float
    e_mixed: float
    e_exact: float
    sampled_min: float
    gap: float
    sampled_ok: bool
    gap_ok: bool
    exact_ok: bool
    pure: BHFResult | None = field(default=None, repr=False)
    mixed: BHFResult | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.sampled_ok and self.gap_ok and self.exact_ok

    def to_json(self) -> dict:
        keys = ("e_pure", "e_mixed", "e_exact", "sampled_min", "gap")
        out = {k: float(getattr(self, k)) for k in keys}
        out.update({k: bool(getattr(self, k)) for k in ("sampled_ok", "gap_ok", "exact_ok")})
        return out


def verify_pure_equals_mixed(
    H: TwoBodyHamiltonian,
    space: ModeSpace,
    n_mixed_samples: int = 200,
    opts: SolverOptions | None = None,
) -> PureMixedReport:
    """Compare the pure and mixed quasifree minima and sample the mixed side."""
    opts = opts or SolverOptions()
    pure = minimize(H, space, "pure", opts)
    mixed = minimize(H, space, "mixed", opts)
    rng = np.random.default_rng(opts.seed + 1)
    samples = [
        quasifree_energy(random_mixed_params(H.n_modes, H.statistics, rng).moments(), H)
        for _ in range(n_mixed_samples)
    ]
    e_exact = exact_ground_energy(H, space)
    sampled_min = float(min(samples))
    return PureMixedReport(
        e_pure=pure.energy,
        e_mixed=mixed.energy,
        e_exact=e_exact,
        sampled_min=sampled_min,
        gap=abs(pure.energy - mixed.energy),
        sampled_ok=pure.energy <= sampled_min + opts.tol,
        gap_ok=abs(pure.energy - mixed.energy) <= opts.tol_opt,
        exact_ok=pure.energy >= e_exact - opts.tol,
        pure=pure,
        mixed=mixed,
    )
