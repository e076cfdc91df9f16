"""Two-particle density matrices and positivity (representability) conditions.

Pair index convention: ``e_i (x) e_j`` sits at row ``i * n + j``. The 2-pdm is

    Gamma[(i, j), (k, l)] = omega(a*_l a*_k a_i a_j)

and the generalized 2-pdm is the Gram matrix ``M[m, n] = omega(O_n O_m^*)`` of
the ordered operator list

    a*_k a*_l | a*_k a_l | a_k a*_l | a_k a_l | a*_k | a_k | 1

so that ``<y, M x> = omega(P(x) P(y)^*)`` for ``P(x) = sum_m x_m O_m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qflab.fock import ModeSpace, require_cutoff_safe, validate_density_matrix
from qflab.gaussian import further_gen1pdm, gaussian_from_density_matrix

TOL = 1e-8


def exchange_operator(n: int) -> np.ndarray:
    """Permutation matrix with ``Ex (e_i (x) e_j) = e_j (x) e_i``."""
    ex = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            ex[j * n + i, i * n + j] = 1.0
    return ex


def _state_factors(rho: np.ndarray, cutoff: float = 1e-14):
    w, q = np.linalg.eigh((rho + rho.conj().T) / 2)
    keep = w > cutoff * max(1.0, w[-1])
    return w[keep], q[:, keep]


def state_gram(rho: np.ndarray, ops: list[np.ndarray]) -> np.ndarray:
    """``G[r, c] = omega(ops[c]^* ops[r])`` computed through the spectral factors of ``rho``."""
    w, q = _state_factors(rho)
    vecs = np.stack([op @ q for op in ops])  # (m, dim, rank)
    weighted = vecs * np.sqrt(w)
    flat = weighted.reshape(len(ops), -1)
    return flat @ flat.conj().T


def two_pdm_from_state(
    rho: np.ndarray, space: ModeSpace, margin: int = 4, threshold: float = 1e-12
) -> np.ndarray:
    """Two-particle density matrix of ``rho``, shape ``(n^2, n^2)``.

    Raises
    ------
    CutoffUnsafe
        For bosons with weight above occupation ``cutoff - margin``.
    """
    validate_density_matrix(rho)
    require_cutoff_safe(space, rho, margin=margin, threshold=threshold)
    ann = space.annihilators()
    n = space.n_modes
    pairs = [ann[i] @ ann[j] for i in range(n) for j in range(n)]
    return state_gram(rho, pairs)


@dataclass(frozen=True)
class ConditionReport:
    """Verdict of one positivity test.

    ``margin`` is the smallest eigenvalue (or sampled margin); ``witness`` is
    the vector certifying a violation, ``None`` when the test passes.
    """

    name: str
    ok: bool
    margin: float
    witness: np.ndarray | None = field(default=None, compare=False)
    details: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        out = {"name": self.name, "ok": self.ok, "margin": self.margin}
        if self.witness is not None:
            w = np.asarray(self.witness)
            out["witness"] = {"re": w.real.ravel().tolist(), "im": w.imag.ravel().tolist()}
        out.update(self.details)
        return out


def _scale(m: np.ndarray) -> float:
    return max(1.0, float(np.linalg.norm(m, 2))) if m.size else 1.0


def _min_eig(m: np.ndarray):
    h = (m + m.conj().T) / 2
    w, q = np.linalg.eigh(h)
    return float(w[0]), q[:, 0]


def check_admissible(
    gamma: np.ndarray,
    Gamma: np.ndarray,
    expected_N: float,
    statistics="boson",
    tol: float = TOL,
) -> ConditionReport:
    """Finite-dimensional admissibility of a ``(gamma, Gamma)`` pair.

    (i) ``Gamma`` Hermitian with the exchange symmetry of the species;
    (ii) ``gamma`` Hermitian PSD with trace ``expected_N``.
    """
    n = gamma.shape[0]
    ex = exchange_operator(n)
    sign = 1.0 if str(getattr(statistics, "value", statistics)).lower() == "boson" else -1.0
    failures = []
    herm = float(np.linalg.norm(Gamma - Gamma.conj().T, 2))
    sym = float(
        max(np.linalg.norm(ex @ Gamma - sign * Gamma, 2), np.linalg.norm(Gamma @ ex - sign * Gamma, 2))
    )
    scale = _scale(Gamma)
    if herm > tol * scale:
        failures.append("Gamma not Hermitian")
    if sym > tol * scale:
        failures.append("Gamma lacks exchange symmetry")
    if np.linalg.norm(gamma - gamma.conj().T, 2) > tol * _scale(gamma):
        failures.append("gamma not Hermitian")
    low, vec = _min_eig(gamma)
    witness = None
    if low < -tol * _scale(gamma):
        failures.append("gamma not positive semi-definite")
        witness = vec
    trace = float(np.trace(gamma).real)
    if abs(trace - expected_N) > tol * max(1.0, abs(expected_N)):
        failures.append(f"tr gamma = {trace:.6g} differs from {expected_N}")
    return ConditionReport(
        "admissible",
        not failures,
        min(low, 0.0),
        witness,
        {"failures": failures, "hermiticity": herm, "exchange": sym},
    )


def check_P(Gamma: np.ndarray, tol: float = TOL) -> ConditionReport:
    """``Gamma >= 0``."""
    low, vec = _min_eig(Gamma)
    ok = low >= -tol * _scale(Gamma)
    return ConditionReport("P", bool(ok), low, None if ok else vec)


def g_matrix(gamma: np.ndarray, Gamma: np.ndarray) -> np.ndarray:
    """Hermitian form ``Gm`` on vectorized ``A`` with ``x^* Gm x`` equal to the G-margin.

    The margin of an operator ``A`` is
    ``tr((A^* (x) A)[Gamma + Ex(gamma (x) 1)]) - |tr(A gamma)|^2`` and
    ``x = A.ravel()``.
    """
    n = gamma.shape[0]
    g2 = Gamma + exchange_operator(n) @ np.kron(gamma, np.eye(n))
    t = g2.reshape(n, n, n, n).transpose(0, 2, 3, 1).reshape(n * n, n * n)
    lin = gamma.conj().T.ravel()
    form = t - np.outer(lin, lin.conj())
    return (form + form.conj().T) / 2


def g_margin(gamma: np.ndarray, Gamma: np.ndarray, A: np.ndarray) -> float:
    """G-condition margin for a single trial operator, evaluated directly."""
    n = gamma.shape[0]
    g2 = Gamma + exchange_operator(n) @ np.kron(gamma, np.eye(n))
    lhs = np.trace(np.kron(A.conj().T, A) @ g2)
    return float((lhs - abs(np.trace(A @ gamma)) ** 2).real)


def default_trial_ops(n: int, rng: np.random.Generator, n_random: int = 50) -> list[np.ndarray]:
    """Matrix units plus random Hermitian and non-Hermitian operators."""
    ops = []
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1.0
            ops.append(e)
    for _ in range(n_random):
        x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        ops.append((x + x.conj().T) / 2)
        ops.append(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return ops


def check_G(
    gamma: np.ndarray,
    Gamma: np.ndarray,
    trial_ops: list[np.ndarray] | None = None,
    tol: float = TOL,
    rng: np.random.Generator | None = None,
) -> ConditionReport:
    """G-condition over all ``A`` via the smallest eigenvalue of :func:`g_matrix`.

    The verdict is exact; ``trial_ops`` are evaluated as well and the worst
    sampled margin is reported in ``details``. The witness is an ``n x n``
    operator ``A``.
    """
    n = gamma.shape[0]
    if trial_ops is None:
        trial_ops = default_trial_ops(n, rng or np.random.default_rng(0))
    form = g_matrix(gamma, Gamma)
    low, vec = _min_eig(form)
    scale = _scale(form)
    ok = low >= -tol * scale
    sampled = min(g_margin(gamma, Gamma, a) / max(1.0, np.linalg.norm(a) ** 2) for a in trial_ops)
    witness = None if ok else vec.reshape(n, n)
    return ConditionReport(
        "G", bool(ok), low, witness, {"worst_sampled_margin": float(sampled)}
    )


def q_matrix(gamma: np.ndarray, Gamma: np.ndarray) -> np.ndarray:
    """``Gamma + (1 + Ex)(gamma (x) 1 + 1 (x) gamma + 1 (x) 1)``."""
    n = gamma.shape[0]
    one = np.eye(n)
    ex = exchange_operator(n)
    return Gamma + (np.eye(n * n) + ex) @ (np.kron(gamma, one) + np.kron(one, gamma) + np.kron(one, one))


def check_Q(gamma: np.ndarray, Gamma: np.ndarray, tol: float = TOL) -> ConditionReport:
    form = q_matrix(gamma, Gamma)
    low, vec = _min_eig(form)
    ok = low >= -tol * _scale(form)
    return ConditionReport("Q", bool(ok), low, None if ok else vec)


# --- generalized 2-pdm ----------------------------------------------------------

BLOCK_NAMES = ("a*a*", "a*a", "aa*", "aa", "a*", "a", "1")


@dataclass(frozen=True, eq=False)
class Gen2Pdm:
    """Generalized 2-pdm with 1-based block access."""

    matrix: np.ndarray
    n_modes: int

    @property
    def sizes(self) -> tuple[int, ...]:
        n = self.n_modes
        return (n * n,) * 4 + (n, n, 1)

    def _slice(self, i: int) -> slice:
        start = sum(self.sizes[: i - 1])
        return slice(start, start + self.sizes[i - 1])

    def block(self, i: int, j: int) -> np.ndarray:
        return self.matrix[self._slice(i), self._slice(j)]

    def gen1pdm(self) -> np.ndarray:
        s = slice(4 * self.n_modes**2, 4 * self.n_modes**2 + 2 * self.n_modes)
        return self.matrix[s, s]

    def further_gen1pdm(self) -> np.ndarray:
        s = slice(4 * self.n_modes**2, None)
        return self.matrix[s, s]


def gen2pdm_operators(space: ModeSpace) -> list[np.ndarray]:
    """The ordered operator list spanning all polynomials of degree <= 2."""
    ann, cre = space.annihilators(), space.creators()
    n = space.n_modes
    ops = []
    for left, right in ((cre, cre), (cre, ann), (ann, cre), (ann, ann)):
        ops.extend(left[k] @ right[l] for k in range(n) for l in range(n))
    ops.extend(cre)
    ops.extend(ann)
    ops.append(np.eye(space.dim, dtype=complex))
    return ops


def assemble_gen2pdm(
    rho: np.ndarray, space: ModeSpace, margin: int = 4, threshold: float = 1e-12
) -> Gen2Pdm:
    """Generalized 2-pdm of a boson state from its defining expectations.

    Raises
    ------
    CutoffUnsafe
        For weight above occupation ``cutoff - margin``.
    """
    if not space.is_boson:
        raise ValueError("the generalized 2-pdm is defined for boson states")
    validate_density_matrix(rho)
    require_cutoff_safe(space, rho, margin=margin, threshold=threshold)
    ops = [op.conj().T for op in gen2pdm_operators(space)]
    return Gen2Pdm(state_gram(rho, ops), space.n_modes)


def check_gen2pdm_psd(G: Gen2Pdm, tol: float = TOL) -> ConditionReport:
    """Positivity of the generalized 2-pdm, relative to its spectral scale."""
    low, vec = _min_eig(G.matrix)
    ok = low >= -tol * _scale(G.matrix)
    return ConditionReport("gen2pdm_psd", bool(ok), low, None if ok else vec)


def polynomial_from_vector(x: np.ndarray, n: int):
    """Degree-2 :class:`~qflab.wick.LadderPolynomial` with coefficients ``x`` on the operator list."""
    from qflab.wick import Factor, LadderPolynomial, Term

    terms = []
    idx = 0
    for left, right in ((True, True), (True, False), (False, True), (False, False)):
        for k in range(n):
            for l in range(n):
                if x[idx] != 0:
                    terms.append(Term(complex(x[idx]), (Factor(k + 1, left), Factor(l + 1, right))))
                idx += 1
    for creator in (True, False):
        for k in range(n):
            if x[idx] != 0:
                terms.append(Term(complex(x[idx]), (Factor(k + 1, creator),)))
            idx += 1
    if x[idx] != 0:
        terms.append(Term(complex(x[idx]), ()))
    return LadderPolynomial(tuple(terms))


@dataclass(frozen=True)
class HarnessReport:
    samples: int
    min_value: float
    all_nonnegative: bool
    gen2pdm_psd: bool
    matrix_conditions: bool | None
    max_form_mismatch: float
    witness: np.ndarray | None = field(default=None, compare=False)

    @property
    def verdicts_agree(self) -> bool:
        agree = self.all_nonnegative == self.gen2pdm_psd
        if self.matrix_conditions is not None:
            agree = agree and self.matrix_conditions == self.all_nonnegative
        return agree


def polynomial_positivity_harness(
    rho: np.ndarray | None,
    space: ModeSpace,
    samples: int = 100,
    rng: np.random.Generator | None = None,
    gen2pdm: Gen2Pdm | None = None,
    particle_conserving: bool = False,
    tol: float = TOL,
) -> HarnessReport:
    """Sample ``omega(P P^*)`` over random polynomials of degree <= 2.

    With a state, values come from the Fock oracle and are compared with the
    quadratic form of the generalized 2-pdm. Without a state, ``gen2pdm`` is
    taken as given and values come from its quadratic form. The sampled set
    always includes the polynomial built from the lowest eigenvector of the
    generalized 2-pdm.

    When ``particle_conserving`` is set, the verdict is also compared with
    ``gamma >= 0`` plus the P and G conditions.
    """
    rng = rng or np.random.default_rng(0)
    if gen2pdm is None:
        gen2pdm = assemble_gen2pdm(rho, space)
    m = gen2pdm.matrix
    dim = m.shape[0]
    vectors = [rng.normal(size=dim) + 1j * rng.normal(size=dim) for _ in range(samples - 1)]
    # sparse samples probe individual blocks, including non-conserving ones
    for v in vectors[: samples // 2]:
        v[rng.random(dim) < 0.7] = 0
    low_vec = np.linalg.eigh((m + m.conj().T) / 2)[1][:, 0]
    vectors.append(low_vec)
    ops = gen2pdm_operators(space) if rho is not None else None
    values, mismatch = [], 0.0
    for v in vectors:
        form = float(np.vdot(v, m @ v).real)
        if ops is not None:
            p = sum((c * op for c, op in zip(v, ops) if c != 0), np.zeros_like(rho))
            value = float(np.einsum("ij,ji->", rho, p @ p.conj().T).real)
            mismatch = max(mismatch, abs(value - form) / max(1.0, abs(value)))
        else:
            value = form
        values.append(value / max(1.0, np.vdot(v, v).real))
    psd = check_gen2pdm_psd(gen2pdm, tol)
    min_value = float(min(values))
    all_nonneg = min_value >= -tol * _scale(m)
    matrix_conditions = None
    if particle_conserving and rho is not None:
        n = space.n_modes
        gamma = gaussian_from_density_matrix(rho, space).gamma
        Gamma = two_pdm_from_state(rho, space)
        low = _min_eig(gamma)[0]
        matrix_conditions = bool(
            low >= -tol and check_P(Gamma, tol).ok and check_G(gamma, Gamma, [np.eye(n)], tol).ok
        )
    worst = vectors[int(np.argmin(values))]
    return HarnessReport(
        samples=len(vectors),
        min_value=min_value,
        all_nonnegative=bool(all_nonneg),
        gen2pdm_psd=psd.ok,
        matrix_conditions=matrix_conditions,
        max_form_mismatch=float(mismatch),
        witness=None if all_nonneg else worst,
    )


# --- named maps of the explicit block form ---------------------------------------


def named_maps(rho: np.ndarray, space: ModeSpace) -> dict[str, np.ndarray]:
    """Moment maps entering the explicit block form of the generalized 2-pdm.

    Every map is returned as a matrix in the canonical basis; bars denote
    entrywise conjugation. Keys: ``Gamma, Lambda1, Lambda2_adj, Delta, A1,
    A2_adj, Q1, Q2, B, beta1, beta2, gamma, alpha, b``.
    """
    a, c = space.annihilators(), space.creators()
    n = space.n_modes

    def ev(*ops):
        op = ops[0]
        for x in ops[1:]:
            op = op @ x
        return np.einsum("ij,ji->", rho, op)

    pairs = [(i, j) for i in range(n) for j in range(n)]
    lam1 = np.array([[ev(c[k], c[l], c[j], a[i]) for k, l in pairs] for i, j in pairs])
    lam2 = np.array([[ev(c[k], c[l], c[j], c[i]) for k, l in pairs] for i, j in pairs])
    delta = np.array([[ev(c[k], c[i], a[j], a[l]) for k, l in pairs] for i, j in pairs])
    a1 = np.array([[ev(c[k], c[l], a[i]) for k, l in pairs] for i in range(n)])
    a2 = np.array([[ev(c[k], c[l], c[i]) for k, l in pairs] for i in range(n)])
    q1 = np.array([[ev(c[k], a[l], a[i]) for k, l in pairs] for i in range(n)])
    q2 = np.array([[ev(c[k], a[l], c[i]) for k, l in pairs] for i in range(n)])
    diag = np.eye(n).ravel()
    g = gaussian_from_density_matrix(rho, space)
    return {
        "Gamma": two_pdm_from_state(rho, space),
        "Lambda1": lam1,
        "Lambda2_adj": lam2,
        "Delta": delta,
        "A1": a1,
        "A2_adj": a2,
        "Q1": q1,
        "Q2": q2,
        "B": np.outer(diag, diag),
        "beta1": diag[None, :],
        "beta2": np.eye(n),
        "gamma": g.gamma,
        "alpha": g.alpha,
        "b": g.b,
    }


def closed_form_blocks(maps: dict[str, np.ndarray]) -> dict[tuple[int, int], np.ndarray]:
    """Upper-triangle blocks ``(i, j)`` of the generalized 2-pdm from the named maps.

    Blocks are 1-based in the order of :func:`gen2pdm_operators`; block
    ``(i, j)`` maps the ``j``-th summand into the ``i``-th.
    """
    h = lambda x: x.conj().T  # noqa: E731
    Gm, L1, L2a = maps["Gamma"], maps["Lambda1"], maps["Lambda2_adj"]
    D, A1, A2a = maps["Delta"], maps["A1"], maps["A2_adj"]
    Q1, Q2, B = maps["Q1"], maps["Q2"], maps["B"]
    b1, b2 = maps["beta1"], maps["beta2"]
    gam, alp, b = maps["gamma"], maps["alpha"], maps["b"]
    n = gam.shape[0]
    one = np.eye(n)
    ex = exchange_operator(n)
    I2 = np.eye(n * n)
    bcol = b[:, None]
    return {
        (1, 1): Gm,
        (1, 2): h(L1),
        (1, 3): h(L1) @ ex + np.kron(alp, one) @ B,
        (1, 4): h(L2a),
        (1, 5): h(A1),
        (1, 6): h(A2a),
        (1, 7): np.kron(alp, one) @ h(b1),
        (2, 2): ex @ D + np.kron(gam, one),
        (2, 3): h(D) + np.kron(gam, one) @ (B + ex),
        (2, 4): ex @ L1.conj() + np.kron(alp, one) @ (I2 + ex),
        (2, 5): h(Q1),
        (2, 6): h(Q2),
        (2, 7): np.kron(gam, one) @ h(b1),
        (3, 3): D @ ex + np.kron(one, gam) @ B + B @ np.kron(one, gam) + B + np.kron(one, gam),
        (3, 4): L1.conj() + np.kron(one, alp) @ (I2 + ex) + B @ np.kron(one, alp),
        (3, 5): ex @ h(Q1) + h(b1) @ h(bcol),
        (3, 6): ex @ h(Q2) + h(b1) @ bcol.T,
        (3, 7): (np.kron(one, one) + np.kron(one, gam)) @ h(b1),
        (4, 4): Gm.T + (np.kron(one, one) + np.kron(gam.conj(), one) + np.kron(one, gam.conj())) @ (I2 + ex),
        (4, 5): A2a.T,
        (4, 6): A1.T + (I2 + ex) @ np.kron(one, bcol.conj()) @ h(b2),
        (4, 7): np.kron(h(alp), one) @ h(b1),
        (5, 5): gam,
        (5, 6): alp,
        (5, 7): bcol,
        (6, 6): one + gam.conj(),
        (6, 7): bcol.conj(),
        (7, 7): np.ones((1, 1)),
    }


def audit_closed_form(rho: np.ndarray, space: ModeSpace) -> dict[tuple[int, int], float]:
    """Max deviation of each closed-form block from the definition-built one."""
    built = assemble_gen2pdm(rho, space)
    blocks = closed_form_blocks(named_maps(rho, space))
    return {key: float(np.abs(val - built.block(*key)).max()) for key, val in blocks.items()}
