"""Ladder-operator polynomials and their quasifree expectations.

Grammar (whitespace is ignored)::

    poly   := ["+" | "-"] term (("+" | "-") term)*
    term   := coeff factor* | factor+
    coeff  := number | "(" number "," number ")"
    factor := ("a" | "c") ["*"] "(" integer ")"

Mode labels in the text start at 1.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from qflab.errors import NotAntisymmetric, ParseError, SpeciesMismatch
from qflab.fock import ModeSpace, require_cutoff_safe, validate_density_matrix
from qflab.gaussian import GaussianData, recenter

PFAFFIAN_RECURSION_MAX = 8


@dataclass(frozen=True)
class Factor:
    mode: int
    creator: bool
    symbol: str = "a"

    def __str__(self) -> str:
        return f"{self.symbol}{'*' if self.creator else ''}({self.mode})"


@dataclass(frozen=True)
class Term:
    coeff: complex
    factors: tuple[Factor, ...]

    @property
    def degree(self) -> int:
        return len(self.factors)


@dataclass(frozen=True)
class LadderPolynomial:
    terms: tuple[Term, ...]

    @property
    def degree(self) -> int:
        return max((t.degree for t in self.terms), default=0)

    @property
    def modes(self) -> set[int]:
        return {f.mode for t in self.terms for f in t.factors}

    @classmethod
    def monomial(cls, factors, coeff: complex = 1.0) -> "LadderPolynomial":
        return cls((Term(complex(coeff), tuple(factors)),))

    def adjoint(self) -> "LadderPolynomial":
        return LadderPolynomial(
            tuple(
                Term(
                    t.coeff.conjugate(),
                    tuple(Factor(f.mode, not f.creator, f.symbol) for f in reversed(t.factors)),
                )
                for t in self.terms
            )
        )

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(_format_term(t) for t in self.terms)


def _format_number(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def _format_term(t: Term) -> str:
    parts = []
    if t.coeff != 1 or not t.factors:
        parts.append(f"({_format_number(t.coeff.real)},{_format_number(t.coeff.imag)})")
    parts.extend(str(f) for f in t.factors)
    return " ".join(parts)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<sym>[ac])|(?P<op>[*(),+-]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str, value: str | None = None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] or "end of input"
            raise ParseError(f"expected {want!r}, found {got!r}", tok[2])
        self.i += 1
        return tok

    def signed_number(self) -> float:
        sign = 1.0
        if self.peek()[:2] == ("op", "-"):
            self.i += 1
            sign = -1.0
        elif self.peek()[:2] == ("op", "+"):
            self.i += 1
        return sign * float(self.take("num")[1])

    def polynomial(self) -> LadderPolynomial:
        terms = []
        sign = 1.0
        if self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1.0 if self.take("op")[1] == "-" else 1.0
        terms.append(self.term(sign))
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            sign = -1.0 if self.take("op")[1] == "-" else 1.0
            terms.append(self.term(sign))
        self.take("end")
        return LadderPolynomial(tuple(terms))

    def term(self, sign: float) -> Term:
        coeff = complex(sign)
        have_coeff = False
        kind, value, pos = self.peek()
        if kind == "num":
            coeff *= float(self.take("num")[1])
            have_coeff = True
        elif (kind, value) == ("op", "("):
            self.take("op", "(")
            re_part = self.signed_number()
            self.take("op", ",")
            im_part = self.signed_number()
            self.take("op", ")")
            coeff *= complex(re_part, im_part)
            have_coeff = True
        factors = []
        while self.peek()[0] == "sym":
            factors.append(self.factor())
        if not factors and not have_coeff:
            raise ParseError("expected a coefficient or ladder operator", pos)
        return Term(coeff, tuple(factors))

    def factor(self) -> Factor:
        symbol = self.take("sym")[1]
        creator = False
        if self.peek()[:2] == ("op", "*"):
            self.i += 1
            creator = True
        self.take("op", "(")
        kind, value, pos = self.peek()
        if kind != "num" or not value.isdigit():
            raise ParseError("mode label must be a positive integer", pos)
        self.i += 1
        mode = int(value)
        if mode < 1:
            raise ParseError("mode labels start at 1", pos)
        self.take("op", ")")
        return Factor(mode, creator, symbol)


def parse(text: str) -> LadderPolynomial:
    """Parse a ladder-operator polynomial.

    Raises
    ------
    ParseError
        With the character position of the first offending token.
    """
    return _Parser(text).polynomial()


def _as_polynomial(p) -> LadderPolynomial:
    if isinstance(p, LadderPolynomial):
        return p
    if isinstance(p, str):
        return parse(p)
    return LadderPolynomial.monomial(tuple(p))


# --- Pfaffian ---------------------------------------------------------------


def _pfaffian_recursive(m: np.ndarray) -> complex:
    n = m.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    rest = list(range(1, n))
    for pos, j in enumerate(rest):
        if m[0, j] == 0:
            continue
        keep = rest[:pos] + rest[pos + 1 :]
        total += (-1) ** pos * m[0, j] * _pfaffian_recursive(m[keep][:, keep])
    return total


def _pfaffian_elimination(m: np.ndarray) -> complex:
    """Parlett-Reid style elimination with partial pivoting."""
    a = np.array(m, dtype=complex)
    n = a.shape[0]
    result = 1.0 + 0j
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(a[k + 1 :, k])))
        if kp != k + 1:
            a[[k + 1, kp], :] = a[[kp, k + 1], :]
            a[:, [k + 1, kp]] = a[:, [kp, k + 1]]
            result = -result
        if a[k + 1, k] == 0:
            return 0.0
        result *= a[k, k + 1]
        if k + 2 < n:
            tau = a[k, k + 2 :] / a[k, k + 1]
            col = a[k + 2 :, k + 1].copy()
            a[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return result


def pfaffian(m, tol: float = 1e-10) -> complex:
    """Pfaffian of an antisymmetric matrix.

    Matrices up to 8 x 8 use first-row expansion; larger ones use pivoted
    elimination.

    Raises
    ------
    NotAntisymmetric
        If ``||M + M^T|| > tol`` (relative to the scale of ``M``).
    """
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.shape[0] != m.shape[1]:
        raise NotAntisymmetric("Pfaffian needs a square matrix")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m + m.T).max(initial=0.0) > tol * scale:
        raise NotAntisymmetric("matrix is not antisymmetric")
    n = m.shape[0]
    if n % 2:
        return 0j
    if n <= PFAFFIAN_RECURSION_MAX:
        return complex(_pfaffian_recursive(m))
    return complex(_pfaffian_elimination(m))


# --- contractions -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContractionTable:
    """Two-point and one-point functions of a quasifree state.

    For bosons the pair values refer to the recentered state.
    """

    data: GaussianData

    @classmethod
    def from_gaussian(cls, g: GaussianData) -> "ContractionTable":
        return cls(recenter(g))

    def pair(self, left: Factor, right: Factor) -> complex:
        g = self.data
        p, q = left.mode - 1, right.mode - 1
        sign = 1.0 if g.is_boson else -1.0
        if left.creator and not right.creator:
            return g.gamma[q, p]
        if not left.creator and right.creator:
            return float(p == q) + sign * g.gamma[p, q]
        if not left.creator:
            return g.alpha[q, p]
        return np.conj(g.alpha[p, q])

    def pair_matrix(self) -> np.ndarray:
        """All pair values; letter ``k`` is ``a(k+1)`` for ``k < n`` and ``a*(k-n+1)`` otherwise."""
        g = self.data
        n = g.n_modes
        sign = 1.0 if g.is_boson else -1.0
        out = np.empty((2 * n, 2 * n), dtype=complex)
        out[:n, :n] = g.alpha.T
        out[:n, n:] = sign * g.gamma
        out[:n, n:].flat[:: n + 1] += 1.0
        out[n:, :n] = g.gamma.T
        out[n:, n:] = g.alpha.conj()
        return out


def _letter_index(f: Factor, n: int) -> int:
    return f.mode - 1 + (n if f.creator else 0)


def _check_modes(g: GaussianData, poly: LadderPolynomial) -> None:
    if poly.modes and max(poly.modes) > g.n_modes:
        raise ValueError(f"polynomial uses mode {max(poly.modes)} beyond {g.n_modes}")


def fermion_quasifree_expectation(g: GaussianData, mono) -> complex:
    """Wick expectation in a fermionic quasifree state via a Pfaffian.

    ``mono`` may be a factor sequence, a :class:`LadderPolynomial` or its text.
    """
    if g.is_boson:
        raise SpeciesMismatch("fermion engine needs fermion data")
    poly = _as_polynomial(mono)
    _check_modes(g, poly)
    pairs = ContractionTable(g).pair_matrix()
    total = 0j
    for term in poly.terms:
        f = term.factors
        if len(f) % 2:
            continue
        idx = [_letter_index(x, g.n_modes) for x in f]
        upper = np.triu(pairs[idx][:, idx], 1)
        total += term.coeff * pfaffian(upper - upper.T)
    return total


def boson_quasifree_expectation(g: GaussianData, mono) -> complex:
    """Wick expectation in a bosonic quasifree state with first moment.

    Sums over all partitions of the factor positions into ordered pairs and
    singletons; pairs use the recentered two-point functions and singletons
    the first moment.
    """
    if not g.is_boson:
        raise SpeciesMismatch("boson engine needs boson data")
    poly = _as_polynomial(mono)
    _check_modes(g, poly)
    table = ContractionTable.from_gaussian(g)
    b = g.b
    total = 0j
    for term in poly.terms:
        f = term.factors
        means = [np.conj(b[x.mode - 1]) if x.creator else b[x.mode - 1] for x in f]

        @lru_cache(maxsize=None)
        def expand(positions: tuple[int, ...]) -> complex:
            if not positions:
                return 1.0
            first, rest = positions[0], positions[1:]
            value = means[first] * expand(rest) if means[first] != 0 else 0.0
            for idx, other in enumerate(rest):
                weight = table.pair(f[first], f[other])
                if weight != 0:
                    value += weight * expand(rest[:idx] + rest[idx + 1 :])
            return value

        total += term.coeff * expand(tuple(range(len(f))))
    return total


def quasifree_expectation(g: GaussianData, poly) -> complex:
    """Dispatch to the engine matching ``g.statistics``."""
    if g.is_boson:
        return boson_quasifree_expectation(g, poly)
    return fermion_quasifree_expectation(g, poly)


# --- oracle -------------------------------------------------------------------


def _max_raise(factors: tuple[Factor, ...]) -> int:
    level, worst = 0, 0
    for f in reversed(factors):
        level += 1 if f.creator else -1
        worst = max(worst, level)
    return worst


def operator_matrix(space: ModeSpace, poly) -> np.ndarray:
    """Dense Fock matrix of a polynomial."""
    poly = _as_polynomial(poly)
    if poly.modes and max(poly.modes) > space.n_modes:
        raise ValueError("polynomial uses modes beyond the space")
    ann, cre = space.annihilators(), space.creators()
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for term in poly.terms:
        op = np.eye(space.dim, dtype=complex)
        for f in reversed(term.factors):
            op = (cre if f.creator else ann)[f.mode - 1] @ op
        out += term.coeff * op
    return out


def oracle_expectation(
    rho: np.ndarray, space: ModeSpace, poly, threshold: float = 1e-12
) -> complex:
    """Brute-force ``tr(rho P)`` from dense ladder matrices.

    Raises
    ------
    CutoffUnsafe
        For bosons, if the operator product could push weight of ``rho``
        through the cutoff.
    """
    poly = _as_polynomial(poly)
    validate_density_matrix(rho)
    margin = max((_max_raise(t.factors) for t in poly.terms), default=0)
    require_cutoff_safe(space, rho, margin=margin, threshold=threshold)
    return complex(np.einsum("ij,ji->", rho, operator_matrix(space, poly)))
