"""Degree bookkeeping for metric functionals and the weak-field quadratic limit.

Polynomials are kept in three symbol families: metric components ``g_ab``,
inverse-metric components ``G^ab`` (rational in g, counted with degree 1 and
flagged) and derivative symbols ``g_ab,k``.  Coefficients are exact
fractions.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations, product

import numpy as np

from .canonical.point import FieldPoint
from .errors import DegenerateFit, DimensionTooSmall
from .grav_tensors import b_block
from .sampling import random_metric_array, random_symmetric

__all__ = [
    "MetricPolynomial",
    "poly_det",
    "poly_B",
    "TermReport",
    "SReport",
    "classify_S_terms",
    "WeakFieldFit",
    "weak_field_expand",
]

METRIC, INVERSE, DERIV = "g", "G", "dg"


def _sym(kind, a, b, k=None):
    a, b = sorted((int(a), int(b)))
    return (kind, a, b) if k is None else (kind, a, b, int(k))


def _perm_sign(perm) -> int:
    sign, seen = 1, [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        sign *= -1 if length % 2 == 0 else 1
    return sign


class MetricPolynomial:
    """Sparse polynomial: monomial (sorted tuple of (symbol, power)) -> Fraction."""

    __slots__ = ("terms", "flags")

    def __init__(self, terms=None, flags=()):
        self.terms: dict[tuple, Fraction] = {}
        for mono, c in (terms or {}).items():
            if c:
                self.terms[mono] = Fraction(c)
        self.flags = frozenset(flags)

    @classmethod
    def symbol(cls, sym) -> "MetricPolynomial":
        flags = ("inverse_metric",) if sym[0] == INVERSE else ()
        return cls({((sym, 1),): 1}, flags)

    @classmethod
    def constant(cls, c) -> "MetricPolynomial":
        return cls({(): c})

    def __add__(self, other):
        out = dict(self.terms)
        for mono, c in other.terms.items():
            out[mono] = out.get(mono, 0) + c
        return MetricPolynomial(out, self.flags | other.flags)

    def __neg__(self):
        return MetricPolynomial({m: -c for m, c in self.terms.items()}, self.flags)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, MetricPolynomial):
            return MetricPolynomial({m: c * Fraction(other) for m, c in self.terms.items()}, self.flags)
        acc = defaultdict(Fraction)
        for (ma, ca), (mb, cb) in product(self.terms.items(), other.terms.items()):
            powers = dict(ma)
            for s, e in mb:
                powers[s] = powers.get(s, 0) + e
            acc[tuple(sorted(powers.items()))] += ca * cb
        return MetricPolynomial(acc, self.flags | other.flags)

    __rmul__ = __mul__

    def __len__(self):
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self, kinds=(METRIC, INVERSE)) -> int:
        """Max total power over the given symbol families (metric ones by default)."""
        return max((sum(e for s, e in m if s[0] in kinds) for m in self.terms), default=0)

    def derivative_degree(self) -> int:
        return self.degree((DERIV,))

    def is_homogeneous(self, kinds=(METRIC, INVERSE)) -> bool:
        degs = {sum(e for s, e in m if s[0] in kinds) for m in self.terms}
        return len(degs) <= 1

    def evaluate(self, g, dg=None) -> float:
        """Numeric value; ``dg[k-1, a, b]`` supplies derivative symbols."""
        g = np.asarray(g, dtype=float)
        gu = np.linalg.inv(g)
        total = 0.0
        for mono, c in self.terms.items():
            val = float(c)
            for s, e in mono:
                if s[0] == METRIC:
                    val *= g[s[1], s[2]] ** e
                elif s[0] == INVERSE:
                    val *= gu[s[1], s[2]] ** e
                else:
                    val *= dg[s[3] - 1, s[1], s[2]] ** e
            total += val
        return total


def poly_det(d: int) -> MetricPolynomial:
    """Leibniz expansion of det g over the independent components g_ab (a <= b)."""
    if d < 2:
        raise DimensionTooSmall(f"determinant needs d >= 2, got {d}")
    acc = defaultdict(Fraction)
    for perm in permutations(range(d)):
        powers = defaultdict(int)
        for i, j in enumerate(perm):
            powers[_sym(METRIC, i, j)] += 1
        acc[tuple(sorted(powers.items()))] += _perm_sign(perm)
    return MetricPolynomial(acc)


def _G(a, b):
    return MetricPolynomial.symbol(_sym(INVERSE, a, b))


def poly_B(a, b, c, m, n, r) -> MetricPolynomial:
    """B^{abcmnr}: cubic in the inverse-metric symbols."""
    return (
        _G(a, b) * _G(c, r) * _G(m, n)
        - _G(a, m) * _G(b, n) * _G(c, r)
        + _G(a, r) * _G(b, n) * _G(c, m) * 2
        - _G(a, b) * _G(c, m) * _G(n, r) * 2
    )


def _poly_pair(p, q, c, mu, nu, k):
    """Triple-exchange, p <-> q symmetric B^{((pq)c|mu nu k)}."""
    def pair(a, b):
        return (poly_B(a, b, c, mu, nu, k) + poly_B(mu, nu, k, a, b, c)) * Fraction(1, 2)

    return (pair(p, q) + pair(q, p)) * Fraction(1, 2)


def _contract_dg(d, p, q):
    """B^{((pq)0|mu nu k)} g_{mu nu,k} as a polynomial in G and g_{mu nu,k}."""
    out = MetricPolynomial()
    for k, mu, nu in product(range(1, d), range(d), range(d)):
        dg = MetricPolynomial.symbol(_sym(DERIV, mu, nu, k))
        out = out + _poly_pair(p, q, 0, mu, nu, k) * dg
    return out


def _g00_E(d, p, q, m, n) -> MetricPolynomial:
    """g^00 E^{pqmn} with e^{ab} = G^ab - G^0a G^0b / G^00, cleared of the 1/G^00."""
    def ge(a, b):  # g^00 e^{ab}
        return _G(0, 0) * _G(a, b) - _G(0, a) * _G(0, b)

    # g^00 (e e - e e) = [ge ge - ge ge] / g^00; the numerator is divisible by G^00
    num = ge(p, q) * ge(m, n) - ge(p, m) * ge(q, n)
    quotient = defaultdict(Fraction)
    g00 = _sym(INVERSE, 0, 0)
    for mono, c in num.terms.items():
        powers = dict(mono)
        if powers.get(g00, 0) == 0:
            raise ArithmeticError("numerator not divisible by g^00")
        powers[g00] -= 1
        if powers[g00] == 0:
            del powers[g00]
        quotient[tuple(sorted(powers.items()))] += c
    return MetricPolynomial(quotient, {"inverse_metric"})


@dataclass(frozen=True)
class TermReport:
    name: str
    polynomial: bool
    degree: int | None
    breakdown: str
    flags: frozenset
    derivative_degree: int

    def line(self) -> str:
        flags = ", ".join(sorted(self.flags)) or "none"
        deg = self.breakdown if self.polynomial else "non-polynomial"
        return f"{self.name}: degree {deg}; derivative degree {self.derivative_degree}; flags: {flags}"


@dataclass(frozen=True)
class SReport:
    d: int
    terms: tuple
    det_degree: int
    reducible_to_quadratic: bool
    notes: tuple = field(default=())

    @property
    def conclusion(self) -> str:
        if self.reducible_to_quadratic:
            return "all terms are polynomials of degree <= 2"
        return "not reducible to quadratic: cannot be represented as a quadratic function of g"

    def text(self) -> str:
        lines = [f"S^pqmn degree analysis, d = {self.d}"]
        lines += [t.line() for t in self.terms]
        lines += list(self.notes)
        lines.append(f"conclusion: {self.conclusion}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "det_degree": self.det_degree,
            "terms": [
                {
                    "name": t.name,
                    "polynomial": t.polynomial,
                    "degree": t.degree,
                    "breakdown": t.breakdown,
                    "flags": sorted(t.flags),
                    "derivative_degree": t.derivative_degree,
                }
                for t in self.terms
            ],
            "reducible_to_quadratic": self.reducible_to_quadratic,
            "conclusion": self.conclusion,
        }


def classify_S_terms(d: int, seed: int = 0, component=(1, 1, 2, 2)) -> SReport:
    """Degree report for the three terms of S^pqmn at one spatial component.

    Term 2 is det(g) times a bracket built from two B-factors.  The factors
    are expanded symbolically; the bracket is homogeneous of degree 3 + 3 in
    the inverse-metric symbols, and one numeric evaluation shows it is not
    identically zero, so its degree adds to the determinant's exactly.
    """
    if d < 3:
        raise DimensionTooSmall(f"S^pqmn needs d >= 3, got {d}")
    p, q, m, n = component
    det = poly_det(d)
    X = _contract_dg(d, p, q)
    Y = _contract_dg(d, m, n)
    b_deg_x, b_deg_y = X.degree(), Y.degree()
    # g^00 E^{pqmn} B^{mu nu k alpha beta l} g_{mu nu,k} g_{alpha beta,l}: only its nonvanishing matters here
    rng = np.random.default_rng(seed)
    g = random_metric_array(rng, d)
    dg = random_symmetric(rng, d - 1, d, d)
    gu = np.linalg.inv(g)
    sp = list(range(1, d))
    bdd = float(np.einsum("abkmnl,kab,lmn->", b_block(gu, (None, None, sp, None, None, sp)), dg, dg))
    g00E = _g00_E(d, p, q, m, n)
    bracket_value = X.evaluate(g, dg) * Y.evaluate(g, dg) - g00E.evaluate(g) * bdd
    if not (X.is_homogeneous() and Y.is_homogeneous() and g00E.is_homogeneous()):
        raise ArithmeticError("B-factor polynomials are expected to be homogeneous")
    if abs(bracket_value) < 1e-12:
        raise ArithmeticError("term-2 bracket vanished at the probe point; choose another seed")
    e_deg = g00E.degree() + 3
    bracket_deg = max(b_deg_x + b_deg_y, e_deg)
    term2_deg = det.degree() + bracket_deg
    term2 = TermReport(
        name="term 2 (-g/4 [B B - g^00 E B] dd)",
        polynomial=True,
        degree=term2_deg,
        breakdown=f"{term2_deg} = {det.degree()} + {b_deg_x} + {b_deg_y}",
        flags=frozenset({"inverse_metric"}),
        derivative_degree=X.derivative_degree() + Y.derivative_degree(),
    )
    term1 = TermReport(
        name="term 1 (i hbar sqrt(-g) B dg d/dg)",
        polynomial=False,
        degree=None,
        breakdown=f"sqrt(-g) x {b_deg_x}",
        flags=frozenset({"sqrt_neg_det", "inverse_metric"}),
        derivative_degree=X.derivative_degree(),
    )
    term3 = TermReport(
        name="term 3 (-sqrt(-g) {pi, B dg})",
        polynomial=False,
        degree=None,
        breakdown=f"sqrt(-g) x {b_deg_x}",
        flags=frozenset({"sqrt_neg_det", "inverse_metric"}),
        derivative_degree=X.derivative_degree(),
    )
    terms = (term1, term2, term3)
    reducible = all(t.polynomial and t.degree <= 2 for t in terms)
    notes = (
        f"det g expands to {len(det)} monomials of degree {det.degree()}",
        "inverse-metric entries g^ab are counted as degree-1 symbols (flag inverse_metric); "
        "clearing denominators would add powers of det g",
        f"g^00 E^pqmn is a polynomial of degree {g00E.degree()} in g^ab; the E-B product has degree {e_deg}",
    )
    return SReport(d, terms, det.degree(), reducible, notes)


# -- weak field ------------------------------------------------------------

@dataclass(frozen=True)
class WeakFieldFit:
    exponent: float
    constant: float
    linear: float
    quadratic: float
    eps: np.ndarray
    residual: np.ndarray


def _stencil(values, e):
    """First and second derivatives at 0 from H(-2e), H(-e), H(0), H(e), H(2e), to O(e^4)."""
    m2, m1, z, p1, p2 = values
    first = (-p2 + 8 * p1 - 8 * m1 + m2) / (12 * e)
    second = (-p2 + 16 * p1 - 30 * z + 16 * m1 - m2) / (12 * e * e)
    return first, second


def weak_field_expand(evaluator, eps=None, d: int = 4, seed: int = 0, *, h=None, dh=None, dpi=None,
                      stencil_step: float = 1e-2, noise: float = 1e-10) -> WeakFieldFit:
    """Fit the order of H(eta + eps h) - [constant + linear + quadratic] in eps.

    Derivatives and momenta are scaled with eps as well.  Raises
    ``DegenerateFit`` when the remainder sits at rounding level, i.e. the
    functional is quadratic to machine precision.
    """
    rng = np.random.default_rng(seed)
    h = random_symmetric(rng, d, d, scale=0.5) if h is None else np.asarray(h, dtype=float)
    dh = random_symmetric(rng, d - 1, d, d, scale=0.5) if dh is None else np.asarray(dh, dtype=float)
    dpi = random_symmetric(rng, d, d, scale=0.5) if dpi is None else np.asarray(dpi, dtype=float)
    eps = np.geomspace(0.02, 0.12, 8) if eps is None else np.asarray(eps, dtype=float)
    eta = np.eye(d)
    eta[0, 0] = -1.0

    def H(e):
        p = FieldPoint.from_arrays(eta + e * h, d_spatial=e * dh, momentum=e * dpi)
        return float(evaluator(p))

    e = stencil_step
    base = [H(k * e) for k in (-2, -1, 0, 1, 2)]
    c0 = base[2]
    c1, c2 = _stencil(base, e)
    values = np.array([H(x) for x in eps])
    resid = values - (c0 + c1 * eps + 0.5 * c2 * eps**2)
    floor = noise * max(np.max(np.abs(values)), 1e-300)
    if np.any(np.abs(resid) <= floor):
        raise DegenerateFit("remainder at rounding level: quadratic to machine precision")
    slope, _ = np.polyfit(np.log(eps), np.log(np.abs(resid)), 1)
    return WeakFieldFit(float(slope), c0, float(c1), float(0.5 * c2), eps, resid)
