"""Polynomial Poisson-bracket engine over the canonical symbols.

Expressions are polynomials in three kinds of commuting symbols, each carrying
an unordered index pair:

* ``g_ab``  (covariant metric components),
* ``G^ab``  (inverse-metric components, treated as functions of ``g``),
* ``pi^ab`` (conjugate momenta).

The fundamental brackets are ``{g_ab, pi^mn} = Delta^mn_ab`` and, by the chain
rule through the matrix inverse,
``{G^ab, pi^mn} = -1/2 (G^am G^bn + G^an G^bm)``; all other pairs vanish.
Monomials are stored with momenta last so the printed order matches the
"momenta on the right" convention of the quantum ordering.
"""

from __future__ import annotations

from collections import defaultdict
from itertools import product

import numpy as np

from ..errors import UnsupportedSymbol

__all__ = [
    "CanonicalExpr",
    "g",
    "ginv",
    "pi",
    "const",
    "poisson_bracket",
    "B_expr",
    "bracket_pi_with_Bg",
    "bracket_pi_with_Bg_direct",
    "bracket_pi_with_ginv",
    "random_expr",
]

_KIND_ORDER = {"g": 0, "G": 1, "pi": 2}


def _symbol(kind, a, b):
    if kind not in _KIND_ORDER:
        raise UnsupportedSymbol(f"unknown symbol kind {kind!r}")
    a, b = int(a), int(b)
    return (kind, min(a, b), max(a, b))


def _sort_key(sym):
    return (_KIND_ORDER[sym[0]], sym[1], sym[2])


def _monomial(symbols):
    return tuple(sorted(symbols, key=_sort_key))


class CanonicalExpr:
    """Finite polynomial in the canonical symbols with real coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict[tuple, float] = {}
        for mono, coef in (terms or {}).items():
            for sym in mono:
                if sym[0] not in _KIND_ORDER:
                    raise UnsupportedSymbol(f"unknown symbol kind {sym[0]!r}")
            if coef != 0:
                key = _monomial(mono)
                self.terms[key] = self.terms.get(key, 0.0) + coef

    # construction helpers
    @classmethod
    def symbol(cls, kind, a, b):
        return cls({(_symbol(kind, a, b),): 1.0})

    def copy(self):
        out = CanonicalExpr()
        out.terms = dict(self.terms)
        return out

    # arithmetic
    def __add__(self, other):
        other = _as_expr(other)
        out = self.copy()
        for mono, coef in other.terms.items():
            out.terms[mono] = out.terms.get(mono, 0.0) + coef
        return out._prune()

    __radd__ = __add__

    def __neg__(self):
        return CanonicalExpr({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_expr(other))

    def __rsub__(self, other):
        return _as_expr(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return CanonicalExpr({m: c * float(other) for m, c in self.terms.items()})
        other = _as_expr(other)
        acc = defaultdict(float)
        for (ma, ca), (mb, cb) in product(self.terms.items(), other.terms.items()):
            acc[_monomial(ma + mb)] += ca * cb
        out = CanonicalExpr()
        out.terms = dict(acc)
        return out._prune()

    __rmul__ = __mul__

    def _prune(self):
        self.terms = {m: c for m, c in self.terms.items() if c != 0.0}
        return self

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for mono, coef in self.terms.items():
            name = "*".join(f"{k}{a}{b}" for k, a, b in mono) or "1"
            parts.append(f"{coef:+g}*{name}")
        return " ".join(parts)

    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=0)

    def evaluate(self, g_lower, momentum=None, g_upper=None) -> float:
        """Numeric value with ``G^ab`` taken from the inverse of ``g_lower``."""
        g_lower = np.asarray(g_lower)
        if g_upper is None:
            g_upper = np.linalg.inv(g_lower)
        tables = {"g": g_lower, "G": g_upper, "pi": momentum}
        total = 0.0
        for mono, coef in self.terms.items():
            val = coef
            for kind, a, b in mono:
                table = tables[kind]
                if table is None:
                    raise UnsupportedSymbol(f"no value supplied for {kind}{a}{b}")
                val = val * table[a, b]
            total = total + val
        return total


def _as_expr(x):
    if isinstance(x, CanonicalExpr):
        return x
    return const(float(x))


def g(a, b) -> CanonicalExpr:
    return CanonicalExpr.symbol("g", a, b)


def ginv(a, b) -> CanonicalExpr:
    return CanonicalExpr.symbol("G", a, b)


def pi(a, b) -> CanonicalExpr:
    return CanonicalExpr.symbol("pi", a, b)


def const(value: float) -> CanonicalExpr:
    return CanonicalExpr({(): float(value)}) if value else CanonicalExpr()


def _delta(m, n, a, b) -> float:
    return 0.5 * ((m == a) * (n == b) + (n == a) * (m == b))


def _base_bracket(x, y) -> CanonicalExpr:
    kx, ky = x[0], y[0]
    if kx == ky == "pi" or (kx != "pi" and ky != "pi"):
        return CanonicalExpr()
    if kx == "pi":
        return -_base_bracket(y, x)
    _, a, b = x
    _, m, n = y
    if kx == "g":
        return const(_delta(m, n, a, b))
    # {G^ab, pi^mn} = -1/2 (G^am G^bn + G^an G^bm)
    return (ginv(a, m) * ginv(b, n) + ginv(a, n) * ginv(b, m)) * -0.5


def random_expr(rng: np.random.Generator, d: int, max_degree: int = 2, n_terms: int = 4) -> CanonicalExpr:
    """Random polynomial of degree <= max_degree in g, G and spatial pi symbols."""
    out = CanonicalExpr()
    for _ in range(n_terms):
        deg = int(rng.integers(0, max_degree + 1))
        mono = []
        for _ in range(deg):
            kind = ("g", "G", "pi")[int(rng.integers(3))]
            lo = 1 if kind == "pi" else 0
            a, b = rng.integers(lo, d, size=2)
            mono.append(_symbol(kind, a, b))
        out = out + CanonicalExpr({tuple(mono): float(rng.standard_normal())})
    return out


def poisson_bracket(A: CanonicalExpr, B: CanonicalExpr) -> CanonicalExpr:
    """Bilinear, antisymmetric Leibniz extension of the fundamental brackets."""
    A, B = _as_expr(A), _as_expr(B)
    acc = defaultdict(float)
    for (ma, ca), (mb, cb) in product(A.terms.items(), B.terms.items()):
        for i, x in enumerate(ma):
            rest_a = ma[:i] + ma[i + 1:]
            for j, y in enumerate(mb):
                base = _base_bracket(x, y)
                if not base.terms:
                    continue
                rest = rest_a + mb[:j] + mb[j + 1:]
                for mono, c in base.terms.items():
                    acc[_monomial(mono + rest)] += ca * cb * c
    out = CanonicalExpr()
    out.terms = dict(acc)
    return out._prune()


def B_expr(a, b, c, m, n, r) -> CanonicalExpr:
    """B^{abcmnr} as a cubic polynomial in the inverse-metric symbols."""
    return (
        ginv(a, b) * ginv(c, r) * ginv(m, n)
        - ginv(a, m) * ginv(b, n) * ginv(c, r)
        + ginv(a, r) * ginv(b, n) * ginv(c, m) * 2.0
        - ginv(a, b) * ginv(c, m) * ginv(n, r) * 2.0
    )


def _b_sym_expr(p, q, mu, nu, k, convention):
    """B^{(pq0|mu nu k)}: second term is the printed (c <-> r) or triple-exchange partner."""
    if convention == "printed":
        partner = B_expr(p, q, k, mu, nu, 0)
    elif convention == "pair":
        partner = B_expr(mu, nu, k, p, q, 0)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return (B_expr(p, q, 0, mu, nu, k) + partner) * 0.5


def bracket_pi_with_Bg(point, convention: str = "pair") -> np.ndarray:
    """{pi^mn, B^(pq0|mu nu k) g_{mu nu,k}} through the symbolic engine.

    Spatial derivatives are classical constants ({pi, g_{mu nu,k}} = 0), so only
    the metric dependence of B contributes.  Returns ``X[m, n, p, q]`` over
    spatial indices (0-based in the spatial block).
    """
    d = point.d
    gl = point.metric.lower
    gu = point.metric.upper
    ds = point.d_spatial
    spatial = range(1, d)
    out = np.zeros((d - 1,) * 4)
    for p, q in product(spatial, spatial):
        expr = CanonicalExpr()
        for k, mu, nu in product(spatial, range(d), range(d)):
            coef = ds[k - 1, mu, nu]
            if coef != 0.0:
                expr = expr + _b_sym_expr(p, q, mu, nu, k, convention) * coef
        for m, n in product(spatial, spatial):
            if n < m:
                continue
            val = poisson_bracket(pi(m, n), expr).evaluate(gl, g_upper=gu)
            out[m - 1, n - 1, p - 1, q - 1] = val
            out[n - 1, m - 1, p - 1, q - 1] = val
    return out


def bracket_pi_with_ginv(g_upper: np.ndarray) -> np.ndarray:
    """{pi^mn, g^ab} = +g^{aa'} g^{bb'} Delta^{mn}_{a'b'}, indexed [m, n, a, b]."""
    gu = g_upper
    return 0.5 * (np.einsum("am,bn->mnab", gu, gu) + np.einsum("an,bm->mnab", gu, gu))


def bracket_pi_with_Bg_direct(point, convention: str = "pair") -> np.ndarray:
    """Vectorized Leibniz expansion of the same bracket over the four B terms.

    Each B term is a product of three inverse-metric factors; the bracket acts
    on one factor at a time through ``bracket_pi_with_ginv``.
    """
    d = point.d
    gu = point.metric.upper
    P = bracket_pi_with_ginv(gu)  # [m, n, a, b]

    def dB(gu_):
        # {pi^mn, B^{abcxyz}} with slots (a, b, c, x, y, z) -> [m, n, a, b, c, x, y, z]
        def triple(i1, i2, i3):
            return (
                np.einsum(f"MN{i1},{i2},{i3}->MNabcxyz", P, gu_, gu_)
                + np.einsum(f"{i1},MN{i2},{i3}->MNabcxyz", gu_, P, gu_)
                + np.einsum(f"{i1},{i2},MN{i3}->MNabcxyz", gu_, gu_, P)
            )

        return (
            triple("ab", "cz", "xy")
            - triple("ax", "by", "cz")
            + 2.0 * triple("az", "by", "cx")
            - 2.0 * triple("ab", "cx", "yz")
        )

    full = dB(gu)  # [m, n, a, b, c, x, y, z]
    sp = slice(1, d)
    ds = point.d_spatial  # [k-1, mu, nu]
    first = full[sp, sp, sp, sp, 0][..., :, :, 1:]  # [m,n,p,q,mu,nu,k]
    if convention == "printed":
        second = full[sp, sp, sp, sp, 1:, :, :, 0]  # [m,n,p,q,k,mu,nu]
        second = np.moveaxis(second, 4, 6)
    elif convention == "pair":
        second = full[sp, sp, :, :, 1:, sp, sp, 0]  # [m,n,mu,nu,k,p,q]
        second = np.transpose(second, (0, 1, 5, 6, 2, 3, 4))
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return 0.5 * np.einsum("mnpqxyk,kxy->mnpq", first + second, ds)
