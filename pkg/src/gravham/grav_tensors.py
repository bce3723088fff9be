"""The metric-built tensors of the canonical formulation.

All builders come in two layers: ``*_array`` functions act on plain numpy
arrays and accept leading batch axes (the lattice code evaluates them per
site), while the ``tensor_*`` functions wrap single :class:`MetricState`
points and return :class:`DenseTensor` objects.

Index slots of the six-index B tensor are ordered ``(a, b, c, m, n, r)``.
Two symmetrizations of B are provided:

* the printed one, ``1/2 (B^{abcmnr} + B^{abrmnc})`` (``tensor_B_sym``), and
* the exchange of the two index triples, ``1/2 (B^{abcmnr} + B^{mnrabc})``
  (``tensor_B_pair``).

Only the second one is consistent with the quadratic form
``1/4 sqrt(-g) B^{abcmnr} g_{ab,c} g_{mn,r}``: its temporal rows carry no
velocity and its velocity-derivative reproduces the momenta.  The canonical
dynamics therefore build on ``tensor_B_pair_dsym``.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import DimensionTooSmall, TemporalDegeneracy
from .tensor_core import DenseTensor, MetricState

__all__ = [
    "b_block",
    "b_array",
    "pair_dsym_block",
    "b_pair_array",
    "b_pair_dsym_array",
    "e_array",
    "E_array",
    "I_array",
    "delta_mixed",
    "delta_upper",
    "tensor_I",
    "tensor_B",
    "tensor_B_sym",
    "tensor_B_dsym",
    "tensor_B_pair",
    "tensor_B_pair_dsym",
    "tensor_e",
    "tensor_E",
    "tensor_E_expanded",
    "check_IE_inverse",
    "inject_fault",
]

_FAULTS: set[str] = set()


@contextlib.contextmanager
def inject_fault(name: str):
    """Deliberately corrupt one construction ("B-sign" or "I-sign").

    Used by the verification front end to prove that its checks can fail.
    """
    _FAULTS.add(name)
    try:
        yield
    finally:
        _FAULTS.discard(name)


def _swap_last(x: np.ndarray, perm) -> np.ndarray:
    """Permute the trailing ``len(perm)`` axes of ``x``."""
    lead = x.ndim - len(perm)
    return np.transpose(x, tuple(range(lead)) + tuple(lead + p for p in perm))


# -- array layer ------------------------------------------------------------

def b_block(gu: np.ndarray, slots=(None,) * 6) -> np.ndarray:
    """Components of B^{abcmnr} restricted to the given index sets per slot.

    ``slots`` holds six entries, each ``None`` (all indices) or a sequence of
    indices; the result has one axis per slot in the same order.
    """
    d = gu.shape[-1]
    s = [np.arange(d) if x is None else np.atleast_1d(np.asarray(x)) for x in slots]

    def sub(i, j):
        return gu[..., s[i][:, None], s[j][None, :]]

    last = -2.0 if "B-sign" not in _FAULTS else 2.0
    return (
        np.einsum("...ab,...cr,...mn->...abcmnr", sub(0, 1), sub(2, 5), sub(3, 4))
        - np.einsum("...am,...bn,...cr->...abcmnr", sub(0, 3), sub(1, 4), sub(2, 5))
        + 2.0 * np.einsum("...ar,...bn,...cm->...abcmnr", sub(0, 5), sub(1, 4), sub(2, 3))
        + last * np.einsum("...ab,...cm,...nr->...abcmnr", sub(0, 1), sub(2, 3), sub(4, 5))
    )


def b_array(gu: np.ndarray) -> np.ndarray:
    """B^{abcmnr} from the inverse metric (leading batch axes allowed)."""
    return b_block(gu)


def pair_dsym_block(gu: np.ndarray, c, r) -> np.ndarray:
    """Slots ``(a, b, c, m, n, r)`` of the triple-exchange, a<->b symmetric B.

    ``c`` and ``r`` restrict the third and sixth slots; the first, second,
    fourth and fifth slots run over all indices.
    """
    direct = b_block(gu, (None, None, c, None, None, r))
    swapped = _swap_last(b_block(gu, (None, None, r, None, None, c)), (3, 4, 5, 0, 1, 2))
    pair = 0.5 * (direct + swapped)
    return 0.5 * (pair + _swap_last(pair, (1, 0, 2, 3, 4, 5)))


def b_pair_array(gu: np.ndarray) -> np.ndarray:
    b = b_array(gu)
    return 0.5 * (b + _swap_last(b, (3, 4, 5, 0, 1, 2)))


def b_pair_dsym_array(gu: np.ndarray) -> np.ndarray:
    bp = b_pair_array(gu)
    return 0.5 * (bp + _swap_last(bp, (1, 0, 2, 3, 4, 5)))


def e_array(gu: np.ndarray) -> np.ndarray:
    """e^{mn} = g^{mn} - g^{0m} g^{0n} / g^{00}."""
    g00 = gu[..., 0, 0]
    if np.any(g00 == 0):
        raise TemporalDegeneracy("g^00 vanishes")
    row = gu[..., 0, :]
    e = gu - row[..., :, None] * row[..., None, :] / g00[..., None, None]
    e[..., 0, :] = 0.0
    e[..., :, 0] = 0.0
    return e


def E_array(gu: np.ndarray) -> np.ndarray:
    e = e_array(gu)
    return np.einsum("...mn,...gs->...mngs", e, e) - np.einsum("...mg,...ns->...mngs", e, e)


def I_array(g_spatial: np.ndarray, d: int) -> np.ndarray:
    """I_{mnpq} = g_mn g_pq / (d-2) - g_mp g_nq over spatial indices."""
    if d < 3:
        raise DimensionTooSmall(f"I_mnpq needs d >= 3 (1/(d-2)), got d={d}")
    second = -1.0 if "I-sign" not in _FAULTS else 1.0
    return np.einsum("...mn,...pq->...mnpq", g_spatial, g_spatial) / (d - 2) + second * np.einsum(
        "...mp,...nq->...mnpq", g_spatial, g_spatial
    )


def delta_mixed(d: int) -> DenseTensor:
    """Delta^{mn}_{ab} = 1/2 (delta^m_a delta^n_b + delta^n_a delta^m_b)."""
    eye = np.eye(d)
    data = 0.5 * (np.einsum("ma,nb->mnab", eye, eye) + np.einsum("na,mb->mnab", eye, eye))
    return DenseTensor(data, ("u", "u", "l", "l"))


def delta_upper(m: MetricState) -> DenseTensor:
    """Delta^{mn;ab} = g^{aa'} g^{bb'} Delta^{mn}_{a'b'}."""
    gu = m.upper
    data = np.einsum("aA,bB,mnAB->mnab", gu, gu, delta_mixed(m.d).data)
    return DenseTensor(data, ("u",) * 4)


# -- MetricState layer ------------------------------------------------------

def tensor_I(m: MetricState) -> DenseTensor:
    return DenseTensor(I_array(m.spatial_lower, m.d), ("l",) * 4)


def tensor_B(m: MetricState) -> DenseTensor:
    return DenseTensor(b_array(m.upper), ("u",) * 6)


def tensor_B_sym(m: MetricState) -> DenseTensor:
    """Printed symmetrization 1/2 (B^{abcmnr} + B^{abrmnc})."""
    b = b_array(m.upper)
    return DenseTensor(0.5 * (b + b.transpose(0, 1, 5, 3, 4, 2)), ("u",) * 6)


def tensor_B_dsym(m: MetricState) -> DenseTensor:
    """Four-term average: the printed symmetrization, then a <-> b."""
    bs = tensor_B_sym(m).data
    return DenseTensor(0.5 * (bs + bs.transpose(1, 0, 2, 3, 4, 5)), ("u",) * 6)


def tensor_B_pair(m: MetricState) -> DenseTensor:
    """Triple-exchange symmetrization 1/2 (B^{abcmnr} + B^{mnrabc})."""
    return DenseTensor(b_pair_array(m.upper), ("u",) * 6)


def tensor_B_pair_dsym(m: MetricState) -> DenseTensor:
    return DenseTensor(b_pair_dsym_array(m.upper), ("u",) * 6)


def tensor_e(m: MetricState) -> DenseTensor:
    return DenseTensor(e_array(m.upper), ("u", "u"))


def tensor_E(m: MetricState) -> DenseTensor:
    return DenseTensor(E_array(m.upper), ("u",) * 4)


def tensor_E_expanded(m: MetricState) -> DenseTensor:
    """E^{mngs} written directly in g^{ab}, without going through e^{mn}."""
    gu = m.upper
    g00 = gu[0, 0]
    if g00 == 0:
        raise TemporalDegeneracy("g^00 vanishes")
    r = gu[0]
    data = (
        np.einsum("mn,gs->mngs", gu, gu)
        - np.einsum("mg,ns->mngs", gu, gu)
        - (
            np.einsum("m,n,gs->mngs", r, r, gu)
            + np.einsum("mn,g,s->mngs", gu, r, r)
            - np.einsum("mg,n,s->mngs", gu, r, r)
            - np.einsum("m,g,ns->mngs", r, r, gu)
        )
        / g00
    )
    return DenseTensor(data, ("u",) * 4)


def check_IE_inverse(m: MetricState) -> float:
    """max |I_mnpq E^pqkl - delta^k_m delta^l_n| over spatial indices."""
    I = I_array(m.spatial_lower, m.d)
    E = E_array(m.upper)[1:, 1:, 1:, 1:]
    eye = np.eye(m.d - 1)
    product = np.einsum("mnpq,pqkl->mnkl", I, E)
    target = np.einsum("km,ln->mnkl", eye, eye)
    return float(np.max(np.abs(product - target)))
