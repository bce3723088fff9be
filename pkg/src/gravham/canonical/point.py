"""Canonical quantities at a single field point.

A :class:`FieldPoint` carries the metric, its spatial derivatives
``d_spatial[k-1, a, b] = g_{ab,k}``, the velocities ``g_{ab,0}`` and the
momenta ``pi^{ab}``.  The kernels below are written over plain arrays with
optional leading batch axes so the lattice integrator can reuse them; the
number of spatial derivative directions ``K`` may be smaller than d-1 (the
1+1D lattice only carries ``k = 1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ..errors import ChristoffelMismatch, DimensionTooSmall, TemporalDegeneracy
from ..grav_tensors import E_array, I_array, b_block, pair_dsym_block
from ..tensor_core import MetricState, invert_metric
from .brackets import bracket_pi_with_Bg_direct

__all__ = [
    "FieldPoint",
    "HamiltonianTensor",
    "christoffel",
    "lagrangian_christoffel",
    "lagrangian_b_form",
    "lagrangian_gamma_gamma",
    "lagrangian_split",
    "momentum_from_velocity",
    "velocity_from_momentum",
    "cross_source",
    "primary_constraint",
    "primary_constraints",
    "hamiltonian_Hc",
    "hamiltonian_tilde",
    "hamiltonian_tensor",
    "hamiltonian_density",
    "total_hamiltonian",
    "flux_vector",
    "dof_count",
    "tau_from_t",
]


def _sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


@dataclass(frozen=True)
class FieldPoint:
    metric: MetricState
    d_spatial: np.ndarray
    velocity: np.ndarray = None
    momentum: np.ndarray = None
    phi_mk: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        d = self.metric.d
        ds = np.asarray(self.d_spatial, dtype=float)
        if ds.shape != (d - 1, d, d):
            raise ValueError(f"d_spatial must have shape {(d - 1, d, d)}, got {ds.shape}")
        object.__setattr__(self, "d_spatial", _sym(ds))
        for name in ("velocity", "momentum"):
            val = getattr(self, name)
            val = np.zeros((d, d)) if val is None else _sym(np.asarray(val, dtype=float))
            if val.shape != (d, d):
                raise ValueError(f"{name} must have shape {(d, d)}")
            object.__setattr__(self, name, val)

    @property
    def d(self) -> int:
        return self.metric.d

    @classmethod
    def from_arrays(cls, g, d_spatial=None, velocity=None, momentum=None) -> "FieldPoint":
        m = invert_metric(g)
        if d_spatial is None:
            d_spatial = np.zeros((m.d - 1, m.d, m.d))
        return cls(metric=m, d_spatial=d_spatial, velocity=velocity, momentum=momentum)

    def with_momentum(self, momentum) -> "FieldPoint":
        return replace(self, momentum=momentum)

    def with_velocity(self, velocity) -> "FieldPoint":
        return replace(self, velocity=velocity)

    def derivative_stack(self) -> np.ndarray:
        """All first derivatives as ``dg[a, b, c] = g_{ab,c}`` with c = 0 the velocity."""
        dg = np.empty((self.d, self.d, self.d))
        dg[:, :, 0] = self.velocity
        dg[:, :, 1:] = np.moveaxis(self.d_spatial, 0, -1)
        return dg


# -- Lagrangian -------------------------------------------------------------

def christoffel(gu: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma^m_{an} = 1/2 g^{ml} (g_{la,n} + g_{ln,a} - g_{an,l})."""
    return 0.5 * (
        np.einsum("ml,lan->man", gu, dg)
        + np.einsum("ml,lna->man", gu, dg)
        - np.einsum("ml,anl->man", gu, dg)
    )


def lagrangian_christoffel(p: FieldPoint) -> float:
    gu = p.metric.upper
    gam = christoffel(gu, p.derivative_stack())
    quad = np.einsum("ab,man,nbm->", gu, gam, gam) - np.einsum("ab,nab,mnm->", gu, gam, gam)
    return float(p.metric.sqrt_neg_det * quad)


def lagrangian_b_form(p: FieldPoint) -> float:
    dg = p.derivative_stack()
    B = b_block(p.metric.upper)
    return float(0.25 * p.metric.sqrt_neg_det * np.einsum("abcmnr,abc,mnr->", B, dg, dg))


def lagrangian_gamma_gamma(p: FieldPoint, rtol: float = 1e-9) -> float:
    """The first-derivative Lagrangian, cross-checked against its Christoffel form."""
    value = lagrangian_b_form(p)
    check = lagrangian_christoffel(p)
    scale = max(abs(value), abs(check), 1e-300)
    if abs(value - check) > rtol * scale and abs(value - check) > 1e-14:
        raise ChristoffelMismatch(f"B-form {value!r} vs Christoffel form {check!r}")
    return value


def lagrangian_split(p: FieldPoint) -> tuple[float, float, float]:
    """(kinetic, cross, spatial) parts by order in the velocities."""
    gu = p.metric.upper
    sg = p.metric.sqrt_neg_det
    v = p.velocity
    ds = p.d_spatial
    K = p.d - 1
    spatial = list(range(1, K + 1))
    kin = b_block(gu, (None, None, [0], None, None, [0]))[:, :, 0, :, :, 0]
    cross = pair_dsym_block(gu, [0], spatial)[:, :, 0]
    pot = b_block(gu, (None, None, spatial, None, None, spatial))
    kinetic = 0.25 * sg * np.einsum("abmn,ab,mn->", kin, v, v)
    mixed = 0.5 * sg * np.einsum("abmnk,ab,kmn->", cross, v, ds)
    potential = 0.25 * sg * np.einsum("abkmnl,kab,lmn->", pot, ds, ds)
    return float(kinetic), float(mixed), float(potential)


# -- Legendre transform ----------------------------------------------------

def _cross_source_array(gu, d_spatial):
    """c^{ab} = B^{((ab)0|mnk)} g_{mn,k}; batch axes allowed, K = d_spatial.shape[-3]."""
    K = d_spatial.shape[-3]
    C = pair_dsym_block(gu, [0], list(range(1, K + 1)))[..., 0, :, :, :]
    return np.einsum("...abmnk,...kmn->...ab", C, d_spatial)


def cross_source(p: FieldPoint) -> np.ndarray:
    return _cross_source_array(p.metric.upper, p.d_spatial)


def momentum_from_velocity(p: FieldPoint) -> np.ndarray:
    gu = p.metric.upper
    sg = p.metric.sqrt_neg_det
    kin = pair_dsym_block(gu, [0], [0])[:, :, 0, :, :, 0]
    return 0.5 * sg * np.einsum("gsmn,mn->gs", kin, p.velocity) + 0.5 * sg * cross_source(p)


def velocity_from_momentum(p: FieldPoint) -> np.ndarray:
    """Spatial velocities g_{mn,0} from the spatial momenta (the invertible block)."""
    m = p.metric
    if m.d < 3:
        raise DimensionTooSmall("velocity inversion needs d >= 3")
    g00 = m.g00_upper
    if g00 == 0:
        raise TemporalDegeneracy("g^00 vanishes")
    I = I_array(m.spatial_lower, m.d)
    c = cross_source(p)[1:, 1:]
    w = 2.0 / m.sqrt_neg_det * p.momentum[1:, 1:] - c
    return np.einsum("mnpq,pq->mn", I, w) / g00


def primary_constraints(p: FieldPoint) -> np.ndarray:
    """phi^{0s} = pi^{0s} - 1/2 sqrt(-g) B^{((0s)0|mnk)} g_{mn,k} for every s."""
    c = cross_source(p)
    return p.momentum[0] - 0.5 * p.metric.sqrt_neg_det * c[0]


def primary_constraint(p: FieldPoint, sigma: int) -> float:
    return float(primary_constraints(p)[sigma])


# -- Hamiltonians ----------------------------------------------------------

def _hc_parts(g, pi_s, d_spatial):
    """(kinetic, drift, potential) parts of H_c; batch axes and complex input allowed."""
    d = g.shape[-1]
    gu = np.linalg.inv(g)
    sg = np.sqrt(-np.linalg.det(g))
    g00 = gu[..., 0, 0]
    I = I_array(g[..., 1:, 1:], d)
    K = d_spatial.shape[-3]
    spatial = list(range(1, K + 1))
    c = _cross_source_array(gu, d_spatial)[..., 1:, 1:]
    pot = b_block(gu, (None, None, spatial, None, None, spatial))
    kinetic = np.einsum("...mnpq,...mn,...pq->...", I, pi_s, pi_s) / (sg * g00)
    drift = -np.einsum("...mnpq,...mn,...pq->...", I, pi_s, c) / g00
    icc = np.einsum("...mnpq,...mn,...pq->...", I, c, c) / g00
    bdd = np.einsum("...abkmnl,...kab,...lmn->...", pot, d_spatial, d_spatial)
    potential = 0.25 * sg * (icc - bdd)
    return kinetic, drift, potential


def hamiltonian_density(g, pi_s, d_spatial):
    """H_c over arrays: g (..., d, d), pi_s (..., d-1, d-1), d_spatial (..., K, d, d)."""
    kin, drift, pot = _hc_parts(g, pi_s, d_spatial)
    return kin + drift + pot


def hamiltonian_Hc(p: FieldPoint) -> float:
    if p.metric.g00_upper == 0:
        raise TemporalDegeneracy("g^00 vanishes")
    return float(hamiltonian_density(p.metric.lower, p.momentum[1:, 1:], p.d_spatial))


def hamiltonian_tilde(p: FieldPoint) -> float:
    """sqrt(-g) g^00 H_c, the form with momenta collected on the right."""
    return p.metric.sqrt_neg_det * p.metric.g00_upper * hamiltonian_Hc(p)


class HamiltonianTensor(NamedTuple):
    """Spatial tensor H~^{pqmn} = pi^pq pi^mn + S^pqmn, split by origin.

    ``ordering`` is the Poisson-bracket term that only appears when the
    momenta are moved to the right of the metric factors; it is reported
    but is not part of ``total``.
    """

    kinetic: np.ndarray
    drift: np.ndarray
    potential: np.ndarray
    ordering: np.ndarray

    @property
    def S(self) -> np.ndarray:
        return self.drift + self.potential

    @property
    def total(self) -> np.ndarray:
        return self.kinetic + self.drift + self.potential


def hamiltonian_tensor(p: FieldPoint) -> HamiltonianTensor:
    m = p.metric
    d = m.d
    g00 = m.g00_upper
    if g00 == 0:
        raise TemporalDegeneracy("g^00 vanishes")
    sg = m.sqrt_neg_det
    pi_s = p.momentum[1:, 1:]
    c = cross_source(p)[1:, 1:]
    spatial = list(range(1, d))
    pot = b_block(m.upper, (None, None, spatial, None, None, spatial))
    bdd = np.einsum("abkmnl,kab,lmn->", pot, p.d_spatial, p.d_spatial)
    E = E_array(m.upper)[1:, 1:, 1:, 1:]
    kinetic = np.einsum("pq,mn->pqmn", pi_s, pi_s)
    drift = -sg * np.einsum("pq,mn->pqmn", c, pi_s)
    # the E-term is normalized so that I_mnpq contracts it to exactly g^00 B dd
    potential = -(m.det / 4.0) * (
        np.einsum("mn,pq->pqmn", c, c) - g00 * E * bdd / (d - 1) ** 2
    )
    # bracket_pi_with_Bg_direct is indexed [momentum pair, B pair] = [p, q, m, n]
    ordering = -sg * bracket_pi_with_Bg_direct(p)
    return HamiltonianTensor(kinetic, drift, potential, ordering)


def total_hamiltonian(p: FieldPoint, velocities_0s) -> float:
    """H_T = H_c + g_{00,0} phi^00 + 2 g_{0k,0} phi^0k."""
    v = np.asarray(velocities_0s, dtype=float)
    phi = primary_constraints(p)
    return hamiltonian_Hc(p) + float(v[0] * phi[0] + 2.0 * np.dot(v[1:], phi[1:]))


def flux_vector(p: FieldPoint, phi_mk=None) -> np.ndarray:
    """Energy-flux vector G^k of the surface term.

    ``phi_mk`` (spatial, shape (d-1, d-1)) is not defined by the canonical
    construction and defaults to zero.
    """
    m = p.metric
    d = m.d
    gu = m.upper
    g00 = gu[0, 0]
    if g00 == 0:
        raise TemporalDegeneracy("g^00 vanishes")
    sg = m.sqrt_neg_det
    ds = p.d_spatial  # [i-1, a, b]
    E = E_array(gu)[1:, 1:, 1:, 1:]
    phi = np.zeros((d - 1, d - 1)) if phi_mk is None else np.asarray(phi_mk, dtype=float)
    g0m = m.lower[0, 1:]
    first = 2.0 * np.einsum("m,mk->k", g0m, phi)
    second = -sg * np.einsum("mnki,imn->k", E, ds[:, 1:, 1:])
    r = gu[0]  # g^{0a}
    bracket = np.einsum("vk,i->vki", gu[:, 1:], r[1:]) - np.einsum("vi,k->vki", gu[:, 1:], r[1:])
    third = sg * np.einsum("imv,m,vki->k", ds, r / g00, bracket)
    return first + second + third


def dof_count(d: int) -> int:
    """Number of field degrees of freedom, d(d+1)/2 - 2d."""
    if d < 3:
        raise DimensionTooSmall(f"degree-of-freedom count needs d >= 3, got {d}")
    return d * (d + 1) // 2 - 2 * d


def tau_from_t(t: float, m: MetricState) -> float:
    g00 = m.g00_upper
    if g00 == 0 or m.det >= 0:
        raise TemporalDegeneracy("tau is undefined for g^00 = 0 or det g >= 0")
    return t / (m.sqrt_neg_det * g00)
