import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gravham.canonical.point import (
    FieldPoint,
    dof_count,
    flux_vector,
    hamiltonian_Hc,
    hamiltonian_tensor,
    hamiltonian_tilde,
    lagrangian_b_form,
    lagrangian_christoffel,
    lagrangian_gamma_gamma,
    lagrangian_split,
    momentum_from_velocity,
    primary_constraint,
    primary_constraints,
    total_hamiltonian,
    tau_from_t,
    velocity_from_momentum,
)
from gravham.errors import ChristoffelMismatch, DimensionTooSmall, TemporalDegeneracy
from gravham.grav_tensors import E_array, I_array, inject_fault
from gravham.sampling import random_field_point, random_symmetric
from gravham.tensor_core import invert_metric, minkowski


def gamma_gamma_oracle(p):
    """sqrt(-g) g^mn (G^a_mb G^b_na - G^a_mn G^b_ab) with loop-built Christoffels."""
    d = p.d
    G = p.metric.upper
    dg = p.derivative_stack()
    gam = np.zeros((d, d, d))
    for a, m, n in itertools.product(range(d), repeat=3):
        gam[a, m, n] = 0.5 * sum(G[a, l] * (dg[l, m, n] + dg[l, n, m] - dg[m, n, l]) for l in range(d))
    total = 0.0
    for m, n in itertools.product(range(d), repeat=2):
        s = 0.0
        for a, b in itertools.product(range(d), repeat=2):
            s += gam[a, m, b] * gam[b, n, a] - gam[a, m, n] * gam[b, a, b]
        total += G[m, n] * s
    return p.metric.sqrt_neg_det * total


def flat_point(d=4, **kw):
    return FieldPoint.from_arrays(minkowski(d).lower, **kw)


def test_lagrangian_forms_agree(rng):
    for _ in range(30):
        p = random_field_point(rng, int(rng.integers(3, 6)))
        ref = gamma_gamma_oracle(p)
        assert abs(lagrangian_christoffel(p) - ref) <= 1e-12 * max(1.0, abs(ref))
        assert abs(lagrangian_b_form(p) - ref) <= 1e-9 * max(abs(ref), 1e-12)
        assert abs(sum(lagrangian_split(p)) - lagrangian_b_form(p)) <= 1e-10 * max(1.0, abs(ref))


def test_lagrangian_simple_cases(rng):
    assert lagrangian_gamma_gamma(flat_point()) == 0.0
    p = random_field_point(rng, 4)
    scaled = p.with_velocity(2 * p.velocity)
    scaled = FieldPoint(scaled.metric, 2 * p.d_spatial, scaled.velocity)
    assert lagrangian_b_form(scaled) == pytest.approx(4 * lagrangian_b_form(p), rel=1e-13)
    still = FieldPoint(p.metric, p.d_spatial, np.zeros((4, 4)))
    kin, cross, _ = lagrangian_split(still)
    assert kin == 0.0 and cross == 0.0
    uniform = FieldPoint(p.metric, np.zeros_like(p.d_spatial), p.velocity)
    _, cross, spatial = lagrangian_split(uniform)
    assert cross == 0.0 and spatial == 0.0


def test_christoffel_mismatch_raised(rng):
    p = random_field_point(rng, 4)
    with inject_fault("B-sign"), pytest.raises(ChristoffelMismatch):
        lagrangian_gamma_gamma(p)


def test_momentum_is_velocity_gradient(rng):
    p = random_field_point(rng, 4)
    pi = momentum_from_velocity(p)
    h = 1e-3
    for a, b in itertools.product(range(4), repeat=2):
        if b < a:
            continue
        e = np.zeros((4, 4))
        e[a, b] = e[b, a] = h
        fd = (lagrangian_b_form(p.with_velocity(p.velocity + e))
              - lagrangian_b_form(p.with_velocity(p.velocity - e))) / (2 * h)
        mult = 1.0 if a == b else 2.0
        assert abs(mult * pi[a, b] - fd) <= 1e-8 * max(1.0, abs(fd))


def test_flat_worked_legendre():
    v = np.zeros((4, 4))
    v[1, 1] = 1.0
    pi = momentum_from_velocity(flat_point(velocity=v))
    np.testing.assert_allclose(pi[1:, 1:], np.diag([0.0, -0.5, -0.5]), atol=1e-15)
    assert np.all(pi[0] == 0.0)
    back = velocity_from_momentum(flat_point(momentum=pi))
    np.testing.assert_allclose(back, np.diag([1.0, 0.0, 0.0]), atol=1e-15)
    assert np.all(momentum_from_velocity(flat_point()) == 0.0)
    assert np.all(velocity_from_momentum(flat_point()) == 0.0)
    # at flat the inverse map is g_mn,0 = -2 I_mnpq pi^pq
    I = I_array(np.eye(3), 4)
    np.testing.assert_allclose(back, -2 * np.einsum("mnpq,pq->mn", I, pi[1:, 1:]), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([3, 4]))
def test_legendre_round_trip(seed, d):
    p = random_field_point(np.random.default_rng(seed), d)
    v = velocity_from_momentum(p.with_momentum(momentum_from_velocity(p)))
    ref = p.velocity[1:, 1:]
    assert np.max(np.abs(v - ref)) <= 1e-8 * np.max(np.abs(ref))


def test_primary_constraints(rng):
    assert np.all(primary_constraints(flat_point()) == 0.0)
    p = random_field_point(rng, 4)
    assert np.max(np.abs(primary_constraints(p))) <= 1e-12
    shifted = p.momentum.copy()
    shifted[0, 0] += 1.0
    assert primary_constraint(p.with_momentum(shifted), 0) == pytest.approx(1.0, abs=1e-12)


def test_hamiltonian_examples():
    assert hamiltonian_Hc(flat_point()) == 0.0
    pi = np.zeros((4, 4))
    pi[1, 1] = 1.0
    assert hamiltonian_Hc(flat_point(momentum=pi)) == pytest.approx(0.5, abs=1e-15)


def test_hamiltonian_is_legendre_transform(rng):
    for d in (3, 4, 5):
        for _ in range(10):
            p = random_field_point(rng, d)
            legendre = float(np.sum(p.momentum * p.velocity)) - lagrangian_b_form(p)
            assert hamiltonian_Hc(p) == pytest.approx(legendre, rel=1e-8, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-4, 4))
def test_hamiltonian_quadratic_in_momentum(seed, lam):
    r = np.random.default_rng(seed)
    p = random_field_point(r, 4)
    p = FieldPoint(p.metric, np.zeros_like(p.d_spatial), p.velocity, p.momentum)
    scaled = p.with_momentum(lam * p.momentum)
    assert hamiltonian_Hc(scaled) == pytest.approx(lam**2 * hamiltonian_Hc(p), rel=1e-12, abs=1e-14)


def test_hamiltonian_tensor(rng):
    pi = random_symmetric(rng, 4, 4)
    flat = hamiltonian_tensor(flat_point(momentum=pi))
    np.testing.assert_allclose(flat.total, np.einsum("pq,mn->pqmn", pi[1:, 1:], pi[1:, 1:]), atol=1e-15)
    assert np.all(flat.ordering == 0.0)
    for d in (3, 4, 5):
        p = random_field_point(rng, d)
        H = hamiltonian_tensor(p)
        I = I_array(p.metric.spatial_lower, d)
        contracted = np.einsum("mnpq,pqmn->", I, H.total)
        assert contracted == pytest.approx(hamiltonian_tilde(p), rel=1e-10, abs=1e-12)
        still = hamiltonian_tensor(p.with_momentum(np.zeros((d, d))))
        assert np.all(still.kinetic == 0.0) and np.all(still.drift == 0.0)
        doubled = FieldPoint(p.metric, 2 * p.d_spatial, p.velocity, np.zeros((d, d)))
        np.testing.assert_allclose(hamiltonian_tensor(doubled).potential, 4 * still.potential, atol=1e-12)


def test_total_hamiltonian(rng):
    p = random_field_point(rng, 4)
    assert total_hamiltonian(p, rng.standard_normal(4)) == pytest.approx(hamiltonian_Hc(p), abs=1e-12)
    pi = np.zeros((4, 4))
    pi[0, 0] = 1.0
    assert total_hamiltonian(flat_point(momentum=pi), [3.0, 0, 0, 0]) == pytest.approx(3.0)
    v = rng.standard_normal(4)
    q = p.with_momentum(p.momentum + random_symmetric(rng, 4, 4))
    phi = primary_constraints(q)
    expect = hamiltonian_Hc(q) + v[0] * phi[0] + 2 * sum(v[k] * phi[k] for k in range(1, 4))
    assert total_hamiltonian(q, v) == pytest.approx(expect, rel=1e-12)


def test_flux_vector(rng):
    assert np.all(flux_vector(flat_point()) == 0.0)
    ds = np.zeros((3, 4, 4))
    ds[1, 1, 1] = 0.7  # g_11,2
    G = flux_vector(flat_point(d_spatial=ds))
    np.testing.assert_allclose(G, [0.0, -0.7, 0.0], atol=1e-15)
    # three-term oracle with explicit loops
    p = random_field_point(rng, 4)
    phi = rng.standard_normal((3, 3))
    gu, gl, sg = p.metric.upper, p.metric.lower, p.metric.sqrt_neg_det
    E = E_array(gu)
    ref = np.zeros(3)
    for k in range(1, 4):
        s = 2 * sum(gl[0, m] * phi[m - 1, k - 1] for m in range(1, 4))
        for m, n, i in itertools.product(range(1, 4), repeat=3):
            s -= sg * E[m, n, k, i] * p.d_spatial[i - 1, m, n]
        for i, m, v in itertools.product(range(1, 4), range(4), range(4)):
            s += sg * p.d_spatial[i - 1, m, v] * gu[0, m] / gu[0, 0] * (gu[v, k] * gu[0, i] - gu[v, i] * gu[0, k])
        ref[k - 1] = s
    np.testing.assert_allclose(flux_vector(p, phi), ref, atol=1e-12)


def test_dof_and_tau():
    assert dof_count(4) == 2
    assert dof_count(3) == 0
    assert dof_count(5) == 5
    with pytest.raises(DimensionTooSmall):
        dof_count(2)
    assert tau_from_t(1.0, minkowski(4)) == -1.0
    assert tau_from_t(0.0, minkowski(4)) == 0.0
    assert tau_from_t(1.0, invert_metric(np.diag([-4.0, 1, 1, 1]))) == pytest.approx(-2.0)


def test_degenerate_inputs():
    m = invert_metric(np.diag([-1.0, 1.0]))
    p = FieldPoint.from_arrays(m.lower)
    with pytest.raises(DimensionTooSmall):
        velocity_from_momentum(p)
    g = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(TemporalDegeneracy):
        FieldPoint.from_arrays(g)
