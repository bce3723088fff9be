import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gravham.errors import (
    ConfigInvalid,
    NonLorentzian,
    RankOverflow,
    SingularMetric,
    TemporalDegeneracy,
    VarianceMismatch,
)
from gravham.tensor_core import (
    DenseTensor,
    contract,
    invert_metric,
    load_metric_json,
    minkowski,
    symmetrize,
    tensor_to_csv,
)

from conftest import lorentzian_metrics


def test_minkowski_inverse():
    m = minkowski(4)
    assert np.array_equal(m.upper, np.diag([-1.0, 1, 1, 1]))
    assert m.det == -1.0
    assert m.sqrt_neg_det == 1.0
    assert m.g00_upper == -1.0


def test_diagonal_inverse():
    m = invert_metric(np.diag([-4.0, 1, 1, 1]))
    np.testing.assert_allclose(m.upper, np.diag([-0.25, 1, 1, 1]), atol=1e-15)
    assert m.det == pytest.approx(-4.0)
    assert m.sqrt_neg_det == pytest.approx(2.0)


def test_rejections():
    with pytest.raises(NonLorentzian):
        invert_metric(np.eye(4))
    with pytest.raises(SingularMetric):
        invert_metric(np.diag([-1.0, 1, 1, 0]))
    with pytest.raises(ConfigInvalid):
        invert_metric(np.array([[-1.0, 0.3], [0.0, 1.0]]))
    # g^00 = 0 with det < 0: null time coordinate
    g = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(TemporalDegeneracy):
        invert_metric(g)


@settings(max_examples=60, deadline=None)
@given(lorentzian_metrics())
def test_inverse_involution(g):
    m = invert_metric(g)
    back = invert_metric(m.upper)
    np.testing.assert_allclose(back.upper, g, atol=1e-10)
    np.testing.assert_allclose(m.upper @ m.lower, np.eye(m.d), atol=1e-12)


def test_contract_examples():
    m = invert_metric(np.diag([-2.0, 1.5, 0.5, 3.0]))
    ident = contract(m.g_upper, m.g_lower, [(1, 0)])
    np.testing.assert_allclose(ident.data, np.eye(4), atol=1e-15)
    assert ident.variance == ("u", "l")
    delta = DenseTensor(np.eye(4), ("u", "l"))
    v = DenseTensor(np.arange(4.0), ("u",))
    assert np.array_equal(contract(delta, v, [(1, 0)]).data, v.data)


def test_contract_matches_loops(rng):
    d = 3
    a = DenseTensor(rng.standard_normal((d,) * 3), ("u", "u", "l"))
    b = DenseTensor(rng.standard_normal((d,) * 3), ("l", "u", "l"))
    out = contract(a, b, [(0, 0), (2, 1)])
    ref = np.zeros((d, d))
    for i, j in itertools.product(range(d), repeat=2):
        ref[i, j] = sum(a.data[p, i, q] * b.data[p, q, j] for p in range(d) for q in range(d))
    np.testing.assert_allclose(out.data, ref, atol=1e-13)
    assert out.variance == ("u", "l")


def test_contract_errors(rng):
    a = DenseTensor(rng.standard_normal((3, 3)), ("u", "u"))
    with pytest.raises(VarianceMismatch):
        contract(a, a, [(0, 0)])
    big = DenseTensor(np.zeros((2,) * 5), ("u",) * 5)
    with pytest.raises(RankOverflow):
        contract(big, big, [], max_rank=8)
    with pytest.raises(VarianceMismatch):
        a + DenseTensor(np.zeros((3, 3)), ("l", "u"))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_contract_bilinear(seed, alpha, beta):
    r = np.random.default_rng(seed)
    a, b = (DenseTensor(r.standard_normal((3, 3, 3)), ("u", "l", "u")) for _ in range(2))
    c = DenseTensor(r.standard_normal((3, 3)), ("l", "u"))
    lhs = contract(a * alpha + b * beta, c, [(2, 0)])
    rhs = contract(a, c, [(2, 0)]) * alpha + contract(b, c, [(2, 0)]) * beta
    np.testing.assert_allclose(lhs.data, rhs.data, atol=1e-12)


def test_symmetrize_examples(rng):
    s = rng.standard_normal((4, 4))
    sym = DenseTensor(s + s.T, ("l", "l"))
    np.testing.assert_allclose(symmetrize(sym, (0, 1)).data, sym.data, atol=1e-15)
    anti = DenseTensor(s - s.T, ("l", "l"))
    np.testing.assert_allclose(symmetrize(anti, (0, 1)).data, 0.0, atol=1e-15)
    a = DenseTensor(s, ("l", "l"))
    np.testing.assert_allclose(symmetrize(a, (0, 1)).data, 0.5 * (s + s.T), atol=1e-15)
    with pytest.raises(VarianceMismatch):
        symmetrize(DenseTensor(s, ("u", "l")), (0, 1))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 3, 3), elements=st.floats(-5, 5)), st.sampled_from([(0, 1), (0, 2), (0, 1, 2)]))
def test_symmetrize_projection(x, axes):
    a = DenseTensor(x, ("u",) * 3)
    once = symmetrize(a, axes)
    np.testing.assert_allclose(symmetrize(once, axes).data, once.data, atol=1e-13)


def test_dense_tensor_validation():
    with pytest.raises(ConfigInvalid):
        DenseTensor(np.zeros((2, 3)), ("u", "u"))
    with pytest.raises(ConfigInvalid):
        DenseTensor(np.zeros((2, 2)), ("u",))
    with pytest.raises(ConfigInvalid):
        DenseTensor(np.zeros((2, 2)), ("u", "x"))
    t = DenseTensor(np.zeros((2, 2)), ("u", "u"))
    with pytest.raises(ValueError):
        t.data[0, 0] = 1.0


def test_metric_json_and_csv(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"d": 3, "g": [[-2.0, 0, 0], [0, 1, 0], [0, 0, 1]]}))
    m = load_metric_json(path)
    assert m.sqrt_neg_det == pytest.approx(np.sqrt(2.0))
    assert load_metric_json(path.read_text()).d == 3
    with pytest.raises(ConfigInvalid):
        load_metric_json('{"d": 4, "g": [[-1, 0], [0, 1]]}')
    with pytest.raises(ConfigInvalid):
        load_metric_json("not json")
    text = tensor_to_csv(m.g_upper, tmp_path / "t.csv")
    lines = text.splitlines()
    assert lines[0] == "index,value"
    assert lines[1] == "0 0,-0.5"
    assert len(lines) == 10
    assert (tmp_path / "t.csv").read_text() == text
