import json

import numpy as np
import pytest

from gravham.canonical.lattice import (
    LatticeField,
    _site_model,
    _static_lapse,
    central_difference,
    energy_density,
    flux_density,
    front_diagnostics,
    gauss_energy,
    gauss_identity,
    hamilton_evolve,
    load_lattice_json,
    preset,
    total_energy,
)
from gravham.canonical.point import flux_vector, hamiltonian_Hc
from gravham.errors import ConfigInvalid, MetricDegenerated, NoFront


def smooth_lattice(n=48, dx=0.1, boundary="periodic", shift=0.0, amp=0.05, seed=0):
    """Smooth periodic perturbation of flat space in every spatial component."""
    r = np.random.default_rng(seed)
    x = dx * np.arange(n)
    L = n * dx
    g = np.tile(np.diag([-1.0, 1.0, 1.0, 1.0]), (n, 1, 1))
    pi = np.zeros_like(g)
    for a in range(1, 4):
        for b in range(a, 4):
            c1, c2, p1, p2 = r.uniform(-1, 1, 4)
            wave = amp * (c1 * np.sin(2 * np.pi * x / L + p1) + c2 * np.cos(4 * np.pi * x / L + p2))
            g[:, a, b] += wave
            g[:, b, a] = g[:, a, b]
            pw = 0.5 * amp * (c2 * np.sin(2 * np.pi * x / L + p2))
            pi[:, a, b] += pw
            pi[:, b, a] = pi[:, a, b]
    g[:, 0, 1] = g[:, 1, 0] = shift
    return LatticeField(g, pi, dx, boundary)


def test_presets_and_json(tmp_path):
    flat = preset("flat", n=16)
    assert flat.n == 16 and flat.d == 4
    kick = preset("kick", n=16, amplitude=0.01)
    assert kick.pi[8, 2, 3] == kick.pi[8, 3, 2] == 0.01
    with pytest.raises(ConfigInvalid):
        preset("nope")
    with pytest.raises(ConfigInvalid):
        preset("kick", component=(0, 1))
    back = load_lattice_json(kick.to_json())
    np.testing.assert_array_equal(back.pi, kick.pi)
    path = tmp_path / "lat.json"
    path.write_text(json.dumps({"preset": "kick", "n": 20, "spacing": 0.05}))
    lat = load_lattice_json(path)
    assert lat.n == 20 and lat.spacing == 0.05
    with pytest.raises(ConfigInvalid):
        load_lattice_json('{"sites": [{"x": 1}]}')
    with pytest.raises(ConfigInvalid):
        LatticeField(np.zeros((2, 4, 4)), np.zeros((2, 4, 4)), 0.1)
    with pytest.raises(ConfigInvalid):
        LatticeField(flat.g, flat.pi, 0.1, "open")


def test_density_matches_pointwise_hamiltonian():
    for shift in (0.0, 0.2):
        lat = smooth_lattice(n=24, shift=shift)
        dens = energy_density(lat)
        ref = np.array([hamiltonian_Hc(p) for p in lat.points])
        np.testing.assert_allclose(dens, ref, rtol=1e-12, atol=1e-15)


def test_central_difference_order():
    errs = []
    for n in (32, 64):
        dx = 2 * np.pi / n
        x = dx * np.arange(n)
        errs.append(np.max(np.abs(central_difference(np.sin(x), dx, "periodic") - np.cos(x))))
        fixed = central_difference(np.sin(x), dx, "fixed")
        assert np.max(np.abs(fixed - np.cos(x))) < 0.05
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_flat_is_static():
    traj = hamilton_evolve(preset("flat", n=16), 0.01, 50)
    assert np.all(traj.g == traj.g[0])
    assert np.all(traj.pi == 0.0)
    assert traj.relative_drift == 0.0


def test_kick_conservation_and_reversal():
    lat = preset("kick")
    traj = hamilton_evolve(lat, 0.01, 1000, store_every=10)
    assert traj.relative_drift <= 1e-6
    # the disturbance spreads from the kicked site
    spread = np.abs(traj.final.g[:, 2, 3]) > 1e-8
    assert spread.sum() > 10
    back = hamilton_evolve(traj.final.with_momentum(-traj.final.pi), 0.01, 1000, store_every=1000)
    assert np.max(np.abs(back.final.g - lat.g)) <= 1e-6
    assert np.max(np.abs(back.final.pi + lat.pi)) <= 1e-6


def test_fallback_gradients_match_closed_form():
    lat = smooth_lattice(n=12, amp=0.05)
    alpha = _static_lapse(lat.g)
    assert alpha == 1.0
    gamma, pi = lat.g[:, 1:, 1:], lat.pi[:, 1:, 1:]
    D = central_difference(gamma, lat.spacing, lat.boundary)
    h_fast, grads_fast = _site_model(lat.g, alpha)
    h_slow, grads_slow = _site_model(lat.g, None)
    np.testing.assert_allclose(h_fast(gamma, pi, D), h_slow(gamma, pi, D), rtol=1e-12, atol=1e-15)
    for fast, slow in zip(grads_fast(gamma, pi, D), grads_slow(gamma, pi, D)):
        np.testing.assert_allclose(fast, slow, rtol=1e-10, atol=1e-13)


def test_energy_error_is_second_order_in_dt():
    # bounded O(dt^2) energy error, relative to a small net energy (the density is indefinite)
    drifts = []
    for dt in (0.01, 0.005):
        traj = hamilton_evolve(smooth_lattice(n=16, amp=0.02), dt, round(0.5 / dt), drift_limit=np.inf)
        drifts.append(traj.relative_drift)
    assert drifts[0] / drifts[1] == pytest.approx(4.0, rel=0.1)


def test_general_gauge_and_fixed_boundary():
    lat = smooth_lattice(n=8, shift=0.2, amp=0.02)
    traj = hamilton_evolve(lat, 0.005, 10, store_every=5)
    assert traj.meta["lapse"] is None
    assert traj.relative_drift <= 1e-5
    np.testing.assert_array_equal(traj.g[:, :, 0, :], np.broadcast_to(lat.g[:, 0, :], traj.g[:, :, 0, :].shape))
    fixed = hamilton_evolve(smooth_lattice(n=24, boundary="fixed", amp=0.02), 0.01, 100, store_every=100)
    assert fixed.relative_drift <= 1e-4
    np.testing.assert_array_equal(fixed.g[-1, 0], fixed.g[0, 0])
    np.testing.assert_array_equal(fixed.g[-1, -1], fixed.g[0, -1])


def test_longitudinal_kick_grows_secularly():
    # zero-frequency modes of the unconstrained system: the pi^11 kick does not oscillate
    lat = preset("kick", component=(1, 1), amplitude=1e-3)
    traj = hamilton_evolve(lat, 0.01, 200, store_every=50, drift_limit=np.inf)
    dev = [np.max(np.abs(traj.g[k, :, 1, 1] - 1.0)) for k in range(len(traj.steps))]
    assert dev[-1] > 2 * dev[1]
    assert traj.relative_drift > 1e-6


def test_evolve_guards():
    lat = preset("kick")
    with pytest.raises(ConfigInvalid):
        hamilton_evolve(lat, 0.05, 10)
    with pytest.raises(ConfigInvalid):
        hamilton_evolve(lat, 0.01, -1)
    squeezed = preset("kick", n=16, component=(1, 1), amplitude=-2.0)
    with pytest.raises(MetricDegenerated):
        hamilton_evolve(squeezed, 0.02, 200, drift_limit=np.inf)


def test_trajectory_csv(tmp_path):
    traj = hamilton_evolve(preset("kick", n=8), 0.01, 4, store_every=2)
    text = traj.to_csv(tmp_path / "t.csv")
    rows = text.splitlines()
    header = rows[0].split(",")
    assert header[:3] == ["step", "site", "x"]
    assert header[-2:] == ["energy_density", "G1"]
    assert len(rows) == 1 + 3 * 8
    assert (tmp_path / "t.csv").read_text() == text


def test_flux_density_matches_pointwise():
    lat = smooth_lattice(n=16, shift=0.1)
    G = flux_density(lat)
    ref = np.array([flux_vector(p) for p in lat.points])
    np.testing.assert_allclose(G, ref, atol=1e-14)


def test_gauss_identity_examples():
    x = 0.1 * np.arange(30)
    assert gauss_identity(np.full(30, 2.5), 0.1, "fixed") == (0.0, 0.0)
    vol, surf = gauss_identity(3.0 * x, 0.1, "fixed")
    assert vol == pytest.approx(3.0 * x[-1], abs=1e-13)
    assert surf == pytest.approx(3.0 * x[-1], abs=1e-13)
    vol, surf = gauss_identity(3.0 * x, 0.1, "fixed", scheme="central")
    assert vol == pytest.approx(surf, abs=1e-13)
    with pytest.raises(ConfigInvalid):
        gauss_identity(x, 0.1, "fixed", scheme="spectral")


def test_gauss_central_scheme_converges_at_second_order():
    res = []
    for n in (81, 161, 321, 641):
        x = np.linspace(0.0, 1.0, n)
        G = np.exp(np.sin(3 * x))
        vol, surf = gauss_identity(G, x[1] - x[0], "fixed", scheme="central")
        res.append(abs(vol - surf))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders > 1.8)
    assert orders[-1] == pytest.approx(2.0, abs=0.2)


def test_gauss_on_lattices():
    for shift in (0.0, 0.15):
        lat = smooth_lattice(n=40, shift=shift, amp=0.1)
        vol, surf = gauss_energy(lat)
        assert abs(np.max(flux_density(lat)[:, 0])) > 1e-4
        assert surf == 0.0
        assert abs(vol) <= 1e-12
        fixed = smooth_lattice(n=40, shift=shift, amp=0.1, boundary="fixed")
        vol, surf = gauss_energy(fixed)
        assert abs(vol - surf) <= 1e-12 * max(1.0, abs(surf))


def test_front_diagnostics():
    with pytest.raises(NoFront):
        front_diagnostics(hamilton_evolve(preset("flat", n=16), 0.01, 5))
    traj = hamilton_evolve(preset("kick", n=128, boundary="fixed"), 0.01, 400, store_every=20)
    fr = front_diagnostics(traj)
    assert np.all(np.diff(fr.front_position) >= 0)
    assert fr.front_position[-1] > fr.front_position[0]
    assert np.all((fr.front_energy_fraction > 0) & (fr.front_energy_fraction <= 1))
    everything = front_diagnostics(traj, threshold=0.0)
    np.testing.assert_allclose(everything.front_energy_fraction, 1.0)


def test_total_energy_sums_interior():
    lat = smooth_lattice(n=20, boundary="fixed")
    dens = energy_density(lat)
    assert total_energy(lat) == pytest.approx(np.sum(dens[1:-1]) * lat.spacing)
    per = smooth_lattice(n=20)
    assert total_energy(per) == pytest.approx(np.sum(energy_density(per)) * per.spacing)
