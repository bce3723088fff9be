"""Truncated quantization: finitely many metric components on a grid.

The wave function lives on a tensor-product grid over the retained metric
components.  Derivatives are central differences with Dirichlet closure, so
every operator is a sparse matrix built from Kronecker products.

Retained variables are independent components ``x_ab = g_ab`` (a <= b).
The momentum conjugate to an off-diagonal component carries a factor 1/2,
``pi^ab = -i hbar (1/2) d/dx_ab``, so that [g_ab, pi^ab] = i hbar Delta^ab_ab.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .canonical.point import FieldPoint, _cross_source_array, cross_source
from .errors import ConfigInvalid, NonIntegrableGauge, NonUnitaryDrift, TemporalDegeneracy
from .grav_tensors import E_array, I_array, b_block

__all__ = [
    "ConfigGrid",
    "WaveFunction",
    "OperatorMatrix",
    "EvolutionResult",
    "parse_variable",
    "position_operator",
    "momentum_operator",
    "quantum_bracket_check",
    "build_hamiltonian_operator",
    "evolve_schrodinger",
    "primary_constraint_apply",
    "constraint_operator",
    "constraint_chain_step",
    "uncontracted_residual",
    "gaussian_width_law",
]


def parse_variable(name) -> tuple[int, int]:
    """"g12" or (1, 2) -> (1, 2) with the smaller index first."""
    if isinstance(name, str):
        m = re.fullmatch(r"g?(\d)(\d)", name.strip())
        if not m:
            raise ConfigInvalid(f"cannot parse metric variable {name!r}; use e.g. 'g11'")
        a, b = int(m.group(1)), int(m.group(2))
    else:
        a, b = (int(i) for i in name)
    return (min(a, b), max(a, b))


@dataclass(frozen=True)
class ConfigGrid:
    """Uniform grid over retained metric components."""

    variables: tuple
    ranges: tuple
    points: tuple

    def __post_init__(self):
        variables = tuple(parse_variable(v) for v in self.variables)
        k = len(variables)
        if k == 0 or len(set(variables)) != k:
            raise ConfigInvalid("need at least one distinct variable")
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        points = tuple(int(n) for n in self.points)
        if len(ranges) != k or len(points) != k:
            raise ConfigInvalid("one range and one point count per variable")
        for (a, b), (lo, hi), n in zip(variables, ranges, points):
            if n < 8:
                raise ConfigInvalid(f"need at least 8 points per axis, got {n}")
            if not hi > lo:
                raise ConfigInvalid(f"empty range [{lo}, {hi}]")
            if a == b and a > 0 and lo <= 0:
                raise ConfigInvalid(f"g{a}{b} range must stay positive, got [{lo}, {hi}]")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "points", points)

    @classmethod
    def build(cls, variables, ranges=None, points=64) -> "ConfigGrid":
        variables = [parse_variable(v) for v in variables]
        if ranges is None:
            ranges = [(-0.5, 0.5) if a != b else ((0.5, 1.5) if a else (-1.5, -0.5)) for a, b in variables]
        if isinstance(points, int):
            points = [points] * len(variables)
        return cls(tuple(variables), tuple(ranges), tuple(points))

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(self.ranges, self.points)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.ranges, self.points)]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def coordinates(self) -> np.ndarray:
        """(size, k) array of grid points in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def index(self, var) -> int:
        var = parse_variable(var)
        try:
            return self.variables.index(var)
        except ValueError:
            raise ConfigInvalid(f"variable g{var[0]}{var[1]} not on this grid") from None

    def interior_mask(self, margin: int = 2) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        for ax, n in enumerate(self.shape):
            sl = [slice(None)] * len(self.shape)
            sl[ax] = np.r_[0:margin, n - margin:n]
            mask[tuple(sl)] = False
        return mask.ravel()

    def metric_at(self, context: np.ndarray) -> np.ndarray:
        """Full metrics (size, d, d): the context metric with retained entries from the grid."""
        X = self.coordinates()
        g = np.broadcast_to(context, (self.size,) + context.shape).copy()
        for j, (a, b) in enumerate(self.variables):
            g[:, a, b] = g[:, b, a] = X[:, j]
        return g


@dataclass
class WaveFunction:
    grid: ConfigGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(self.grid.size)
        if not np.all(np.isfinite(self.values)):
            raise ConfigInvalid("wave function has non-finite amplitudes")

    @classmethod
    def from_function(cls, grid: ConfigGrid, fn) -> "WaveFunction":
        return cls(grid, fn(*grid.mesh()).ravel())

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume)

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.values / np.sqrt(self.norm))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"g{a}{b}" for a, b in self.grid.variables] + ["re", "im"])
        for x, v in zip(self.grid.coordinates(), self.values):
            w.writerow([repr(float(c)) for c in x] + [repr(float(v.real)), repr(float(v.imag))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class OperatorMatrix:
    """Sparse operator on a grid, with the left-hand factor of its evolution equation."""

    matrix: sp.spmatrix
    grid: ConfigGrid
    label: str = ""
    lhs_factor: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=complex)

    def __matmul__(self, other):
        if isinstance(other, WaveFunction):
            return WaveFunction(self.grid, self.matrix @ other.values)
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.matrix @ other.matrix, self.grid, f"{self.label}{other.label}")
        return self.matrix @ other

    def __add__(self, other):
        return OperatorMatrix(self.matrix + other.matrix, self.grid, f"{self.label}+{other.label}")

    def __sub__(self, other):
        return OperatorMatrix(self.matrix - other.matrix, self.grid, f"{self.label}-{other.label}")

    def __mul__(self, scalar):
        return OperatorMatrix(self.matrix * scalar, self.grid, self.label, self.lhs_factor, dict(self.meta))

    __rmul__ = __mul__

    def adjoint_error(self) -> float:
        """max |H - H^dagger| entry; the grid weight is uniform, so the adjoint is the conjugate transpose."""
        diff = (self.matrix - self.matrix.conj().T).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def max_abs(self) -> float:
        m = self.matrix.tocoo()
        return float(np.max(np.abs(m.data))) if m.nnz else 0.0


# -- 1D stencils and Kronecker lifting --------------------------------------

def _d1(n, h):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1]) / (2.0 * h)


def _d2(n, h):
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / (h * h)


def _lift(grid: ConfigGrid, axis: int, op):
    mats = [sp.identity(n, format="csr") for n in grid.shape]
    mats[axis] = sp.csr_matrix(op)
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def _deriv(grid, axis):
    return _lift(grid, axis, _d1(grid.shape[axis], grid.spacing[axis]))


def _weight(var) -> float:
    return 1.0 if var[0] == var[1] else 0.5


def position_operator(grid: ConfigGrid, which, power: int = 1) -> OperatorMatrix:
    j = grid.index(which)
    x = grid.coordinates()[:, j]
    return OperatorMatrix(sp.diags(x**power), grid, f"g{grid.variables[j][0]}{grid.variables[j][1]}")


def _check_integrable(grid: ConfigGrid, f, tol: float = 1e-8, samples: int = 12, seed: int = 0):
    """Symmetry of df_v/dx_w at sample points, by fourth-order central differences."""
    rng = np.random.default_rng(seed)
    lo = np.array([r[0] for r in grid.ranges])
    hi = np.array([r[1] for r in grid.ranges])
    X = lo + (hi - lo) * (0.2 + 0.6 * rng.random((samples, len(lo))))
    k = X.shape[1]
    step = 1e-3 * np.maximum(hi - lo, 1e-12)
    J = np.zeros((samples, k, k))
    for w in range(k):
        e = np.zeros(k)
        e[w] = step[w]
        vals = [np.asarray(f(X + c * e), dtype=float) for c in (-2, -1, 1, 2)]
        J[:, :, w] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * step[w])
    asym = np.max(np.abs(J - np.swapaxes(J, 1, 2)))
    if asym > tol * max(1.0, np.max(np.abs(J))):
        raise NonIntegrableGauge(f"df_v/dx_w is not symmetric (max asymmetry {asym:.3e})")


def momentum_operator(grid: ConfigGrid, which, f=None, hbar: float = 1.0) -> OperatorMatrix:
    """pi^v = -i hbar w_v (d/dx_v + f_v(x)), w_v = 1 (diagonal) or 1/2 (off-diagonal).

    ``f`` maps an (npts, k) array of grid coordinates to (npts, k) values of
    f_v; it must pass the integrability check.
    """
    j = grid.index(which)
    var = grid.variables[j]
    op = _deriv(grid, j)
    if f is not None:
        _check_integrable(grid, f)
        fv = np.asarray(f(grid.coordinates()), dtype=float)[:, j]
        op = op + sp.diags(fv)
    return OperatorMatrix(-1j * hbar * _weight(var) * op, grid, f"pi{var[0]}{var[1]}")


def _smooth_test_functions(grid: ConfigGrid):
    lo = np.array([r[0] for r in grid.ranges])
    hi = np.array([r[1] for r in grid.ranges])
    mid, width = 0.5 * (lo + hi), (hi - lo)
    out = []
    for kshift, kfac in ((0.0, 1.0), (0.1, 2.0), (-0.15, 3.0)):
        def fn(*X, kshift=kshift, kfac=kfac):
            env = np.ones_like(X[0], dtype=complex)
            for j, x in enumerate(X):
                u = (x - mid[j] - kshift * width[j]) / width[j]
                env = env * np.exp(-u**2 / (2 * 0.12**2)) * np.exp(1j * 2 * np.pi * kfac * u)
            return env
        out.append(WaveFunction.from_function(grid, fn))
    return out


def quantum_bracket_check(grid: ConfigGrid, hbar: float = 1.0, pairs=None, margin: int = 2):
    """max over pairs of ||[g_v, pi^w] psi - i hbar Delta^w_v psi|| / ||psi|| (interior)."""
    mask = grid.interior_mask(margin)
    tests = _smooth_test_functions(grid)
    if pairs is None:
        pairs = [(v, w) for v in grid.variables for w in grid.variables]
    per_pair = {}
    for v, w in pairs:
        v, w = parse_variable(v), parse_variable(w)
        G = position_operator(grid, v).matrix
        P = momentum_operator(grid, w, hbar=hbar).matrix
        comm = G @ P - P @ G
        delta = _weight(v) if v == w else 0.0
        worst = 0.0
        for psi in tests:
            r = comm @ psi.values - 1j * hbar * delta * psi.values
            worst = max(worst, np.linalg.norm(r[mask]) / np.linalg.norm(psi.values[mask]))
        per_pair[(v, w)] = worst
    return max(per_pair.values()), per_pair


# -- Hamiltonian ------------------------------------------------------------

def _coefficients(g, d_spatial, retained):
    """Contracted-equation coefficients at metrics g (n, d, d).

    Returns (I_vw, drift_v, potential) with I over retained spatial pairs,
    weighted by the multiplicity of each symmetric pair.
    """
    d = g.shape[-1]
    gu = np.linalg.inv(g)
    det = np.linalg.det(g)
    if np.any(det >= 0):
        raise TemporalDegeneracy("metric on the grid is not Lorentzian")
    g00 = gu[:, 0, 0]
    if np.any(g00 == 0):
        raise TemporalDegeneracy("g^00 vanishes on the grid")
    sg = np.sqrt(-det)
    I = I_array(g[:, 1:, 1:], d)
    ds = np.broadcast_to(d_spatial, (len(g),) + d_spatial.shape)
    c = _cross_source_array(gu, ds)[:, 1:, 1:]
    sp_idx = list(range(1, d))
    pot_b = b_block(gu, (None, None, sp_idx, None, None, sp_idx))
    bdd = np.einsum("zabkmnl,zkab,zlmn->z", pot_b, ds, ds)
    icc = np.einsum("zmnpq,zmn,zpq->z", I, c, c)
    potential = -(det / 4.0) * (icc - g00 * bdd)
    w = np.einsum("zmnpq,zpq->zmn", I, c)
    # retained pairs only; spatial index a maps to a - 1 in the I block
    Ivw = np.array([[I[:, a - 1, b - 1, p - 1, q - 1] for (p, q) in retained] for (a, b) in retained])
    mult = np.array([1.0 if a == b else 2.0 for a, b in retained])
    Ivw = Ivw * mult[:, None, None] * mult[None, :, None]
    drift = np.array([w[:, a - 1, b - 1] for a, b in retained]) * mult[:, None] * sg[None, :]
    return Ivw, drift, potential


def build_hamiltonian_operator(grid: ConfigGrid, context: FieldPoint, hbar: float = 1.0,
                               coefficients: str = "frozen") -> OperatorMatrix:
    """Scalar (I-contracted) Hamiltonian operator with momenta on the right.

    ``coefficients="frozen"`` evaluates the metric-dependent coefficients at
    the context point (the operator is then self-adjoint when the drift is
    absent or purely first order); ``"local"`` evaluates them at every grid
    point, as in the printed ordering.  The evolution equation is
    ``i hbar (d-1)^2 dPsi/dtau = H Psi``, recorded as ``lhs_factor``.
    """
    d = context.d
    retained = [v for v in grid.variables if v[0] >= 1]
    if not retained:
        raise ConfigInvalid("Hamiltonian needs at least one spatial variable on the grid")
    if coefficients == "frozen":
        g = context.metric.lower[None]
    elif coefficients == "local":
        g = grid.metric_at(context.metric.lower)
    else:
        raise ConfigInvalid(f"coefficients must be 'frozen' or 'local', got {coefficients!r}")
    Ivw, drift, potential = _coefficients(g, context.d_spatial, retained)
    axes = [grid.index(v) for v in retained]
    n = grid.size

    def diag(x):
        return sp.diags(np.broadcast_to(x, (n,)).astype(complex))

    H = sp.csr_matrix((n, n), dtype=complex)
    for i, ai in enumerate(axes):
        for j, aj in enumerate(axes):
            if i == j:
                dd = _lift(grid, ai, _d2(grid.shape[ai], grid.spacing[ai]))
            else:
                dd = _deriv(grid, ai) @ _deriv(grid, aj)
            # pi^v pi^w = -hbar^2 (w_v d_v)(w_w d_w); the multiplicities cancel the weights
            H = H + diag(-(hbar**2) * Ivw[i, j] * _weight(retained[i]) * _weight(retained[j])) @ dd
    # drift: -sqrt(-g) I_mnpq c^pq pi^mn with pi = -i hbar w d
    for i, ai in enumerate(axes):
        H = H + diag(1j * hbar * drift[i] * _weight(retained[i])) @ _deriv(grid, ai)
    H = H + diag(potential)
    homogeneous = not np.any(context.d_spatial)
    meta = {
        "coefficients": coefficients,
        "homogeneous": homogeneous,
        "ordering_term": "vanishes" if homogeneous else "omitted (not evaluated off the homogeneous truncation)",
        "retained": [f"g{a}{b}" for a, b in retained],
    }
    return OperatorMatrix(H, grid, "H", float((d - 1) ** 2), meta)


@dataclass
class EvolutionResult:
    final: WaveFunction
    times: np.ndarray
    norms: np.ndarray
    snapshots: list
    drift: float
    max_step_drift: float
    scheme: str = "crank-nicolson"


def evolve_schrodinger(psi0: WaveFunction, H: OperatorMatrix, dtau: float, steps: int,
                       hbar: float = 1.0, store_every: int = 0, max_drift: float = 1e-6) -> EvolutionResult:
    """Cayley (Crank-Nicolson) stepping of i hbar L dPsi/dtau = H Psi, L = H.lhs_factor.

    Raises ``NonUnitaryDrift`` if the relative norm change exceeds
    ``max_drift`` (pass ``max_drift=None`` to only report it).
    """
    if steps < 0 or dtau <= 0:
        raise ConfigInvalid("need steps >= 0 and dtau > 0")
    n = psi0.grid.size
    A = (1j * dtau / (2.0 * hbar * H.lhs_factor)) * H.matrix
    eye = sp.identity(n, dtype=complex, format="csc")
    lhs = splu((eye + A).tocsc())
    rhs = (eye - A).tocsr()
    psi = psi0.values.copy()
    n0 = psi0.norm
    norms = [n0]
    snaps = [WaveFunction(psi0.grid, psi.copy())] if store_every else []
    step_drift = 0.0
    for k in range(1, steps + 1):
        psi = lhs.solve(rhs @ psi)
        nk = float(np.sum(np.abs(psi) ** 2) * psi0.grid.cell_volume)
        step_drift = max(step_drift, abs(nk - norms[-1]) / n0)
        norms.append(nk)
        if store_every and k % store_every == 0:
            snaps.append(WaveFunction(psi0.grid, psi.copy()))
    norms = np.array(norms)
    drift = float(np.max(np.abs(norms - n0)) / n0)
    if max_drift is not None and drift > max_drift:
        raise NonUnitaryDrift(f"norm drift {drift:.3e} exceeds {max_drift:.1e}")
    return EvolutionResult(WaveFunction(psi0.grid, psi), dtau * np.arange(steps + 1), norms, snaps,
                           drift, step_drift)


def gaussian_width_law(sigma0: float, coeff: float, tau, hbar: float = 1.0):
    """Std of |Psi|^2 for a Gaussian under -hbar^2 c d^2: sigma0 sqrt(1 + (c hbar tau / sigma0^2)^2)."""
    tau = np.asarray(tau, dtype=float)
    return sigma0 * np.sqrt(1.0 + (coeff * hbar * tau / sigma0**2) ** 2)


# -- constraints ------------------------------------------------------------

def _constraint_source(p: FieldPoint, sigma: int) -> float:
    """1/2 sqrt(-g) B^{((0s)0|mnk)} g_{mn,k} at the (frozen) context point."""
    return 0.5 * p.metric.sqrt_neg_det * float(cross_source(p)[0, sigma])


def constraint_operator(grid: ConfigGrid, p: FieldPoint, sigma: int, hbar: float = 1.0) -> OperatorMatrix:
    """i hbar d/dg_{0s} - 1/2 sqrt(-g) B^{((0s)0|mnk)} g_{mn,k}, frozen coefficient."""
    j = grid.index((0, sigma))
    op = 1j * hbar * _deriv(grid, j) - _constraint_source(p, sigma) * sp.identity(grid.size)
    return OperatorMatrix(op, grid, f"phi0{sigma}")


def primary_constraint_apply(psi: WaveFunction, p: FieldPoint, sigma: int = 0, hbar: float = 1.0,
                             margin: int = 2) -> float:
    """Relative residual of the constraint condition over the grid interior."""
    C = constraint_operator(psi.grid, p, sigma, hbar)
    r = C.matrix @ psi.values
    mask = psi.grid.interior_mask(margin)
    return float(np.linalg.norm(r[mask]) / np.linalg.norm(psi.values[mask]))


def constraint_chain_step(C: OperatorMatrix, H: OperatorMatrix, hbar: float = 1.0) -> OperatorMatrix:
    """(i / hbar) [C, H]: one link of the constraint chain."""
    comm = C.matrix @ H.matrix - H.matrix @ C.matrix
    return OperatorMatrix((1j / hbar) * comm, C.grid, f"[{C.label},{H.label}]")


def uncontracted_residual(psi: WaveFunction, context: FieldPoint, hbar: float = 1.0, margin: int = 2) -> np.ndarray:
    """Per-component residual of the matrix equation when Psi follows the contracted one.

    R^{pqmn} = || E^{pqmn} H Psi / (d-1)^2 - pi^pq pi^mn Psi || / ||Psi|| in the
    homogeneous truncation with frozen coefficients; momenta of components
    not on the grid act as zero.
    """
    grid = psi.grid
    d = context.d
    H = build_hamiltonian_operator(grid, context, hbar)
    E = E_array(context.metric.upper)[1:, 1:, 1:, 1:]
    Hpsi = H.matrix @ psi.values / H.lhs_factor
    mask = grid.interior_mask(margin)
    nrm = np.linalg.norm(psi.values[mask])
    pis = {}
    for a in range(1, d):
        for b in range(1, d):
            v = (min(a, b), max(a, b))
            pis[(a, b)] = momentum_operator(grid, v, hbar=hbar).matrix if v in grid.variables else None
    out = np.zeros((d - 1,) * 4)
    for p_, q, m, n in np.ndindex(*(d - 1,) * 4):
        P1, P2 = pis[(p_ + 1, q + 1)], pis[(m + 1, n + 1)]
        kin = P1 @ (P2 @ psi.values) if P1 is not None and P2 is not None else 0.0
        r = E[p_, q, m, n] * Hpsi - kin
        out[p_, q, m, n] = np.linalg.norm(np.broadcast_to(r, psi.values.shape)[mask]) / nrm
    return out
