"""Dense tensors, metric inversion and the two index primitives.

Tensors are stored as full row-major numpy arrays of shape ``(d,) * rank``
together with a per-axis variance flag (``"u"`` for contravariant, ``"l"``
for covariant).  Dimensions of interest stay at d <= 6, so nothing here tries
to exploit sparsity.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigInvalid,
    NonLorentzian,
    RankOverflow,
    SingularMetric,
    TemporalDegeneracy,
    VarianceMismatch,
)

__all__ = [
    "DEFAULT_TOL",
    "MAX_RANK",
    "DenseTensor",
    "MetricState",
    "invert_metric",
    "contract",
    "symmetrize",
    "minkowski",
    "load_metric_json",
    "tensor_to_csv",
    "read_json_source",
]

DEFAULT_TOL = 1e-10
MAX_RANK = 8
SINGULAR_THRESHOLD = 1e-12


@dataclass(frozen=True)
class DenseTensor:
    """A rank-r array of d**r real components with index-variance metadata."""

    data: np.ndarray
    variance: tuple[str, ...]

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        variance = tuple(self.variance)
        if len(variance) != data.ndim:
            raise ConfigInvalid(
                f"variance has {len(variance)} flags for a rank-{data.ndim} array"
            )
        if any(v not in ("u", "l") for v in variance):
            raise ConfigInvalid(f"variance flags must be 'u' or 'l', got {variance}")
        if data.ndim and len(set(data.shape)) != 1:
            raise ConfigInvalid(f"all axes must share one dimension, got {data.shape}")
        object.__setattr__(self, "variance", variance)

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def dim(self) -> int:
        return self.data.shape[0] if self.data.ndim else 0

    def __getitem__(self, idx):
        return self.data[idx]

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        if self.variance != other.variance:
            raise VarianceMismatch(f"{self.variance} + {other.variance}")
        return DenseTensor(self.data + other.data, self.variance)

    def __mul__(self, scalar: float) -> "DenseTensor":
        return DenseTensor(self.data * scalar, self.variance)

    __rmul__ = __mul__

    def allclose(self, other: "DenseTensor", atol: float = DEFAULT_TOL) -> bool:
        return self.variance == other.variance and bool(
            np.allclose(self.data, other.data, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True)
class MetricState:
    """One metric point: g_ab, its inverse, the determinant and sqrt(-g)."""

    g_lower: DenseTensor
    g_upper: DenseTensor
    det: float
    sqrt_neg_det: float

    @property
    def d(self) -> int:
        return self.g_lower.dim

    @property
    def lower(self) -> np.ndarray:
        return self.g_lower.data

    @property
    def upper(self) -> np.ndarray:
        return self.g_upper.data

    @property
    def g00_upper(self) -> float:
        return float(self.g_upper.data[0, 0])

    @property
    def spatial_lower(self) -> np.ndarray:
        return self.g_lower.data[1:, 1:]


def invert_metric(g_lower, tol: float = DEFAULT_TOL) -> MetricState:
    """Build a :class:`MetricState` from covariant components.

    Only the two conditions the canonical formulas divide by are checked:
    det g < 0 and g^00 != 0.  No full signature test is performed.
    """
    g = np.array(g_lower.data if isinstance(g_lower, DenseTensor) else g_lower, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ConfigInvalid(f"metric must be a square matrix, got shape {g.shape}")
    if g.shape[0] < 2:
        raise ConfigInvalid("metric dimension must be at least 2")
    if not np.allclose(g, g.T, rtol=0.0, atol=tol):
        raise ConfigInvalid("metric is not symmetric")
    g = 0.5 * (g + g.T)
    det = float(np.linalg.det(g))
    scale = max(1.0, float(np.max(np.abs(g)))) ** g.shape[0]
    if abs(det) < SINGULAR_THRESHOLD * scale:
        raise SingularMetric(f"|det g| = {abs(det):.3e} is below threshold")
    if det >= 0:
        raise NonLorentzian(f"det g = {det:.6g} is not negative")
    g_inv = np.linalg.inv(g)
    g_inv = 0.5 * (g_inv + g_inv.T)
    # one Newton-Schulz sweep tightens the residual to ~1e-16 for modest condition numbers
    g_inv = g_inv @ (2.0 * np.eye(g.shape[0]) - g @ g_inv)
    g_inv = 0.5 * (g_inv + g_inv.T)
    if abs(g_inv[0, 0]) <= tol * max(1.0, float(np.max(np.abs(g_inv)))):
        raise TemporalDegeneracy("g^00 vanishes")
    residual = float(np.max(np.abs(g_inv @ g - np.eye(g.shape[0]))))
    if residual > 1e-12 * max(1.0, np.linalg.cond(g) / 1e4):
        raise SingularMetric(f"inversion residual {residual:.3e} too large")
    return MetricState(
        g_lower=DenseTensor(g, ("l", "l")),
        g_upper=DenseTensor(g_inv, ("u", "u")),
        det=det,
        sqrt_neg_det=math.sqrt(-det),
    )


def minkowski(d: int = 4) -> MetricState:
    eta = np.eye(d)
    eta[0, 0] = -1.0
    return invert_metric(eta)


def contract(a: DenseTensor, b: DenseTensor, axis_pairs, max_rank: int = MAX_RANK) -> DenseTensor:
    """Sum over paired axes; result axes are a's free axes then b's free axes."""
    axis_pairs = [tuple(p) for p in axis_pairs]
    for ia, ib in axis_pairs:
        if a.variance[ia] == b.variance[ib]:
            raise VarianceMismatch(
                f"axis {ia} of a and axis {ib} of b are both '{a.variance[ia]}'"
            )
        if a.data.shape[ia] != b.data.shape[ib]:
            raise VarianceMismatch("paired axes differ in dimension")
    rank = a.rank + b.rank - 2 * len(axis_pairs)
    if rank > max_rank:
        raise RankOverflow(f"result rank {rank} exceeds cap {max_rank}")
    axes_a = [p[0] for p in axis_pairs]
    axes_b = [p[1] for p in axis_pairs]
    data = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    variance = tuple(v for i, v in enumerate(a.variance) if i not in axes_a) + tuple(
        v for i, v in enumerate(b.variance) if i not in axes_b
    )
    return DenseTensor(data, variance)


def symmetrize(a: DenseTensor, axes) -> DenseTensor:
    """Average ``a`` over every permutation of ``axes``."""
    axes = tuple(axes)
    if len({a.variance[i] for i in axes}) > 1:
        raise VarianceMismatch(f"axes {axes} mix variances")
    if len(axes) < 2:
        return a
    perms = list(itertools.permutations(axes))
    total = np.zeros_like(a.data)
    for perm in perms:
        order = list(range(a.rank))
        for src, dst in zip(axes, perm):
            order[src] = dst
        total += np.transpose(a.data, order)
    return DenseTensor(total / len(perms), a.variance)


def read_json_source(source) -> str:
    """Text of a JSON document given inline (starting with "{") or as a file path."""
    if isinstance(source, str) and source.lstrip().startswith("{"):
        return source
    try:
        return Path(source).read_text()
    except (OSError, TypeError) as exc:
        raise ConfigInvalid(f"cannot read {source!r}: {exc}") from exc


def load_metric_json(source) -> MetricState:
    """Read ``{"d": int, "g": [[...], ...]}`` from a path or a JSON string."""
    text = read_json_source(source)
    try:
        payload = json.loads(text)
        d = int(payload["d"])
        g = np.asarray(payload["g"], dtype=float)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid(f"bad metric JSON: {exc}") from exc
    if g.shape != (d, d):
        raise ConfigInvalid(f"metric shape {g.shape} does not match d={d}")
    return invert_metric(g)


def tensor_to_csv(tensor, path=None) -> str:
    """Flat CSV with an index-tuple column, e.g. ``"0 1 2",value``."""
    data = tensor.data if isinstance(tensor, DenseTensor) else np.asarray(tensor)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "value"])
    for idx in itertools.product(*(range(n) for n in data.shape)):
        writer.writerow([" ".join(map(str, idx)), repr(float(data[idx]))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
