"""Seeded generators for random admissible metrics and field points."""

from __future__ import annotations

import numpy as np

from .canonical.point import FieldPoint, momentum_from_velocity
from .tensor_core import MetricState, invert_metric

__all__ = ["random_metric_array", "random_metric", "random_symmetric", "random_field_point"]


def random_metric_array(rng: np.random.Generator, d: int, spread: float = 0.2) -> np.ndarray:
    """A Lorentzian metric P^T eta P with P a perturbed identity."""
    eta = np.eye(d)
    eta[0, 0] = -1.0
    while True:
        P = np.eye(d) + spread * rng.standard_normal((d, d))
        g = P.T @ eta @ P
        g = 0.5 * (g + g.T)
        gu = np.linalg.inv(g)
        # keep t = const slices spacelike so g^00 < 0 and the spatial block is positive
        if gu[0, 0] < -0.2 and np.all(np.linalg.eigvalsh(g[1:, 1:]) > 0.2):
            return g


def random_metric(rng: np.random.Generator, d: int, spread: float = 0.2) -> MetricState:
    return invert_metric(random_metric_array(rng, d, spread))


def random_symmetric(rng: np.random.Generator, *shape_and_d: int, scale: float = 1.0) -> np.ndarray:
    """Random array whose last two axes are symmetric."""
    x = scale * rng.standard_normal(shape_and_d)
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def random_field_point(rng: np.random.Generator, d: int, spread: float = 0.2, scale: float = 0.5):
    """Random metric with random symmetric velocities and spatial derivatives.

    The momenta are filled in from the velocities, so the point is on-shell.
    """

    m = random_metric(rng, d, spread)
    p = FieldPoint(
        metric=m,
        d_spatial=random_symmetric(rng, d - 1, d, d, scale=scale),
        velocity=random_symmetric(rng, d, d, scale=scale),
    )
    return p.with_momentum(momentum_from_velocity(p))
