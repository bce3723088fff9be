"""Tensor algebra and canonical dynamics for the Hamiltonian form of metric gravity."""

from .tensor_core import DenseTensor, MetricState, contract, invert_metric, minkowski, symmetrize

__version__ = "0.1.0"
