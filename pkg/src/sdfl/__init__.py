"""Sparse decentralized federated learning: library, simulator, and CLI.

Nodes cooperatively fit a shared s-sparse model over a peer graph with no
central server. Neighbour exchange uses one-bit compressed messages
(norm + measurement signs) recovered by a sparse sign-consistency solver,
gradients can be perturbed for differential privacy, and an experiment
harness reproduces the desk-scale comparisons against decentralized SGD
baselines.
"""

__version__ = "0.1.0"

from . import kernels  # noqa: F401  (selects the compiled or numpy backend)
