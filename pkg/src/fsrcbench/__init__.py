"""Few-shot relation classification benchmark toolkit.

Builds diversity-controlled few-shot artifacts (pair datasets, M-way
K-shot episodes with NOTA) from a relation corpus, trains and evaluates
pluggable sentence encoders under a siamese cosine-similarity contract,
and drives the relation-diversity / negative-ratio / data-size experiment
grid at desk scale.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
