"""Size-bias coupling, exact oracles and Monte Carlo audits for degree-d
vertex counts in Erdős–Rényi graphs."""

from degstein.errors import DomainError, EnumerationCapError
from degstein.er_graph import GraphSample, ModelParams, count_degree, sample_graph
from degstein.moments import MomentSet, moment_set

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "EnumerationCapError",
    "GraphSample",
    "ModelParams",
    "MomentSet",
    "count_degree",
    "moment_set",
    "sample_graph",
    "__version__",
]
