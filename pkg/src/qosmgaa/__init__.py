"""QoS prediction toolkit: heterogeneous-graph construction, multi-order
multi-head graph attention with an adversarial Gumbel-Softmax interaction
module, classical CF/PMF baselines and a config-driven experiment runner."""

from .dataset import (AttributeTable, InteractionSet, QoSMatrix, batch_iter,
                      load_entity_attributes, load_qos_matrix, sample_sparse,
                      split_validation)
from .errors import (ConflictError, DivergenceError, DomainError, ParseError,
                     QosError, SaturationError, ShapeError)
from .graphbuild import (HeterogeneousGraph, NeighborhoodIndex,
                         build_heterogeneous_graph, inject_edge_noise,
                         neighborhood)
from .training import (DataBundle, Metrics, TrainingConfig, evaluate, fit,
                       mae_rmse)

__version__ = "0.1.0"

__all__ = [
    "AttributeTable", "InteractionSet", "QoSMatrix", "batch_iter",
    "load_entity_attributes", "load_qos_matrix", "sample_sparse",
    "split_validation", "ConflictError", "DivergenceError", "DomainError",
    "ParseError", "QosError", "SaturationError", "ShapeError",
    "HeterogeneousGraph", "NeighborhoodIndex", "build_heterogeneous_graph",
    "inject_edge_noise", "neighborhood", "DataBundle", "Metrics",
    "TrainingConfig", "evaluate", "fit", "mae_rmse", "__version__",
]
