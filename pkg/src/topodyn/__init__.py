"""Continuous-time opinion dynamics where each agent follows its k nearest peers."""
from .analysis import (
    ClusterPartition,
    StateClass,
    classify_state,
    diameter,
    find_clusters,
    is_equilibrium,
    is_removal_stable,
    is_structurally_stable,
)
from .dynamics import (
    IntegrationFailure,
    SimConfig,
    StepRejected,
    SwitchEvent,
    Trajectory,
    canonicalize,
    integrate,
    pairwise_derivative,
    rhs,
    step,
)
from .kernels import BACKEND
from .perturbation_lab import (
    ExperimentReport,
    MetricParams,
    Scenario,
    add_agent,
    metric_rhs,
    perturb,
    remove_agent,
    run_experiment,
    split_perturbation,
)
from .topology import (
    InteractionGraph,
    K1StructureReport,
    ModelParams,
    NeighborMap,
    OpinionState,
    build_graph,
    compute_neighbors,
    validate_k1_structure,
    weak_components,
)

__version__ = "0.1.0"
