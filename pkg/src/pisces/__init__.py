"""Random-walk circuit construction over social graphs, with a reciprocal
neighbor policy against route capture, and the anonymity metrics to judge it."""

from .adversary import (
    AdversaryScenario,
    AnnotatedGraph,
    add_malicious_clique,
    apply_node_degree_attack,
    apply_route_capture,
    inject_adversary,
    load_scenario,
)
from .experiments import ExperimentConfig, generate_synthetic_graph, load_config, run_experiment
from .graph import (
    SocialGraph,
    TransitionModel,
    is_connected,
    load_edge_list,
    mh_transition_prob,
    parse_edge_list,
    stationary_distribution,
)
from .metrics import (
    analytic_capture_probability,
    conductance,
    expected_entropy,
    insider_system_entropy,
    malicious_destination_posterior,
    selective_dos_entropy,
    shannon_entropy,
    two_hop_entropy,
)
from .protocol import (
    ConflictStore,
    ListServing,
    NeighborListCertificate,
    RNPNetwork,
    detect_conflict,
    local_integrity_check,
)
from .walks import ChurnModel, reverse_hit_probabilities, sample_walks, transition_power_vector, unreliability

__version__ = "0.1.0"

__all__ = [
    "AdversaryScenario",
    "AnnotatedGraph",
    "ChurnModel",
    "ConflictStore",
    "ExperimentConfig",
    "ListServing",
    "NeighborListCertificate",
    "RNPNetwork",
    "SocialGraph",
    "TransitionModel",
    "add_malicious_clique",
    "analytic_capture_probability",
    "apply_node_degree_attack",
    "apply_route_capture",
    "conductance",
    "detect_conflict",
    "expected_entropy",
    "generate_synthetic_graph",
    "inject_adversary",
    "insider_system_entropy",
    "is_connected",
    "load_config",
    "load_edge_list",
    "load_scenario",
    "local_integrity_check",
    "malicious_destination_posterior",
    "mh_transition_prob",
    "parse_edge_list",
    "reverse_hit_probabilities",
    "run_experiment",
    "sample_walks",
    "selective_dos_entropy",
    "shannon_entropy",
    "stationary_distribution",
    "transition_power_vector",
    "two_hop_entropy",
    "unreliability",
]
