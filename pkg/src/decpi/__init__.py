"""Policy iteration for decentralized POMDPs with stochastic finite-state
controllers and a correlation device."""

from ._config import config_context, get_config, set_config
from .controller import (
    CorrelationDevice,
    JointController,
    LocalController,
    ValueTable,
    evaluate,
    make_initial,
    random_deterministic,
    random_stochastic,
    value_at_belief,
)
from .controller_io import deserialize_controller, export_dot, serialize_controller
from .domains import DOMAINS, builtin_domain
from .dpomdp import parse_dpomdp, serialize_dpomdp
from .estimators import BoundedPolicyIteration, HeuristicPolicyIteration, PolicyIteration
from .exceptions import (
    CapacityError,
    DecPomdpError,
    ParseError,
    SolverError,
    UnreachableObservationError,
)
from .model import DecPomdp, FixedAgentPolicy, belief_update, observation_likelihood

__version__ = "0.1.0"

__all__ = [
    "BoundedPolicyIteration",
    "CapacityError",
    "CorrelationDevice",
    "DOMAINS",
    "DecPomdp",
    "DecPomdpError",
    "FixedAgentPolicy",
    "HeuristicPolicyIteration",
    "JointController",
    "LocalController",
    "ParseError",
    "PolicyIteration",
    "SolverError",
    "UnreachableObservationError",
    "ValueTable",
    "belief_update",
    "builtin_domain",
    "config_context",
    "deserialize_controller",
    "evaluate",
    "export_dot",
    "get_config",
    "make_initial",
    "observation_likelihood",
    "parse_dpomdp",
    "random_deterministic",
    "random_stochastic",
    "serialize_controller",
    "serialize_dpomdp",
    "set_config",
    "value_at_belief",
]
