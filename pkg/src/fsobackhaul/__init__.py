"""Resilient FSO backhaul design with passive mirror relays."""

from .core import (
    CostWeights,
    Node,
    NodeKind,
    NotKConnectableError,
    Path,
    PotentialGraph,
    Topology,
    ValidationError,
    count_devices,
)
from .exact import solve_exact
from .instance import Instance, Obstacle, build_potential_graph, generate_random_instance, read_instance, write_instance
from .reliability import ChannelParams, link_reliability, max_transmission_distance
from .sequential import sequential_solve
from .verify import verify_report

__all__ = [
    "ChannelParams", "CostWeights", "Instance", "Node", "NodeKind", "NotKConnectableError", "Obstacle", "Path",
    "PotentialGraph", "Topology", "ValidationError", "build_potential_graph", "count_devices",
    "generate_random_instance", "link_reliability", "max_transmission_distance", "read_instance",
    "sequential_solve", "solve_exact", "verify_report", "write_instance",
]
