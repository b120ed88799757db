"""parasched: operator-graph planning and simulation for heterogeneous clusters."""

from .cost import CostModel, ProfileTable, RooflineParams, arithmetic_intensity, comm_time_ns, roofline_rate
from .errors import (
    InfeasibleError,
    MemoryInfeasibleError,
    NodeFailureAbort,
    ParaschedError,
    PlacementError,
    RewriteError,
    ScenarioParseError,
    SizeLimitError,
)
from .graph import ComputeGraph, DataEdge, Operator, Workload, global_order, topo_order, validate_workload
from .search import (
    SearchConfig,
    SearchStats,
    Solution,
    branch_and_bound,
    brute_force_oracle,
    greedy_init,
    replan,
)
from .sim import (
    Assignment,
    Schedule,
    SimPolicy,
    Timeline,
    Violation,
    check_constraints,
    simulate,
    weighted_objective,
)
from .topo import (
    ConflictGroup,
    Device,
    LinkEdge,
    Topology,
    TopologyEvent,
    apply_events_until,
    bandwidth_change,
    links_between,
    node_fail,
    node_join,
    validate_topology,
)
from .transform import (
    SplitSpec,
    Variant,
    VariantSet,
    apply_provenance,
    decompose_allreduce,
    enumerate_variants,
    fuse_pair,
    split_operator,
)

__version__ = "0.1.0"
