"""Reaction-diffusion on infinite weighted graphs through eventually flat
functions: exact algebra, certified heat semigroup, finite-volume spectral
sections and a windowed Picard solver for mild solutions."""

__version__ = "0.1.0"

from . import families
from ._kernels import get_backend, set_backend
from .compressed import (
    ConvergenceRow,
    ConvergenceTable,
    HybridWeights,
    SectionValues,
    SpectralModel,
    WeightPlan,
    build_spectral_model,
    dirichlet_lower_bound,
    finite_volume_weights,
    hybrid_weights,
    linear_convergence_experiment,
    spectral_propagate,
)
from .errors import (
    BoxExitError,
    GraphMismatchError,
    InconclusiveError,
    InvalidVertexError,
    NetflatError,
    NumericError,
    ResourceError,
    SolverError,
    UnboundedOperatorError,
    ValidationError,
)
from .flat import (
    BoundarySet,
    FlatFunction,
    add,
    inner,
    jump_edges,
    lp_norm,
    mass,
    mul,
    scale,
    separation_function,
    value_range,
    vanishes_on,
)
from .graph import FiniteSubgraph, GraphModel, TailSpec, VertexId
from .operator import (
    LaplacianOp,
    apply_laplacian,
    bilinear_form,
    default_vertex_weights,
    op_norm_inf,
    sobolev_norm,
    to_q_matrix,
)
from .propagator import KernelQuery, decay_bound, heat_kernel, heat_kernel_column, propagate
from .reaction import (
    ReactionField,
    ReactionMap,
    Trajectory,
    evaluate_reaction,
    gronwall_stability_check,
    semilinear_convergence_experiment,
    solve_boundary_ode,
    solve_mild,
    solve_mild_spectral,
    spatial_asymptotics_check,
)
from .schedule import Schedule
