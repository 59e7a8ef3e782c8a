"""Graph-regularized contextual bandits.

Multi-user linear bandits where user similarity is encoded by a weighted
graph: graph-aware estimation and confidence sets, UCB policies (exact
joint and linear-cost local variants) plus standard baselines, synthetic
smooth-signal environments, ratings-data ingestion, and a reproducible
experiment harness.
"""

from .errors import (
    ConfigError,
    GraphBandError,
    InvalidInputError,
    NumericalError,
    ParseError,
    StateError,
)
from .graph_core import (
    Graph,
    GraphGenConfig,
    LaplacianSet,
    build_ba_graph,
    build_er_graph,
    build_rbf_graph,
    build_ws_graph,
    graph_from_json,
    graph_to_json,
    laplacians,
    smoothness,
    smoothness_pairwise,
    sparsity_measure,
)
from .smooth_signals import (
    UserPopulation,
    generate_smooth,
    normalize_population,
    random_theta0,
)
from .estimator import (
    ConfidenceParams,
    JointState,
    PrecisionState,
    UserStats,
    beta_width,
    delta_hat,
    estimate_local,
    solve_joint,
    user_precision,
)
from .policies import (
    ClubPolicy,
    GobLinPolicy,
    GraphUCBLocalPolicy,
    GraphUCBPolicy,
    LinUCBPolicy,
    Policy,
)
from .env import (
    Environment,
    RegretLedger,
    Diagnostics,
    aggregate_runs,
    make_unit_ball_arms,
    run,
)
from .experiment import (
    ExperimentConfig,
    bench_scaling,
    build_instance,
    run_experiment,
    sweep,
)

__version__ = "0.1.0"
