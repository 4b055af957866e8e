"""Deterministic hierarchical-SGD simulation and analysis toolkit."""

from . import bounds, comm, divergence, engine, errors, harness, objectives, topology
from .bounds import (
    BoundInputs,
    fixed_grouping_bound,
    local_sgd_bound,
    lr_max,
    multi_level_bound,
    multi_level_raw_bound,
    period_rescaling_check,
    random_grouping_bound,
    sandwich_check,
    sandwich_check_multi,
    speedup_profile,
)
from .comm import CommModel, account, builtin_model, time_to_target
from .divergence import (
    DivergenceReport,
    check_expected_downward,
    check_expected_level_divergences,
    check_expected_upward,
    check_partition_identity,
    downward_divergence,
    estimate_sup_divergences,
    global_divergence,
    level_divergences,
    upward_divergence,
)
from .engine import (
    RunConfig,
    RunTrace,
    measure_parameter_mses,
    run,
    run_multi_level,
    run_two_level,
    sample_participants,
)
from .objectives import (
    GradientOracle,
    LogisticObjective,
    QuadraticObjective,
    f_star,
    full_gradient,
    make_logistic,
    make_quadratic_fixture,
    sample_gradient,
)
from .topology import (
    Grouping,
    MultiLevelTopology,
    TwoLevelTopology,
    aggregation_matrix,
    build_multi_level,
    build_two_level,
    count_unit_eigenvalues,
    enumerate_equal_groupings,
    schedule_level,
    uniform_random_grouping,
)

__version__ = "0.1.0"
