"""Nonparametric conditional-independence testing by binned U-statistics.

The test bins observations by the conditioning variable, scores each bin
with an unbiased U-statistic for the squared gap from independence, and
calibrates the aggregate by within-bin permutation or a fixed threshold.
Generators for smooth and adversarial synthetic models, a coupling that
forces conditional independence on arbitrary data, smoothness diagnostics
and a reproducible simulation harness round out the toolkit.
"""

from .binning import (
    BinnedDataset,
    BinPlan,
    OutOfSupportError,
    SupportEstimate,
    UnsupportedDimensionError,
    assign_bin,
    bin_dataset,
    continuous_plan,
    discretize_xy,
    estimate_support,
    fixed_discrete_plan,
    multivariate_plan,
    scaling_discrete_plan,
    unbounded_plan,
)
from .calibration import permutation_pvalue, within_bin_permute
from .citests import (
    MODES,
    TestConfig,
    TestReport,
    poissonize,
    statistic_fixed_discrete,
    statistic_scaling_discrete,
    test,
)
from .data import CATEGORY, REAL, TripleDataset
from .distributions import (
    ConditionalDiscreteModel,
    ContinuousConditionalModel,
    DimensionError,
    DiscreteJointTable,
    DiscreteMarginalPair,
    DistributionError,
    QuadratureError,
    QuadratureSpec,
    chi_sq_divergence,
    l2_distance_sq,
    model_ci_distance,
    product_of_marginals,
    tv_distance,
)
from .flatten import (
    FlatteningWeights,
    SplitPlan,
    flattening_weights,
    omega_weight,
    split_dataset,
    split_distance_sq,
    split_norm_sq,
    weighted_u_statistic,
    weighted_u_statistic_naive,
)
from .generators import (
    AdversarialContinuousSpec,
    AdversarialDiscreteSpec,
    BumpFunction,
    CouplingSpec,
    FeasibilityError,
    adversarial_continuous_density,
    adversarial_continuous_model,
    adversarial_continuous_separation,
    adversarial_discrete_density,
    adversarial_discrete_model,
    adversarial_discrete_separation,
    adversarial_discrete_table,
    ci_coupling,
    continuous_alt_model,
    continuous_null_model,
    coupling_displacement_bound,
    coupling_uniformity,
    default_bump,
    discrete_alt_model,
    discrete_null_model,
    eta_profile,
    exp_family_discrete_model,
    gen_discrete_alt,
    gen_discrete_null,
    make_tilde_delta,
    sample_adversarial_continuous,
    sample_adversarial_discrete,
    sample_continuous_alt,
    sample_continuous_null,
    sample_discrete_alt,
    sample_discrete_null,
)
from .harness import (
    DataFormatError,
    ExperimentSpec,
    GENERATORS,
    SizePowerRow,
    SizePowerTable,
    read_csv_dataset,
    run_experiment,
    thread_count,
    write_csv_dataset,
)
from .smoothness import (
    CLASS_IDS,
    InclusionReport,
    SmoothnessReport,
    check_inclusions,
    empirical_lipschitz,
    random_table_pair,
)
from .ustat import (
    DiscretePairSample,
    InsufficientSampleError,
    u_statistic_fast,
    u_statistic_naive,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialContinuousSpec",
    "AdversarialDiscreteSpec",
    "BinPlan",
    "BinnedDataset",
    "BumpFunction",
    "CATEGORY",
    "CLASS_IDS",
    "ConditionalDiscreteModel",
    "ContinuousConditionalModel",
    "CouplingSpec",
    "DataFormatError",
    "DimensionError",
    "DiscreteJointTable",
    "DiscreteMarginalPair",
    "DiscretePairSample",
    "DistributionError",
    "ExperimentSpec",
    "FeasibilityError",
    "FlatteningWeights",
    "GENERATORS",
    "InclusionReport",
    "InsufficientSampleError",
    "MODES",
    "OutOfSupportError",
    "QuadratureError",
    "QuadratureSpec",
    "REAL",
    "SizePowerRow",
    "SizePowerTable",
    "SmoothnessReport",
    "SplitPlan",
    "SupportEstimate",
    "TestConfig",
    "TestReport",
    "TripleDataset",
    "UnsupportedDimensionError",
    "adversarial_continuous_density",
    "adversarial_continuous_model",
    "adversarial_continuous_separation",
    "adversarial_discrete_density",
    "adversarial_discrete_model",
    "adversarial_discrete_separation",
    "adversarial_discrete_table",
    "assign_bin",
    "bin_dataset",
    "check_inclusions",
    "chi_sq_divergence",
    "ci_coupling",
    "continuous_alt_model",
    "continuous_null_model",
    "continuous_plan",
    "coupling_displacement_bound",
    "coupling_uniformity",
    "default_bump",
    "discrete_alt_model",
    "discrete_null_model",
    "discretize_xy",
    "empirical_lipschitz",
    "estimate_support",
    "eta_profile",
    "exp_family_discrete_model",
    "fixed_discrete_plan",
    "flattening_weights",
    "gen_discrete_alt",
    "gen_discrete_null",
    "l2_distance_sq",
    "make_tilde_delta",
    "model_ci_distance",
    "multivariate_plan",
    "omega_weight",
    "permutation_pvalue",
    "poissonize",
    "product_of_marginals",
    "random_table_pair",
    "read_csv_dataset",
    "run_experiment",
    "sample_adversarial_continuous",
    "sample_adversarial_discrete",
    "sample_continuous_alt",
    "sample_continuous_null",
    "sample_discrete_alt",
    "sample_discrete_null",
    "scaling_discrete_plan",
    "split_dataset",
    "split_distance_sq",
    "split_norm_sq",
    "statistic_fixed_discrete",
    "statistic_scaling_discrete",
    "test",
    "thread_count",
    "tv_distance",
    "u_statistic_fast",
    "u_statistic_naive",
    "unbounded_plan",
    "weighted_u_statistic",
    "weighted_u_statistic_naive",
    "within_bin_permute",
    "write_csv_dataset",
    "__version__",
]
