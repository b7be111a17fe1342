"""Kernel two-sample testing for adversarial data detection.

Provides MMD estimators with Gaussian and semantic-aware deep kernels,
test-power-maximizing kernel training, wild-bootstrap and permutation null
simulation, toy attack/data generators, and a Monte Carlo experiment harness,
all behind scikit-learn style test estimators.
"""

__version__ = "0.1.0"

from .estimators import (
    PowerCriterion,
    h_matrix,
    hsic,
    hsic_dependence_score,
    mmd_biased_squared,
    mmd_u_squared,
    power_criterion,
    regularized_variance,
)
from .exceptions import (
    DimensionError,
    InvalidInputError,
    NumericalError,
    ParseError,
    SammdError,
    UnequalSampleError,
)
from .kernels import (
    DeepKernel,
    DeepKernelParams,
    GaussianBandwidth,
    GaussianKernel,
    GramBundle,
    deep_kernel,
    gaussian_kernel,
    gram_bundle,
    median_heuristic,
)
from .resampling import (
    NullDraws,
    WildBootstrapConfig,
    center_weights,
    p_value,
    permutation_null,
    wild_bootstrap_null,
    wild_statistic,
    wild_weights,
)
from .toymodels import (
    AttackConfig,
    IdentityFeaturizer,
    MLPFeaturizer,
    PrecomputedFeaturizer,
    ToyClassifier,
    fgsm,
    gen_dependent_gaussian,
    gen_non_iid,
    gen_synthetic,
    mlp_forward_backward,
    pgd,
    semantic_features,
    train_toy_classifier,
)
from .training import (
    TrainConfig,
    TrainTrace,
    grad_power_criterion,
    split_data,
    split_indices,
    train_gaussian_bandwidth,
    train_kernel,
)
from .two_sample import (
    METHODS,
    MMDGTest,
    MMDOTest,
    MMDOWBTest,
    SAMMDTest,
    TestResult,
    baseline_test,
    sammd_test,
)
from .experiments import (
    BlobAttackScenario,
    DependentGaussianPair,
    ExperimentReport,
    IIDGaussianPair,
    NaturalVsAttackedPair,
    ReportRow,
    make_test,
    run_calibration,
    run_noniid_suite,
    run_power_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
