from .affine import (
    AffineReport,
    HessianCheck,
    HessianSpec,
    InvalidDimensions,
    affine_maximizer_residual,
    build_hessian,
    gram_vectors,
    hessian_build_and_check,
)
from .cmon import CmonResult, CycleWitness, check_cmon, cmon_search, cycle_sum
from .homogeneity import fixed_distribution_welfare, homogeneity_probe, rule_welfare
from .payments import myerson_payment_oracle
from .welfare import (
    DegenerateAllZero,
    MomentStats,
    Scenario,
    ScenarioMismatch,
    ThresholdVerdict,
    moments,
    power_means,
    threshold_check,
    welfare_report,
)
from .wmon import WmonWitness, find_wmon_violation, single_click_realization, wmon_value

__all__ = [name for name in dir() if not name.startswith("_")]
