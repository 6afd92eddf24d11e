from evtss.bivar.copula import (
    CopulaFit,
    PseudoObservations,
    copula_gof,
    fit_copula_joe_frank,
    jf_cdf,
    jf_kendall_tau,
    jf_loglik,
    jf_sample,
    pseudo_observations,
)
from evtss.bivar.dependence import (
    cvm_independence_test,
    joint_collision_probability,
    kendall_tau,
    pearson,
)
from evtss.bivar.logistic import (
    BivLogisticFit,
    fit_bev_logistic,
    logistic_copula,
    pickands_logistic,
    sample_logistic_copula,
    tail_dependence,
)

__all__ = [
    "BivLogisticFit",
    "CopulaFit",
    "PseudoObservations",
    "copula_gof",
    "cvm_independence_test",
    "fit_bev_logistic",
    "fit_copula_joe_frank",
    "jf_cdf",
    "jf_kendall_tau",
    "jf_loglik",
    "jf_sample",
    "joint_collision_probability",
    "kendall_tau",
    "logistic_copula",
    "pearson",
    "pickands_logistic",
    "pseudo_observations",
    "sample_logistic_copula",
    "tail_dependence",
]
