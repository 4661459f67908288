"""
dcekit
======

Discrete choice experiment toolkit.

Subpackages
-----------
core       domain types, validation and CSV ingestion
design     D-efficient choice designs by coordinate exchange
mnl        conditional logit by Newton-Raphson
mixl       panel mixed logit by simulated maximum likelihood
wtp        willingness-to-pay ratios, delta-method errors, densities
attitudes  ANOVA, Ward clustering, gap statistic, logistic regression
synth      synthetic choice data and a quadrature likelihood oracle
cli        the ``dcekit`` command
"""
from .core import (DCEError, ValidationError, ParseError, RankDeficiencyError,
                   AttributeSpec, ChoiceCard, ChoiceDataset, ModelSpec, EstimationResult,
                   AttitudeDataset, default_attributes, load_choice_csv, write_choice_csv,
                   write_result_csv, read_result_csv, load_attitude_csv, write_attitude_csv,
                   read_model_spec, read_attributes)
from .design import (DesignError, DesignPlan, full_factorial, is_dominated, score_d_error,
                     optimize_design, assign_blocks)
from .mnl import mnl_probabilities, mnl_loglik, mnl_gradient, mnl_hessian, fit_mnl
from .mixl import (DrawConfig, make_draws, simulated_loglik, MixlConfig, fit_mixl)
from .wtp import (UndefinedRatioError, wtp_point, wtp_se_delta, positive_share,
                  individual_wtp, kernel_density)
from .attitudes import (group_means, anova_f, ward_cluster, agglomerative_coefficient,
                        gap_statistic, cut_tree, fit_logistic)
from .synth import simulate_choices, quadrature_loglik

__version__ = "0.1.0"
