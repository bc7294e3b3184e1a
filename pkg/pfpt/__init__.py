__version__ = "0.1.0"

from .model import (EPS_VAR, LOGIT_CLAMP, UNASSIGNED, Assignment,
                    AssignmentError, ConfigError, DegenerateComponentError,
                    DomainError, GenerativeParams, GlobalPool, GuardError,
                    InfeasibleError, InputShapeError, LocalPromptSet,
                    MlpParams, NumericalError, PartitionError, PFPTError,
                    RoundError, alpha_forward, g_forward, init_generative_params,
                    init_mlp, mlp_backward, mlp_forward, selection_probability)
from .likelihood import (ObjectiveBreakdown, ParamGradients,
                         assignment_logprior, cost_matrix, gaussian_logpdf,
                         grad_params, joint_objective, local_set_loglik)
from .matching import (MatchResult, brute_force_assignments, hungarian_max,
                       replay_sweep, solve_assignments)
from .aggregation import (AggregationConfig, AggregationReport,
                          build_candidate_pool, param_step, prune_inactive,
                          server_aggregate, solve_params)
from .partition import (ClientProfile, PartitionSpec, dirichlet_partition,
                        imbalance_partition, longtail_partition,
                        make_partition, partition_summary)
from .clients import (ClientState, ClientTemplate, GroundTruth, TruthSpec,
                      local_tune_drift, local_tune_generative,
                      make_ground_truth, select_prompts, simulate_client)
from .baselines import GmmState, fedavg_prompts, gmm_aggregate
from .runner import (ExperimentConfig, ExperimentResult, RoundMetrics,
                     alignment_accuracy, pool_recovery_error, run_experiment)
from .config import read_config
