"""Hawkes-process UCB bandits for finding events on a spatial grid."""
from .bayes import BayesianHawkes, MHConfig, PriorConfig, log_posterior, log_prior, mh_sample
from .environment import EventDataset, GridSpec, ReplayEnvironment, cell_of, ingest
from .hawkes import (HawkesParams, SynthConfig, TimeWindow, compensator, excitation, generate_synthetic, intensity,
                     log_likelihood, simulate_thinning)
from .metrics import RankedResult, evaluate, mrhr, ndcg_at_n, reward_bar
from .policies import (UCB1, UCB1Hp, UCB1HpSp, EpsilonGreedy, HpSpUCB, PolicyConfig, SpUCB, combined_select,
                       make_policy, ucb1_scores)
from .runner import ExperimentConfig, load_config, report, run_experiment, sweep
from .spatial import RBFGaussianProcess, gaussian_filter, rbf_kernel, softmax_probs
from .tracker import HawkesTracker

__version__ = "0.1.0"

__all__ = [
    "BayesianHawkes", "MHConfig", "PriorConfig", "log_posterior", "log_prior", "mh_sample",
    "EventDataset", "GridSpec", "ReplayEnvironment", "cell_of", "ingest",
    "HawkesParams", "SynthConfig", "TimeWindow", "compensator", "excitation", "generate_synthetic", "intensity",
    "log_likelihood", "simulate_thinning",
    "RankedResult", "evaluate", "mrhr", "ndcg_at_n", "reward_bar",
    "UCB1", "UCB1Hp", "UCB1HpSp", "EpsilonGreedy", "HpSpUCB", "PolicyConfig", "SpUCB", "combined_select",
    "make_policy", "ucb1_scores",
    "ExperimentConfig", "load_config", "report", "run_experiment", "sweep",
    "RBFGaussianProcess", "gaussian_filter", "rbf_kernel", "softmax_probs",
    "HawkesTracker",
]
