"""Bayesian network structure learning: learners, matched criteria and benchmarks."""

from .bench import fixture_path, load_bn_text, run_benchmark, save_bn_text
from .criteria import Criterion, parse_criterion
from .graph import Dag, Pdag, cpdag_from_dag, extend_to_dag, shd
from .learn import learn
from .model import BayesNet, Dataset, fit_parameters, log_likelihood, sample

__version__ = "0.1.0"

__all__ = [
    "BayesNet", "Criterion", "Dag", "Dataset", "Pdag", "cpdag_from_dag", "extend_to_dag", "fit_parameters", "fixture_path",
    "learn", "load_bn_text", "log_likelihood", "parse_criterion", "run_benchmark", "sample", "save_bn_text", "shd",
]
