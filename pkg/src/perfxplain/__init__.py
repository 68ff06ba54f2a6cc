"""Explanations for surprising relative runtimes of MapReduce jobs and tasks."""

__version__ = "0.1.0"

from .explainer import ExplainerConfig, explain, generate_bec, generate_des_prime
from .logmodel import ExecutionLog, ExecutionRecord, FeatureSchema, load_log, save_log, validate_log
from .metrics import Explanation, classify_pair
from .pairs import PairFeatureCatalog, build_pair, enumerate_pairs, similarity
from .pxql import parse_query, print_query

__all__ = [
    "ExecutionLog", "ExecutionRecord", "ExplainerConfig", "Explanation", "FeatureSchema",
    "PairFeatureCatalog", "build_pair", "classify_pair", "enumerate_pairs", "explain",
    "generate_bec", "generate_des_prime", "load_log", "parse_query", "print_query",
    "save_log", "similarity", "validate_log",
]
