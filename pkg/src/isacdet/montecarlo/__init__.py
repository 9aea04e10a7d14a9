"""Monte Carlo engine, result ledgers and experiment drivers."""

from .engine import Ensemble, derive_trial_stream, simulate
from .experiments import ExperimentSpec, run, run_distribution, run_drt_sweep, run_fap_curve, \
    run_q_error, run_roc, run_validate_lemmas
from .ledger import TrialLedger, binomial_rate, wilson

__all__ = [
    "Ensemble",
    "ExperimentSpec",
    "TrialLedger",
    "binomial_rate",
    "derive_trial_stream",
    "run",
    "run_distribution",
    "run_drt_sweep",
    "run_fap_curve",
    "run_q_error",
    "run_roc",
    "run_validate_lemmas",
    "simulate",
    "wilson",
]
