"""Robust Bayesian forecasting of bus arrival delays with Student-t regressions."""
from .features import DesignMatrices, build_test_matrices, build_training_matrices, split_by_day
from .history import HistoryIndex
from .ingest import AvlEvent, DelayObservation, ingest_csv
from .inference import ModelSpec, PosteriorChain, fit, load_chain, save_chain
from .simulate import SimScenario, simulate

__version__ = "0.1.0"
