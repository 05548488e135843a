from .harness import Experiment, run_experiment, run_subsample_study

__all__ = ["Experiment", "run_experiment", "run_subsample_study"]
