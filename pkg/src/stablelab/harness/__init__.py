from .experiments import classify_regime, hypothesis_check, run_experiment

__all__ = ["classify_regime", "hypothesis_check", "run_experiment"]
