from .experiments import run_experiment, run_trajectory, replicate, mms_study, lemma_study

__all__ = ['run_experiment', 'run_trajectory', 'replicate', 'mms_study', 'lemma_study']
