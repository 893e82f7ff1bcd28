from .artifacts import RunArtifactWriter, TRAJECTORY_COLUMNS, list_runs, read_json, read_trajectory
from .validation import validate_config, validate_summary

__all__ = [
    'RunArtifactWriter', 'TRAJECTORY_COLUMNS', 'list_runs', 'read_json', 'read_trajectory',
    'validate_config', 'validate_summary'
]
