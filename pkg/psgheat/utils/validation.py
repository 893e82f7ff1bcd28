import numbers
from typing import List

from psgheat.errors import ConfigurationError
from psgheat.models.experiment import ExperimentConfig

TRAJECTORY_SUMMARY_KEYS = {
    'kind': str,
    'code_version': str,
    'config': dict,
    'mesh': dict,
    'reference': dict,
    'final': dict,
    'rate_fits': dict,
    'envelopes': dict,
    'max_grad_norm': numbers.Real,
    'grad_bound': numbers.Real,
    'grad_bound_violations': int,
}
MMS_SUMMARY_KEYS = {'kind': str, 'code_version': str, 'rows': list, 'rate_fit': dict, 'order_ok': bool}
LEMMA_SUMMARY_KEYS = {'kind': str, 'code_version': str, 'trials': int, 'horizon': int, 'violations': int}


def validate_config(data) -> List[str]:
    """Issues found in a parsed experiment config (empty when valid)"""
    try:
        ExperimentConfig.from_dict(data)
    except ConfigurationError as e:
        return e.issues or [e.message]
    return []


def _check_keys(summary, schema):
    issues = []
    for key, kind in schema.items():
        if key not in summary:
            issues.append(f"missing key: {key}")
        elif not isinstance(summary[key], kind) or (kind is int and isinstance(summary[key], bool)):
            issues.append(f"{key} should be {getattr(kind, '__name__', kind)}, got {type(summary[key]).__name__}")
    return issues


def validate_summary(summary) -> List[str]:
    """Issues found in a summary.json document (empty when valid)"""
    if not isinstance(summary, dict):
        return ['summary must be a JSON object']
    kind = summary.get('kind')
    if kind in ('strongly_convex', 'convex'):
        issues = _check_keys(summary, TRAJECTORY_SUMMARY_KEYS)
        if isinstance(summary.get('config'), dict):
            issues.extend(f"config: {issue}" for issue in validate_config(summary['config']))
        for fit_name, fit in (summary.get('rate_fits') or {}).items():
            if 'error' not in fit and 'slope' not in fit:
                issues.append(f"rate fit {fit_name} has neither slope nor error")
        return issues
    if kind == 'fem_mms':
        return _check_keys(summary, MMS_SUMMARY_KEYS)
    if kind == 'lemma_oracle':
        return _check_keys(summary, LEMMA_SUMMARY_KEYS)
    return [f"unknown summary kind: {kind!r}"]
