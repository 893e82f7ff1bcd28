import json
import os
from typing import Dict, List

import numpy as np
import pandas as pd

TRAJECTORY_COLUMNS = [
    'n', 'tau', 'a_sample', 'j_hat', 'j_hat_avg_m', 'err_control', 'err_obj', 'wall_ms',
    'grad_norm', 'err_control_avg',
]

SUMMARY_FILE = 'summary.json'
AGGREGATE_FILE = 'aggregate.json'
TRAJECTORY_FILE = 'trajectory.csv'
CONTROL_FILE = 'control_final.csv'
ERROR_FILE = 'error.json'


def _finite(value):
    """NaN and infinities become null; strict JSON has no token for them"""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, np.ndarray):
        return _finite(value.tolist())
    if hasattr(value, 'to_dict'):
        return _finite(value.to_dict())
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    return value


def _json_default(value):
    """numpy scalars and arrays to plain JSON (floats keep their shortest round-trip repr)"""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(data):
    return json.dumps(_finite(data), indent=2, default=_json_default, allow_nan=False)


class RunArtifactWriter:
    """Writes the CSV/JSON artifacts of one run directory (UTF-8)"""

    def __init__(self, output_dir, float_format='%.17g'):
        self.output_dir = output_dir
        self.float_format = float_format
        os.makedirs(output_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def write_table(self, name, rows: List[Dict], columns=None):
        df = pd.DataFrame(rows, columns=columns)
        df.to_csv(self.path(name), index=False, float_format=self.float_format, na_rep='',
                  encoding='utf-8')
        return self.path(name)

    def write_trajectory(self, rows):
        extras = sorted({k for row in rows for k in row} - set(TRAJECTORY_COLUMNS))
        return self.write_table(TRAJECTORY_FILE, rows, columns=TRAJECTORY_COLUMNS + extras)

    def write_control(self, mesh, u, u_avg=None):
        data = {'x': mesh.x, 'y': mesh.y, 'u': u.values}
        if u_avg is not None:
            data['u_avg'] = u_avg.values
        pd.DataFrame(data).to_csv(self.path(CONTROL_FILE), index=False, float_format=self.float_format,
                                  encoding='utf-8')
        return self.path(CONTROL_FILE)

    def _write_json(self, name, data):
        with open(self.path(name), 'w', encoding='utf-8') as f:
            f.write(dumps(data))
        return self.path(name)

    def write_summary(self, summary):
        return self._write_json(SUMMARY_FILE, summary)

    def write_aggregate(self, aggregate):
        return self._write_json(AGGREGATE_FILE, aggregate)

    def write_error(self, error):
        return self._write_json(ERROR_FILE, error)


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def read_trajectory(run_dir):
    return pd.read_csv(os.path.join(run_dir, TRAJECTORY_FILE))


def list_runs(root):
    """Run directories below root that contain a summary or an aggregate, relative to root"""
    if not os.path.isdir(root):
        return []
    runs = []
    for current, _, files in os.walk(root):
        if SUMMARY_FILE in files or AGGREGATE_FILE in files:
            runs.append({
                'run_id': os.path.relpath(current, root).replace(os.sep, '/'),
                'has_summary': SUMMARY_FILE in files,
                'has_aggregate': AGGREGATE_FILE in files,
                'has_trajectory': TRAJECTORY_FILE in files,
            })
    return sorted(runs, key=lambda r: r['run_id'])
