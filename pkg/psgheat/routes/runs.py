import os

from flask import Blueprint, current_app, jsonify, request
from werkzeug.utils import secure_filename

from psgheat.utils.artifacts import (
    AGGREGATE_FILE, SUMMARY_FILE, TRAJECTORY_FILE, list_runs, read_json, read_trajectory
)

runs_bp = Blueprint('runs', __name__)


def _run_dir(run_id):
    """Resolve a run id (relative path under OUTPUT_DIR) or None when it does not exist"""
    root = os.path.abspath(current_app.config['OUTPUT_DIR'])
    parts = [secure_filename(p) for p in run_id.split('/')]
    if not all(parts):
        return None
    path = os.path.abspath(os.path.join(root, *parts))
    if not path.startswith(root) or not os.path.isdir(path):
        return None
    return path


@runs_bp.route('/', methods=['GET'])
def get_runs():
    """List run directories under the configured output directory"""
    runs = list_runs(current_app.config['OUTPUT_DIR'])
    return jsonify({'runs': runs, 'total': len(runs)})


@runs_bp.route('/<path:run_id>/summary', methods=['GET'])
def get_summary(run_id):
    run_dir = _run_dir(run_id)
    if run_dir is None or not os.path.exists(os.path.join(run_dir, SUMMARY_FILE)):
        return jsonify({'error': f'No summary for run {run_id}'}), 404
    try:
        return jsonify(read_json(os.path.join(run_dir, SUMMARY_FILE)))
    except Exception as e:
        current_app.logger.error(f"Failed to read summary of {run_id}: {e}")
        return jsonify({'error': 'Failed to read summary'}), 500


@runs_bp.route('/<path:run_id>/aggregate', methods=['GET'])
def get_aggregate(run_id):
    run_dir = _run_dir(run_id)
    if run_dir is None or not os.path.exists(os.path.join(run_dir, AGGREGATE_FILE)):
        return jsonify({'error': f'No aggregate for run {run_id}'}), 404
    try:
        return jsonify(read_json(os.path.join(run_dir, AGGREGATE_FILE)))
    except Exception as e:
        current_app.logger.error(f"Failed to read aggregate of {run_id}: {e}")
        return jsonify({'error': 'Failed to read aggregate'}), 500


@runs_bp.route('/<path:run_id>/trajectory', methods=['GET'])
def get_trajectory(run_id):
    """Trajectory rows, optionally thinned to every k-th row (?every=k)"""
    every = request.args.get('every', 1, type=int)
    if every is None or every < 1:
        return jsonify({'error': 'every must be a positive integer'}), 400

    run_dir = _run_dir(run_id)
    if run_dir is None or not os.path.exists(os.path.join(run_dir, TRAJECTORY_FILE)):
        return jsonify({'error': f'No trajectory for run {run_id}'}), 404
    try:
        df = read_trajectory(run_dir).iloc[::every]
        # NaN is not valid JSON
        rows = df.astype(object).where(df.notna(), None).to_dict(orient='records')
        return jsonify({'run_id': run_id, 'columns': list(df.columns), 'rows': rows, 'every': every})
    except Exception as e:
        current_app.logger.error(f"Failed to read trajectory of {run_id}: {e}")
        return jsonify({'error': 'Failed to read trajectory'}), 500
