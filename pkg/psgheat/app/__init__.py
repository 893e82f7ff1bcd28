import logging
import os

from flask import Flask
from flask.logging import default_handler

from psgheat import __version__
from psgheat.config import config


def create_app(config_name=None, overrides=None):
    """Application factory pattern"""
    if config_name is None:
        config_name = os.environ.get('PSG_ENV', 'development')

    app = Flask(__name__)
    app.config.from_object(config[config_name])
    if overrides:
        app.config.update(overrides)

    # app.logger ('psgheat.app') and the numerics modules share the package logger
    package_logger = logging.getLogger('psgheat')
    package_logger.setLevel(str(app.config['LOG_LEVEL']).upper())
    if default_handler not in package_logger.handlers:
        package_logger.addHandler(default_handler)
    app.logger.removeHandler(default_handler)

    # Output directory: environment override wins over experiment configs
    if app.config.get('OUTPUT_DIR_OVERRIDE'):
        app.config['OUTPUT_DIR'] = app.config['OUTPUT_DIR_OVERRIDE']

    # Register blueprints
    from psgheat.routes.runs import runs_bp

    # API versioning
    api_prefix = f"/api/{app.config['API_VERSION']}"
    app.register_blueprint(runs_bp, url_prefix=f"{api_prefix}/runs")

    # Health check endpoint
    @app.route('/health')
    def health_check():
        return {'status': 'healthy', 'version': app.config['API_VERSION'], 'code_version': __version__}, 200

    # Batch commands (psg run / replicate / mms / lemma)
    from psgheat.cli import register_commands
    register_commands(app)

    return app
