import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """Base configuration class"""

    # Artifacts
    OUTPUT_DIR = os.environ.get('PSG_OUTPUT_DIR') or os.path.join(os.getcwd(), 'runs')
    OUTPUT_DIR_OVERRIDE = os.environ.get('PSG_OUTPUT_DIR')  # wins over experiment configs
    FLOAT_FORMAT = '%.17g'

    # Logging
    LOG_LEVEL = os.environ.get('PSG_LOG_LEVEL', 'INFO')

    # Linear solver
    CG_TOLERANCE = float(os.environ.get('PSG_CG_TOL', 1e-10))
    CG_MAX_ITER_FACTOR = 10  # cap = factor * system dimension

    # Parallelism (seed replication, m-sample objective estimator)
    REPLICATION_WORKERS = int(os.environ.get('PSG_WORKERS', 1))
    OBJECTIVE_WORKERS = int(os.environ.get('PSG_WORKERS', 1))

    # Desk-scale experiment defaults
    DEFAULT_N_DIV = 32
    DEFAULT_ITERATIONS = 1000
    DEFAULT_OBJECTIVE_SAMPLES = 100
    DEFAULT_TELEMETRY_CADENCE = 10
    RATE_FIT_WINDOW_FRACTION = 0.9

    # Results API
    API_VERSION = os.environ.get('API_VERSION', 'v1')


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    LOG_LEVEL = os.environ.get('PSG_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False

    # Batch hosts must say where artifacts go
    if not os.environ.get('PSG_OUTPUT_DIR') and os.environ.get('PSG_ENV') == 'production':
        raise ValueError("PSG_OUTPUT_DIR must be provided in production")


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    OUTPUT_DIR_OVERRIDE = None
    LOG_LEVEL = 'WARNING'


# Configuration mapping
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
