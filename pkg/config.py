"""
Process Configuration Management
Centralizes settings read from environment variables and defaults, and sets up logging
"""

import logging
import os
import sys

from dotenv import load_dotenv
from pythonjsonlogger import jsonlogger

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv()


class Config:
    """Base configuration with sensible defaults"""

    APP_NAME = os.getenv('APP_NAME', 'Generalized Poset Sorting Bench')
    TESTING = os.getenv('TESTING', 'False').lower() == 'true'

    # Logging settings
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FORMAT = os.getenv('LOG_FORMAT', '%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    LOG_JSON = os.getenv('LOG_JSON', 'False').lower() == 'true'
    LOG_FILE = os.getenv('LOG_FILE') or None

    # Output and tuning
    OUTPUT_DIR = os.getenv('GPS_OUTPUT_DIR', 'results')
    TUNING_FILE = os.getenv('GPS_TUNING_FILE', 'gps_tuning.json')

    # Trial concurrency
    MAX_WORKERS = int(os.getenv('MAX_WORKERS', 4))

    @classmethod
    def validate_config(cls):
        """Validate critical configuration values"""
        errors = []

        if cls.MAX_WORKERS < 1:
            errors.append(f"MAX_WORKERS must be >= 1, got {cls.MAX_WORKERS}")

        if logging.getLevelName(str(cls.LOG_LEVEL).upper()) not in range(0, 51):
            errors.append(f"Invalid LOG_LEVEL: {cls.LOG_LEVEL}")

        if not cls.OUTPUT_DIR:
            errors.append("GPS_OUTPUT_DIR must not be empty")

        if errors:
            logger.error("Configuration validation failed:")
            for error in errors:
                logger.error(f"  - {error}")
            return False

        return True

    @classmethod
    def get_summary(cls):
        """Get configuration summary for logging"""
        return {
            'app_name': cls.APP_NAME,
            'log_level': cls.LOG_LEVEL,
            'log_json': cls.LOG_JSON,
            'output_dir': cls.OUTPUT_DIR,
            'tuning_file': cls.TUNING_FILE,
            'max_workers': cls.MAX_WORKERS,
        }


class ProductionConfig(Config):
    """Long benchmark runs: quieter logs, JSON lines"""
    LOG_LEVEL = 'WARNING'
    LOG_JSON = True


class DevelopmentConfig(Config):
    """Interactive use"""
    pass


class TestingConfig(Config):
    """Test-suite configuration"""
    TESTING = True
    LOG_LEVEL = 'DEBUG'
    MAX_WORKERS = 1


def get_config(env=None):
    """Get configuration object based on environment"""
    if env is None:
        env = os.getenv('GPS_ENV', 'development')

    config_map = {
        'production': ProductionConfig,
        'prod': ProductionConfig,
        'development': DevelopmentConfig,
        'dev': DevelopmentConfig,
        'testing': TestingConfig,
        'test': TestingConfig,
    }

    return config_map.get(env.lower(), DevelopmentConfig)


def setup_logging(cfg=None, level=None):
    """Configure the root logger: stderr stream plus optional file, plain or JSON lines"""
    cfg = cfg or config
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    if cfg.LOG_JSON:
        formatter = jsonlogger.JsonFormatter('%(asctime)s %(name)s %(levelname)s %(message)s')
    else:
        formatter = logging.Formatter(cfg.LOG_FORMAT)

    handlers = [logging.StreamHandler(sys.stderr)]
    if cfg.LOG_FILE:
        handlers.append(logging.FileHandler(cfg.LOG_FILE))
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)

    root.setLevel(str(level or cfg.LOG_LEVEL).upper())


# Default config
config = get_config()

logger.debug(f"Configuration loaded: {config.__name__}")
if not config.validate_config():
    raise ValueError("Configuration validation failed")
