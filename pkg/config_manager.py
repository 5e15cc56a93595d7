"""
Tuning Configuration Management
Algorithm constants as sectioned defaults merged with an optional JSON file
"""

import copy
import json
import logging
import os

from config import config
from gpsc import EXACT_LIMIT

logger = logging.getLogger(__name__)


class ConfigManager:
    """Sectioned tunables for the sorting algorithms and the bench harness"""

    DEFAULT_CONFIG = {
        # Skip-BFS health threshold R = k + r_multiplier * ln N
        'skip_bfs': {
            'r_multiplier': 18.0,
            'log_base': 'e'
        },

        # Predictor and incremental sort
        'gpsc': {
            'beta_multiplier': 1.0,
            'exact_cap': 20,
            'rank_samples': 200,
            'disagreement_sample_factor': 4.0,
            'mode': 'auto'
        },

        # Weighted sorting budget C * n^(1 - 1/(2W)) * ln(n)^p * estimate
        'weighted': {
            'budget_constant': 8.0,
            'polylog_exponent': 3,
            'weight_base': 2
        },

        # Harness
        'bench': {
            'trials': 20,
            'strict': False,
            # charge repeated queries of an answered pair again
            'charge_every_call': False
        }
    }

    GPSC_MODES = ('auto', 'exact', 'sampling')

    def __init__(self, config_file=None):
        self.config_file = config_file or config.TUNING_FILE
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)
        self.load_config()

    def load_config(self):
        """Load configuration from file if exists"""
        if os.path.exists(self.config_file):
            try:
                with open(self.config_file, 'r') as f:
                    user_config = json.load(f)
                self._merge_configs(self.config, user_config)
                logger.info(f"Loaded tuning from {self.config_file}")
            except (OSError, json.JSONDecodeError) as e:
                logger.warning(f"Error loading tuning file: {e}, using defaults")
        else:
            logger.debug("No tuning file found, using defaults")

    @staticmethod
    def _merge_configs(base, override):
        for section, values in override.items():
            if isinstance(values, dict) and isinstance(base.get(section), dict):
                base[section].update(values)
            else:
                base[section] = values

    def save_config(self):
        """Save current configuration to file"""
        with open(self.config_file, 'w') as f:
            json.dump(self.config, f, indent=2, sort_keys=True)
        logger.info(f"Tuning saved to {self.config_file}")

    def get(self, section, key=None):
        """Get configuration value"""
        if key is None:
            return self.config.get(section, {})
        return self.config.get(section, {}).get(key)

    def set(self, section, key, value):
        """Set configuration value"""
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value
        logger.debug(f"Tuning updated: {section}.{key} = {value}")

    def reset_to_defaults(self):
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)

    def validate(self):
        """Validate configuration"""
        errors = []

        if self.get('skip_bfs', 'r_multiplier') is None or self.get('skip_bfs', 'r_multiplier') <= 0:
            errors.append("skip_bfs.r_multiplier must be positive")
        if self.get('skip_bfs', 'log_base') != 'e':
            errors.append("skip_bfs.log_base only supports 'e'")

        gpsc = self.get('gpsc')
        if gpsc.get('mode') not in self.GPSC_MODES:
            errors.append(f"gpsc.mode must be one of {', '.join(self.GPSC_MODES)}")
        if not isinstance(gpsc.get('exact_cap'), int) or not 1 <= gpsc['exact_cap'] <= EXACT_LIMIT:
            errors.append(f"gpsc.exact_cap must be an integer in [1, {EXACT_LIMIT}]")
        if gpsc.get('beta_multiplier', 0) <= 0:
            errors.append("gpsc.beta_multiplier must be positive")
        if not isinstance(gpsc.get('rank_samples'), int) or gpsc['rank_samples'] < 1:
            errors.append("gpsc.rank_samples must be a positive integer")
        if gpsc.get('disagreement_sample_factor', 0) <= 0:
            errors.append("gpsc.disagreement_sample_factor must be positive")

        weighted = self.get('weighted')
        if weighted.get('budget_constant', 0) <= 0:
            errors.append("weighted.budget_constant must be positive")
        if not isinstance(weighted.get('polylog_exponent'), int) or weighted['polylog_exponent'] < 0:
            errors.append("weighted.polylog_exponent must be a non-negative integer")
        if not isinstance(weighted.get('weight_base'), int) or weighted['weight_base'] < 2:
            errors.append("weighted.weight_base must be an integer >= 2")

        if not isinstance(self.get('bench', 'trials'), int) or self.get('bench', 'trials') < 1:
            errors.append("bench.trials must be a positive integer")
        if not isinstance(self.get('bench', 'charge_every_call'), bool):
            errors.append("bench.charge_every_call must be true or false")

        if errors:
            logger.error(f"Tuning validation failed: {errors}")
            return False, errors

        return True, []

    def gpsc_options(self):
        """Keyword arguments for the predictor builder"""
        gpsc = self.get('gpsc')
        return {
            'mode': gpsc['mode'],
            'beta_multiplier': gpsc['beta_multiplier'],
            'exact_cap': gpsc['exact_cap'],
            'rank_samples': gpsc['rank_samples'],
            'disagreement_sample_factor': gpsc['disagreement_sample_factor'],
        }

    def export_config(self, format='json'):
        """Export configuration"""
        if format == 'json':
            return json.dumps(self.config, indent=2, sort_keys=True)
        elif format == 'dict':
            return copy.deepcopy(self.config)
        else:
            raise ValueError(f"Unsupported format: {format}")

    def __repr__(self):
        return f"ConfigManager({self.config_file})"
