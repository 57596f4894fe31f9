"""
Runtime configuration for the contraction toolkit.

Values come from the process environment, optionally seeded from a `.env`
file in the working directory. Everything is read at call time so that an
exported variable (or a monkeypatched one in tests) takes effect without
re-importing anything.
"""

import logging
import os

# Load environment variables from .env file
from dotenv import load_dotenv
load_dotenv()

logger = logging.getLogger(__name__)


class Settings:
    DEFAULTS = {
        'TN_BUDGET': '100000000',         # labelings enumerated by the reference oracle
        'TN_STATE_BUDGET': '16777216',    # entries of a swallowing amplitude state
        'TN_SUBSET_BUDGET': '65536',      # sub-network contractions for g derivatives
        'TN_ARITH_BUDGET': '1e30',        # sum of C(n, k) d^(4k) over derivative orders
        'TN_SPIN_BUDGET': '24',           # spins in an Ising enumeration
        'TN_WORKERS': '1',
        'TN_LOG_LEVEL': 'INFO',
    }

    @staticmethod
    def get_value(key, default=None):
        if default is None:
            default = Settings.DEFAULTS.get(key)
        return os.getenv(key, default)

    @staticmethod
    def get_int(key):
        raw = Settings.get_value(key)
        try:
            # accept 1e8 style values as well as plain integers
            return int(float(raw)) if any(ch in raw for ch in '.eE') else int(raw)
        except (TypeError, ValueError):
            fallback = int(float(Settings.DEFAULTS[key]))
            logger.warning(f'Ignoring malformed {key}={raw!r}; using {fallback}')
            return fallback

    @staticmethod
    def enumeration_budget():
        return Settings.get_int('TN_BUDGET')

    @staticmethod
    def state_budget():
        return Settings.get_int('TN_STATE_BUDGET')

    @staticmethod
    def subset_budget():
        return Settings.get_int('TN_SUBSET_BUDGET')

    @staticmethod
    def arithmetic_budget():
        return Settings.get_int('TN_ARITH_BUDGET')

    @staticmethod
    def spin_budget():
        return Settings.get_int('TN_SPIN_BUDGET')

    @staticmethod
    def workers():
        return max(1, Settings.get_int('TN_WORKERS'))

    @staticmethod
    def log_level():
        return Settings.get_value('TN_LOG_LEVEL').upper()
