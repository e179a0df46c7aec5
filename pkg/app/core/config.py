import os
from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv('UNISORT_LOG_LEVEL', 'WARNING')

# Numerical tolerances and guards
ROW_SUM_TOLERANCE = 1e-9
GUMBEL_EPS = 1e-10
PROBABILITY_CLAMP = 1e-12
MAX_ENUMERATION_N = 8
MAX_PL_CHECK_N = 6

DEFAULT_TAUS = (1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_K_CHOICES = (1, 3, 5, 9)

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

CSV_FLOAT_FORMAT = '.17g'


def get_default_seed() -> int:
    """
    Seed used when no --seed flag is given.
    Read at call time so a changed UNISORT_SEED is picked up.
    """
    raw = os.getenv('UNISORT_SEED')
    if raw is None or raw.strip() == '':
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"UNISORT_SEED must be an integer, got {raw!r}.")
