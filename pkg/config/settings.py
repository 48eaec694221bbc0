import os
import json

# Try to load environment variables, fallback gracefully if dotenv not available
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    print("Warning: python-dotenv not installed. Using system environment variables only.")

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Data, output and config locations
SCENARIO_DIR = os.getenv('GCSYNC_SCENARIO_DIR', os.path.join(BASE_DIR, 'scenarios'))
OUTPUT_DIR = os.getenv('GCSYNC_OUTPUT_DIR', 'runs')
LOG_DIR = os.getenv('GCSYNC_LOG_DIR', 'logs')
LOG_LEVEL = os.getenv('GCSYNC_LOG_LEVEL', 'INFO').upper()
CONFIG_FILE = os.getenv('GCSYNC_CONFIG_FILE', os.path.join(BASE_DIR, 'config.json'))

BUNDLED_EXAMPLES = ('example1', 'example2')

# Default configuration
DEFAULT_CONFIG = {
    'solver': {
        'margin': float(os.getenv('GCSYNC_MARGIN', 1e-7)),
        'psd_tolerance': 1e-6,
        'margin_cap': 1.0,
        'regularization': 1e-8,
        'solve_headroom': 10.0,
        'psd_headroom': 2.0,
        'certify_retries': 3,
        'backtrack_steps': 12,
        'delta': float(os.getenv('GCSYNC_DELTA', 1e-4)),
        'max_iters': int(os.getenv('GCSYNC_MAX_ITERS', 200)),
        'monotone_slack': 1e-8,
        'backend': os.getenv('GCSYNC_SOLVER', 'CLARABEL'),
    },
    'sim': {
        'dt': float(os.getenv('GCSYNC_DT', 1e-3)),
        'horizon': float(os.getenv('GCSYNC_HORIZON', 10.0)),
        'blowup_threshold': 1e12,
        'divergence_ratio': 10.0,
        'divergence_floor': 1e-9,
    },
}


def _merge(defaults, overrides):
    merged = {key: (dict(value) if isinstance(value, dict) else value)
              for key, value in defaults.items()}
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def load_config():
    if os.path.exists(CONFIG_FILE):
        with open(CONFIG_FILE, 'r') as f:
            return _merge(DEFAULT_CONFIG, json.load(f))
    return _merge(DEFAULT_CONFIG, {})

def scenario_path(example_id: str) -> str:
    return os.path.join(SCENARIO_DIR, f'{example_id}.json')


CONFIG = load_config()
