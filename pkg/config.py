# -*- coding: utf-8 -*-
"""
DART Harness Configuration
"""
import os

# Output root for experiment results - READ FROM ENVIRONMENT VARIABLES
OUTPUT_ROOT = os.environ.get('DART_OUTPUT_ROOT', 'results')

# Worker threads for the (algorithm, seed) fan-out
DEFAULT_JOBS = int(os.environ.get('DART_JOBS', '1'))

# Progress lines and tqdm bars; warnings always print
VERBOSE = os.environ.get('DART_VERBOSE', '1') not in ('0', 'false', 'False', '')

# Numerical tolerances
PSD_TOL = 1e-10
DENSITY_RIDGE = 1e-8
RICCATI_TOL = 1e-9
RICCATI_MAX_ITERS = 10000
EPS_CAP_MARGIN = 1e-6
ENUMERATION_LIMIT = 10 ** 6
LEMMA_SLACK = 1e-10

# Algorithm defaults
DAGGER_BETA = 0.5
ISOTROPIC_SCALE = 1.0
DEFAULT_EVAL_ROLLOUTS = 20

# Point-mass comparison claims: DART wins the paired shift comparison on at
# least this fraction of seeds, and its final robot loss sits within this
# relative band of DAgger's
SHIFT_WIN_FRACTION = 0.75
PARITY_TOL = 0.25

# Eval checkpoints as fractions of K (5, 10, 15, 20 for K = 20)
CHECKPOINT_FRACTIONS = (0.25, 0.5, 0.75, 1.0)

# Shipped experiment presets (name -> file under presets/)
PRESETS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'presets')
PRESETS = {
    'pointmass-compare': 'pointmass_compare.yaml',
    'pointmass-smoke': 'pointmass_smoke.yaml',
    'gridworld-compare': 'gridworld_compare.yaml',
}

# Algorithm kinds accepted in experiment files
ALGORITHM_KINDS = ('bc', 'dart', 'dagger', 'isotropic')

# Metric names written to results.csv, in emission order
ITERATION_METRICS = (
    'n_records',
    'n_fits',
    'noise_level',
    'collection_reward',
    'collection_reward_normalized',
)
CHECKPOINT_METRICS = (
    'loss_robot',
    'loss_robot_stderr',
    'loss_collection',
    'loss_collection_stderr',
    'shift',
    'train_loss',
    'robot_reward',
    'robot_reward_normalized',
)
NOISE_METRICS = (
    'noise_hat',
    'noise_scaled',
    'noise_alpha',
    'noise_beta',
    'noise_heldout',
    'noise_fallback',
)
FINAL_METRICS = ('supervisor_reward',)


def log(tag, message, force=False):
    """Print a tagged progress line"""
    if VERBOSE or force:
        print(f"[{tag}] {message}")


def normalize_reward(value, supervisor_value):
    """Express a reward relative to the supervisor's (1.0 = supervisor level)"""
    if supervisor_value == 0:
        return value
    return 1.0 + (value - supervisor_value) / abs(supervisor_value)
