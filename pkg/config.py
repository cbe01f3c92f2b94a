"""Configuration for the NetForge simulator - single source of truth"""
import os
from dotenv import load_dotenv

load_dotenv()

# ============================================
# PATHS
# ============================================
DATA_DIR = os.getenv("NETFORGE_DATA_DIR", "data")
ACTION_REGISTRY_PATH = os.getenv(
    "NETFORGE_ACTION_REGISTRY", os.path.join(DATA_DIR, "action_registry.json")
)
SCENARIO_DIR = os.path.join(DATA_DIR, "scenarios")
ENCODER_MODEL_PATH = os.getenv(
    "NETFORGE_ENCODER_MODEL", os.path.join(DATA_DIR, "encoder.nfenc")
)
OUTPUT_DIR = os.getenv("NETFORGE_OUTPUT_DIR", "runs")

# ============================================
# TOPOLOGY & ACTION SPACE
# ============================================
MAX_NODES = 100
NUM_ACTION_TYPES = 32
MAX_TOKENS = 8                  # critic token one-hot width
GATE_TOKEN = "Enterprise_Admin_Token"
MASK_BLOCKED = -1e9

BENCHMARK_ZONE_SHARE = {
    "DMZ": 0.2,
    "Corporate": 0.5,
    "SecureVault": 0.3,
}
BENCHMARK_CIDRS = {
    "DMZ": "10.0.0.0/24",
    "Corporate": "10.0.2.0/24",
    "SecureVault": "10.0.1.0/24",
    "Internet": "0.0.0.0/0",
}

# ============================================
# EVENT ENGINE
# ============================================
MAX_DURATION = 50.0             # dt normalization
SOJOURN_JITTER = 0.2
HEARTBEAT_PERIOD = 1.0
BLUE_CONCURRENCY_CAP = 2
DEFAULT_ENERGY_BUDGET = 1000.0
DEFAULT_HORIZON = 500.0

# ============================================
# TELEMETRY
# ============================================
GREEN_LAMBDA_DAY = 5.0          # events per tick
GREEN_LAMBDA_NIGHT = 0.5
DAY_LENGTH = 24
DAY_START_HOUR = 8
DAY_END_HOUR = 20
WINDOW_SIZE = 8
EMBEDDING_DIMENSION = 128
NGRAM_RANGE = (3, 5)
VOCABULARY_CAP = 20000
SEED_CORPUS_SIZE = 5000
ENCODER_FIT_SEED = 7
ENCODER_CACHE_SIZE = 50000

# ============================================
# REWARDS
# ============================================
REWARD_CORRECT_ISOLATION = 5.0
REWARD_CLEANUP = 3.0
REWARD_FALSE_POSITIVE_ISOLATION = -2.0
REWARD_HONEYTOKEN_TRIP = 2.0
REWARD_HEALTH_SCALE = 1.0
REWARD_ECONOMICS_SCALE = 5.0
REWARD_RED_SHELL = 3.0
REWARD_RED_ROOT = 5.0
REWARD_RED_PROGRESSION_SCALE = 1.0

# ============================================
# POLICY KERNELS
# ============================================
GAT_HEADS = 4
HIDDEN_DIMENSION = 128
LEAKY_RELU_SLOPE = 0.2
LAYER_NORM_EPS = 1e-5
CT_DECAY_BETA = 0.05
GAE_LAMBDA = 0.95
STATIC_GAMMA = 0.99
PPO_CLIP_EPS = 0.2
VALUE_LOSS_COEF = 0.5
ENTROPY_COEF = 0.01
ODE_STEPS = 1
ACTOR_LR = 3e-4
CRITIC_LR = 1e-3
MAX_GRAD_NORM = 10.0
ROLLOUT_LENGTH = 2048
BATCH_SIZE = 512

# ============================================
# HARNESS
# ============================================
DEFAULT_SEEDS = 10
REPORT_TAIL_FRACTION = 0.2
SPS_FLOOR = 5000.0
EPISODES_PER_SEED = 1
DEFAULT_WORKERS = int(os.getenv("NETFORGE_WORKERS", "1"))
FORWARD_WEIGHTS_PATH = os.getenv(
    "NETFORGE_WEIGHTS_PATH", os.path.join(DATA_DIR, "ctgmarl_weights.nfw")
)
FORWARD_INIT_SEED = 0
BLUE_ANOMALY_THRESHOLD = 0.25   # cosine distance
BENIGN_CENTROID_TICKS = 48.0

# ============================================
# LOGGING
# ============================================
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DIR = os.getenv("NETFORGE_LOG_DIR", "logs")
LOG_MAX_BYTES = 10 * 1024 * 1024
LOG_BACKUP_COUNT = 3
