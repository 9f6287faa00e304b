"""Constants used throughout the depthguard library."""

# depth values are in meters; every ratio/log metric clamps at this floor
DEPTH_FLOOR = 0.01
SYNTH_DEPTH_RANGE = (0.5, 10.0)

# toy input resolution (H, W); both extents must be divisible by 16
DEFAULT_DIMS = (64, 48)
DIMS_DIVISOR = 16

# offset inside F(e) = ln(e + 0.5)
LOG_OFFSET = 0.5

DELTA_BASE = 1.25

# binary formats
TENSOR_MAGIC = b"DGT1"
CHECKPOINT_MAGIC = b"DGW1"
CHECKPOINT_VERSION = 1
DATASET_MAGIC = b"DGD1"

# adversarial training of the saliency predictor
DEFAULT_ADV_PROB = 0.5
DEFAULT_EPS_RANGE = (0.01, 0.3)
DEFAULT_ITER_RANGE = (1, 10)

# one 8-bit intensity level in [0, 1] units, the reading of "alpha = 1" on 0..255 images
ONE_LEVEL_ALPHA = 1.0 / 255.0

ROLES = ["N", "N_adv", "G", "G_adv"]

CSV_COLUMNS = ["config", "attack", "eps", "iters", "rmse", "rel", "log10", "d1", "d2", "d3", "n"]
LOSS_COLUMNS = ["config", "attack", "eps", "iters", "l_depth", "l_grad", "l_normal", "total", "sparsity"]

THREADS_ENV = "DEPTHGUARD_THREADS"
