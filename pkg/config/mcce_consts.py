CUTOFF = 0.5
K_NEIGHBORS = 5
N_TEST = 100
BIG_K = 10_000
BENCHMARK_BIG_K = 50_000

HIDDEN_SIZES = (18, 9, 3)
LEARNING_RATE = 0.05
EPOCHS = 40
BATCH_SIZE = 32

CTREE_ALPHA = 0.05
CTREE_MIN_SPLIT = 20
CTREE_MIN_BUCKET = 7
CTREE_MAX_DEPTH = 10

# Gower branch for discrete features. False follows the indicator case of the
# distance definition; True treats them like continuous features.
DISCRETE_AS_NUMERIC = False

# Weighted post-processing minimizes w1*gower + w2*sparsity + w3*feasibility
# - w4*yNN + w5*redundancy.
WEIGHTED_SUM_ORIENTATION = "minimize"

WEIGHT_SUM_TOLERANCE = 1e-9

# Rows scored per chunk when computing kNN distances.
KNN_CHUNK_SIZE = 1024

LABEL_COLUMN = "y"

METRIC_COLUMNS = [
    'L0',
    'L1',
    'yNN',
    'feasibility',
    'redundancy',
    'violation',
    'success',
]

TIMING_COLUMNS = [
    't_one',
    't_all',
]

# Subsample size meaning "every row outside the test set".
SUBSAMPLE_ALL = -1
