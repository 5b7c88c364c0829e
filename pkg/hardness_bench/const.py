from hardness_bench.data.enums import HardnessKind, Method

VERSION = "0.1.0"

# Environment
ENV_OUTPUT_DIR = "HARDNESS_BENCH_OUT"
DEFAULT_OUTPUT_DIR = "results"

# Dataset defaults
DEFAULT_N_SAMPLES = 1000
DEFAULT_N_FEATURES = 2
DEFAULT_N_CLASSES = 4
DEFAULT_SEPARATION = 8.0
DEFAULT_PATTERN_SIDE = 8
DEFAULT_PATTERN_NOISE = 0.3
DEFAULT_TRAIN_FRACTION = 1.0
MAX_CSV_CLASSES = 64

# Hardness defaults
DEFAULT_DIRICHLET_ALPHA = 0.5  # skewed transition rows
DEFAULT_COVARIATE_SIGMA = 0.5
DEFAULT_TAIL_QUANTILE = 0.95
DEFAULT_SHIFT_PIXELS = 1
DEFAULT_ZOOM_FACTOR = 2.0
MAX_PROPORTION = 0.5
INSTANCE_PCA_COMPONENTS = 8

# Severity presets (small, large)
SEVERITY_PRESETS = {
    HardnessKind.NEAR_OOD_COVARIATE: ("sigma", 0.5, 2.0),
    HardnessKind.ATYPICAL_CROP_SHIFT: ("pixels", 1, 3),
    HardnessKind.ATYPICAL_ZOOM: ("factor", 2.0, 4.0),
}

# Trainer defaults
DEFAULT_HIDDEN_SIZES = (32, 32)
DEFAULT_DROPOUT = 0.1
DEFAULT_EPOCHS = 20
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BATCH_SIZE = 32
ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8
DEFAULT_INPUT_GRAD_STRIDE = 1

# Scorer defaults
DEFAULT_ALLSH_SIGMA = 0.1
DEFAULT_AGREEMENT_PASSES = 10
DEFAULT_CLEANLAB_FOLDS = 3
DEFAULT_DETECTOR_INJECT_RATE = 0.1
MAX_DETECTOR_INJECT_RATE = 0.2
DETECTOR_REGULARIZATION = 1.0

# Methods whose raw score is low for hard samples
HARD_LOW_METHODS = frozenset(
    {
        Method.AUM,
        Method.CLEANLAB,
        Method.AGREEMENT,
        Method.DATAIQ_CONFIDENCE,
        Method.DATAMAPS_CONFIDENCE,
    }
)

# Report and aggregate ordering
DEFAULT_METHODS = (
    Method.AUM,
    Method.DATAIQ_CONFIDENCE,
    Method.DATAIQ_ALEATORIC,
    Method.DATAMAPS_CONFIDENCE,
    Method.DATAMAPS_VARIABILITY,
    Method.LOSS,
    Method.GRAND,
    Method.EL2N,
    Method.VOG,
    Method.FORGETTING,
    Method.PROTOTYPICALITY,
    Method.ALLSH,
    Method.AGREEMENT,
    Method.CLEANLAB,
    Method.DETECTOR,
)

# Sweep grids
DEFAULT_P_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
RARE_P_GRID = (0.05, 0.1, 0.15, 0.2, 0.25)  # Far-OoD and Atypical rarely occur in high proportions
RARE_KINDS = frozenset(
    {
        HardnessKind.FAR_OOD,
        HardnessKind.ATYPICAL_TAIL,
        HardnessKind.ATYPICAL_CROP_SHIFT,
        HardnessKind.ATYPICAL_ZOOM,
    }
)
DEFAULT_SEEDS = (0, 1, 2)
DEFAULT_TABULAR_KINDS = (
    HardnessKind.MISLABEL_UNIFORM,
    HardnessKind.MISLABEL_ASYMMETRIC,
    HardnessKind.MISLABEL_ADJACENT,
    HardnessKind.MISLABEL_INSTANCE,
    HardnessKind.NEAR_OOD_COVARIATE,
    HardnessKind.FAR_OOD,
    HardnessKind.ATYPICAL_TAIL,
)
DEFAULT_ALPHA_SIGNIFICANCE = 0.05

# Artifact names
MANIFEST_FILE = "manifest.json"
SCORES_FILE = "scores.csv"
METRICS_FILE = "metrics.csv"
ERROR_FILE = "error.json"
SWEEP_MANIFEST_FILE = "sweep_manifest.json"
FAILURES_FILE = "failures.json"
SIGNIFICANCE_FILE = "significance.json"
WINS_FILE = "wins.csv"
STABILITY_FILE = "stability.json"
SEVERITY_FILE = "severity.json"
REPORT_FILE = "report.md"
