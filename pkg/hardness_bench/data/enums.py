from enum import Enum


class DatasetSource(Enum):
    BLOBS = "blobs"
    PATTERNS = "patterns"
    CSV = "csv"


class BlobLayout(Enum):
    POLYGON = "polygon"
    LINE = "line"


class HardnessKind(Enum):
    MISLABEL_UNIFORM = "uniform"
    MISLABEL_ASYMMETRIC = "asymmetric"
    MISLABEL_ADJACENT = "adjacent"
    MISLABEL_INSTANCE = "instance"
    NEAR_OOD_COVARIATE = "ood_covariate"
    NEAR_OOD_DOMAIN = "ood_domain"
    FAR_OOD = "far_ood"
    ATYPICAL_TAIL = "atypical_tail"
    ATYPICAL_CROP_SHIFT = "crop_shift"
    ATYPICAL_ZOOM = "zoom"
    COMPOSITE = "composite"

    @property
    def is_mislabeling(self) -> bool:
        return self in MISLABELING_KINDS

    @property
    def requires_grid(self) -> bool:
        return self in GRID_KINDS


MISLABELING_KINDS = frozenset(
    {
        HardnessKind.MISLABEL_UNIFORM,
        HardnessKind.MISLABEL_ASYMMETRIC,
        HardnessKind.MISLABEL_ADJACENT,
        HardnessKind.MISLABEL_INSTANCE,
    }
)

GRID_KINDS = frozenset(
    {
        HardnessKind.NEAR_OOD_DOMAIN,
        HardnessKind.ATYPICAL_CROP_SHIFT,
        HardnessKind.ATYPICAL_ZOOM,
    }
)


class Method(Enum):
    """Score identifiers. Data-IQ and Data Maps each contribute two vectors."""

    AUM = "aum"
    DATAIQ_CONFIDENCE = "dataiq_confidence"
    DATAIQ_ALEATORIC = "dataiq_aleatoric"
    DATAMAPS_CONFIDENCE = "datamaps_confidence"
    DATAMAPS_VARIABILITY = "datamaps_variability"
    LOSS = "loss"
    GRAND = "grand"
    EL2N = "el2n"
    VOG = "vog"
    FORGETTING = "forgetting"
    PROTOTYPICALITY = "prototypicality"
    ALLSH = "allsh"
    AGREEMENT = "agreement"
    CLEANLAB = "cleanlab"
    DETECTOR = "detector"


class DistanceMetric(Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class SetupStatus(Enum):
    OK = "ok"
    SKIPPED = "skipped"
    FAILED = "failed"
