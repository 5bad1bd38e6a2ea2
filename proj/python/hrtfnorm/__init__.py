"""HRTF cross-database normalization: containers, synthetic corpora,
average-HRTF normalization, SVM database identification and a small
neural-field reconstruction experiment."""

from ._core import (
    AverageHrtf,
    Database,
    DimensionError,
    Error,
    ParseError,
    ValidationError,
    builtin_grid,
    common_positions,
    compute_average,
    cross_db_experiment,
    cross_validate,
    denormalize,
    load_database,
    lsd,
    mirror_augment,
    normalize,
    run_cli,
    save_database,
    synth_corpus,
)

__version__ = "0.1.0"

MODES = ("per-position-per-ear", "position-independent", "ear-independent")
