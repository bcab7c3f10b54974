"""Positive-unlabeled learning lab.

Labels are 1 for positive and 0 for negative. Classifier scores are the
probability of the negative class, so a sample is positive iff score < 0.5.
"""

from ._pulab import (
    IngestError,
    NumericError,
    SpecError,
    UsageError,
    accuracy,
    derive_seed,
    dump_samples,
    frechet_distance,
    gradient_suite,
    loss_d,
    loss_g,
    loss_ob,
    make_pu_split,
    make_two_moons,
    read_idx_images,
    read_idx_labels,
    rolling_summary,
    run_experiment,
    validate_config,
    write_idx_images,
)

__all__ = [
    "IngestError",
    "NumericError",
    "SpecError",
    "UsageError",
    "accuracy",
    "derive_seed",
    "dump_samples",
    "frechet_distance",
    "gradient_suite",
    "loss_d",
    "loss_g",
    "loss_ob",
    "make_pu_split",
    "make_two_moons",
    "read_idx_images",
    "read_idx_labels",
    "rolling_summary",
    "run_experiment",
    "validate_config",
    "write_idx_images",
]
