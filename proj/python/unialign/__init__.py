"""Robust cross-domain traffic classification toolkit.

Domain-aligned fine-tuning (mean+covariance representation alignment with
label smoothing) and flat-valley checkpoint merging, over a compact traffic
classifier, with a synthetic distribution-shift generator and a
leave-one-domain-out evaluation harness.
"""

from ._unialign import (
    Dataset,
    alignment_loss,
    checkpoint_weight,
    compute_metrics,
    covariance_alignment_loss,
    find_converge_epoch,
    find_overfit_epoch,
    generate_synthetic,
    jsd_divergence,
    load_dataset,
    mean_alignment_loss,
    overfit_threshold,
    run_experiment,
    save_dataset,
    smooth_labels,
    smoothed_cross_entropy,
)

__all__ = [
    "Dataset",
    "alignment_loss",
    "checkpoint_weight",
    "compute_metrics",
    "covariance_alignment_loss",
    "find_converge_epoch",
    "find_overfit_epoch",
    "generate_synthetic",
    "jsd_divergence",
    "load_dataset",
    "mean_alignment_loss",
    "overfit_threshold",
    "run_experiment",
    "save_dataset",
    "smooth_labels",
    "smoothed_cross_entropy",
]
