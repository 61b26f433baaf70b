from .stats import (
    auc,
    bca,
    bonferroni,
    chi_square,
    cohens_kappa,
    confusion_metrics,
    corrected_resampled_ci,
    delong_test,
    f1_score,
    format_ci,
    mann_whitney_u,
    roc_band,
)

__all__ = [
    "auc",
    "bca",
    "bonferroni",
    "chi_square",
    "cohens_kappa",
    "confusion_metrics",
    "corrected_resampled_ci",
    "delong_test",
    "f1_score",
    "format_ci",
    "mann_whitney_u",
    "roc_band",
]
