"""Imbalanced binary classification with a batch-generating GAN.

The package bundles the draGAN oversampler (a generator that emits whole
labelled training batches, steered by a critic that predicts downstream
classifier scores), the classic interpolation baselines (SMOTE, polynomial
fitting, MixUp), a from-scratch logistic-regression classifier, the metric
suite (ROC-AUC, F1, G-score, Youden thresholding) and a repeated stratified
cross-validation benchmark harness with a command line front end.
"""

__version__ = "0.1.0"

from .bench import (AblationResult, BenchmarkReport, EvalRecord,
                    ablate_data_fraction, correlation_report, emit_ablation,
                    emit_report, run_benchmark, top_gains)
from .classify import LogisticModel, TrainConfig, predict_proba, train_logreg
from .data import (Dataset, MinMaxScaler, SplitPlan, apply_minmax, fit_minmax,
                   imbalance_ratio, invert_minmax, load_csv, save_csv,
                   stratified_kfold, subsample_fraction)
from .errors import DraganError
from .gan import DraganConfig, DraganState, resample_with_dragan, train_dragan
from .metrics import (auc, confusion, f1, g_score, loss_f1_curve, pearson,
                      performance_error, youden_threshold)
from .oversample import (ResamplePlan, mixup, polyfit_star, resample, smote,
                         target_count_balance)

__all__ = [
    "AblationResult", "BenchmarkReport", "Dataset", "DraganConfig",
    "DraganError", "DraganState", "EvalRecord", "LogisticModel",
    "MinMaxScaler", "ResamplePlan", "SplitPlan", "TrainConfig",
    "ablate_data_fraction", "apply_minmax", "auc", "confusion",
    "correlation_report", "emit_ablation", "emit_report", "f1", "fit_minmax",
    "g_score", "imbalance_ratio", "invert_minmax", "load_csv",
    "loss_f1_curve", "mixup", "pearson", "performance_error", "polyfit_star",
    "predict_proba", "resample", "resample_with_dragan", "run_benchmark",
    "save_csv", "smote", "stratified_kfold", "subsample_fraction",
    "target_count_balance", "top_gains", "train_dragan", "train_logreg",
    "youden_threshold"]
