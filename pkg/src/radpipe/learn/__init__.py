"""Learners for binary report vectors."""
from .io import Model, load_model, model_body, predict, predict_score, save_model
from .linear import (
    LinearModel,
    fit_lasso,
    fit_logistic,
    fit_svm,
    fit_svm_reference,
    kkt_residual,
    lambda_max,
    logistic_loss,
    select_features,
    svm_objective,
)
from .tree import (
    Forest,
    Leaf,
    Split,
    default_mtry,
    fit_forest,
    fit_tree,
    predict_tree,
    tree_depth,
    tree_importances,
)

__all__ = [
    "Forest", "Leaf", "LinearModel", "Model", "Split", "default_mtry", "fit_forest", "fit_lasso",
    "fit_logistic", "fit_svm", "fit_svm_reference", "fit_tree", "kkt_residual", "lambda_max",
    "load_model", "logistic_loss", "model_body", "predict", "predict_score", "predict_tree",
    "save_model", "select_features", "svm_objective", "tree_depth", "tree_importances",
]
