"""Stratified k-fold cross-validation, binary metrics, and the model comparison report.

Each fold optionally rebuilds the feature vocabulary from its training rows,
selects features with an L1-penalized logistic model whose penalty is tuned
by an inner stratified CV, and then fits one of four classifiers on the
surviving columns. Every random choice is seeded from the master seed and the
fold number, so a report is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import RadpipeError
from .features import FeatureMatrix
from .learn import (
    Forest,
    LinearModel,
    fit_forest,
    fit_lasso,
    fit_logistic,
    fit_svm,
    fit_tree,
    lambda_max,
    predict,
    select_features,
)
from .serial import load_document, save_document
from .tagging import PRF, prf_from_counts

MODEL_KINDS = ("lr", "dt", "rf", "svm")
MODEL_NAMES = {"lr": "Logistic regression", "dt": "Decision tree", "rf": "Random forest", "svm": "SVM"}
VOCAB_SCOPES = ("fold", "global")


# -- folds and metrics ---------------------------------------------------

@dataclass
class FoldPlan:
    k: int
    seed: int
    assignments: np.ndarray  # fold id per row

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_kfold(labels: Sequence[int], k: int = 5, seed: int = 0) -> FoldPlan:
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    assign = np.full(len(labels), -1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise RadpipeError(f"class {cls} has {len(idx)} members, fewer than k={k}")
        idx = idx[rng.permutation(len(idx))]
        assign[idx] = np.arange(len(idx)) % k
    return FoldPlan(k, seed, assign)


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def prf(self) -> PRF:
        return prf_from_counts(self.tp, self.fp, self.fn)


def confusion(gold: Sequence[int], pred: Sequence[int], positive_class: int = 1) -> Confusion:
    g = np.asarray(gold) == positive_class
    p = np.asarray(pred) == positive_class
    if g.shape != p.shape:
        raise ValueError(f"{len(g)} gold labels but {len(p)} predictions")
    return Confusion(int(np.sum(g & p)), int(np.sum(~g & p)), int(np.sum(g & ~p)), int(np.sum(~g & ~p)))


def binary_prf(gold: Sequence[int], pred: Sequence[int], positive_class: int = 1) -> PRF:
    return confusion(gold, pred, positive_class).prf


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


# -- hyperparameters and model fitting ------------------------------------

@dataclass
class Hyperparams:
    lasso_lambda: float | None = None  # None: tune by inner CV
    lasso_grid: int = 20
    lasso_ratio: float = 1e-3
    inner_k: int = 5
    lr_l2: float = 1e-4
    dt_max_depth: int | None = None
    rf_trees: int = 100
    rf_mtry: int | None = None
    rf_max_depth: int | None = None
    svm_lambda: float = 1e-2
    svm_epochs: int = 200
    vocab_scope: str = "fold"
    min_count: int = 3
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if self.vocab_scope not in VOCAB_SCOPES:
            raise ValueError(f"vocab_scope must be one of {VOCAB_SCOPES}")


def fit_classifier(kind: str, X: np.ndarray, y: np.ndarray, hp: Hyperparams, seed: int):
    if kind == "lr":
        return fit_logistic(X, y, l2=hp.lr_l2)
    if kind == "dt":
        return fit_tree(X, y, max_depth=hp.dt_max_depth)
    if kind == "rf":
        mtry = None if hp.rf_mtry is None else min(hp.rf_mtry, max(X.shape[1], 1))
        return fit_forest(X, y, n_trees=hp.rf_trees, mtry=mtry, max_depth=hp.rf_max_depth,
                          seed=seed, n_jobs=hp.n_jobs)
    if kind == "svm":
        return fit_svm(X, y, lam=hp.svm_lambda, epochs=hp.svm_epochs, seed=seed)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def lambda_grid(X: np.ndarray, y: np.ndarray, hp: Hyperparams) -> np.ndarray:
    top = lambda_max(X, y)
    return top * np.logspace(0.0, np.log10(hp.lasso_ratio), hp.lasso_grid)


@dataclass
class LassoChoice:
    lam: float
    grid: list[float]
    mean_f1: list[float]


def choose_lambda(X: np.ndarray, y: np.ndarray, hp: Hyperparams, seed: int) -> LassoChoice:
    """Inner stratified CV over a log grid; best mean F1 wins, ties go to the larger penalty."""
    if hp.lasso_lambda is not None:
        return LassoChoice(float(hp.lasso_lambda), [float(hp.lasso_lambda)], [])
    grid = lambda_grid(X, y, hp)
    plan = stratified_kfold(y, hp.inner_k, seed)
    scores = np.zeros((hp.inner_k, len(grid)))
    for f in range(hp.inner_k):
        tr, te = plan.train_indices(f), plan.test_indices(f)
        warm = None
        for j, lam in enumerate(grid):
            warm = fit_lasso(X[tr], y[tr], lam, warm_start=warm)
            scores[f, j] = binary_prf(y[te], warm.predict(X[te])).f1
    mean = scores.mean(axis=0)
    rounded = np.round(mean, 12)
    best = int(np.argmax(rounded))  # grid descends, so argmax's first hit is the larger lambda
    return LassoChoice(float(grid[best]), [float(g) for g in grid], [float(m) for m in mean])


@dataclass
class Selection:
    lam: float
    model: LinearModel
    columns: list[int]


def select(X: np.ndarray, y: np.ndarray, hp: Hyperparams, seed: int) -> Selection:
    choice = choose_lambda(X, y, hp, seed)
    model = fit_lasso(X, y, choice.lam)
    return Selection(choice.lam, model, select_features(model))


def _vocab_columns(X: np.ndarray, min_count: int) -> np.ndarray:
    return np.flatnonzero(X.sum(axis=0) >= min_count)


# -- report --------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    n_features: int
    confusion: Confusion

    @property
    def prf(self) -> PRF:
        return self.confusion.prf


@dataclass
class ModelResult:
    model: str
    use_lasso: bool
    folds: list[FoldResult]
    predictions: list[int]  # pooled out-of-fold prediction per matrix row

    @property
    def mean(self) -> PRF:
        arr = np.array([f.prf for f in self.folds], dtype=np.float64)
        return PRF(*(float(v) for v in arr.mean(axis=0)))

    @property
    def pooled_confusion(self) -> Confusion:
        total = Confusion(0, 0, 0, 0)
        for f in self.folds:
            total = total + f.confusion
        return total

    @property
    def pooled(self) -> PRF:
        return self.pooled_confusion.prf


@dataclass
class LassoFold:
    fold: int
    lam: float
    support: list[str]


@dataclass
class EvalReport:
    k: int
    seed: int
    hyperparams: Hyperparams
    report_ids: list[str]
    models: list[ModelResult]
    lasso_folds: list[LassoFold] = field(default_factory=list)
    importances: list[tuple[str, float]] = field(default_factory=list)
    full_lasso_lambda: float | None = None
    full_lasso_support: list[str] = field(default_factory=list)

    def result(self, model: str, use_lasso: bool) -> ModelResult:
        for m in self.models:
            if m.model == model and m.use_lasso == use_lasso:
                return m
        raise KeyError((model, use_lasso))


def rank_importances(forest: Forest, keys: Sequence[str]) -> list[tuple[str, float]]:
    if len(keys) != forest.n_features:
        raise ValueError(f"forest has {forest.n_features} features but {len(keys)} keys were given")
    ranked = [(k, float(s)) for k, s in zip(keys, forest.importances) if s > 0]
    ranked.sort(key=lambda t: (-t[1], t[0]))
    return ranked


def run_cv(matrix: FeatureMatrix, plan: FoldPlan, model_kind: str | Iterable[str] = MODEL_KINDS,
           use_lasso: bool | Iterable[bool] = (False, True), hyperparams: Hyperparams | None = None,
           seed: int = 0, importances: bool = True) -> EvalReport:
    """Cross-validate every requested (model, lasso arm) pair on the same fold plan."""
    hp = hyperparams or Hyperparams()
    kinds = [model_kind] if isinstance(model_kind, str) else list(model_kind)
    arms = [use_lasso] if isinstance(use_lasso, bool) else list(use_lasso)
    for kind in kinds:
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    n = len(matrix.report_ids)
    if len(plan.assignments) != n:
        raise RadpipeError(f"fold plan covers {len(plan.assignments)} rows but the matrix has {n}")
    X = matrix.X.astype(np.float64)
    y = matrix.labels
    global_cols = _vocab_columns(X, hp.min_count)

    preds = {(kind, arm): np.full(n, -1, dtype=np.int64) for kind in kinds for arm in arms}
    folds = {key: [] for key in preds}
    lasso_folds: list[LassoFold] = []
    for f in range(plan.k):
        tr, te = plan.train_indices(f), plan.test_indices(f)
        s = fold_seed(seed, f)
        cols = _vocab_columns(X[tr], hp.min_count) if hp.vocab_scope == "fold" else global_cols
        if True in arms:
            sel = select(X[np.ix_(tr, cols)], y[tr], hp, s)
            lasso_cols = cols[sel.columns]
            lasso_folds.append(LassoFold(f, sel.lam, [matrix.keys[j] for j in lasso_cols]))
        for arm in arms:
            use = lasso_cols if arm else cols
            Xtr, Xte = X[np.ix_(tr, use)], X[np.ix_(te, use)]
            for kind in kinds:
                model = fit_classifier(kind, Xtr, y[tr], hp, s)
                p = predict(model, Xte)
                preds[(kind, arm)][te] = p
                folds[(kind, arm)].append(FoldResult(f, len(tr), len(te), len(use), confusion(y[te], p)))

    models = [ModelResult(kind, arm, folds[(kind, arm)], preds[(kind, arm)].tolist())
              for arm in arms for kind in kinds]
    report = EvalReport(plan.k, seed, hp, list(matrix.report_ids), models, lasso_folds)

    if importances:
        Xg = X[:, global_cols]
        forest = fit_classifier("rf", Xg, y, hp, seed)
        report.importances = rank_importances(forest, [matrix.keys[j] for j in global_cols])
    if True in arms:
        sel = select(X[:, global_cols], y, hp, seed)
        report.full_lasso_lambda = sel.lam
        report.full_lasso_support = [matrix.keys[global_cols[j]] for j in sel.columns]
    return report


# -- output --------------------------------------------------------------

def _prf_doc(p: PRF) -> dict:
    return {"precision": p.precision, "recall": p.recall, "f1": p.f1}


def report_doc(report: EvalReport) -> dict:
    models = []
    for m in report.models:
        c = m.pooled_confusion
        models.append({
            "model": m.model,
            "use_lasso": m.use_lasso,
            "folds": [{"fold": f.fold, "n_train": f.n_train, "n_test": f.n_test, "n_features": f.n_features,
                       "confusion": [f.confusion.tp, f.confusion.fp, f.confusion.fn, f.confusion.tn],
                       **_prf_doc(f.prf)} for f in m.folds],
            "mean": _prf_doc(m.mean),
            "pooled": _prf_doc(m.pooled),
            "pooled_confusion": [c.tp, c.fp, c.fn, c.tn],
            "predictions": m.predictions,
        })
    return {
        "k": report.k,
        "seed": report.seed,
        "hyperparams": asdict(report.hyperparams),
        "report_ids": report.report_ids,
        "models": models,
        "lasso_folds": [{"fold": lf.fold, "lambda": lf.lam, "support": lf.support} for lf in report.lasso_folds],
        "full_lasso_lambda": report.full_lasso_lambda,
        "full_lasso_support": report.full_lasso_support,
        "importances": [{"key": k, "score": s} for k, s in report.importances],
    }


def save_report(report: EvalReport, path: str | Path) -> None:
    save_document(path, "eval_report", report_doc(report))


def load_report(path: str | Path) -> EvalReport:
    doc = load_document(path, "eval_report")
    models = []
    for m in doc["models"]:
        fr = [FoldResult(f["fold"], f["n_train"], f["n_test"], f["n_features"], Confusion(*f["confusion"]))
              for f in m["folds"]]
        models.append(ModelResult(m["model"], bool(m["use_lasso"]), fr, list(m["predictions"])))
    return EvalReport(
        doc["k"], doc["seed"], Hyperparams(**doc["hyperparams"]), list(doc["report_ids"]), models,
        [LassoFold(d["fold"], d["lambda"], list(d["support"])) for d in doc["lasso_folds"]],
        [(d["key"], d["score"]) for d in doc["importances"]],
        doc["full_lasso_lambda"], list(doc["full_lasso_support"]),
    )


def _table(report: EvalReport, which: str) -> list[str]:
    arms = sorted({m.use_lasso for m in report.models})
    kinds = [k for k in MODEL_KINDS if any(m.model == k for m in report.models)]
    width = 22
    head1 = " " * width + "".join(f"{'With Lasso' if a else 'Without Lasso':<26}" for a in arms)
    head2 = f"{'Model':<{width}}" + "".join(f"{'P':<8}{'R':<8}{'F1':<10}" for _ in arms)
    lines = [head1.rstrip(), head2.rstrip()]
    for kind in kinds:
        row = f"{MODEL_NAMES[kind]:<{width}}"
        for arm in arms:
            p = getattr(report.result(kind, arm), which)
            row += f"{100 * p.precision:<8.2f}{100 * p.recall:<8.2f}{100 * p.f1:<10.2f}"
        lines.append(row.rstrip())
    return lines


def render_table(report: EvalReport, top: int = 10) -> str:
    out = [f"{report.k}-fold stratified cross-validation, seed {report.seed}, "
           f"vocabulary scope {report.hyperparams.vocab_scope}; positive class = 1; values in %", ""]
    out.append("Fold mean")
    out += _table(report, "mean")
    out += ["", "Pooled out-of-fold predictions"]
    out += _table(report, "pooled")
    if report.full_lasso_lambda is not None:
        out += ["", f"Lasso on all reports: lambda {report.full_lasso_lambda:.6g}, "
                    f"{len(report.full_lasso_support)} features selected"]
    if report.importances:
        out += ["", f"Top {min(top, len(report.importances))} features by Gini importance"]
        for i, (k, s) in enumerate(report.importances[:top], start=1):
            out.append(f"{i:>3}  {s:.4f}  {k}")
    return "\n".join(out) + "\n"


__all__ = [
    "Confusion", "EvalReport", "FoldPlan", "FoldResult", "Hyperparams", "LassoChoice", "LassoFold",
    "MODEL_KINDS", "ModelResult", "Selection", "binary_prf", "choose_lambda", "confusion",
    "fit_classifier", "fold_seed", "lambda_grid", "load_report", "rank_importances", "render_table",
    "report_doc", "run_cv", "save_report", "select", "stratified_kfold",
]
