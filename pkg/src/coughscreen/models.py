"""Baseline classifiers: L2-penalized logistic regression and gradient-boosted trees.

Logistic regression maximizes the penalized log-likelihood

    sum_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)] - ||theta_1..d||^2 / (2C)

with the intercept unregularized, driven by a quasi-Newton (L-BFGS)
optimizer with the objective and analytic gradient defined here.

The booster builds an additive scorer F_t = F_{t-1} + eta * h_t where each
h_t is a depth-limited regression tree least-squares fit to the negative
log-loss gradient. Leaf values are shrunk as sum(residual)/(count + l2),
rows and features are subsampled per tree, and the initial score is the
log-odds of the (weighted) prevalence. Everything is deterministic given
(data, params, seed).

"balanced" class weighting uses w_c = N / (2 * N_c) for both families.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

LR_MAX_ITER = 10000
LR_GRAD_TOL = 1e-6

LR_C_GRID = [1e-4, 5e-4, 1e-3, 1e-2, 5e-2, 1e-1]
LR_SOLVERS = ["lbfgs"]
GBDT_DEPTH_GRID = [4, 6, 8]
GBDT_ITERATIONS_GRID = [400, 800, 1200]
GBDT_LEARNING_RATE_GRID = [0.03, 0.10]
GBDT_L2_LEAF_GRID = [1.0, 3.0, 10.0]
GBDT_SUBSAMPLE_GRID = [0.7, 0.9, 1.0]
GBDT_RSM_GRID = [0.7, 0.9, 1.0]
CLASS_WEIGHT_GRID = [None, "balanced"]


def _validate_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    y = y.astype(np.float64)
    if y.min() == y.max():
        raise ValueError("training labels contain a single class")
    return X, y


def class_sample_weights(y, class_weight) -> np.ndarray:
    """Per-sample weights: all ones, or N/(2*N_c) under 'balanced'."""
    y = np.asarray(y)
    if class_weight is None:
        return np.ones(y.size)
    if class_weight != "balanced":
        raise ValueError(f"unknown class_weight {class_weight!r}")
    n = y.size
    n_pos = int(y.sum())
    w = np.where(y == 1, n / (2.0 * n_pos), n / (2.0 * (n - n_pos)))
    return w


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------

@dataclass
class LRModel:
    theta: np.ndarray  # intercept first, then d coefficients
    C: float
    class_weight: object
    solver_tag: str = "lbfgs"
    converged: bool = True
    n_iter: int = 0

    @property
    def feature_dim(self) -> int:
        return self.theta.size - 1


def lr_objective(theta, X, y, C, sample_weight):
    """Negative penalized log-likelihood and its analytic gradient."""
    z = X @ theta[1:] + theta[0]
    # y log p + (1-y) log(1-p) = y z - log(1 + e^z), stable via logaddexp
    loglik = float(np.sum(sample_weight * (y * z - np.logaddexp(0.0, z))))
    penalty = float(theta[1:] @ theta[1:]) / (2.0 * C)
    g_z = sample_weight * (expit(z) - y)
    grad = np.empty_like(theta)
    grad[0] = g_z.sum()
    grad[1:] = X.T @ g_z + theta[1:] / C
    return -loglik + penalty, grad


def fit_lr(X, y, C, class_weight=None, max_iter=LR_MAX_ITER, grad_tol=LR_GRAD_TOL) -> LRModel:
    if C <= 0:
        raise ValueError("C must be positive")
    X, y = _validate_xy(X, y)
    w = class_sample_weights(y, class_weight)
    theta0 = np.zeros(X.shape[1] + 1)
    res = minimize(lr_objective, theta0, args=(X, y, C, w), jac=True,
                   method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": grad_tol, "ftol": 1e-15})
    return LRModel(theta=res.x, C=C, class_weight=class_weight,
                   converged=bool(res.success), n_iter=int(res.nit))


def predict_proba_lr(model: LRModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ValueError(f"model expects {model.feature_dim} features, got {X.shape}")
    return expit(X @ model.theta[1:] + model.theta[0])


# ---------------------------------------------------------------------------
# Gradient-boosted decision trees
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    feature: int = -1  # -1 marks a leaf
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0


@dataclass
class GBDTModel:
    trees: list
    eta: float
    iterations: int
    depth: int
    l2_leaf_reg: float
    subsample: float
    rsm: float
    class_weights: object
    base_score: float
    feature_dim: int
    seed: int = 0
    eval_metric: str = "AUC"  # recorded metadata; no early stopping exists


def _fit_tree(X, targets, rows, feats, depth, l2) -> TreeNode:
    node = TreeNode(value=float(targets[rows].sum() / (rows.size + l2)))
    if depth <= 0 or rows.size < 2:
        return node
    t = targets[rows]
    total = t.sum()
    sse_parent = float(np.sum(t * t) - total * total / rows.size)
    best_gain = 1e-12
    best = None
    for f in feats:
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        cum = np.cumsum(t[order])
        n = rows.size
        i = np.arange(1, n)  # candidate split: left = first i sorted rows
        valid = sv[:-1] < sv[1:]
        if not valid.any():
            continue
        left_sum = cum[:-1]
        # gain = parent SSE - (left SSE + right SSE); the cross terms reduce to
        # sum_L^2/n_L + sum_R^2/n_R - total^2/n
        score = left_sum ** 2 / i + (total - left_sum) ** 2 / (n - i)
        score = np.where(valid, score, -np.inf)
        j = int(np.argmax(score))
        gain = float(score[j]) - total * total / n
        if gain > best_gain:
            best_gain = gain
            best = (f, 0.5 * (sv[j] + sv[j + 1]), order[: j + 1], order[j + 1:])
    if best is None or sse_parent <= 0:
        return node
    f, thr, left_idx, right_idx = best
    node.feature = int(f)
    node.threshold = float(thr)
    node.left = _fit_tree(X, targets, rows[left_idx], feats, depth - 1, l2)
    node.right = _fit_tree(X, targets, rows[right_idx], feats, depth - 1, l2)
    return node


def _predict_tree(node: TreeNode, X) -> np.ndarray:
    out = np.empty(X.shape[0])
    idx = np.arange(X.shape[0])
    stack = [(node, idx)]
    while stack:
        nd, rows = stack.pop()
        if nd.feature < 0:
            out[rows] = nd.value
            continue
        go_left = X[rows, nd.feature] <= nd.threshold
        stack.append((nd.left, rows[go_left]))
        stack.append((nd.right, rows[~go_left]))
    return out


def fit_gbdt(X, y, params: dict, seed: int = 0) -> GBDTModel:
    """Train the booster. ``params`` carries depth, iterations, learning_rate,
    l2_leaf_reg, subsample, rsm, and class_weights."""
    X, y = _validate_xy(X, y)
    depth = int(params["depth"])
    iterations = int(params["iterations"])
    eta = float(params["learning_rate"])
    l2 = float(params["l2_leaf_reg"])
    subsample = float(params["subsample"])
    rsm = float(params["rsm"])
    class_weights = params.get("class_weights")
    if depth < 1 or iterations < 0:
        raise ValueError("depth must be >= 1 and iterations >= 0")

    n, d = X.shape
    w = class_sample_weights(y, class_weights)
    pbar = float((w * y).sum() / w.sum())
    base_score = float(np.log(pbar / (1.0 - pbar)))
    scores = np.full(n, base_score)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(iterations):
        residuals = w * (y - expit(scores))
        if subsample < 1.0:
            rows = np.sort(rng.choice(n, size=max(1, int(round(subsample * n))),
                                      replace=False))
        else:
            rows = np.arange(n)
        if rsm < 1.0:
            feats = np.sort(rng.choice(d, size=max(1, int(round(rsm * d))),
                                       replace=False))
        else:
            feats = np.arange(d)
        tree = _fit_tree(X, residuals, rows, feats, depth, l2)
        trees.append(tree)
        scores += eta * _predict_tree(tree, X)
    return GBDTModel(trees=trees, eta=eta, iterations=iterations, depth=depth,
                     l2_leaf_reg=l2, subsample=subsample, rsm=rsm,
                     class_weights=class_weights, base_score=base_score,
                     feature_dim=d, seed=seed)


def predict_proba_gbdt(model: GBDTModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ValueError(f"model expects {model.feature_dim} features, got {X.shape}")
    scores = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        scores += model.eta * _predict_tree(tree, X)
    return expit(scores)


# ---------------------------------------------------------------------------
# Hyperparameter grids and dispatch
# ---------------------------------------------------------------------------

def grid_candidates(family: str) -> list:
    """Full hyperparameter grid for a model family, in a fixed documented order.

    The iteration order nests exactly as the parameters are listed below,
    so candidate k is reproducible across runs and machines.
    """
    if family == "LR":
        return [{"C": c, "class_weight": cw, "solver": s}
                for c in LR_C_GRID
                for cw in CLASS_WEIGHT_GRID
                for s in LR_SOLVERS]
    if family == "GBDT":
        return [{"depth": depth, "iterations": it, "learning_rate": lr,
                 "l2_leaf_reg": l2, "subsample": sub, "rsm": rsm,
                 "class_weights": cw}
                for depth in GBDT_DEPTH_GRID
                for it in GBDT_ITERATIONS_GRID
                for lr in GBDT_LEARNING_RATE_GRID
                for l2 in GBDT_L2_LEAF_GRID
                for sub in GBDT_SUBSAMPLE_GRID
                for rsm in GBDT_RSM_GRID
                for cw in CLASS_WEIGHT_GRID]
    raise ValueError(f"unknown model family {family!r}")


def fit_model(family: str, params: dict, X, y, seed: int = 0):
    if family == "LR":
        return fit_lr(X, y, C=params["C"], class_weight=params.get("class_weight"))
    if family == "GBDT":
        return fit_gbdt(X, y, params, seed=seed)
    raise ValueError(f"unknown model family {family!r}")


def predict_model(model, X) -> np.ndarray:
    if isinstance(model, LRModel):
        return predict_proba_lr(model, X)
    if isinstance(model, GBDTModel):
        return predict_proba_gbdt(model, X)
    raise TypeError(f"not a fitted model: {type(model)!r}")


# ---------------------------------------------------------------------------
# Serialization (versioned, self-describing JSON)
# ---------------------------------------------------------------------------

_FORMAT = "coughscreen-model"
_VERSION = 1


def _tree_to_dict(node: TreeNode) -> dict:
    if node.feature < 0:
        return {"value": node.value}
    return {"feature": node.feature, "threshold": node.threshold,
            "value": node.value,
            "left": _tree_to_dict(node.left), "right": _tree_to_dict(node.right)}


def _tree_from_dict(obj: dict) -> TreeNode:
    if "feature" not in obj:
        return TreeNode(value=obj["value"])
    return TreeNode(feature=obj["feature"], threshold=obj["threshold"],
                    value=obj.get("value", 0.0),
                    left=_tree_from_dict(obj["left"]),
                    right=_tree_from_dict(obj["right"]))


def save_model(model, path, metadata: dict | None = None) -> None:
    if isinstance(model, LRModel):
        payload = {"family": "LR", "theta": model.theta.tolist(), "C": model.C,
                   "class_weight": model.class_weight, "solver_tag": model.solver_tag,
                   "converged": model.converged, "n_iter": model.n_iter,
                   "feature_dim": model.feature_dim}
    elif isinstance(model, GBDTModel):
        payload = {"family": "GBDT", "trees": [_tree_to_dict(t) for t in model.trees],
                   "eta": model.eta, "iterations": model.iterations,
                   "depth": model.depth, "l2_leaf_reg": model.l2_leaf_reg,
                   "subsample": model.subsample, "rsm": model.rsm,
                   "class_weights": model.class_weights,
                   "base_score": model.base_score, "feature_dim": model.feature_dim,
                   "seed": model.seed, "eval_metric": model.eval_metric}
    else:
        raise TypeError(f"cannot serialize {type(model)!r}")
    doc = {"format": _FORMAT, "version": _VERSION, "metadata": metadata or {},
           "model": payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != _FORMAT or doc.get("version") != _VERSION:
        raise ValueError(f"{path}: not a {_FORMAT} v{_VERSION} file")
    m = doc["model"]
    if m["family"] == "LR":
        return LRModel(theta=np.asarray(m["theta"]), C=m["C"],
                       class_weight=m["class_weight"], solver_tag=m["solver_tag"],
                       converged=m["converged"], n_iter=m["n_iter"])
    if m["family"] == "GBDT":
        return GBDTModel(trees=[_tree_from_dict(t) for t in m["trees"]],
                         eta=m["eta"], iterations=m["iterations"], depth=m["depth"],
                         l2_leaf_reg=m["l2_leaf_reg"], subsample=m["subsample"],
                         rsm=m["rsm"], class_weights=m["class_weights"],
                         base_score=m["base_score"], feature_dim=m["feature_dim"],
                         seed=m.get("seed", 0), eval_metric=m.get("eval_metric", "AUC"))
    raise ValueError(f"{path}: unknown family {m['family']!r}")
