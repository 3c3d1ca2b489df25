"""CART classifier mapping span feature vectors to strong/weak verdicts.

Binary splits on numeric features, Gini impurity, deterministic greedy
growth (ties resolve to the lower feature index, then the lower
threshold). Leaves keep raw class counts so the weak-probability
decision threshold can be swept after training, and every verdict can
be explained as a root-to-leaf predicate chain.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import STRONG, WEAK
from .errors import (
    EmptyNode,
    InvalidConfig,
    NoFeasibleThreshold,
    SchemaMismatch,
    SingleClassTrainingSet,
)
from .features import FeatureVector

DEFAULT_DECISION_THRESHOLD = 0.5

# Smallest float above 1.0: a threshold no leaf probability can reach,
# i.e. "drop nothing".
THRESHOLD_KEEP_ALL = math.nextafter(1.0, 2.0)


@dataclass(frozen=True)
class TrainConfig:
    """Growth limits and tuning constraint for the noise tree."""

    max_depth: int = 12
    min_samples_leaf: int = 5
    min_impurity_decrease: float = 0.0
    max_tp_drop: float = 0.06
    class_weighted: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise InvalidConfig(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise InvalidConfig(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.min_impurity_decrease < 0:
            raise InvalidConfig("min_impurity_decrease must be >= 0")
        if not 0.0 <= self.max_tp_drop <= 1.0:
            raise InvalidConfig(f"max_tp_drop must be in [0, 1], got {self.max_tp_drop}")


@dataclass(frozen=True)
class Internal:
    feature: int
    threshold: float
    left: int   # taken when value <= threshold
    right: int  # taken when value > threshold


@dataclass(frozen=True)
class Leaf:
    n_strong: int
    n_weak: int
    p_weak: float


@dataclass(frozen=True)
class TreeModel:
    """An immutable trained tree; node 0 is the root."""

    feature_names: tuple[str, ...]
    nodes: tuple[Internal | Leaf, ...]
    decision_threshold: float
    config: TrainConfig

    @property
    def schema_hash(self) -> str:
        joined = "\n".join(self.feature_names).encode("utf-8")
        return hashlib.sha256(joined).hexdigest()

    @property
    def leaves(self) -> list[Leaf]:
        return [n for n in self.nodes if isinstance(n, Leaf)]

    def with_threshold(self, threshold: float) -> "TreeModel":
        return replace(self, decision_threshold=threshold)


def gini(n_strong: int, n_weak: int) -> float:
    """Binary Gini impurity of a node: 1 - p_s^2 - p_w^2."""
    total = n_strong + n_weak
    if total < 1:
        raise EmptyNode("impurity of an empty node is undefined")
    p_s = n_strong / total
    p_w = n_weak / total
    return 1.0 - p_s * p_s - p_w * p_w


def _weighted_gini(w_strong: float, w_weak: float) -> float:
    total = w_strong + w_weak
    if total <= 0:
        return 0.0
    p_s = w_strong / total
    p_w = w_weak / total
    return 1.0 - p_s * p_s - p_w * p_w


def _best_split(
    X: np.ndarray,
    is_weak: np.ndarray,
    weights: np.ndarray,
    min_samples_leaf: int,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, impurity decrease) for one node.

    Candidate thresholds are midpoints of consecutive distinct sorted
    values. The first strictly-best candidate wins, so ties fall to the
    lower feature index and then the lower threshold.
    """
    n = X.shape[0]
    w_weak_total = float(weights[is_weak].sum())
    w_total = float(weights.sum())
    parent = _weighted_gini(w_total - w_weak_total, w_weak_total)
    if parent <= 0.0:
        return None

    best: tuple[int, float, float] | None = None
    best_gain = 0.0
    for j in range(X.shape[1]):
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        v = col[order]
        boundaries = np.nonzero(v[:-1] != v[1:])[0]
        if boundaries.size == 0:
            continue
        w = weights[order]
        ww = w * is_weak[order]
        cum_w = np.cumsum(w)
        cum_ww = np.cumsum(ww)

        n_left = boundaries + 1
        n_right = n - n_left
        ok = (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
        if not ok.any():
            continue
        b = boundaries[ok]
        wl = cum_w[b]
        wl_weak = cum_ww[b]
        wr = w_total - wl
        wr_weak = cum_ww[-1] - wl_weak

        def g(total, weak):
            with np.errstate(invalid="ignore", divide="ignore"):
                ps = (total - weak) / total
                pw = weak / total
            return 1.0 - ps * ps - pw * pw

        child = (wl * g(wl, wl_weak) + wr * g(wr, wr_weak)) / w_total
        gains = parent - child
        pos = int(np.argmax(gains))
        gain = float(gains[pos])
        if gain > best_gain:
            i = int(b[pos])
            threshold = (float(v[i]) + float(v[i + 1])) / 2.0
            best = (j, threshold, gain)
            best_gain = gain
    return best


def train(
    rows: Sequence[tuple[FeatureVector, str]],
    config: TrainConfig = TrainConfig(),
) -> TreeModel:
    """Grow a tree from (feature vector, "strong"/"weak") pairs."""
    if not rows:
        raise SingleClassTrainingSet("empty training set")
    schema = rows[0][0].schema
    for fv, _ in rows:
        if fv.schema.names != schema.names:
            raise SchemaMismatch("training rows use differing feature schemas")
    X = np.vstack([fv.values for fv, _ in rows])
    labels = [label for _, label in rows]
    return train_matrix(X, labels, schema.names, config)


def train_matrix(
    X: np.ndarray,
    labels: Sequence[str],
    feature_names: Sequence[str],
    config: TrainConfig = TrainConfig(),
) -> TreeModel:
    """Grow a tree from an (n, d) matrix and parallel label list."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise SchemaMismatch(f"matrix {X.shape} does not match {len(labels)} labels")
    if X.shape[1] != len(feature_names):
        raise SchemaMismatch(f"{X.shape[1]} columns vs {len(feature_names)} feature names")
    for label in labels:
        if label not in (STRONG, WEAK):
            raise InvalidConfig(f"label must be 'strong' or 'weak', got {label!r}")
    is_weak = np.array([label == WEAK for label in labels], dtype=bool)
    n_weak = int(is_weak.sum())
    n_strong = len(labels) - n_weak
    if n_weak == 0 or n_strong == 0:
        raise SingleClassTrainingSet(
            f"need both classes, got {n_strong} strong / {n_weak} weak"
        )

    if config.class_weighted:
        n = len(labels)
        w_strong = n / (2.0 * n_strong)
        w_weak = n / (2.0 * n_weak)
        weights = np.where(is_weak, w_weak, w_strong)
    else:
        weights = np.ones(len(labels), dtype=np.float64)

    nodes: list[Internal | Leaf] = []

    def leaf(mask_weak: np.ndarray) -> int:
        nw = int(mask_weak.sum())
        ns = int(mask_weak.size - nw)
        nodes.append(Leaf(ns, nw, nw / (ns + nw)))
        return len(nodes) - 1

    def grow(x: np.ndarray, yw: np.ndarray, w: np.ndarray, depth: int) -> int:
        pure = yw.all() or not yw.any()
        if depth >= config.max_depth or pure or yw.size < 2 * config.min_samples_leaf:
            return leaf(yw)
        found = _best_split(x, yw, w, config.min_samples_leaf)
        if found is None or found[2] < config.min_impurity_decrease:
            return leaf(yw)
        j, threshold, _ = found
        node_index = len(nodes)
        nodes.append(Internal(j, threshold, -1, -1))  # children patched below
        go_left = x[:, j] <= threshold
        left = grow(x[go_left], yw[go_left], w[go_left], depth + 1)
        right = grow(x[~go_left], yw[~go_left], w[~go_left], depth + 1)
        nodes[node_index] = Internal(j, threshold, left, right)
        return node_index

    grow(X, is_weak, weights, 0)
    return TreeModel(
        feature_names=tuple(feature_names),
        nodes=tuple(nodes),
        decision_threshold=DEFAULT_DECISION_THRESHOLD,
        config=config,
    )


def _leaf_for(model: TreeModel, values: np.ndarray) -> tuple[Leaf, list[tuple[Internal, bool]]]:
    node = model.nodes[0]
    trail: list[tuple[Internal, bool]] = []
    while isinstance(node, Internal):
        went_left = values[node.feature] <= node.threshold
        trail.append((node, went_left))
        node = model.nodes[node.left if went_left else node.right]
    return node, trail


def _values_for(model: TreeModel, features: FeatureVector | np.ndarray) -> np.ndarray:
    if isinstance(features, FeatureVector):
        if features.schema.names != model.feature_names:
            raise SchemaMismatch("feature vector schema differs from training schema")
        return features.values
    values = np.asarray(features, dtype=np.float64)
    if values.shape != (len(model.feature_names),):
        raise SchemaMismatch(
            f"expected {len(model.feature_names)} values, got shape {values.shape}"
        )
    return values


def weak_probability(model: TreeModel, features: FeatureVector | np.ndarray) -> float:
    leaf_node, _ = _leaf_for(model, _values_for(model, features))
    return leaf_node.p_weak


def classify(
    model: TreeModel,
    features: FeatureVector | np.ndarray,
    decision_threshold: float | None = None,
) -> tuple[str, float]:
    """Verdict and leaf weak-probability; weak iff p_weak >= threshold."""
    theta = model.decision_threshold if decision_threshold is None else decision_threshold
    p_weak = weak_probability(model, features)
    return (WEAK if p_weak >= theta else STRONG), p_weak


@dataclass(frozen=True)
class TuneResult:
    threshold: float
    tp_drop: float
    fp_drop: float
    n_tp: int
    n_fp: int


def tune_threshold(
    model: TreeModel,
    rows: Sequence[tuple[FeatureVector | np.ndarray, bool]],
    max_tp_drop: float | None = None,
) -> TuneResult:
    """Pick the weak-probability cutoff maximizing FP removal while the
    validation TP-drop fraction stays within the budget.

    Candidates are the distinct leaf probabilities plus a keep-all
    sentinel; ties prefer the higher (more conservative) threshold. When
    nothing can be removed within budget, the keep-all threshold is
    returned and a NoFeasibleThreshold warning is emitted.
    """
    budget = model.config.max_tp_drop if max_tp_drop is None else max_tp_drop
    if not 0.0 <= budget <= 1.0:
        raise InvalidConfig(f"max_tp_drop must be in [0, 1], got {budget}")
    p = np.array([weak_probability(model, fv) for fv, _ in rows], dtype=np.float64)
    is_tp = np.array([bool(t) for _, t in rows], dtype=bool)
    n_tp = int(is_tp.sum())
    n_fp = int(is_tp.size - n_tp)
    if n_tp == 0 or n_fp == 0:
        raise SingleClassTrainingSet(
            f"tuning needs TPs and FPs, got {n_tp} TP / {n_fp} FP"
        )

    candidates = sorted({leaf.p_weak for leaf in model.leaves}) + [THRESHOLD_KEEP_ALL]
    best: TuneResult | None = None
    for theta in candidates:
        dropped = p >= theta
        tp_drop = float(dropped[is_tp].sum()) / n_tp
        fp_drop = float(dropped[~is_tp].sum()) / n_fp
        if tp_drop > budget:
            continue
        if (
            best is None
            or fp_drop > best.fp_drop
            or (fp_drop == best.fp_drop and theta > best.threshold)
        ):
            best = TuneResult(float(theta), tp_drop, fp_drop, n_tp, n_fp)
    assert best is not None  # keep-all is always feasible
    if best.fp_drop == 0.0:
        warnings.warn(
            "no threshold removes any FP within the TP-drop budget; keeping everything",
            NoFeasibleThreshold,
        )
    assert best.tp_drop <= budget
    return best


# ---------------------------------------------------------------------------
# Decision paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathStep:
    feature: str
    op: str  # "<=" or ">"
    threshold: float
    observed: float


@dataclass(frozen=True)
class DecisionPath:
    steps: tuple[PathStep, ...]
    verdict: str
    p_weak: float

    def serialize(self) -> str:
        """Render as "(name op threshold)" lines joined by "& "."""
        parts = [f"({s.feature} {s.op} {s.threshold!r})" for s in self.steps]
        return "\n& ".join(parts)

    def __str__(self) -> str:
        return self.serialize()


def explain(
    model: TreeModel,
    features: FeatureVector | np.ndarray,
    decision_threshold: float | None = None,
) -> DecisionPath:
    """Root-to-leaf predicate chain for one instance, in evaluation order.

    Every emitted predicate evaluates true for the instance.
    """
    values = _values_for(model, features)
    leaf_node, trail = _leaf_for(model, values)
    steps = []
    for node, went_left in trail:
        steps.append(
            PathStep(
                feature=model.feature_names[node.feature],
                op="<=" if went_left else ">",
                threshold=node.threshold,
                observed=float(values[node.feature]),
            )
        )
    theta = model.decision_threshold if decision_threshold is None else decision_threshold
    verdict = WEAK if leaf_node.p_weak >= theta else STRONG
    return DecisionPath(tuple(steps), verdict, leaf_node.p_weak)


# ---------------------------------------------------------------------------
# Persistence: versioned JSON, deterministic byte-for-byte
# ---------------------------------------------------------------------------

FORMAT_VERSION = 1


def serialize_model(model: TreeModel) -> str:
    nodes = []
    for node in model.nodes:
        if isinstance(node, Internal):
            nodes.append(
                {"f": node.feature, "t": node.threshold, "l": node.left, "r": node.right}
            )
        else:
            nodes.append({"ns": node.n_strong, "nw": node.n_weak, "pw": node.p_weak})
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "nr-decision-tree",
        "schema_hash": model.schema_hash,
        "feature_names": list(model.feature_names),
        "decision_threshold": model.decision_threshold,
        "config": {
            "max_depth": model.config.max_depth,
            "min_samples_leaf": model.config.min_samples_leaf,
            "min_impurity_decrease": model.config.min_impurity_decrease,
            "max_tp_drop": model.config.max_tp_drop,
            "class_weighted": model.config.class_weighted,
            "seed": model.config.seed,
        },
        "nodes": nodes,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def deserialize_model(text: str) -> TreeModel:
    payload = json.loads(text)
    if payload.get("format_version") != FORMAT_VERSION:
        raise SchemaMismatch(
            f"unsupported model format version {payload.get('format_version')!r}"
        )
    nodes: list[Internal | Leaf] = []
    for raw in payload["nodes"]:
        if "f" in raw:
            nodes.append(Internal(int(raw["f"]), float(raw["t"]), int(raw["l"]), int(raw["r"])))
        else:
            nodes.append(Leaf(int(raw["ns"]), int(raw["nw"]), float(raw["pw"])))
    config = TrainConfig(**payload["config"])
    model = TreeModel(
        feature_names=tuple(payload["feature_names"]),
        nodes=tuple(nodes),
        decision_threshold=float(payload["decision_threshold"]),
        config=config,
    )
    if model.schema_hash != payload["schema_hash"]:
        raise SchemaMismatch("feature-name hash does not match the stored schema_hash")
    return model


def save_model(model: TreeModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(serialize_model(model))
        handle.write("\n")


def load_model(path: str) -> TreeModel:
    with open(path, "r", encoding="utf-8") as handle:
        return deserialize_model(handle.read())
