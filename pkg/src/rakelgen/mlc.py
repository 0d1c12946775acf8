"""Multi-label classification strategies over the template label space.

Five strategies share one trained-model container:

* ``br`` — one independent binary tree per label.
* ``chain-predicted`` / ``chain-real`` — sequential per-label trees whose
  inputs include the earlier labels' values; trained with gold history
  (teacher forcing), differing only in whether prediction feeds back its own
  outputs or the supplied gold bits.
* ``majority`` — a constant prediction from training-label frequencies.
* ``lp`` — label powerset: one multi-class tree over the distinct observed
  label combinations.
* ``rakel`` — an ensemble of LP models over random k-subsets of the labels,
  combined by thresholded vote averaging.

Everything is deterministic given (dataset, configs, seeds); parallel member
training must and does produce results identical to sequential training.
"""

from __future__ import annotations

import math
import random
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .domain import Dataset, LabelVector, StudentRecord, labelset_to_vector
from .errors import LabelCoverageWarning, ValidationError
from .features import FeatureVector, extract_features
from .tree import DecisionTree, TreeConfig, predict_tree, train_tree

STRATEGIES = ("br", "chain-predicted", "chain-real", "majority", "lp", "rakel")

MAJORITY_MODES = ("per-label", "labelset")

#: Largest number of k-subsets enumerated outright; beyond this, rejection
#: sampling is used (collisions are then vanishingly rare).
_ENUMERATION_LIMIT = 200_000


@dataclass(frozen=True)
class RakelConfig:
    """Ensemble parameters: subset size k, member count m, vote threshold, seed.

    ``m=None`` resolves to 2x the label count at training time.
    """

    k: int = 3
    m: int | None = None
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.m is not None and self.m < 1:
            raise ValidationError("m must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError("threshold must be in [0, 1]")


@dataclass(frozen=True)
class BrPayload:
    trees: tuple[DecisionTree, ...]


@dataclass(frozen=True)
class ChainPayload:
    trees: tuple[DecisionTree, ...]  # one per chain position
    order: tuple[int, ...]  # permutation of label indices
    history: str  # "predicted" | "real"


@dataclass(frozen=True)
class MajorityPayload:
    bits: tuple[int, ...]
    mode: str = "per-label"


@dataclass(frozen=True)
class LpPayload:
    tree: DecisionTree
    classes: tuple[frozenset[int], ...]  # class id -> set of label indices
    scope: tuple[int, ...]  # label indices this model decides


@dataclass(frozen=True)
class RakelPayload:
    members: tuple[LpPayload, ...]
    config: RakelConfig


@dataclass(frozen=True)
class TrainedModel:
    strategy: str
    registry_version: str
    n_labels: int
    weeks: int
    feature_mode: str
    tree_config: TreeConfig | None
    payload: BrPayload | ChainPayload | MajorityPayload | LpPayload | RakelPayload


def _label_matrix(ds: Dataset) -> np.ndarray:
    """Gold bits as an (n_records, n_labels) 0/1 array, in registry order."""
    registry = ds.registry
    Y = np.zeros((len(ds.records), len(registry)), dtype=int)
    for i, record in enumerate(ds.records):
        for template_id in record.expert_labels:
            Y[i, registry.label_index(template_id)] = 1
    return Y


def _feature_matrix(ds: Dataset, mode: str) -> np.ndarray:
    return np.array(
        [extract_features(r, mode).values for r in ds.records], dtype=float
    )


def _training_arrays(ds: Dataset, mode: str) -> tuple[np.ndarray, np.ndarray]:
    if len(ds.records) == 0:
        raise ValidationError("empty dataset")
    ds.require_labeled()
    return _feature_matrix(ds, mode), _label_matrix(ds)


def _as_row(x: FeatureVector | np.ndarray) -> np.ndarray:
    if isinstance(x, FeatureVector):
        return np.asarray(x.values, dtype=float)
    return np.asarray(x, dtype=float).ravel()


def train_binary_relevance(
    ds: Dataset, cfg: TreeConfig = TreeConfig(), feature_mode: str = "both", n_jobs: int = 1
) -> TrainedModel:
    """One independent binary tree per label."""
    X, Y = _training_arrays(ds, feature_mode)
    trees = _map_maybe_parallel(
        lambda j: train_tree(X, Y[:, j], cfg), range(Y.shape[1]), n_jobs
    )
    return TrainedModel(
        strategy="br",
        registry_version=ds.registry.version,
        n_labels=Y.shape[1],
        weeks=ds.weeks,
        feature_mode=feature_mode,
        tree_config=cfg,
        payload=BrPayload(trees=tuple(trees)),
    )


def train_chain(
    ds: Dataset,
    cfg: TreeConfig = TreeConfig(),
    order: tuple[int, ...] | None = None,
    history: str = "predicted",
    feature_mode: str = "both",
) -> TrainedModel:
    """Classifier chain trained with gold history; ``history`` only affects prediction."""
    if history not in ("predicted", "real"):
        raise ValidationError("history must be 'predicted' or 'real'")
    X, Y = _training_arrays(ds, feature_mode)
    n_labels = Y.shape[1]
    if order is None:
        order = tuple(range(n_labels))
    else:
        order = tuple(int(i) for i in order)
        if sorted(order) != list(range(n_labels)):
            raise ValidationError(
                f"chain order must be a permutation of 0..{n_labels - 1}"
            )
    trees = []
    for p in range(n_labels):
        history_cols = Y[:, list(order[:p])].astype(float)
        Xp = np.hstack([X, history_cols]) if p else X
        trees.append(train_tree(Xp, Y[:, order[p]], cfg))
    return TrainedModel(
        strategy="chain-real" if history == "real" else "chain-predicted",
        registry_version=ds.registry.version,
        n_labels=n_labels,
        weeks=ds.weeks,
        feature_mode=feature_mode,
        tree_config=cfg,
        payload=ChainPayload(trees=tuple(trees), order=order, history=history),
    )


def predict_chain(
    model: TrainedModel, x: FeatureVector | np.ndarray, gold: LabelVector | None = None
) -> LabelVector:
    """Sequential prediction; history bits come from own outputs or from gold."""
    payload = model.payload
    if not isinstance(payload, ChainPayload):
        raise ValidationError(f"model strategy is {model.strategy}, not a chain")
    if payload.history == "real" and gold is None:
        raise ValidationError("real-history chain prediction requires a gold label vector")
    if payload.history == "predicted" and gold is not None:
        raise ValidationError("predicted-history chain prediction takes no gold vector")
    if gold is not None and len(gold) != model.n_labels:
        raise ValidationError("gold vector length does not match the model's label count")
    base = _as_row(x)
    bits = [0] * model.n_labels
    history: list[float] = []
    for p, tree in enumerate(payload.trees):
        xp = np.concatenate([base, history]) if p else base
        predicted = predict_tree(tree, xp)
        bits[payload.order[p]] = int(predicted)
        source = gold.bits[payload.order[p]] if payload.history == "real" else predicted
        history.append(float(source))
    return LabelVector(tuple(bits))


def train_majority(ds: Dataset, mode: str = "per-label") -> TrainedModel:
    """Constant predictor from training-label frequencies.

    ``per-label`` sets bit j iff label j occurs in more than half the records
    (ties drop to 0); ``labelset`` predicts the most frequent full label
    combination, ties broken by first appearance.
    """
    if mode not in MAJORITY_MODES:
        raise ValidationError(f"majority mode must be one of {MAJORITY_MODES}")
    if len(ds.records) == 0:
        raise ValidationError("empty dataset")
    ds.require_labeled()
    Y = _label_matrix(ds)
    n = Y.shape[0]
    if mode == "per-label":
        bits = tuple(int(c * 2 > n) for c in Y.sum(axis=0))
    else:
        seen: dict[tuple[int, ...], int] = {}
        for row in Y:
            key = tuple(int(b) for b in row)
            seen[key] = seen.get(key, 0) + 1
        bits = max(seen, key=seen.get)  # max keeps the first (earliest-seen) winner
    return TrainedModel(
        strategy="majority",
        registry_version=ds.registry.version,
        n_labels=Y.shape[1],
        weeks=ds.weeks,
        feature_mode="both",
        tree_config=None,
        payload=MajorityPayload(bits=bits, mode=mode),
    )


def lp_transform(ds: Dataset) -> tuple[list[int], tuple[frozenset[int], ...]]:
    """Map each record to a class id for its label-index set.

    Distinct observed sets are enumerated in first-appearance order; the
    returned table is a bijection between class ids and observed sets.
    """
    ds.require_labeled()
    Y = _label_matrix(ds)
    return _lp_encode(Y, scope=tuple(range(Y.shape[1])))


def _lp_encode(
    Y: np.ndarray, scope: tuple[int, ...]
) -> tuple[list[int], tuple[frozenset[int], ...]]:
    table: list[frozenset[int]] = []
    index: dict[frozenset[int], int] = {}
    classes = []
    for row in Y:
        labelset = frozenset(j for j in scope if row[j])
        if labelset not in index:
            index[labelset] = len(table)
            table.append(labelset)
        classes.append(index[labelset])
    return classes, tuple(table)


def _train_lp_payload(
    X: np.ndarray, Y: np.ndarray, scope: tuple[int, ...], cfg: TreeConfig
) -> LpPayload:
    classes, table = _lp_encode(Y, scope)
    tree = train_tree(X, classes, cfg)
    return LpPayload(tree=tree, classes=table, scope=scope)


def train_lp(
    ds: Dataset, cfg: TreeConfig = TreeConfig(), feature_mode: str = "both"
) -> TrainedModel:
    """One multi-class tree over the distinct observed label combinations."""
    X, Y = _training_arrays(ds, feature_mode)
    payload = _train_lp_payload(X, Y, tuple(range(Y.shape[1])), cfg)
    return TrainedModel(
        strategy="lp",
        registry_version=ds.registry.version,
        n_labels=Y.shape[1],
        weeks=ds.weeks,
        feature_mode=feature_mode,
        tree_config=cfg,
        payload=payload,
    )


def _lp_labelset(payload: LpPayload, x: np.ndarray) -> frozenset[int]:
    class_id = predict_tree(payload.tree, x)
    return payload.classes[class_id]


def predict_lp(model: TrainedModel, x: FeatureVector | np.ndarray) -> LabelVector:
    """Decode the predicted class back to its label set (always an observed one)."""
    payload = model.payload
    if not isinstance(payload, LpPayload):
        raise ValidationError(f"model strategy is {model.strategy}, not lp")
    labelset = _lp_labelset(payload, _as_row(x))
    bits = [1 if j in labelset else 0 for j in range(model.n_labels)]
    return LabelVector(tuple(bits))


def sample_labelsets(n_labels: int, k: int, m: int, seed: int) -> list[tuple[int, ...]]:
    """m distinct k-subsets of 0..n_labels-1, uniform without replacement.

    m is clamped (with a warning) to the number of available subsets; a
    coverage warning lists any label that ends up in no subset.
    """
    if k < 1 or k > n_labels:
        raise ValidationError(f"k must be in 1..{n_labels}, got {k}")
    if m < 1:
        raise ValidationError("m must be >= 1")
    total = math.comb(n_labels, k)
    if m > total:
        warnings.warn(
            f"only {total} distinct {k}-subsets of {n_labels} labels exist; "
            f"clamping m from {m}",
            LabelCoverageWarning,
        )
        m = total
    rng = random.Random(seed)
    if total <= _ENUMERATION_LIMIT:
        subsets = rng.sample(list(combinations(range(n_labels), k)), m)
    else:
        chosen: set[tuple[int, ...]] = set()
        while len(chosen) < m:
            chosen.add(tuple(sorted(rng.sample(range(n_labels), k))))
        subsets = sorted(chosen)
        rng.shuffle(subsets)
    covered = set().union(*subsets)
    uncovered = sorted(set(range(n_labels)) - covered)
    if uncovered:
        warnings.warn(
            f"labels covered by no sampled subset: {uncovered}", LabelCoverageWarning
        )
    return subsets


def train_rakel(
    ds: Dataset,
    rcfg: RakelConfig = RakelConfig(),
    tcfg: TreeConfig = TreeConfig(),
    feature_mode: str = "both",
    n_jobs: int = 1,
) -> TrainedModel:
    """LP ensemble over random k-subsets of the labels."""
    X, Y = _training_arrays(ds, feature_mode)
    n_labels = Y.shape[1]
    m = rcfg.m if rcfg.m is not None else 2 * n_labels
    resolved = RakelConfig(k=rcfg.k, m=m, threshold=rcfg.threshold, seed=rcfg.seed)
    if resolved.k < n_labels and m * resolved.k < n_labels:
        warnings.warn(
            f"m*k = {m * resolved.k} < {n_labels} labels: full coverage is impossible",
            LabelCoverageWarning,
        )
    subsets = sample_labelsets(n_labels, resolved.k, m, resolved.seed)
    members = _map_maybe_parallel(
        lambda s: _train_lp_payload(X, Y, s, tcfg), subsets, n_jobs
    )
    return TrainedModel(
        strategy="rakel",
        registry_version=ds.registry.version,
        n_labels=n_labels,
        weeks=ds.weeks,
        feature_mode=feature_mode,
        tree_config=tcfg,
        payload=RakelPayload(members=tuple(members), config=resolved),
    )


def _rakel_votes(payload: RakelPayload, x: np.ndarray, n_labels: int) -> list[float]:
    votes = [0.0] * n_labels
    counts = [0] * n_labels
    for member in payload.members:
        labelset = _lp_labelset(member, x)
        for j in member.scope:
            counts[j] += 1
            if j in labelset:
                votes[j] += 1.0
    return [votes[j] / counts[j] if counts[j] else 0.0 for j in range(n_labels)]


def predict_rakel(
    model: TrainedModel, x: FeatureVector | np.ndarray, threshold: float | None = None
) -> LabelVector:
    """Average member votes per label; bit j is 1 iff the mean strictly exceeds the
    threshold. Labels covered by no member stay 0."""
    payload = model.payload
    if not isinstance(payload, RakelPayload):
        raise ValidationError(f"model strategy is {model.strategy}, not rakel")
    t = payload.config.threshold if threshold is None else threshold
    if not 0.0 <= t <= 1.0:
        raise ValidationError("threshold must be in [0, 1]")
    means = _rakel_votes(payload, _as_row(x), model.n_labels)
    return LabelVector(tuple(int(v > t) for v in means))


def predict(
    model: TrainedModel, x: FeatureVector | np.ndarray, gold: LabelVector | None = None
) -> LabelVector:
    """Strategy dispatch. ``gold`` is required by (and only by) chain-real models."""
    vector, _ = predict_votes(model, x, gold)
    return vector


def predict_votes(
    model: TrainedModel, x: FeatureVector | np.ndarray, gold: LabelVector | None = None
) -> tuple[LabelVector, tuple[float, ...]]:
    """Prediction plus per-label vote strengths (vote means for rakel, the bit
    itself for strategies without a vote notion)."""
    payload = model.payload
    if isinstance(payload, RakelPayload):
        if gold is not None:
            raise ValidationError("only chain-real prediction takes a gold vector")
        means = _rakel_votes(payload, _as_row(x), model.n_labels)
        t = payload.config.threshold
        vector = LabelVector(tuple(int(v > t) for v in means))
        return vector, tuple(means)
    if isinstance(payload, ChainPayload):
        vector = predict_chain(model, x, gold)
    elif isinstance(payload, BrPayload):
        if gold is not None:
            raise ValidationError("only chain-real prediction takes a gold vector")
        row = _as_row(x)
        vector = LabelVector(tuple(int(predict_tree(t, row)) for t in payload.trees))
    elif isinstance(payload, MajorityPayload):
        if gold is not None:
            raise ValidationError("only chain-real prediction takes a gold vector")
        vector = LabelVector(payload.bits)
    elif isinstance(payload, LpPayload):
        if gold is not None:
            raise ValidationError("only chain-real prediction takes a gold vector")
        vector = predict_lp(model, x)
    else:
        raise ValidationError(f"unknown payload type {type(payload).__name__}")
    return vector, tuple(float(b) for b in vector.bits)


def predict_record(
    model: TrainedModel, record: StudentRecord, registry=None
) -> LabelVector:
    """Convenience wrapper: extract features with the model's mode, then predict."""
    x = extract_features(record, model.feature_mode)
    gold = None
    if model.strategy == "chain-real":
        if record.expert_labels is None:
            raise ValidationError(
                f"record {record.student_id}: chain-real prediction needs expert labels"
            )
        if registry is None:
            raise ValidationError("chain-real prediction needs the registry to encode gold labels")
        gold = labelset_to_vector(record.expert_labels, registry)
    return predict(model, x, gold)


def _map_maybe_parallel(fn, items, n_jobs: int) -> list:
    """Order-preserving map; with n_jobs > 1 work runs on a thread pool.

    Each task is a pure function of its item, so results are identical to the
    sequential run by construction.
    """
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))
