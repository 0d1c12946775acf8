"""Multi-label strategies: BR, chains, majority, LP, subset sampling, RAkEL."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from _builders import make_record, marks_dataset, tiny_registry
from rakelgen.domain import Dataset, LabelVector, labelset_to_vector
from rakelgen.errors import LabelCoverageWarning, ValidationError
from rakelgen.features import extract_features
from rakelgen.mlc import (
    BrPayload,
    ChainPayload,
    LpPayload,
    MajorityPayload,
    RakelConfig,
    RakelPayload,
    TrainedModel,
    lp_transform,
    predict,
    predict_chain,
    predict_lp,
    predict_rakel,
    predict_record,
    predict_votes,
    sample_labelsets,
    train_binary_relevance,
    train_chain,
    train_lp,
    train_majority,
    train_rakel,
)
from rakelgen.tree import Leaf, DecisionTree, TreeConfig, predict_tree, tree_to_dict

# Flat marks value below 4.5 carries labels {1, 2}; above it, no labels.
TWO_LABEL_ROWS = [
    (1.0, [1, 2]),
    (2.0, [1, 2]),
    (3.0, [1, 2]),
    (4.0, [1, 2]),
    (6.0, []),
    (7.0, []),
    (8.0, []),
    (9.0, []),
]


def _features(record, mode="both"):
    return extract_features(record, mode)


def _flat_marks_input(value: float, weeks: int = 4):
    return _features(
        make_record("probe", weeks=weeks, series={"marks": [value] * weeks})
    )


class TestBinaryRelevance:
    def test_constant_bit_becomes_single_leaf(self):
        registry = tiny_registry(2)
        ds = marks_dataset(registry, [(1.0, [1]), (2.0, [1]), (3.0, [1])])
        model = train_binary_relevance(ds)
        assert isinstance(model.payload, BrPayload)
        tree_for_label_0 = model.payload.trees[0]
        assert isinstance(tree_for_label_0.root, Leaf)
        assert tree_for_label_0.root.label == 1

    def test_one_tree_per_label(self, ds37):
        model = train_binary_relevance(ds37)
        assert len(model.payload.trees) == 29
        assert model.n_labels == 29

    def test_prediction_concatenates_per_label_trees(self):
        registry = tiny_registry(2)
        ds = marks_dataset(registry, TWO_LABEL_ROWS)
        model = train_binary_relevance(ds)
        x = _flat_marks_input(2.5)
        combined = predict(model, x)
        per_tree = [predict_tree(t, np.asarray(x.values)) for t in model.payload.trees]
        assert list(combined.bits) == per_tree

    def test_label_independence_under_registry_subsetting(self, ds37, registry):
        from rakelgen.domain import TemplateRegistry

        full_model = train_binary_relevance(ds37)
        keep_ids = (1, 4, 9, 16, 25)
        sub_registry = TemplateRegistry(
            templates=tuple(registry.get(i) for i in keep_ids), version="subset"
        )
        sub_records = tuple(
            make_record(
                r.student_id,
                weeks=r.weeks,
                series=dict(r.series),
                labels=r.expert_labels & frozenset(keep_ids),
            )
            for r in ds37.records
        )
        sub_model = train_binary_relevance(Dataset(sub_registry, sub_records))
        for sub_index, template_id in enumerate(keep_ids):
            full_index = registry.label_index(template_id)
            assert tree_to_dict(sub_model.payload.trees[sub_index]) == tree_to_dict(
                full_model.payload.trees[full_index]
            )

    def test_unlabeled_dataset_rejected(self, registry):
        ds = Dataset(registry, (make_record(),))
        with pytest.raises(ValidationError):
            train_binary_relevance(ds)

    def test_parallel_training_identical(self, ds37):
        sequential = train_binary_relevance(ds37, n_jobs=1)
        parallel = train_binary_relevance(ds37, n_jobs=4)
        for a, b in zip(sequential.payload.trees, parallel.payload.trees):
            assert tree_to_dict(a) == tree_to_dict(b)


class TestChain:
    def test_single_label_chain_equals_br(self):
        registry = tiny_registry(1)
        ds = marks_dataset(registry, [(1.0, [1]), (2.0, [1]), (8.0, []), (9.0, [])])
        chain = train_chain(ds)
        br = train_binary_relevance(ds)
        for value in (0.5, 3.0, 5.0, 8.5):
            x = _flat_marks_input(value)
            assert predict(chain, x).bits == predict(br, x).bits

    def test_predicted_history_propagates(self):
        # Label 2 always equals label 1 in training, and label 1 is
        # recoverable from the features, so the chain's second position
        # must reproduce its first on every input.
        registry = tiny_registry(2)
        ds = marks_dataset(registry, TWO_LABEL_ROWS)
        model = train_chain(ds, history="predicted")
        for value in (0.5, 2.2, 4.4, 4.6, 6.1, 9.5, 50.0):
            bits = predict(model, _flat_marks_input(value)).bits
            assert bits[1] == bits[0]

    def test_real_history_requires_gold(self):
        registry = tiny_registry(2)
        ds = marks_dataset(registry, TWO_LABEL_ROWS)
        model = train_chain(ds, history="real")
        x = _flat_marks_input(3.0)
        with pytest.raises(ValidationError, match="gold"):
            predict_chain(model, x)
        gold = LabelVector((1, 1))
        assert len(predict_chain(model, x, gold)) == 2

    def test_predicted_history_rejects_gold(self):
        registry = tiny_registry(2)
        ds = marks_dataset(registry, TWO_LABEL_ROWS)
        model = train_chain(ds, history="predicted")
        with pytest.raises(ValidationError):
            predict_chain(model, _flat_marks_input(3.0), LabelVector((1, 1)))

    def test_gold_length_checked(self):
        registry = tiny_registry(2)
        ds = marks_dataset(registry, TWO_LABEL_ROWS)
        model = train_chain(ds, history="real")
        with pytest.raises(ValidationError):
            predict_chain(model, _flat_marks_input(3.0), LabelVector((1, 1, 0)))

    def test_later_gold_bits_cannot_affect_earlier_positions(self):
        registry = tiny_registry(3)
        rows = [
            (1.0, [1, 2, 3]),
            (2.0, [1, 2, 3]),
            (3.0, [1]),
            (6.0, [2]),
            (8.0, []),
            (9.0, [3]),
        ]
        ds = marks_dataset(registry, rows)
        model = train_chain(ds, history="real")
        x = _flat_marks_input(4.2)
        base = predict_chain(model, x, LabelVector((1, 1, 0))).bits
        flipped = predict_chain(model, x, LabelVector((1, 1, 1))).bits
        assert base[:2] == flipped[:2]

    def test_custom_order_round_trip(self):
        registry = tiny_registry(3)
        rows = [(1.0, [1, 2]), (2.0, [3]), (8.0, []), (9.0, [1])]
        ds = marks_dataset(registry, rows)
        model = train_chain(ds, order=(2, 0, 1))
        assert isinstance(model.payload, ChainPayload)
        assert model.payload.order == (2, 0, 1)
        assert len(predict(model, _flat_marks_input(5.0))) == 3

    def test_invalid_order_rejected(self):
        registry = tiny_registry(3)
        ds = marks_dataset(registry, [(1.0, [1]), (9.0, [])])
        with pytest.raises(ValidationError):
            train_chain(ds, order=(0, 1))
        with pytest.raises(ValidationError):
            train_chain(ds, order=(0, 1, 1))

    def test_invalid_history_rejected(self):
        registry = tiny_registry(2)
        ds = marks_dataset(registry, TWO_LABEL_ROWS)
        with pytest.raises(ValidationError):
            train_chain(ds, history="oracle")


class TestMajority:
    def test_per_label_majority_bit(self):
        registry = tiny_registry(1)
        rows = [(float(i), [1]) for i in range(7)] + [
            (float(10 + i), []) for i in range(3)
        ]
        model = train_majority(marks_dataset(registry, rows))
        assert model.payload.bits == (1,)

    def test_exact_tie_clears_bit(self):
        registry = tiny_registry(1)
        rows = [(float(i), [1]) for i in range(5)] + [
            (float(10 + i), []) for i in range(5)
        ]
        model = train_majority(marks_dataset(registry, rows))
        assert model.payload.bits == (0,)

    def test_all_clear_stays_clear(self):
        registry = tiny_registry(2)
        rows = [(float(i), []) for i in range(4)]
        model = train_majority(marks_dataset(registry, rows))
        assert model.payload.bits == (0, 0)

    def test_prediction_ignores_input(self):
        registry = tiny_registry(2)
        model = train_majority(marks_dataset(registry, TWO_LABEL_ROWS))
        outputs = {
            predict(model, _flat_marks_input(v)).bits for v in (0.0, 5.0, 99.0)
        }
        assert len(outputs) == 1

    def test_labelset_mode_takes_modal_set(self):
        registry = tiny_registry(3)
        rows = [
            (1.0, [1, 2]),
            (2.0, [1, 2]),
            (3.0, [3]),
            (4.0, [1]),
        ]
        model = train_majority(marks_dataset(registry, rows), mode="labelset")
        assert isinstance(model.payload, MajorityPayload)
        assert model.payload.bits == (1, 1, 0)

    def test_labelset_mode_tie_takes_first_appearance(self):
        registry = tiny_registry(3)
        rows = [(1.0, [3]), (2.0, [1, 2]), (3.0, [3]), (4.0, [1, 2])]
        model = train_majority(marks_dataset(registry, rows), mode="labelset")
        assert model.payload.bits == (0, 0, 1)

    def test_unknown_mode_rejected(self, ds37):
        with pytest.raises(ValidationError):
            train_majority(ds37, mode="median")


class TestLabelPowerset:
    def test_transform_first_appearance_classes(self):
        registry = tiny_registry(2)
        # Observed sets in order: {1, 2}, {1}, {1, 2).
        rows = [(1.0, [1, 2]), (2.0, [1]), (3.0, [1, 2])]
        classes, table = lp_transform(marks_dataset(registry, rows))
        assert classes == [0, 1, 0]
        assert table == (frozenset({0, 1}), frozenset({0}))

    def test_transform_single_observed_set(self):
        registry = tiny_registry(2)
        rows = [(1.0, [1]), (2.0, [1]), (3.0, [1])]
        classes, table = lp_transform(marks_dataset(registry, rows))
        assert classes == [0, 0, 0]
        assert table == (frozenset({0}),)

    def test_transform_all_distinct_degenerates(self, registry):
        # 37 records with 37 distinct label sets collapse to 37 classes.
        rows = [(float(i), [1 + i]) for i in range(29)]
        rows += [(float(29 + i), [1, 2 + i]) for i in range(8)]
        sets = [frozenset(labels) for _, labels in rows]
        assert len(set(sets)) == 37
        classes, table = lp_transform(marks_dataset(registry, rows))
        assert len(table) == 37
        assert sorted(set(classes)) == list(range(37))

    def test_predictions_closed_over_observed_sets(self, registry):
        rows = [
            (float(i), [1, 2] if i < 5 else ([5] if i < 10 else []))
            for i in range(15)
        ]
        ds = marks_dataset(registry, rows)
        model = train_lp(ds)
        observed = {frozenset(r.expert_labels) for r in ds.records}
        rng = np.random.default_rng(0)
        for value in rng.uniform(0, 20, size=60):
            vector = predict(model, _flat_marks_input(float(round(value, 1))))
            ids = frozenset(
                registry.template_at(j).id for j, b in enumerate(vector.bits) if b
            )
            assert ids in observed

    def test_single_class_predicts_constantly(self):
        registry = tiny_registry(3)
        rows = [(1.0, [2, 3]), (5.0, [2, 3]), (9.0, [2, 3])]
        model = train_lp(marks_dataset(registry, rows))
        assert isinstance(model.payload, LpPayload)
        for value in (0.0, 4.0, 50.0):
            assert predict(model, _flat_marks_input(value)).bits == (0, 1, 1)


class TestSampleLabelsets:
    def test_k_equals_l_clamps_to_single_subset(self):
        with pytest.warns(LabelCoverageWarning, match="clamp"):
            subsets = sample_labelsets(5, k=5, m=3, seed=0)
        assert subsets == [(0, 1, 2, 3, 4)]

    def test_all_pairs_of_three(self):
        subsets = sample_labelsets(3, k=2, m=3, seed=11)
        assert sorted(subsets) == [(0, 1), (0, 2), (1, 2)]

    @pytest.mark.parametrize("seed", range(5))
    def test_default_scale_sampling(self, seed):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            try:
                subsets = sample_labelsets(29, k=3, m=58, seed=seed)
                covered = set().union(*subsets)
                assert covered == set(range(29))
            except LabelCoverageWarning:
                subsets = sample_labelsets(29, k=3, m=58, seed=seed)
        assert len(subsets) == 58
        assert len(set(subsets)) == 58
        for subset in subsets:
            assert len(subset) == 3
            assert subset == tuple(sorted(subset))

    def test_uncovered_labels_warn(self):
        with pytest.warns(LabelCoverageWarning):
            subsets = sample_labelsets(5, k=1, m=2, seed=0)
        assert len(subsets) == 2

    def test_determinism(self):
        assert sample_labelsets(29, 3, 58, seed=4) == sample_labelsets(
            29, 3, 58, seed=4
        )

    def test_invalid_arguments(self):
        with pytest.raises(ValidationError):
            sample_labelsets(3, k=4, m=1, seed=0)
        with pytest.raises(ValidationError):
            sample_labelsets(3, k=0, m=1, seed=0)
        with pytest.raises(ValidationError):
            sample_labelsets(3, k=2, m=0, seed=0)


def _stub_member(n_features: int, labelset: frozenset[int], scope: tuple[int, ...]):
    tree = DecisionTree(
        root=Leaf(label=0, distribution=((0, 1),)),
        n_features=n_features,
        config=TreeConfig(),
    )
    return LpPayload(tree=tree, classes=(labelset,), scope=scope)


def _stub_rakel(members, n_labels: int, threshold: float = 0.5):
    n_features = members[0].tree.n_features
    return TrainedModel(
        strategy="rakel",
        registry_version="stub",
        n_labels=n_labels,
        weeks=4,
        feature_mode="both",
        tree_config=TreeConfig(),
        payload=RakelPayload(
            members=tuple(members),
            config=RakelConfig(k=1, m=len(members), threshold=threshold, seed=0),
        ),
    )


class TestRakelVoting:
    N_FEATURES = 9 * (5 + 4)

    def _x(self):
        return np.zeros(self.N_FEATURES)

    def test_two_of_three_votes_set_bit(self):
        members = [
            _stub_member(self.N_FEATURES, frozenset({0}), (0,)),
            _stub_member(self.N_FEATURES, frozenset({0}), (0,)),
            _stub_member(self.N_FEATURES, frozenset(), (0,)),
        ]
        model = _stub_rakel(members, n_labels=1)
        assert predict_rakel(model, self._x()).bits == (1,)

    def test_exact_threshold_clears_bit(self):
        members = [
            _stub_member(self.N_FEATURES, frozenset({0}), (0,)),
            _stub_member(self.N_FEATURES, frozenset(), (0,)),
        ]
        model = _stub_rakel(members, n_labels=1, threshold=0.5)
        assert predict_rakel(model, self._x()).bits == (0,)

    def test_uncovered_label_stays_clear(self):
        members = [_stub_member(self.N_FEATURES, frozenset({0}), (0,))]
        model = _stub_rakel(members, n_labels=2)
        vector, votes = predict_votes(model, self._x())
        assert vector.bits == (1, 0)
        assert votes == (1.0, 0.0)

    def test_zero_threshold_still_strict(self):
        members = [_stub_member(self.N_FEATURES, frozenset(), (0,))]
        model = _stub_rakel(members, n_labels=1, threshold=0.0)
        assert predict_rakel(model, self._x()).bits == (0,)


class TestRakelTraining:
    def test_default_m_is_twice_label_count(self, ds37):
        model = train_rakel(ds37, RakelConfig(k=3, seed=0))
        assert isinstance(model.payload, RakelPayload)
        assert len(model.payload.members) == 58

    def test_member_scopes_have_size_k(self, ds37):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LabelCoverageWarning)
            model = train_rakel(ds37, RakelConfig(k=3, m=20, seed=1))
        for member in model.payload.members:
            assert len(member.scope) == 3

    def test_member_class_counts_bounded(self, ds37):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LabelCoverageWarning)
            model = train_rakel(ds37, RakelConfig(k=3, m=20, seed=1))
        for member in model.payload.members:
            assert len(member.classes) <= min(len(ds37), 2**3)

    def test_k_equals_l_single_member_matches_lp(self, ds37, ds100):
        lp = train_lp(ds37)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LabelCoverageWarning)
            rakel = train_rakel(ds37, RakelConfig(k=29, m=1, threshold=0.5, seed=0))
        for record in ds100.records:
            x = extract_features(record, "both")
            assert predict(rakel, x).bits == predict(lp, x).bits

    def test_parallel_training_identical(self, ds37):
        cfg = RakelConfig(k=3, m=16, seed=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LabelCoverageWarning)
            a = train_rakel(ds37, cfg, n_jobs=1)
            b = train_rakel(ds37, cfg, n_jobs=3)
        assert len(a.payload.members) == len(b.payload.members)
        for ma, mb in zip(a.payload.members, b.payload.members):
            assert ma.scope == mb.scope
            assert ma.classes == mb.classes
            assert tree_to_dict(ma.tree) == tree_to_dict(mb.tree)

    def test_votes_are_member_means(self, ds37):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LabelCoverageWarning)
            model = train_rakel(ds37, RakelConfig(k=3, m=12, seed=3))
        record = ds37.records[0]
        x = extract_features(record, "both")
        vector, votes = predict_votes(model, x)
        row = np.asarray(x.values)
        for j in range(model.n_labels):
            covering = [m for m in model.payload.members if j in m.scope]
            if not covering:
                assert votes[j] == 0.0
                continue
            hits = [
                1.0 if j in m.classes[predict_tree(m.tree, row)] else 0.0
                for m in covering
            ]
            assert votes[j] == pytest.approx(sum(hits) / len(hits))
            assert vector.bits[j] == (1 if votes[j] > 0.5 else 0)


class TestConfigAndDispatch:
    def test_rakel_config_validation(self):
        with pytest.raises(ValidationError):
            RakelConfig(k=0)
        with pytest.raises(ValidationError):
            RakelConfig(m=0)
        with pytest.raises(ValidationError):
            RakelConfig(threshold=1.5)
        with pytest.raises(ValidationError):
            RakelConfig(threshold=-0.1)

    def test_gold_rejected_outside_real_history(self, ds37):
        model = train_majority(ds37)
        record = ds37.records[0]
        x = extract_features(record, "both")
        gold = labelset_to_vector(record.expert_labels, ds37.registry)
        with pytest.raises(ValidationError):
            predict(model, x, gold)

    def test_predict_record_chain_real_needs_registry(self, ds37):
        model = train_chain(ds37, history="real")
        with pytest.raises(ValidationError):
            predict_record(model, ds37.records[0])

    def test_predict_record_chain_real_needs_labels(self, ds37, registry):
        model = train_chain(ds37, history="real")
        with pytest.raises(ValidationError):
            predict_record(model, make_record(weeks=10), registry)

    def test_predict_record_matches_predict(self, ds37):
        model = train_binary_relevance(ds37)
        record = ds37.records[5]
        direct = predict(model, extract_features(record, "both"))
        assert predict_record(model, record).bits == direct.bits
