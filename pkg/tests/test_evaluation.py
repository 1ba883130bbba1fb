from fractions import Fraction

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from gazeaffect.errors import ValidationError
from gazeaffect.evaluation import build_report, confusion, macro_f1, per_class_f1, scores, validate_report

from oracles import f1_from_lists

HAND = np.array([[8, 2, 0], [1, 7, 2], [0, 3, 7]])


def test_perfect_predictions_are_diagonal():
    y = [0, 0, 1, 2, 2, 2]
    cm = confusion(y, y)
    assert cm.tolist() == [[2, 0, 0], [0, 1, 0], [0, 0, 3]]
    assert per_class_f1(cm)[0].tolist() == [1.0, 1.0, 1.0]
    assert macro_f1(cm) == 1.0


def test_empty_input():
    cm = confusion([], [])
    assert cm.tolist() == [[0] * 3] * 3
    f1, degenerate = per_class_f1(cm)
    assert f1.tolist() == [0, 0, 0] and degenerate.all()
    assert scores([], [])["accuracy"] == 0.0


def test_length_mismatch():
    with pytest.raises(ValidationError):
        confusion([0, 1], [0])


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), max_size=80))
def test_row_sums_are_class_counts(pairs):
    t = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    cm = confusion(t, p)
    assert cm.sum(axis=1).tolist() == [t.count(c) for c in range(3)]
    assert cm.sum(axis=0).tolist() == [p.count(c) for c in range(3)]


def test_never_predicted_class_scores_zero():
    f1, degenerate = per_class_f1(confusion([0, 1, 2, 2], [0, 1, 1, 1]))
    assert f1[2] == 0.0 and degenerate.tolist() == [False, False, True]


def test_hand_matrix():
    f1, _ = per_class_f1(HAND)
    # correctly rounded rationals: 2TP / (row + column)
    assert f1.tolist() == [float(Fraction(16, 19)), float(Fraction(7, 11)), float(Fraction(14, 19))]
    assert f1[0] == pytest.approx(0.842, abs=5e-4)
    assert macro_f1(HAND) == pytest.approx((12.8 / 15.2 + 14 / 22 + 14 / 19) / 3, abs=1e-15)


def test_macro_is_unweighted_mean():
    # class F1s of 0.6, 0.3 and 0 average to 0.3 whatever the class sizes
    cm = np.array([[3, 0, 2], [0, 3, 0], [2, 14, 0]])
    f1, _ = per_class_f1(cm)
    assert f1.tolist() == pytest.approx([0.6, 0.3, 0.0], abs=1e-15)
    assert macro_f1(cm) == pytest.approx(0.3, abs=1e-15)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60), st.randoms())
def test_permutation_invariant(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    a = scores(*zip(*pairs))
    b = scores(*zip(*shuffled))
    assert a == b


def test_against_list_oracle():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 120))
        t = rng.integers(0, 3, n).tolist()
        p = rng.integers(0, 3, n).tolist()
        got = per_class_f1(confusion(t, p))[0]
        want = f1_from_lists(t, p)
        assert np.abs(got - want).max() <= 1e-12
        assert abs(macro_f1(confusion(t, p)) - np.mean(want)) <= 1e-12


def _report(**over):
    kw = dict(target="felt_arousal", split="test", true_labels=[0, 1, 2, 2], predicted=[0, 1, 1, 2],
              agreement={"felt_arousal": 61.5}, checkpoint_sha256="ab" * 32,
              model_config={"hidden": 32}, train_config={"seed": 1}, feature_set="eye-only")
    kw.update(over)
    return build_report(**kw)


def test_report_validates():
    rep = _report()
    validate_report(rep)
    assert rep["n_examples"] == 4
    assert rep["per_class_f1"]["Low"] == 1.0
    assert rep["degenerate_classes"] == []


def test_report_with_missing_class_validates():
    rep = _report(true_labels=[0, 0], predicted=[0, 0])
    validate_report(rep)
    assert rep["degenerate_classes"] == ["Medium", "High"]


def test_schema_rejects_bad_reports():
    rep = _report()
    rep["macro_f1"] = 1.5
    with pytest.raises(jsonschema.ValidationError):
        validate_report(rep)
    rep = _report(checkpoint_sha256="not-a-hash")
    with pytest.raises(jsonschema.ValidationError):
        validate_report(rep)
    rep = _report()
    del rep["provenance"]
    with pytest.raises(jsonschema.ValidationError):
        validate_report(rep)
