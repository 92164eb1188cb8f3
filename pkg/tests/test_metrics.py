import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acorl.errors import ContractViolation
from acorl.metrics import (
    AttributionMap,
    class_logit,
    complementarity_score,
    cosine_scores,
    cosine_to,
    eer,
    integrated_gradients,
    linear_cka,
    read_attributions,
    top1_accuracy,
    write_attributions,
)
from acorl.nn import Model, ModelSpec, build_model
from acorl.rng import make_rng, normal, uniform


def brute_force_eer(scores, labels):
    """Independent O(N^2) sweep: every unique score and every midpoint between neighbours."""
    scores = [float(s) for s in scores]
    labels = [bool(v) for v in labels]
    uniq = sorted(set(scores))
    cands = sorted(uniq + [(a + b) / 2 for a, b in zip(uniq, uniq[1:])])
    n_gen = sum(labels)
    n_imp = len(labels) - n_gen
    best = None
    for t in cands:
        far = sum(1 for s, g in zip(scores, labels) if not g and s >= t) / n_imp
        frr = sum(1 for s, g in zip(scores, labels) if g and s < t) / n_gen
        gap = abs(far - frr)
        if best is None or gap < best[0]:
            best = (gap, (far + frr) / 2, t)
    return best[1], best[2]


def test_top1_examples():
    assert top1_accuracy(np.eye(3), [0, 1, 2]) == 1.0
    assert top1_accuracy(np.array([[1.0, 1.0]]), [0]) == 1.0
    assert top1_accuracy(np.array([[1.0, 1.0]]), [1]) == 0.0


def test_top1_random_is_chance():
    rng = make_rng(0)
    logits = normal(rng, (10000, 4))
    labels = np.floor(uniform(rng, 10000) * 4).astype(int)
    assert abs(top1_accuracy(logits, labels) - 0.25) <= 0.02


def test_eer_examples():
    assert eer([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])[0] == 0.0
    assert eer([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])[0] == 0.5
    with pytest.raises(ContractViolation):
        eer([0.1, 0.2], [1, 1])


def test_eer_matches_brute_force_oracle():
    rng = make_rng(17)
    for _ in range(500):
        n = 2 + int(rng.random() * 11)
        # coarse grid makes ties common
        scores = np.floor(uniform(rng, n) * 6) / 5 if rng.random() < 0.5 else uniform(rng, n)
        labels = np.zeros(n, dtype=int)
        labels[: 1 + int(rng.random() * (n - 1))] = 1
        labels = labels[np.argsort(rng.random(n))]
        assert eer(scores, labels) == brute_force_eer(scores, labels)


@settings(max_examples=200)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=40), st.data())
def test_eer_invariant_under_increasing_maps(scores, data):
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
    if len(set(labels)) < 2:
        labels[0], labels[-1] = 0, 1
    s = np.array(scores)
    if len(np.unique(2 * s + 1)) != len(np.unique(s)) or len(np.unique(np.tanh(s))) != len(np.unique(s)):
        return  # the map merged two floats, so it is not strictly increasing in float64
    base = eer(s, labels)[0]
    assert eer(2 * s + 1, labels)[0] == base
    assert eer(np.tanh(s), labels)[0] == base


def test_cosine_scores():
    emb = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(cosine_scores(emb, [0, 0], [1, 2]), [1.0, 0.0])


def linear_model(w, b=0.0):
    spec = ModelSpec(len(w), (), "classifier", 1)
    return Model(spec, {"head.weight": np.array(w, dtype=float).reshape(-1, 1), "head.bias": np.array([b])})


@pytest.mark.parametrize("steps", [1, 3, 64])
def test_ig_is_exact_for_linear_models(steps):
    w = np.array([0.5, -2.0, 3.25])
    x = np.array([1.5, 0.25, -1.0])
    m = integrated_gradients(linear_model(w, 0.7), class_logit(0), x, np.zeros(3), steps)
    np.testing.assert_allclose(m.values, w * x, rtol=0, atol=1e-12)
    assert m.completeness_gap <= 1e-12


def test_ig_zero_path():
    model = build_model(ModelSpec(4, (5,), "classifier", 2), 0)
    x = np.array([0.1, 0.2, 0.3, 0.4])
    assert not integrated_gradients(model, class_logit(1), x, x, 16).values.any()


def test_ig_completeness_gap_shrinks_with_steps():
    rng = make_rng(21)
    model = build_model(ModelSpec(6, (8, 8), "classifier", 3), 4)
    for _ in range(5):
        x, x0 = normal(rng, 6) * 2, normal(rng, 6) * 0.1
        coarse = integrated_gradients(model, class_logit(0), x, x0, 8)
        fine = integrated_gradients(model, class_logit(0), x, x0, 32768)
        assert fine.completeness_gap < coarse.completeness_gap
        assert fine.completeness_gap < 1e-3 * abs(fine.delta)


def test_ig_cosine_selector_and_shape_check():
    rng = make_rng(5)
    model = build_model(ModelSpec(4, (5,), "embedding", 2), 1)
    x, x0 = uniform(rng, 4, 0.5, 1.5), uniform(rng, 4, 0.5, 1.5)
    m = integrated_gradients(model, cosine_to(model.params["head.weight"][0]), x, x0, 32768)
    assert m.completeness_gap < 1e-3 * abs(m.delta)
    with pytest.raises(ContractViolation):
        integrated_gradients(model, class_logit(0), np.ones(4), np.zeros(3), 8)
    with pytest.raises(ContractViolation):
        integrated_gradients(model, class_logit(0), np.ones(4), np.zeros(4), 0)


def amap(values, sample=0):
    return AttributionMap(np.asarray(values, dtype=float), "m", sample, "mean", 8, 0.0, 0.0)


def test_complementarity_examples():
    a = [amap([1.0, -2.0, 0.5], 0), amap([0.0, 1.0, 1.0], 1)]
    assert complementarity_score(a, a) == (pytest.approx(1.0, abs=1e-15), 0)
    disjoint_a = [amap([1.0, 2.0, 0.0, 0.0])]
    disjoint_b = [amap([0.0, 0.0, 3.0, -1.0])]
    assert complementarity_score(disjoint_a, disjoint_b) == (0.0, 0)


def test_complementarity_symmetric_and_skips_zero_maps():
    rng = make_rng(2)
    a = [amap(normal(rng, 5), i) for i in range(4)] + [amap(np.zeros(5), 4)]
    b = [amap(normal(rng, 5), i) for i in range(5)]
    s_ab, skipped = complementarity_score(a, b)
    assert skipped == 1
    assert s_ab == complementarity_score(b, a)[0]
    with pytest.raises(ContractViolation):
        complementarity_score(a[:2], b[:3])


def test_attribution_csv_roundtrip(tmp_path):
    maps = [AttributionMap(np.array([0.1, -0.2 / 3]), "A", 7, "mean", 8, 1e-5, 0.3)]
    write_attributions(tmp_path / "a.csv", maps)
    text = (tmp_path / "a.csv").read_text()
    assert text.splitlines()[0] == "sample_id,model_id,feature_0,feature_1,completeness_gap"
    back = read_attributions(tmp_path / "a.csv")
    assert back[0].values.tobytes() == maps[0].values.tobytes() and back[0].sample_id == 7


def test_linear_cka():
    rng = make_rng(0)
    x = normal(rng, (60, 4))
    q, _ = np.linalg.qr(normal(rng, (4, 4)))
    assert linear_cka(x, 2.5 * x @ q) == pytest.approx(1.0, abs=1e-12)
    assert linear_cka(x, normal(rng, (60, 3))) < 0.3
