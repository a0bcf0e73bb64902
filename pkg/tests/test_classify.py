"""Classifier, ensemble and grid-search contracts."""

import numpy as np
import pytest
import torch

from hotspotter.classify import (
    EnsembleModel,
    blend_probs,
    classify,
    classifier_from_spec,
    ensemble_predict,
    finetune,
    grid_search_weight,
    load_classifier,
    predict_probs,
    save_classifier,
    write_predictions,
)
from hotspotter.errors import ValidationError
from hotspotter.metrics import read_predictions
from hotspotter.networks import EncoderSpec

from toys import ConstantProbClassifier, channel_image, image_for_probs, mean_classifier


def test_classify_argmax_and_probability_closure():
    clf = ConstantProbClassifier(0.9, 0.1)
    img = channel_image(0.5, 0.5)
    label, probs = classify(clf, img)
    assert label == 0
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)
    assert probs[0] == pytest.approx(0.9, abs=1e-6)


def test_classify_tie_breaks_toward_normal():
    clf = ConstantProbClassifier(0.5, 0.5)
    label, probs = classify(clf, channel_image(0.3, 0.7))
    assert label == 0
    assert probs[0] == pytest.approx(0.5, abs=1e-6)


def test_classify_repeated_calls_identical():
    clf = mean_classifier()
    img = channel_image(0.4, 0.6)
    first = classify(clf, img)
    second = classify(clf, img)
    assert first[0] == second[0]
    assert np.array_equal(first[1], second[1])


def test_ensemble_weight_one_equals_first_member():
    c1 = ConstantProbClassifier(0.8, 0.2)
    c2 = ConstantProbClassifier(0.3, 0.7)
    img = channel_image(0.5, 0.5)
    m = EnsembleModel(c1, c2, w=1.0)
    label, probs = ensemble_predict(m, img)
    assert np.allclose(probs, predict_probs(c1, [img])[0], atol=1e-7)
    assert label == 0


def test_ensemble_half_weight_tie_goes_normal():
    m = EnsembleModel(ConstantProbClassifier(0.8, 0.2), ConstantProbClassifier(0.2, 0.8), w=0.5)
    label, probs = ensemble_predict(m, channel_image(0.5, 0.5))
    assert probs[0] == pytest.approx(0.5, abs=1e-6)
    assert label == 0


def test_ensemble_derived_case():
    # 0.7*(0.6,0.4) + 0.3*(0.1,0.9) = (0.45, 0.55) -> anomalous
    m = EnsembleModel(ConstantProbClassifier(0.6, 0.4), ConstantProbClassifier(0.1, 0.9), w=0.7)
    label, probs = ensemble_predict(m, channel_image(0.5, 0.5))
    assert probs[0] == pytest.approx(0.45, abs=1e-6)
    assert probs[1] == pytest.approx(0.55, abs=1e-6)
    assert label == 1


def test_ensemble_weight_validated():
    c = ConstantProbClassifier(0.5, 0.5)
    with pytest.raises(ValidationError):
        EnsembleModel(c, c, w=1.2)


def test_blend_convexity_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p1 = rng.dirichlet((1, 1))
        p2 = rng.dirichlet((1, 1))
        w = rng.uniform()
        blended = blend_probs(p1, p2, w)
        assert blended.sum() == pytest.approx(1.0, abs=1e-9)
        for cls in range(2):
            lo, hi = sorted((p1[cls], p2[cls]))
            assert lo - 1e-12 <= blended[cls] <= hi + 1e-12


def test_grid_search_dominant_member():
    # member 1 barely right everywhere, member 2 confidently wrong: the
    # blend is fully correct only at w = 1.0
    val = [image_for_probs(0.502, 0.002, scale=20.0, label=1, img_id=f"p{i}") for i in range(3)]
    val += [image_for_probs(0.498, 0.998, scale=20.0, label=0, img_id=f"n{i}") for i in range(3)]
    c1 = mean_classifier(scale=20.0, channels=(0, 1))
    c2 = mean_classifier(scale=20.0, channels=(0, 2))
    assert grid_search_weight(c1, c2, val) == 1.0


def test_grid_search_identical_members_returns_half():
    val = [image_for_probs(0.9, 0.9, label=1, img_id="a"),
           image_for_probs(0.2, 0.2, label=0, img_id="b")]
    c1 = mean_classifier(channels=(0, 1))
    w = grid_search_weight(c1, mean_classifier(channels=(0, 1)), val)
    assert w == 0.5


def test_grid_search_interval_case():
    """Only w in [0.30, 0.40] classifies every sample; the grid point
    nearest 0.5 among maximizers is 0.40 (exhaustive oracle agrees)."""
    # label-1 sample correct iff w > 0.295; label-1 sample correct iff w < 0.405
    samples = [
        image_for_probs(0.641, 0.441, label=1, img_id="lo"),
        image_for_probs(0.381, 0.581, label=1, img_id="hi"),
    ]
    samples += [image_for_probs(0.2, 0.2, label=0, img_id=f"f{i}") for i in range(8)]
    c1 = mean_classifier(channels=(0, 1))
    c2 = mean_classifier(channels=(0, 2))

    p1 = predict_probs(c1, samples)
    p2 = predict_probs(c2, samples)
    labels = np.array([s.label for s in samples])
    best_acc, maximizers = -1.0, []
    for w in np.round(np.arange(0, 101) / 100, 2):
        blended = w * p1 + (1 - w) * p2
        acc = float(np.mean((blended[:, 1] > blended[:, 0]).astype(int) == labels))
        if acc > best_acc:
            best_acc, maximizers = acc, [float(w)]
        elif acc == best_acc:
            maximizers.append(float(w))
    assert maximizers == [round(0.30 + 0.01 * i, 2) for i in range(11)]

    assert grid_search_weight(c1, c2, samples) == 0.40


def test_grid_search_validation():
    c = mean_classifier()
    with pytest.raises(ValidationError):
        grid_search_weight(c, c, [])
    single = [image_for_probs(0.9, 0.9, label=1, img_id="only")]
    with pytest.raises(ValidationError):
        grid_search_weight(c, c, single)


# -- fine-tuning ---------------------------------------------------------------


def separable_toy_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    data = []
    for i in range(n):
        label = i % 2
        jitter = rng.uniform(-0.05, 0.05)
        hot = 0.75 + jitter
        cold = 0.25 + jitter
        u0, u1 = (cold, hot) if label else (hot, cold)
        data.append(channel_image(u0, u1, 0.5, img_id=f"t{i}", label=label))
    return data


def test_finetune_separable_toy_reaches_perfect_validation():
    clf = mean_classifier(scale=1.0)
    result = finetune(clf, separable_toy_data(), epochs=50, lr=0.05, batch_size=8, seed=0)
    assert max(h.val_accuracy for h in result.history) == 1.0


def test_finetune_zero_epochs_keeps_weights():
    clf = mean_classifier()
    before = {k: v.clone() for k, v in clf.state_dict().items()}
    result = finetune(clf, separable_toy_data(), epochs=0, seed=1)
    for key, value in clf.state_dict().items():
        assert torch.equal(before[key], value)
    assert len(result.history) == 1
    assert 0.0 <= result.history[0].val_accuracy <= 1.0


def test_finetune_single_class_rejected():
    data = [channel_image(0.2, 0.8, img_id=f"x{i}", label=1) for i in range(10)]
    with pytest.raises(ValidationError):
        finetune(mean_classifier(), data, epochs=1, seed=0)


def test_finetune_requires_labels():
    data = [channel_image(0.2, 0.8, img_id="u")]
    with pytest.raises(ValidationError):
        finetune(mean_classifier(), data, epochs=1, seed=0)


def test_classifier_archive_round_trip(tmp_path):
    clf = classifier_from_spec(EncoderSpec("tiny", 64), seed=3)
    path = save_classifier(tmp_path / "clf.pt", clf, EncoderSpec("tiny", 64))
    loaded = load_classifier(path)
    for a, b in zip(clf.state_dict().values(), loaded.state_dict().values()):
        assert torch.equal(a, b)
    img = channel_image(0.4, 0.6)
    # same weights, same prediction
    assert classify(clf, img)[0] == classify(loaded, img)[0]


def test_predictions_file_round_trip(tmp_path):
    rows = [("a", 0, 0.75, 0.25), ("b", 1, 0.1, 0.9)]
    path = write_predictions(tmp_path / "predictions.csv", rows)
    back = read_predictions(path)
    assert back == [("a", 0, 0.75, 0.25), ("b", 1, 0.1, 0.9)]
