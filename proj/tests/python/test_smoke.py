import numpy as np
import pytest

import weldwatch as ww


@pytest.fixture(scope="module")
def scenario():
    data = ww.default_scenario(5)
    labels = np.array(data["labels"])
    known = data["known"]
    mask = np.isin(labels, known)
    x = data["x"][mask]
    y = [known.index(label) for label in labels[mask]]
    model = ww.init_mlp([x.shape[1], 150, 100, 50, len(known)], 1)
    model, losses = ww.train(model, x, y, epochs=200, seed=2)
    model.class_labels = known
    return data, x, y, model, losses


def test_training_and_prediction(scenario):
    _, x, y, model, losses = scenario
    assert losses[-1] < losses[0]
    assert model.num_classes == 6
    proba = ww.predict_proba(model, x)
    assert proba.shape == (len(y), 6)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert np.mean(np.array(ww.predict(model, x)) == np.array(y)) > 0.95


def test_detector_flags_withheld_classes(scenario):
    data, x, y, model, _ = scenario
    bank = ww.fit_detector(model, x, y)
    assert bank.num_classes == 6
    assert max(bank.components) <= 10
    labels = np.array(data["labels"])
    withheld = data["x"][np.isin(labels, data["unknown"])]
    outcomes = [d["outcome"] for d in ww.detect(bank, model, withheld)]
    assert outcomes.count("unknown") / len(outcomes) >= 0.9
    restored = ww.DetectorBank.from_text(bank.to_text())
    again = [d["outcome"] for d in ww.detect(restored, model, withheld)]
    assert again == outcomes


def test_model_text_round_trip(scenario):
    model = scenario[3]
    assert ww.MlpModel.from_text(model.to_text()) == model
    with pytest.raises(ww.RestoreError):
        ww.MlpModel.from_text(model.to_text()[:100])


def test_frozen_training_and_expansion(scenario):
    _, x, y, model, _ = scenario
    grown = ww.expand_output(model, 1, 3)
    assert grown.num_classes == 7
    tuned, _ = ww.train(grown, x, y, epochs=3, frozen={0, 1})
    np.testing.assert_array_equal(tuned.weights[0], model.weights[0])
    np.testing.assert_array_equal(tuned.weights[1], model.weights[1])


def test_numeric_helpers():
    assert ww.cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(2 ** -0.5)
    assert ww.three_sigma_thresholds(np.array([[-2.0], [0.0], [2.0]]))[0] == pytest.approx(6.0)
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(12, 4))
    fit = ww.pca_fit(rows, 2)
    values = np.sort(np.linalg.eigvalsh(np.cov(rows, rowvar=False)))[::-1]
    np.testing.assert_allclose(fit["explained_variance"], values[:2], rtol=1e-10)
    blobs = np.vstack([rng.normal(c, 0.1, size=(20, 2)) for c in ([0, 0], [10, 0], [0, 10])])
    assignment, clusters = ww.birch_fit(blobs)
    assert len(clusters) == 3
    truth = [str(i // 20) for i in range(60)]
    assert ww.purity(assignment, truth) == 1.0


def test_errors_are_typed(scenario):
    model = scenario[3]
    with pytest.raises(ww.ShapeError):
        ww.predict(model, np.zeros((2, 3)))
    with pytest.raises(ww.ConfigError):
        ww.init_mlp([4], 1)
    with pytest.raises(ww.Error):
        ww.embed(model, np.zeros((1, 20)), layer=9)
