import math

import pytest

import bellamy


def test_binarizer_round_trip_and_capacity():
    bits = bellamy.binarize(5)
    assert len(bits) == 39
    assert bits[-3:] == [1.0, 0.0, 1.0]
    assert bellamy.debinarize(bits) == 5
    assert bellamy.binarizer_capacity() == 2**39 - 1
    with pytest.raises(bellamy.BellamyError, match="capacity"):
        bellamy.binarize(2**39)


def test_encodings():
    v = bellamy.encode_property("m5.xlarge")
    assert len(v) == 40 and v[0] == 1.0
    assert math.isclose(math.sqrt(sum(x * x for x in v[1:])), 1.0, rel_tol=1e-12)
    assert bellamy.encode_property(16384)[0] == 0.0
    assert bellamy.hash_text("!!!") == [0.0] * 39
    assert bellamy.fnv1a64("") == 0xCBF29CE484222325


def test_nnls_and_ernest():
    x, residual = bellamy.nnls([[1.0, 0.0], [0.0, 1.0]], [1.0, -1.0])
    assert x == [1.0, 0.0]
    assert math.isclose(residual, 1.0)
    points = [(s, 10 + 100 / s + 2 * s) for s in (2, 4, 6, 8, 10, 12)]
    theta = bellamy.ernest_fit(points)
    assert all(t >= 0 for t in theta)
    assert math.isclose(bellamy.ernest_predict(theta, 6), points[2][1], rel_tol=1e-6)


def test_bell_needs_three_scale_outs():
    with pytest.raises(bellamy.BellamyError, match="insufficient-data"):
        bellamy.bell_fit([(2, 10.0), (4, 8.0)])
    model = bellamy.bell_fit([(2, 10.0), (4, 8.0), (6, 7.0), (8, 6.5)])
    assert model.chosen in ("parametric", "nonparametric")
    assert model.predict(5) > 0


def test_model_round_trip(tmp_path):
    model = bellamy.Model.create(seed=3)
    runs = bellamy.synthetic_runs(2, seed=4)
    props = runs[0].properties
    before = model.predict(4, props)
    path = tmp_path / "m.bin"
    model.save(path)
    loaded = bellamy.Model.load(path)
    assert loaded.fingerprint == model.fingerprint
    assert loaded.predict(4, props) == before
    assert bellamy.Model.from_bytes(model.to_bytes()).predict(4, props) == before
    with pytest.raises(bellamy.BellamyError, match="corrupt"):
        bellamy.Model.from_bytes(b"garbage")


def test_pretrain_and_finetune_short():
    runs = bellamy.synthetic_runs(3, seed=5)
    target = runs[0].context
    history = [r for r in runs if r.context != target]
    model = bellamy.pretrain(history, samples=2, epochs=20, seed=1)
    samples = [r for r in runs if r.context == target][:2]
    tuned, report = bellamy.finetune(model, samples, max_epochs=30, seed=2)
    assert 0 < report["epochs_run"] <= 30
    assert report["stopping_reason"] in ("mae_threshold", "patience", "epoch_cap")
    assert len(report["mae_history"]) == report["epochs_run"] + 1
    assert math.isfinite(tuned.predict(6, samples[0].properties))
    with pytest.raises(bellamy.BellamyError, match="config"):
        bellamy.finetune(model, samples, reuse="sideways")


def test_schedule_and_ecdf():
    assert bellamy.lr_at(0) == pytest.approx(1e-2)
    assert bellamy.lr_at(100) == pytest.approx(1e-3)
    assert bellamy.ecdf([3, 1, 3]) == [(1, pytest.approx(1 / 3)), (3, 1.0)]
