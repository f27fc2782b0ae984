"""End-to-end smoke checks for the Python bindings."""

import math

import numpy as np
import pytest

import flowlens as fl


def test_phantom_is_deterministic_and_normalized():
    params = fl.sample_phantom_params(32, 0.05, seed=5)
    img = fl.gen_healthy(params)
    again = fl.gen_healthy(params)
    assert img == again

    arr = img.numpy()
    assert arr.shape == (32, 32)
    brain = fl.brain_mask(img).numpy().astype(bool)
    inside = arr[brain]
    assert abs(inside.mean()) < 1e-9
    assert abs(inside.std() - 1.0) < 1e-9
    assert np.all(arr[~brain] == 0.0)


def test_grid_numpy_round_trip():
    arr = np.arange(12, dtype=float).reshape(3, 4)
    img = fl.Image2D(arr, spacing=2.0)
    assert img.width == 4 and img.height == 3 and img.spacing == 2.0
    np.testing.assert_array_equal(img.numpy(), arr)
    assert img.at(1, 2) == arr[2, 1]


def test_lesion_injection_marks_changed_pixels():
    params = fl.sample_phantom_params(32, 0.05, seed=7)
    healthy = fl.gen_healthy(params)
    inj = fl.inject_lesion(healthy, fl.LesionParams(), seed=3)
    mask = inj.mask.numpy().astype(bool)
    assert mask.any()
    diff = np.abs(inj.image.numpy() - healthy.numpy())
    assert diff[mask].min() > 0.0
    assert np.all(diff[~mask] <= diff[mask].min() + 1e-12)


def test_training_reduces_loss_and_reconstruction_runs():
    params = fl.sample_phantom_params(16, 0.05, seed=11)
    healthy = fl.gen_healthy(params)
    lesion = fl.LesionParams()
    lesion.radius_min, lesion.radius_max = 1.5, 2.5
    pairs = [
        fl.FlowPair(fl.inject_lesion(healthy, lesion, seed=k).image, healthy)
        for k in range(4)
    ]

    model = fl.FlowModel([16 * 16 + 8, 32, 16 * 16], time_pairs=4)
    model.randomize(seed=1)
    cfg = fl.TrainConfig()
    cfg.epochs = 40
    cfg.batch_size = 4
    cfg.seed = 2
    result = fl.train(model, pairs, cfg)
    assert result.history[-1] < result.history[0]

    recon = fl.reconstruct(result.model, pairs[0].x0)
    amap = fl.anomaly_map(pairs[0].x0, recon)
    assert amap.numpy().shape == (16, 16)
    assert amap.numpy().min() >= 0.0


def test_model_checkpoint_round_trip(tmp_path):
    model = fl.FlowModel([10, 6, 2], time_pairs=1)
    model.randomize(seed=9)
    path = str(tmp_path / "model.aflw")
    fl.save_model(path, model)
    loaded = fl.load_model(path)
    np.testing.assert_array_equal(loaded.params(), model.params())
    assert loaded.widths == [10, 6, 2]

    x = np.zeros(8)
    np.testing.assert_array_equal(loaded.forward(x, 0.5), model.forward(x, 0.5))


def test_grid_file_round_trip(tmp_path):
    arr = np.random.default_rng(3).random((5, 7))
    path = tmp_path / "map.agrd"
    fl.write_grid(path, fl.AnomalyMap(arr, spacing=1.5))
    back = fl.read_anomaly_map(path)
    assert isinstance(fl.read_grid(path), fl.AnomalyMap)
    np.testing.assert_array_equal(back.numpy(), arr)
    assert back.spacing == 1.5


def test_dice_and_surface_distances():
    a = np.zeros((8, 8), dtype=np.uint8)
    b = np.zeros((8, 8), dtype=np.uint8)
    a[2:4, 2:4] = 1
    b[2:4, 2:4] = 1
    assert fl.dice(fl.BinaryMask(a), fl.BinaryMask(b)) == 1.0

    b[:] = 0
    b[2:4, 3:5] = 1  # shifted one column
    d = fl.dice(fl.BinaryMask(a), fl.BinaryMask(b))
    assert d == pytest.approx(0.5)
    sd = fl.surface_distances(fl.BinaryMask(a), fl.BinaryMask(b))
    assert sd.hd95 > 0.0 and sd.asd > 0.0

    empty = fl.BinaryMask(np.zeros((8, 8), dtype=np.uint8))
    assert fl.surface_distances(empty, empty) is None


def test_calibration_pool_rule():
    scores = np.array([0.0, 0.0, 0.0, 4.0])
    assert fl.calibrate_threshold_pool(scores) == pytest.approx(1.0 + 3 * math.sqrt(3.0))


def test_froc_on_toy_components():
    comp = fl.Component([(3, 3)], confidence=0.9)
    stray = fl.Component([(10, 10)], confidence=0.4)
    subject = fl.FrocSubject([comp, stray], [fl.PointAnnotation(3.2, 2.8)])
    curve = fl.froc_curve([subject], n_images=1, tolerance=5.0)
    assert [(p.fppi, p.sensitivity) for p in curve.points] == [(0.0, 1.0), (1.0, 1.0)]
    assert fl.froc_score(curve, np.array([0.25, 0.5, 1.0, 1.5])) == 1.0


def test_wilcoxon_small_sample():
    res = fl.wilcoxon_signed_rank(np.array([1.0, 2.0, 3.0]), np.zeros(3))
    assert res.w == 0.0
    assert res.n_effective == 3
    assert res.p == pytest.approx(0.25)
    assert res.method == fl.WilcoxonMethod.Exact


def test_merge_raters_positions_and_names():
    a = [fl.PointAnnotation(10.0, 10.0, fl.AnnotationLabel.Lesion, "alice")]
    b = [fl.PointAnnotation(12.0, 13.0, fl.AnnotationLabel.Lesion, "bob")]
    merged = fl.merge_raters(a, b, radius=5.0)
    assert len(merged) == 1
    assert (merged[0].x, merged[0].y) == (11.0, 11.5)
    assert merged[0].rater == "alice+bob"


def test_dataset_and_detection_eval(tmp_path):
    dp = fl.DatasetParams()
    dp.n_subjects = 12
    dp.phantom_size = 16
    dp.seed = 4
    ds = fl.make_dataset(dp)
    assert len(ds.entries) == 12
    assert len(ds.split(fl.Split.Train)) == 9

    fl.write_dataset(tmp_path / "ds", ds, dp)
    stored = fl.read_dataset(tmp_path / "ds")
    assert len(stored.dataset.entries) == 12
    assert stored.params.phantom_size == 16

    test_entries = ds.split(fl.Split.Test)
    maps, annotations = [], []
    for entry in test_entries:
        arr = np.zeros((16, 16))
        for p in entry.subject.annotations:
            arr[int(round(p.y)), int(round(p.x))] = 1.0
        maps.append(fl.AnomalyMap(arr))
        annotations.append(list(entry.subject.annotations))
    if any(annotations):
        cfg = fl.DetectionConfig()
        cfg.binarize_thresholds = [0.5]
        rows = fl.evaluate_detection(maps, annotations, cfg, filters=[fl.LabelFilter.All])
        assert rows[0].froc == 1.0


def test_shape_errors_surface_as_exceptions():
    a = fl.Image2D(np.zeros((4, 4)))
    b = fl.Image2D(np.zeros((5, 5)))
    with pytest.raises(fl.ShapeError):
        fl.anomaly_map(a, b)
    with pytest.raises(fl.ParameterError):
        fl.FlowModel([4, 4], time_pairs=2)
