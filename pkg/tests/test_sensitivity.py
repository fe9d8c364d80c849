import logging

import numpy as np
import pytest

from hess import pipeline, sensitivity
from hess.sensitivity import (
    CalibrationError,
    CalibrationMeta,
    FingerprintMismatchError,
    HeadId,
    HessTable,
    SampleSkipped,
    calibrate,
    combine,
    fim_trace,
    normalize_layer,
    per_sample_head_grads,
)

META = CalibrationMeta(num_samples=3, seed=11, model_fingerprint="deadbeef" * 8)


def small_model(seed=0):
    return pipeline.ToyModel(n_layers=2, n_heads=2, d_model=8, d_head=4, seed=seed)


def small_scenes(n=3, base_seed=100):
    return [pipeline.generate_scene(base_seed + i, n_views=3, tokens_per_view=5,
                                    d_model=8) for i in range(n)]


def make_table(lam=0.5):
    cam = {HeadId(0, 0): 0.75, HeadId(0, 1): 0.25,
           HeadId(1, 0): 0.5, HeadId(1, 1): 0.5}
    pc = {HeadId(0, 0): 0.1, HeadId(0, 1): 0.9,
          HeadId(1, 0): 0.25, HeadId(1, 1): 0.75}
    return combine(cam, pc, lam, META)


# ---------------------------------------------------------------------------
# Fisher trace
# ---------------------------------------------------------------------------

def test_fim_trace_matches_explicit_matrix():
    rng = np.random.default_rng(0)
    grads = [rng.normal(size=12) for _ in range(30)]
    fim = np.zeros((12, 12))
    for g in grads:
        fim += np.outer(g, g)
    fim /= len(grads)
    assert abs(fim_trace(grads) - np.trace(fim)) < 1e-12


def test_fim_trace_matrix_gradients_flatten():
    gs = [np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros((2, 2))]
    assert fim_trace(gs) == pytest.approx((1 + 4 + 9 + 16) / 2)


def test_fim_trace_single_sample_is_squared_norm():
    g = np.array([3.0, 4.0])
    assert fim_trace([g]) == pytest.approx(25.0)


def test_fim_trace_rejects_empty():
    with pytest.raises(ValueError):
        fim_trace([])


# ---------------------------------------------------------------------------
# per-layer normalisation
# ---------------------------------------------------------------------------

def test_normalize_layer_proportions():
    traces = {HeadId(0, 0): 3.0, HeadId(0, 1): 1.0,
              HeadId(1, 0): 2.0, HeadId(1, 1): 2.0}
    out = normalize_layer(traces)
    assert out[HeadId(0, 0)] == pytest.approx(0.75)
    assert out[HeadId(0, 1)] == pytest.approx(0.25)
    assert out[HeadId(1, 0)] == pytest.approx(0.5)


def test_normalize_layer_zero_layer_falls_back_to_uniform(caplog):
    traces = {HeadId(0, 0): 0.0, HeadId(0, 1): 0.0, HeadId(0, 2): 0.0,
              HeadId(1, 0): 1.0, HeadId(1, 1): 3.0}
    with caplog.at_level(logging.WARNING, logger="hess.sensitivity"):
        out = normalize_layer(traces)
    assert out[HeadId(0, 0)] == pytest.approx(1 / 3)
    assert out[HeadId(1, 1)] == pytest.approx(0.75)
    assert any("uniform" in r.message for r in caplog.records)


def test_normalize_layer_rejects_bad_traces():
    with pytest.raises(ValueError):
        normalize_layer({HeadId(0, 0): -1.0})
    with pytest.raises(ValueError):
        normalize_layer({HeadId(0, 0): np.nan})
    with pytest.raises(ValueError):
        normalize_layer({})


def test_normalize_layer_sums_to_one_per_layer():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n_layers = int(rng.integers(1, 5))
        n_heads = int(rng.integers(1, 9))
        traces = {HeadId(l, h): float(rng.uniform(0, 10))
                  for l in range(n_layers) for h in range(n_heads)}
        out = normalize_layer(traces)
        for l in range(n_layers):
            total = sum(out[HeadId(l, h)] for h in range(n_heads))
            assert abs(total - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# blending and the table type
# ---------------------------------------------------------------------------

def test_combine_extremes_are_exact():
    table0 = make_table(lam=0.0)
    table1 = make_table(lam=1.0)
    for hid in table0.hess:
        assert table0.hess[hid] == table0.hess_pc[hid]
        assert table1.hess[hid] == table1.hess_cam[hid]


def test_combine_midpoint():
    table = make_table(lam=0.5)
    assert table.hess[HeadId(0, 0)] == pytest.approx(0.5 * 0.75 + 0.5 * 0.1)


def test_combine_validates_inputs():
    cam = {HeadId(0, 0): 1.0}
    pc = {HeadId(0, 1): 1.0}
    with pytest.raises(ValueError):
        combine(cam, pc, 0.5, META)
    with pytest.raises(ValueError):
        combine(cam, cam, 1.5, META)
    with pytest.raises(ValueError):
        combine(cam, cam, -0.1, META)


def test_table_rejects_unnormalised_layer():
    scores = {HeadId(0, 0): 0.7, HeadId(0, 1): 0.7}
    with pytest.raises(ValueError):
        HessTable(lam=1.0, hess_cam=scores, hess_pc=scores, hess=scores, meta=META)


def test_table_rejects_inconsistent_blend():
    cam = {HeadId(0, 0): 0.6, HeadId(0, 1): 0.4}
    pc = {HeadId(0, 0): 0.5, HeadId(0, 1): 0.5}
    bad = {HeadId(0, 0): 0.5, HeadId(0, 1): 0.5}  # not the lam=1 blend of cam
    with pytest.raises(ValueError):
        HessTable(lam=1.0, hess_cam=cam, hess_pc=pc, hess=bad, meta=META)


def test_table_rejects_mismatched_head_sets():
    cam = {HeadId(0, 0): 1.0}
    pc = {HeadId(0, 0): 1.0, HeadId(0, 1): 0.0}
    with pytest.raises(ValueError):
        HessTable(lam=1.0, hess_cam=cam, hess_pc=pc, hess=cam, meta=META)


def test_table_accessors():
    table = make_table()
    assert table.layers() == [0, 1]
    assert table.layer_heads(0) == [0, 1]
    assert table.layer_scores(1, "hess_cam") == [0.5, 0.5]
    assert table.layer_scores(0, "hess_pc") == [0.1, 0.9]


def test_with_lambda_recombines():
    table = make_table(lam=0.5)
    swapped = table.with_lambda(0.0)
    assert swapped.lam == 0.0
    for hid in table.hess:
        assert swapped.hess[hid] == table.hess_pc[hid]
        assert swapped.hess_cam[hid] == table.hess_cam[hid]
    assert table.with_lambda(1.0).hess == table.hess_cam


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def test_json_round_trip_is_lossless_and_stable():
    table = make_table(lam=0.25)
    text = table.to_json()
    back = HessTable.from_json(text)
    assert back.hess == table.hess
    assert back.hess_cam == table.hess_cam
    assert back.hess_pc == table.hess_pc
    assert back.lam == table.lam
    assert back.meta == table.meta
    assert back.to_json() == text


def test_from_json_rejects_garbage():
    with pytest.raises(ValueError):
        HessTable.from_json("{not json")
    with pytest.raises(ValueError):
        HessTable.from_json('{"lambda": 0.5}')


def test_from_json_rejects_duplicate_head():
    table = make_table()
    text = table.to_json().replace('"head": 1', '"head": 0', 1)
    with pytest.raises(ValueError):
        HessTable.from_json(text)


def test_save_load_fingerprint_check(tmp_path):
    table = make_table()
    path = tmp_path / "scores.json"
    table.save(path)

    loaded = HessTable.load(path)
    assert loaded.hess == table.hess

    same = HessTable.load(path, expect_fingerprint=META.model_fingerprint)
    assert same.meta == table.meta

    with pytest.raises(FingerprintMismatchError):
        HessTable.load(path, expect_fingerprint="0" * 64)

    forced = HessTable.load(path, expect_fingerprint="0" * 64, force=True)
    assert forced.hess == table.hess


# ---------------------------------------------------------------------------
# gradient collection on a real model
# ---------------------------------------------------------------------------

def test_per_sample_head_grads_shapes_and_cover():
    model = small_model()
    scene = small_scenes(1)[0]
    grads = per_sample_head_grads(model, scene, "cam", eps=1e6, conf_cutoff=0.0)
    assert set(grads) == set(model.head_ids())
    wq = model.sensitivity_params("wq")
    for hid, g in grads.items():
        assert g.shape == wq[hid].data.shape
        assert np.isfinite(g).all()
    assert any(np.abs(g).max() > 0 for g in grads.values())


def test_per_sample_head_grads_validates_arguments():
    model = small_model()
    scene = small_scenes(1)[0]
    with pytest.raises(ValueError):
        per_sample_head_grads(model, scene, "both", eps=1e6, conf_cutoff=0.0)
    with pytest.raises(ValueError):
        per_sample_head_grads(model, scene, "cam", eps=1e6, conf_cutoff=0.0, sens_param="bias")


def test_per_sample_head_grads_other_params():
    model = small_model()
    scene = small_scenes(1)[0]
    for which in ("wk", "wv"):
        grads = per_sample_head_grads(model, scene, "pc", eps=1e6, conf_cutoff=0.0,
                                      sens_param=which)
        assert set(grads) == set(model.head_ids())


def test_calibrate_builds_valid_table():
    model = small_model()
    table = calibrate(model, small_scenes(3), lam=0.5, eps=1e6, conf_cutoff=0.0, seed=17)
    table.validate()
    assert table.meta.num_samples == 3
    assert table.meta.seed == 17
    assert table.meta.model_fingerprint == model.fingerprint()
    assert set(table.hess) == set(model.head_ids())


def test_calibrate_rejects_empty_scene_list():
    with pytest.raises(CalibrationError):
        calibrate(small_model(), [], lam=0.5, eps=1e6, conf_cutoff=0.0)


def test_calibrate_all_samples_skipped_raises():
    # an absurdly tight inlier radius leaves every sample without inliers
    model = small_model()
    with pytest.raises(CalibrationError):
        calibrate(model, small_scenes(2), lam=0.5, eps=1e-18)


def test_calibrate_skips_bad_samples_and_counts_rest(monkeypatch, caplog):
    model = small_model()
    scenes = small_scenes(3)
    real = sensitivity.per_sample_head_grads

    def flaky(m, scene, kind, **kw):
        if scene is scenes[0]:
            raise SampleSkipped("synthetic skip")
        return real(m, scene, kind, **kw)

    monkeypatch.setattr(sensitivity, "per_sample_head_grads", flaky)
    with caplog.at_level(logging.WARNING, logger="hess.sensitivity"):
        table = calibrate(model, scenes, lam=0.5, eps=1e6, conf_cutoff=0.0)
    assert table.meta.num_samples == 2
    assert any("skipped" in r.message for r in caplog.records)


def test_calibrate_deterministic_and_thread_invariant():
    scenes = small_scenes(4)
    once = calibrate(small_model(), scenes, lam=0.5, eps=1e6, conf_cutoff=0.0, seed=1)
    again = calibrate(small_model(), scenes, lam=0.5, eps=1e6, conf_cutoff=0.0, seed=1)
    threaded = calibrate(small_model(), scenes, lam=0.5, eps=1e6, conf_cutoff=0.0, seed=1,
                         threads=3)
    assert once.to_json() == again.to_json()
    assert once.to_json() == threaded.to_json()


def test_calibrated_lambda_extremes_match_columns_bitwise():
    table = calibrate(small_model(), small_scenes(3), lam=0.5, eps=1e6, conf_cutoff=0.0)
    assert table.with_lambda(0.0).hess == table.hess_pc
    assert table.with_lambda(1.0).hess == table.hess_cam
