import numpy as np
import pytest

import gazevit as gv


def test_token_counts_and_text_round_trip():
    counts = {k: gv.build_pattern(k).token_count for k in ("foveated", "fine", "coarse")}
    assert counts == {"foveated": 20, "fine": 324, "coarse": 20}
    assert counts["fine"] / counts["foveated"] == pytest.approx(16.2, abs=1e-12)
    p = gv.build_pattern("foveated")
    assert gv.parse_pattern(gv.serialize_pattern(p)) == p
    assert set(gv.coverage_counts(p)) == {1}
    with pytest.raises(ValueError):
        gv.build_pattern("hexagonal")


def test_fine_tokenize_round_trip_is_exact():
    rng = np.random.default_rng(0)
    img = rng.random((288, 288, 3))
    tok = gv.tokenize(img, gv.build_pattern("fine"))
    assert tok.tokens.shape == (324, 768)
    assert np.array_equal(gv.assemble(tok), img)


def test_foveated_center_region_round_trip():
    rng = np.random.default_rng(1)
    img = rng.random((288, 288, 3))
    tok = gv.tokenize(img, gv.build_pattern("foveated"), gaze=(0.5, 0.5))
    back = gv.assemble(tok)
    assert tok.gaze == (0.5, 0.5)
    assert np.array_equal(back[128:160, 128:160], img[128:160, 128:160])


def test_flops():
    fine = gv.count_flops("fine")["gflops"]
    coarse = gv.count_flops("coarse")["gflops"]
    fov = gv.count_flops("foveated")["gflops"]
    assert abs(fine / 1905.4 - 1) < 0.1
    assert fov < coarse < fine
    assert gv.count_flops("fine", batch=1)["gflops"] == fine / 64


def test_spatial_softmax_and_fovea():
    heat = np.zeros((9, 9))
    heat[2, 6] = 60.0
    x, y = gv.spatial_softmax(heat)
    assert x == pytest.approx(6.5 / 9, abs=1e-4)
    assert y == pytest.approx(2.5 / 9, abs=1e-4)
    assert gv.inside_fovea((0.5, 0.5), (0.5, 0.5))
    assert not gv.inside_fovea((0.2, 0.2), (0.8, 0.8))


def test_sync():
    assert gv.sync_demo(drop=0.0)["max_error"] == 0.0
    assert gv.sync_demo(drop=0.5, seed=4)["max_error"] < 0.01
    rows = gv.align_gaze(3, 25.0, [(0, 0.2, 0.2, 0.2, 0.2), (2, 0.4, 0.6, 0.4, 0.6)])
    fid, left, right, measured = rows[1]
    assert fid == 1 and not measured
    assert left == pytest.approx((0.3, 0.4))


def test_flow_path_and_mixture_training():
    z0 = np.zeros((2, 2))
    a = np.ones((2, 2))
    assert np.array_equal(gv.flow_interpolate(z0, a, 1.0), a)
    out = gv.train_mixture(steps=30, per_class=50, eval_samples=20, seed=0)
    assert len(out["losses"]) == 30
    assert all(np.isfinite(out["losses"]))
    assert out["classes"][0]["samples"].shape == (20, 2)


def test_mae_mask():
    visible, masked = gv.mae_mask(20, 0.75, 3)
    assert len(masked) == 15
    assert sorted(visible + masked) == list(range(20))


def test_cli_in_process(tmp_path):
    code, out, _ = gv.run_cli(["pattern", "fine", "--out", str(tmp_path / "p")])
    assert code == 0
    assert "rectangles = 324" in out
    assert (tmp_path / "p" / "resolved_config.txt").exists()
    code, _, err = gv.run_cli(["flops", "--set", "flops.nope=1", "--out", str(tmp_path / "f")])
    assert code == 2
    assert "unknown key" in err
