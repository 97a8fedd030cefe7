import math

import numpy as np
import pytest

from raw2raw import evalkit, synthcam
from raw2raw.errors import DegenerateIlluminantError, ShapeError
from raw2raw.evalkit import CameraColorProfile, MetricsReport
from raw2raw.rawio import PackedImage

# Published CIEDE2000 conformance pairs (Sharma, Wu, Dalal implementation
# notes): columns are L1 a1 b1 L2 a2 b2 expected_dE00.
CIEDE2000_CASES = np.array([
    [50.0000, 2.6772, -79.7751, 50.0000, 0.0000, -82.7485, 2.0425],
    [50.0000, 3.1571, -77.2803, 50.0000, 0.0000, -82.7485, 2.8615],
    [50.0000, 2.8361, -74.0200, 50.0000, 0.0000, -82.7485, 3.4412],
    [50.0000, -1.3802, -84.2814, 50.0000, 0.0000, -82.7485, 1.0000],
    [50.0000, -1.1848, -84.8006, 50.0000, 0.0000, -82.7485, 1.0000],
    [50.0000, -0.9009, -85.5211, 50.0000, 0.0000, -82.7485, 1.0000],
    [50.0000, 0.0000, 0.0000, 50.0000, -1.0000, 2.0000, 2.3669],
    [50.0000, -1.0000, 2.0000, 50.0000, 0.0000, 0.0000, 2.3669],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0009, 7.1792],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0010, 7.1792],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0011, 7.2195],
    [50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0012, 7.2195],
    [50.0000, -0.0010, 2.4900, 50.0000, 0.0009, -2.4900, 4.8045],
    [50.0000, -0.0010, 2.4900, 50.0000, 0.0010, -2.4900, 4.8045],
    [50.0000, -0.0010, 2.4900, 50.0000, 0.0011, -2.4900, 4.7461],
    [50.0000, 2.5000, 0.0000, 50.0000, 0.0000, -2.5000, 4.3065],
    [50.0000, 2.5000, 0.0000, 73.0000, 25.0000, -18.0000, 27.1492],
    [50.0000, 2.5000, 0.0000, 61.0000, -5.0000, 29.0000, 22.8977],
    [50.0000, 2.5000, 0.0000, 56.0000, -27.0000, -3.0000, 31.9030],
    [50.0000, 2.5000, 0.0000, 58.0000, 24.0000, 15.0000, 19.4535],
    [50.0000, 2.5000, 0.0000, 50.0000, 3.1736, 0.5854, 1.0000],
    [50.0000, 2.5000, 0.0000, 50.0000, 3.2972, 0.0000, 1.0000],
    [50.0000, 2.5000, 0.0000, 50.0000, 1.8634, 0.5757, 1.0000],
    [50.0000, 2.5000, 0.0000, 50.0000, 3.2592, 0.3350, 1.0000],
    [60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387, 1.2644],
    [63.0109, -31.0961, -5.8663, 62.8187, -29.7946, -4.0864, 1.2630],
    [61.2901, 3.7196, -5.3901, 61.4292, 2.2480, -4.9620, 1.8731],
    [35.0831, -44.1164, 3.7933, 35.0232, -40.0716, 1.5901, 1.8645],
    [22.7233, 20.0904, -46.6940, 23.0331, 14.9730, -42.5619, 2.0373],
    [36.4612, 47.8580, 18.3852, 36.2715, 50.5065, 21.2231, 1.4146],
    [90.8027, -2.0831, 1.4410, 91.1528, -1.6435, 0.0447, 1.4441],
    [90.9257, -0.5406, -0.9208, 88.6381, -0.8985, -0.7239, 1.5381],
    [6.7747, -0.2908, -2.4247, 5.8714, -0.0985, -2.2286, 0.6377],
    [2.0776, 0.0795, -1.1350, 0.9033, -0.0636, -0.5514, 0.9082],
])


def const_image(value, h=16, w=16):
    return PackedImage(np.full((h, w, 3), value, dtype=np.float64), "c")


# -- raw-space metrics ----------------------------------------------------------

def test_psnr_constant_offset_closed_form():
    x = const_image(0.5)
    y = const_image(0.6)
    # mse = 0.01 -> 10 log10(1/0.01) = 20 dB exactly
    assert np.isclose(evalkit.psnr(x, y), 20.0)


def test_psnr_matches_scalar_definition():
    rng = np.random.default_rng(0)
    a = rng.random((5, 7, 3))
    b = rng.random((5, 7, 3))
    got = evalkit.psnr(PackedImage(a, "x"), PackedImage(b, "y"))
    mse = 0.0
    for v1, v2 in zip(a.ravel(), b.ravel()):
        mse += (v1 - v2) ** 2
    mse /= a.size
    assert np.isclose(got, 10.0 * math.log10(1.0 / mse))


def test_psnr_identical_is_infinite():
    x = const_image(0.3)
    assert evalkit.psnr(x, x) == math.inf


def test_mae_matches_scalar_definition():
    rng = np.random.default_rng(1)
    a = rng.random((4, 4, 3))
    b = rng.random((4, 4, 3))
    got = evalkit.mae(PackedImage(a, "x"), PackedImage(b, "y"))
    assert np.isclose(got, np.abs(a - b).mean())


def test_metric_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        evalkit.psnr(const_image(0.1, 8, 8), const_image(0.1, 8, 9))


def test_ssim_identical_images_is_one():
    rng = np.random.default_rng(2)
    img = PackedImage(rng.random((16, 16, 3)), "c")
    assert np.isclose(evalkit.ssim(img, img), 1.0)


def test_ssim_constant_images_closed_form():
    # Flat images have zero local variance, so SSIM reduces to the
    # luminance term (2 xy + C1) / (x^2 + y^2 + C1).
    x, y = 0.4, 0.6
    got = evalkit.ssim(const_image(x), const_image(y))
    expected = (2 * x * y + 1e-4) / (x * x + y * y + 1e-4)
    assert np.isclose(got, expected, rtol=1e-9)


def test_ssim_symmetric():
    rng = np.random.default_rng(3)
    a = PackedImage(rng.random((14, 14, 3)), "a")
    b = PackedImage(rng.random((14, 14, 3)), "b")
    assert np.isclose(evalkit.ssim(a, b), evalkit.ssim(b, a), rtol=1e-12)


def test_ssim_penalizes_noise_more_than_bias():
    rng = np.random.default_rng(4)
    base = rng.uniform(0.3, 0.7, size=(24, 24, 3))
    biased = np.clip(base + 0.02, 0, 1)
    noisy = np.clip(base + rng.normal(scale=0.1, size=base.shape), 0, 1)
    s_bias = evalkit.ssim(PackedImage(base, "c"), PackedImage(biased, "c"))
    s_noise = evalkit.ssim(PackedImage(base, "c"), PackedImage(noisy, "c"))
    assert s_noise < s_bias < 1.0


def test_ssim_rejects_small_images():
    with pytest.raises(ShapeError):
        evalkit.ssim(const_image(0.5, 8, 8), const_image(0.5, 8, 8))


# -- color pipeline ---------------------------------------------------------------

def test_ciede2000_conformance_table():
    lab1 = CIEDE2000_CASES[:, 0:3]
    lab2 = CIEDE2000_CASES[:, 3:6]
    got = evalkit.ciede2000(lab1, lab2)
    assert np.max(np.abs(got - CIEDE2000_CASES[:, 6])) < 1e-4


def test_ciede2000_symmetric_and_zero_on_identity():
    lab1 = CIEDE2000_CASES[:, 0:3]
    lab2 = CIEDE2000_CASES[:, 3:6]
    assert np.allclose(evalkit.ciede2000(lab1, lab2),
                       evalkit.ciede2000(lab2, lab1), atol=1e-12)
    assert np.allclose(evalkit.ciede2000(lab1, lab1), 0.0)


def test_raw_to_lab_white_maps_to_lab_white(sensor_a):
    profile = CameraColorProfile(synthcam.fit_color_profile(sensor_a), "camA")
    img = const_image(1.0, 4, 4)
    lab = evalkit.raw_to_lab(img, np.ones(3), profile)
    assert np.allclose(lab[..., 0], 100.0, atol=1e-9)
    assert np.allclose(lab[..., 1:], 0.0, atol=1e-9)


def test_raw_to_lab_matches_scalar_pipeline():
    rng = np.random.default_rng(5)
    data = rng.uniform(0.05, 0.95, size=(3, 2, 3))
    illum = np.array([0.8, 1.0, 0.6])
    mat = np.array([[0.6, 0.2, 0.15], [0.3, 0.6, 0.1], [0.05, 0.1, 0.9]])
    profile = CameraColorProfile(mat)
    got = evalkit.raw_to_lab(PackedImage(data, "c"), illum, profile)
    eps = (6.0 / 29.0) ** 3
    kappa = 3.0 * (6.0 / 29.0) ** 2
    white = evalkit.D65_WHITE
    for yy in range(3):
        for xx in range(2):
            wb = data[yy, xx] / (illum / illum.max())
            xyz = mat @ wb
            f = np.empty(3)
            for i in range(3):
                t = max(xyz[i], 0.0) / white[i]
                f[i] = t ** (1 / 3) if t > eps else t / kappa + 4.0 / 29.0
            lab = [116 * f[1] - 16, 500 * (f[0] - f[1]), 200 * (f[1] - f[2])]
            assert np.allclose(got[yy, xx], lab, atol=1e-12)


def test_raw_to_lab_white_balance_keeps_brightest_channel():
    # channel with the largest illuminant component passes through as-is
    data = np.zeros((1, 1, 3))
    data[0, 0] = [0.2, 0.4, 0.6]
    illum = np.array([0.5, 1.0, 0.25])
    profile = CameraColorProfile(np.eye(3))
    lab_full = evalkit.raw_to_lab(PackedImage(data, "c"), illum, profile)
    wb = data[0, 0] / (illum / illum.max())
    assert np.isclose(wb[1], 0.4)  # green untouched
    assert np.isclose(wb[0], 0.4) and np.isclose(wb[2], 2.4)
    assert np.isfinite(lab_full).all()


def test_raw_to_lab_rejects_zero_illuminant():
    profile = CameraColorProfile(np.eye(3))
    with pytest.raises(DegenerateIlluminantError):
        evalkit.raw_to_lab(const_image(0.5), np.array([1.0, 0.0, 1.0]),
                           profile)


def test_estimate_illuminant_gray_world():
    rng = np.random.default_rng(6)
    data = rng.uniform(0, 1, size=(10, 10, 3))
    est = evalkit.estimate_illuminant(PackedImage(data, "c"))
    mean = data.reshape(-1, 3).mean(axis=0)
    assert np.allclose(est, mean / np.linalg.norm(mean))


def test_estimate_illuminant_from_chart_patches():
    data = np.full((12, 12, 3), 0.1)
    data[2:6, 2:6] = [0.8, 0.6, 0.4]
    est = evalkit.estimate_illuminant(
        PackedImage(data, "c"), [{"x": 2, "y": 2, "size": 4}])
    v = np.array([0.8, 0.6, 0.4])
    assert np.allclose(est, v / np.linalg.norm(v))


def test_estimate_illuminant_zero_image_raises():
    with pytest.raises(DegenerateIlluminantError):
        evalkit.estimate_illuminant(const_image(0.0))


# -- profiles ----------------------------------------------------------------------

def test_profile_round_trip(tmp_path):
    mat = np.array([[0.7, 0.2, 0.1], [0.25, 0.65, 0.1], [0.0, 0.05, 1.0]])
    profile = CameraColorProfile(mat, "camZ")
    evalkit.save_profile(profile, tmp_path / "p.json")
    loaded = evalkit.load_profile(tmp_path / "p.json")
    assert np.array_equal(loaded.xyz_matrix, mat)
    assert loaded.camera_id == "camZ"


def test_profile_rejects_singular_matrix():
    with pytest.raises(ShapeError):
        CameraColorProfile(np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        CameraColorProfile(np.eye(4))


# -- reports ------------------------------------------------------------------------

def make_report():
    rep = MetricsReport(method="demo", direction="A->B")
    rep.add_row("img000", 30.0, 0.9, 0.01, 1.5)
    rep.add_row("img001", math.inf, 1.0, 0.0, 0.0)
    return rep


def test_aggregates_cap_infinite_psnr():
    agg = make_report().aggregates()
    assert np.isclose(agg["psnr"][0], (30.0 + 99.0) / 2.0)
    assert np.isclose(agg["psnr"][1], np.std([30.0, 99.0]))
    assert np.isclose(agg["ssim"][0], 0.95)


def test_report_rejects_invalid_rows():
    rep = MetricsReport(method="m", direction="d")
    with pytest.raises(ShapeError):
        rep.add_row("x", 30.0, 1.5, 0.0, 0.0)
    with pytest.raises(ShapeError):
        rep.add_row("x", 30.0, 0.5, -0.1, 0.0)


def test_table_format():
    table = make_report().to_table()
    lines = table.splitlines()
    assert lines[0] == "method: demo   direction: A->B"
    assert lines[1].split() == ["image", "PSNR↑", "SSIM↑", "MAE↓", "ΔE↓"]
    assert len(lines) == 2 + 2 + 2  # header rows, image rows, mean/std
    assert "inf" in lines[3]
    assert lines[4].startswith("mean")
    assert lines[5].startswith("std")


def test_csv_format_and_inf_cap():
    csv = make_report().to_csv()
    lines = csv.splitlines()
    assert lines[0] == "image,psnr_db,ssim,mae,delta_e2000"
    assert lines[1] == "img000,30.000000,0.900000,0.010000,1.500000"
    assert lines[2].startswith("img001,99.000000,")
    assert lines[3].startswith("mean,64.500000,")
    assert len(lines) == 5


def test_csv_deterministic():
    assert make_report().to_csv() == make_report().to_csv()


def test_evaluate_identical_pair(sensor_a):
    rng = np.random.default_rng(7)
    imgs = [PackedImage(rng.uniform(0.1, 0.9, size=(16, 16, 3)), "camA")
            for _ in range(2)]
    profile = CameraColorProfile(synthcam.fit_color_profile(sensor_a), "camA")
    rep = evalkit.evaluate(imgs, imgs, profile, method="identity",
                           direction="A->A", names=["p", "q"])
    assert [r["name"] for r in rep.rows] == ["p", "q"]
    for row in rep.rows:
        assert row["psnr"] == math.inf
        assert np.isclose(row["ssim"], 1.0)
        assert row["mae"] == 0.0
        assert row["delta_e"] < 1e-12


def test_evaluate_length_mismatch(sensor_a):
    profile = CameraColorProfile(synthcam.fit_color_profile(sensor_a))
    with pytest.raises(ShapeError):
        evalkit.evaluate([const_image(0.5)], [], profile)
