"""Acceptance gate: one test per shipping criterion.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail line
per criterion. The nonlinear end-to-end check trains two models and takes
a few minutes on one CPU core; everything else is fast.
"""

import time

import numpy as np
import pytest
import torch

from raw2raw import baselines, calibfit, evalkit, nnmap, rawio, synthcam
from raw2raw.calibfit import ColorSamplePair, Kernel, fit_map
from raw2raw.nnmap import losses
from raw2raw.nnmap.arch import ArchitectureSpec, LatentStack, build_model
from raw2raw.nnmap.losses import LossSwitches
from raw2raw.nnmap.train import train_step
from raw2raw.rawio import CfaPattern, PackedImage, RawFrame

from oracles import anchor_loss_ref, mapping_loss_ref, recon_loss_ref
from test_evalkit import CIEDE2000_CASES


def rel_err(got, ref):
    return abs(got - ref) / max(abs(ref), 1e-12)


# ---------------------------------------------------------------------------
# criterion: vectorized losses match brute-force scalar loops


def test_losses_match_scalar_references():
    started = time.monotonic()
    rng = np.random.default_rng(3)
    tensors_checked = 0
    for _ in range(34):
        n = int(rng.integers(1, 5))
        c = int(rng.integers(1, 4))
        h = int(rng.integers(3, 8))

        x = torch.from_numpy(rng.standard_normal((n, c, h, h)))
        y = torch.from_numpy(rng.standard_normal((n, c, h, h)))
        l_r = losses.loss_r(x, y)
        assert rel_err(float(l_r), recon_loss_ref(x.numpy(), y.numpy())) < 1e-6

        depth = int(rng.integers(2, 5))
        blocks_a, blocks_b = [], []
        s = 8
        for _ in range(depth):
            blocks_a.append(torch.from_numpy(
                rng.standard_normal((n, c, s, s))))
            blocks_b.append(torch.from_numpy(
                rng.standard_normal((n, c, s, s))))
            s = (s + 1) // 2
        l_a = losses.loss_a(LatentStack(blocks_a), LatentStack(blocks_b))
        ref_a = anchor_loss_ref([b.numpy() for b in blocks_a],
                                [b.numpy() for b in blocks_b])
        assert rel_err(float(l_a), ref_a) < 1e-6

        shape = (n, 3, int(rng.integers(2, 6)), int(rng.integers(2, 6)))
        ma, ga = (torch.from_numpy(rng.standard_normal(shape))
                  for _ in range(2))
        mb, gb = (torch.from_numpy(rng.standard_normal(shape))
                  for _ in range(2))
        l_m = losses.loss_m(ma, ga, mb, gb)
        ref_m = mapping_loss_ref(ma.numpy(), ga.numpy(),
                                 mb.numpy(), gb.numpy())
        assert rel_err(float(l_m), ref_m) < 1e-6

        total = losses.total_loss(l_r, l_a, l_m, LossSwitches(True, True, True))
        assert rel_err(float(total),
                       float(l_r) + float(l_a) + float(l_m)) < 1e-6
        tensors_checked += 3
    assert tensors_checked >= 100
    assert time.monotonic() - started < 10.0


# ---------------------------------------------------------------------------
# criterion: analytic gradients of the composite objective match central
# finite differences on a miniature model


def test_gradients_match_finite_differences():
    started = time.monotonic()
    model = build_model(ArchitectureSpec(in_channels=3, depth=2,
                                         channels=(4, 8)), seed=0)
    for mod in model.modules().values():
        mod.double()
    gen = torch.Generator().manual_seed(1)

    def r(*shape):
        return torch.rand(*shape, generator=gen, dtype=torch.float64)

    batch = {"anchor_a": r(2, 3, 16, 16), "anchor_b": r(2, 3, 16, 16),
             "unpaired_a": r(1, 3, 16, 16), "unpaired_b": r(1, 3, 16, 16)}
    switches = LossSwitches(True, True, True)

    total, *_ = train_step(model, batch, switches)
    total.backward()
    params = list(model.parameters())

    rng = np.random.default_rng(0)
    for _ in range(100):
        p = params[int(rng.integers(0, len(params)))]
        flat = p.detach().reshape(-1)
        idx = int(rng.integers(0, flat.numel()))
        grad = float(p.grad.reshape(-1)[idx])

        eps = 1e-6 * max(1.0, abs(float(flat[idx])))
        with torch.no_grad():
            orig = float(flat[idx])
            flat[idx] = orig + eps
            up, *_ = train_step(model, batch, switches)
            flat[idx] = orig - eps
            down, *_ = train_step(model, batch, switches)
            flat[idx] = orig
        fd = (float(up) - float(down)) / (2.0 * eps)
        denom = max(abs(grad), abs(fd), 1e-6)
        assert abs(grad - fd) / denom < 1e-3
    assert time.monotonic() - started < 120.0


# ---------------------------------------------------------------------------
# criterion: noiseless calibration fits recover their generating matrices


def test_calibration_recovers_generating_matrices():
    started = time.monotonic()
    rng = np.random.default_rng(4)

    true = rng.standard_normal((3, 11)) * 0.3
    src = rng.random((60, 3))
    samples = [ColorSamplePair(s, true @ calibfit.expand_kernel(
        s, Kernel.POLY11)) for s in src]
    cmap = fit_map(samples, Kernel.POLY11, "a", "b")
    assert np.max(np.abs(cmap.M - true)) < 1e-6

    ident_samples = [ColorSamplePair(s, s) for s in rng.random((40, 3))]
    ident = fit_map(ident_samples, Kernel.IDENTITY, "a", "b")
    assert np.max(np.abs(ident.M - np.eye(3))) < 1e-10
    assert time.monotonic() - started < 1.0


# ---------------------------------------------------------------------------
# criterion: color-difference metric reproduces the published reference
# pairs


def test_color_difference_conformance():
    started = time.monotonic()
    got = evalkit.ciede2000(CIEDE2000_CASES[:, 0:3], CIEDE2000_CASES[:, 3:6])
    assert np.max(np.abs(got - CIEDE2000_CASES[:, 6])) < 1e-4
    assert time.monotonic() - started < 1.0


# ---------------------------------------------------------------------------
# criterion: linear-regime end-to-end, sensors differing by a fixed 3x3
# channel mixing are recovered by the global 3x3 baseline


def test_linear_sensor_mixing_recovered_end_to_end(tmp_path):
    started = time.monotonic()
    sensor_a = synthcam.gaussian_sensor("camA")
    mixing = np.array([[0.80, 0.15, 0.05],
                       [0.10, 0.75, 0.15],
                       [0.05, 0.20, 0.75]])
    sensor_b = synthcam.mixed_sensor(sensor_a, mixing, "camB")
    manifest = synthcam.make_paired_dataset(
        1, sensor_a, sensor_b, seed=21, out_dir=tmp_path,
        image_size=(64, 64), n_anchor=2, n_test=8,
        exposure_percentile=100.0)
    profile = evalkit.CameraColorProfile(
        np.array(manifest["profiles"]["camB"]), "camB")
    anchors, tests = _paired_splits(manifest, tmp_path)
    assert len(tests) == 8

    report = baselines.global_calibration_run(anchors, tests,
                                              Kernel.IDENTITY, profile)
    agg = report.aggregates()
    assert agg["psnr"][0] > 40.0, f"mean PSNR {agg['psnr'][0]:.2f}"
    assert agg["delta_e"][0] < 0.5, f"mean dE {agg['delta_e'][0]:.4f}"
    assert time.monotonic() - started < 120.0


def _paired_splits(manifest, root):
    by_scene: dict[str, dict] = {}
    for e in synthcam.manifest_frames(manifest, root, split="anchor",
                                      include_chart=False):
        by_scene.setdefault(e["scene_id"], {})[e["camera_id"]] = e["image"]
    anchors = [calibfit.AnchorPair(v["camA"], v["camB"], {"scene_id": k})
               for k, v in sorted(by_scene.items())]
    ts: dict[str, dict] = {}
    for e in synthcam.manifest_frames(manifest, root, split="test",
                                      include_chart=False):
        ts.setdefault(e["scene_id"], {})[e["camera_id"]] = e["image"]
    tests = [(v["camA"], v["camB"]) for _, v in sorted(ts.items())]
    return anchors, tests


# ---------------------------------------------------------------------------
# criterion: nonlinear-regime end-to-end, shifted and narrowed sensor
# curves; the trained model must beat the unmapped identity and the global
# 3x3 baseline, and the full objective must beat its mapping-only ablation
# on the same seed


def test_nonlinear_mapping_beats_baselines_and_ablation(tmp_path):
    started = time.monotonic()
    torch.set_num_threads(1)
    sensor_a = synthcam.gaussian_sensor("camA")
    sensor_b = synthcam.gaussian_sensor(
        "camB", peaks=(655.0, 560.0, 470.0), widths=(18.0, 18.0, 18.0))
    manifest = synthcam.make_paired_dataset(
        16, sensor_a, sensor_b, seed=77, out_dir=tmp_path,
        image_size=(128, 128), n_anchor=4, n_test=8,
        exposure_percentile=100.0, temperature_range=(2500.0, 9000.0))
    profile = evalkit.CameraColorProfile(
        np.array(manifest["profiles"]["camB"]), "camB")
    unpaired_a = [e["image"] for e in synthcam.manifest_frames(
        manifest, tmp_path, split="unpaired_A", include_chart=False)]
    unpaired_b = [e["image"] for e in synthcam.manifest_frames(
        manifest, tmp_path, split="unpaired_B", include_chart=False)]
    anchors, tests = _paired_splits(manifest, tmp_path)
    gt = [b for _, b in tests]

    identity_psnr = evalkit.evaluate(
        [a for a, _ in tests], gt, profile,
        method="identity").aggregates()["psnr"][0]
    global_psnr = baselines.global_calibration_run(
        anchors, tests, Kernel.IDENTITY, profile).aggregates()["psnr"][0]

    arch = ArchitectureSpec(in_channels=3)
    datasets = {"unpaired_a": unpaired_a, "unpaired_b": unpaired_b,
                "anchors": anchors}

    def run(switches, tag):
        config = nnmap.TrainConfig(
            learning_rate=1e-3, batch_size=8, patch_size=64, epochs=60,
            seed=77, iters_per_epoch=18, lr_schedule="cosine",
            loss_switches=switches)
        model = nnmap.train(datasets, config, arch=arch)
        mapped = [nnmap.map_image(a, model, "A2B") for a, _ in tests]
        return evalkit.evaluate(mapped, gt, profile,
                                method=tag).aggregates()["psnr"][0]

    full_psnr = run(LossSwitches(True, True, True), "full")
    m_only_psnr = run(LossSwitches(False, False, True), "m-only")

    scores = (f"identity {identity_psnr:.2f}  3x3 {global_psnr:.2f}  "
              f"full {full_psnr:.2f}  m-only {m_only_psnr:.2f}")
    assert full_psnr > identity_psnr, scores
    assert full_psnr > global_psnr, scores
    assert full_psnr > m_only_psnr, scores
    assert time.monotonic() - started < 1800.0


# ---------------------------------------------------------------------------
# criterion: frequency-domain style transfer sanity


def test_frequency_swap_identity_and_window_amplitudes():
    rng = np.random.default_rng(6)
    src = PackedImage(
        (0.2 + 0.6 * rng.random((32, 32, 3))).astype(np.float32), "a")
    tgt = PackedImage(
        (0.2 + 0.6 * rng.random((32, 32, 3))).astype(np.float32), "b")

    same = baselines.fda_map(src, tgt, baselines.FdaConfig(beta=0.0))
    assert np.max(np.abs(same.data - src.data)) < 1e-6

    beta = 0.25
    out = baselines.fda_map(src, tgt, baselines.FdaConfig(beta=beta))
    r = baselines._window_halfwidth(beta, 32, 32)
    assert r > 0
    cy = cx = 16
    win = (slice(cy - r, cy + r + 1), slice(cx - r, cx + r + 1))
    for c in range(3):
        amp_out = np.abs(np.fft.fftshift(
            np.fft.fft2(out.data[..., c].astype(np.float64))))
        amp_tgt = np.abs(np.fft.fftshift(
            np.fft.fft2(tgt.data[..., c].astype(np.float64))))
        np.testing.assert_allclose(amp_out[win], amp_tgt[win],
                                   rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------------
# criterion: raw file and packing round trips


def test_raw_io_round_trips(tmp_path):
    rng = np.random.default_rng(7)
    patterns = [CfaPattern.RGGB, CfaPattern.BGGR, CfaPattern.GRBG,
                CfaPattern.GBRG, CfaPattern.NONE_3CH]
    for i in range(30):
        pattern = patterns[i % len(patterns)]
        bit_depth = int(rng.integers(8, 17))
        max_count = (1 << bit_depth) - 1
        h, w = 2 * int(rng.integers(2, 7)), 2 * int(rng.integers(2, 7))
        shape = (h, w, 3) if pattern is CfaPattern.NONE_3CH else (h, w)
        pixels = rng.integers(0, max_count + 1, shape).astype(np.uint16)
        frame = RawFrame(pixels, pattern, black_level=0,
                         white_level=max_count, camera_id=f"cam{i}",
                         bit_depth=bit_depth,
                         illuminant=rng.random(3))

        # pack/unpack is bit-exact
        packed = rawio.normalize(frame)
        back = rawio.unpack(packed, frame)
        assert np.array_equal(back.pixels, frame.pixels)

        # save/load is bit-exact, metadata included
        loaded = rawio.load_frame(rawio.save_frame(frame, tmp_path / f"f{i}"))
        assert np.array_equal(loaded.pixels, frame.pixels)
        assert loaded.cfa_pattern is frame.cfa_pattern
        assert loaded.bit_depth == frame.bit_depth
        assert loaded.camera_id == frame.camera_id
        assert loaded.white_level == frame.white_level
        assert np.array_equal(loaded.black_level, frame.black_level)
        np.testing.assert_allclose(loaded.illuminant, frame.illuminant)

    # normalization endpoints under randomized levels
    for _ in range(30):
        bit_depth = int(rng.integers(8, 17))
        max_count = (1 << bit_depth) - 1
        black = int(rng.integers(0, 101))
        white = int(rng.integers(black + 10, max_count + 1))
        for fill, expect in ((black, 0.0), (white, 1.0)):
            frame = RawFrame(np.full((6, 6), fill, dtype=np.uint16),
                             CfaPattern.RGGB, black_level=black,
                             white_level=white, camera_id="c",
                             bit_depth=bit_depth)
            assert np.all(rawio.normalize(frame).data == expect)


# ---------------------------------------------------------------------------
# criterion: report format and the trivial identical-pair row


def test_report_format_and_trivial_row():
    rng = np.random.default_rng(8)
    img = PackedImage(rng.random((16, 16, 3)).astype(np.float32), "cam")
    profile = evalkit.CameraColorProfile(np.eye(3), "cam")
    report = evalkit.evaluate([img, img], [img, img], profile,
                              method="self", direction="A2B",
                              names=["one", "two"])
    for row in report.rows:
        assert row["psnr"] == np.inf
        assert row["ssim"] == 1.0
        assert row["mae"] == 0.0
        assert row["delta_e"] < 1e-12

    table = report.to_table()
    for column in ("PSNR↑", "SSIM↑", "MAE↓", "ΔE↓"):
        assert column in table
    lines = table.splitlines()
    assert lines[-2].startswith("mean")
    assert lines[-1].startswith("std")
    assert "inf" in table
