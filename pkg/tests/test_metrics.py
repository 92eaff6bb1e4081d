import math

import numpy as np
import pytest

from qarest.dataio import distort_jpeg
from qarest.errors import DimensionError, InputError, UndefinedCorrelationError
from qarest.metrics import (
    CorrelationReport,
    PoolingSpec,
    average_ranks,
    blocking_effect_factor,
    correlation_report,
    fit_logistic_mapping,
    kendall,
    luma_bt601,
    minkowski_pool,
    mse,
    pearson,
    psnr,
    psnr_b,
    spearman,
    ssim_eval,
)

from helpers import synth_image
from oracles import (
    bef_oracle,
    kendall_oracle,
    pearson_oracle,
    psnr_b_oracle,
    psnr_oracle,
    ranks_oracle,
    spearman_oracle,
    ssim_oracle,
)


def rand_image(seed, h=32, w=32, channels=3):
    rng = np.random.default_rng(seed)
    shape = (h, w, channels) if channels else (h, w)
    return rng.random(shape)


class TestPsnr:
    def test_identical_is_inf(self):
        a = rand_image(0)
        assert psnr(a, a) == math.inf

    def test_known_value(self):
        ref = np.zeros((16, 16, 3))
        test = np.full((16, 16, 3), 0.1)
        assert psnr(ref, test) == pytest.approx(20.0, abs=1e-12)

    def test_matches_oracle(self):
        for seed in range(5):
            a, b = rand_image(seed), rand_image(seed + 100)
            assert psnr(a, b) == pytest.approx(psnr_oracle(a, b), abs=1e-9)

    def test_max_val(self):
        a, b = rand_image(1) * 255, rand_image(101) * 255
        assert psnr(a, b, max_val=255.0) == pytest.approx(psnr_oracle(a, b, max_val=255.0), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(rand_image(0), rand_image(0, h=16))

    def test_mse_direct(self):
        a, b = rand_image(2), rand_image(102)
        assert mse(a, b) == pytest.approx(float(np.mean((a - b) ** 2)), abs=1e-15)


class TestLuma:
    def test_weights(self):
        img = np.zeros((4, 4, 3))
        img[..., 0] = 1.0
        assert np.allclose(luma_bt601(img), 0.299)
        assert luma_bt601(np.ones((4, 4, 3))).max() == pytest.approx(1.0, abs=1e-12)

    def test_gray_passthrough(self):
        g = rand_image(3, channels=0)
        assert np.array_equal(luma_bt601(g), g)


class TestSsimEval:
    def test_identical(self):
        a = rand_image(4, h=24, w=24)
        assert ssim_eval(a, a) == pytest.approx(1.0, abs=1e-9)
        assert ssim_eval(a, a, "luma_bt601") == pytest.approx(1.0, abs=1e-9)

    def test_gray_modes_agree(self):
        a, b = rand_image(5, channels=0), rand_image(105, channels=0)
        assert ssim_eval(a, b, "rgb_mean") == ssim_eval(a, b, "luma_bt601")

    def test_matches_oracle_rgb(self):
        a, b = rand_image(6, h=24, w=24), rand_image(106, h=24, w=24)
        assert ssim_eval(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-6)

    def test_matches_oracle_luma(self):
        a, b = rand_image(7, h=24, w=24), rand_image(107, h=24, w=24)
        want = ssim_oracle(luma_bt601(a), luma_bt601(b))
        assert ssim_eval(a, b, "luma_bt601") == pytest.approx(want, abs=1e-6)

    def test_unknown_mode(self):
        a = rand_image(8)
        with pytest.raises(InputError):
            ssim_eval(a, a, "hsv")


class TestPsnrB:
    def test_jump_free_grid_equals_psnr(self):
        # vertical stripes whose jumps all fall strictly inside blocks:
        # boundary diffs are 0, so neither direction contributes and BEF
        # is exactly 0 by the D_b > D_bc condition
        img = np.zeros((32, 48, 3))
        edges = [0, 4, 12, 20, 28, 36, 44, 48]
        for k in range(len(edges) - 1):
            img[:, edges[k] : edges[k + 1]] = 0.1 + 0.1 * k
        ref = np.clip(img + 0.01, 0.0, 1.0)
        assert blocking_effect_factor(img) == 0.0
        assert psnr_b(ref, img) == psnr(ref, img)

    def test_tiled_image_penalised(self):
        ii, jj = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
        tiles = np.where((ii // 8 + jj // 8) % 2 == 0, 0.25, 0.75)
        test = np.repeat(tiles[:, :, None], 3, axis=2)
        ref = np.full_like(test, 0.5)
        got_b = psnr_b(ref, test)
        assert got_b < psnr(ref, test)
        # every boundary pair jumps by 0.5, every interior pair is flat:
        # BEF = 2 directions * (log2 8 / log2 64) * 0.25
        assert blocking_effect_factor(test) == pytest.approx(0.25, abs=1e-12)
        assert got_b == pytest.approx(psnr_b_oracle(ref, test), abs=1e-9)

    def test_matches_oracle_random(self):
        for seed in range(3):
            a = rand_image(seed, h=40, w=56)
            b = rand_image(seed + 200, h=40, w=56)
            assert blocking_effect_factor(b) == pytest.approx(bef_oracle(b), abs=1e-12)
            assert psnr_b(a, b) == pytest.approx(psnr_b_oracle(a, b), abs=1e-9)

    def test_not_above_psnr_on_jpeg(self):
        img = synth_image(np.random.default_rng(9), 64, 64)
        compressed = distort_jpeg(img, 10)
        assert psnr_b(img, compressed) <= psnr(img, compressed)

    def test_too_small(self):
        a = rand_image(10, h=8, w=8)
        with pytest.raises(InputError):
            psnr_b(a, a)

    def test_identical_blocky_not_inf(self):
        # identical pair but blocky content: MSE 0, BEF > 0, finite result
        ii, jj = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        tiles = np.where((ii // 8 + jj // 8) % 2 == 0, 0.2, 0.8)
        test = np.repeat(tiles[:, :, None], 3, axis=2)
        assert psnr(test, test) == math.inf
        assert math.isfinite(psnr_b(test, test))


class TestMinkowskiPool:
    def test_constant_fixpoint(self):
        for c in (0.0, 0.3, 1.0):
            for p in (0.5, 1.0, 2.0, 7.0):
                assert minkowski_pool(np.full((9, 7), c), p) == pytest.approx(c, abs=1e-12)

    def test_p1_is_mean(self):
        g = rand_image(11, channels=0)
        assert minkowski_pool(g, 1.0) == pytest.approx(float(g.mean()), abs=1e-12)

    def test_half_zeros_half_ones(self):
        g = np.concatenate([np.zeros(32), np.ones(32)])
        assert minkowski_pool(g, 2.0) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_monotone_in_p(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            g = rng.random((6, 5))
            qs = [minkowski_pool(g, p) for p in (0.5, 1.0, 2.0, 4.0, 8.0)]
            assert all(b >= a - 1e-12 for a, b in zip(qs, qs[1:]))

    def test_bounds(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            g = rng.random((4, 4))
            q = minkowski_pool(g, 3.0)
            assert g.min() - 1e-12 <= q <= g.max() + 1e-12

    def test_errors(self):
        with pytest.raises(InputError):
            minkowski_pool(np.array([0.5]), 0.0)
        with pytest.raises(InputError):
            minkowski_pool(np.array([]), 2.0)
        with pytest.raises(InputError):
            minkowski_pool(np.array([1.5]), 2.0)
        with pytest.raises(InputError):
            minkowski_pool(np.array([np.nan]), 2.0)


def rand_tied_vectors(rng, n):
    # integer-ish values from a small alphabet force ties in both vectors
    x = rng.integers(0, max(2, n // 2), size=n).astype(np.float64)
    y = rng.integers(0, max(2, n // 2), size=n).astype(np.float64)
    if np.all(x == x[0]):
        x[0] += 1.0
    if np.all(y == y[0]):
        y[0] += 1.0
    return x, y


class TestCorrelations:
    def test_affine_increasing(self):
        x = np.array([0.3, 1.2, 2.0, 3.7, 5.1])
        y = 2.0 * x + 1.0
        assert pearson(x, y) == pytest.approx(1.0, abs=1e-12)
        assert spearman(x, y) == 1.0
        assert kendall(x, y) == 1.0

    def test_monotone_nonlinear(self):
        x = np.array([-2.0, -1.0, 0.5, 1.5, 3.0])
        y = x**3
        assert spearman(x, y) == 1.0
        assert kendall(x, y) == 1.0
        assert pearson(x, y) < 1.0

    def test_kendall_known_value(self):
        assert kendall([1, 2, 3], [1, 3, 2]) == 1 / 3

    def test_pearson_matches_oracle(self):
        rng = np.random.default_rng(14)
        x, y = rng.random(20), rng.random(20)
        assert pearson(x, y) == pytest.approx(pearson_oracle(x, y), abs=1e-13)

    def test_ranks_match_oracle_exactly(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            x, _ = rand_tied_vectors(rng, int(rng.integers(3, 31)))
            assert np.array_equal(average_ranks(x), ranks_oracle(x))

    def test_rank_oracles_exact_with_ties(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            n = int(rng.integers(3, 31))
            x, y = rand_tied_vectors(rng, n)
            assert spearman(x, y) == spearman_oracle(x, y)
            assert kendall(x, y) == kendall_oracle(x, y)

    def test_antisymmetry(self):
        rng = np.random.default_rng(17)
        x, y = rng.random(12), rng.random(12)
        assert pearson(x, -y) == -pearson(x, y)
        assert spearman(x, -y) == -spearman(x, y)
        assert kendall(x, -y) == -kendall(x, y)

    def test_rank_invariance_under_increasing_transform(self):
        rng = np.random.default_rng(18)
        x, y = rng.random(15), rng.random(15)
        assert spearman(np.exp(x), y) == spearman(x, y)
        assert kendall(np.exp(x), y) == kendall(x, y)

    def test_constant_inputs_rejected(self):
        c = np.ones(5)
        v = np.arange(5.0)
        for fn in (pearson, spearman, kendall):
            with pytest.raises(UndefinedCorrelationError):
                fn(c, v)
            with pytest.raises(UndefinedCorrelationError):
                fn(v, c)

    def test_input_validation(self):
        with pytest.raises(DimensionError):
            pearson([1, 2, 3], [1, 2])
        with pytest.raises(UndefinedCorrelationError):
            kendall([1, 2], [3, 4])
        with pytest.raises(InputError):
            spearman([1.0, np.nan, 2.0], [1.0, 2.0, 3.0])

    def test_report(self):
        rng = np.random.default_rng(19)
        x = rng.random(10)
        y = x + 0.1 * rng.random(10)
        rep = correlation_report(x, y)
        assert isinstance(rep, CorrelationReport)
        assert rep.n_samples == 10
        for v in (rep.pcc, rep.srcc, rep.kcc):
            assert -1.0 <= v <= 1.0
        assert rep.pcc > 0.9

    def test_logistic_mapping_helps_pcc(self):
        x = np.linspace(-3, 3, 40)
        y = 1.0 / (1.0 + np.exp(-3.0 * x))  # saturating monotone relation
        raw = pearson(x, y)
        mapped = fit_logistic_mapping(x, y)
        assert pearson(mapped, y) > raw
        rep = correlation_report(x, y, logistic_pcc=True)
        assert rep.pcc >= raw
        assert rep.srcc == 1.0


class TestPoolingSpec:
    def test_roundtrip_and_validation(self):
        spec = PoolingSpec()
        assert spec.to_dict() == {"p": 2.0, "map_index": 2}
        spec.validate()
        with pytest.raises(InputError):
            PoolingSpec(p=0.0).validate()
        with pytest.raises(InputError):
            PoolingSpec(map_index=0).validate()
