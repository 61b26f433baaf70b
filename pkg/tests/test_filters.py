import numpy as np
import pytest

from autorad.core.names import GABOR_FREQUENCIES, LBP_PARAMS, LOG_SIGMAS, STAT_NAMES
from autorad.core.types import ImageVolume, RoiMask
from autorad.features.filters import (
    filter_bank_features,
    frangi_2d,
    gabor_magnitude,
    hessian_2d,
    lbp,
    log_filter,
    monogenic_channels,
    roi_fill,
)

STD = STAT_NAMES.index("std")
MEAN = STAT_NAMES.index("mean")


@pytest.fixture
def constant():
    return np.full((48, 48), 120.0)


class TestConstantInput:
    @pytest.mark.parametrize("f", GABOR_FREQUENCIES)
    @pytest.mark.parametrize("theta", [0.0, np.pi / 4, np.pi / 2])
    def test_gabor_zero(self, constant, f, theta):
        assert np.abs(gabor_magnitude(constant, f, theta)).max() <= 1e-8 * 120.0

    @pytest.mark.parametrize("sigma", LOG_SIGMAS)
    def test_log_zero(self, constant, sigma):
        assert np.abs(log_filter(constant, sigma)).max() <= 1e-8

    def test_frangi_zero(self, constant):
        assert np.all(frangi_2d(constant) == 0)

    @pytest.mark.parametrize("radius,points", LBP_PARAMS)
    def test_lbp_single_code(self, constant, radius, points):
        assert np.unique(lbp(constant, radius, points)).size == 1

    def test_lbp_family_std_zero(self):
        im = ImageVolume(np.full((20, 20, 3), 5.0))
        m = np.zeros((20, 20, 3), bool)
        m[5:15, 5:15, 1] = True
        out = filter_bank_features(im, RoiMask(m), ["LBP"])["LBP"]
        assert out[STD::13].tolist() == [0.0, 0.0, 0.0]


class TestResponses:
    def test_log_of_quadratic(self):
        # the Laplacian of x^2 + y^2 is 4 everywhere; the response is scaled by sigma^2
        x, y = np.mgrid[0:64, 0:64].astype(float)
        img = (x - 32) ** 2 + (y - 32) ** 2
        out = log_filter(img, 2.0)
        # kernel truncation at 4 sigma costs about 0.3 % here
        assert out[32, 32] == pytest.approx(4.0 * 2.0**2, rel=1e-2)

    def test_hessian_of_quadratic(self):
        x, y = np.mgrid[0:40, 0:40].astype(float)
        hxx, hxy, hyy = hessian_2d(3.0 * (x - 20) ** 2, 1.5)
        assert hxx[20, 20] == pytest.approx(6.0 * 1.5**2, rel=1e-2)
        assert abs(hxy[20, 20]) < 1e-8 and abs(hyy[20, 20]) < 1e-8

    def test_ridge_beats_blob(self):
        ridge = np.zeros((48, 48))
        ridge[:, 23:26] = 100.0
        blob = np.zeros((48, 48))
        yy, xx = np.mgrid[0:48, 0:48]
        r = np.sqrt(3 * 48 / np.pi)
        blob[(yy - 24) ** 2 + (xx - 24) ** 2 <= r**2] = 100.0
        inner = np.zeros((48, 48), bool)
        inner[10:38, 10:38] = True
        assert frangi_2d(ridge)[inner & (ridge > 0)].mean() > frangi_2d(blob)[inner & (blob > 0)].mean()

    def test_gabor_prefers_matching_orientation(self):
        # theta = 0 measures frequency along the second array axis (y)
        y = np.ones((64, 1)) * np.arange(64)[None, :]
        stripes = np.cos(2 * np.pi * 0.2 * y)
        along = gabor_magnitude(stripes, 0.2, 0.0)[20:44, 20:44].mean()
        across = gabor_magnitude(stripes, 0.2, np.pi / 2)[20:44, 20:44].mean()
        assert along > 5 * across

    def test_monogenic_channels_bounded(self, rng):
        ch = monogenic_channels(rng.normal(size=(40, 40)))
        assert set(ch) >= {"monogenic", "phasecong", "phasesym"}
        for k in ("phasecong", "phasesym"):
            assert np.all(ch[k] >= -1e-12) and np.all(ch[k] <= 1 + 1e-12)


class TestFilterBank:
    def test_family_sizes(self, lesion):
        out = filter_bank_features(*lesion)
        assert {k: len(v) for k, v in out.items()} == {"LBP": 39, "Gabor": 156, "LoG": 39, "vessel": 39, "local-phase": 39}
        for v in out.values():
            assert np.isfinite(v).all()

    def test_restricted_families(self, lesion):
        assert set(filter_bank_features(*lesion, families=["LoG"])) == {"LoG"}

    def test_roi_fill_uses_nearest_roi_pixel(self):
        img = np.arange(25, dtype=float).reshape(5, 5)
        msl = np.zeros((5, 5), bool)
        msl[2, 2] = True
        assert np.all(roi_fill(img, msl) == 12.0)
        msl[2, 3] = True
        out = roi_fill(img, msl)
        assert out[2, 0] == 12.0 and out[2, 4] == 13.0
        assert np.array_equal(out[msl], img[msl])
