import numpy as np
import pytest

from autorad.core.io import read_manifest
from autorad.core.names import canonical_feature_names
from autorad.core.types import DataError, ImageVolume, PatientRecord, RoiMask
from autorad.features import clinical_table
from autorad.features.extract import extract_all, extract_families, extract_table, feature_names_for, volume_ml


@pytest.fixture(scope="module")
def features(lesion):
    return extract_all(*lesion)


class TestExtractAll:
    def test_length_and_finite_core(self, features):
        assert features.shape == (len(canonical_feature_names()),) == (564,)
        assert np.isfinite(features).mean() > 0.95

    def test_deterministic(self, lesion, features):
        assert extract_all(*lesion).tobytes() == features.tobytes()

    def test_background_does_not_matter(self, lesion, features, rng):
        im, m = lesion
        vox = np.array(im.voxels)
        outside = ~m.voxels
        vox[outside] = rng.integers(-1000, 1000, outside.sum())
        got = extract_all(ImageVolume(vox, im.spacing), m)
        assert np.array_equal(got, features, equal_nan=True)

    def test_mask_mismatch(self, lesion):
        im, _ = lesion
        with pytest.raises(DataError):
            extract_all(im, RoiMask(np.ones((4, 4, 4), bool)))

    def test_single_voxel_lesion_degenerates_to_nan(self):
        im = ImageVolume(np.random.default_rng(0).normal(size=(9, 9, 3)))
        m = np.zeros((9, 9, 3), bool)
        m[4, 4, 1] = True
        fam = extract_families(im, RoiMask(m), ["GLCM", "histogram"])
        assert np.isnan(fam["GLCM"]).all()
        assert np.isfinite(fam["histogram"]).all()


class TestVolume:
    def test_millilitres(self):
        m = np.zeros((10, 10, 10), bool)
        m[:5, :5, :4] = True
        assert volume_ml(RoiMask(m, (2.0, 2.0, 5.0))) == pytest.approx(100 * 20 / 1000)


class TestExtractTable:
    def test_threads_do_not_change_values(self, written_cohort):
        recs = read_manifest(written_cohort / "manifest.csv")[:3]
        groups = ("histogram", "GLCM", "volume")
        a = extract_table(recs, groups, threads=1)
        b = extract_table(recs, groups, threads=2)
        assert a == b
        assert list(a.names) == feature_names_for(groups)
        assert a.names[-1] == "volf_volume_ml"

    def test_no_groups(self, written_cohort):
        with pytest.raises(DataError):
            extract_table(read_manifest(written_cohort / "manifest.csv"), groups=("clinical-age",))


class TestClinical:
    @pytest.fixture
    def records(self):
        return [
            PatientRecord("a", 1, 60.0, "M", "stomach"),
            PatientRecord("b", 0, None, "F", "colorectal"),
            PatientRecord("c", 0, 45.0, None, None),
        ]

    def test_columns(self, records):
        t = clinical_table(records)
        assert t.names == ("semf_age", "semf_sex", "semf_location_colorectal", "semf_location_stomach")
        assert t.groups == ("clinical-age", "clinical-sex", "clinical-location", "clinical-location")
        np.testing.assert_array_equal(
            t.values, [[60, 1, 0, 1], [np.nan, 0, 1, 0], [45, np.nan, np.nan, np.nan]]
        )

    def test_fixed_location_codes(self, records):
        t = clinical_table(records, groups=("location",), location_codes=["other", "stomach"])
        assert t.names == ("semf_location_other", "semf_location_stomach")
        assert t.values[0].tolist() == [0.0, 1.0]

    def test_subset(self, records):
        assert clinical_table(records, groups=("age",)).names == ("semf_age",)
