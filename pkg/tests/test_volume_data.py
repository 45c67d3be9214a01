import gzip
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from oracles import trilinear_ref
from volsr.errors import (
    BadShape,
    CorruptHeader,
    DimensionTooSmall,
    MissingFile,
    NegativeSigma,
    NonFiniteData,
    OddDimension,
    ShapeMismatch,
    TooFewSubjects,
    VolumeTooSmall,
)
from volsr.volume_data import (
    DatasetSplit,
    DegradationSpec,
    Volume,
    add_rician_noise,
    crop_to_even,
    degrade,
    downsample_trilinear,
    extract_patch_pair,
    load_volume,
    normalize_volume,
    read_manifest,
    resample_trilinear,
    save_volume,
    split_subjects,
    synthesize_spatial_map,
    upsample_trilinear,
    write_manifest,
    write_nifti,
)


def _raw(tmp_path, data, name="v.raw", shape=None, **meta):
    p = tmp_path / name
    p.write_bytes(np.asarray(data, dtype="<f4").tobytes())
    header = {"shape": list(shape or np.shape(data)), **meta}
    p.with_suffix(".json").write_text(json.dumps(header))
    return p


# ------------------------------------------------------------------ loading

class TestLoadVolume:
    def test_raw_f32_full_size(self, tmp_path, rng):
        data = rng.random((53, 63, 52)).astype(np.float32)
        v = load_volume(_raw(tmp_path, data, subject="s1", component="ACC"))
        assert v.shape == (53, 63, 52)
        assert v.subject_id == "s1" and v.component_label == "ACC"
        np.testing.assert_array_equal(v.data, data.astype(np.float64))
        assert v.value_range == (float(data.min()), float(data.max()))

    def test_zeros_value_range(self, tmp_path):
        v = load_volume(_raw(tmp_path, np.zeros((4, 4, 4))))
        assert v.value_range == (0.0, 0.0)

    def test_short_payload_is_corrupt(self, tmp_path):
        with pytest.raises(CorruptHeader):
            load_volume(_raw(tmp_path, np.zeros(7), shape=(2, 2, 2)))

    def test_missing_file_and_sidecar(self, tmp_path):
        with pytest.raises(MissingFile):
            load_volume(tmp_path / "nope.raw")
        p = tmp_path / "bare.raw"
        p.write_bytes(b"\0" * 32)
        with pytest.raises(MissingFile):
            load_volume(p)

    def test_nan_rejected(self, tmp_path):
        data = np.zeros((2, 2, 2))
        data[1, 1, 1] = np.nan
        with pytest.raises(NonFiniteData):
            load_volume(_raw(tmp_path, data))

    def test_bad_sidecar(self, tmp_path):
        p = _raw(tmp_path, np.zeros((2, 2, 2)))
        p.with_suffix(".json").write_text("{not json")
        with pytest.raises(CorruptHeader):
            load_volume(p)

    @pytest.mark.parametrize("name", ["vol.nii", "vol.nii.gz"])
    def test_nifti_round_trip(self, tmp_path, rng, name):
        data = rng.random((5, 6, 7)).astype(np.float32)
        v = load_volume(write_nifti(tmp_path / name, data))
        assert v.shape == (5, 6, 7)
        np.testing.assert_array_equal(v.data, data.astype(np.float64))

    def test_nifti_big_endian_int16(self, tmp_path):
        # hand-built header, independent of write_nifti
        data = np.arange(24, dtype=">i2").reshape(2, 3, 4)
        hdr = bytearray(352)
        hdr[0:4] = (348).to_bytes(4, "big")
        for i, d in enumerate((3, 2, 3, 4, 1, 1, 1, 1)):
            hdr[40 + 2 * i : 42 + 2 * i] = d.to_bytes(2, "big", signed=True)
        hdr[70:72] = (4).to_bytes(2, "big")
        hdr[108:112] = np.array(352.0, dtype=">f4").tobytes()
        p = tmp_path / "be.nii.gz"
        p.write_bytes(gzip.compress(bytes(hdr) + data.tobytes(order="F")))
        np.testing.assert_array_equal(load_volume(p).data, data.astype(np.float64))

    def test_nifti_truncated(self, tmp_path):
        p = tmp_path / "t.nii"
        p.write_bytes(b"\0" * 100)
        with pytest.raises(CorruptHeader):
            load_volume(p)

    def test_save_round_trip(self, tmp_path, rng):
        v = Volume(rng.random((3, 4, 5)).astype(np.float32), "subj", "PCC")
        w = load_volume(save_volume(v, tmp_path / "x" / "v.raw"))
        np.testing.assert_array_equal(w.data, v.data)
        assert (w.subject_id, w.component_label) == ("subj", "PCC")

    def test_manifest(self, tmp_path):
        recs = [{"path": "a.raw", "subject": "s", "component": "ACC"}]
        assert read_manifest(write_manifest(recs, tmp_path / "m.json")) == recs
        (tmp_path / "bad.json").write_text(json.dumps([{"path": "a"}]))
        with pytest.raises(CorruptHeader):
            read_manifest(tmp_path / "bad.json")


class TestVolumeType:
    def test_rejects_nonfinite_and_rank(self):
        with pytest.raises(NonFiniteData):
            Volume(np.full((2, 2, 2), np.inf))
        with pytest.raises(BadShape):
            Volume(np.zeros((2, 2)))


# ---------------------------------------------------------------- intensity

class TestNormalize:
    def test_two_point(self):
        v = normalize_volume(Volume(np.array([2.0, 4.0]).reshape(1, 1, 2)))
        np.testing.assert_array_equal(v.data.ravel(), [0.0, 1.0])
        assert v.value_range == (2.0, 4.0)

    def test_constant_maps_to_zero(self):
        v = normalize_volume(Volume(np.full((2, 2, 2), 5.0)))
        assert not v.data.any() and v.value_range == (5.0, 5.0)

    def test_unit_interval_unchanged(self):
        d = np.array([0.0, 0.5, 1.0]).reshape(1, 1, 3)
        np.testing.assert_array_equal(normalize_volume(Volume(d)).data, d)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
    def test_range_property(self, values):
        v = normalize_volume(Volume(np.array(values).reshape(1, 1, -1)))
        assert v.data.min() >= 0 and v.data.max() <= 1


class TestCrop:
    def test_odd_mni_grid(self):
        assert crop_to_even(Volume(np.zeros((53, 63, 52)))).shape == (52, 62, 52)

    def test_even_untouched(self, rng):
        d = rng.random((32, 32, 32))
        np.testing.assert_array_equal(crop_to_even(Volume(d)).data, d)

    def test_drops_last_slice(self, rng):
        d = rng.random((3, 4, 5))
        np.testing.assert_array_equal(crop_to_even(Volume(d)).data, d[:2, :4, :4])

    def test_size_one_axis(self):
        with pytest.raises(DimensionTooSmall):
            crop_to_even(Volume(np.zeros((1, 2, 3))))


# --------------------------------------------------------------- resampling

class TestTrilinear:
    def test_shape(self):
        assert downsample_trilinear(Volume(np.zeros((52, 62, 52)))).shape == (26, 31, 26)

    def test_odd_rejected(self):
        with pytest.raises(OddDimension):
            downsample_trilinear(Volume(np.zeros((5, 4, 4))))

    @given(st.tuples(*[st.integers(1, 32)] * 3), st.floats(0, 1))
    def test_constant_preserved(self, half, c):
        shape = tuple(2 * h for h in half)
        out = downsample_trilinear(Volume(np.full(shape, c))).data
        np.testing.assert_allclose(out, c, atol=1e-12)

    @pytest.mark.parametrize("in_shape,out_shape", [((8, 6, 4), (4, 3, 2)), ((3, 4, 5), (6, 8, 10)),
                                                    ((6, 5, 7), (3, 9, 4))])
    def test_matches_pointwise_oracle(self, rng, in_shape, out_shape):
        a = rng.random(in_shape)
        np.testing.assert_allclose(resample_trilinear(a, out_shape), trilinear_ref(a, out_shape), atol=1e-12)

    def test_ramp_halves_to_ramp(self):
        ramp = np.broadcast_to(np.arange(8.0)[:, None, None], (8, 4, 4)).copy()
        out = downsample_trilinear(Volume(ramp)).data
        # sample centres of the coarse grid sit between fine voxels 2i and 2i+1
        np.testing.assert_allclose(out[:, 0, 0], [0.5, 2.5, 4.5, 6.5])

    def test_downsample_is_block_average(self, rng):
        a = rng.random((6, 8, 4))
        block = a.reshape(3, 2, 4, 2, 2, 2).mean(axis=(1, 3, 5))
        np.testing.assert_allclose(downsample_trilinear(Volume(a)).data, block, atol=1e-12)

    def test_upsample_constant_and_shape(self):
        v = upsample_trilinear(Volume(np.full((26, 31, 26), 0.3)))
        assert v.shape == (52, 62, 52)
        np.testing.assert_allclose(v.data, 0.3)


# -------------------------------------------------------------------- noise

class TestRician:
    def test_sigma_zero_is_identity(self, rng):
        d = rng.random((4, 5, 6))
        np.testing.assert_array_equal(add_rician_noise(Volume(d), 0.0, 1).data, d)

    def test_negative_sigma(self):
        with pytest.raises(NegativeSigma):
            add_rician_noise(np.zeros((2, 2, 2)), -0.1, 0)

    def test_rayleigh_moments_and_ks(self):
        x = add_rician_noise(np.zeros((100, 100, 100)), 1.0, 7).ravel()
        assert abs(x.mean() - math.sqrt(math.pi / 2)) < 0.01
        assert abs(x.var() - (2 - math.pi / 2)) < 0.01
        assert stats.kstest(x[:100_000], stats.rayleigh(scale=1.0).cdf).statistic < 0.01

    def test_high_snr_mean(self):
        x = add_rician_noise(np.full((50, 50, 40), 10.0), 0.01, 3)
        assert abs(x.mean() - 10.0) < 0.001

    def test_deterministic(self, rng):
        d = rng.random((4, 4, 4))
        np.testing.assert_array_equal(add_rician_noise(d, 0.1, 5), add_rician_noise(d, 0.1, 5))
        assert not np.array_equal(add_rician_noise(d, 0.1, 5), add_rician_noise(d, 0.1, 6))

    def test_degrade_clean_and_noisy(self, rng):
        gt = Volume(rng.random((8, 8, 8)), "s", "ACC")
        clean = degrade(gt, DegradationSpec(rician_enabled=False))
        np.testing.assert_array_equal(clean.data, downsample_trilinear(gt).data)
        noisy = degrade(gt, DegradationSpec(rician_sigma=0.05, seed=1))
        assert noisy.shape == (4, 4, 4) and not np.array_equal(noisy.data, clean.data)
        np.testing.assert_array_equal(noisy.data, degrade(gt, DegradationSpec(rician_sigma=0.05, seed=1)).data)


# -------------------------------------------------------------------- split

class TestSplit:
    @pytest.mark.parametrize("n,sizes", [(100, (90, 5, 5)), (20, (18, 1, 1)), (200, (180, 10, 10)), (3, (1, 1, 1))])
    def test_sizes(self, n, sizes):
        s = split_subjects([f"s{i}" for i in range(n)], 0)
        assert (len(s.train_subjects), len(s.val_subjects), len(s.test_subjects)) == sizes

    def test_too_few(self):
        with pytest.raises(TooFewSubjects):
            split_subjects(["a", "b", "b"], 0)

    @given(st.integers(3, 10_000), st.integers(0, 2**32 - 1))
    def test_partition(self, n, seed):
        ids = [f"sub{i}" for i in range(n)]
        s = split_subjects(ids, seed)
        parts = [set(s.train_subjects), set(s.val_subjects), set(s.test_subjects)]
        assert sum(map(len, parts)) == n
        assert set().union(*parts) == set(ids)
        assert len(s.train_subjects) >= len(s.val_subjects) == len(s.test_subjects) >= 1

    def test_subject_level_and_deterministic(self):
        ids = [f"s{i % 30}" for i in range(90)]
        a, b = split_subjects(ids, 4), split_subjects(list(reversed(ids)), 4)
        assert a == b
        assert len(a.train_subjects) + len(a.val_subjects) + len(a.test_subjects) == 30

    def test_dict_round_trip(self):
        s = split_subjects(list("abcdefg"), 2)
        assert DatasetSplit.from_dict(json.loads(json.dumps(s.to_dict()))) == s


# ------------------------------------------------------------------ patches

class TestPatches:
    def test_alignment(self, rng):
        hr = Volume(rng.random((52, 62, 52)), "s")
        lr = downsample_trilinear(hr)
        for seed in range(20):
            p = extract_patch_pair(hr, lr, seed)
            z, y, x = p.origin_lr
            assert p.lr_patch.shape == (16, 16, 16) and p.hr_patch.shape == (32, 32, 32)
            assert p.origin_hr == (2 * z, 2 * y, 2 * x)
            np.testing.assert_array_equal(p.lr_patch, lr.data[z : z + 16, y : y + 16, x : x + 16])
            np.testing.assert_allclose(downsample_trilinear(Volume(p.hr_patch)).data, p.lr_patch, atol=1e-6)

    def test_exact_fit(self, rng):
        hr = rng.random((32, 32, 32))
        assert extract_patch_pair(hr, rng.random((16, 16, 16)), 3).origin_lr == (0, 0, 0)

    def test_too_small(self, rng):
        with pytest.raises(VolumeTooSmall):
            extract_patch_pair(rng.random((16, 16, 16)), rng.random((8, 8, 8)), 0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            extract_patch_pair(rng.random((32, 32, 32)), rng.random((16, 16, 15)), 0)

    def test_origins_cover_range(self, rng):
        hr, lr = rng.random((36, 32, 32)), rng.random((18, 16, 16))
        seen = {extract_patch_pair(hr, lr, s).origin_lr[0] for s in range(200)}
        assert seen == {0, 1, 2}


# ---------------------------------------------------------------- synthesis

class TestSynthesis:
    def test_range_and_max(self):
        v = synthesize_spatial_map((53, 63, 52), 3, 7)
        assert v.shape == (53, 63, 52)
        assert np.isfinite(v.data).all() and v.data.min() == 0.0 and v.data.max() == 1.0

    def test_deterministic(self):
        a, b = synthesize_spatial_map((16, 16, 16), 2, 9), synthesize_spatial_map((16, 16, 16), 2, 9)
        np.testing.assert_array_equal(a.data, b.data)
        assert not np.array_equal(a.data, synthesize_spatial_map((16, 16, 16), 2, 10).data)

    @pytest.mark.parametrize("shape,n", [((16, 16, 16), 0), ((4, 16, 16), 2), ((16, 16), 1)])
    def test_bad_shape(self, shape, n):
        with pytest.raises(BadShape):
            synthesize_spatial_map(shape, n, 0)
