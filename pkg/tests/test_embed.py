import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from windcast.data import TimeSeries
from windcast.embed import (
    IDENTITY, EmbeddedDataset, ScalerParams, apply_scaler, embed, fit_scaler, invert_scaler,
    prepare, scale_dataset, unembed,
)
from windcast.errors import ArgumentError, DataError, EmbeddingError

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_small_example():
    ds = embed(TimeSeries([1.0, 2.0, 3.0, 4.0, 5.0]), 2)
    assert ds.features.tolist() == [[1, 2], [2, 3], [3, 4]]
    assert ds.targets.tolist() == [3, 4, 5]


def test_too_short():
    with pytest.raises(EmbeddingError):
        embed(np.arange(3.0), 3)
    assert len(embed(np.arange(4.0), 3)) == 1


def test_bad_lag():
    with pytest.raises(ArgumentError):
        embed(np.arange(10.0), 0)


@given(arrays(np.float64, st.integers(2, 60), elements=finite), st.integers(1, 10))
def test_embed_unembed_round_trip(v, lag):
    if v.size < lag + 1:
        return
    ds = embed(v, lag)
    assert len(ds) == v.size - lag
    assert np.array_equal(unembed(ds), v)
    # each row is the next row shifted left by one, with the previous target appended
    assert np.array_equal(ds.features[1:, :-1], ds.features[:-1, 1:])
    assert np.array_equal(ds.features[1:, -1], ds.targets[:-1])


def test_dataset_validation():
    with pytest.raises(ArgumentError):
        EmbeddedDataset(np.zeros((3, 2)), np.zeros(2), 2)
    with pytest.raises(ArgumentError):
        EmbeddedDataset(np.zeros((3, 2)), np.zeros(3), 3)
    with pytest.raises(DataError):
        EmbeddedDataset(np.array([[np.inf, 0.0]]), np.zeros(1), 2)


class TestScaler:
    def test_min_max_fits_features_and_targets_together(self):
        ds = embed(np.array([2.0, 4.0, 6.0, 10.0]), 2)
        p = fit_scaler(ds, "min_max")
        assert (p.offset, p.scale) == (2.0, 8.0)
        s = scale_dataset(ds, p)
        assert s.features.min() == 0.0 and s.targets.max() == 1.0

    def test_z_score(self):
        v = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        ds = embed(v, 1)
        p = fit_scaler(ds, "z_score")
        allv = np.concatenate([ds.features.ravel(), ds.targets])
        assert p.offset == pytest.approx(allv.mean()) and p.scale == pytest.approx(allv.std())

    @pytest.mark.parametrize("kind", ["min_max", "z_score"])
    def test_degenerate_falls_back_to_none(self, kind):
        p = fit_scaler(embed(np.full(6, 3.0), 2), kind)
        assert p.kind == "none" and p.requested == kind and p.degenerate

    def test_none_is_identity(self):
        assert fit_scaler(embed(np.arange(5.0), 2), "none") == IDENTITY

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            fit_scaler(embed(np.arange(5.0), 2), "robust")

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            apply_scaler([1.0, np.nan], ScalerParams("min_max", 0.0, 1.0))

    def test_no_double_scaling(self):
        ds = prepare(np.arange(10.0), 2, "min_max")
        with pytest.raises(ArgumentError):
            scale_dataset(ds, ds.scaler)

    @given(arrays(np.float64, st.integers(3, 40), elements=finite),
           st.sampled_from(["none", "min_max", "z_score"]))
    def test_inverse(self, v, kind):
        ds = embed(v, 2)
        p = fit_scaler(ds, kind)
        back = invert_scaler(apply_scaler(v, p), p)
        assert np.allclose(back, v, rtol=1e-12, atol=1e-9 * max(1.0, np.abs(v).max()))

    def test_dict_round_trip(self):
        p = ScalerParams("z_score", 1.5, 0.25, "z_score", False)
        assert ScalerParams.from_dict(p.to_dict()) == p


def test_year_of_hourly_data_row_count():
    assert len(embed(np.zeros(8760), 72)) == 8688
    with pytest.raises(EmbeddingError, match="73"):
        embed(np.zeros(72), 72)


def test_most_recent_value_is_last_column():
    ds = embed(np.arange(10.0), 4)
    assert np.array_equal(ds.features[:, -1] + 1, ds.targets)


def test_min_max_range_and_extrapolation():
    v = np.linspace(0.0, 20.0, 41)
    p = fit_scaler(embed(v, 3), "min_max")
    s = apply_scaler(v, p)
    assert s.min() == 0.0 and s.max() == 1.0
    assert apply_scaler([25.0], p)[0] == 1.25


def test_apply_invert_small_example():
    p = fit_scaler(embed(np.array([1.0, 3.3, 7.7, 9.0]), 1), "z_score")
    back = invert_scaler(apply_scaler([3.3, 7.7], p), p)
    assert np.allclose(back, [3.3, 7.7], rtol=1e-12, atol=0)
    assert apply_scaler([3.3], IDENTITY).tolist() == [3.3]
