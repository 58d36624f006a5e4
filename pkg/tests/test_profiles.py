import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpcflow.errors import ParameterError
from hpcflow.profiles import AlphaProfile, FieldSpec, alpha_from_dict, field_from_dict, notch_shape

PROFILES = [
    AlphaProfile.constant(0.7),
    AlphaProfile("sine-power", (1.0, 0.4, 2.0)),
    AlphaProfile("sine-power-6", (1.0, 0.4)),
    AlphaProfile("piecewise-linear-notch", (1.0, 0.4)),
    AlphaProfile("cosine", (1.0, 0.1, 2.0)),
    AlphaProfile("tabulated", (1.0, 0.5, 0.8, 0.9)),
]


class TestAlphaProfile:
    @pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.kind)
    @given(x=st.floats(0, 1, exclude_max=True))
    def test_nonnegative_and_periodic(self, prof, x):
        assert prof(x) >= 0
        assert prof(x + 1.0) == pytest.approx(prof(x), abs=1e-12)

    @pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.kind)
    def test_bounds_contain_samples(self, prof):
        lo, hi = prof.bounds()
        vals = prof(np.linspace(0, 1, 4001, endpoint=False))
        assert vals.min() >= lo - 1e-12
        assert vals.max() <= hi + 1e-12

    def test_notch_shape_breakpoints(self):
        x = np.array([0.3, 0.45, 0.4625, 0.475, 0.5, 0.525, 0.5375, 0.55, 0.7])
        np.testing.assert_allclose(notch_shape(x), [0, 0, 0.5, 1, 1, 1, 0.5, 0, 0], atol=1e-12)

    def test_negative_profile_rejected(self):
        with pytest.raises(ParameterError):
            AlphaProfile("cosine", (0.05, 0.1, 1.0))

    def test_non_integer_frequency_rejected(self):
        with pytest.raises(ParameterError):
            AlphaProfile("cosine", (1.0, 0.1, 1.5))

    def test_wrong_parameter_count(self):
        with pytest.raises(ParameterError):
            AlphaProfile("sine-power", (1.0, 0.4))

    def test_first_coordinate_used_in_nd(self):
        prof = AlphaProfile("cosine", (1.0, 0.1, 2.0))
        x = np.array([0.1, 0.2])
        assert np.array_equal(prof((x, np.array([0.9, 0.3]))), prof(x))

    @pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.kind)
    def test_dict_round_trip(self, prof):
        assert alpha_from_dict(prof.to_dict()) == prof


class TestFieldSpec:
    def test_indicator(self):
        f = FieldSpec("indicator-below", (1.5, 0.2))
        np.testing.assert_array_equal(f(0.3, np.array([0.0, 0.2, 0.2001])), [1.5, 1.5, 0.0])

    def test_sine_band_values(self):
        f = FieldSpec("sine-power-band", (1.5, 6.0, 1.0, 0.0, 0.5))
        assert f(0.0, 0.25) == pytest.approx(1.5)
        assert f(0.0, 0.75) == 0.0

    @pytest.mark.parametrize(
        "spec",
        [
            FieldSpec.constant(3.0),
            FieldSpec("indicator-below", (1.5, 0.2)),
            FieldSpec("sine-power-band", (1.5, 6.0, 1.0, 0.0, 0.5)),
            FieldSpec("sine-power-band", (0.7, 4.0, 2.0, 0.1, 0.9)),
        ],
        ids=lambda s: s.kind,
    )
    def test_closed_integral_matches_quadrature(self, spec):
        z = np.linspace(0, 1, 11)
        s = np.linspace(0, 1, 200001)
        x = 0.3
        vals = spec(x, s)
        for zz in z:
            mask = s >= zz
            ref = np.trapezoid(vals[mask], s[mask]) if mask.sum() > 1 else 0.0
            assert spec.integral_to_one(x, zz) == pytest.approx(ref, abs=2e-5)

    def test_odd_power_has_no_closed_form(self):
        assert not FieldSpec("sine-power-band", (1.0, 3.0, 1.0, 0.0, 0.5)).has_closed_integral()

    def test_zero_detection(self):
        assert FieldSpec.zero().is_zero
        assert FieldSpec.constant(0.0).is_zero
        assert not FieldSpec.constant(0.1).is_zero

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            FieldSpec("gaussian", (1.0,))

    def test_dict_round_trip(self):
        f = FieldSpec("indicator-below", (1.5, 0.2))
        assert field_from_dict(f.to_dict()) == f
