import numpy as np
import pytest

from levyreg.fields import (
    canonical_params,
    catalogue_names,
    make_diffusion_field,
    make_scalar_field,
)


class TestCatalogue:
    def test_names(self):
        assert catalogue_names() == ["affine", "arctan-diffusion", "constant",
                                     "linear", "logistic-slope"]

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            make_scalar_field("cubic")

    def test_unknown_param(self):
        with pytest.raises(ValueError, match="bad parameters"):
            make_scalar_field("linear", {"slop": 1.0})

    def test_defaults_filled(self):
        params = canonical_params("logistic-slope", {"high": 2.0})
        assert params["high"] == 2.0
        assert set(params) == {"low", "high", "rate", "center"}

    @pytest.mark.parametrize("name,params", [
        ("constant", {"level": 0.4}),
        ("linear", {"slope": -0.7}),
        ("affine", {"slope": 0.3, "intercept": 1.1}),
        ("logistic-slope", {"low": 0.2, "high": 1.4, "rate": 0.8, "center": -0.3}),
        ("arctan-diffusion", {"amplitude": 0.9, "curvature": 0.6, "center": 0.1}),
    ])
    def test_derivatives_consistent(self, name, params):
        f = make_scalar_field(name, params)
        f.validate(-3.0, 3.0)

    @pytest.mark.parametrize("name,params", [
        ("constant", {"level": 0.4}),
        ("linear", {"slope": -0.7}),
        ("logistic-slope", {"low": 0.2, "high": 1.4, "rate": 0.8, "center": -0.3}),
        ("arctan-diffusion", {"amplitude": 0.9, "curvature": 0.6, "center": 0.1}),
    ])
    def test_array_evaluation_matches_scalar(self, name, params):
        f = make_scalar_field(name, params)
        xs = np.linspace(-2.0, 2.0, 9)
        vec_v = np.asarray(f.value(xs), dtype=float)
        vec_d = np.asarray(f.derivative(xs), dtype=float)
        for i, x in enumerate(xs):
            assert vec_v[i] == pytest.approx(float(f.value(float(x))), abs=1e-14)
            assert vec_d[i] == pytest.approx(float(f.derivative(float(x))), abs=1e-14)

    def test_logistic_strictly_increasing(self):
        # strict in exact arithmetic; checked where float64 can resolve it
        f = make_scalar_field("logistic-slope",
                              {"low": 0.0, "high": 1.0, "rate": 2.0, "center": 0.0})
        xs = np.linspace(-8.0, 8.0, 101)
        vals = np.asarray(f.value(xs))
        assert np.all(np.diff(vals) > 0.0)
        assert np.all(np.asarray(f.derivative(xs)) > 0.0)

    def test_logistic_stable_far_out(self):
        f = make_scalar_field("logistic-slope",
                              {"low": 0.0, "high": 1.0, "rate": 5.0, "center": 0.0})
        assert float(f.value(1e6)) == pytest.approx(1.0)
        assert float(f.value(-1e6)) == pytest.approx(0.0)
        assert np.isfinite(f.derivative(np.array([-1e6, 0.0, 1e6]))).all()

    def test_diffusion_min_abs_witnesses(self):
        sig = make_diffusion_field("logistic-slope",
                                   {"low": 0.5, "high": 1.5, "rate": 1.0,
                                    "center": 0.0})
        assert sig.min_abs == 0.5
        sig.validate(-5.0, 5.0)
        quad = make_diffusion_field("arctan-diffusion",
                                    {"amplitude": 0.8, "curvature": 1.0,
                                     "center": 0.0})
        assert quad.min_abs == 0.8
        lin = make_diffusion_field("linear", {"slope": 1.0})
        assert lin.min_abs is None
