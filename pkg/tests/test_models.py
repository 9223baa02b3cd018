"""Tests for the model catalogue, presets, sampling and serialization."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from martlab import models
from martlab.functionals import TestFunction
from martlab.models import (
    COX_FAMILIES,
    DUAL_RATE_NAME,
    MARTINGALE_PRESETS,
    InvalidParameters,
    OracleUnavailable,
    UnknownPreset,
    analytic_oracle,
    compensator,
    model_from_dict,
    model_to_dict,
    preset,
    preset_ids,
    rng_for,
    sample_cox_arrays,
    sample_path,
    sample_step_matrix,
    sample_shock_y,
    shock_density,
    shock_moments,
    shock_survival,
)


class TestRng:
    def test_deterministic(self):
        a = rng_for(7, salt=3, index=2).random(5)
        b = rng_for(7, salt=3, index=2).random(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = rng_for(7, salt=3, index=2).random(5)
        b = rng_for(7, salt=3, index=3).random(5)
        c = rng_for(7, salt=4, index=2).random(5)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestPresets:
    def test_catalogue_complete(self):
        ids = preset_ids()
        assert len(ids) == 16
        for pid in ids:
            m = preset(pid)
            assert m.preset_id == pid
            assert m.horizon > 0.0

    def test_aliases(self):
        assert preset("ex-5.16").preset_id == "ex-5.9"
        assert preset("ex-5.16-part-2").kind == "heavy_shock_one_step"

    def test_horizon_override(self):
        m = preset("ex-6.2-2", horizon=100.0)
        assert m.horizon == 100.0
        c = preset("ex-6.6", horizon=8.0)
        assert c.horizon == 8.0
        assert all(comp.horizon == 8.0 for comp in c.components)

    def test_unknown_preset(self):
        with pytest.raises(UnknownPreset):
            preset("no-such-example")

    def test_oracle_for_every_preset(self):
        for pid in preset_ids():
            oracle = analytic_oracle(preset(pid))
            assert oracle.converges in ("yes", "no", "mixed")

    def test_oracle_unavailable_for_ad_hoc_model(self):
        m = models.TabulatedSteps(steps=(((1.0, 0.5), (-1.0, 0.5)),),
                                  horizon=4.0)
        with pytest.raises(OracleUnavailable):
            analytic_oracle(m)

    def test_martingale_presets_exclude_drifting_models(self):
        assert "ex-6.7" not in MARTINGALE_PRESETS
        assert "remark-4.3" not in MARTINGALE_PRESETS
        assert "ui-summable" in MARTINGALE_PRESETS


class TestCompensators:
    def test_step_preset_atoms_mean_zero(self):
        ident = TestFunction("identity")
        for pid in ("ex-6.2-2", "ex-6.3-1", "ex-6.5", "ui-summable"):
            comp = compensator(preset(pid))
            for atom in comp.atoms[:30]:
                assert atom.integral(ident) == pytest.approx(0.0, abs=1e-14)

    def test_cox_antiderivatives_match_quadrature(self):
        for fam in COX_FAMILIES.values():
            for tag, anti in fam.antiderivatives.items():
                F = TestFunction(tag)
                got = anti(3.0) - anti(0.0)
                ref, _ = quad(lambda s: F(fam.mark(s)) * fam.lam(s), 0.0, 3.0,
                              epsabs=1e-12, epsrel=1e-12)
                assert got == pytest.approx(ref, abs=1e-9), (fam.name, tag)

    def test_cox_lam_antiderivative_consistent(self):
        for fam in COX_FAMILIES.values():
            ref, _ = quad(fam.lam, 0.0, 5.0, epsabs=1e-12, epsrel=1e-12)
            assert fam.Lam(5.0) - fam.Lam(0.0) == pytest.approx(ref, abs=1e-9)
            # inverse really inverts on the reachable range
            for u in (0.1, 0.5, 0.9):
                if u < fam.Lam_inf:
                    assert fam.Lam(fam.Lam_inv(u)) == pytest.approx(u, abs=1e-9)

    def test_dual_family_tilt_identities(self):
        # the dual family has rate lam(1 + mark) and mark -x/(1+x)
        for name, dual_name in DUAL_RATE_NAME.items():
            if name.startswith("dual_"):
                continue
            fam, dual = COX_FAMILIES[name], COX_FAMILIES[dual_name]
            for s in (0.0, 0.3, 1.0, 4.0):
                x = fam.mark(s)
                assert dual.lam(s) == pytest.approx(
                    fam.lam(s) * (1.0 + x), rel=1e-12)
                assert dual.mark(s) == pytest.approx(
                    -x / (1.0 + x), rel=1e-12)
            assert DUAL_RATE_NAME[dual_name] == name


class TestShockLaw:
    def test_survival_boundary_and_monotone(self):
        assert shock_survival(0.0) == pytest.approx(1.0)
        ys = np.linspace(0.0, 50.0, 200)
        vals = [shock_survival(y) for y in ys]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_density_integrates_survival(self):
        # -d/dy S(y) should equal the density
        for y in (0.0, 0.5, 2.0, 10.0):
            h = 1e-6 * (1.0 + y)
            num = (shock_survival(y - h) - shock_survival(y + h)) / (2.0 * h)
            assert shock_density(y) == pytest.approx(num, rel=1e-5)

    def test_moments_match_survival_integral(self):
        mean, theta = shock_moments()
        # oracle: E[Y] = int_0^inf S(y) dy, computed as t = log(1+y)
        # substitution on [0, log(1+Y)] plus the analytic tail
        # int_Y^inf dy/((1+y) log(e+y)^2) = 1/log(e+Y) up to O(1/Y)
        big = 1e10
        head, _ = quad(
            lambda t: 1.0 / math.log(math.e + math.expm1(t)) ** 2,
            0.0, math.log1p(big), epsabs=1e-11, epsrel=1e-11, limit=400,
        )
        ref = head + 1.0 / math.log(math.e + big)
        assert mean == pytest.approx(ref, abs=1e-7)
        # theta solves theta*E[Y] = (1-theta)/2 (mean-zero one-step law)
        assert theta * mean == pytest.approx((1.0 - theta) / 2.0, abs=1e-12)

    def test_sampler_matches_survival(self):
        y = sample_shock_y(rng_for(0, salt=55), size=200_000)
        assert np.all(y >= 0.0)
        for q in (0.5, 2.0, 10.0):
            emp = float(np.mean(y > q))
            se = math.sqrt(shock_survival(q) / 200_000.0)
            assert abs(emp - shock_survival(q)) < 5.0 * se + 1e-4


class TestSampling:
    def test_step_matrix_deterministic(self):
        m = preset("ex-6.2-2")
        a = sample_step_matrix(m, 50, seed=3, salt=1)
        b = sample_step_matrix(m, 50, seed=3, salt=1)
        assert np.array_equal(a, b)
        c = sample_step_matrix(m, 50, seed=4, salt=1)
        assert not np.array_equal(a, c)

    def test_step_matrix_outcomes_and_mean(self):
        m = preset("ex-6.3-1")
        mat = sample_step_matrix(m, 100_000, seed=0, salt=9)
        for i in range(5):
            sizes = {x for x, _ in m.outcomes(i + 1)}
            assert set(np.unique(mat[:, i])) <= sizes
            # empirical column mean near zero (law is mean-zero)
            sd = float(np.std(mat[:, i]))
            assert abs(float(np.mean(mat[:, i]))) < 5.0 * sd / math.sqrt(1e5)

    def test_step_matrix_rejects_cox(self):
        with pytest.raises(InvalidParameters):
            sample_step_matrix(preset("ex-6.4"), 10, seed=0)

    def test_cox_arrays_no_jump_probability(self):
        rho, sizes = sample_cox_arrays(preset("ex-6.4"), 100_000, seed=1, salt=2)
        # Lam_inf = 1 so the no-jump event has probability exp(-1)
        freq = float(np.mean(np.isinf(rho)))
        se = math.sqrt(math.exp(-1.0) * (1.0 - math.exp(-1.0)) / 1e5)
        assert abs(freq - math.exp(-1.0)) < 5.0 * se
        fam = preset("ex-6.4").family
        finite = np.isfinite(rho) & (rho <= 32.0)
        marks = np.array([fam.mark(r) for r in rho[finite]])
        assert np.allclose(sizes[finite], marks)

    def test_cox_time_transform_is_unit_exponential(self):
        m = preset("ex-6.3-2")
        rho, _ = sample_cox_arrays(m, 100_000, seed=5, salt=2)
        lam_rho = np.array([m.family.Lam(r) for r in rho[np.isfinite(rho)]])
        # Lam(rho) ~ Exp(1): check a few quantiles
        for q in (0.25, 0.5, 0.75):
            emp = float(np.quantile(lam_rho, q))
            assert emp == pytest.approx(-math.log(1.0 - q), abs=0.02)

    def test_sample_path_structure(self):
        m = preset("ex-6.2-2")
        p = sample_path(m, seed=0, salt=7, index=0)
        assert all(float(j.time).is_integer() for j in p.jumps)
        assert p.horizon == m.horizon
        cox = sample_path(preset("ex-6.4"), seed=0, salt=7, index=1)
        assert len(cox.jumps) <= 1


class TestSerialization:
    def test_round_trip_every_preset(self):
        for pid in preset_ids():
            m = preset(pid)
            d = model_to_dict(m)
            back = model_from_dict(d)
            d2 = model_to_dict(back)
            d2.pop("preset_id", None)
            d.pop("preset_id", None)
            assert d == d2

    def test_from_dict_preset_shortcut(self):
        m = model_from_dict({"preset": "ex-6.5", "horizon": 9.0})
        assert m.preset_id == "ex-6.5"
        assert m.horizon == 9.0

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameters):
            model_from_dict({"kind": "bogus", "horizon": 1.0})
