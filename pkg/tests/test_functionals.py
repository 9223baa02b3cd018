"""Tests for jump test functions, atom laws and compensator integrals."""

import math

import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from martlab.functionals import (
    AtomLaw,
    CompensatorSpec,
    DomainError,
    RateDensity,
    TestFunction,
    compensator_integral,
    gamma_process,
    gamma_total,
    jump_integral,
    quadratic_variation,
    test_function as tf,
)
from martlab.models import compensator, preset
from martlab.paths import CadlagPath, JumpEvent


class TestTestFunctionValues:
    def test_identity_square(self):
        f = tf("identity")
        g = tf("square")
        assert f(3.5) == 3.5
        assert g(-2.0) == 4.0

    def test_truncations(self):
        ts = tf("truncated_square", kappa=1.0)
        assert ts(0.5) == 0.25
        assert ts(1.5) == 0.0
        ta = tf("truncated_abs", kappa=1.0)
        assert ta(0.5) == 0.25          # x^2 below 1
        assert ta(3.0) == 3.0           # |x| above 1
        pt = tf("pos_tail", kappa=1.0)
        assert pt(2.0) == 2.0
        assert pt(0.5) == 0.0
        assert pt(-5.0) == 0.0

    def test_log_family(self):
        assert tf("log1p")(math.e - 1.0) == pytest.approx(1.0)
        assert tf("xm_log")(0.0) == 0.0
        # (1+x)log(1+x) - x at x = e - 1 is e - e + 1 = 1
        assert tf("entropy")(math.e - 1.0) == pytest.approx(1.0)
        assert tf("expm")(1.0) == pytest.approx(math.e - 1.0)

    def test_entropy_at_minus_one_is_one(self):
        # continuous extension: (1+x)log(1+x) -> 0, -x -> 1
        assert tf("entropy")(-1.0) == 1.0

    def test_log_family_domain_errors(self):
        for tag in ("log1p", "xm_log"):
            with pytest.raises(DomainError):
                tf(tag)(-1.0)
        for tag in ("log1p", "xm_log", "entropy"):
            with pytest.raises(DomainError):
                tf(tag)(-1.5)

    def test_custom_and_unknown(self):
        f = tf("custom", fn=lambda x: 2.0 * x)
        assert f(3.0) == 6.0
        with pytest.raises(ValueError):
            tf("no-such-tag")(1.0)

    @given(st.floats(min_value=-0.999, max_value=50.0))
    def test_xm_log_nonnegative(self, x):
        # x - log(1+x) >= 0 with equality only at 0
        assert tf("xm_log")(x) >= 0.0

    @given(st.floats(min_value=-1.0, max_value=50.0))
    def test_entropy_nonnegative(self, x):
        assert tf("entropy")(x) >= -1e-15


class TestAtomLaw:
    def test_integral_matches_manual_sum(self):
        law = AtomLaw(time=1.0, outcomes=((1.0, 0.25), (-0.5, 0.5)))
        f = tf("square")
        assert law.integral(f) == pytest.approx(0.25 * 1.0 + 0.5 * 0.25)

    def test_gamma_is_minus_log_integral(self):
        law = AtomLaw(time=1.0, outcomes=((1.0, 0.25), (-0.5, 0.5)))
        expected = -(0.25 * math.log1p(1.0) + 0.5 * math.log1p(-0.5))
        assert law.gamma() == pytest.approx(expected, abs=1e-15)

    def test_zero_mass_outcomes_ignored(self):
        law = AtomLaw(time=1.0, outcomes=((-2.0, 0.0), (0.5, 1.0)))
        # the mass-zero outcome at -2 would break log1p if visited
        assert law.integral(tf("log1p")) == pytest.approx(
            math.log1p(0.5))


class TestPathFunctionals:
    def test_quadratic_variation_is_sum_of_squared_jumps(self):
        p = CadlagPath(
            initial=0.0, horizon=5.0,
            jumps=(JumpEvent(1.0, 2.0), JumpEvent(3.0, -0.5)),
        )
        qv = quadratic_variation(p)
        assert qv.value_at(0.5) == 0.0
        assert qv.value_at(2.0) == pytest.approx(4.0)
        assert qv.value_at(5.0) == pytest.approx(4.25)

    def test_quadratic_variation_includes_diffusion_rate(self):
        p = CadlagPath(initial=0.0, horizon=4.0, jumps=(),
                       diffusion_qv_rate=0.5)
        qv = quadratic_variation(p)
        assert qv.value_at(4.0) == pytest.approx(2.0)

    def test_jump_integral_running_sum(self):
        p = CadlagPath(
            initial=0.0, horizon=5.0,
            jumps=(JumpEvent(1.0, 2.0), JumpEvent(3.0, -0.5)),
        )
        s = jump_integral(p, tf("log1p"))
        assert s.value_at(2.0) == pytest.approx(math.log(3.0))
        assert s.value_at(5.0) == pytest.approx(
            math.log(3.0) + math.log(0.5))


class TestCompensatorIntegral:
    def test_atoms_only(self):
        comp = CompensatorSpec(atoms=(
            AtomLaw(1.0, ((0.5, 1.0),)),
            AtomLaw(2.0, ((-0.25, 1.0),)),
        ))
        f = tf("identity")
        assert compensator_integral(comp, f, 1.5) == pytest.approx(0.5)
        assert compensator_integral(comp, f, 2.0) == pytest.approx(0.25)

    def test_rate_part_against_quadrature_oracle(self):
        # lam(s) = 2s, mark(s) = 1, so x*nu over [0, t] is t^2
        rate = RateDensity(
            lam=lambda s: 2.0 * s,
            Lam=lambda s: s * s,
            Lam_inf=math.inf,
            mark=lambda s: 1.0,
        )
        comp = CompensatorSpec(rate=rate)
        val = compensator_integral(comp, tf("identity"), 3.0)
        oracle, _ = quad(lambda s: 2.0 * s, 0.0, 3.0)
        assert val == pytest.approx(oracle, rel=1e-10)
        assert val == pytest.approx(9.0, rel=1e-10)

    def test_rate_part_killed_at_rho(self):
        rate = RateDensity(
            lam=lambda s: 1.0, Lam=lambda s: s, Lam_inf=math.inf,
            mark=lambda s: 1.0,
        )
        comp = CompensatorSpec(rate=rate)
        f = tf("identity")
        assert compensator_integral(comp, f, 10.0, rho=4.0) == pytest.approx(4.0)

    def test_divergent_tag_at_infinity(self):
        rate = RateDensity(
            lam=lambda s: 1.0, Lam=lambda s: s, Lam_inf=math.inf,
            mark=lambda s: 1.0,
        )
        comp = CompensatorSpec(rate=rate, divergent_tags=("identity",))
        assert compensator_integral(
            comp, tf("identity"), math.inf) == math.inf

    def test_preset_compensator_mean_zero_atoms(self):
        # compensated models charge mean-zero atom laws
        comp = compensator(preset("ui-summable"))
        f = tf("identity")
        for atom in comp.atoms[:50]:
            assert atom.integral(f) == pytest.approx(0.0, abs=1e-15)


class TestGamma:
    def test_gamma_process_zero_off_atoms(self):
        comp = compensator(preset("ui-summable"))
        assert gamma_process(comp, 0.5) == 0.0

    def test_gamma_total_is_cumulative(self):
        comp = compensator(preset("ui-summable"))
        times = [a.time for a in comp.atoms[:10]]
        total = math.fsum(gamma_process(comp, t) for t in times)
        assert gamma_total(comp, times[-1]) == pytest.approx(total, abs=1e-15)

    def test_gamma_frozen_value_two_point_atom(self):
        # law {(1, 1/3), (-1/2, 2/3)}: gamma = -(log 2)/3 - (2/3) log(1/2)
        law = AtomLaw(1.0, ((1.0, 1.0 / 3.0), (-0.5, 2.0 / 3.0)))
        expected = (1.0 / 3.0) * math.log(2.0)
        assert law.gamma() == pytest.approx(expected, abs=1e-15)
