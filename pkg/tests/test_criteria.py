"""Tests for the criterion processes, identities and Monte Carlo checks."""

import math

import pytest

from martlab.criteria import (
    CRITERION_TAGS,
    CriterionSpec,
    UnknownCriterion,
    atom_integral,
    criterion_process,
    evaluate_condition,
    identity_check,
    process_Aa,
    process_Ba,
    process_L,
    process_N,
)
from martlab.functionals import AtomLaw, DomainError, TestFunction
from martlab.models import compensator, preset, sample_path, shock_moments
from martlab.paths import CadlagPath, JumpEvent
from martlab.stochexp import phi


def one_jump(x, t=1.0, horizon=4.0):
    return CadlagPath(0.0, horizon, jumps=(JumpEvent(t, x),))


class TestAtomIntegral:
    def test_numeric_atom_matches_law(self):
        atom = AtomLaw(1.0, ((0.5, 0.4), (-0.25, 0.6)))
        for tag in ("identity", "square", "log1p", "entropy"):
            assert atom_integral(atom, tag) == pytest.approx(
                atom.integral(TestFunction(tag)), abs=1e-15)

    def test_symbolic_heavy_outcome(self):
        mean, theta = shock_moments()
        atom = AtomLaw(1.0, (("heavy", theta), (-0.5, 1.0 - theta)))
        # first moment is exact: theta E[Y] - (1-theta)/2 = 0
        assert atom_integral(atom, "identity") == pytest.approx(0.0, abs=1e-9)
        # entropy moment of the heavy branch is infinite
        assert atom_integral(atom, "entropy") == math.inf
        assert atom_integral(atom, "square") == math.inf


class TestSpecs:
    def test_unknown_tag(self):
        with pytest.raises(UnknownCriterion):
            CriterionSpec("not-a-criterion")

    def test_parameter_required(self):
        for tag in ("A_a", "B_a", "novikov_delta"):
            with pytest.raises(UnknownCriterion):
                CriterionSpec(tag)
        CriterionSpec("A_a", a=2.0)  # fine

    def test_dispatch_covers_all_tags(self):
        comp = compensator(preset("ui-summable"))
        M = sample_path(preset("ui-summable"), seed=0, salt=7, index=0)
        for tag in CRITERION_TAGS:
            a = 2.0 if tag in ("A_a", "B_a") else (
                1e-6 if tag == "novikov_delta" else None)
            p = criterion_process(CriterionSpec(tag, a=a), M, comp)
            assert p.horizon == M.horizon


class TestHandValues:
    def test_n_jumps_through_phi(self):
        M = one_jump(1.0)
        N = process_N(M)
        assert N.value_at(2.0) - N.left_limit(1.0) == pytest.approx(
            phi(1.0), abs=1e-15)
        M2 = one_jump(-0.5)
        assert process_N(M2).value_at(2.0) == pytest.approx(
            phi(-0.5), abs=1e-15)

    def test_a0_single_jump_value(self):
        # A^0 jump term is log(1+x) - x/(1+x); at x = 1: log 2 - 1/2
        A0 = process_Aa(0.0, one_jump(1.0))
        assert A0.value_at(2.0) == pytest.approx(
            math.log(2.0) - 0.5, abs=1e-15)
        assert A0.value_at(0.5) == 0.0

    def test_a1_is_log_exponential(self):
        # at a = 1 the A-process reduces to log Z: a M + jump
        # log(1+x) - x collapses with the martingale jump x
        from martlab.stochexp import stoch_exp
        M = one_jump(1.5, t=1.0)
        A1 = process_Aa(1.0, M)
        logz, sign = stoch_exp(M).log_value(2.0)
        assert sign == 1
        assert A1.value_at(2.0) == pytest.approx(logz, abs=1e-12)

    def test_jump_at_or_below_minus_one_rejected(self):
        with pytest.raises(DomainError):
            process_N(one_jump(-1.0))
        with pytest.raises(DomainError):
            process_Aa(0.0, one_jump(-1.5))


class TestIdentities:
    @pytest.mark.parametrize("pid", ["ui-summable", "ex-6.5", "ex-6.3-1"])
    @pytest.mark.parametrize("a", [0.0, 0.5, 2.0])
    def test_identity_check_small(self, pid, a):
        model = preset(pid, horizon=12.0)
        comp = compensator(model)
        worst = 0.0
        for i in range(10):
            M = sample_path(model, seed=0, salt=7, index=i)
            if any(j.size <= -1.0 for j in M.jumps):
                continue
            da, db = identity_check(a, M, comp, relative=True)
            worst = max(worst, da, db)
        assert worst <= 1e-9

    def test_identity_check_random_steps(self, step_model_battery):
        for model, M in step_model_battery[:20]:
            comp = compensator(model)
            da, db = identity_check(0.5, M, comp, relative=True)
            assert max(da, db) <= 1e-9

    def test_ba_minus_aa_is_compensator_gap(self):
        # B^a - A^a depends only on the compensator terms, so it is the
        # same deterministic path for every sample of the same model
        model = preset("ex-6.3-1", horizon=8.0)
        comp = compensator(model)
        gaps = []
        for i in range(3):
            M = sample_path(model, seed=0, salt=7, index=i)
            Aa = process_Aa(2.0, M)
            Ba = process_Ba(2.0, M, comp)
            N = process_N(M)
            L = process_L(M, comp)
            # B^a - A^a = (1-a)(L - N)
            t = model.horizon
            gaps.append((Ba.value_at(t) - Aa.value_at(t))
                        - (1.0 - 2.0) * (L.value_at(t) - N.value_at(t)))
        assert max(abs(g) for g in gaps) <= 1e-9


class TestEvaluateCondition:
    def test_ba_bounded_on_tilted_density_steps(self):
        model = preset("ex-6.3-1", horizon=16.0)
        verdict = evaluate_condition(model, CriterionSpec("B_a", a=2.0),
                                     n_paths=2000, seed=0)
        assert verdict.bounded_flag
        assert verdict.sup_estimate < 50.0
        assert not verdict.diverged

    def test_per_rule_estimates_have_errors(self):
        model = preset("ui-summable", horizon=8.0)
        verdict = evaluate_condition(model, "N", n_paths=1000, seed=0)
        assert verdict.per_rule
        for est, se in verdict.per_rule.values():
            assert math.isfinite(est)
            assert se >= 0.0
