"""Test functions of jump sizes, jump-measure sums and compensator integrals.

The jump measure of a path charges the points (t, size) of its jumps, so
integrals against it are finite sums F(size) over jumps up to t.  The
predictable compensator is described analytically by a CompensatorSpec:
time atoms with a finite jump law each, plus an optional absolutely
continuous part with intensity lam(s) and deterministic mark g(s) that is
killed at the path's single jump time (the Cox construction used by the
model catalogue).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.integrate import quad

from .paths import CadlagPath, DriftSegment, JumpEvent


class DomainError(Exception):
    """A test function evaluated outside its domain (x <= -1 for the
    logarithmic family)."""


class IntegrabilityError(Exception):
    """A compensator integral diverges at a finite time."""


_LOG_TAGS = {"log1p", "xm_log", "entropy"}


@dataclass(frozen=True)
class TestFunction:
    """A named function of jump size x.

    Tags and conventions (kappa is the truncation level, default 1):

    - identity: x
    - square: x^2
    - truncated_square: x^2 * 1{|x| <= kappa}
    - truncated_abs: x^2 min 1 against |x|, i.e. x^2 ∧ |x| for kappa = 1,
      and generally (x/kappa)^2 ∧ |x/kappa| scaled back -- we keep the
      plain x^2 ∧ (kappa |x|) form
    - pos_tail: x * 1{x > kappa}
    - log1p: log(1 + x)
    - xm_log: x - log(1 + x)
    - entropy: (1 + x) log(1 + x) - x
    - expm: exp(x) - 1
    - custom: an arbitrary callable
    """

    __test__ = False  # keep pytest from collecting this as a test class

    tag: str
    kappa: float = 1.0
    fn: object = None

    def __call__(self, x):
        tag = self.tag
        if tag in _LOG_TAGS and x <= -1.0:
            # entropy extends continuously to x = -1 with value 1; sizes
            # that round to -1.0 stand for values just above it
            if tag == "entropy" and x == -1.0:
                return 1.0
            raise DomainError("%s undefined at x = %r" % (tag, x))
        if tag == "identity":
            return x
        if tag == "square":
            return x * x
        if tag == "truncated_square":
            return x * x if abs(x) <= self.kappa else 0.0
        if tag == "truncated_abs":
            return min(x * x, self.kappa * abs(x))
        if tag == "pos_tail":
            return x if x > self.kappa else 0.0
        if tag == "log1p":
            return math.log1p(x)
        if tag == "xm_log":
            return x - math.log1p(x)
        if tag == "entropy":
            return (1.0 + x) * math.log1p(x) - x
        if tag == "expm":
            return math.expm1(x)
        if tag == "custom":
            return self.fn(x)
        raise ValueError("unknown test function tag %r" % tag)


def test_function(tag, kappa=1.0, fn=None):
    return TestFunction(tag, kappa, fn)


# -- compensators -----------------------------------------------------------


@dataclass(frozen=True)
class AtomLaw:
    """Jump law at a fixed predictable time: outcomes (size, mass).

    Total mass at most 1; the remaining mass is the no-jump outcome.
    """

    time: float
    outcomes: tuple

    def integral(self, F):
        return math.fsum(m * F(x) for x, m in self.outcomes if m > 0.0)

    def gamma(self):
        """-integral of log(1+x) against the atom's jump law."""
        return -math.fsum(m * math.log1p(x) for x, m in self.outcomes if m > 0.0)


@dataclass(frozen=True)
class RateDensity:
    """Absolutely continuous compensator part with a deterministic mark.

    F * nu_t = integral_0^{t ∧ rho} F(mark(s)) lam(s) ds where rho is the
    (single) jump time of the underlying path.  `antiderivatives` maps a
    test-function tag to an exact antiderivative of F(mark(s)) lam(s);
    tags without a registered closed form fall back to adaptive
    quadrature.
    """

    lam: object
    Lam: object          # antiderivative of lam with Lam(0) = 0
    Lam_inf: float
    mark: object
    antiderivatives: dict = field(default_factory=dict)

    def integral(self, F, t):
        if t <= 0.0:
            return 0.0
        anti = self.antiderivatives.get(getattr(F, "tag", None))
        if anti is not None:
            return anti(t) - anti(0.0)
        if not math.isfinite(t):
            val, _ = quad(
                lambda s: F(self.mark(s)) * self.lam(s), 0.0, math.inf,
                epsabs=1e-12, epsrel=1e-12, limit=400,
            )
            return val
        val, _ = quad(
            lambda s: F(self.mark(s)) * self.lam(s), 0.0, t,
            epsabs=1e-13, epsrel=1e-13, limit=400,
        )
        return val


@dataclass(frozen=True)
class CompensatorSpec:
    atoms: tuple = ()
    rate: RateDensity | None = None
    divergent_tags: tuple = ()   # tags whose integral is +infinity at t = inf

    def atom_at(self, t):
        for atom in self.atoms:
            if abs(atom.time - t) < 1e-12:
                return atom
        return None


def quadratic_variation(path):
    """[X, X] as a path: squared jumps plus the analytic diffusion rate."""
    jumps = tuple(
        JumpEvent(j.time, j.size * j.size) for j in path.jumps
    )
    drift = ()
    if path.diffusion_qv_rate > 0.0:
        drift = (DriftSegment(0.0, path.horizon, path.diffusion_qv_rate),)
    return CadlagPath(
        initial=0.0, horizon=path.horizon, jumps=jumps, drift=drift,
        explosion_time=path.explosion_time,
    )


def jump_integral(path, F):
    """F * mu^X as a path: the running sum of F over realized jumps."""
    jumps = []
    for j in path.jumps:
        v = F(j.size)
        if v != 0.0:
            jumps.append(JumpEvent(j.time, v))
    return CadlagPath(
        initial=0.0, horizon=path.horizon, jumps=tuple(jumps),
        explosion_time=path.explosion_time,
    )


def compensator_integral(comp, F, t, rho=None, path=None):
    """F * nu_t.  The rate part is killed at rho (the jump time of `path`
    when given).  Divergent integrals at t = inf return math.inf; a
    divergence at finite t raises IntegrabilityError.
    """
    if path is not None and rho is None:
        rho = path.jumps[0].time if path.jumps else math.inf
    if rho is None:
        rho = math.inf
    total = math.fsum(
        atom.integral(F) for atom in comp.atoms if atom.time <= t
    )
    if math.isinf(total):
        if math.isfinite(t):
            raise IntegrabilityError("atom integral diverges at finite t=%g" % t)
        return math.inf
    if comp.rate is not None:
        cut = min(t, rho)
        if getattr(F, "tag", None) in comp.divergent_tags and not math.isfinite(cut):
            return math.inf
        total += comp.rate.integral(F, cut)
    return total


def gamma_process(comp, t):
    """The predictable log correction gamma_t = -int log(1+x) nu({t}, dx).

    Nonzero only at atom times; identically zero for quasi-left-continuous
    compensators (pure rate densities).
    """
    atom = comp.atom_at(t)
    if atom is None:
        return 0.0
    return atom.gamma()


def gamma_total(comp, t):
    """Sum of gamma over atom times up to t."""
    return math.fsum(a.gamma() for a in comp.atoms if a.time <= t)


def convergence_functional(path, comp, A_path, t, rho=None):
    """The scalar whose finiteness marks the convergence event: the
    continuous quadratic variation, the compensated small-jump activity
    x^2 ∧ |x| integrated against the compensator, and the supplied
    predictable finite-variation part, all evaluated at t.
    """
    val = path.diffusion_qv_rate * t
    val += compensator_integral(comp, TestFunction("truncated_abs"), t, rho=rho, path=path if rho is None else None)
    if A_path is not None:
        val += abs(A_path.value_at(t))
    return val
