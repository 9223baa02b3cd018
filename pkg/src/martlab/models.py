"""Model catalogue: random walks with rare large jumps, single-jump Cox
constructions, discrete density steps, grid diffusions and composites.

Every model is a frozen dataclass with a `horizon` and a `kind` string.
`sample_path(model, seed)` draws one exact cadlag path; vectorized
ensemble helpers live alongside for Monte Carlo work.  All randomness
flows through counter-based Philox generators keyed by (seed, salt,
path index), so ensembles are deterministic regardless of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .functionals import AtomLaw, CompensatorSpec, RateDensity
from .paths import CadlagPath, DiffusionGrid, DriftSegment, JumpEvent


class InvalidParameters(Exception):
    pass


class UnknownPreset(Exception):
    pass


class OracleUnavailable(Exception):
    pass


def rng_for(seed, salt=0, index=0):
    """Deterministic substream for (seed, salt, index)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(salt), int(index)))
    return np.random.Generator(np.random.Philox(ss))


# -- registered sequence families -------------------------------------------


@dataclass(frozen=True)
class SeqFamily:
    """A deterministic real sequence with closed-form series facts."""

    name: str
    fn: object
    sum_converges: bool
    square_summable: bool
    abs_summable: bool
    tends_to: float | None = None  # limit of partial sums when divergent

    def __call__(self, n):
        return self.fn(n)


@lru_cache(maxsize=None)
def _osc_signs(upto):
    """Sign pattern making partial sums of sign_n / n oscillate between
    ever wider levels: head for +k, then -(k+1), and so on."""
    signs = []
    s = 0.0
    target = 1.0
    direction = 1.0
    for n in range(1, upto + 1):
        signs.append(direction)
        s += direction / n
        if (direction > 0 and s >= target) or (direction < 0 and s <= -target):
            direction = -direction
            target += 1.0
    return tuple(signs)


def _osc_harmonic(n):
    return _osc_signs(max(n, 1024))[n - 1] / n


SEQUENCES = {}


def _register_seq(seq):
    SEQUENCES[seq.name] = seq
    return seq


_register_seq(SeqFamily(
    # alternating 1/sqrt(n) with the first term zeroed so no jump can
    # reach -1 through the rare branch
    "alt_inv_sqrt0",
    lambda n: 0.0 if n == 1 else (-1.0) ** n / math.sqrt(n),
    sum_converges=True, square_summable=False, abs_summable=False,
))
_register_seq(SeqFamily(
    "ones", lambda n: 1.0,
    sum_converges=False, square_summable=False, abs_summable=False,
    tends_to=math.inf,
))
_register_seq(SeqFamily(
    "osc_harmonic", _osc_harmonic,
    sum_converges=False, square_summable=True, abs_summable=False,
))
_register_seq(SeqFamily(
    "exp_alt_inv_sqrt", lambda n: math.expm1((-1.0) ** n / math.sqrt(n)),
    sum_converges=False, square_summable=False, abs_summable=False,
    tends_to=math.inf,
))
_register_seq(SeqFamily(
    "neg_inv", lambda n: -1.0 / n,
    sum_converges=False, square_summable=True, abs_summable=False,
    tends_to=-math.inf,
))
_register_seq(SeqFamily(
    "alt_inv", lambda n: (-1.0) ** n / n,
    sum_converges=True, square_summable=True, abs_summable=False,
))
_register_seq(SeqFamily(
    "minus_half", lambda n: -0.5,
    sum_converges=False, square_summable=False, abs_summable=False,
    tends_to=-math.inf,
))
_register_seq(SeqFamily(
    "alt_geom", lambda n: (-1.0) ** n * 2.0 ** (-n),
    sum_converges=True, square_summable=True, abs_summable=True,
))


def _p_geom(n):
    return 2.0 ** (-float(n))


@lru_cache(maxsize=None)
def _p_smallstep(n):
    """Largest double below both bounds: p log(1 + 1/p) <= n^-3 and
    p <= 2^-n (e^(1/n^2) - 1)^n.  Doubles are dyadic rationals, so the
    largest representable value under the bounds is a canonical choice.
    """
    target = float(n) ** (-3)
    # p log(1 + 1/p) is increasing in p on (0, 1)
    lo, hi = 0.0, 1.0 - 1e-12
    if hi * math.log1p(1.0 / hi) <= target:
        b1 = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid * math.log1p(1.0 / mid) <= target:
                lo = mid
            else:
                hi = mid
        b1 = lo
    log_b2 = -n * math.log(2.0) + n * math.log(math.expm1(n ** (-2)))
    b2 = math.exp(log_b2) if log_b2 > -745.0 else 5e-324
    bound = min(b1, b2)
    p = bound
    while p * math.log1p(1.0 / p) > target or p > b2:
        p = math.nextafter(p, 0.0)
    return max(p, 5e-324)


P_SEQUENCES = {"p_geom": _p_geom, "p_smallstep": _p_smallstep}


# -- registered Cox rate families --------------------------------------------


@dataclass(frozen=True)
class CoxRateFamily:
    """Intensity lam with antiderivative Lam (and inverse), a deterministic
    mark m(s) for the single jump, and exact antiderivatives of
    F(m(s)) lam(s) for the test-function tags that admit closed forms.
    `mark_drift_anti` is the antiderivative of m(s) lam(s), used for the
    compensating drift.  `divergent_tags` maps tags whose integral to
    infinity diverges to the sign of the divergence.
    """

    name: str
    lam: object
    Lam: object
    Lam_inf: float
    Lam_inv: object
    mark: object
    mark_drift_anti: object
    antiderivatives: dict = field(default_factory=dict)
    divergent_tags: dict = field(default_factory=dict)


def _linear_mark_family():
    # lam = (1+s)^-2, mark = s
    def lam(s):
        return (1.0 + s) ** -2

    def Lam(t):
        return t / (1.0 + t)

    def id_anti(t):
        return math.log1p(t) + 1.0 / (1.0 + t)

    def log1p_anti(t):
        return -(1.0 + math.log1p(t)) / (1.0 + t)

    def square_anti(t):
        return t - 2.0 * math.log1p(t) - 1.0 / (1.0 + t)

    def trunc_abs_anti(t):
        # x^2 ∧ |x| with mark s: s^2 below s=1, s above
        if t <= 1.0:
            return square_anti(t)
        return square_anti(1.0) + id_anti(t) - id_anti(1.0)

    return CoxRateFamily(
        name="linear_mark",
        lam=lam, Lam=Lam, Lam_inf=1.0, Lam_inv=lambda u: u / (1.0 - u),
        mark=lambda s: s,
        mark_drift_anti=id_anti,
        antiderivatives={
            "identity": id_anti,
            "log1p": log1p_anti,
            "xm_log": lambda t: id_anti(t) - log1p_anti(t),
            "square": square_anti,
            "truncated_abs": trunc_abs_anti,
            # ((1+s)log(1+s) - s)/(1+s)^2 integrates in u = 1+s to
            # log(u)^2/2 - log(u) - 1/u
            "entropy": lambda t: (0.5 * math.log1p(t) ** 2 - math.log1p(t)
                                  - 1.0 / (1.0 + t)),
        },
        divergent_tags={"identity": 1, "square": 1, "xm_log": 1, "entropy": 1},
    )


def _reciprocal_mark_family():
    # lam = (1+s)^-2, mark = 1/lam = (1+s)^2; mark * lam = 1
    def lam(s):
        return (1.0 + s) ** -2

    return CoxRateFamily(
        name="reciprocal_mark",
        lam=lam, Lam=lambda t: t / (1.0 + t), Lam_inf=1.0,
        Lam_inv=lambda u: u / (1.0 - u),
        mark=lambda s: (1.0 + s) ** 2,
        mark_drift_anti=lambda t: t,
        antiderivatives={"identity": lambda t: t},
        divergent_tags={"identity": 1, "square": 1, "xm_log": 1, "entropy": 1},
    )


def _dual_linear_mark_family():
    # the (1+x)-tilt of linear_mark: lam = (1+s)^-1, mark = -s/(1+s)
    def lam(s):
        return 1.0 / (1.0 + s)

    def id_anti(t):
        return -(math.log1p(t) + 1.0 / (1.0 + t))

    def log1p_anti(t):
        return -0.5 * math.log1p(t) ** 2

    def square_anti(t):
        return math.log1p(t) + 2.0 / (1.0 + t) - 0.5 / (1.0 + t) ** 2

    return CoxRateFamily(
        name="dual_linear_mark",
        lam=lam, Lam=lambda t: math.log1p(t), Lam_inf=math.inf,
        Lam_inv=lambda u: math.expm1(u),
        mark=lambda s: -s / (1.0 + s),
        mark_drift_anti=id_anti,
        antiderivatives={
            "identity": id_anti,
            "log1p": log1p_anti,
            "xm_log": lambda t: id_anti(t) - log1p_anti(t),
            "square": square_anti,
            # entropy of the mark -s/(1+s) against lam = 1/(1+s)
            # integrates in u = 1+s to log(u) + (log(u) + 2)/u
            "entropy": lambda t: (math.log1p(t)
                                  + (math.log1p(t) + 2.0) / (1.0 + t) - 2.0),
        },
        divergent_tags={"identity": -1, "log1p": -1, "square": 1,
                        "xm_log": 1, "entropy": 1},
    )


def _dual_reciprocal_mark_family():
    # the (1+x)-tilt of reciprocal_mark: lam = 1 + (1+s)^-2,
    # mark = -(1+s)^2/(1+(1+s)^2); mark * lam = -1
    def Lam_inv(u):
        # solve t + t/(1+t) = u
        return 0.5 * ((u - 2.0) + math.sqrt(u * u + 4.0))

    return CoxRateFamily(
        name="dual_reciprocal_mark",
        lam=lambda s: 1.0 + (1.0 + s) ** -2,
        Lam=lambda t: t + t / (1.0 + t), Lam_inf=math.inf,
        Lam_inv=Lam_inv,
        mark=lambda s: -(1.0 + s) ** 2 / (1.0 + (1.0 + s) ** 2),
        mark_drift_anti=lambda t: -t,
        antiderivatives={"identity": lambda t: -t},
        divergent_tags={"identity": -1, "square": 1, "xm_log": 1, "entropy": 1},
    )


COX_FAMILIES = {
    f.name: f
    for f in (_linear_mark_family(), _reciprocal_mark_family(),
              _dual_linear_mark_family(), _dual_reciprocal_mark_family())
}

# the (1+x)-tilt pairs families involutively
DUAL_RATE_NAME = {
    "linear_mark": "dual_linear_mark",
    "dual_linear_mark": "linear_mark",
    "reciprocal_mark": "dual_reciprocal_mark",
    "dual_reciprocal_mark": "reciprocal_mark",
}


# -- model kinds --------------------------------------------------------------


@dataclass(frozen=True)
class RandomWalkLargeJumps:
    """Jump at each integer n: x_n w.p. 1 - p_n, x_n (1 - 1/p_n) w.p. p_n."""

    x_name: str
    p_name: str
    horizon: float
    kind: str = "random_walk_large_jumps"

    @property
    def x(self):
        return SEQUENCES[self.x_name]

    @property
    def p(self):
        return P_SEQUENCES[self.p_name]


@dataclass(frozen=True)
class DiscreteDensitySteps:
    """Step at n: +1 w.p. (1-p_n)/2, -(1-p_n)/(1+p_n) w.p. (1+p_n)/2."""

    p_name: str
    horizon: float
    kind: str = "discrete_density_steps"

    @property
    def p(self):
        return P_SEQUENCES[self.p_name]

    def outcomes(self, n):
        p = self.p(n)
        return ((1.0, 0.5 * (1.0 - p)), (-(1.0 - p) / (1.0 + p), 0.5 * (1.0 + p)))


@dataclass(frozen=True)
class TabulatedSteps:
    """Explicit per-step jump laws; step n uses steps[(n-1) % len]."""

    steps: tuple  # tuple of tuples of (size, prob)
    horizon: float
    kind: str = "tabulated_steps"

    def outcomes(self, n):
        return self.steps[(n - 1) % len(self.steps)]


@dataclass(frozen=True)
class CoxOneJump:
    """Single totally inaccessible jump: rho = Lam_inv(E), E ~ Exp(1);
    jump size mark(rho), with compensating drift -int mark*lam when
    `compensated`."""

    rate_name: str
    horizon: float
    compensated: bool = True
    mark_scale: float = 1.0
    kind: str = "cox_one_jump"

    @property
    def family(self):
        return COX_FAMILIES[self.rate_name]


@dataclass(frozen=True)
class GridDiffusion:
    qv_rate: float
    drift_rate: float
    step: float
    horizon: float
    kind: str = "grid_diffusion"


@dataclass(frozen=True)
class HeavyShockOneStep:
    """A single mean-zero jump at t = 1: size Y (heavy-tailed, finite mean,
    infinite (1+Y)log(1+Y) moment) w.p. theta, size -1/2 otherwise."""

    horizon: float
    kind: str = "heavy_shock_one_step"


@dataclass(frozen=True)
class DeterministicSeries:
    """The deterministic finite-variation path sum of x_n, jump x_n at n."""

    x_name: str
    horizon: float
    kind: str = "deterministic_series"

    @property
    def x(self):
        return SEQUENCES[self.x_name]


@dataclass(frozen=True)
class Composite:
    components: tuple
    horizon: float
    kind: str = "composite"


# -- heavy-tailed Y for the one-step shock -----------------------------------
#
# law on [0, inf) with closed-form survival S(y) = 1 / ((1+y) log(e+y)^2):
# density ~ 1 / ((1+y)^2 log(e+y)^2) at infinity, so E[Y] is finite while
# E[(1+Y) log(1+Y)] diverges.  The closed survival makes inverse-CDF
# sampling exact to floating-point precision.


def shock_survival(y):
    return 1.0 / ((1.0 + y) * math.log(math.e + y) ** 2)


def shock_density(y):
    L = math.log(math.e + y)
    return (1.0 / ((1.0 + y) ** 2 * L ** 2)
            + 2.0 / ((1.0 + y) * (math.e + y) * L ** 3))


def _shock_quantile(u):
    """Solve S(y) = u by bisection in log(1+y); exact and monotone."""
    target = -math.log(u)

    def g(s):  # log(1/S) at y = expm1(s)
        return s + 2.0 * math.log(math.log(math.e + math.expm1(s)))

    lo, hi = 0.0, 1.0
    while g(hi) < target:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
    return math.expm1(0.5 * (lo + hi))


@lru_cache(maxsize=1)
def _shock_quantile_table():
    # dense table in -log(u); bisection refines nothing further because
    # interpolation error in the monotone smooth quantile is negligible
    xs = np.linspace(0.0, 40.0, 4001)  # -log(u) up to u = 4e-18
    ys = np.array([_shock_quantile(math.exp(-x)) for x in xs])
    return xs, np.log1p(ys)


def sample_shock_y(rng, size=None):
    xs, log1p_ys = _shock_quantile_table()
    u = rng.random(size)
    x = -np.log(u)
    return np.expm1(np.interp(x, xs, log1p_ys))


@lru_cache(maxsize=1)
def shock_moments():
    """(E[Y], theta): E[Y] = integral of the survival function."""
    from scipy.integrate import quad

    # w = log(e+y) substitution: S(y) dy = dw / (w^2 (1 + (1-e) e^-w))
    mean, _ = quad(lambda w: 1.0 / (w * w * (1.0 + (1.0 - math.e) * math.exp(-w))),
                   1.0, math.inf, epsabs=1e-11, epsrel=1e-11, limit=400)
    theta = 1.0 / (1.0 + 2.0 * mean)
    return mean, theta


def shock_expectation(fn):
    """E[fn(Y)] for the heavy shock law, by quadrature in w = log(e+y)."""
    from scipy.integrate import quad

    def integrand(w):
        y = math.exp(w) - math.e
        return fn(max(y, 0.0)) * shock_density(y) * math.exp(w)

    # upper cut at w=300 (y ~ 1e130) keeps intermediates in range; the
    # neglected tail is below 1/300 even for linearly growing integrands
    val, _ = quad(integrand, 1.0, 300.0,
                  epsabs=1e-10, epsrel=1e-10, limit=800)
    return val


# tags whose integral against the heavy branch is infinite
SHOCK_DIVERGENT_TAGS = ("square", "entropy", "expm")


def shock_atom_integral(atom, tag, kappa=1.0):
    """Integral of a tagged test function against an atom law carrying a
    symbolic "heavy" outcome (the registered heavy shock law)."""
    from .functionals import TestFunction
    fn = TestFunction(tag, kappa=kappa)
    total = 0.0
    for size, mass in atom.outcomes:
        if isinstance(size, str):
            if size != "heavy":
                raise InvalidParameters("unknown symbolic outcome %r" % size)
            if tag in SHOCK_DIVERGENT_TAGS:
                return math.inf
            if tag == "identity":
                contrib = shock_moments()[0]  # exact first moment
            else:
                contrib = shock_expectation(fn)
            total += mass * contrib
        else:
            total += mass * fn(size)
    return total


def shock_entropy_truncated(y_cap):
    """E[(1+Y)log(1+Y) - Y; Y <= y_cap]: grows without bound in y_cap."""
    from scipy.integrate import quad

    def integrand(w):  # w = log(e+y)
        y = math.exp(w) - math.e
        return ((1.0 + y) * math.log1p(y) - y) * shock_density(y) * math.exp(w)

    val, _ = quad(integrand, 1.0, math.log(math.e + y_cap),
                  epsabs=1e-10, epsrel=1e-10, limit=400)
    return val


# -- sampling -----------------------------------------------------------------


def _step_count(model):
    return int(math.floor(model.horizon + 1e-9))


def _sample_step_sizes(model, rng, n_steps):
    """Per-step jump sizes for the discrete-time kinds (vector of length
    n_steps, entries may be 0 meaning no jump)."""
    u = rng.random(n_steps)
    sizes = np.zeros(n_steps)
    if model.kind == "random_walk_large_jumps":
        for i in range(n_steps):
            n = i + 1
            x = model.x(n)
            if x == 0.0:
                continue
            p = model.p(n)
            sizes[i] = x * (1.0 - 1.0 / p) if u[i] < p else x
    elif model.kind in ("discrete_density_steps", "tabulated_steps"):
        for i in range(n_steps):
            acc = 0.0
            val = 0.0
            for size, prob in model.outcomes(i + 1):
                acc += prob
                if u[i] < acc:
                    val = size
                    break
            sizes[i] = val
    elif model.kind == "deterministic_series":
        for i in range(n_steps):
            sizes[i] = model.x(i + 1)
    else:
        raise InvalidParameters("not a step model: %s" % model.kind)
    return sizes


def _cox_drift_segments(model, rho):
    """Piecewise-constant segments whose integrals reproduce the
    compensating drift -scale * int_0^{t ∧ rho} mark lam exactly at unit
    breakpoints and at rho."""
    fam = model.family
    cut = min(rho, model.horizon)
    if not model.compensated or cut <= 0.0:
        return ()
    breaks = sorted({0.0, cut} | {float(k) for k in range(1, int(cut) + 1)})
    segs = []
    for a, b in zip(breaks, breaks[1:]):
        inc = fam.mark_drift_anti(b) - fam.mark_drift_anti(a)
        if inc != 0.0:
            segs.append(DriftSegment(a, b, -model.mark_scale * inc / (b - a)))
    return tuple(segs)


def sample_path(model, seed, salt=0, index=0):
    """One exact path; bitwise deterministic in (model, seed, salt, index)."""
    rng = rng_for(seed, salt, index)
    kind = model.kind

    if kind in ("random_walk_large_jumps", "discrete_density_steps",
                "tabulated_steps", "deterministic_series"):
        n_steps = _step_count(model)
        sizes = _sample_step_sizes(model, rng, n_steps)
        jumps = tuple(
            JumpEvent(float(i + 1), float(s))
            for i, s in enumerate(sizes) if s != 0.0
        )
        absorption = None
        for j in jumps:
            if abs(1.0 + j.size) < 1e-12:
                absorption = j.time
                break
        return CadlagPath(0.0, model.horizon, jumps=jumps,
                          absorption_time=absorption)

    if kind == "cox_one_jump":
        fam = model.family
        e = rng.exponential()
        rho = fam.Lam_inv(e) if e < fam.Lam_inf else math.inf
        jumps = ()
        if rho <= model.horizon:
            jumps = (JumpEvent(rho, model.mark_scale * fam.mark(rho)),)
        return CadlagPath(0.0, model.horizon, jumps=jumps,
                          drift=_cox_drift_segments(model, rho))

    if kind == "grid_diffusion":
        n = int(round(model.horizon / model.step))
        incs = rng.normal(0.0, math.sqrt(model.qv_rate * model.step), n)
        drift = ()
        if model.drift_rate != 0.0:
            drift = (DriftSegment(0.0, model.horizon, model.drift_rate),)
        return CadlagPath(
            0.0, model.horizon, drift=drift,
            diffusion_qv_rate=model.qv_rate,
            diffusion=DiffusionGrid(model.step, tuple(float(x) for x in incs)),
        )

    if kind == "heavy_shock_one_step":
        _, theta = shock_moments()
        if rng.random() < theta:
            size = float(sample_shock_y(rng))
        else:
            size = -0.5
        return CadlagPath(0.0, model.horizon,
                          jumps=(JumpEvent(1.0, size),))

    if kind == "composite":
        parts = [
            sample_path(c, seed, salt=salt + 101 * (k + 1), index=index)
            for k, c in enumerate(model.components)
        ]
        jumps = sorted(
            (j for p in parts for j in p.jumps), key=lambda j: j.time
        )
        drift = tuple(s for p in parts for s in p.drift)
        diffusion = None
        qv = 0.0
        for p in parts:
            if p.diffusion is not None:
                if diffusion is not None:
                    raise InvalidParameters("one diffusion component at most")
                diffusion = p.diffusion
                qv = p.diffusion_qv_rate
        return CadlagPath(0.0, model.horizon, jumps=tuple(jumps),
                          drift=drift, diffusion_qv_rate=qv,
                          diffusion=diffusion)

    raise InvalidParameters("unknown model kind %r" % kind)


# -- compensators -------------------------------------------------------------


def compensator(model):
    kind = model.kind
    if kind == "random_walk_large_jumps":
        atoms = []
        for n in range(1, _step_count(model) + 1):
            x = model.x(n)
            if x == 0.0:
                continue
            p = model.p(n)
            if p <= 0.0 or not math.isfinite(x * (1.0 - 1.0 / p)):
                # the rare branch is numerically massless (p underflows or
                # its outcome overflows); the step is deterministic
                atoms.append(AtomLaw(float(n), ((x, 1.0),)))
            else:
                atoms.append(AtomLaw(
                    float(n), ((x, 1.0 - p), (x * (1.0 - 1.0 / p), p))))
        return CompensatorSpec(atoms=tuple(atoms))
    if kind in ("discrete_density_steps", "tabulated_steps"):
        atoms = [
            AtomLaw(float(n), tuple(model.outcomes(n)))
            for n in range(1, _step_count(model) + 1)
        ]
        return CompensatorSpec(atoms=tuple(atoms))
    if kind == "deterministic_series":
        atoms = [
            AtomLaw(float(n), ((model.x(n), 1.0),))
            for n in range(1, _step_count(model) + 1)
            if model.x(n) != 0.0
        ]
        return CompensatorSpec(atoms=tuple(atoms))
    if kind == "cox_one_jump":
        fam = model.family
        scale = model.mark_scale
        rate = RateDensity(
            lam=fam.lam, Lam=fam.Lam, Lam_inf=fam.Lam_inf,
            mark=(fam.mark if scale == 1.0
                  else (lambda s: scale * fam.mark(s))),
            antiderivatives=dict(fam.antiderivatives) if scale == 1.0 else {},
        )
        return CompensatorSpec(rate=rate,
                               divergent_tags=tuple(fam.divergent_tags))
    if kind == "grid_diffusion":
        return CompensatorSpec()
    if kind == "heavy_shock_one_step":
        mean, theta = shock_moments()
        # the entropy integral against this atom is infinite; the atom
        # stores the two-point decomposition with the heavy branch kept
        # symbolic via divergent_tags
        return CompensatorSpec(
            atoms=(AtomLaw(1.0, (("heavy", theta), (-0.5, 1.0 - theta))),),
            divergent_tags=("entropy",),
        )
    if kind == "composite":
        atoms = []
        rate = None
        tags = ()
        for c in model.components:
            comp = compensator(c)
            atoms.extend(comp.atoms)
            if comp.rate is not None:
                rate = comp.rate
                tags = comp.divergent_tags
        return CompensatorSpec(atoms=tuple(sorted(atoms, key=lambda a: a.time)),
                               rate=rate, divergent_tags=tags)
    raise InvalidParameters("no compensator for kind %r" % kind)


# -- oracles ------------------------------------------------------------------


@dataclass(frozen=True)
class EventOracle:
    converges: str                # "yes" | "no" | "mixed"
    qv_finite: str
    closable: str                 # special semimartingale on the closed line
    ui_exponential: str           # E(X) a uniformly integrable martingale
    converge_prob: float | None = None
    is_martingale: bool = True
    notes: str = ""


def analytic_oracle(model):
    if getattr(model, "kind", None) == "random_walk_large_jumps":
        x = model.x
        yn = {True: "yes", False: "no"}
        return EventOracle(
            converges=yn[x.sum_converges],
            qv_finite=yn[x.square_summable],
            closable=yn[x.abs_summable],
            ui_exponential="no",
            notes="series tests on the registered sequence family",
        )
    oracle = PRESET_ORACLES.get(getattr(model, "preset_id", None))
    if oracle is None:
        raise OracleUnavailable("no oracle for %r" % (model,))
    return oracle


# -- presets ------------------------------------------------------------------


def _with_preset_id(model, preset_id):
    object.__setattr__(model, "preset_id", preset_id)
    return model


def _rw(x_name, horizon, p_name="p_geom"):
    return RandomWalkLargeJumps(x_name=x_name, p_name=p_name, horizon=horizon)


PRESET_FACTORIES = {
    "ex-6.2-1": lambda: _rw("alt_inv_sqrt0", 4096.0),
    "ex-6.2-2": lambda: _rw("ones", 12.0),
    "ex-6.2-3": lambda: _rw("osc_harmonic", 16.0),
    "ex-6.2-4": lambda: _rw("exp_alt_inv_sqrt", 12.0),
    "ex-6.2-5": lambda: _rw("neg_inv", 14.0),
    "ex-6.2-6": lambda: _rw("alt_inv", 64.0),
    "ex-6.4": lambda: CoxOneJump("linear_mark", 32.0),
    "ex-6.5": lambda: _rw("minus_half", 4.0, p_name="p_smallstep"),
    "ex-6.6": lambda: Composite(
        components=(GridDiffusion(1.0, 0.0, 0.125, 4.0),
                    CoxOneJump("reciprocal_mark", 4.0)),
        horizon=4.0,
    ),
    "ex-6.7": lambda: CoxOneJump("linear_mark", 16.0, compensated=False,
                                 mark_scale=-1.0),
    "ex-6.8": lambda: CoxOneJump("linear_mark", 32.0),
    "ex-6.3-1": lambda: DiscreteDensitySteps("p_geom", 32.0),
    "ex-6.3-2": lambda: CoxOneJump("dual_linear_mark", 64.0),
    "ex-5.9": lambda: HeavyShockOneStep(2.0),
    "remark-4.3": lambda: DeterministicSeries("alt_inv", 256.0),
    "ui-summable": lambda: _rw("alt_geom", 16.0),
}

PRESET_ALIASES = {"ex-5.16": "ex-5.9", "ex-5.16-part-2": "ex-5.9"}

PRESET_ORACLES = {
    "ex-6.2-1": EventOracle("yes", "no", "no", "no"),
    "ex-6.2-2": EventOracle("no", "no", "no", "no"),
    "ex-6.2-3": EventOracle("no", "yes", "no", "no"),
    "ex-6.2-4": EventOracle("no", "no", "no", "yes",
                            notes="exponential converges in (0, inf)"),
    "ex-6.2-5": EventOracle("no", "yes", "no", "no"),
    "ex-6.2-6": EventOracle("yes", "yes", "no", "no"),
    "ex-6.4": EventOracle("mixed", "yes", "no", "yes",
                          converge_prob=1.0 - math.exp(-1.0),
                          notes="diverges to -inf exactly on the no-jump "
                                "event of probability exp(-1); the "
                                "exponential has integrable supremum"),
    "ex-6.5": EventOracle("no", "no", "no", "yes",
                          notes="exponential is UI despite failing the "
                                "exponential-moment criteria"),
    "ex-6.6": EventOracle("no", "no", "no", "no"),
    "ex-6.7": EventOracle("yes", "yes", "no", "no", is_martingale=False,
                          notes="uncompensated single jump"),
    "ex-6.8": EventOracle("mixed", "yes", "no", "yes",
                          converge_prob=1.0 - math.exp(-1.0)),
    "ex-6.3-1": EventOracle("no", "no", "no", "no",
                            notes="exponential-moment criteria hold for "
                                  "a > 1 yet the exponential is not UI"),
    "ex-6.3-2": EventOracle("yes", "yes", "no", "no"),
    "ex-5.9": EventOracle("yes", "yes", "no", "no",
                          notes="entropy compensator integral infinite"),
    "remark-4.3": EventOracle("yes", "yes", "no", "no", is_martingale=False,
                              notes="deterministic; total variation infinite"),
    "ui-summable": EventOracle("yes", "yes", "yes", "yes"),
}

MARTINGALE_PRESETS = tuple(
    pid for pid, o in PRESET_ORACLES.items() if o.is_martingale
)


def preset(preset_id, horizon=None):
    pid = PRESET_ALIASES.get(preset_id, preset_id)
    factory = PRESET_FACTORIES.get(pid)
    if factory is None:
        raise UnknownPreset(preset_id)
    model = factory()
    if horizon is not None:
        from dataclasses import replace
        if model.kind == "composite":
            model = replace(model, horizon=horizon, components=tuple(
                replace(c, horizon=horizon) for c in model.components))
        else:
            model = replace(model, horizon=horizon)
    model = _with_preset_id(model, pid)
    return model


def preset_ids():
    return sorted(PRESET_FACTORIES)


# -- JSON interchange ---------------------------------------------------------


def model_to_dict(model):
    d = {"kind": model.kind, "horizon": model.horizon}
    pid = getattr(model, "preset_id", None)
    if pid:
        d["preset_id"] = pid
    params = {}
    if model.kind == "random_walk_large_jumps":
        params = {"x_name": model.x_name, "p_name": model.p_name}
    elif model.kind == "discrete_density_steps":
        params = {"p_name": model.p_name}
    elif model.kind == "tabulated_steps":
        params = {"steps": [[list(o) for o in step] for step in model.steps]}
    elif model.kind == "cox_one_jump":
        params = {"rate_name": model.rate_name, "compensated": model.compensated,
                  "mark_scale": model.mark_scale}
    elif model.kind == "grid_diffusion":
        params = {"qv_rate": model.qv_rate, "drift_rate": model.drift_rate,
                  "step": model.step}
    elif model.kind == "deterministic_series":
        params = {"x_name": model.x_name}
    elif model.kind == "composite":
        params = {"components": [model_to_dict(c) for c in model.components]}
    d["params"] = params
    return d


def model_from_dict(d):
    if "preset" in d:
        return preset(d["preset"], horizon=d.get("horizon"))
    kind = d["kind"]
    horizon = float(d["horizon"])
    p = d.get("params", {})
    if kind == "random_walk_large_jumps":
        return RandomWalkLargeJumps(p["x_name"], p["p_name"], horizon)
    if kind == "discrete_density_steps":
        return DiscreteDensitySteps(p["p_name"], horizon)
    if kind == "tabulated_steps":
        steps = tuple(
            tuple((float(s), float(m)) for s, m in step) for step in p["steps"]
        )
        return TabulatedSteps(steps, horizon)
    if kind == "cox_one_jump":
        return CoxOneJump(p["rate_name"], horizon,
                          compensated=bool(p.get("compensated", True)),
                          mark_scale=float(p.get("mark_scale", 1.0)))
    if kind == "grid_diffusion":
        return GridDiffusion(float(p["qv_rate"]), float(p.get("drift_rate", 0.0)),
                             float(p["step"]), horizon)
    if kind == "deterministic_series":
        return DeterministicSeries(p["x_name"], horizon)
    if kind == "heavy_shock_one_step":
        return HeavyShockOneStep(horizon)
    if kind == "composite":
        comps = tuple(model_from_dict(c) for c in p["components"])
        return Composite(comps, horizon)
    raise InvalidParameters("unknown kind %r" % kind)


# -- vectorized ensemble helpers ----------------------------------------------


def sample_step_matrix(model, n_paths, seed, salt=0):
    """Jump-size matrix (n_paths, n_steps) for the discrete-time kinds.

    Column n-1 holds the jump at time n.  Uses one Philox stream keyed by
    (seed, salt); output is independent of how callers split the work.
    """
    rng = rng_for(seed, salt)
    T = _step_count(model)
    if model.kind == "deterministic_series":
        row = np.array([model.x(n) for n in range(1, T + 1)])
        return np.tile(row, (n_paths, 1))
    u = rng.random((n_paths, T))
    out = np.empty((n_paths, T))
    if model.kind == "random_walk_large_jumps":
        for i in range(T):
            n = i + 1
            x, p = model.x(n), model.p(n)
            if x == 0.0 or p <= 0.0:
                out[:, i] = x
            else:
                out[:, i] = np.where(u[:, i] < p, x * (1.0 - 1.0 / p), x)
    elif model.kind in ("discrete_density_steps", "tabulated_steps"):
        for i in range(T):
            col = np.zeros(n_paths)
            acc = 0.0
            remaining = np.ones(n_paths, dtype=bool)
            for size, prob in model.outcomes(i + 1):
                pick = remaining & (u[:, i] < acc + prob)
                col[pick] = size
                remaining &= ~pick
                acc += prob
            out[:, i] = col
        return out
    else:
        raise InvalidParameters("not a step model: %s" % model.kind)
    return out


def sample_cox_arrays(model, n_paths, seed, salt=0):
    """(rho, jump_size) arrays for a Cox model; rho may be inf."""
    if model.kind != "cox_one_jump":
        raise InvalidParameters("not a Cox model")
    rng = rng_for(seed, salt)
    fam = model.family
    e = rng.exponential(size=n_paths)
    rho = np.full(n_paths, np.inf)
    hit = e < fam.Lam_inf
    rho[hit] = np.array([fam.Lam_inv(v) for v in e[hit]])
    sizes = np.zeros(n_paths)
    idx = rho <= model.horizon
    sizes[idx] = model.mark_scale * np.array([fam.mark(r) for r in rho[idx]])
    return rho, sizes


def cox_drift_value(model, t, rho=None):
    """The compensating drift of a Cox path at time t given jump time rho."""
    if not model.compensated:
        return 0.0
    fam = model.family
    cut = min(t, rho if rho is not None else math.inf)
    if cut <= 0.0:
        return 0.0
    return -model.mark_scale * (fam.mark_drift_anti(cut) - fam.mark_drift_anti(0.0))
