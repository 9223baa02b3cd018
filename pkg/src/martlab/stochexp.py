"""Stochastic exponential, stochastic logarithm and the reciprocal pair.

For a path X the stochastic exponential is

    E(X)_t = exp(X_t - X_0 - [X^c, X^c]_t / 2) prod_{s<=t} (1 + dX_s) e^{-dX_s}.

It solves Z = 1 + Z_- . X, jumps to zero at the first time a jump of size
-1 occurs and stays there.  Values are accumulated in log space with the
sign tracked separately, so very small positive values are distinguished
from the structural zero: a value that merely underflows double precision
is flagged as a numeric zero, not an absorption.

Between event times the exponential is not piecewise linear when X has
drift or a diffusion component; the returned CadlagPath matches E(X)
exactly on the event grid and interpolates linearly in between.  The pair
object exposes log_value/value for exact off-grid evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .functionals import TestFunction, jump_integral
from .paths import CadlagPath, DiffusionGrid, DriftSegment, JumpEvent, PathError

#: below this log level exp underflows to exactly 0.0 in double precision
LOG_FLOOR = -745.0

#: jumps with |1 + x| below this tolerance are treated as exactly -1
ABSORPTION_TOL = 1e-12


class ExponentialDomainError(Exception):
    """A jump below -1 without the signed flag, or a -1 jump where the
    reciprocal construction needs 1 + dX > 0."""


class NotNonnegative(Exception):
    """stoch_log received a path with negative values."""


class RevivesAfterZero(Exception):
    """stoch_log received a path that leaves zero after hitting it."""


def phi(x):
    """The involution x -> -x / (1 + x) linking the jumps of a positive
    exponential and of its reciprocal."""
    if abs(1.0 + x) < ABSORPTION_TOL:
        raise ExponentialDomainError("phi undefined at x = -1")
    return -x / (1.0 + x)


@dataclass(frozen=True)
class ExponentialPair:
    """A base path X together with its stochastic exponential Z = E(X)."""

    base: CadlagPath
    exponential: CadlagPath
    absorption_time: float | None = None
    numeric_zero_time: float | None = None
    signed: bool = False

    def log_value(self, t):
        """(log |Z_t|, sign) computed exactly from the base path."""
        return _log_exp_value(self.base, t, self.absorption_time)

    def value(self, t):
        if self.absorption_time is not None and t >= self.absorption_time:
            return 0.0
        logv, sign = self.log_value(t)
        return sign * math.exp(logv) if logv > LOG_FLOOR else sign * 0.0


def _log_exp_value(X, t, absorption_time, left=False):
    """log |E(X)| and its sign at t (or at t-)."""
    if absorption_time is not None:
        if (not left and t >= absorption_time) or (left and t > absorption_time):
            return -math.inf, 1.0
    xv = X.left_limit(t) if left else X.value_at(t)
    logv = (xv - X.initial) - 0.5 * X.diffusion_qv_rate * t
    sign = 1.0
    for j in X.jumps:
        if j.time > t or (left and j.time >= t):
            break
        one_plus = 1.0 + j.size
        if abs(one_plus) < ABSORPTION_TOL:
            return -math.inf, 1.0
        logv += math.log(abs(one_plus)) - j.size
        if one_plus < 0.0:
            sign = -sign
    return logv, sign


def stoch_exp(X, signed=False):
    """The stochastic exponential of X as an ExponentialPair.

    Jumps strictly below -1 are rejected unless signed=True, in which case
    the exponential changes sign at each such jump.  A jump of exactly -1
    (within ABSORPTION_TOL) absorbs the exponential at zero.
    """
    absorption = None
    for j in X.jumps:
        one_plus = 1.0 + j.size
        if abs(one_plus) < ABSORPTION_TOL:
            absorption = j.time
            break
        if one_plus < 0.0 and not signed:
            raise ExponentialDomainError(
                "jump %g < -1 at t=%g; pass signed=True for the signed "
                "exponential" % (j.size, j.time)
            )

    grid = X.event_times()
    numeric_zero_time = None

    def val(t, left=False):
        logv, sign = _log_exp_value(X, t, absorption, left=left)
        if logv == -math.inf:
            return 0.0
        return sign * math.exp(logv) if logv > LOG_FLOOR else sign * 0.0

    # jumps of Z at the jump times of X
    z_jumps = []
    for j in X.jumps:
        if absorption is not None and j.time > absorption:
            break
        z_minus = val(j.time, left=True)
        if absorption is not None and j.time == absorption:
            if z_minus != 0.0:
                z_jumps.append(JumpEvent(j.time, -z_minus))
            break
        dz = z_minus * j.size
        if dz != 0.0:
            z_jumps.append(JumpEvent(j.time, dz))
        logv, _ = _log_exp_value(X, j.time, absorption)
        if numeric_zero_time is None and logv <= LOG_FLOOR and logv > -math.inf:
            numeric_zero_time = j.time

    # drift segments reproducing Z exactly on the event grid
    segments = []
    pure_jump = X.diffusion_qv_rate == 0.0 and not X.drift and X.diffusion is None
    if not pure_jump:
        prev_t = grid[0]
        prev_v = val(prev_t)
        for t in grid[1:]:
            lv = val(t, left=True)
            if t > prev_t and lv != prev_v:
                segments.append(DriftSegment(prev_t, t, (lv - prev_v) / (t - prev_t)))
            prev_t, prev_v = t, val(t)
            if numeric_zero_time is None and prev_v == 0.0 and (
                absorption is None or t < absorption
            ):
                logv, _ = _log_exp_value(X, t, absorption)
                if logv > -math.inf:
                    numeric_zero_time = t

    Z = CadlagPath(
        initial=1.0,
        horizon=X.horizon,
        jumps=tuple(z_jumps),
        drift=tuple(segments),
        absorption_time=absorption,
        explosion_time=X.explosion_time,
    )
    return ExponentialPair(
        base=X, exponential=Z, absorption_time=absorption,
        numeric_zero_time=numeric_zero_time, signed=signed,
    )


def stoch_log(Z):
    """The stochastic logarithm: the path X with X_0 = 0, dX = dZ / Z_-.

    Requires Z_0 = 1 and Z >= 0; once Z hits zero it must stay there (the
    hit is recorded as a -1 jump and absorption).  Z with a sampled
    diffusion component is not supported; exponentials produced by
    stoch_exp encode their continuous part as drift segments, for which
    the logarithm is exact on the event grid.
    """
    if abs(Z.initial - 1.0) > 1e-12:
        raise PathError("stoch_log requires Z_0 = 1, got %r" % Z.initial)
    if Z.diffusion is not None:
        raise PathError("stoch_log does not support sampled diffusion grids")

    grid = Z.event_times()
    jumps = []
    segments = []
    absorption = Z.absorption_time
    dead = False
    prev_t = grid[0]
    prev_v = Z.value_at(prev_t)
    # partial sums of the jump representation carry rounding noise on the
    # scale of the largest value seen so far; below that resolution the
    # path is numerically zero
    running_max = max(1.0, abs(prev_v))

    def resolve(v):
        return 0.0 if abs(v) <= 64.0 * 2.3e-16 * running_max else v

    for t in grid[1:]:
        lv = resolve(Z.left_limit(t))
        v = resolve(Z.value_at(t))
        running_max = max(running_max, abs(lv), abs(v))
        if min(lv, v, prev_v) < 0.0:
            raise NotNonnegative("negative value near t=%g" % t)
        if dead:
            if lv > 0.0 or v > 0.0:
                raise RevivesAfterZero("path leaves zero at t=%g" % t)
            prev_t, prev_v = t, v
            continue
        if prev_v == 0.0 and (lv > 0.0 or v > 0.0):
            raise RevivesAfterZero("path leaves zero at t=%g" % t)
        # continuous piece (prev_t, t): Z linear from prev_v to lv
        if lv != prev_v:
            if lv <= 0.0:
                # continuous decay to zero: the logarithm diverges
                raise NotNonnegative(
                    "path reaches zero continuously before t=%g; stochastic "
                    "logarithm diverges" % t
                )
            segments.append(
                DriftSegment(prev_t, t, math.log(lv / prev_v) / (t - prev_t))
            )
        dz = v - lv
        if dz != 0.0:
            if v <= ABSORPTION_TOL * max(1.0, lv):
                jumps.append(JumpEvent(t, -1.0))
                absorption = t if absorption is None else min(absorption, t)
                dead = True
            else:
                jumps.append(JumpEvent(t, dz / lv))
        prev_t, prev_v = t, v

    return CadlagPath(
        initial=0.0,
        horizon=Z.horizon,
        jumps=tuple(jumps),
        drift=tuple(segments),
        absorption_time=absorption,
        explosion_time=Z.explosion_time,
    )


def reciprocal_log(M, comp=None):
    """The path N with E(M) E(N) = 1 for a local martingale M whose jumps
    stay strictly above -1:

        N = -M + [M^c, M^c] + sum of (dM)^2 / (1 + dM).

    Jump sizes map through phi, the continuous martingale part flips sign
    and the finite-variation part picks up the continuous quadratic
    variation.  The compensator argument is accepted for symmetry with
    the criterion constructors and is not needed pathwise.
    """
    del comp
    jumps = []
    for j in M.jumps:
        if 1.0 + j.size < ABSORPTION_TOL:
            raise ExponentialDomainError(
                "reciprocal undefined: jump %g <= -1 at t=%g" % (j.size, j.time)
            )
        jumps.append(JumpEvent(j.time, phi(j.size)))
    drift = [DriftSegment(s.start, s.end, -s.rate) for s in M.drift]
    if M.diffusion_qv_rate > 0.0:
        drift.append(DriftSegment(0.0, M.horizon, M.diffusion_qv_rate))
    diffusion = None
    if M.diffusion is not None:
        diffusion = DiffusionGrid(
            M.diffusion.step, tuple(-dx for dx in M.diffusion.increments)
        )
    return CadlagPath(
        initial=0.0,
        horizon=M.horizon,
        jumps=tuple(jumps),
        drift=tuple(drift),
        diffusion_qv_rate=M.diffusion_qv_rate,
        diffusion=diffusion,
        explosion_time=M.explosion_time,
    )


def pushforward_check(M, F, t):
    """Both sides of the jump-measure pushforward identity: the running
    sum of F over the jumps of M, and of F o phi over the jumps of the
    reciprocal path N.  Returns (lhs, rhs)."""
    N = reciprocal_log(M)
    lhs = jump_integral(M, F).value_at(t)
    G = TestFunction("custom", fn=lambda y: F(phi(y)))
    rhs = jump_integral(N, G).value_at(t)
    return lhs, rhs


# -- the exponential written as exp(Y - V) -----------------------------------


@dataclass(frozen=True)
class LogTransform:
    """E(X) = exp(Y - V) with Y a local martingale plus the predictable
    jump corrections gamma, and V a nondecreasing predictable path."""

    Y: CadlagPath
    V: CadlagPath


def log_transform(X, comp):
    """Split E(X) as exp(Y - V).

    Y collects the continuous martingale part of X and the compensated
    log jumps: at every jump or atom time Y moves by log(1 + dX) + gamma_t
    where gamma_t = -int log(1+x) nu({t}, dx); the absolutely continuous
    compensator part contributes -int log(1 + mark) lam ds of drift,
    killed at the realized jump time.  V = [X^c, X^c]/2 plus the
    compensator integral of x - log(1+x).  Jumps of size -1 are outside
    the domain of the transform.
    """
    for j in X.jumps:
        if 1.0 + j.size < ABSORPTION_TOL:
            raise ExponentialDomainError(
                "log transform undefined at -1 jump (t=%g)" % j.time
            )

    log1p = TestFunction("log1p")
    xm_log = TestFunction("xm_log")
    rho = X.jumps[0].time if (comp.rate is not None and X.jumps) else math.inf

    # jump times of Y: realized jumps and predictable atom times
    times = sorted(
        {j.time for j in X.jumps}
        | {a.time for a in comp.atoms if a.time <= X.horizon}
    )
    y_jumps = []
    v_jumps = []
    for t in times:
        dx = X.jump_at(t)
        atom = comp.atom_at(t)
        gamma = atom.gamma() if atom is not None else 0.0
        dy = (math.log1p(dx) if dx != 0.0 else 0.0) + gamma
        if dy != 0.0:
            y_jumps.append(JumpEvent(t, dy))
        if atom is not None:
            dv = atom.integral(xm_log)
            if dv != 0.0:
                v_jumps.append(JumpEvent(t, dv))

    y_drift = []
    v_drift = []
    if X.diffusion_qv_rate > 0.0:
        v_drift.append(DriftSegment(0.0, X.horizon, 0.5 * X.diffusion_qv_rate))
    if comp.rate is not None:
        # exact increments between breakpoints, killed at rho
        cut = min(rho, X.horizon)
        breaks = sorted({0.0, cut} | {t for t in times if t < cut})
        for a, b in zip(breaks, breaks[1:]):
            inc_log = comp.rate.integral(log1p, b) - comp.rate.integral(log1p, a)
            if inc_log != 0.0:
                y_drift.append(DriftSegment(a, b, -inc_log / (b - a)))
            inc_v = comp.rate.integral(xm_log, b) - comp.rate.integral(xm_log, a)
            if inc_v != 0.0:
                v_drift.append(DriftSegment(a, b, inc_v / (b - a)))

    Y = CadlagPath(
        initial=0.0, horizon=X.horizon, jumps=tuple(y_jumps),
        drift=tuple(y_drift), diffusion_qv_rate=X.diffusion_qv_rate,
        diffusion=X.diffusion,
    )
    V = CadlagPath(
        initial=0.0, horizon=X.horizon, jumps=tuple(v_jumps),
        drift=tuple(v_drift),
    )
    return LogTransform(Y=Y, V=V)
