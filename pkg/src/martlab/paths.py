"""Cadlag path representation with explicit jumps, drift and a diffusion grid.

A path is a finite-activity right-continuous function on [0, horizon] built
from four ingredients:

* an initial value (the convention is that the left limit at 0 equals the
  initial value, so there is no jump at time 0),
* a finite list of jump events (time, size) with strictly increasing times,
* piecewise-constant drift segments; the rate on a segment is interpreted so
  that the integral over the segment is exact, which lets models with
  non-constant analytic drift store exact increments per segment,
* an optional sampled diffusion component on a uniform grid, interpolated
  linearly between grid points, together with an analytic quadratic
  variation rate so that [X^c, X^c]_t = diffusion_qv_rate * t is exact.

Values strictly between event times are therefore piecewise linear.  All
identity checks in the package compare values on the event grid, where the
representation is exact.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field, replace


class PathError(Exception):
    """Base class for path construction and query errors."""


class QueryAfterExplosion(PathError):
    """A pointwise query at or after the recorded explosion time."""


class QueryBeyondHorizon(PathError):
    """A pointwise query strictly beyond the path horizon."""


@dataclass(frozen=True)
class JumpEvent:
    """A single jump: the path moves by `size` at `time` (right limit)."""

    time: float
    size: float


@dataclass(frozen=True)
class DriftSegment:
    """Constant-rate drift on [start, end); contributes rate * overlap."""

    start: float
    end: float
    rate: float


@dataclass(frozen=True)
class DiffusionGrid:
    """Sampled continuous-martingale increments on a uniform grid.

    increments[k] is the change over ((k)h, (k+1)h]; the component is
    interpolated linearly inside grid cells and starts at 0.
    """

    step: float
    increments: tuple

    def value(self, t):
        if t <= 0.0:
            return 0.0
        k = int(t / self.step + 1e-12)
        k = min(k, len(self.increments))
        base = math.fsum(self.increments[:k])
        if k >= len(self.increments):
            return base
        frac = (t - k * self.step) / self.step
        if frac <= 1e-12:
            return base
        return base + frac * self.increments[k]

    def times(self):
        return [self.step * (k + 1) for k in range(len(self.increments))]


@dataclass(frozen=True)
class CadlagPath:
    initial: float
    horizon: float
    jumps: tuple = ()
    drift: tuple = ()
    diffusion_qv_rate: float = 0.0
    diffusion: DiffusionGrid | None = None
    absorption_time: float | None = None
    explosion_time: float | None = None

    def __post_init__(self):
        if not (self.horizon > 0.0) or not math.isfinite(self.horizon):
            raise PathError("horizon must be positive and finite")
        last = -1.0
        for j in self.jumps:
            if not (0.0 < j.time <= self.horizon):
                raise PathError("jump times must lie in (0, horizon]")
            if j.time <= last:
                raise PathError("jump times must be strictly increasing")
            if j.size == 0.0:
                raise PathError("zero-size jumps are not stored")
            last = j.time
        for seg in self.drift:
            if seg.end <= seg.start or seg.start < 0.0:
                raise PathError("bad drift segment [%r, %r)" % (seg.start, seg.end))
        if self.diffusion_qv_rate < 0.0:
            raise PathError("diffusion_qv_rate must be nonnegative")
        object.__setattr__(self, "_jump_times", tuple(j.time for j in self.jumps))

    # -- pointwise evaluation -------------------------------------------

    def _check_query(self, t):
        if t < 0.0:
            raise PathError("negative time")
        if self.explosion_time is not None and t >= self.explosion_time:
            raise QueryAfterExplosion(
                "path explodes at %g, queried at %g" % (self.explosion_time, t)
            )
        if t > self.horizon + 1e-12:
            raise QueryBeyondHorizon(
                "horizon is %g, queried at %g" % (self.horizon, t)
            )

    def _drift_integral(self, t):
        total = 0.0
        for seg in self.drift:
            if seg.start >= t:
                continue
            total += seg.rate * (min(seg.end, t) - seg.start)
        return total

    def _jump_sum(self, t, strict):
        if strict:
            k = bisect.bisect_left(self._jump_times, t)
        else:
            k = bisect.bisect_right(self._jump_times, t)
        return math.fsum(j.size for j in self.jumps[:k])

    def value_at(self, t):
        """Right-continuous value X_t."""
        self._check_query(t)
        if self.absorption_time is not None and t >= self.absorption_time:
            # absorption freezes the path at the post-jump value
            t_eff = self.absorption_time
            v = self.initial + self._jump_sum(t_eff, strict=False)
            v += self._drift_integral(t_eff)
            if self.diffusion is not None:
                v += self.diffusion.value(t_eff)
            return v
        v = self.initial + self._jump_sum(t, strict=False) + self._drift_integral(t)
        if self.diffusion is not None:
            v += self.diffusion.value(t)
        return v

    def left_limit(self, t):
        """Left limit X_{t-}; equals the initial value at t = 0."""
        self._check_query(t)
        if t == 0.0:
            return self.initial
        if self.absorption_time is not None and t > self.absorption_time:
            return self.value_at(self.absorption_time)
        v = self.initial + self._jump_sum(t, strict=True) + self._drift_integral(t)
        if self.diffusion is not None:
            v += self.diffusion.value(t)
        return v

    def jump_at(self, t):
        """Jump size at t (0.0 when t is not a jump time)."""
        if self.absorption_time is not None and t > self.absorption_time:
            return 0.0
        k = bisect.bisect_left(self._jump_times, t)
        if k < len(self.jumps) and abs(self._jump_times[k] - t) < 1e-15:
            return self.jumps[k].size
        return 0.0

    # -- event grid ------------------------------------------------------

    def event_times(self):
        """Sorted times where the representation is exact.

        Includes 0, the horizon, every jump time, every drift segment
        boundary and every diffusion grid point (capped at the horizon).
        """
        ts = {0.0, self.horizon}
        ts.update(self._jump_times)
        for seg in self.drift:
            if seg.start < self.horizon:
                ts.add(seg.start)
                ts.add(min(seg.end, self.horizon))
        if self.diffusion is not None:
            for t in self.diffusion.times():
                if t <= self.horizon:
                    ts.add(t)
        if self.absorption_time is not None:
            ts.add(self.absorption_time)
        cap = self.horizon
        if self.explosion_time is not None:
            cap = min(cap, self.explosion_time)
            ts = {t for t in ts if t < cap}
            ts.add(cap - 1e-9 * max(1.0, cap))
        return sorted(ts)

    # -- derived quantities ----------------------------------------------

    def first_crossing(self, level, signed=False):
        """First time |X_t| (or X_t when signed) reaches `level`.

        The path is scanned on its event grid with exact linear
        interpolation inside segments; returns None when no crossing
        occurs by the horizon.  Jumps are checked at their post-jump
        value, so a jump across the level counts at the jump time.
        """
        if level <= abs(self.initial) and not signed:
            return 0.0
        if signed and self.initial >= level:
            return 0.0
        probe = (lambda v: v) if signed else abs
        grid = self.event_times()
        prev_t = grid[0]
        prev_v = self.value_at(prev_t)
        for t in grid[1:]:
            lv = self.left_limit(t)
            # continuous piece (prev_t, t): linear from prev_v to lv
            for target in ((level,) if signed else (level, -level)):
                if signed and target != level:
                    continue
                lo, hi = (prev_v, lv)
                if (lo < target <= hi) or (hi <= target < lo):
                    if hi != lo:
                        s = prev_t + (t - prev_t) * (target - lo) / (hi - lo)
                    else:
                        s = t
                    if probe(self._interp(prev_t, t, prev_v, lv, s)) >= level - 1e-12:
                        return s
            if probe(lv) >= level:
                return t
            v = self.value_at(t)
            if probe(v) >= level:
                return t
            prev_t, prev_v = t, v
        return None

    @staticmethod
    def _interp(t0, t1, v0, v1, s):
        if t1 == t0:
            return v1
        w = (s - t0) / (t1 - t0)
        return v0 + w * (v1 - v0)

    def tail_oscillation(self, window_start):
        """sup - inf of the path over [window_start, horizon].

        Extremes of a piecewise-linear cadlag path are attained at event
        times or their left limits, so the scan over the event grid is
        exact.
        """
        if window_start >= self.horizon:
            return 0.0
        vals = [self.value_at(window_start)]
        for t in self.event_times():
            if t < window_start or t > self.horizon:
                continue
            vals.append(self.left_limit(t))
            vals.append(self.value_at(t))
        return max(vals) - min(vals)

    def running_extremes(self, t):
        """(inf, sup) of the path over [0, t]."""
        vals = [self.initial]
        for s in self.event_times():
            if s > t:
                break
            vals.append(self.left_limit(s))
            vals.append(self.value_at(s))
        vals.append(self.value_at(t))
        return min(vals), max(vals)

    def restrict(self, horizon):
        """The same path viewed on a shorter horizon."""
        if horizon >= self.horizon:
            return self
        jumps = tuple(j for j in self.jumps if j.time <= horizon)
        diff = self.diffusion
        if diff is not None:
            n = int(math.ceil(horizon / diff.step - 1e-12))
            diff = DiffusionGrid(diff.step, diff.increments[:n])
        return replace(self, horizon=horizon, jumps=jumps, diffusion=diff)


# -- JSON interchange ------------------------------------------------------


def path_to_dict(path):
    d = {
        "initial": path.initial,
        "horizon": path.horizon,
        "jumps": [[j.time, j.size] for j in path.jumps],
        "drift": [[s.start, s.end, s.rate] for s in path.drift],
        "diffusion_qv_rate": path.diffusion_qv_rate,
    }
    if path.diffusion is not None:
        d["diffusion"] = {
            "step": path.diffusion.step,
            "increments": list(path.diffusion.increments),
        }
    if path.absorption_time is not None:
        d["absorption_time"] = path.absorption_time
    if path.explosion_time is not None:
        d["explosion_time"] = path.explosion_time
    return d


def path_from_dict(d):
    diff = None
    if d.get("diffusion"):
        diff = DiffusionGrid(
            step=float(d["diffusion"]["step"]),
            increments=tuple(float(x) for x in d["diffusion"]["increments"]),
        )
    return CadlagPath(
        initial=float(d["initial"]),
        horizon=float(d["horizon"]),
        jumps=tuple(JumpEvent(float(t), float(x)) for t, x in d.get("jumps", ())),
        drift=tuple(
            DriftSegment(float(a), float(b), float(r))
            for a, b, r in d.get("drift", ())
        ),
        diffusion_qv_rate=float(d.get("diffusion_qv_rate", 0.0)),
        diffusion=diff,
        absorption_time=d.get("absorption_time"),
        explosion_time=d.get("explosion_time"),
    )


def path_to_json(path):
    return json.dumps(path_to_dict(path), sort_keys=True)


def path_from_json(text):
    return path_from_dict(json.loads(text))


# -- stopping rules --------------------------------------------------------


@dataclass(frozen=True)
class DeterministicTime:
    """The constant stopping time t (capped at the path horizon)."""

    time: float

    def evaluate(self, paths, horizon):
        return min(self.time, horizon)

    def describe(self):
        return {"kind": "deterministic", "time": self.time}


@dataclass(frozen=True)
class FirstCrossing:
    """First time the named derived path crosses `level` (in absolute
    value by default), capped at `cap` and at the horizon.

    `target` names a path in the mapping handed to evaluate; the
    convention in this package is "base" for the driving local
    martingale, "exponential" for its stochastic exponential and a
    criterion tag for criterion processes.
    """

    target: str
    level: float
    cap: float = math.inf
    signed: bool = False

    def evaluate(self, paths, horizon):
        path = paths[self.target]
        t = path.first_crossing(self.level, signed=self.signed)
        bound = min(self.cap, horizon)
        if t is None:
            return bound
        return min(t, bound)

    def describe(self):
        d = {"kind": "first_crossing", "target": self.target, "level": self.level}
        if math.isfinite(self.cap):
            d["cap"] = self.cap
        if self.signed:
            d["signed"] = True
        return d


@dataclass(frozen=True)
class StoppingFamily:
    """A finite family of bounded stopping rules.

    Criterion verdicts taken over such a family are lower bounds for the
    supremum over all bounded stopping times; reports must carry this
    caveat, which `describe` encodes.
    """

    rules: tuple
    name: str = "default"

    def evaluate(self, paths, horizon):
        return [rule.evaluate(paths, horizon) for rule in self.rules]

    def describe(self):
        return {
            "name": self.name,
            "caveat": "finite family; estimates are lower bounds for the "
            "supremum over bounded stopping times",
            "rules": [rule.describe() for rule in self.rules],
        }


def default_stopping_family(horizon):
    """Deterministic dyadic times plus first crossings of the exponential."""
    rules = []
    t = 1.0
    while t < horizon:
        rules.append(DeterministicTime(t))
        t *= 2.0
    rules.append(DeterministicTime(horizon))
    for level in (4.0, 64.0, 1024.0):
        rules.append(FirstCrossing("exponential", level, cap=horizon))
    return StoppingFamily(tuple(rules))
