"""Experiment harness: classify path ensembles against the convergence
event equalities, compare with analytic oracles, reproduce the catalogue
experiments, and emit deterministic reports.

All flags are finite-horizon numeric proxies ("numeric-convergent" etc.)
for almost-sure asymptotic events; reports record the tolerances used and
never claim to decide asymptotics.
"""

from __future__ import annotations

import bisect
import csv
import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import criteria, follmer
from .functionals import (DomainError, IntegrabilityError, TestFunction,
                          quadratic_variation)
from .models import (OracleUnavailable, analytic_oracle, compensator,
                     model_from_dict, model_to_dict, preset, preset_ids,
                     rng_for, sample_cox_arrays, sample_path,
                     sample_step_matrix)
from .stochexp import stoch_exp


class ConfigError(Exception):
    """Invalid experiment configuration; the message lists the fields."""


class UnknownExample(Exception):
    """No registered reproduction recipe under that id."""


# -- tolerances ------------------------------------------------------------------


@dataclass(frozen=True)
class Tolerances:
    """Thresholds for the finite-horizon event proxies.

    epsilon: tail-oscillation bound for "numerically convergent";
    alpha: the tail window is [alpha*T, T];
    big_k: lower bound -K for the liminf/limsup flags;
    eta: the exponential counts as converging in (0, inf) when its tail
        stays inside [eta, 1/eta];
    qv_threshold: absolute quadratic-variation increase over the tail
        window that counts as "still growing";
    cap: finiteness cap for the convergence functional and the
        predictable part of the logarithmic transform.
    """

    epsilon: float = 0.05
    alpha: float = 0.5
    big_k: float = 1e3
    eta: float = 1e-3
    qv_threshold: float = 0.1
    cap: float = 50.0

    def __post_init__(self):
        for name in ("epsilon", "alpha", "big_k", "eta", "qv_threshold",
                     "cap"):
            if getattr(self, name) <= 0.0:
                raise ConfigError("tolerance %r must be positive" % name)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d):
        allowed = {f.name for f in dataclasses.fields(cls)}
        bad = set(d) - allowed
        if bad:
            raise ConfigError("unknown tolerance fields: %s"
                              % ", ".join(sorted(bad)))
        return cls(**d)


# -- per-path flags ---------------------------------------------------------------


@dataclass(frozen=True)
class EventFlags:
    numeric_convergent: bool
    liminf_bounded: bool
    limsup_bounded: bool
    qv_growing: bool
    functional_c_finite: bool
    exp_converges_nonzero: bool
    absorbed: bool
    y_convergent: bool
    v_finite: bool

    def as_dict(self):
        return dataclasses.asdict(self)


FLAG_NAMES = tuple(f.name for f in dataclasses.fields(EventFlags))


@dataclass
class EnsembleSummary:
    """Per-path tail statistics plus the deterministic model-level
    quantities the flags are computed from."""

    model: object
    n_paths: int
    seed: int
    horizon: float
    window_start: float
    tail_osc: np.ndarray
    tail_min: np.ndarray
    tail_max: np.ndarray
    qv_tail: np.ndarray
    qv_total: np.ndarray
    x_final: np.ndarray
    log_z_tail_min: np.ndarray
    log_z_tail_max: np.ndarray
    y_osc: np.ndarray
    absorbed: np.ndarray
    c_value: np.ndarray
    v_total: np.ndarray
    tv_total: float = math.nan   # total variation of the deterministic part


def _atom_table(comp, T, F):
    """Cumulative atom integrals of F at integer times 1..T; +inf tail
    after the first divergent or out-of-domain atom."""
    out = np.zeros(T + 1)
    acc = 0.0
    table = {int(a.time): a for a in comp.atoms
             if float(a.time).is_integer() and a.time <= T}
    for n in range(1, T + 1):
        atom = table.get(n)
        if atom is not None and math.isfinite(acc):
            try:
                acc += criteria.atom_integral(atom, F.tag)
            except (DomainError, IntegrabilityError):
                acc = math.inf
        out[n] = acc
    return out


_STEP_KINDS = ("random_walk_large_jumps", "discrete_density_steps",
               "tabulated_steps", "deterministic_series")


def _tv_from_table(tv_cum):
    if not np.isfinite(tv_cum).all():
        return math.inf
    return float(np.abs(np.diff(tv_cum)).sum())

_DENSE_BUDGET = 1 << 24


def _window_stats(values):
    """(osc, min, max) along axis 1."""
    lo = values.min(axis=1)
    hi = values.max(axis=1)
    return hi - lo, lo, hi


def _summaries_dense(model, n_paths, seed, tol):
    T = int(math.floor(model.horizon + 1e-9))
    sizes = sample_step_matrix(model, n_paths, seed, salt=7)
    comp = compensator(model)

    x = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(sizes, axis=1)],
                       axis=1)
    one_plus = 1.0 + sizes
    dead = np.abs(one_plus) <= 1e-12
    with np.errstate(divide="ignore"):
        log_abs = np.where(dead, -math.inf, np.log(np.abs(one_plus)))
    logz = np.concatenate([np.zeros((n_paths, 1)),
                           np.cumsum(log_abs, axis=1)], axis=1)
    qv = np.concatenate([np.zeros((n_paths, 1)),
                         np.cumsum(sizes * sizes, axis=1)], axis=1)

    w0 = int(math.floor(tol.alpha * T))
    win = slice(w0, T + 1)
    osc, lo, hi = _window_stats(x[:, win])

    v_cum = _atom_table(comp, T, TestFunction("xm_log"))
    v_total = float(v_cum[T])
    with np.errstate(invalid="ignore"):
        y = logz + v_cum[None, :]
        y_osc, _, _ = _window_stats(
            np.where(np.isfinite(y), y, np.inf)[:, win])
    y_osc = np.where(np.isfinite(y[:, win]).all(axis=1), y_osc, math.inf)

    c_cum = _atom_table(comp, T, TestFunction("truncated_abs"))
    tv_cum = _atom_table(comp, T, TestFunction("identity"))

    return EnsembleSummary(
        model=model, n_paths=n_paths, seed=seed, horizon=float(T),
        window_start=float(w0),
        tail_osc=osc, tail_min=lo, tail_max=hi,
        qv_tail=qv[:, T] - qv[:, w0], qv_total=qv[:, T],
        x_final=x[:, T],
        log_z_tail_min=logz[:, win].min(axis=1),
        log_z_tail_max=logz[:, win].max(axis=1),
        y_osc=y_osc,
        absorbed=dead.any(axis=1),
        c_value=np.full(n_paths, float(c_cum[T])),
        v_total=np.full(n_paths, v_total),
        tv_total=_tv_from_table(tv_cum),
    )


def _segment_stats(base, w0, T, events):
    """(osc, min, max, final_offset) of base[t] + sum of event offsets over
    integer times in [w0, T]; `events` is a sorted list of (time, delta)."""
    lo = math.inf
    hi = -math.inf
    offset = sum(d for t, d in events if t <= w0)
    start = w0
    for t, d in events:
        if t <= w0:
            continue
        if t > T:
            break
        seg = base[start:t]          # times start .. t-1
        if seg.size:
            lo = min(lo, seg.min() + offset)
            hi = max(hi, seg.max() + offset)
        offset += d
        start = t
    seg = base[start:T + 1]
    if seg.size:
        lo = min(lo, seg.min() + offset)
        hi = max(hi, seg.max() + offset)
    return hi - lo, lo, hi


def _summaries_sparse(model, n_paths, seed, tol):
    """Summary engine for the random-walk kind at large horizon * n_paths:
    the common outcome forms a deterministic base path and the rare
    outcomes are sampled as sparse per-path corrections."""
    T = int(math.floor(model.horizon + 1e-9))
    comp = compensator(model)
    xs = np.array([model.x(n) for n in range(1, T + 1)])
    ps = np.array([model.p(n) for n in range(1, T + 1)])
    with np.errstate(over="ignore", invalid="ignore"):
        rare = np.where(xs != 0.0,
                        xs * (1.0 - 1.0 / np.where(ps > 0, ps, 1.0)), 0.0)
    live = np.isfinite(rare)
    rare = np.where(live, rare, xs)
    ps = np.where(live, ps, 0.0)

    x_base = np.concatenate([[0.0], np.cumsum(xs)])
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = np.where(xs > -1.0, np.log1p(xs), -math.inf)
    logz_base = np.concatenate([[0.0], np.cumsum(logf)])
    qv_base = np.concatenate([[0.0], np.cumsum(xs * xs)])

    # rare events: per step n, a Binomial(n_paths, p_n) subset of paths
    rng = rng_for(seed, salt=7)
    events = [[] for _ in range(n_paths)]
    for n in range(1, T + 1):
        p = ps[n - 1]
        if xs[n - 1] == 0.0 or p <= 0.0:
            continue
        k = rng.binomial(n_paths, p)
        if k == 0:
            continue
        idx = rng.choice(n_paths, size=k, replace=False)
        dx = rare[n - 1] - xs[n - 1]
        one_plus = 1.0 + rare[n - 1]
        dlog = ((math.log(abs(one_plus)) if abs(one_plus) > 1e-12
                 else -math.inf) - logf[n - 1])
        dqv = rare[n - 1] ** 2 - xs[n - 1] ** 2
        for i in idx:
            events[i].append((n, dx, dlog, dqv, abs(one_plus) <= 1e-12))

    w0 = int(math.floor(tol.alpha * T))
    osc = np.empty(n_paths)
    lo = np.empty(n_paths)
    hi = np.empty(n_paths)
    zlo = np.empty(n_paths)
    zhi = np.empty(n_paths)
    qv_tail = np.empty(n_paths)
    qv_total = np.empty(n_paths)
    x_final = np.empty(n_paths)
    absorbed = np.zeros(n_paths, dtype=bool)
    for i in range(n_paths):
        evs = sorted(events[i])
        osc[i], lo[i], hi[i] = _segment_stats(
            x_base, w0, T, [(t, dx) for t, dx, _, _, _ in evs])
        _, zlo[i], zhi[i] = _segment_stats(
            logz_base, w0, T, [(t, dl) for t, _, dl, _, _ in evs])
        qv_tail[i] = (qv_base[T] - qv_base[w0]
                      + sum(dq for t, _, _, dq, _ in evs if t > w0))
        qv_total[i] = qv_base[T] + sum(dq for _, _, _, dq, _ in evs)
        x_final[i] = x_base[T] + sum(dx for _, dx, _, _, _ in evs)
        absorbed[i] = any(a for *_, a in evs)

    v_cum = _atom_table(comp, T, TestFunction("xm_log"))
    c_cum = _atom_table(comp, T, TestFunction("truncated_abs"))
    tv_cum = _atom_table(comp, T, TestFunction("identity"))
    y_osc = np.full(n_paths, math.inf) if not math.isfinite(v_cum[T]) \
        else osc * math.nan  # handled below
    if math.isfinite(v_cum[T]):
        # Y = log Z + V; for this engine compute its oscillation from the
        # same segment decomposition (V is deterministic)
        base_y = logz_base + v_cum
        for i in range(n_paths):
            evs = sorted(events[i])
            y_osc[i], _, _ = _segment_stats(
                base_y, w0, T, [(t, dl) for t, _, dl, _, _ in evs])

    return EnsembleSummary(
        model=model, n_paths=n_paths, seed=seed, horizon=float(T),
        window_start=float(w0),
        tail_osc=osc, tail_min=lo, tail_max=hi,
        qv_tail=qv_tail, qv_total=qv_total, x_final=x_final,
        log_z_tail_min=zlo, log_z_tail_max=zhi,
        y_osc=y_osc, absorbed=absorbed,
        c_value=np.full(n_paths, float(c_cum[T])),
        v_total=np.full(n_paths, float(v_cum[T])),
        tv_total=_tv_from_table(tv_cum),
    )


def _atom_cumulative(comp, tag):
    """Sorted (times, cumulative integrals) of the atom part; +inf tail
    after a divergent or out-of-domain atom.  Symbolic shock outcomes go
    through the registered closed-form/quadrature integrals."""
    times = []
    cums = []
    acc = 0.0
    for atom in sorted(comp.atoms, key=lambda a: a.time):
        if math.isfinite(acc):
            try:
                inc = criteria.atom_integral(atom, tag)
            except (DomainError, IntegrabilityError):
                inc = math.inf
            acc = acc + inc if math.isfinite(inc) else math.inf
        times.append(atom.time)
        cums.append(acc)

    def value(t):
        k = bisect.bisect_right(times, t)
        return cums[k - 1] if k else 0.0

    return value


def _rate_integral(comp, F, t, rho):
    if comp.rate is None:
        return 0.0
    cut = min(t, rho)
    if getattr(F, "tag", None) in comp.divergent_tags \
            and not math.isfinite(cut):
        return math.inf
    return comp.rate.integral(F, cut)


def _summaries_pathwise(model, n_paths, seed, tol):
    """Generic engine: one exact path at a time."""
    T = model.horizon
    comp = compensator(model)
    w0 = tol.alpha * T
    xm_log = TestFunction("xm_log")
    trunc = TestFunction("truncated_abs")
    v_atoms = _atom_cumulative(comp, "xm_log")
    c_atoms = _atom_cumulative(comp, "truncated_abs")

    cols = {name: np.empty(n_paths) for name in
            ("osc", "lo", "hi", "qv_tail", "qv_total", "x_final",
             "zlo", "zhi", "y_osc", "c_value", "v_total")}
    absorbed = np.zeros(n_paths, dtype=bool)
    for i in range(n_paths):
        m = sample_path(model, seed, salt=7, index=i)
        rho = (m.jumps[0].time if (comp.rate is not None and m.jumps)
               else math.inf)
        times = follmer._candidate_times(m)
        win = [t for t in times if t >= w0]
        if not win or win[0] > w0:
            win = [w0] + win
        vals = np.array([m.value_at(t) for t in win]
                        + [m.left_limit(t) for t in win if t > w0])
        cols["osc"][i] = vals.max() - vals.min()
        cols["lo"][i] = vals.min()
        cols["hi"][i] = vals.max()
        qv = quadratic_variation(m)
        cols["qv_total"][i] = qv.value_at(T)
        cols["qv_tail"][i] = qv.value_at(T) - qv.value_at(w0)
        cols["x_final"][i] = m.value_at(T)
        pair = stoch_exp(m, signed=True)
        absorbed[i] = (pair.absorption_time is not None
                       and pair.absorption_time <= T)
        logs = [pair.log_value(t)[0] for t in win]
        cols["zlo"][i] = min(logs)
        cols["zhi"][i] = max(logs)
        try:
            v_at = {t: 0.5 * m.diffusion_qv_rate * t + v_atoms(t)
                    + _rate_integral(comp, xm_log, t, rho)
                    for t in win + [T]}
            ys = [logv + v_at[t] for logv, t in zip(logs, win)]
            cols["y_osc"][i] = (max(ys) - min(ys)
                                if all(map(math.isfinite, ys)) else math.inf)
            cols["v_total"][i] = v_at[T]
        except (DomainError, IntegrabilityError):
            cols["y_osc"][i] = math.inf
            cols["v_total"][i] = math.inf
        try:
            cols["c_value"][i] = (m.diffusion_qv_rate * T + c_atoms(T)
                                  + _rate_integral(comp, trunc, T, rho))
        except (DomainError, IntegrabilityError):
            cols["c_value"][i] = math.inf

    try:
        tv = (_atom_cumulative(comp, "identity")(T)
              + _rate_integral(comp, TestFunction("identity"), T, math.inf))
    except (DomainError, IntegrabilityError):
        tv = math.inf
    return EnsembleSummary(
        model=model, n_paths=n_paths, seed=seed, horizon=float(T),
        window_start=float(w0),
        tail_osc=cols["osc"], tail_min=cols["lo"], tail_max=cols["hi"],
        qv_tail=cols["qv_tail"], qv_total=cols["qv_total"],
        x_final=cols["x_final"],
        log_z_tail_min=cols["zlo"], log_z_tail_max=cols["zhi"],
        y_osc=cols["y_osc"], absorbed=absorbed,
        c_value=cols["c_value"], v_total=cols["v_total"],
        tv_total=abs(tv) if math.isfinite(tv) else math.inf,
    )


def summarize_ensemble(model, n_paths, seed, tolerances=None):
    tol = tolerances or Tolerances()
    T = int(math.floor(model.horizon + 1e-9))
    if model.kind in _STEP_KINDS:
        if model.kind == "random_walk_large_jumps" \
                and T * n_paths > _DENSE_BUDGET:
            return _summaries_sparse(model, n_paths, seed, tol)
        return _summaries_dense(model, n_paths, seed, tol)
    return _summaries_pathwise(model, n_paths, seed, tol)


def classify_events(ensemble, tolerances=None):
    """Per-path EventFlags from an EnsembleSummary."""
    tol = tolerances or Tolerances()
    s = ensemble
    log_eta = math.log(tol.eta)
    flags = []
    for i in range(s.n_paths):
        lo_ok = s.tail_min[i] > -tol.big_k
        hi_ok = s.tail_max[i] > -tol.big_k
        conv = bool(s.tail_osc[i] < tol.epsilon and lo_ok)
        band = bool((not s.absorbed[i])
                    and s.log_z_tail_min[i] >= log_eta
                    and s.log_z_tail_max[i] <= -log_eta)
        flags.append(EventFlags(
            numeric_convergent=conv,
            liminf_bounded=bool(lo_ok),
            limsup_bounded=bool(hi_ok),
            qv_growing=bool(s.qv_tail[i] > tol.qv_threshold),
            functional_c_finite=bool(s.c_value[i] < tol.cap),
            exp_converges_nonzero=band,
            absorbed=bool(s.absorbed[i]),
            y_convergent=bool(s.y_osc[i] < tol.epsilon),
            v_finite=bool(s.v_total[i] < tol.cap),
        ))
    return flags


def flag_frequencies(flags):
    n = len(flags)
    out = {}
    for name in FLAG_NAMES:
        f = sum(getattr(fl, name) for fl in flags) / n
        out[name] = {"frequency": f,
                     "se": math.sqrt(f * (1.0 - f) / n) if n > 1 else 0.0}
    return out


# -- oracle comparison -------------------------------------------------------------


def confusion_matrix(model, flags):
    """Agreement between numeric flags and the analytic oracle, per flag
    with an oracle counterpart."""
    oracle = analytic_oracle(model)
    n = len(flags)
    rows = {}

    def entry(name, numeric_count, verdict, prob):
        expected = {"yes": float(n), "no": 0.0}.get(verdict)
        if expected is None:
            expected = (prob if prob is not None else 0.5) * n
        agree = 1.0 - abs(numeric_count - expected) / n
        rows[name] = {"oracle": verdict, "expected_count": expected,
                      "numeric_count": numeric_count, "n": n,
                      "agreement": agree}

    entry("numeric_convergent",
          sum(f.numeric_convergent for f in flags),
          oracle.converges, oracle.converge_prob)
    entry("qv_finite",
          sum(not f.qv_growing for f in flags),
          oracle.qv_finite, None)
    return rows


EQUALITY_IDS = {
    "conv-eq-liminf": ("numeric_convergent", "liminf_bounded"),
    "conv-eq-qv": ("numeric_convergent", "!qv_growing"),
    "conv-eq-c": ("numeric_convergent", "functional_c_finite"),
    "conv-eq-exp": ("numeric_convergent", "exp_converges_nonzero"),
    "conv-eq-y": ("numeric_convergent", "y_convergent"),
}


def _flag_value(flag, name):
    if name.startswith("!"):
        return not getattr(flag, name[1:])
    return getattr(flag, name)


def event_equality_test(model, equality_id, n_paths=1000, seed=0,
                        tolerances=None):
    """Fraction of paths where both sides of a registered event equality
    produce the same flag, with an oracle cross-check when available."""
    if equality_id not in EQUALITY_IDS:
        raise UnknownExample("unknown equality id %r" % equality_id)
    lhs_name, rhs_name = EQUALITY_IDS[equality_id]
    tol = tolerances or Tolerances()
    summary = summarize_ensemble(model, n_paths, seed, tol)
    flags = classify_events(summary, tol)
    agree = sum(_flag_value(f, lhs_name) == _flag_value(f, rhs_name)
                for f in flags) / len(flags)
    report = {
        "equality": equality_id,
        "lhs": lhs_name, "rhs": rhs_name,
        "agreement": agree,
        "lhs_frequency": sum(_flag_value(f, lhs_name) for f in flags)
        / len(flags),
        "rhs_frequency": sum(_flag_value(f, rhs_name) for f in flags)
        / len(flags),
        "n_paths": n_paths,
    }
    try:
        report["confusion"] = confusion_matrix(model, flags)
    except OracleUnavailable as exc:
        report["warning"] = ("oracle unavailable, numeric-only mode: %s"
                             % exc)
    return report


# -- reports -----------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    return obj


@dataclass
class ExperimentReport:
    config: dict
    flag_frequencies: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    identity_deviations: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    seed: int = 0
    runtime_seconds: float = 0.0
    plot_data: dict = field(default_factory=dict)   # name -> (header, rows)

    @property
    def passed(self):
        return all(c.get("passed", True) for c in self.checks)

    def payload(self):
        """Canonical report content: everything except runtime."""
        return _jsonable({
            "config": self.config,
            "flag_frequencies": self.flag_frequencies,
            "confusion": self.confusion,
            "checks": self.checks,
            "identity_deviations": self.identity_deviations,
            "verdicts": self.verdicts,
            "seed": self.seed,
            "passed": self.passed,
        })

    def to_json(self):
        return json.dumps(self.payload(), sort_keys=True,
                          separators=(",", ":"))

    def write(self, out_dir, stem="report"):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, stem + ".json"), "w") as fh:
            fh.write(self.to_json())
        if self.flag_frequencies:
            with open(os.path.join(out_dir, stem + "_flags.csv"), "w",
                      newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["flag", "frequency", "se"])
                for name, row in sorted(self.flag_frequencies.items()):
                    w.writerow([name, row["frequency"], row["se"]])
        if self.checks:
            with open(os.path.join(out_dir, stem + "_checks.csv"), "w",
                      newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["name", "value", "target", "tolerance",
                            "passed"])
                for c in self.checks:
                    w.writerow([c["name"], c["value"], c.get("target"),
                                c.get("tolerance"), c["passed"]])
        for name, (header, rows) in self.plot_data.items():
            with open(os.path.join(out_dir, "%s_%s.csv" % (stem, name)),
                      "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)


def _histogram_table(values, bins=40):
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return (["left", "right", "count"], [])
    counts, edges = np.histogram(finite, bins=bins)
    return (["left", "right", "count"],
            [[edges[i], edges[i + 1], int(c)] for i, c in enumerate(counts)])


def _check(name, value, target=None, tolerance=None, passed=None):
    if passed is None:
        passed = abs(value - target) <= tolerance
    return {"name": name, "value": value, "target": target,
            "tolerance": tolerance, "passed": bool(passed)}


# -- reproduction recipes ------------------------------------------------------------


def _harmonic(n):
    return math.fsum(1.0 / k for k in range(1, n + 1))


def _generic_recipe(preset_id, n_paths, seed, tol):
    model = preset(preset_id)
    if model.kind == "cox_one_jump":
        # classify on a longer horizon so single jumps landing just after
        # the tail-window start do not read as oscillation
        model = preset(preset_id, horizon=2.0 * model.horizon)
    summary = summarize_ensemble(model, n_paths, seed, tol)
    flags = classify_events(summary, tol)
    checks = []
    confusion = {}
    try:
        confusion = confusion_matrix(model, flags)
        for name, row in confusion.items():
            checks.append(_check(
                "oracle_agreement_%s" % name, row["agreement"],
                target=1.0, tolerance=0.05,
                passed=row["agreement"] >= 0.95))
    except OracleUnavailable:
        pass
    return model, summary, flags, confusion, checks


def _recipe_ex_6_2_1(n_paths, seed, tol):
    n_paths = n_paths or 10000
    model = preset("ex-6.2-1", horizon=10000.0)
    summary = summarize_ensemble(model, n_paths, seed, tol)
    flags = classify_events(summary, tol)
    conv = sum(f.numeric_convergent for f in flags) / len(flags)
    pattern = sum(f.numeric_convergent and f.qv_growing
                  and not f.functional_c_finite for f in flags) / len(flags)
    typical_qv = math.fsum(model.x(n) ** 2 for n in range(1, 10001))
    median_qv = float(np.median(summary.qv_total))
    checks = [
        _check("convergent_frequency", conv, 1.0, 0.01,
               passed=conv >= 0.99),
        _check("median_qv_vs_typical", median_qv, typical_qv,
               0.1 * typical_qv),
        _check("pattern_a_holds_c_f_fail", pattern, 1.0, 0.05,
               passed=pattern >= 0.95),
    ]
    return model, summary, flags, checks


def _recipe_ex_6_4(n_paths, seed, tol):
    n_paths = n_paths or 100000
    model = preset("ex-6.4")
    rho, _ = sample_cox_arrays(model, n_paths, seed, salt=7)
    freq = float(np.mean(np.isinf(rho)))
    se = math.sqrt(freq * (1.0 - freq) / n_paths)
    target = math.exp(-1.0)
    checks = [_check("no_jump_probability", freq, target, 4.0 * se)]
    return model, None, None, checks


def _recipe_ex_6_3_1(n_paths, seed, tol):
    n_paths = n_paths or 20000
    model = preset("ex-6.3-1")
    cap = 50.0
    checks = []
    for a in (2.0, 3.0):
        for horizon in (8, 16, 32):
            v = criteria.evaluate_condition(
                preset("ex-6.3-1", horizon=float(horizon)),
                criteria.CriterionSpec("B_a", a),
                n_paths=n_paths, seed=seed)
            checks.append(_check(
                "B_a_sup_a=%g_T=%d" % (a, horizon), v.sup_estimate,
                target=0.0, tolerance=cap,
                passed=v.sup_estimate <= cap and not v.diverged))
    pair = follmer.tilt_model(model)
    probe = follmer.ui_probe(pair, [8, 16, 32], n_paths=n_paths, seed=seed)
    below_half = None
    for row in probe["rows"]:
        oracle = follmer.q_crossing_survival(model, row["horizon"])
        tol_band = 4.0 * max(row["ep_no_crossing_se"], 1e-4)
        checks.append(_check(
            "restricted_mean_vs_oracle_T=%d" % row["horizon"],
            row["ep_no_crossing"], oracle, tol_band))
        checks.append(_check(
            "q_survival_vs_oracle_T=%d" % row["horizon"],
            row["q_survival"], oracle,
            4.0 * max(row["q_survival_se"], 1e-4)))
        if below_half is None and oracle < 0.5:
            below_half = row["horizon"]
            checks.append(_check(
                "restricted_mean_below_half_T=%d" % below_half,
                row["ep_no_crossing"], 0.0, 0.5,
                passed=row["ep_no_crossing"] < 0.5))
    return model, None, None, checks


def _recipe_remark_4_3(n_paths, seed, tol):
    model = preset("remark-4.3")
    summary = summarize_ensemble(model, 1, seed, tol)
    flags = classify_events(summary, tol)
    checks = [_check("convergent", float(flags[0].numeric_convergent),
                     1.0, 0.0, passed=flags[0].numeric_convergent)]
    # exact alternating-harmonic partial sums: S_2k = -(H_2k - H_k)
    worst = 0.0
    for k in (4, 16, 64, 128):
        s = math.fsum((-1.0) ** n / n for n in range(1, 2 * k + 1))
        closed = -(_harmonic(2 * k) - _harmonic(k))
        worst = max(worst, abs(s - closed))
    checks.append(_check("alternating_harmonic_partial_sums", worst,
                         0.0, 1e-12))
    # the total-variation proxy grows without bound in the horizon
    tvs = []
    for T in (64, 256, 1024):
        s2 = summarize_ensemble(preset("remark-4.3", horizon=float(T)),
                                1, seed, tol)
        tvs.append(s2.tv_total)
    growing = tvs[0] < tvs[1] < tvs[2]
    checks.append(_check("tv_proxy_growing", tvs[-1] - tvs[0], None, None,
                         passed=growing))
    checks.append(_check("tv_proxy_tracks_harmonic", tvs[-1],
                         _harmonic(1024), 1e-9))
    return model, summary, flags, checks


_SPECIAL_RECIPES = {
    "ex-6.2-1": _recipe_ex_6_2_1,
    "ex-6.4": _recipe_ex_6_4,
    "ex-6.3-1": _recipe_ex_6_3_1,
    "remark-4.3": _recipe_remark_4_3,
}


def reproduce(example_id, overrides=None, out_dir=None):
    """Run the registered reproduction recipe for a catalogue preset."""
    overrides = overrides or {}
    if example_id not in preset_ids():
        raise UnknownExample("no recipe registered for %r" % example_id)
    t0 = time.perf_counter()
    seed = int(overrides.get("seed", 0))
    n_paths = overrides.get("n_paths")
    tol = Tolerances.from_dict(overrides.get("tolerances", {}))
    confusion = {}
    if example_id in _SPECIAL_RECIPES:
        model, summary, flags, checks = _SPECIAL_RECIPES[example_id](
            n_paths, seed, tol)
    else:
        model, summary, flags, confusion, checks = _generic_recipe(
            example_id, n_paths or 3000, seed, tol)
    report = ExperimentReport(
        config={"example_id": example_id, "model": model_to_dict(model),
                "n_paths": n_paths, "tolerances": dataclasses.asdict(tol)},
        flag_frequencies=flag_frequencies(flags) if flags else {},
        confusion=confusion,
        checks=checks,
        seed=seed,
        runtime_seconds=time.perf_counter() - t0,
    )
    if out_dir:
        report.write(out_dir, stem="reproduce_%s" % example_id)
    return report


# -- experiment driver ----------------------------------------------------------------


_CONFIG_KEYS = {"model", "preset", "n_paths", "horizon", "seed",
                "tolerances", "family", "report"}


def _validate_config(config):
    problems = []
    if not isinstance(config, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        problems.append("unknown fields: %s" % ", ".join(sorted(unknown)))
    has_model = "model" in config
    has_preset = "preset" in config
    if has_model == has_preset:
        problems.append("exactly one of 'model' or 'preset' is required")
    n = config.get("n_paths", 1000)
    if not isinstance(n, int) or n <= 0:
        problems.append("n_paths must be a positive integer")
    horizon = config.get("horizon")
    if horizon is not None:
        if not isinstance(horizon, (int, float)) or horizon <= 0:
            problems.append("horizon must be positive")
        elif has_model and "horizon" in config["model"] \
                and float(config["model"]["horizon"]) != float(horizon):
            problems.append(
                "conflicting horizons: config says %g, model says %g"
                % (horizon, config["model"]["horizon"]))
        elif has_preset and horizon < 1.0:
            problems.append("preset horizons below 1 have no events")
    if problems:
        raise ConfigError("; ".join(problems))


def run_experiment(config, out_dir=None):
    """Validate a config, run the simulate -> classify -> report pipeline,
    and return a deterministic ExperimentReport."""
    _validate_config(config)
    t0 = time.perf_counter()
    seed = int(config.get("seed", 0))
    n_paths = int(config.get("n_paths", 1000))
    tol = Tolerances.from_dict(config.get("tolerances", {}))
    if "preset" in config:
        model = preset(config["preset"], horizon=config.get("horizon"))
    else:
        model = model_from_dict(config["model"])

    summary = summarize_ensemble(model, n_paths, seed, tol)
    flags = classify_events(summary, tol)
    confusion = {}
    try:
        confusion = confusion_matrix(model, flags)
    except OracleUnavailable:
        pass

    report_opts = config.get("report", {}) or {}
    verdicts = {}
    for tag in report_opts.get("criteria", ()):
        spec = criteria.CriterionSpec(tag, report_opts.get("a"))
        v = criteria.evaluate_condition(model, spec,
                                        n_paths=min(n_paths, 10000),
                                        seed=seed)
        verdicts[tag] = {"sup_estimate": v.sup_estimate,
                         "bounded": v.bounded_flag,
                         "diverged": v.diverged}
    identity_devs = {}
    if report_opts.get("identities"):
        comp = compensator(model)
        worst_a = worst_b = 0.0
        for i in range(min(n_paths, 50)):
            m = sample_path(model, seed, salt=7, index=i)
            if any(j.size <= -1.0 for j in m.jumps):
                continue
            try:
                da, db = criteria.identity_check(0.5, m, comp, relative=True)
            except (criteria.CompensatorDiverges, DomainError,
                    IntegrabilityError):
                break
            worst_a = max(worst_a, abs(da))
            worst_b = max(worst_b, abs(db))
        identity_devs = {"A_a": worst_a, "B_a": worst_b}

    report = ExperimentReport(
        config={k: _jsonable(v) for k, v in sorted(config.items())},
        flag_frequencies=flag_frequencies(flags),
        confusion=confusion,
        identity_deviations=identity_devs,
        verdicts=verdicts,
        seed=seed,
        runtime_seconds=time.perf_counter() - t0,
        plot_data={
            "hist_x_final": _histogram_table(summary.x_final),
            "hist_qv": _histogram_table(summary.qv_total),
        },
    )
    if out_dir:
        report.write(out_dir)
    return report


# -- preset battery -------------------------------------------------------------------


def battery(seed=7, out_dir=None, n_paths=None):
    """Run every preset's reproduction recipe; returns (report_dict,
    exit_code) with exit code 0 iff all recipe checks pass."""
    results = {}
    all_passed = True
    for pid in preset_ids():
        rep = reproduce(pid, overrides={"seed": seed, "n_paths": n_paths})
        results[pid] = {"passed": rep.passed, "checks": rep.checks,
                        "flag_frequencies": rep.flag_frequencies}
        all_passed &= rep.passed
    payload = _jsonable({"seed": seed, "presets": results,
                         "passed": all_passed})
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "battery_report.json"), "w") as fh:
            fh.write(json.dumps(payload, sort_keys=True,
                                separators=(",", ":")))
    return payload, 0 if all_passed else 1
