"""Command-line entry point.

Subcommands: simulate, exponential, verify-identities, nk-check,
follmer-check, ui-probe, classify, reproduce, battery.
Exit codes: 0 = pass, 1 = a threshold check failed, 2 = configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import criteria, follmer, lab
from .functionals import DomainError, IntegrabilityError
from .models import (InvalidParameters, OracleUnavailable, UnknownPreset,
                     compensator, model_from_dict, preset, preset_ids,
                     sample_path)
from .stochexp import stoch_exp


def _emit(obj, args):
    text = json.dumps(lab._jsonable(obj), indent=2, sort_keys=True)
    print(text)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, args.command + ".json"),
                  "w") as fh:
            fh.write(text)


def _load_config(args):
    if args.config:
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def _resolve_model(args, config):
    if getattr(args, "preset", None):
        return preset(args.preset, horizon=getattr(args, "horizon", None))
    if "preset" in config:
        return preset(config["preset"], horizon=config.get("horizon"))
    if "model" in config:
        return model_from_dict(config["model"])
    raise lab.ConfigError("a preset (--preset) or a config with a model "
                          "is required")


def _cmd_simulate(args):
    config = _load_config(args)
    model = _resolve_model(args, config)
    rows = []
    for i in range(args.n_paths):
        m = sample_path(model, args.seed, salt=7, index=i)
        rows.append({"index": i, "x_final": m.value_at(m.horizon),
                     "n_jumps": len(m.jumps)})
    _emit({"model": lab.model_to_dict(model), "paths": rows}, args)
    return 0


def _cmd_exponential(args):
    config = _load_config(args)
    model = _resolve_model(args, config)
    m = sample_path(model, args.seed, salt=7, index=args.index)
    pair = stoch_exp(m, signed=True)
    times = sorted({0.0, m.horizon}
                   | {j.time for j in m.jumps}
                   | {float(k) for k in range(1, int(m.horizon) + 1)})
    rows = []
    for t in times:
        logz, sign = pair.log_value(t)
        rows.append({"t": t, "x": m.value_at(t),
                     "log_abs_exp": logz, "sign": sign,
                     "exp": pair.value(t)})
    _emit({"absorption_time": pair.absorption_time, "rows": rows}, args)
    return 0


def _cmd_verify_identities(args):
    worst = {"A_a": 0.0, "B_a": 0.0}
    tol = 1e-9
    for pid in preset_ids():
        model = preset(pid)
        comp = compensator(model)
        for i in range(args.n_paths):
            m = sample_path(model, args.seed, salt=7, index=i)
            if any(j.size <= -1.0 for j in m.jumps):
                continue
            try:
                da, db = criteria.identity_check(0.5, m, comp, relative=True)
            except (criteria.CompensatorDiverges, DomainError,
                    IntegrabilityError):
                # criterion processes undefined for this model (jumps at
                # or below -1, or a divergent compensator integral)
                break
            worst["A_a"] = max(worst["A_a"], abs(da))
            worst["B_a"] = max(worst["B_a"], abs(db))
    passed = max(worst.values()) <= tol
    _emit({"max_deviation": worst, "tolerance": tol, "passed": passed},
          args)
    return 0 if passed else 1


def _cmd_nk_check(args):
    config = _load_config(args)
    model = _resolve_model(args, config)
    out = {}
    for tag in args.criterion:
        spec = criteria.CriterionSpec(tag, args.a)
        v = criteria.evaluate_condition(model, spec, n_paths=args.n_paths,
                                        seed=args.seed)
        out[tag] = {"sup_estimate": v.sup_estimate,
                    "bounded": v.bounded_flag, "diverged": v.diverged,
                    "per_rule": {k: list(se) for k, se in
                                 v.per_rule.items()}}
    _emit(out, args)
    return 0


def _cmd_follmer_check(args):
    config = _load_config(args)
    model = _resolve_model(args, config)
    pair = follmer.tilt_model(model)
    if args.sigma is None:
        sigma = follmer.DeterministicTime(model.horizon)
    else:
        sigma = follmer.parse_sigma(args.sigma, model.horizon)
    stat = follmer.parse_statistic(args.statistic)
    result = follmer.duality_check(pair, sigma, stat, n_paths=args.n_paths,
                                   seed=args.seed)
    ok = result.consistent()
    _emit({"lhs": result.lhs, "lhs_se": result.lhs_se,
           "rhs": result.rhs, "rhs_se": result.rhs_se,
           "n_paths": result.n_paths, "consistent": ok,
           "certificate_rows": len(pair.tilt_certificate)}, args)
    return 0 if ok else 1


def _cmd_ui_probe(args):
    config = _load_config(args)
    model = _resolve_model(args, config)
    pair = follmer.tilt_model(model)
    out = follmer.ui_probe(pair, args.horizons, n_paths=args.n_paths,
                           seed=args.seed)
    _emit(out, args)
    return 0


def _cmd_classify(args):
    config = _load_config(args)
    if getattr(args, "preset", None):
        config = dict(config)
        config.pop("model", None)
        config["preset"] = args.preset
    if args.n_paths is not None:
        config["n_paths"] = args.n_paths
    config.setdefault("seed", args.seed)
    report = lab.run_experiment(config, out_dir=args.out_dir)
    print(json.dumps(report.payload(), indent=2, sort_keys=True))
    return 0 if report.passed else 1


def _cmd_reproduce(args):
    overrides = {"seed": args.seed}
    if args.n_paths is not None:
        overrides["n_paths"] = args.n_paths
    report = lab.reproduce(args.example_id, overrides=overrides,
                           out_dir=args.out_dir)
    print(json.dumps(report.payload(), indent=2, sort_keys=True))
    return 0 if report.passed else 1


def _cmd_battery(args):
    payload, code = lab.battery(seed=args.seed, out_dir=args.out_dir,
                                n_paths=args.n_paths)
    print(json.dumps(payload, sort_keys=True, separators=(",", ":")))
    return code


def build_parser():
    parser = argparse.ArgumentParser(
        prog="martlab",
        description="Simulation lab for convergence of local "
                    "supermartingales and exponential-martingale criteria")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--threads", type=int, default=1,
                        help="reserved; the pipeline is single-threaded")
    parser.add_argument("--config", default=None,
                        help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(fn=fn)
        return p

    p = add("simulate", _cmd_simulate, help="sample paths of a model")
    p.add_argument("--preset", choices=preset_ids())
    p.add_argument("--horizon", type=float)
    p.add_argument("--n-paths", type=int, default=5)

    p = add("exponential", _cmd_exponential,
            help="tabulate a path and its stochastic exponential")
    p.add_argument("--preset", choices=preset_ids())
    p.add_argument("--horizon", type=float)
    p.add_argument("--index", type=int, default=0)

    p = add("verify-identities", _cmd_verify_identities,
            help="pathwise criterion-identity deviations over all presets")
    p.add_argument("--n-paths", type=int, default=20)

    p = add("nk-check", _cmd_nk_check,
            help="evaluate integrability criteria on a model")
    p.add_argument("--preset", choices=preset_ids())
    p.add_argument("--horizon", type=float)
    p.add_argument("--criterion", nargs="+", default=["novikov_delta"],
                   choices=list(criteria.CRITERION_TAGS))
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--n-paths", type=int, default=10000)

    p = add("follmer-check", _cmd_follmer_check,
            help="measure-tilt duality identity check")
    p.add_argument("--preset", choices=preset_ids())
    p.add_argument("--horizon", type=float)
    p.add_argument("--statistic", default="one")
    p.add_argument("--sigma", default=None)
    p.add_argument("--n-paths", type=int, default=20000)

    p = add("ui-probe", _cmd_ui_probe,
            help="uniform-integrability probe across horizons")
    p.add_argument("--preset", choices=preset_ids())
    p.add_argument("--horizons", nargs="+", type=int,
                   default=[8, 16, 32])
    p.add_argument("--n-paths", type=int, default=20000)

    p = add("classify", _cmd_classify,
            help="run the classification pipeline on a config or preset")
    p.add_argument("--preset", choices=preset_ids())
    p.add_argument("--n-paths", type=int, default=None)

    p = add("reproduce", _cmd_reproduce,
            help="run a registered catalogue experiment")
    p.add_argument("example_id")
    p.add_argument("--n-paths", type=int, default=None)

    p = add("battery", _cmd_battery,
            help="run every preset recipe; exit 0 iff all pass")
    p.add_argument("--n-paths", type=int, default=None)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (lab.ConfigError, lab.UnknownExample, UnknownPreset,
            InvalidParameters, follmer.UnsupportedModel,
            OracleUnavailable, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
