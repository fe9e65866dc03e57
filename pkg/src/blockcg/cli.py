"""``blockcg`` command line: gen, solve, bench, verify, estimate-opt.

Exit status: 0 success, 1 theorem violation, 2 usage or configuration
error, 3 I/O error (including unparsable files), 4 numerical failure.
Options given on the command line override those read from ``--config``
(a JSON object using the option names, dashes or underscores).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .bench import BenchSpec, run_bench
from .errors import BlockCGError, NumericalFailure, UnsupportedError
from .measures import compute_constants
from .problems import GENERATORS, instance_from_json, save_instance
from .solver import RunTrace, SolverConfig, _RULE_OF_STEPSIZE, estimate_optimum, run, verify_rate

logger = logging.getLogger("blockcg")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
PARAM_ALIASES = {"box_quadratic": {"n": "n_samples"}}


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _setup_logging() -> None:
    level = os.environ.get("BLOCKCG_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise CLIError(f"BLOCKCG_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}", EXIT_USAGE)
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from exc


def _parse_json(text: str, path) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise CLIError(f"{path}: parse error at byte offset {offset}: {exc.msg}", EXIT_IO) from exc


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text + "\n")
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc.strerror}", EXIT_IO) from exc


def _load_instance(path):
    text = _read_text(path)
    try:
        return instance_from_json(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise CLIError(f"{path}: parse error at byte offset {offset}: {exc.msg}", EXIT_IO) from exc
    except (KeyError, TypeError) as exc:
        raise CLIError(f"{path}: malformed instance ({exc})", EXIT_IO) from exc


def _merged(args, names) -> dict:
    """Values of ``names`` from the command line, falling back on ``--config``."""
    conf = {}
    if getattr(args, "config", None):
        raw = _parse_json(_read_text(args.config), args.config)
        if not isinstance(raw, dict):
            raise CLIError("config file must hold a JSON object", EXIT_USAGE)
        conf = {k.replace("-", "_"): v for k, v in raw.items()}
        unknown = set(conf) - set(names)
        if unknown:
            raise CLIError(f"unknown config fields: {sorted(unknown)}", EXIT_USAGE)
    out = {}
    for n in names:
        v = getattr(args, n, None)
        out[n] = v if v is not None else conf.get(n)
    return out


def _solver_config(opts: dict) -> SolverConfig:
    kw = {
        "scheduler": opts.get("scheduler"),
        "stepsize": opts.get("stepsize"),
        "max_outer_iterations": opts.get("iters"),
        "gap_tolerance": opts.get("tol"),
        "seed": opts.get("seed"),
        "kappa": opts.get("kappa"),
        "beta_init": opts.get("beta_init"),
        "record_block_events": opts.get("record_events"),
        "record_time": opts.get("timing"),
    }
    return SolverConfig(**{k: v for k, v in kw.items() if v is not None})


# -- subcommands --------------------------------------------------------------


def cmd_gen(args) -> int:
    opts = _merged(args, ["seed", "out"])
    name = args.generator.replace("-", "_")
    if name not in GENERATORS:
        raise CLIError(f"unknown generator {args.generator!r}; choose from {sorted(GENERATORS)}", EXIT_USAGE)
    params = {}
    for item in args.params:
        key, sep, val = item.partition("=")
        if not sep:
            raise CLIError(f"parameter {item!r} is not of the form key=value", EXIT_USAGE)
        key = PARAM_ALIASES.get(name, {}).get(key, key)
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    if opts["out"] is None:
        raise CLIError("gen needs --out", EXIT_USAGE)
    try:
        inst = GENERATORS[name](**params, seed=opts["seed"] or 0)
    except TypeError as exc:
        raise CLIError(f"bad parameters for {name}: {exc}", EXIT_USAGE) from exc
    try:
        digest = save_instance(inst, opts["out"])
    except OSError as exc:
        raise CLIError(f"cannot write {opts['out']}: {exc.strerror}", EXIT_IO) from exc
    print(digest)
    return EXIT_OK


SOLVE_FIELDS = ["scheduler", "stepsize", "iters", "tol", "seed", "kappa", "beta_init", "record_events", "timing", "out"]


def cmd_solve(args) -> int:
    opts = _merged(args, SOLVE_FIELDS)
    cfg = _solver_config(opts)
    inst = _load_instance(args.instance)
    try:
        tr = run(inst, cfg)
    except NumericalFailure as exc:
        if exc.trace is not None and opts["out"]:
            _write_text(opts["out"], exc.trace.to_json())
        raise
    _write_text(opts["out"], tr.to_json())
    S = tr.S[-1]
    logger.info("%s: %d passes, H = %r, S = %r, status %s", cfg.method, tr.iterations, tr.H[-1], S, tr.status)
    return EXIT_OK


def cmd_bench(args) -> int:
    opts = _merged(args, ["spec", "workers", "out", "seed", "iters", "instances"])
    spec_d = {}
    if opts["spec"]:
        spec_d = _parse_json(_read_text(opts["spec"]), opts["spec"])
    if opts["seed"] is not None:
        spec_d["seed"] = opts["seed"]
    if opts["iters"] is not None:
        spec_d["iters"] = opts["iters"]
    if opts["instances"] is not None:
        spec_d["W"] = opts["instances"]
    spec = BenchSpec.from_dict(spec_d)
    if opts["out"] is None:
        raise CLIError("bench needs --out (a directory)", EXIT_USAGE)
    try:
        res = run_bench(spec, workers=opts["workers"] or 1, out_dir=opts["out"])
    except OSError as exc:
        raise CLIError(f"cannot write bench output: {exc}", EXIT_IO) from exc
    if res["incomplete"]:
        logger.error("incomplete cells: %s", ", ".join(res["incomplete"]))
    print(os.path.join(opts["out"], "summary.csv"))
    return EXIT_OK


def cmd_verify(args) -> int:
    opts = _merged(args, ["rule", "h_star", "iters", "seed", "out"])
    inst = _load_instance(args.instance)
    trace = RunTrace.from_dict(_parse_json(_read_text(args.trace), args.trace))
    if trace.metadata.get("problem_digest") not in (None, inst.digest):
        raise CLIError("trace was recorded on a different instance", EXIT_USAGE)
    if any(s is None for s in trace.S):
        raise CLIError("trace has no gap values; re-run solve with gap recording", EXIT_USAGE)
    rule = opts["rule"] or _RULE_OF_STEPSIZE[trace.config.stepsize]
    cfg = trace.config
    consts = compute_constants(inst, rule, kappa=cfg.kappa, beta_init=cfg.beta_init)
    if opts["h_star"] is not None:
        h_star = float(opts["h_star"])
    else:
        # the lower end of the certificate keeps the check sound
        est = estimate_optimum(inst, opts["iters"] or 200, seed=opts["seed"] or 0)
        h_star = est.lower_bound
    report = verify_rate(trace, consts, h_star, rule)
    print(report.summary())
    if report.violations:
        v = report.first_violation
        print(f"first violation at k = {v['k']} ({v['kind']}): {v['lhs']!r} > {v['bound']!r}")
    if opts["out"]:
        body = {**report.to_dict(), "H_star": h_star, "constants": consts.to_dict()}
        _write_text(opts["out"], json.dumps(body, sort_keys=True, indent=1))
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_estimate_opt(args) -> int:
    opts = _merged(args, ["iters", "seed", "out"])
    inst = _load_instance(args.instance)
    est = estimate_optimum(inst, opts["iters"] if opts["iters"] is not None else 200, seed=opts["seed"] or 0)
    body = {"H_star_est": est.value, "gap": est.gap, "lower_bound": est.lower_bound}
    _write_text(opts["out"], json.dumps(body, sort_keys=True))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blockcg", description="Block conditional gradient toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a seeded instance")
    g.add_argument("generator", help="box_quadratic | simplex_product | sdca_dual")
    g.add_argument("params", nargs="*", help="generator parameters as key=value")
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--config")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one method on an instance and write its trace")
    s.add_argument("instance")
    s.add_argument("--scheduler")
    s.add_argument("--stepsize")
    s.add_argument("--iters", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--beta-init", dest="beta_init", type=float)
    s.add_argument("--record-events", dest="record_events", action="store_true", default=None)
    s.add_argument("--timing", action="store_true", default=None, help="record wall_ns (breaks bitwise reproducibility)")
    s.add_argument("--out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a method matrix over seeded instances")
    b.add_argument("spec", nargs="?", help="bench spec JSON (defaults to the desk-scale box-quadratic matrix)")
    b.add_argument("--workers", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--iters", type=int)
    b.add_argument("--instances", type=int, help="number of instances W")
    b.add_argument("--out")
    b.add_argument("--config")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="check a trace against its rate theorem")
    v.add_argument("instance")
    v.add_argument("trace")
    v.add_argument("--rule", choices=("predefined", "adaptive", "backtracking"))
    v.add_argument("--h-star", dest="h_star", type=float, help="lower bound on the optimal value")
    v.add_argument("--iters", type=int, help="budget of the optimum estimate")
    v.add_argument("--seed", type=int)
    v.add_argument("--out")
    v.add_argument("--config")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("estimate-opt", help="estimate the optimal value with a gap certificate")
    e.add_argument("instance")
    e.add_argument("--iters", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.add_argument("--config")
    e.set_defaults(func=cmd_estimate_opt)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging()
        return args.func(args)
    except CLIError as exc:
        print(f"blockcg: {exc}", file=sys.stderr)
        return exc.code
    except NumericalFailure as exc:
        print(f"blockcg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (BlockCGError, UnsupportedError) as exc:
        print(f"blockcg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"blockcg: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
