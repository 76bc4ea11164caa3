"""Command line: ``run --config <ini>`` and ``sweep --config <ini> --param <name> --values <csv>``.

Configs are INI files with the sections below; every key is typed after the
matching `RunConfig` field and unknown sections or keys are rejected.
Outputs go to ``<output>`` (prefixed by ``$GPFL_OUTPUT_ROOT`` when set):
``metrics.csv``, ``bounds.csv`` and ``config.resolved`` (a complete config that
replays the run).
"""

import argparse
import configparser
import csv
import dataclasses
import io
import logging
import os
import sys

import numpy as np

from . import analysis, engine, loss_model

log = logging.getLogger("gpfl")

SECTIONS = {
    "data": ("dataset", "m", "n", "sep", "data_seed", "partition", "beta", "maxabs", "reg"),
    "channel": ("K", "N", "P0", "sigma_scale", "zeta", "receiver_max_iter", "rho",
                "scheduler", "sweeps", "uniform_fraction"),
    "gp": ("r", "tau", "jitter", "posterior_sign", "amplitude"),
    "run": ("T", "methods", "seeds", "fedavg_lr", "record_wall_time", "output"),
}
METRIC_COLUMNS = ("method", "seed", "round", "loss", "accuracy", "dist_to_opt", "g_tilde_norm",
                  "eta", "alpha", "c_norm", "delta_probe", "wall_ms")
BOUND_COLUMNS = ("method", "seed", "round", "observed", "bound", "bound_recursion", "regime",
                 "mu", "t0", "gamma", "delta")
ENV_ROOT = "GPFL_OUTPUT_ROOT"

_FIELDS = {f.name: f for f in dataclasses.fields(engine.RunConfig)}
_DEFAULTS = engine.RunConfig()


class ConfigError(ValueError):
    pass


def _convert(name, raw):
    default = getattr(_DEFAULTS, name)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            kind = type(default[0])
            return tuple(kind(x) for x in items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text):
    """Parse INI text into a validated RunConfig."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _convert(key, raw)
    try:
        return engine.RunConfig(**values).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt_value(x) for x in v)
    return str(v)


def resolved_text(cfg):
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        out.extend(f"{k} = {_fmt_value(getattr(cfg, k))}" for k in keys)
        out.append("")
    return "\n".join(out)


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def output_dir(cfg, override=None):
    out = override or cfg.output
    root = os.environ.get(ENV_ROOT)
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


def execute(cfg, out_dir):
    """Run every (method, seed) cell and write the three output files."""
    os.makedirs(out_dir, exist_ok=True)
    runs, bound_rows = [], []
    for seed in cfg.seeds:
        world = engine.build_world(cfg, seed)
        g0 = loss_model.global_gradient(world.specs, world.weights, engine.init_state(world).theta)
        for method in cfg.methods:
            log.info("seed %s method %s", seed, method)
            metrics = engine.run_method(world, method)
            runs.append(metrics)
            inp = analysis.inputs_from_metrics(metrics, world.consts, np.linalg.norm(g0),
                                               D_total=world.sizes.sum(), noise_dim=world.dim)
            dist = metrics.column("dist_to_opt")
            tr = analysis.bound_trace(inp, len(dist) - 1, dist[0])
            for t in range(len(dist)):
                bound_rows.append((method, seed, t, dist[t], tr.bound[t], tr.recursion[t],
                                   tr.regime[t], tr.mu, tr.t0, tr.gamma, inp.delta))
    runs.sort(key=lambda m: (m.method, m.seed))
    bound_rows.sort(key=lambda r: (r[0], r[1], r[2]))
    rows = [(m.method, m.seed) + tuple(getattr(r, c) for c in METRIC_COLUMNS[2:])
            for m in runs for r in m.records]
    _write_csv(os.path.join(out_dir, "metrics.csv"), METRIC_COLUMNS, rows)
    _write_csv(os.path.join(out_dir, "bounds.csv"), BOUND_COLUMNS, bound_rows)
    with open(os.path.join(out_dir, "config.resolved"), "w", encoding="utf-8") as fh:
        fh.write(resolved_text(cfg))
    return runs


def summarize(runs):
    """Median final-round loss, accuracy and distance per method."""
    by = {}
    for m in runs:
        last = m.records[-1]
        by.setdefault(m.method, []).append((last.loss, last.accuracy, last.dist_to_opt))
    return {k: tuple(np.median(np.array(v), axis=0)) for k, v in sorted(by.items())}


def cmd_run(args):
    cfg = load_config(args.config)
    out = output_dir(cfg, args.output)
    execute(cfg, out)
    print(out)
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config)
    if args.param not in _FIELDS or args.param == "output":
        raise ConfigError(f"unknown sweep parameter {args.param!r}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("empty values list")
    # validate every cell before any compute
    cells = []
    for raw in values:
        conv = _convert(args.param, raw)
        try:
            cells.append((raw, dataclasses.replace(cfg, **{args.param: conv}).validate()))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    root = output_dir(cfg, args.output)
    summary = []
    for raw, sub in cells:
        sub_dir = os.path.join(root, f"{args.param}={raw}")
        runs = execute(dataclasses.replace(sub, output=sub_dir), sub_dir)
        for method, (loss, acc, dist) in summarize(runs).items():
            summary.append((args.param, raw, method, loss, acc, dist))
    _write_csv(os.path.join(root, "summary.csv"),
               ("param", "value", "method", "final_loss", "final_accuracy", "final_dist"), summary)
    print(root)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gpfl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="override the output directory")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="run a configuration for several values of one key")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--output", help="override the output directory")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"gpfl: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure inside the simulation
        log.debug("run failed", exc_info=True)
        print(f"gpfl: error: {exc}", file=sys.stderr)
        return 1
