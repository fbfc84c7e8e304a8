"""Command-line front end: ``run``, ``verify`` and ``presets``."""
from __future__ import annotations

import argparse
import io
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import verifier
from .config import PRESETS, RunConfig, _normalise_keys, build_model, config_from_mapping, merge_preset
from .ensemble import resolve_threads, run_ensemble
from .noise import ConfigurationError

CSV_FIELDS = ("mean_re", "mean_im", "stderr", "exact_re", "exact_im")


@dataclass
class RunMetadata:
    config: dict
    n_traj: int
    n_divergent: int
    wall_time: float
    code_version: str
    divergence_times: list

    def to_dict(self):
        return {
            "config": self.config,
            "n_traj": self.n_traj,
            "n_divergent": self.n_divergent,
            "wall_time": self.wall_time,
            "code_version": self.code_version,
            "divergence_times": self.divergence_times,
        }


def _fmt(x):
    return "%.17g" % x


def format_csv(cfg: RunConfig, stats, exact: dict) -> str:
    """CSV text: ``#`` preamble, header row, one row per sample time.

    Per observable the columns are ``{obs}_mean_re, {obs}_mean_im,
    {obs}_stderr, {obs}_exact_re, {obs}_exact_im``; a final ``n_used`` column
    counts the trajectories averaged at that time.
    """
    out = io.StringIO()
    out.write(f"# sseqmc {__version__}\n")
    # the output path lives in the sidecar so the CSV does not depend on where it is written
    echo = {k: v for k, v in cfg.echo().items() if k != "output_path"}
    out.write(f"# config: {json.dumps(echo, sort_keys=True)}\n")
    out.write(f"# master_seed: {cfg.master_seed}\n")
    out.write(f"# n_traj: {stats.n_traj}\n")
    out.write(f"# n_divergent: {stats.n_divergent}\n")
    out.write("# divergent trajectories are excluded from their flag time onward\n")
    cols = ["t"]
    for name in cfg.observables:
        cols += [f"{name}_{f}" for f in CSV_FIELDS]
    cols.append("n_used")
    out.write(",".join(cols) + "\n")
    first = stats[cfg.observables[0]]
    for k, t in enumerate(stats.time_grid):
        row = [_fmt(t)]
        for name in cfg.observables:
            s = stats[name]
            ex = exact.get(name)
            e = complex(ex[k]) if ex is not None else complex(np.nan, np.nan)
            row += [_fmt(s.mean[k].real), _fmt(s.mean[k].imag), _fmt(s.stderr[k]), _fmt(e.real), _fmt(e.imag)]
        row.append(str(int(first.n_traj[k])))
        out.write(",".join(row) + "\n")
    return out.getvalue()


def read_csv(text: str):
    """Parse CSV text produced by :func:`format_csv` into ``{column: array}``."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return {h: data[:, i] for i, h in enumerate(header)}


def run(cfg: RunConfig, n_threads: int | None = None):
    """Execute a configured ensemble; returns ``(csv_text, metadata)``.

    When ``cfg.output_path`` is set the CSV is written there and the metadata
    (including wall time, which would break CSV determinism) next to it as
    ``<output>.meta.json``.
    """
    model = build_model(cfg)
    grid = cfg.time_grid()
    t0 = time.perf_counter()
    stats = run_ensemble(
        model, cfg.n_traj, grid, cfg.observables, cfg.master_seed,
        dt=cfg.dt, divergence_cap=cfg.divergence_cap, n_threads=n_threads,
    )
    wall = time.perf_counter() - t0
    exact = {}
    for name in cfg.observables:
        ex = model.exact(name, grid)
        if ex is not None:
            exact[name] = np.asarray(ex)
    text = format_csv(cfg, stats, exact)
    meta = RunMetadata(cfg.echo(), stats.n_traj, stats.n_divergent, wall, __version__,
                       [float(t) for t in stats.divergence_times])
    if cfg.output_path:
        path = Path(cfg.output_path)
        path.write_text(text)
        Path(str(path) + ".meta.json").write_text(json.dumps(meta.to_dict(), indent=2, sort_keys=True))
    return text, meta


def verify(model_id: str, params: dict | None = None, max_order: int | None = None, seed: int = 0,
           n_states: int = 20, hbar: float = 1.0, method: str = "generator"):
    """Run the hierarchy check on ``n_states`` random states.

    Returns ``(report_text, passed)``.  The model's own initial state is not
    included; all states come from ``random_states(model, n_states, seed)``.
    """
    doc = {"model": model_id, "hbar": hbar, **(params or {})}
    cfg = config_from_mapping(doc)
    model = build_model(cfg)
    order = model.designed_order if max_order is None else int(max_order)
    verifier.moment_specs(model, order)  # raises for unsupported orders
    lines = []
    n_pass = 0
    worst = 0.0
    for i, z in enumerate(verifier.random_states(model, n_states, seed)):
        rep = verifier.verify_hierarchy(model, z, order, method=method)
        n_pass += rep.passed
        worst = max(worst, max(r.rel_error for r in rep.results))
        lines.append(f"## state {i}: " + " ".join(f"{v.real:+.6f}{v.imag:+.6f}j" for v in z[:4]) +
                     (" ..." if len(z) > 4 else ""))
        lines.append(rep.to_text())
    passed = n_pass == n_states
    lines.append(f"# summary: model {model.name} order {order} designed_order {model.designed_order} "
                 f"states_passed {n_pass}/{n_states} worst_rel_error {worst:.3e} "
                 f"{'PASS' if passed else 'FAIL'}")
    return "\n".join(lines), passed


def _load_doc(args):
    doc = {}
    if args.config:
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except OSError as exc:
            raise ConfigurationError(f"config: cannot read {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigurationError("config: must be a key-value mapping")
    if args.preset:
        doc = {"preset": args.preset, **{k: v for k, v in doc.items() if k != "preset"}}
    doc = _normalise_keys(merge_preset(doc))
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = yaml.safe_load(v)
    if args.model:
        if doc.get("model") not in (None, args.model):
            # flags win: drop parameters that belonged to the other model
            doc = {k: v for k, v in doc.items() if k in ("n_traj", "dt", "t_max", "sample_every", "seed",
                                                           "master_seed", "hbar", "divergence_cap",
                                                           "renormalize")}
        doc["model"] = args.model
    doc.update(_normalise_keys(overrides))
    if args.seed is not None:
        doc["master_seed"] = args.seed
    return doc


def _cmd_run(args):
    doc = _load_doc(args)
    if args.out:
        doc["output_path"] = args.out
    cfg = config_from_mapping(doc)
    text, meta = run(cfg, n_threads=args.threads)
    if not cfg.output_path:
        sys.stdout.write(text)
    print(f"# n_divergent {meta.n_divergent} / {meta.n_traj}, wall_time {meta.wall_time:.2f} s", file=sys.stderr)
    return 0


def _cmd_verify(args):
    doc = _load_doc(args)
    model_id = doc.pop("model", None)
    if model_id is None:
        raise ConfigurationError("model: missing (use --model)")
    seed = doc.pop("master_seed", 0)
    hbar = doc.pop("hbar", 1.0)
    for k in ("n_traj", "dt", "t_max", "sample_every", "observables", "divergence_cap", "renormalize",
              "output_path"):
        doc.pop(k, None)
    text, passed = verify(model_id, doc, args.order, seed, args.states, hbar, args.method)
    print(text)
    return 0 if passed else 1


def _cmd_presets(args):
    for name, p in PRESETS.items():
        print(f"{name}: {json.dumps(p, sort_keys=True)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="sseqmc", description="Stochastic Schroedinger equation simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", help="model id")
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--preset", help="named preset (see `presets`)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")

    p = sub.add_parser("run", help="integrate an ensemble and write CSV")
    common(p)
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--threads", type=int, help="worker threads (default: $SSEQMC_THREADS or 1)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="deterministic moment-matching check")
    common(p)
    p.add_argument("--order", type=int, help="highest moment order (default: designed order)")
    p.add_argument("--states", type=int, default=20, help="number of random states")
    p.add_argument("--method", choices=("generator", "quadrature"), default="generator")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("presets", help="list presets")
    p.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "threads", None) is not None:
            resolve_threads(args.threads)
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
