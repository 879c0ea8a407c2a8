"""Command-line front end: ``ksp <subcommand> [flags]``.

Exit codes: 0 on success, 1 on a domain, config or results error, 2 on a
usage error. ``--json`` switches any subcommand to a machine-readable
document carrying the same numbers as the text output. Files are written
under ``--out``/``--output-dir`` or, failing that, ``$KSP_OUTPUT_DIR``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_EPS_COLL,
    DEFAULT_EPS_EXPL,
    DEFAULT_EPS_SEP,
    ExplosionReport,
    Inconclusive,
    besq_cdf,
    census_summary,
    collision_census,
    decomposition_check,
    detect_explosion,
    hitting_probability,
    ks_test,
    mass_probe,
)
from .dynamics import (
    SimulationParams,
    comparison_hitting_mc,
    sample_besq_transition,
    simulate_besq_path,
    simulate_particles,
)
from .errors import KSError
from .harness import load_config, run_batch, summarize, unit_dispersion_configuration
from .regime import ModelParams, classify, dimension_curve
from .rng import INITIAL, MASS, SAMPLER, stream
from .serialization import figure1_csv, load_configuration, read_trajectory, write_trajectory

OUTPUT_ENV = "KSP_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _default_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or "ksp_results")


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _clean(value.item())
    return value


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _emit(args, doc: dict, lines: list[str] | None = None):
    """Print ``doc`` as JSON or as aligned ``key  value`` lines."""
    if args.json:
        print(json.dumps(_clean(doc), sort_keys=True))
        return
    if lines is None:
        width = max(len(k) for k in doc)
        lines = [f"{k:<{width}}  {_fmt(v)}" for k, v in doc.items() if not isinstance(v, (dict, list))]
    print("\n".join(lines))


def _model(args) -> ModelParams:
    return ModelParams(args.n, args.theta)


def _add_model(p):
    p.add_argument("--n", type=int, required=True, help="particle count N")
    p.add_argument("--theta", type=str, required=True, help="attraction intensity as a decimal string")


def _add_sim(p):
    d = SimulationParams()
    p.add_argument("--dt-base", type=float, default=d.dt_base, help="largest time step")
    p.add_argument("--t-max", type=float, default=d.t_max, help="final time")
    p.add_argument("--regularization-n", type=int, default=d.regularization_n,
                   help="pairs closer than 1/sqrt(n) exert no force")
    p.add_argument("--adapt-floor", type=float, default=d.adapt_floor, help="smallest time step")
    p.add_argument("--seed", type=int, default=d.seed, help="root seed")
    p.add_argument("--save-stride", type=int, default=d.save_stride, help="keep every k-th step")
    p.add_argument("--floor-patience", type=int, default=d.floor_patience,
                   help="consecutive floor-saturated steps before flagging")


def _sim(args) -> SimulationParams:
    return SimulationParams(args.dt_base, args.t_max, args.regularization_n, args.adapt_floor,
                            args.seed, args.save_stride, args.floor_patience)


def cmd_classify(args):
    rep = classify(_model(args))
    doc = rep.as_dict()
    lines = [
        f"k0={rep.k0} k1={rep.k1} k2={rep.k2}",
        f"regime                     {rep.regime.value}",
        f"theorem_preconditions_met  {str(rep.theorem_preconditions_met).lower()}",
        "k    d(k)",
    ]
    lines += [f"{k:<4d} {v!r}" for k, v in rep.dimension_table.items()]
    _emit(args, doc, lines)


def cmd_figure1(args):
    model = _model(args)
    text = figure1_csv(model)
    if args.out:
        Path(args.out).write_text(text)
    if args.json:
        _emit(args, {"model": model.as_dict(), "curve": [{"k": k, "d_value": d} for k, d in dimension_curve(model)]})
    elif not args.out:
        sys.stdout.write(text)
    else:
        print(f"wrote {args.out}")


def cmd_simulate(args):
    model = _model(args)
    sim = _sim(args)
    if args.x0:
        x0 = load_configuration(args.x0)
    else:
        x0 = unit_dispersion_configuration(model.n, stream(args.random_x0, INITIAL))
    traj = simulate_particles(model, sim, x0, path_index=args.path_index)
    out = Path(args.out) if args.out else _default_dir() / f"trajectory_seed{sim.seed}_path{args.path_index}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    header = {"version": __version__, "seed": sim.seed}
    write_trajectory(traj, out, sim, header)
    _emit(args, {
        "status": traj.status.value,
        "final_time": traj.final_time,
        "n_steps": traj.n_steps,
        "n_frames": len(traj.times),
        "min_dt": traj.min_dt,
        "flag_time": traj.flag_time,
        "path": str(out),
    })


def cmd_decompose(args):
    paths = [read_trajectory(p) for p in args.trajectory]
    model = paths[0].model
    rep = decomposition_check(paths if len(paths) > 1 else paths[0], model)
    doc = rep.as_dict()
    lines = [f"{k:<26}{_fmt(v)}" for k, v in doc.items() if k != "notes"]
    lines += [f"note: {n}" for n in rep.notes]
    _emit(args, doc, lines)


def cmd_census(args):
    traj = read_trajectory(args.trajectory)
    events = collision_census(traj, args.eps_coll, args.eps_sep, debounce=args.debounce)
    summary = census_summary(events)
    expl = detect_explosion(traj, traj.model, args.eps_expl, args.eps_sep)
    if isinstance(expl, ExplosionReport):
        summary["explosion"] = {"t_explosion": expl.t_explosion, "cluster": list(expl.cluster), "size": expl.size}
    elif isinstance(expl, Inconclusive):
        summary["explosion"] = expl.as_dict()
    else:
        summary["explosion"] = None
    if args.events:
        with open(args.events, "w") as fh:
            for e in events:
                fh.write(json.dumps(_clean(e.as_dict()), sort_keys=True) + "\n")
    sizes = sorted({int(k) for k in summary["by_size"]})
    lines = [f"events {summary['n_events']}  isolated {summary['n_isolated']}", "size  events  isolated"]
    lines += [f"{k:<5d} {summary['by_size'].get(str(k), 0):<7d} {summary['isolated_by_size'].get(str(k), 0)}"
              for k in sizes]
    ex = summary["explosion"]
    if ex is None:
        lines.append("explosion  none")
    elif "size" in ex:
        lines.append(f"explosion  size={ex['size']} t={ex['t_explosion']!r} cluster={ex['cluster']}")
    else:
        lines.append(f"explosion  inconclusive ({ex['reason']})")
    _emit(args, summary, lines)


def cmd_hitting(args):
    res = hitting_probability(args.delta, args.a, args.b, args.x, args.y)
    doc = {"probability": res.probability, "abs_error": res.abs_error, "divergent": res.divergent}
    lines = [repr(res.probability)]
    if args.mc_paths:
        p, se, undecided = comparison_hitting_mc(args.delta, args.a, args.b, args.x, args.y, args.mc_paths,
                                                 args.dt, args.seed)
        doc["monte_carlo"] = {"probability": p, "standard_error": se, "undecided": undecided,
                              "z_score": (p - res.probability) / se if se > 0 else None}
        lines.append(f"monte_carlo {p!r} +- {se!r} (undecided {undecided})")
    _emit(args, doc, lines)


def cmd_besq(args):
    rng = stream(args.seed, SAMPLER)
    if args.scheme == "exact":
        sample = sample_besq_transition(args.delta, args.z0, args.t, rng, size=args.paths)
    else:
        sample = np.array([simulate_besq_path(args.delta, args.z0, args.dt, args.t, rng, scheme="euler").values[-1]
                           if args.delta > 0 else _absorbed_end(args, rng) for _ in range(args.paths)])
    doc = {"scheme": args.scheme, "n": int(sample.size), "mean": float(sample.mean()),
           "predicted_mean": args.z0 + args.delta * args.t if args.delta >= 0 else None}
    if args.delta > 0:
        stat, p = ks_test(sample, lambda v: besq_cdf(v, args.delta, args.z0, args.t))
        doc.update(ks_statistic=stat, ks_p_value=p)
    elif args.delta == 0:
        # the law has an atom at 0; test the surviving part against the conditional law
        atom = math.exp(-args.z0 / (2.0 * args.t))
        alive = sample[sample > 0]
        doc.update(absorbed_fraction=float(np.mean(sample == 0.0)), predicted_absorbed_fraction=atom)
        if alive.size:
            stat, p = ks_test(alive, lambda v: (besq_cdf(v, 0.0, args.z0, args.t) - atom) / (1.0 - atom))
            doc.update(ks_statistic=stat, ks_p_value=p)
    else:
        doc["absorbed_fraction"] = float(np.mean(sample == 0.0))
    _emit(args, doc)


def _absorbed_end(args, rng):
    path = simulate_besq_path(args.delta, args.z0, args.dt, args.t, rng, scheme="euler")
    return 0.0 if path.absorbed_at is not None else float(path.values[-1])


def cmd_mass(args):
    model = _model(args)
    rows = []
    cutoff = args.cutoff
    for h in range(args.halvings + 1):
        est, se = mass_probe(model, args.k, args.samples, cutoff, stream(args.seed, MASS, args.k, h))
        rows.append({"cutoff": cutoff, "estimate": est, "standard_error": se})
        cutoff /= 2.0
    lines = ["cutoff                  estimate                standard_error"]
    lines += [f"{r['cutoff']!r:<23} {r['estimate']!r:<23} {r['standard_error']!r}" for r in rows]
    _emit(args, {"model": model.as_dict(), "k": args.k, "rows": rows}, lines)


def cmd_run(args):
    config = load_config(args.config, output_dir=args.output_dir)
    res = run_batch(config)
    agg = res.aggregate
    lines = [f"wrote {res.path}", f"replicas   {agg['n_replicas']}", f"flag_rate  {agg['flag_rate']!r}"]
    if "explosion" in agg:
        lines.append(f"modal explosion size  {agg['explosion']['modal_size']}")
    _emit(args, {"path": str(res.path), "aggregate": agg}, lines)


def cmd_summarize(args):
    agg = summarize(args.path)
    lines = [json.dumps(_clean(agg), indent=2, sort_keys=True)]
    _emit(args, agg, lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ksp", description="Keller-Segel particle system experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--json", action="store_true", help="print a JSON document instead of text")
        p.set_defaults(func=func)
        return p

    p = add("classify", cmd_classify, "critical cluster sizes and Bessel dimensions of a model")
    _add_model(p)

    p = add("figure1", cmd_figure1, "emit the k,d_value curve as CSV")
    _add_model(p)
    p.add_argument("--out", help="write the CSV here instead of stdout")

    p = add("simulate", cmd_simulate, "simulate one particle trajectory and write it as CSV")
    _add_model(p)
    _add_sim(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--x0", help="initial configuration file (.csv or .json)")
    src.add_argument("--random-x0", type=int, default=0, metavar="SEED",
                     help="seed of a random unit-dispersion start (default 0)")
    p.add_argument("--path-index", type=int, default=0, help="noise stream index")
    p.add_argument("--out", help=f"trajectory CSV path (default under ${OUTPUT_ENV})")

    p = add("decompose-check", cmd_decompose, "center/dispersion/direction checks on saved trajectories")
    p.add_argument("trajectory", nargs="+", help="trajectory CSV file(s); several form an ensemble")

    p = add("census", cmd_census, "collision census and explosion report of a saved trajectory")
    p.add_argument("trajectory", help="trajectory CSV file")
    p.add_argument("--eps-coll", type=float, default=DEFAULT_EPS_COLL, help="collision dispersion threshold")
    p.add_argument("--eps-sep", type=float, default=DEFAULT_EPS_SEP, help="isolation threshold")
    p.add_argument("--eps-expl", type=float, default=DEFAULT_EPS_EXPL, help="explosion dispersion threshold")
    p.add_argument("--debounce", type=int, default=0, help="merge runs split by at most this many frames")
    p.add_argument("--events", help="write events as JSON lines to this file")

    p = add("hitting-prob", cmd_hitting, "probability that the comparison diffusion reaches 0 before y")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--x", type=float, required=True, help="starting point")
    p.add_argument("--y", type=float, required=True, help="upper level")
    p.add_argument("--mc-paths", type=int, default=0, help="also run a Monte-Carlo check with this many paths")
    p.add_argument("--dt", type=float, default=1e-4, help="Monte-Carlo time step")
    p.add_argument("--seed", type=int, default=0, help="Monte-Carlo seed")

    p = add("besq-compare", cmd_besq, "KS comparison of simulated squared Bessel values with the exact law")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--paths", type=int, default=10_000)
    p.add_argument("--scheme", choices=("exact", "euler"), default="exact")
    p.add_argument("--dt", type=float, default=1e-3, help="Euler step")
    p.add_argument("--seed", type=int, default=0)

    p = add("mass-probe", cmd_mass, "Monte-Carlo local mass near k-particle collisions under cutoff halving")
    _add_model(p)
    p.add_argument("--k", type=int, required=True, help="cluster size")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--cutoff", type=float, default=1e-3, help="initial diagonal cutoff")
    p.add_argument("--halvings", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)

    p = add("run", cmd_run, "run a batch experiment from a YAML or JSON config")
    p.add_argument("config", help="config file")
    p.add_argument("--output-dir", help=f"overrides the config and ${OUTPUT_ENV}")

    p = add("summarize", cmd_summarize, "recompute aggregates from a results directory")
    p.add_argument("path", help="results directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    try:
        if getattr(args, "func", None) is cmd_simulate and args.x0 is None and args.random_x0 < 0:
            raise UsageError("--random-x0 must be nonnegative")
        args.func(args)
    except UsageError as exc:
        print(f"ksp: error: {exc}", file=sys.stderr)
        return 2
    except KSError as exc:
        print(f"ksp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
