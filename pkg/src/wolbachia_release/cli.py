"""Command-line entry point.

Every subcommand resolves its options into an INI-style configuration,
writes its artifacts (CSV/JSON) to the output directory and finishes by
writing ``manifest.ini``.  ``run --config manifest.ini`` replays a manifest
and reproduces the artifacts byte for byte.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bubble, pde, probability, release
from .exceptions import ConfigInvalid, WolbachiaReleaseError
from .reaction import ReactionParams, build_reaction, sample_profiles

PARAM_FIELDS = [f.name for f in dataclasses.fields(ReactionParams)]
FIGURE_KS = (20, 30, 40, 50, 60, 70, 80)


@dataclass(frozen=True)
class Option:
    name: str
    kind: str
    default: object
    help: str = ""


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


def _parse(option: Option, raw: str):
    raw = raw.strip()
    try:
        if raw == "" and option.default is None:
            return None
        if option.kind == "int":
            return int(raw)
        if option.kind == "float":
            return float(raw)
        if option.kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if option.kind == "floats":
            return [float(v) for v in raw.split(",") if v.strip()]
        if option.kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip()]
        return raw
    except ValueError as exc:
        raise ConfigInvalid(f"bad value {raw!r} for {option.name}") from exc


SCHEMAS: dict[str, list[Option]] = {
    "reaction": [Option("n", "int", 201, "number of samples on [0, theta_plus]")],
    "bubble": [
        Option("alpha", "float", 0.7, "bubble level"),
        Option("sigma", "float", None, "diffusivity (defaults to the reaction's)"),
        Option("n_samples", "int", 513),
    ],
    "radius": [
        Option("dimension", "int", 1),
        Option("sigma", "float", None),
        Option("n_alpha", "int", 64, "levels sampled in (theta_c, theta_plus)"),
    ],
    "single-release": [
        Option("N0", "float", release.DEFAULT_N0, "wild density"),
        Option("sigma_min", "float", 100.0),
        Option("sigma_max", "float", 2000.0),
        Option("steps", "int", 20),
    ],
    "spacing": [
        Option("k", "ints", [2, 5, 10, 20, 50, 100]),
        Option("sigma", "float", None),
        Option("N0", "float", release.DEFAULT_N0),
    ],
    "probability": [
        Option("k", "int", 80),
        Option("L_min", "float", None, "defaults to R*/2"),
        Option("L_max", "float", None, "defaults to 3R*/2"),
        Option("steps", "int", 23),
        Option("samples", "int", 100000),
        Option("exact", "bool", False, "use the exact recursion (k <= 24)"),
        Option("degraded_constant", "bool", False, "use lambda = 1/sqrt(2)"),
    ],
    "cover": [
        Option("d", "int", 1),
        Option("k", "ints", [4, 8, 16, 32, 64]),
        Option("sigma", "float", 1.0),
        Option("N0", "float", release.DEFAULT_N0),
        Option("mass_factor", "float", 2.0, "per-release mass in units of N*"),
        Option("box", "float", 10.0, "half-width of the release box"),
        Option("alpha", "float", None, "defaults to the minimising level"),
        Option("samples", "int", 2000),
    ],
    "simulate": [
        Option("dimension", "int", 1),
        Option("half_width", "float", 40.0),
        Option("nodes", "int", 512),
        Option("sigma", "float", 1.0),
        Option("dt", "float", None, "defaults to min(0.5/max|f'|, dx^2/(4 sigma))"),
        Option("T", "float", 200.0),
        Option("initial", "str", "bubble", "bubble | release | constant | file"),
        Option("alpha", "float", 0.6),
        Option("value", "float", 0.2),
        Option("k", "int", 50),
        Option("box", "float", 25.0),
        Option("peak_frequency", "float", 0.75),
        Option("release_variance", "float", None, "defaults to sigma"),
        Option("N0", "float", release.DEFAULT_N0),
        Option("file", "str", "", "CSV with a p column (initial = file)"),
        Option("snapshot_times", "floats", [0.0, 1.0, 25.0, 50.0, 75.0]),
        Option("stop_on_decision", "bool", True),
    ],
    "appendix-check": [],
    "reproduce-figures": [
        Option("samples", "int", 100000, "Monte Carlo samples per point"),
        Option("steps", "int", 23),
        Option("sigma_2d", "float", 2.25),
        Option("T_2d", "float", 600.0, "horizon of the 2D runs"),
    ],
}


def _resolve(scenario: str, values: dict) -> dict:
    schema = {o.name: o for o in SCHEMAS[scenario]}
    unknown = set(values) - set(schema)
    if unknown:
        raise ConfigInvalid(f"unknown keys for {scenario}: {sorted(unknown)}")
    out = {}
    for name, option in schema.items():
        if name in values:
            raw = values[name]
            out[name] = _parse(option, raw) if isinstance(raw, str) else raw
        else:
            out[name] = option.default
    return out


def _params_from(section) -> ReactionParams:
    unknown = set(section) - set(PARAM_FIELDS)
    if unknown:
        raise ConfigInvalid(f"unknown reaction keys: {sorted(unknown)}")
    try:
        kwargs = {k: float(v) for k, v in section.items()}
        return ReactionParams(**kwargs)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc


def read_params_file(path) -> ReactionParams:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if not cp.read(path):
        raise ConfigInvalid(f"cannot read {path}")
    if not cp.has_section("reaction"):
        raise ConfigInvalid(f"{path} has no [reaction] section")
    return _params_from(dict(cp["reaction"]))


@dataclass
class Context:
    out: Path
    seed: int
    threads: int
    params: ReactionParams

    def curve(self):
        if not hasattr(self, "_curve"):
            self._curve = build_reaction(self.params)
        return self._curve


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _write_json(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(type(obj))


def write_manifest(ctx: Context, scenario: str, cfg: dict):
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["run"] = {"scenario": scenario, "seed": str(ctx.seed), "threads": str(ctx.threads)}
    cp["reaction"] = {k: _fmt(float(getattr(ctx.params, k))) for k in PARAM_FIELDS}
    cp["scenario"] = {k: _fmt(v) for k, v in cfg.items()}
    ctx.out.mkdir(parents=True, exist_ok=True)
    with open(ctx.out / "manifest.ini", "w", newline="\n") as fh:
        cp.write(fh)


def _sigma(ctx, cfg):
    return ctx.params.sigma if cfg.get("sigma") is None else cfg["sigma"]


def _min_radius(ctx):
    if not hasattr(ctx, "_min"):
        ctx._min = bubble.min_bubble_radius(ctx.curve(), 1.0, cross_check=False)
    return ctx._min


def run_reaction(ctx: Context, cfg: dict) -> dict:
    curve = ctx.curve()
    p, f, F = sample_profiles(curve, cfg["n"])
    _write_csv(ctx.out / "reaction.csv", ["p", "f", "F"], zip(p, f, F))
    summary = {"theta": curve.theta, "theta_c": curve.theta_c,
               "theta_plus": curve.theta_plus, "F_theta_plus": curve.F_plus}
    _write_json(ctx.out / "reaction.json", summary)
    return summary


def run_bubble(ctx, cfg):
    sigma = _sigma(ctx, cfg)
    prof = bubble.bubble_profile(ctx.curve(), cfg["alpha"], sigma, cfg["n_samples"])
    _write_csv(ctx.out / "bubble.csv", ["radius", "frequency"], prof.samples)
    return {"alpha": cfg["alpha"], "sigma": sigma, "support_radius": prof.support_radius}


def run_radius(ctx, cfg):
    curve = ctx.curve()
    sigma = _sigma(ctx, cfg)
    d = cfg["dimension"]
    span = curve.theta_plus - curve.theta_c
    m = _min_radius(ctx)
    alphas = curve.theta_c + span * np.linspace(0.0, 1.0, cfg["n_alpha"] + 2)[1:-1]
    # the minimiser is always a row so the CSV minimum is the true one
    alphas = np.union1d(alphas, [m.alpha_0])
    rows = []
    for a in alphas:
        est = bubble.energy_radius(curve, a, sigma, d)
        rows.append((a, bubble.bubble_radius_1d(curve, a, sigma), est.radius, est.rho_opt,
                     bubble.bubble_energy_1d(curve, a, sigma)))
    _write_csv(ctx.out / "radius.csv", ["alpha", "L_alpha", "R_alpha", "rho_opt", "E_bubble"],
               rows)
    L_star = m.radius * math.sqrt(sigma)
    R_energy = bubble.energy_radius(curve, m.alpha_0, 1.0, 1).radius
    summary = {"alpha_0": m.alpha_0, "R_star": m.R_star, "L_star": L_star,
               "release_width_2L_star": 2.0 * L_star,
               "release_width_R_star_sqrt_2sigma": m.R_star * math.sqrt(2.0 * sigma),
               "release_width_energy_candidate": R_energy * math.sqrt(2.0 * sigma),
               "min_R_alpha_sampled": min(r[2] for r in rows), "dimension": d}
    _write_json(ctx.out / "radius.json", summary)
    return summary


def run_single_release(ctx, cfg):
    sol = release.single_release_threshold(ctx.curve(), cfg["N0"])
    sig = np.linspace(cfg["sigma_min"], cfg["sigma_max"], cfg["steps"])
    _write_csv(ctx.out / "single_release.csv", ["sigma", "N_m"], zip(sig, sol.N_m(sig)))
    summary = {"j_star": sol.j_star, "alpha_star": sol.alpha_star, "p_star": sol.p_star,
               "N0": cfg["N0"], "N_m_at_sigma": float(sol.N_m(ctx.params.sigma))}
    _write_json(ctx.out / "single_release.json", summary)
    return summary


def run_spacing(ctx, cfg):
    sigma = _sigma(ctx, cfg)
    rows = []
    for k in cfg["k"]:
        e = release.equally_spaced_requirement(ctx.curve(), k, sigma, cfg["N0"])
        rows.append((k, e.alpha_opt, e.j_star_k, e.N_tilde_star))
    _write_csv(ctx.out / "spacing.csv", ["k", "alpha_opt", "j_star_k", "N_tilde_star"], rows)
    return {"rows": len(rows)}


def _probability_curve(ctx, k, lam, L_values, samples, exact):
    R_star = _min_radius(ctx).R_star
    rows = []
    for L in L_values:
        proto = probability.ProtocolSpec(k, float(L), lam, R_star)
        if exact:
            est = probability.exact_success_probability(proto)
        else:
            est = probability.mc_success_probability(proto, samples, ctx.seed, ctx.threads)
        rows.append((float(L), est.value, est.std_error, est.method))
    return rows


def run_probability(ctx, cfg):
    R_star = _min_radius(ctx).R_star
    lam = probability.DEGRADED_LAMBDA if cfg["degraded_constant"] else probability.LAMBDA
    lo = 0.5 * R_star if cfg["L_min"] is None else cfg["L_min"]
    hi = 1.5 * R_star if cfg["L_max"] is None else cfg["L_max"]
    Ls = np.linspace(lo, hi, cfg["steps"])
    rows = _probability_curve(ctx, cfg["k"], lam, Ls, cfg["samples"], cfg["exact"])
    _write_csv(ctx.out / "probability.csv", ["L", "estimate", "std_error", "method"], rows)
    best = max(rows, key=lambda r: r[1])
    unit = math.sqrt(2.0 * ctx.params.sigma)
    summary = {"k": cfg["k"], "lambda": lam, "R_star": R_star,
               "k0": probability.min_k0(lam, R_star), "argmax_L": best[0],
               "max_estimate": best[1], "gap_bound_m": lam * unit,
               "argmax_box_m": best[0] * unit}
    box = probability.optimal_box_k0(lam, R_star)
    summary["L_hat_k0"] = box.L_hat
    summary["L_hat_k0_m"] = box.L_hat * unit
    _write_json(ctx.out / "probability.json", summary)
    return summary


def run_cover(ctx, cfg):
    curve = ctx.curve()
    sigma, d = cfg["sigma"], cfg["d"]
    alpha = _min_radius(ctx).alpha_0 if cfg["alpha"] is None else cfg["alpha"]
    if d == 1:
        radius = bubble.bubble_radius_1d(curve, alpha, sigma)
    else:
        radius = bubble.energy_radius(curve, alpha, sigma, d).radius
    n_star = (2.0 * math.pi * sigma) ** (0.5 * d) * alpha / (1.0 - alpha) * cfg["N0"]
    N = cfg["mass_factor"] * n_star
    rows = []
    for k in cfg["k"]:
        est = probability.mc_cover_probability(k, N, cfg["N0"], cfg["box"], radius, alpha,
                                               sigma, d, cfg["samples"], ctx.seed,
                                               ctx.threads)
        rows.append((k, est.value, est.std_error))
    _write_csv(ctx.out / "cover.csv", ["k", "estimate", "std_error"], rows)
    return {"alpha": alpha, "radius": radius, "N_star": n_star, "N": N}


def _initial_condition(ctx, cfg, grid):
    curve = ctx.curve()
    kind = cfg["initial"]
    if kind == "bubble":
        prof = bubble.bubble_profile(curve, cfg["alpha"], cfg["sigma"])
        return lambda X: prof(np.sqrt(np.sum(X * X, axis=-1)))
    if kind == "constant":
        return cfg["value"]
    if kind == "release":
        var = cfg["sigma"] if cfg["release_variance"] is None else cfg["release_variance"]
        q = cfg["peak_frequency"]
        mass = q / (1.0 - q) * cfg["N0"] * (2.0 * math.pi * var) ** (0.5 * grid.dimension)
        return release.sample_release_profile(cfg["k"], cfg["k"] * mass, cfg["box"], var,
                                              d=grid.dimension, rng_seed=ctx.seed,
                                              N0=cfg["N0"])
    if kind == "file":
        with open(cfg["file"], newline="") as fh:
            values = [float(r["p"]) for r in csv.DictReader(fh)]
        return np.array(values).reshape(grid.shape)
    raise ConfigInvalid(f"unknown initial condition {kind!r}")


def run_simulate(ctx, cfg, prefix=""):
    grid = pde.SimGrid(cfg["dimension"], cfg["half_width"], cfg["nodes"])
    state = pde.init_state(grid, _initial_condition(ctx, cfg, grid), ctx.curve(),
                           cfg["sigma"], cfg["dt"])
    every = max(1, int(round(1.0 / state.dt)))
    traj = pde.simulate(state, cfg["T"], cfg["snapshot_times"], energy_every=every,
                        stop_on_decision=cfg["stop_on_decision"])
    axis = grid.axis
    requested = sorted(cfg["snapshot_times"])
    for t, p in zip(requested, traj.snapshots):
        name = f"{prefix}snapshot_t{t:g}.csv"
        if grid.dimension == 1:
            _write_csv(ctx.out / name, ["x", "p"], zip(axis, p))
        else:
            X, Y = np.meshgrid(axis, axis, indexing="ij")
            _write_csv(ctx.out / name, ["x", "y", "p"], zip(X.ravel(), Y.ravel(), p.ravel()))
    o = traj.outcome
    summary = {"classification": o.classification.value, "decided_at": o.decided_at,
               "center_value": o.center_value, "dt": state.dt,
               "clip_events": state.clip_events,
               "energy_trace": [[t, e] for t, e in o.energy_trace]}
    _write_json(ctx.out / f"{prefix}summary.json", summary)
    return {"classification": o.classification.value, "decided_at": o.decided_at}


def run_appendix(ctx, cfg):
    report = bubble.check_uniqueness(ctx.curve()).to_dict()
    _write_json(ctx.out / "appendix.json", report)
    return {k: v for k, v in report.items() if not k.endswith("_samples")}


def run_reproduce(ctx, cfg):
    root = ctx.out
    readme = {}
    sub = dataclasses.replace(ctx, out=root / "reaction")
    sub._curve = ctx.curve()
    run_reaction(sub, {"n": 401})
    readme["reaction"] = "reaction.csv: p (x axis), f and F (two curves)."
    sub = dataclasses.replace(ctx, out=root / "radius")
    sub._curve = ctx.curve()
    run_radius(sub, {"dimension": 1, "sigma": 1.0, "n_alpha": 64})
    readme["radius"] = ("radius.csv: alpha (x axis) against L_alpha (exact 1D bubble) and "
                        "R_alpha (energy method), sigma = 1.")
    sub = dataclasses.replace(ctx, out=root / "probability")
    sub._curve = ctx.curve()
    R_star = _min_radius(ctx).R_star
    sub._min = _min_radius(ctx)
    Ls = np.linspace(0.5 * R_star, 1.5 * R_star, cfg["steps"])
    for k in FIGURE_KS:
        rows = _probability_curve(sub, k, probability.LAMBDA, Ls, cfg["samples"], False)
        _write_csv(sub.out / f"probability_k{k}.csv", ["L", "estimate", "std_error", "method"],
                   rows)
    readme["probability"] = ("probability_k<k>.csv: L (x axis) against estimate, one file "
                             "per curve, k = 20 to 80.")
    sub = dataclasses.replace(ctx, out=root / "degraded")
    sub._min = _min_radius(ctx)
    rows = _probability_curve(sub, 80, probability.DEGRADED_LAMBDA, Ls, cfg["samples"], False)
    _write_csv(sub.out / "probability_k80.csv", ["L", "estimate", "std_error", "method"], rows)
    _write_json(sub.out / "degraded.json",
                {"lambda": probability.DEGRADED_LAMBDA,
                 "k0": probability.min_k0(probability.DEGRADED_LAMBDA, R_star)})
    readme["degraded"] = "probability_k80.csv: L (x axis) against estimate with lambda = 1/sqrt(2)."
    H = 50.0
    for label, box in (("left", 2 * H / 3), ("center", H / 2), ("right", H / 12.5)):
        sub = dataclasses.replace(ctx, out=root / "dynamics_2d")
        sub._curve = ctx.curve()
        sim = _resolve("simulate", {})
        sim.update(dimension=2, half_width=H, nodes=256, sigma=cfg["sigma_2d"], dt=0.2,
                   T=cfg["T_2d"], initial="release", box=box, stop_on_decision=False)
        run_simulate(sub, sim, prefix=f"{label}_")
    readme["dynamics_2d"] = ("<box>_snapshot_t<t>.csv: x, y, p at t in {0, 1, 25, 50, 75}; "
                             "<box>_summary.json holds the classification.")
    with open(root / "README.md", "w", newline="\n") as fh:
        fh.write("# Figure data\n\n")
        for key, text in readme.items():
            fh.write(f"- `{key}/` {text}\n")
    return {"figures": sorted(readme)}


RUNNERS = {
    "reaction": run_reaction, "bubble": run_bubble, "radius": run_radius,
    "single-release": run_single_release, "spacing": run_spacing,
    "probability": run_probability, "cover": run_cover, "simulate": run_simulate,
    "appendix-check": run_appendix, "reproduce-figures": run_reproduce,
}


def execute(scenario: str, cfg: dict, ctx: Context) -> dict:
    if scenario not in RUNNERS:
        raise ConfigInvalid(f"unknown scenario {scenario!r}")
    resolved = _resolve(scenario, cfg)
    summary = RUNNERS[scenario](ctx, resolved)
    write_manifest(ctx, scenario, resolved)
    return summary


def load_config(path, scenario: str | None = None) -> tuple[str, dict, dict, dict]:
    """Parse a manifest-style file into ``(scenario, run, reaction, scenario_keys)``.

    ``scenario`` supplies the kind when the file has no ``[run]`` section and
    must match it otherwise.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        ok = cp.read(path)
    except configparser.Error as exc:
        raise ConfigInvalid(str(exc)) from exc
    if not ok:
        raise ConfigInvalid(f"cannot read {path}")
    if not cp.sections():
        raise ConfigInvalid("empty configuration")
    extra = set(cp.sections()) - {"run", "reaction", "scenario"}
    if extra:
        raise ConfigInvalid(f"unknown sections: {sorted(extra)}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    if scenario is not None:
        if run.setdefault("scenario", scenario) != scenario:
            raise ConfigInvalid(f"config is for {run['scenario']!r}, not {scenario!r}")
    if "scenario" not in run:
        raise ConfigInvalid("missing [run] scenario")
    bad = set(run) - {"scenario", "seed", "threads"}
    if bad:
        raise ConfigInvalid(f"unknown run keys: {sorted(bad)}")
    reaction = dict(cp["reaction"]) if cp.has_section("reaction") else {}
    scen = dict(cp["scenario"]) if cp.has_section("scenario") else {}
    return run["scenario"], run, reaction, scen


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wolbachia-release",
                                     description="Spatial release protocol analysis.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out")
    parser.add_argument("--threads", type=int, default=1)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = subs.add_parser(name)
        sp.add_argument("--params", help="INI file with a [reaction] section")
        for opt in schema:
            flag = "--" + opt.name.replace("_", "-")
            if opt.kind == "bool":
                sp.add_argument(flag, dest=opt.name, action="store_true", default=None,
                                help=opt.help)
            else:
                sp.add_argument(flag, dest=opt.name, default=None, help=opt.help)
        if name == "simulate":
            sp.add_argument("--config", help="INI file with [scenario] simulate keys")
    rp = subs.add_parser("run")
    rp.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    scenario = args.command
    try:
        if scenario == "run":
            scenario, run, reaction, values = load_config(args.config)
            seed = int(run.get("seed", args.seed))
            threads = int(run.get("threads", args.threads))
            params = _params_from(reaction)
        else:
            seed, threads = args.seed, args.threads
            params = read_params_file(args.params) if args.params else ReactionParams()
            values = {}
            if getattr(args, "config", None):
                _, _, reaction, values = load_config(args.config, scenario)
                if reaction:
                    params = _params_from(reaction)
            for opt in SCHEMAS[scenario]:
                v = getattr(args, opt.name, None)
                if v is not None:
                    values[opt.name] = v if isinstance(v, str) else _fmt(v)
        ctx = Context(Path(args.out), seed, threads, params)
        summary = execute(scenario, values, ctx)
    except WolbachiaReleaseError as exc:
        code = 2 if isinstance(exc, ConfigInvalid) else 3
        json.dump({"error": type(exc).__name__, "message": str(exc), "scenario": scenario},
                  sys.stderr)
        sys.stderr.write("\n")
        return code
    json.dump(summary, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
