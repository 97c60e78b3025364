"""Command-line entry point: ``flambe-lab <subcommand> [--config FILE] [--set section.field=value ...]``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments
from .config import config_hash, dump_config, load_config, output_dir
from .errors import (
    ConfigurationError, FlambeLabError, InvariantViolation, IterationBoundError,
)
from .factory import EnvConfig, make_hypothesis_class, make_smooth_lowrank_mdp, smoothness_certificate
from .flambe import (
    HyperParams, PlannerConfig, evaluation_policies, evaluation_rewards, model_eval_gap, run_flambe,
    theoretical_hyperparams,
)
from .io import load_mdp, save_hypothesis_class, save_mdp
from .smoothness import SmoothnessProfile

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_NUMERIC = 0, 2, 3, 4


# --- output helpers --------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path: Path, rows: list[dict], cfg: dict, seed, columns=None, json_mirror: bool | None = None) -> Path:
    """CSV with a provenance comment, a timestamp comment and a header row."""
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        for line in _provenance_lines(cfg, seed):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    if cfg["output"]["json_mirror"] if json_mirror is None else json_mirror:
        clean = [{c: _jsonable(r.get(c)) for c in columns} for r in rows]
        path.with_suffix(".json").write_text(json.dumps(clean, indent=1, sort_keys=True) + "\n")
    return path


def _provenance_lines(cfg: dict, seed) -> list[str]:
    return [f"provenance: config_hash={config_hash(cfg)} seed={seed} version={__version__}",
            f"generated: {datetime.datetime.now(datetime.timezone.utc).isoformat()}"]


def _jsonable(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def read_csv(path) -> list[dict]:
    """Read a CSV written by :func:`write_csv`, skipping comment lines."""
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _prepare_dir(cfg: dict, subdir: str | None = None) -> Path:
    out = output_dir(cfg, subdir)
    (out / "config.yaml").write_text(dump_config(cfg))
    (out / "versions.json").write_text(json.dumps(_versions(), indent=1, sort_keys=True) + "\n")
    return out


def _versions() -> dict:
    import scipy
    import yaml

    return {"flambe_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pyyaml": yaml.__version__, "python": sys.version.split()[0]}


# --- shared builders -------------------------------------------------------------------


def env_config(cfg: dict) -> EnvConfig:
    return EnvConfig(**cfg["env"], **cfg["class"])


def build_env(cfg: dict):
    ec = env_config(cfg)
    env = make_smooth_lowrank_mdp(ec)
    return ec, env, make_hypothesis_class(env, ec)


def planner_config(cfg: dict, cert=None) -> PlannerConfig:
    p = cfg["planner"]
    smooth = (cert.L_phi, cert.L_T, cert.alpha) if (cert is not None and p["certify"]) else None
    return PlannerConfig(beta=p["beta"], G=p["G"], optimizer=p["optimizer"], smoothness=smooth)


def hyper_from_config(cfg: dict) -> HyperParams:
    h = cfg["hyper"]
    if h["mode"] == "practical":
        return HyperParams.practical(h["n"], h["j_max"], h["beta"])
    e = cfg["env"]
    profile = SmoothnessProfile(e["m"], h["alpha_E"], h["L_E"], h["alpha_T"], h["L_T"], h["alpha_R"], h["L_R"])
    sizes = (h["phi_class_size"] or cfg["class"]["n_phi_decoys"] + 1,
             h["psi_class_size"] or cfg["class"]["n_psi_decoys"] + 1)
    K = None if h["policy_mode"] == "unrestricted" else h["K"]
    return theoretical_hyperparams(h["eps"], h["delta"], profile, e["d"], e["H"], e["m"], sizes,
                                   h["policy_mode"], K, h["c"])


def _eval_gap(env, model, cfg: dict, seed: int):
    e = cfg["eval"]
    rng = np.random.default_rng([seed, 101])
    rewards = evaluation_rewards(env.n_states, env.m, env.H, rng, e["n_rewards"])
    policies = evaluation_policies(env.n_states, env.m, env.H, rng, e["n_grid_policies"], e["n_smoothed_policies"],
                                   e["K_cap"], e["K_smooth"])
    return model_eval_gap(env, model, rewards, policies, e["G"])


def _gap_rows(gap) -> list[dict]:
    return [{"reward": i, "policy": k, "v_model": vm, "v_env": ve, "gap": g} for i, k, vm, ve, g in gap.table]


# --- subcommands -----------------------------------------------------------------------


def cmd_gen_env(cfg: dict, log=print) -> int:
    out = _prepare_dir(cfg)
    ec, env, hc = build_env(cfg)
    cert = smoothness_certificate(hc, env, G=cfg["verify"]["G"], alpha=ec.alpha)
    save_mdp(env, out / "env.json")
    save_hypothesis_class(hc, out / "class.json")
    write_csv(out / "certificate.csv", [vars(cert)], cfg, ec.seed)
    seps = [{"kind": kind, "index": i, "separation": s} for (kind, i), s in sorted(hc.separations.items())]
    write_csv(out / "separations.csv", seps, cfg, ec.seed, ["kind", "index", "separation"])
    log(f"wrote environment and class to {out} (min separation {hc.min_separation:.4f}, "
        f"L_E={cert.L_E:.4f} <= 2dL_phi={cert.feature_error_bound:.4f}: {cert.feature_error_holds})")
    return EXIT_OK


def cmd_run_flambe(cfg: dict, log=print) -> int:
    hyper = hyper_from_config(cfg)
    if not (math.isfinite(hyper.n) and math.isfinite(hyper.j_max) and hyper.n * hyper.j_max <= 1e8):
        raise ConfigurationError(
            f"hyper: derived n={hyper.n:.3e}, j_max={hyper.j_max:.3e} are too large to run; use hyper.mode=practical")
    if hyper.provenance != "practical":
        hyper = dataclasses.replace(hyper, n=int(math.ceil(hyper.n)), j_max=int(math.ceil(hyper.j_max)))
    ec, env, hc = build_env(cfg)
    cert = smoothness_certificate(hc, env, G=cfg["verify"]["G"], alpha=ec.alpha)
    planner = planner_config(cfg, cert)
    base, reps = cfg["seeds"]["base"], cfg["seeds"]["repetitions"]
    summary = []
    for seed in range(base, base + reps):  # merged in seed order
        out = _prepare_dir(cfg, f"seed_{seed}" if reps > 1 else None)
        model, diag = run_flambe(env, hc, hyper, planner, seed=seed)
        gap = _eval_gap(env, model, cfg, seed)
        save_mdp(env, out / "env.json")
        save_mdp(model, out / "model.json")
        write_csv(out / "diagnostics.csv", diag.rows, cfg, seed, diag.COLUMNS)
        write_csv(out / "tv_curve.csv",
                  [{"x": r["iteration"], "y": r["tv_probe_mean"], "series": f"h={r['h']}"} for r in diag.rows],
                  cfg, seed, ["x", "y", "series"])
        write_csv(out / "eval_gap.csv", _gap_rows(gap), cfg, seed)
        diag.dataset.to_csv(out / "dataset.csv", _provenance_lines(cfg, seed))
        tv = diag.tv_by_iteration()
        first, last = tv[min(tv)], tv[max(tv)]
        summary.append({"seed": seed, "tv_first": first, "tv_final": last, "improved": last < first,
                        "max_eval_gap": gap.max_gap})
        log(f"seed {seed}: probe TV {first:.4f} -> {last:.4f}, max eval gap {gap.max_gap:.4f}")
    write_csv(_prepare_dir(cfg) / "summary.csv", summary, cfg, base)
    return EXIT_OK


def cmd_eval_model(cfg: dict, log=print) -> int:
    out = _prepare_dir(cfg)
    env_path = Path(cfg["eval"]["env_path"] or out / "env.json")
    model_path = Path(cfg["eval"]["model_path"] or out / "model.json")
    for p in (env_path, model_path):
        if not p.exists():
            raise ConfigurationError(f"eval: referenced artifact {p} does not exist")
    env, model = load_mdp(env_path), load_mdp(model_path)
    seed = cfg["seeds"]["base"]
    gap = _eval_gap(env, model, cfg, seed)
    write_csv(out / "eval_gap.csv", _gap_rows(gap), cfg, seed)
    log(f"max eval gap {gap.max_gap:.6f} over {len(gap.table)} reward/policy pairs")
    return EXIT_OK


def cmd_verify_bounds(cfg: dict, log=print) -> int:
    out = _prepare_dir(cfg)
    v, seed = cfg["verify"], cfg["seeds"]["base"]
    seeds = range(seed, seed + v["n_envs"])
    c_cal, ub = experiments.uniform_bound_suite()
    suites = {
        "uniform_bound": ub,
        "scale_invariance": [{**r, "holds": r["invariant"]} for r in experiments.scale_invariance_suite(c_cal=c_cal)],
        "bump_slopes": [{**r, "holds": abs(r["slope"] - r["expected"]) <= 0.02} for r in experiments.bump_slope_suite()],
        "policy_gap": experiments.policy_gap_suite(seeds, v["K_values"], v["G"]),
        "expectation_gap": experiments.expectation_gap_suite(seed, v["K_values"]),
        "discrete_is": experiments.is_suite(v["n_is_pairs"], v["is_grids"], seed),
        "feature_error_smoothness": experiments.feature_error_suite(seeds, v["G"]),
    }
    failed = 0
    for name, rows in suites.items():
        write_csv(out / f"{name}.csv", rows, cfg, seed)
        bad = sum(not r["holds"] for r in rows)
        failed += bad
        log(f"{name}: {len(rows) - bad}/{len(rows)} rows hold")
    log(f"calibrated constant c_cal = {c_cal:.6f}")
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


HYPER_ROWS = ("tau", "kappa", "sigma", "K", "U", "beta_prime", "eps_tv", "lam", "beta", "n", "j_max", "trajectories")


def cmd_hyper(cfg: dict, log=print) -> int:
    if cfg["hyper"]["mode"] == "practical":
        cfg = {**cfg, "hyper": {**cfg["hyper"], "mode": "theoretical"}}
    hp = hyper_from_config(cfg)
    d = hp.to_dict()
    rows = [{"name": k, "value": d[k]} for k in HYPER_ROWS]
    rows += [{"name": k, "value": d[k]} for k in ("log_n", "log_j_max", "log_eps_tv", "log_trajectories")]
    for r in rows:
        log(f"{r['name']:<18} {_fmt_value(r['value'])}")
    write_csv(_prepare_dir(cfg) / "hyper.csv", rows, cfg, cfg["seeds"]["base"], ["name", "value"])
    return EXIT_OK


def _fmt_value(v) -> str:
    return "-" if v is None else f"{v:.6g}"


def cmd_smoke(cfg: dict, log=print) -> int:
    experiments.smoke(log=log)
    log("smoke: all checks passed")
    return EXIT_OK


COMMANDS = {
    "gen-env": (cmd_gen_env, "build an environment and hypothesis class and save them"),
    "run-flambe": (cmd_run_flambe, "run FLAMBE on a generated environment"),
    "eval-model": (cmd_eval_model, "compare a saved model with its environment on sparse rewards"),
    "verify-bounds": (cmd_verify_bounds, "run the smoothness verifier suites"),
    "hyper": (cmd_hyper, "print the theoretical hyperparameters"),
    "smoke": (cmd_smoke, "run the full pipeline on the fixed 3-state environment"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flambe-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                       help="override one config field (repeatable)")
    return parser


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module on the traceback."""
    mods = [f.f_code.co_filename for f, _ in traceback.walk_tb(exc.__traceback__)]
    ours = [Path(m).stem for m in mods if "flambe_lab" in m]
    return f"flambe_lab.{ours[-1]}" if ours else "flambe_lab"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, args.set)
        return func(cfg)
    except ConfigurationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantViolation, IterationBoundError) as exc:
        print(f"invariant violation [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (FlambeLabError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"error [{_origin(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
