"""Command-line front end: simulate / fluid / diffusion / steady / verify.

Every run writes a manifest (resolved config, seed, package version, wall
time) next to its outputs, so a directory is self-describing and the run is
reproducible from the manifest alone.  Config files are flat key = value
TOML; command-line flags win over file values.

Exit codes: 0 success, 1 runtime error, 2 config error, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

import erlanga
from erlanga import fluid as fluid_mod
from erlanga.diffusion import SdeConfig, SdePaths, sde_ed, sde_qed, sde_stopped
from erlanga.harness import (ExperimentPlan, RegimeSeq, bounds_experiment,
                             canonical_report_json, fluid_rate_experiment,
                             operator_checks, run_experiment,
                             steady_wait_experiment, write_checkpoint_csvs)
from erlanga.paths import write_bundle_csv
from erlanga.simulate import ModelParams, SimConfig, simulate

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3


class ConfigError(ValueError):
    pass


def _load_config_file(path: str) -> dict:
    try:
        import tomllib as toml  # py311+
    except ImportError:
        import tomli as toml
    with open(path, "rb") as fh:
        data = toml.load(fh)
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"config must be flat key = value pairs; {key} is a table")
        flat[key.replace("-", "_")] = value
    return flat


def _merge_config(args: argparse.Namespace, parser_defaults: dict) -> dict:
    """File values fill in only where the flag was left at its default."""
    merged = vars(args).copy()
    cfg_path = merged.pop("config", None)
    if cfg_path:
        file_vals = _load_config_file(cfg_path)
        for key, value in file_vals.items():
            if key not in merged:
                raise ConfigError(f"unknown config key {key!r}")
            if merged[key] == parser_defaults.get(key):
                merged[key] = value
    return merged


def _write_manifest(outdir: Path, command: str, config: dict, runtime_s: float) -> None:
    manifest = {
        "command": command,
        "config": {k: v for k, v in config.items() if k != "func"},
        "version": erlanga.__version__,
        "runtime_s": runtime_s,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_from(cfg: dict) -> ModelParams:
    for key in ("n", "lam", "mu", "theta"):
        if cfg.get(key) is None:
            raise ConfigError(f"--{key.replace('lam', 'lambda')} is required")
    return ModelParams(n=cfg["n"], lam=cfg["lam"], mu=cfg["mu"], theta=cfg["theta"])


def cmd_simulate(cfg: dict) -> int:
    params = _params_from(cfg)
    out = _outdir(cfg)
    init = cfg["init"]
    if init != "stationary":
        init = int(init)
    for rep in range(cfg["reps"]):
        run_cfg = SimConfig(horizon=cfg["horizon"], init=init, seed=cfg["seed"],
                            stop_time=cfg["stop_time"], rep=rep)
        bundle = simulate(params, run_cfg)
        write_bundle_csv(bundle, out / f"bundle_{rep}.csv", out / f"bundle_{rep}.json")
    return EXIT_OK


def cmd_fluid(cfg: dict) -> int:
    out = _outdir(cfg)
    t = np.arange(0.0, cfg["horizon"] + cfg["mesh"] / 2, cfg["mesh"])
    if cfg["regime"] == "qed":
        if cfg["mu"] is None:
            raise ConfigError("--mu is required")
        a, d, l, x, v = fluid_mod.fluid_qed(t, cfg["mu"])
    else:
        params = ModelParams(n=1, lam=cfg["lam"], mu=cfg["mu"], theta=cfg["theta"])
        a, d, l, x, v = fluid_mod.fluid_ed(t, params)
    cols = {"t": t, "A": a, "D": d, "L": l, "X": x, "V": v}
    if cfg["tau"] is not None:
        if cfg["regime"] != "ed":
            raise ConfigError("--tau (stopped fluid) needs the ed regime")
        xs, as_, ds, ls = fluid_mod.fluid_stopped(cfg["tau"], t, params)
        cols.update({"X_stopped": xs, "A_stopped": as_, "D_stopped": ds,
                     "L_stopped": ls})
    with open(out / "fluid.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*cols.values()):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return EXIT_OK


def cmd_diffusion(cfg: dict) -> int:
    out = _outdir(cfg)
    sde_cfg = SdeConfig(dt=cfg["dt"], horizon=cfg["horizon"], reps=cfg["reps"],
                        seed=cfg["seed"], x0=cfg["x0"])
    if cfg["regime"] == "qed":
        if cfg["beta"] is None:
            raise ConfigError("--beta is required for the qed regime")
        paths = sde_qed(cfg["beta"], cfg["mu"], cfg["theta"], sde_cfg)
    elif cfg["regime"] == "ed":
        paths = sde_ed(cfg["lam"], cfg["mu"], cfg["theta"], sde_cfg)
    else:
        if cfg["tau"] is None:
            raise ConfigError("--tau is required for the stopped regime")
        params = ModelParams(n=1, lam=cfg["lam"], mu=cfg["mu"], theta=cfg["theta"])
        stopped = sde_stopped(params, [cfg["tau"]], sde_cfg)
        paths = SdePaths(t=stopped.t, X=stopped.X[0], A=stopped.A[0],
                         D=stopped.D[0], L=stopped.L[0])
    with open(out / "diffusion.csv", "w") as fh:
        fh.write("t,mean_X,var_X,mean_A,mean_D,mean_L\n")
        for k, t in enumerate(paths.t):
            cells = (t, paths.X[:, k].mean(), paths.X[:, k].var(),
                     paths.A[:, k].mean(), paths.D[:, k].mean(),
                     paths.L[:, k].mean())
            fh.write(",".join(repr(float(c)) for c in cells) + "\n")
    return EXIT_OK


def cmd_steady(cfg: dict) -> int:
    from erlanga.steady import (c_and_d, detailed_balance_residual,
                                exact_vwait_mean, stationary_dist)

    params = _params_from(cfg)
    out = _outdir(cfg)
    dist = stationary_dist(params)
    with open(out / "stationary.csv", "w") as fh:
        fh.write("k,pi_k\n")
        for k, p in enumerate(dist.probabilities):
            fh.write(f"{k},{p!r}\n")
    summary = {
        "truncation": dist.truncation,
        "detailed_balance_residual": detailed_balance_residual(dist),
        "mean_state": dist.mean(),
        "exact_mean_vwait": exact_vwait_mean(params, dist),
    }
    if params.lam > params.n * params.mu:
        consts = fluid_mod.ed_constants(
            ModelParams(n=1, lam=params.lam / params.n, mu=params.mu,
                        theta=params.theta))
        c, d = c_and_d(consts.q, params.mu, params.theta)
        summary.update({"q": consts.q, "w": consts.w, "c_q": c, "d_q": d})
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _parse_n_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad n list {text!r}") from None


def cmd_verify(cfg: dict) -> int:
    out = _outdir(cfg)
    suite = cfg["suite"]
    n_list = _parse_n_list(cfg["n"]) if isinstance(cfg["n"], str) else tuple(cfg["n"])
    seed = cfg["seed"]
    if suite == "ed-steady":
        report = steady_wait_experiment(cfg["lam"], cfg["mu"], cfg["theta"],
                                        n_list, draws=cfg["reps"], seed=seed)
    elif suite == "ed-vwait":
        seq = RegimeSeq(kind="ed", mu=cfg["mu"], theta=cfg["theta"],
                        lam=cfg["lam"], n_list=n_list)
        plan = ExperimentPlan(checkpoints=(cfg["checkpoint"],), reps=cfg["reps"],
                              ref_reps=cfg["reps"], dt=cfg["dt"], seed=seed)
        report = run_experiment(seq, plan)
    elif suite == "qed-vwait":
        seq = RegimeSeq(kind="qed", mu=cfg["mu"], theta=cfg["theta"],
                        beta=cfg["beta"], n_list=n_list)
        plan = ExperimentPlan(checkpoints=(cfg["checkpoint"],), reps=cfg["reps"],
                              ref_reps=cfg["reps"], dt=cfg["dt"], seed=seed)
        report = run_experiment(seq, plan)
    elif suite == "fluid-rate":
        seq = RegimeSeq(kind="ed", mu=cfg["mu"], theta=cfg["theta"],
                        lam=cfg["lam"], n_list=n_list)
        report = fluid_rate_experiment(seq, reps=cfg["reps"],
                                       horizon=cfg["horizon"],
                                       tau=cfg["tau"], seed=seed)
    elif suite == "bounds":
        params = ModelParams(n=n_list[-1], lam=n_list[-1] * cfg["lam"],
                             mu=cfg["mu"], theta=cfg["theta"])
        level = fluid_mod.ed_constants(
            ModelParams(n=1, lam=cfg["lam"], mu=cfg["mu"],
                        theta=cfg["theta"])).xbar_level
        report = bounds_experiment(params, probes=[cfg["checkpoint"]],
                                   reps=cfg["reps"], horizon=cfg["horizon"],
                                   init=int(round(n_list[-1] * level)), seed=seed)
    elif suite == "func2p":
        report = operator_checks(seed=seed)
    else:
        raise ConfigError(f"unknown suite {suite!r}")

    with open(out / "report.json", "w") as fh:
        fh.write(canonical_report_json(report))
    write_checkpoint_csvs(report, out)
    if not report["pass"]:
        failures = [v for v in report.get("verdicts", []) if not v.get("pass", True)]
        print(f"verification FAILED: {len(failures)} verdict(s) down in suite "
              f"{suite}", file=sys.stderr)
        for v in failures:
            print(f"  {v}", file=sys.stderr)
        return EXIT_VERIFY
    print(f"suite {suite}: all verdicts pass")
    return EXIT_OK


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="erlanga",
        description="Erlang-A simulation and heavy-traffic verification lab")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def common(p):
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None,
                       help="flat TOML config file; flags win")

    p_sim = sub.add_parser("simulate", help="run event-driven replications")
    common(p_sim)
    p_sim.add_argument("--n", type=int, default=None)
    p_sim.add_argument("--lambda", dest="lam", type=float, default=None)
    p_sim.add_argument("--mu", type=float, default=None)
    p_sim.add_argument("--theta", type=float, default=None)
    p_sim.add_argument("--horizon", type=float, default=10.0)
    p_sim.add_argument("--init", default=0)
    p_sim.add_argument("--stop-time", dest="stop_time", type=float, default=None)
    p_sim.add_argument("--reps", type=int, default=1)
    p_sim.set_defaults(func=cmd_simulate)

    p_fl = sub.add_parser("fluid", help="evaluate closed-form fluid limits")
    common(p_fl)
    p_fl.add_argument("--regime", choices=["qed", "ed"], default="ed")
    p_fl.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p_fl.add_argument("--mu", type=float, default=1.0)
    p_fl.add_argument("--theta", type=float, default=1.0)
    p_fl.add_argument("--tau", type=float, default=None,
                      help="also emit the stopped-arrival fluid surface")
    p_fl.add_argument("--horizon", type=float, default=5.0)
    p_fl.add_argument("--mesh", type=float, default=0.01)
    p_fl.set_defaults(func=cmd_fluid)

    p_df = sub.add_parser("diffusion", help="sample the limit diffusions")
    common(p_df)
    p_df.add_argument("--regime", choices=["qed", "ed", "stopped"], default="ed")
    p_df.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p_df.add_argument("--mu", type=float, default=1.0)
    p_df.add_argument("--theta", type=float, default=1.0)
    p_df.add_argument("--beta", type=float, default=None)
    p_df.add_argument("--tau", type=float, default=None)
    p_df.add_argument("--dt", type=float, default=1e-3)
    p_df.add_argument("--horizon", type=float, default=2.0)
    p_df.add_argument("--reps", type=int, default=200)
    p_df.add_argument("--x0", type=float, default=0.0)
    p_df.set_defaults(func=cmd_diffusion)

    p_st = sub.add_parser("steady", help="exact stationary analytics")
    common(p_st)
    p_st.add_argument("--n", type=int, default=None)
    p_st.add_argument("--lambda", dest="lam", type=float, default=None)
    p_st.add_argument("--mu", type=float, default=None)
    p_st.add_argument("--theta", type=float, default=None)
    p_st.set_defaults(func=cmd_steady)

    p_vf = sub.add_parser("verify", help="run a verification suite")
    common(p_vf)
    p_vf.add_argument("--suite", required=True,
                      choices=["ed-steady", "ed-vwait", "qed-vwait",
                               "fluid-rate", "bounds", "func2p"])
    p_vf.add_argument("--n", default="25,100,400",
                      help="comma-separated server counts")
    p_vf.add_argument("--reps", type=int, default=2000)
    p_vf.add_argument("--lambda", dest="lam", type=float, default=2.0)
    p_vf.add_argument("--mu", type=float, default=1.0)
    p_vf.add_argument("--theta", type=float, default=1.0)
    p_vf.add_argument("--beta", type=float, default=1.0)
    p_vf.add_argument("--checkpoint", type=float, default=3.0)
    p_vf.add_argument("--dt", type=float, default=1e-3)
    p_vf.add_argument("--horizon", type=float, default=6.0)
    p_vf.add_argument("--tau", type=float, default=1.0)
    p_vf.set_defaults(func=cmd_verify)

    subparsers.update(simulate=p_sim, fluid=p_fl, diffusion=p_df,
                      steady=p_st, verify=p_vf)
    defaults_by_cmd = {
        name: {a.dest: a.default for a in sp._actions if a.dest != "help"}
        for name, sp in subparsers.items()
    }
    return parser, defaults_by_cmd


def main(argv=None) -> int:
    parser, defaults_by_cmd = build_parser()
    args = parser.parse_args(argv)
    defaults = defaults_by_cmd[args.command]
    try:
        cfg = _merge_config(args, defaults)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    func = cfg.pop("func")
    cfg.pop("command", None)
    started = time.time()
    try:
        code = func(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # simulator or numerical failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_manifest(Path(cfg["out"]), args.command, cfg, time.time() - started)
    return code


if __name__ == "__main__":
    sys.exit(main())
