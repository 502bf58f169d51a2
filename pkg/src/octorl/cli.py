"""Command-line front end: ``octorl tune|train|fly|eval|plot``.

Every command validates its inputs before simulating, writes all results
under ``--out DIR`` together with ``manifest.json``, and exits with 0 on
success, 2 on a usage error and 1 when the run itself fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (Controller, across_heading_std, action_azimuths, azimuth_histogram,
                       heading_sweep, magnitude_sweep, random_observations, reward_density,
                       rows_csv, shifted_similarity, flight_rewards)
from .config import RunConfig, format_config, format_wind, load_config, parse_wind
from .control import InvalidConfigError
from .dynamics import WindField
from .env import read_log_csv, write_log_csv
from .plotting import EmptyPlotError, plot_bars, plot_curve, plot_flight, plot_similarity
from .ppo import CheckpointError, PolicyParameters, load_checkpoint, save_checkpoint, train
from .trajectory import (FLIGHT_LOG_COLUMNS, PID_ONLY, RL_SUPERVISED, ConfigError, bundled_path,
                         decompose, flight_log, fly, parse_trajectory, score)
from .tuning import (PID_ONLY as TUNE_PID, RL_SUPERVISED as TUNE_RL, InsufficientData, SpaceError,
                     TrialSetup, apply_assignment, best, compare_tables, importance, load_trials,
                     parse_space, pid_space, rl_space, table_csv, top_table, tune)

BUNDLED = ("square", "patrol")


class UsageError(Exception):
    pass


class Outputs:
    """Collects artifacts and writes them, plus a manifest, in one go."""

    def __init__(self, out: Path, command: str, seed: int | None, args: dict):
        self.out = out
        self.command = command
        self.seed = seed
        self.args = args
        self.files: dict[str, bytes] = {}
        self.seeds: dict[str, int | None] = {}

    def add(self, name: str, data, seed: int | None = None):
        self.files[name] = data.encode() if isinstance(data, str) else bytes(data)
        self.seeds[name] = self.seed if seed is None else seed

    def write(self):
        self.out.mkdir(parents=True, exist_ok=True)
        for name, data in self.files.items():
            (self.out / name).write_bytes(data)
        manifest = {
            "command": self.command, "version": __version__, "seed": self.seed,
            "arguments": self.args,
            "artifacts": [{"path": n, "seed": self.seeds[n],
                           "sha256": hashlib.sha256(self.files[n]).hexdigest()}
                          for n in sorted(self.files)],
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- validation

def _config(paths) -> RunConfig:
    cfg = RunConfig()
    for p in paths or ():
        if not Path(p).is_file():
            raise UsageError(f"config file not found: {p}")
        try:
            cfg = load_config(p, cfg)
        except (InvalidConfigError, ValueError) as e:
            raise UsageError(f"{p}: {e}") from None
    return cfg


def _wind(spec, default: WindField) -> WindField:
    if spec is None:
        return default
    try:
        return parse_wind(spec)
    except InvalidConfigError as e:
        raise UsageError(str(e)) from None


def _policy(path, hidden: int) -> PolicyParameters:
    if not Path(path).is_file():
        raise UsageError(f"policy checkpoint not found: {path}")
    try:
        return load_checkpoint(Path(path).read_bytes(), hidden)
    except CheckpointError as e:
        raise UsageError(f"{path}: {e}") from None


def _trajectory(spec: str, box: float):
    try:
        if spec in BUNDLED:
            pts = bundled_path(spec)
        elif Path(spec).is_file():
            pts = parse_trajectory(Path(spec).read_text(), Path(spec).name)
        else:
            raise UsageError(f"trajectory not found: {spec} (bundled: {', '.join(BUNDLED)})")
        return decompose(pts, box, name=Path(spec).stem)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _non_negative(name):
    def check(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if v < 0:
            raise argparse.ArgumentTypeError(f"{name} must be >= 0")
        return v
    return check


def _positive(name):
    def check(text):
        v = _non_negative(name)(text)
        if v < 1:
            raise argparse.ArgumentTypeError(f"{name} must be >= 1")
        return v
    return check


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


# ---------------------------------------------------------------- commands

def cmd_tune(args) -> Outputs:
    cfg = _config(args.config)
    wind = _wind(args.wind, cfg.wind)
    mode = TUNE_PID if args.mode == "pid" else TUNE_RL
    if args.space:
        if not Path(args.space).is_file():
            raise UsageError(f"space file not found: {args.space}")
        try:
            space = parse_space(Path(args.space).read_text(), args.space)
        except SpaceError as e:
            raise UsageError(str(e)) from None
    else:
        space = pid_space() if mode == TUNE_PID else rl_space()
    compare = None
    if args.compare:
        if not Path(args.compare).is_file():
            raise UsageError(f"comparison log not found: {args.compare}")
        compare = load_trials(args.compare)
    setup = TrialSetup(mode=mode, wind=wind, config=cfg.episode, rl=cfg.rl, params=cfg.params,
                       base_gains=cfg.gains, train_episodes=args.train_episodes)

    out = Outputs(Path(args.out), "tune", args.seed, _arg_dict(args))
    log_path = Path(args.out) / "trials.jsonl"
    Path(args.out).mkdir(parents=True, exist_ok=True)
    records = tune(space, setup, args.trials, seed=args.seed, log_path=log_path,
                   progress=lambda r: _log(args, f"trial {r.trial_id}: {r.mean_reward:.2f} ({r.status})"))
    # the log is already on disk; register it so the manifest covers it
    out.add("trials.jsonl", log_path.read_bytes())

    b = best(records)
    gains, episode, hp = apply_assignment(b.params, setup)
    out.add("best.ini", format_config(RunConfig(cfg.params, gains, episode, hp, wind)))
    k = min(args.top, len(records))
    if k >= 2:
        table = top_table(records, k, list(space))
        if compare is not None:
            table = compare_tables(top_table(compare, min(args.top, len(compare)), list(space)), table)
        out.add("top_table.csv", table_csv(table))
    try:
        imp = importance(records, list(space), seed=args.seed)
        out.add("importance.csv", "param,importance\n" +
                "".join(f"{n},{float(v)!r}\n" for n, v in sorted(imp.items(), key=lambda kv: -kv[1])))
    except InsufficientData as e:
        _log(args, f"importance skipped: {e}")
    summary = {"trials": len(records), "best_trial": b.trial_id, "best_mean_reward": b.mean_reward,
               "anchor_mean_reward": records[0].mean_reward, "mode": mode,
               "wind": format_wind(wind)}
    out.add("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"best trial {b.trial_id}: mean reward {b.mean_reward:.2f}")
    return out


def cmd_train(args) -> Outputs:
    cfg = _config(args.config)
    wind = _wind(args.wind, cfg.wind)
    initial = _policy(args.init_policy, cfg.rl.hidden) if args.init_policy else None
    out = Outputs(Path(args.out), "train", args.seed, _arg_dict(args))

    from .env import NavigationEnv

    def factory():
        return NavigationEnv(cfg.episode, cfg.gains, cfg.params, wind)

    res = train(factory, cfg.rl, episodes=args.episodes, seed=args.seed, initial=initial,
                progress=lambda r: _log(args, f"update {r['update']}: episodes {r['episodes']}, "
                                              f"mean reward {r['mean_episode_reward']:.2f}"))
    out.add("policy.ckpt", save_checkpoint(res.params))
    out.add("curve.csv", res.curve_csv())
    out.add("config.ini", format_config(RunConfig(cfg.params, cfg.gains, cfg.episode, cfg.rl, wind)))
    print(f"{len(res.curve)} updates, checkpoint written to {Path(args.out) / 'policy.ckpt'}")
    return out


def cmd_fly(args) -> Outputs:
    cfg = _config(args.config)
    wind = _wind(args.wind, cfg.wind)
    traj = _trajectory(args.trajectory, cfg.episode.bounding_box)
    mode = RL_SUPERVISED if args.mode == "rl" else PID_ONLY
    if mode == RL_SUPERVISED and not args.policy:
        raise UsageError("--mode rl needs --policy")
    policy = _policy(args.policy, cfg.rl.hidden) if args.policy else None
    if args.wind_onset_segment >= len(traj):
        raise UsageError(f"--wind-onset-segment must be < {len(traj)} (number of waypoints)")
    out = Outputs(Path(args.out), "fly", args.seed, _arg_dict(args))

    outcomes = fly(traj, mode, cfg.gains, policy, wind, cfg.episode, seed=args.seed,
                   params=cfg.params, wind_onset_segment=args.wind_onset_segment)
    sc = score(outcomes, len(traj))
    sc.pop("deviation")
    sc.update({"mode": mode, "trajectory": traj.name, "waypoints": len(traj),
               "wind": format_wind(wind), "wind_onset_segment": args.wind_onset_segment,
               "segments": [{"reason": o.reason, "reward": o.total_reward,
                             "flight_time": o.flight_time} for o in outcomes]})
    out.add("flight_log.csv", write_log_csv(flight_log(outcomes), FLIGHT_LOG_COLUMNS))
    out.add("summary.json", json.dumps(sc, indent=2, sort_keys=True) + "\n")
    print(f"{sc['segments_reached']}/{len(traj)} waypoints reached, "
          f"total reward {sc['total_reward']:.2f}")
    return out


def cmd_eval(args) -> Outputs:
    cfg = _config(args.config)
    wind = _wind(args.wind, WindField.from_heading(args.magnitude, 90.0))
    traj = _trajectory(args.trajectory, cfg.episode.bounding_box)
    studies = ["heading", "magnitude", "density", "symmetry"] if args.study == "all" else [args.study]
    if args.study == "all" and not args.policy_b:
        studies.remove("symmetry")
    if "symmetry" in studies and not (args.policy and args.policy_b):
        raise UsageError("the symmetry study needs --policy and --policy-b")
    policy = _policy(args.policy, cfg.rl.hidden) if args.policy else None
    policy_b = _policy(args.policy_b, cfg.rl.hidden) if args.policy_b else None
    out = Outputs(Path(args.out), "eval", args.seed, _arg_dict(args))

    ctrls = [Controller("pid_only", cfg.gains)]
    if policy is not None:
        ctrls.append(Controller("rl_supervised", cfg.gains, policy))
    seeds = range(args.seed, args.seed + args.seeds)
    report = {"trajectory": traj.name, "seeds": list(seeds)}

    if "heading" in studies:
        rows = [r for c in ctrls for r in heading_sweep(c, traj, args.magnitude, seeds,
                                                        config=cfg.episode, params=cfg.params)]
        out.add("heading_sweep.csv", rows_csv(rows))
        labels = sorted({r["condition"] for r in rows}, key=lambda s: float(s.split("@")[1]))
        series = {c.name: [r["mean_reward"] for r in rows if r["controller"] == c.name] for c in ctrls}
        out.add("heading_sweep.svg", plot_bars(labels, series, title="heading sweep"))
        report["heading_std"] = {c.name: across_heading_std([r for r in rows if r["controller"] == c.name])
                                 for c in ctrls}
    if "magnitude" in studies:
        rows = [r for c in ctrls for r in magnitude_sweep(c, traj, args.magnitudes, args.heading, seeds,
                                                          config=cfg.episode, params=cfg.params)]
        out.add("magnitude_sweep.csv", rows_csv(rows))
        labels = [f"{m:g}" for m in args.magnitudes]
        series = {c.name: [r["mean_reward"] for r in rows if r["controller"] == c.name] for c in ctrls}
        out.add("magnitude_sweep.svg", plot_bars(labels, series, title="magnitude sweep"))
    if "density" in studies:
        run_seeds = range(args.seed, args.seed + args.runs)
        lines = ["controller,condition,seed,total_reward,completion"]
        dens = ["controller,condition,bin_low,bin_high,density"]
        for c in ctrls:
            for label, w in (("nominal", WindField()), (format_wind(wind), wind)):
                scores = flight_rewards(c, traj, w, run_seeds, cfg.episode, cfg.params)
                r = [s["total_reward"] for s in scores]
                lines += [f"{c.name},{label},{s},{float(v)!r},{float(sc['completion'])!r}"
                          for s, v, sc in zip(run_seeds, r, scores)]
                d, edges = reward_density(r)
                dens += [f"{c.name},{label},{float(lo)!r},{float(hi)!r},{float(v)!r}"
                         for lo, hi, v in zip(edges[:-1], edges[1:], d)]
        out.add("density_runs.csv", "\n".join(lines) + "\n")
        out.add("density.csv", "\n".join(dens) + "\n")
    if "symmetry" in studies:
        obs = random_observations(args.samples, args.seed)
        ha = azimuth_histogram(action_azimuths(policy, obs))
        hb = azimuth_histogram(action_azimuths(policy_b, obs))
        shifts, sims = shifted_similarity(ha, hb)
        _, self_sims = shifted_similarity(ha, ha)
        out.add("symmetry.csv", "shift_deg,similarity,self_similarity\n" +
                "".join(f"{s:g},{float(v)!r},{float(w)!r}\n" for s, v, w in zip(shifts, sims, self_sims)))
        out.add("action_histograms.csv", "bin_low_deg,policy_a,policy_b\n" +
                "".join(f"{10 * i},{int(a)},{int(b)}\n" for i, (a, b) in enumerate(zip(ha, hb))))
        out.add("symmetry.svg", plot_similarity(shifts, sims, title="shifted cosine similarity"))
        report["symmetry_peak_shift_deg"] = float(shifts[int(np.argmax(sims))])
    out.add("report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return out


def cmd_plot(args) -> Outputs:
    parsed = []
    for p in args.logs:
        path = Path(p)
        if not path.is_file():
            raise UsageError(f"log not found: {p}")
        try:
            header, rows = read_log_csv(path.read_text())
        except ValueError as e:
            raise UsageError(f"{p}: {e}") from None
        if rows.size == 0:
            raise UsageError(f"{p}: empty log, nothing to plot")
        if "segment" in header:
            kind = "flight"
        elif "mean_episode_reward" in header:
            kind = "curve"
        else:
            raise UsageError(f"{p}: not a flight log or training curve")
        parsed.append((path, header, rows, kind))
    out = Outputs(Path(args.out), "plot", None, _arg_dict(args))
    stems = [path.stem for path, *_ in parsed]
    for path, header, rows, kind in parsed:
        # runs usually share file names, so disambiguate by their directory
        name = path.stem if stems.count(path.stem) == 1 else f"{path.parent.name}_{path.stem}"
        try:
            svg = plot_flight(header, rows, path.stem) if kind == "flight" else \
                plot_curve(header, rows, title=path.stem)
        except (EmptyPlotError, ValueError) as e:
            raise UsageError(f"{path}: {e}") from None
        if name + ".svg" in out.files:
            raise UsageError(f"two logs would both be written to {name}.svg")
        out.add(f"{name}.svg", svg)
    return out


# ---------------------------------------------------------------- parser

def _arg_dict(args) -> dict:
    # the output directory is left out so reruns elsewhere give identical manifests
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "quiet", "out")}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="octorl", description="Supervisory RL over a cascaded PID octorotor.")
    p.add_argument("--version", action="version", version=f"octorl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", required=True, metavar="DIR", help="output directory")
        sp.add_argument("--config", action="append", metavar="FILE",
                        help="INI config overlay; may repeat, later files win")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
        sp.add_argument("--quiet", action="store_true", help="suppress progress on stderr")

    sp = sub.add_parser("tune", help="random search over gains (and supervisor settings)")
    common(sp)
    sp.add_argument("--mode", choices=("pid", "rl"), default="pid", help="tune PID-only or RL-supervised")
    sp.add_argument("--wind", metavar="M@H", help="wind: M newtons toward H degrees from +x")
    sp.add_argument("--trials", type=_positive("--trials"), default=50, help="number of trials (>= 1)")
    sp.add_argument("--space", metavar="FILE", help="search space file ('key = kind low high')")
    sp.add_argument("--train-episodes", type=_positive("--train-episodes"), default=300,
                    help="supervisor training budget per RL trial")
    sp.add_argument("--top", type=_positive("--top"), default=10, help="rows in the top-k table")
    sp.add_argument("--compare", metavar="LOG", help="baseline trial log for a change/notable table")
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("train", help="train a supervisory policy")
    common(sp)
    sp.add_argument("--wind", metavar="M@H", help="training wind, e.g. 5@90")
    sp.add_argument("--episodes", type=_non_negative("--episodes"), default=300,
                    help="episode budget; 0 writes the initial policy")
    sp.add_argument("--init-policy", metavar="CKPT", help="continue from this checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("fly", help="fly a trajectory PID-only or RL-supervised")
    common(sp)
    sp.add_argument("--trajectory", default="square", help="bundled name (square, patrol) or x,y,z file")
    sp.add_argument("--mode", choices=("pid", "rl"), default="pid", help="controller mode")
    sp.add_argument("--policy", metavar="CKPT", help="supervisor checkpoint (required for rl)")
    sp.add_argument("--wind", metavar="M@H", help="wind, e.g. 5@90")
    sp.add_argument("--wind-onset-segment", type=_non_negative("--wind-onset-segment"), default=0,
                    help="segment index at which the wind starts")
    sp.set_defaults(func=cmd_fly)

    sp = sub.add_parser("eval", help="robustness studies: sweeps, densities, action symmetry")
    common(sp)
    sp.add_argument("--study", choices=("heading", "magnitude", "density", "symmetry", "all"),
                    default="all", help="which study to run")
    sp.add_argument("--trajectory", default="square", help="bundled name or x,y,z file")
    sp.add_argument("--policy", metavar="CKPT", help="supervisor to compare against PID-only")
    sp.add_argument("--policy-b", metavar="CKPT", help="second supervisor for the symmetry study")
    sp.add_argument("--seeds", type=_positive("--seeds"), default=10, help="flights per condition")
    sp.add_argument("--runs", type=_positive("--runs"), default=30, help="flights per density")
    sp.add_argument("--magnitude", type=float, default=5.0, help="heading-sweep magnitude (N)")
    sp.add_argument("--magnitudes", type=_float_list, default=[0, 2, 4, 6, 8, 10],
                    help="comma-separated magnitude-sweep values (N)")
    sp.add_argument("--heading", type=float, default=90.0, help="magnitude-sweep heading (deg)")
    sp.add_argument("--wind", metavar="M@H", help="wind for the density study (default MAG@90)")
    sp.add_argument("--samples", type=_positive("--samples"), default=1000,
                    help="random observations for the symmetry study")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("plot", help="render flight logs and training curves as SVG")
    sp.add_argument("logs", nargs="+", metavar="LOG", help="flight_log.csv or curve.csv files")
    sp.add_argument("--out", required=True, metavar="DIR", help="output directory")
    sp.add_argument("--quiet", action="store_true", help="suppress progress on stderr")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on malformed flags
    try:
        out = args.func(args)
    except UsageError as e:
        print(f"octorl {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, InvalidConfigError) as e:
        print(f"octorl {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - report any run failure as exit 1
        print(f"octorl {args.command}: failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    out.write()
    return 0


if __name__ == "__main__":
    sys.exit(main())
