"""Command-line entry point: ``evaptwin <command> [options]``.

Commands
--------
simulate     one forward run of the configured (or a saved) schedule
optimize     a Bayesian-optimization campaign with a resumable log
scan-field   one budgeted campaign per magnetic field, tabulated
decay        condensate decay after a run, plus its rescaled companion
fit-image    mask-sweep bimodal fit of a stored or synthesized image

Exit codes
----------
0 ok; 2 configuration or usage; 3 physics (lost cloud, nothing condensed);
4 fit failure; 5 resume against a different configuration; 6 no mask-size
plateau; 7 file I/O or unreadable input.

Every output except ``run_record.json`` (which carries wall-clock
timestamps) is byte-identical across reruns with the same seed and config.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, imaging
from .bayesopt.campaign import (
    PROTOCOLS,
    FIXED_TIME,
    CampaignSpec,
    ResumeMismatchError,
    SimulatorObjective,
    _jsonable,
    run_campaign,
)
from .config import ConfigError, RunConfig, RunRecord, load_config, substream_seed
from .cost import evaluate
from .evap_sim import decay_bec, rescale_curve, run, write_trajectory_csv
from .ramps import RampSchedule, extend_box, extend_tail, write_schedule_csv

log = logging.getLogger("evaptwin")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3
EXIT_FIT = 4
EXIT_RESUME = 5
EXIT_PLATEAU = 6
EXIT_IO = 7

# factors mapping the decay curve onto a lighter reference system (time, atom number)
DECAY_TIME_FACTOR = 0.34
DECAY_NUMBER_FACTOR = 0.130


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = Path(args.out)
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot create output directory {cfg.output_dir}: {exc.strerror}") from exc
    return cfg.output_dir


def _read_schedule(path) -> RampSchedule:
    """A schedule JSON, either bare or wrapped as written by ``optimize``."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CommandError(EXIT_IO, f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CommandError(EXIT_IO, f"{path}: not valid JSON ({exc.msg})") from exc
    data = data.get("schedule", data) if isinstance(data, dict) else data
    try:
        return RampSchedule.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CommandError(EXIT_CONFIG, f"{path}: invalid schedule ({exc})") from exc


def _parse_extension(text: str) -> tuple[int, float]:
    try:
        n, dur = text.lower().split("x")
        n, dur = int(n), float(dur)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected COUNTxSECONDS, e.g. 2x1.4, got {text!r}") from None
    if n < 1 or dur <= 0:
        raise argparse.ArgumentTypeError("extension needs a count >= 1 and a positive duration")
    return n, dur


def _objective(cfg: RunConfig, scenario=None) -> SimulatorObjective:
    return SimulatorObjective(
        scenario or cfg.scenario, cfg.sim, cfg.weights, cfg.mode, cfg.full_loop, tuple(cfg.image_shape)
    )


def _campaign_spec(cfg: RunConfig, protocol: str, budget: int | None) -> CampaignSpec:
    try:
        return CampaignSpec(
            protocol=protocol,
            budget=budget if budget is not None else cfg.budget,
            batch=cfg.batch,
            seed=cfg.stream_seed("optimizer"),
            n_tail=cfg.n_tail,
            box=cfg.box,
            time_bounds=cfg.time_bounds,
            settings=replace(cfg.settings),
        )
    except ValueError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from exc


def _record(cfg: RunConfig, command: str, started: str, summary: dict, log_path=None):
    rec = RunRecord(command, cfg.config_hash, cfg.scenario_digest, str(log_path) if log_path else None, _jsonable(summary), started, _now())
    rec.write(cfg.output_dir / "run_record.json")


# ----------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    started = _now()
    cfg = _load_config(args)
    schedule = _read_schedule(args.schedule) if args.schedule else cfg.schedule
    out = _out_dir(cfg)
    traj = run(schedule, cfg.scenario, cfg.sim)
    cv = evaluate(traj, cfg.weights, cfg.mode)
    summary = traj.summary()
    summary.update({"cost": cv.cost, "gamma": cv.gamma, "field_G": cfg.scenario.field_B})
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_schedule_csv(schedule, out / "schedule.csv")
    _write_json(out / "summary.json", summary)
    _record(cfg, "simulate", started, summary)
    print(f"N={summary['N']:.6g} T={summary['T_uK']:.6g} uK N_bec={summary['N_bec']:.6g} psd={summary['psd']:.6g} cost={cv.cost:.6g}")
    if traj.lost:
        print(f"cloud lost at t={traj.lost_time:.4g} s (trap too shallow)", file=sys.stderr)
        return EXIT_PHYSICS
    return EXIT_OK


def _run_one_campaign(cfg, spec, base, objective, log_path, resume, workers):
    warm = [base] if cfg.warm_start else []
    try:
        return run_campaign(base, spec, objective, log_path=log_path, resume=resume, workers=workers, warm_start=warm)
    except ResumeMismatchError as exc:
        raise CommandError(EXIT_RESUME, str(exc)) from exc
    except FileExistsError as exc:
        raise CommandError(EXIT_CONFIG, f"{log_path} already exists; pass --resume to continue it or choose another --out") from exc
    except OSError as exc:
        raise CommandError(EXIT_IO, f"{log_path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from exc


def cmd_optimize(args) -> int:
    started = _now()
    cfg = _load_config(args)
    base = _read_schedule(args.warm_start) if args.warm_start else cfg.schedule
    if args.extend_tail:
        base = extend_tail(base, *args.extend_tail)
        cfg.box = extend_box(cfg.box, args.extend_tail[0])
    spec = _campaign_spec(cfg, args.protocol, args.budget)
    out = _out_dir(cfg)
    log_path = out / f"campaign_{args.protocol}.jsonl"
    result = _run_one_campaign(cfg, spec, base, _objective(cfg), log_path, args.resume, args.workers)
    best = {
        "protocol": args.protocol,
        "cost": result.best_cost,
        "n_bec": result.best_info.get("n_bec", 0.0),
        "flagged": result.flagged,
        "schedule": result.best_schedule.to_dict() if result.best_schedule else None,
    }
    _write_json(out / "best_schedule.json", best)
    if result.best_schedule is not None:
        write_schedule_csv(result.best_schedule, out / "best_schedule.csv")
    report = result.report()
    (out / "report.txt").write_text(report + "\n")
    _record(cfg, "optimize", started, best, log_path)
    print(report)
    return EXIT_OK


SCAN_COLUMNS = ["B_G", "best_N_bec", "best_total_time_s", "best_cost", "status"]


def cmd_scan_field(args) -> int:
    started = _now()
    cfg = _load_config(args)
    if len(args.fields) < 2:
        raise CommandError(EXIT_CONFIG, "scan-field needs at least two fields")
    spec = _campaign_spec(cfg, args.protocol, args.budget)
    out = _out_dir(cfg)
    rows, failures = [], 0
    for k, B in enumerate(args.fields):
        log_path = out / f"campaign_{k:02d}_{B:g}G.jsonl"
        try:
            scenario = cfg.scenario.at_field(B)
            result = _run_one_campaign(cfg, spec, cfg.schedule, _objective(cfg, scenario), log_path, args.resume, args.workers)
            sched = result.best_schedule
            rows.append([B, result.best_info.get("n_bec", 0.0), sched.duration if sched else float("nan"), result.best_cost, "ok"])
        except (CommandError, ArithmeticError, ValueError) as exc:
            failures += 1
            log.error("field %g G failed: %s", B, exc)
            rows.append([B, float("nan"), float("nan"), float("nan"), f"failed: {exc}"])
        print(f"B={B:g} G: best N_bec={rows[-1][1]:.6g} ({rows[-1][4]})")
    with open(out / "field_scan.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    _record(cfg, "scan-field", started, {"rows": rows})
    return EXIT_PHYSICS if failures else EXIT_OK


def write_curve_csv(curve, path, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for t, n in curve:
            w.writerow([repr(float(t)), repr(float(n))])


def cmd_decay(args) -> int:
    started = _now()
    cfg = _load_config(args)
    if args.duration <= 0:
        raise CommandError(EXIT_CONFIG, "--duration must be positive")
    schedule = _read_schedule(args.schedule) if args.schedule else cfg.schedule
    traj = run(schedule, cfg.scenario, cfg.sim)
    end = traj.final
    if traj.lost or end.cloud.n_bec <= 0:
        raise CommandError(
            EXIT_PHYSICS,
            "the run ends without a condensate, so there is nothing to decay; "
            "optimize first and pass the result with --schedule",
        )
    out = _out_dir(cfg)
    curve = decay_bec(end.cloud, end.trap, cfg.scenario, args.duration, cfg.sim, args.points)
    scaled = rescale_curve(curve, DECAY_TIME_FACTOR, DECAY_NUMBER_FACTOR)
    write_curve_csv(curve, out / "decay.csv", ["t_s", "N_bec"])
    write_curve_csv(scaled, out / "decay_rescaled.csv", ["t_scaled_s", "N_bec_scaled"])
    summary = {"N_bec_initial": curve[0][1], "N_bec_final": curve[-1][1], "duration_s": args.duration}
    _record(cfg, "decay", started, summary)
    print(f"N_bec {curve[0][1]:.6g} -> {curve[-1][1]:.6g} over {args.duration:g} s")
    return EXIT_OK


TRUTH_KEYS = {"n_thermal", "sigma_x", "sigma_y", "n_bec", "r_x", "r_y", "noise", "size"}


def parse_truth(text: str) -> dict:
    """``key=value,...`` truth spec for ``fit-image --synthesize``."""
    spec = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in TRUTH_KEYS:
            raise CommandError(EXIT_CONFIG, f"bad truth item {item!r}; keys: {', '.join(sorted(TRUTH_KEYS))}")
        try:
            spec[key] = float(value)
        except ValueError:
            raise CommandError(EXIT_CONFIG, f"truth value for {key} is not a number: {value!r}") from None
    for key in ("n_thermal", "sigma_x", "sigma_y"):
        if key not in spec:
            raise CommandError(EXIT_CONFIG, f"truth spec needs {key}")
    return spec


def cmd_fit_image(args) -> int:
    if (args.image is None) == (args.synthesize is None):
        raise CommandError(EXIT_CONFIG, "give an image path or --synthesize, not both")
    out = Path(args.out) if args.out else Path("fit")
    if args.image is not None:
        try:
            image = imaging.read_image(args.image)
        except OSError as exc:
            raise CommandError(EXIT_IO, f"{args.image}: {exc.strerror}") from exc
        except (ValueError, UnicodeDecodeError) as exc:
            raise CommandError(EXIT_IO, f"{args.image}: unreadable image ({exc})") from exc
    else:
        spec = parse_truth(args.synthesize)
        seed = args.seed
        if seed is None:
            seed = load_config(args.config).seed
        size = int(spec.get("size", 128))
        n = size / 2.0 - 0.5
        truth = imaging.CloudTruth(
            spec["n_thermal"], spec["sigma_x"], spec["sigma_y"], spec.get("n_bec", 0.0),
            spec.get("r_x", 1.0), spec.get("r_y", 1.0), (n, n),
        )
        try:
            image = imaging.synthesize_truth(
                truth, imaging.ImagingParams(shape=(size, size)), spec.get("noise", 0.0), substream_seed(seed, "noise")
            )
        except (imaging.GeometryError, ValueError) as exc:
            raise CommandError(EXIT_CONFIG, f"truth spec: {exc}") from exc
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot create output directory {out}: {exc.strerror}") from exc
    if args.synthesize is not None:
        imaging.write_image(image, out / "image.bin")
    try:
        fit = imaging.fit_bimodal(image)
    except imaging.PlateauError as exc:
        imaging.write_sweep_csv(exc.sweep, out / "sweep.csv")
        raise CommandError(EXIT_PLATEAU, f"no plateau in the mask-size sweep: {exc}") from exc
    except (imaging.FitError, ValueError) as exc:
        raise CommandError(EXIT_FIT, f"fit failed: {exc}") from exc
    imaging.write_sweep_csv(fit.s_sweep, out / "sweep.csv")
    _write_json(out / "fit.json", fit.record())
    state = "" if fit.detected else " (below detection floor)"
    print(f"n_thermal={fit.n_thermal:.6g} n_bec={fit.n_bec:.6g}{state} chosen_s={fit.chosen_s:g} floor={fit.detection_floor:.6g}")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="run configuration (YAML); bundled default if omitted")
    common.add_argument("--seed", type=int, default=None, help="override the configuration seed")
    common.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    campaign = argparse.ArgumentParser(add_help=False)
    campaign.add_argument("--protocol", choices=PROTOCOLS, default=FIXED_TIME)
    campaign.add_argument("--budget", type=int, default=None, help="evaluations (default from config)")
    campaign.add_argument("--resume", action="store_true", help="replay and continue an existing log")
    campaign.add_argument("--workers", type=int, default=1, help="concurrent simulator evaluations")

    p = argparse.ArgumentParser(prog="evaptwin", description="Evaporative-cooling digital twin with Bayesian optimization.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="forward run of a schedule")
    s.add_argument("--schedule", type=Path, help="schedule JSON (e.g. best_schedule.json from optimize)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("optimize", parents=[common, campaign], help="run an optimization campaign")
    s.add_argument("--warm-start", type=Path, help="schedule JSON used as base and first evaluation")
    s.add_argument("--extend-tail", type=_parse_extension, metavar="NxSEC", help="append N ramps of SEC seconds to the base first")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("scan-field", parents=[common, campaign], help="one campaign per magnetic field")
    s.add_argument("--fields", type=float, nargs="+", required=True, metavar="B", help="fields in G")
    s.set_defaults(func=cmd_scan_field)

    s = sub.add_parser("decay", parents=[common], help="condensate decay after a run")
    s.add_argument("--duration", type=float, default=10.0, help="hold time in s")
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--schedule", type=Path, help="schedule JSON producing the condensate")
    s.set_defaults(func=cmd_decay)

    s = sub.add_parser("fit-image", parents=[common], help="bimodal fit of an absorption image")
    s.add_argument("image", nargs="?", type=Path, help="image file (binary .bin or text grid)")
    s.add_argument("--synthesize", metavar="SPEC", help="truth spec, e.g. n_thermal=2e5,sigma_x=9,sigma_y=11,n_bec=2e4,r_x=6,r_y=7,noise=0.005")
    s.set_defaults(func=cmd_fit_image)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"evaptwin: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"evaptwin: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
