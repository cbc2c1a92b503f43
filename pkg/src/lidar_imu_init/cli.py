"""Command-line entry point: ``calibrate``, ``simulate``, ``assess`` and ``lo-sim``.

Every field of :class:`PipelineConfig` (and, for ``simulate``,
:class:`SimulationConfig`) is also a ``--flag``. Values resolve as
defaults, then ``--config`` file, then flags.

Exit codes: 0 success, 2 insufficient excitation, 1 any other failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from . import excitation as exc
from . import io
from .config import field_defaults
from .pipeline import PipelineConfig, StageError, prepare, run_initialization, run_lo_sim
from .simulator import SimulationConfig

EXIT_OK, EXIT_FAIL, EXIT_INSUFFICIENT = 0, 1, 2

log = logging.getLogger("lidar_imu_init")


def _add_config_flags(parser: argparse.ArgumentParser, cls, title: str) -> None:
    group = parser.add_argument_group(title)
    defaults = field_defaults(cls)
    for f in fields(cls):
        flag = "--" + f.name.replace("_", "-")
        default = defaults[f.name]
        if isinstance(default, bool):
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                               help=f"(default {default})")
        else:
            group.add_argument(flag, dest=f.name, default=None, metavar="V",
                               help=f"(default {_show(default)})")


def _show(v) -> str:
    return ",".join(str(x) for x in v) if isinstance(v, tuple) else str(v)


def _resolve(cls, args, file_values: dict):
    """Defaults < config file < flags; string values are parsed by the dataclass."""
    names = {f.name for f in fields(cls)}
    values = {k: v for k, v in file_values.items() if k in names}
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return cls.from_mapping(values)


def _load_file(args) -> dict:
    """Config file values; one file may hold keys for every verb."""
    if not args.config:
        return {}
    values = io.read_config_file(args.config)
    known = {f.name for c in (PipelineConfig, SimulationConfig) for f in fields(c)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"{args.config}: unknown config keys {', '.join(unknown)}")
    return values


def _emit(doc: dict, out) -> None:
    text = io.dumps(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- verbs ---------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    cfg = _resolve(PipelineConfig, args, _load_file(args))
    imu = io.read_imu_csv(args.imu)
    odom = io.read_odom_csv(args.odom)
    try:
        result = run_initialization(imu, odom, cfg)
    except StageError as e:
        log.error("%s", e)
        doc = {"version": __version__, "status": "failed", "stage": e.stage, "error": str(e.cause),
               "config": cfg.to_dict()}
        if "excitation" in e.partial:
            doc["excitation"] = e.partial["excitation"].to_dict()
        _emit(doc, args.out)
        return EXIT_FAIL
    _emit(io.calibration_report(result, cfg), args.out)
    if not result.ok:
        log.warning("motion is not exciting enough; rerun with --force to solve anyway")
        return EXIT_INSUFFICIENT
    return EXIT_OK


def cmd_assess(args) -> int:
    cfg = _resolve(PipelineConfig, args, _load_file(args))
    lidar, _, _, period = prepare(io.read_imu_csv(args.imu), io.read_odom_csv(args.odom), cfg)
    report = exc.assess_sequences(lidar.w, lidar.alpha, rot_threshold=cfg.rot_threshold,
                                  trans_threshold=cfg.trans_threshold)
    doc = {"version": __version__, "period": period, "span": [float(lidar.t[0]), float(lidar.t[-1])],
           "excitation": report.to_dict()}
    _emit(doc, args.out)
    return EXIT_OK if report.sufficient else EXIT_INSUFFICIENT


def cmd_simulate(args) -> int:
    sim_cfg = _resolve(SimulationConfig, args, _load_file(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    imu, odom, truth = sim_cfg.generate()
    io.write_imu_csv(out / "imu.csv", imu)
    io.write_odom_csv(out / "odom.csv", odom)
    io.write_json(out / "truth.json", {"version": __version__, "simulation": sim_cfg.to_dict(), "truth": truth})
    log.info("wrote %d IMU and %d odometry samples to %s", len(imu), len(odom), out)
    return EXIT_OK


def cmd_lo_sim(args) -> int:
    cfg = _resolve(PipelineConfig, args, _load_file(args))
    result = run_lo_sim(cfg)
    doc = {"version": __version__, "config": cfg.to_dict(), "lo_sim": result.to_dict()}
    _emit(doc, args.out)
    if result.diverged:
        for run in (result.compensated, result.uncompensated):
            if run.diverged:
                log.error("filter diverged at scan %d (compensate=%s)", run.diverged_at, run.compensate)
        return EXIT_FAIL
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lidar-imu-init", description="Motion-based LiDAR-IMU initialization.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, inputs=True, out_help="write the JSON report here instead of stdout"):
        sp.add_argument("--config", help="flat key = value config file")
        if inputs:
            sp.add_argument("--imu", required=True, help="IMU CSV (t,wx,wy,wz,ax,ay,az)")
            sp.add_argument("--odom", required=True, help="odometry CSV (t,qw,qx,qy,qz,px,...,wz)")
        sp.add_argument("--out", help=out_help)

    sp = sub.add_parser("calibrate", help="estimate offset, extrinsic, biases and gravity")
    common(sp)
    _add_config_flags(sp, PipelineConfig, "pipeline options")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("assess", help="excitation report only")
    common(sp)
    _add_config_flags(sp, PipelineConfig, "pipeline options")
    sp.set_defaults(func=cmd_assess)

    sp = sub.add_parser("simulate", help="write simulated IMU / odometry CSVs and the truth")
    sp.add_argument("--config", help="flat key = value config file")
    sp.add_argument("--out-dir", required=True)
    _add_config_flags(sp, SimulationConfig, "simulation options")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("lo-sim", help="plane-world constant-velocity odometry run")
    common(sp, inputs=False)
    _add_config_flags(sp, PipelineConfig, "pipeline options")
    sp.set_defaults(func=cmd_lo_sim)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        log.error("%s", e)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
