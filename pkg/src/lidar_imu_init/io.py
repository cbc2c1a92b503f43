"""CSV ingestion and export, the JSON report and the flat config file."""

from __future__ import annotations

import configparser
import json
import math
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import __version__
from .preprocess import ImuData, OdomData

IMU_COLUMNS = ("t", "wx", "wy", "wz", "ax", "ay", "az")
ODOM_COLUMNS = ("t", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz", "wx", "wy", "wz")
QUAT_NORM_TOL = 1e-3

UNITS = {
    "t_offset": "s",
    "d_star": "odometry samples",
    "dt": "s",
    "period": "s",
    "R_IL": "rotation matrix, LiDAR to IMU",
    "rot_vec_IL": "rad (axis-angle of R_IL)",
    "p_IL": "m, LiDAR origin in the IMU frame",
    "p_LI": "m, IMU origin in the LiDAR frame",
    "b_w": "rad/s",
    "b_a": "m/s^2",
    "gravity": "m/s^2, first-LiDAR-pose global frame",
    "span": "s",
}


# -- CSV -----------------------------------------------------------------------


def _read_table(path, columns) -> np.ndarray:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        header = f.readline().strip()
        names = tuple(h.strip() for h in header.split(","))
        if names != columns:
            raise ValueError(f"{path}: expected header {','.join(columns)!r}, got {header!r}")
        body = [line for line in f if line.strip()]
    if not body:
        raise ValueError(f"{path}: no data rows")
    data = np.loadtxt(body, delimiter=",", dtype=float, ndmin=2)
    if data.shape[1] != len(columns):
        raise ValueError(f"{path}: expected {len(columns)} columns, got {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values")
    return data


def _write_table(path, columns, data) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(columns) + "\n")
        for row in np.asarray(data, dtype=float):
            f.write(",".join(repr(float(x)) for x in row) + "\n")


def read_imu_csv(path) -> ImuData:
    d = _read_table(path, IMU_COLUMNS)
    return ImuData(d[:, 0], d[:, 1:4], d[:, 4:7])


def write_imu_csv(path, imu: ImuData) -> None:
    _write_table(path, IMU_COLUMNS, np.column_stack([imu.t, imu.gyro, imu.acc]))


def quat_to_matrix(q_wxyz) -> np.ndarray:
    """Unit quaternions ``(w, x, y, z)`` to rotation matrices; rejects far-from-unit input."""
    q = np.atleast_2d(np.asarray(q_wxyz, dtype=float))
    norms = np.linalg.norm(q, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > QUAT_NORM_TOL)
    if len(bad):
        raise ValueError(f"quaternion at row {bad[0]} has norm {norms[bad[0]]:.6f}")
    return Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrices to ``(w, x, y, z)`` with ``w >= 0``."""
    q = Rotation.from_matrix(np.asarray(R, dtype=float).reshape(-1, 3, 3)).as_quat()[:, [3, 0, 1, 2]]
    q[q[:, 0] < 0] *= -1.0
    return q


def read_odom_csv(path) -> OdomData:
    d = _read_table(path, ODOM_COLUMNS)
    return OdomData(d[:, 0], quat_to_matrix(d[:, 1:5]), d[:, 5:8], d[:, 8:11], d[:, 11:14])


def write_odom_csv(path, odom: OdomData) -> None:
    _write_table(path, ODOM_COLUMNS, np.column_stack([odom.t, matrix_to_quat(odom.R), odom.p, odom.v, odom.w]))


# -- JSON ----------------------------------------------------------------------


def _plain(x):
    """Recursively convert numpy containers and scalars to JSON-native types."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(doc: dict) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_plain(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def calibration_report(result, cfg) -> dict:
    from .manifold import so3_log

    doc = {
        "version": __version__,
        "status": result.status,
        "config": cfg.to_dict(),
        "units": UNITS,
        "period": result.period,
        "span": list(result.span) if result.span else None,
        "excitation": result.excitation.to_dict(),
    }
    if result.ok:
        doc.update(
            t_offset=result.t_offset,
            d_star=result.d_star,
            coarse_d_star=result.coarse_d_star,
            dt=result.dt,
            coarse_peak=result.coarse_peak,
            R_IL=result.R_IL,
            rot_vec_IL=so3_log(result.R_IL),
            p_IL=result.p_IL,
            p_LI=result.p_LI,
            b_w=result.b_w,
            b_a=result.b_a,
            gravity=result.gravity,
            stages=result.stages,
        )
    return doc


def write_json(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


# -- config file ---------------------------------------------------------------


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` and ``;`` start comments. Values stay strings."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (p_LI)
    try:
        parser.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as e:
        raise ValueError(f"{path}: {e}") from e
    if len(parser.sections()) != 1:
        raise ValueError(f"{path}: sections are not supported, keys must be flat")
    return {k.replace("-", "_"): v for k, v in parser["config"].items()}
