"""Constant-velocity LiDAR odometry in a world of planes.

Each 0.1 s scan is ray-cast while the sensor moves. Undistorting the points
with the estimated motion, and splitting each scan into shorter pieces, both
cut the error. Associations come from the simulator, so only the motion
model is being exercised.
"""

import numpy as np

from lidar_imu_init import PipelineConfig, run_lo_sim
from lidar_imu_init.pipeline import lo_trajectory
from lidar_imu_init.simulator import eval_trajectory

cfg = PipelineConfig()
spec = lo_trajectory(cfg)
w = eval_trajectory(spec, np.linspace(0.0, spec.duration, 500)).w
print(f"{cfg.lo_duration:g} s run, peak rate {np.linalg.norm(w, axis=1).max():.2f} rad/s, "
      f"{cfg.lo_points} points per scan on {cfg.lo_planes} planes")

print(f"\n{'sub-frames':>10} {'compensated':>12} {'pos rmse mm':>12} {'rot rmse deg':>13} {'plane res mm':>13}")
for n in (1, 3, 5):
    res = run_lo_sim(PipelineConfig(sub_frames=n))
    for run in (res.compensated, res.uncompensated):
        tag = "yes" if run.compensate else "no"
        print(f"{n:>10} {tag:>12} {1e3 * run.pos_rmse:>12.2f} {np.degrees(run.rot_rmse):>13.3f} "
              f"{1e3 * run.mean_residual:>13.2f}")
