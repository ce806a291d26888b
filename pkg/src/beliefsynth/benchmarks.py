"""Built-in benchmark instances.

All three ship as 2-step merged systems: the raw input matrices are n x (n/2)
(acceleration inputs only), so the one-step backward reachable sets would have
empty interior; merging two steps makes the stacked input matrix square and
invertible. Horizons count merged steps.

The double integrator's parameters are fully pinned down (dynamics, noise,
domain, goal). The 2D/3D motion scenarios have published dynamics, noise,
partition sizes and horizons, but their obstacle layouts exist only as
figures; the boxed layouts here (a wall with a narrow gap between start and
goal) are in that spirit and are part of this package's definition, not a
reproduction.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ConfigurationError
from .geometry import Partition, build_partition
from .models import BenchmarkSpec, Box, GaussianDist, LtiSystem, rediscretize


def _merged(A, B, C, w_cov, v_cov, control_box, domain, merge: int = 2) -> LtiSystem:
    raw = LtiSystem(A=A, B=B, C=C,
                    process_noise=GaussianDist(np.zeros(len(A)), w_cov),
                    meas_noise_cov=v_cov, control_box=control_box, state_domain=domain)
    return rediscretize(raw, merge).as_system()


def double_integrator(noise_scale: float = 1.0, horizon: int = 16) -> BenchmarkSpec:
    """Input-constrained double integrator on the domain [-21,21]^2.

    Goal [-3,3]^2, no critical regions; per-step noise diag(0.25, 0.25) on the
    state and 0.25 on the position measurement, scaled by `noise_scale`.
    """
    domain = Box([-21.0, -21.0], [21.0, 21.0])
    sys = _merged(A=[[1.0, 1.0], [0.0, 1.0]], B=[[0.5], [1.0]], C=[[1.0, 0.0]],
                  w_cov=noise_scale * np.diag([0.25, 0.25]),
                  v_cov=[[0.25 * noise_scale]],
                  control_box=Box([-5.0], [5.0]), domain=domain)
    return BenchmarkSpec(
        name="double-integrator", system=sys,
        initial_belief=GaussianDist(np.zeros(2), np.diag([2.0, 2.0])),
        horizon=horizon,
        goal_regions=(Box([-3.0, -3.0], [3.0, 3.0]),),
        critical_regions=(),
        noise_scale=noise_scale,
    )


def motion_2d(noise_scale: float = 1.0, horizon: int = 12) -> BenchmarkSpec:
    """Planar point mass (position/velocity per axis) with position sensing.

    State order (px, vx, py, vy); positions live on [-11,11], velocities on
    [-5,5]. The goal sits in the upper-right position corner; a two-piece wall
    at px in [-1,1] leaves a narrow gap at py in [-3,1].
    """
    a1 = np.array([[1.0, 1.0], [0.0, 1.0]])
    b1 = np.array([[0.5], [1.0]])
    A = scipy.linalg.block_diag(a1, a1)
    B = scipy.linalg.block_diag(b1, b1)
    C = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
    domain = Box([-11.0, -5.0, -11.0, -5.0], [11.0, 5.0, 11.0, 5.0])
    sys = _merged(A=A, B=B, C=C,
                  w_cov=noise_scale * np.diag([0.10, 0.02, 0.10, 0.02]),
                  v_cov=noise_scale * np.diag([0.10, 0.10]),
                  control_box=Box([-4.0, -4.0], [4.0, 4.0]), domain=domain)
    vlo, vhi = -5.0, 5.0
    return BenchmarkSpec(
        name="motion-2d", system=sys,
        initial_belief=GaussianDist(np.zeros(4), np.diag([2.0, 0.01, 2.0, 0.01])),
        horizon=horizon,
        goal_regions=(Box([5.0, vlo, 5.0, vlo], [9.0, vhi, 9.0, vhi]),),
        critical_regions=(
            Box([-1.0, vlo, 1.0, vlo], [1.0, vhi, 11.0, vhi]),
            Box([-1.0, vlo, -11.0, vlo], [1.0, vhi, -3.0, vhi]),
        ),
        noise_scale=noise_scale,
    )


def motion_3d(noise_scale: float = 1.0, horizon: int = 12) -> BenchmarkSpec:
    """Spatial point mass with 6-dimensional state (position/velocity triples).

    State order (px, vx, py, vy, pz, vz); the wall at px in [-1,1] leaves a
    window at py in [1,5], pz in [1,5].
    """
    a1 = np.array([[1.0, 1.0], [0.0, 1.0]])
    b1 = np.array([[0.5], [1.0]])
    A = scipy.linalg.block_diag(a1, a1, a1)
    B = scipy.linalg.block_diag(b1, b1, b1)
    C = np.zeros((3, 6))
    C[0, 0] = C[1, 2] = C[2, 4] = 1.0
    domain = Box([-11.0, -3.0, -9.0, -3.0, -5.0, -3.0],
                 [11.0, 3.0, 9.0, 3.0, 5.0, 3.0])
    sys = _merged(A=A, B=B, C=C,
                  w_cov=noise_scale * np.diag([0.10, 0.02, 0.10, 0.02, 0.10, 0.02]),
                  v_cov=noise_scale * np.diag([0.10, 0.10, 0.10]),
                  control_box=Box([-4.0] * 3, [4.0] * 3), domain=domain)
    vlo, vhi = -3.0, 3.0
    return BenchmarkSpec(
        name="motion-3d", system=sys,
        initial_belief=GaussianDist(np.zeros(6),
                                    np.diag([2.0, 0.01, 2.0, 0.01, 2.0, 0.01])),
        horizon=horizon,
        goal_regions=(Box([5.0, vlo, 3.0, vlo, 1.0, vlo],
                          [9.0, vhi, 7.0, vhi, 5.0, vhi]),),
        critical_regions=(
            Box([-1.0, vlo, -9.0, vlo, -5.0, vlo], [1.0, vhi, 1.0, vhi, 5.0, vhi]),
            Box([-1.0, vlo, 5.0, vlo, -5.0, vlo], [1.0, vhi, 9.0, vhi, 5.0, vhi]),
            Box([-1.0, vlo, 1.0, vlo, -5.0, vlo], [1.0, vhi, 5.0, vhi, 1.0, vhi]),
        ),
        noise_scale=noise_scale,
    )


BENCHMARKS = {
    "double-integrator": double_integrator,
    "motion-2d": motion_2d,
    "motion-3d": motion_3d,
}

DEFAULT_COUNTS = {
    "double-integrator": (21, 21),
    "motion-2d": (11, 5, 11, 5),
    "motion-3d": (11, 3, 9, 3, 5, 3),
}


def get_benchmark(name: str, noise_scale: float | None = None,
                  horizon: int | None = None) -> BenchmarkSpec:
    if name not in BENCHMARKS:
        raise ConfigurationError(
            f"unknown benchmark {name!r}; available: {sorted(BENCHMARKS)}")
    kwargs = {}
    if noise_scale is not None:
        kwargs["noise_scale"] = noise_scale
    if horizon is not None:
        kwargs["horizon"] = horizon
    return BENCHMARKS[name](**kwargs)


def default_partition(spec: BenchmarkSpec, counts=None) -> Partition:
    counts = counts if counts is not None else DEFAULT_COUNTS.get(spec.name)
    if counts is None:
        raise ConfigurationError("no default partition counts for this benchmark")
    if len(counts) == 1 and spec.system.n > 1:
        counts = tuple(counts) * spec.system.n
    return build_partition(spec.system.state_domain, counts)
