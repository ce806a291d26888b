"""Controller extraction and closed-loop Monte Carlo validation.

The abstract policy induces a piecewise-linear feedback law: inside a region
the control solves min ||u||^2 subject to driving the predicted belief mean
exactly onto the action's target. Simulation draws the actual state, runs the
true dynamics and the Kalman filter side by side, and judges success on the
ACTUAL state against the ORIGINAL (un-augmented) goal and critical regions at
measurement instants; that is the object the formal guarantee speaks about.
Trials use independent per-trial random streams, deterministic given the
root seed.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .abstraction import ActionId, Imdp, StateId, StateKind
from .errors import ControllerIntegrityError
from .geometry import ABSORBING, region_of
from .kalman import correct_mean, filter_step
from .models import BenchmarkSpec, Box, LtiSystem, MultirateSystem, rediscretize
from .solver import ValueTable, reachability_from

_FACE_ENUM_LIMIT = 6561  # 3^8


@dataclass
class Controller:
    """Abstract policy plus everything needed to run it on the real system."""

    spec: BenchmarkSpec
    imdp: Imdp
    table: ValueTable

    def __post_init__(self):
        self._systems = {1: self.spec.system}
        for rate in {a.rate for a in self.table.policy.values() if a is not None}:
            if rate > 1:
                self._systems[rate] = rediscretize(self.spec.system, rate).as_system()

    def system_for_rate(self, rate: int) -> LtiSystem:
        if rate not in self._systems:
            self._systems[rate] = rediscretize(self.spec.system, rate).as_system()
        return self._systems[rate]

    def action_at(self, region: int, phase: tuple) -> ActionId | None:
        state = StateId(kind=StateKind.REGION, region=region, phase=phase)
        return self.table.policy.get(state)


@dataclass
class SimReport:
    """Aggregate of a Monte Carlo validation run."""

    trials: int
    successes: int
    empirical_rate: float
    guaranteed_lower_bound: float
    confidence: float
    initial_region: int
    trajectories: list = field(default_factory=list)


def _least_norm_in_box(B: np.ndarray, r: np.ndarray, box: Box) -> np.ndarray:
    """Exact min-norm solution of B u = r with u in box.

    Global face enumeration (exact, the objective separates over fixed and
    free coordinates) up to 3^8 faces, SLSQP beyond that.
    """
    m = B.shape[1]
    scale = max(1.0, float(np.abs(r).max()))
    if 3 ** m <= _FACE_ENUM_LIMIT:
        best, best_norm = None, np.inf
        for code in itertools.product((0, 1, 2), repeat=m):
            free = [j for j, c in enumerate(code) if c == 0]
            fixed_vals = np.array([0.0 if c == 0 else (box.lo[j] if c == 1 else box.hi[j])
                                   for j, c in enumerate(code)])
            rhs = r - B @ fixed_vals
            if free:
                Bf = B[:, free]
                uf, *_ = np.linalg.lstsq(Bf, rhs, rcond=None)
                if np.linalg.norm(Bf @ uf - rhs) > 1e-8 * scale:
                    continue
                if np.any(uf < box.lo[free] - 1e-9) or np.any(uf > box.hi[free] + 1e-9):
                    continue
                cand = fixed_vals.copy()
                cand[free] = uf
            else:
                if np.linalg.norm(B @ fixed_vals - r) > 1e-8 * scale:
                    continue
                cand = fixed_vals
            norm = float(cand @ cand)
            if norm < best_norm - 1e-15:
                best, best_norm = cand, norm
        if best is None:
            raise ControllerIntegrityError("no admissible control satisfies the target equality")
        return np.clip(best, box.lo, box.hi)
    res = scipy.optimize.minimize(
        lambda u: u @ u, x0=np.clip(np.linalg.lstsq(B, r, rcond=None)[0], box.lo, box.hi),
        jac=lambda u: 2 * u, method="SLSQP",
        bounds=list(zip(box.lo, box.hi)),
        constraints=[{"type": "eq", "fun": lambda u: B @ u - r,
                      "jac": lambda u: B}],
        options={"ftol": 1e-12, "maxiter": 500},
    )
    if not res.success or np.linalg.norm(B @ res.x - r) > 1e-6 * scale:
        raise ControllerIntegrityError("no admissible control satisfies the target equality")
    return np.clip(res.x, box.lo, box.hi)


def control_input(system: LtiSystem | MultirateSystem, mu, target) -> np.ndarray:
    """Min-norm control with the predicted mean pinned to the target.

    Solves min u'u s.t. target = A mu + B u + mu_w over the control box. The
    unconstrained Moore-Penrose solution is used when it already satisfies the
    box; otherwise a box-constrained exact solve runs. Infeasibility raises
    ControllerIntegrityError, which indicates an abstraction bug.
    """
    sys = system.as_system() if isinstance(system, MultirateSystem) else system
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    r = target - sys.A @ mu - sys.process_noise.mean
    u0, *_ = np.linalg.lstsq(sys.B, r, rcond=None)
    scale = max(1.0, float(np.abs(r).max()))
    if np.linalg.norm(sys.B @ u0 - r) > 1e-8 * scale:
        raise ControllerIntegrityError("target equality is unsatisfiable for this system")
    box = sys.control_box
    if box.contains(u0, tol=1e-9):
        return np.clip(u0, box.lo, box.hi)
    return _least_norm_in_box(sys.B, r, box)


def _next_phase(imdp: Imdp, phase: tuple, action: ActionId) -> tuple:
    """Mirror of the abstraction's layer routing for the simulator."""
    if action.rate > 1:
        return ("adaptive", action.rate, 0)
    if phase[0] == "transient":
        k_next = phase[1] + 1
        if imdp.kind == "base":
            return ("transient", min(k_next, imdp.horizon.N - 1))
        nbar = imdp.horizon.Nbar
        return ("transient", k_next) if k_next < nbar else ("steady",)
    if phase[0] == "steady":
        return ("steady",)
    _, rate, depth = phase
    if depth >= imdp.adaptive_return_depth.get(rate, 0):
        return ("steady",)
    return ("adaptive", rate, depth + 1)


def _in_any(boxes, x) -> bool:
    return any(b.contains(x) for b in boxes)


def simulate(spec: BenchmarkSpec, controller: Controller, trials: int, seed: int,
             initial_region: int, record_trajectories: int = 0) -> SimReport:
    """Closed-loop Monte Carlo validation from one initial region.

    Per trial: sample the actual state from the initial belief around the
    region center, then alternate policy lookups on the belief-mean region,
    control application over the action's rate, noisy measurement, and Kalman
    correction. Success means the actual state enters the original goal set
    within the horizon without touching the original critical set first.
    Deadlocks (no policy) and leaving the domain count as failure.
    """
    imdp = controller.imdp
    part = imdp.partition
    N = imdp.horizon.N
    guaranteed = reachability_from(imdp, controller.table, initial_region)
    confidence = (1.0 - imdp.beta) ** N
    streams = [np.random.default_rng(s)
               for s in np.random.SeedSequence(seed).spawn(trials)]
    base_sys = spec.system
    mu0 = part.centers[initial_region]
    successes = 0
    trajectories = []
    for t in range(trials):
        rng = streams[t]
        x = rng.multivariate_normal(mu0, spec.initial_belief.cov)
        mu = mu0.copy()
        sigma = spec.initial_belief.cov
        phase = ("transient", 0)
        k = 0
        ok = None
        trace = [(k, x.copy(), mu.copy(), initial_region, None)] if t < record_trajectories else None
        if _in_any(spec.critical_regions, x):
            ok = False
        elif _in_any(spec.goal_regions, x):
            ok = True
        while ok is None and k < N:
            region = region_of(part, mu)
            action = controller.action_at(region, phase) if region != ABSORBING else None
            if action is None:
                ok = False
                break
            rate = action.rate
            sys_r = controller.system_for_rate(rate)
            target = part.centers[action.target]
            u = control_input(sys_r, mu, target)
            assert sys_r.control_box.contains(u, tol=1e-9)
            # true state advances through the base system, one sub-step per slice
            p = base_sys.p
            for j in range(rate):
                w = rng.multivariate_normal(base_sys.process_noise.mean,
                                            base_sys.process_noise.cov)
                x = base_sys.A @ x + base_sys.B @ u[j * p:(j + 1) * p] + w
            v = rng.multivariate_normal(np.zeros(sys_r.q), sys_r.meas_noise_cov)
            y = sys_r.C @ x + v
            # filter cycle over the merged step
            pred_mean = sys_r.A @ mu + sys_r.B @ u + sys_r.process_noise.mean
            step = filter_step(sys_r, sigma)
            mu = correct_mean(pred_mean, step.gain, sys_r.C, y)
            sigma = step.posterior_cov
            k += rate
            phase = _next_phase(imdp, phase, action)
            if trace is not None:
                trace.append((k, x.copy(), mu.copy(), region, action))
            if _in_any(spec.critical_regions, x):
                ok = False
            elif _in_any(spec.goal_regions, x):
                ok = True
        successes += bool(ok)
        if trace is not None:
            trajectories.append(trace)
    return SimReport(trials=trials, successes=successes,
                     empirical_rate=successes / trials,
                     guaranteed_lower_bound=guaranteed,
                     confidence=confidence,
                     initial_region=initial_region,
                     trajectories=trajectories)


def emit_heatmap(imdp: Imdp, table: ValueTable, path) -> None:
    """CSV of step-0 lower bounds per region: index, center coords, value."""
    part = imdp.partition
    n = part.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["region"] + [f"c{i}" for i in range(n)] + ["value"]
                   + [f"count{i}" for i in range(n)])
        counts = list(part.counts)
        for i in range(part.size):
            state = StateId(kind=StateKind.REGION, region=i, phase=("transient", 0))
            val = table.value[state]
            row = [i] + [f"{c:.6g}" for c in part.centers[i]] + [f"{val:.9f}"] + counts
            w.writerow(row)


def emit_regions(spec: BenchmarkSpec, imdp: Imdp, path) -> None:
    """CSV of goal/critical boxes, original and augmented per landing phase.

    Columns: kind, phase, then lo{i}/hi{i} pairs. Augmented rows carry the
    landing phase tag ("transient:k", "steady", "adaptive:rate:depth").
    """
    n = spec.system.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["kind", "phase"]
        for i in range(n):
            header += [f"lo{i}", f"hi{i}"]
        w.writerow(header)

        def emit(kind, phase, boxes):
            for b in boxes:
                row = [kind, phase]
                for i in range(n):
                    row += [f"{b.lo[i]:.6g}", f"{b.hi[i]:.6g}"]
                w.writerow(row)

        emit("goal", "original", spec.goal_regions)
        emit("critical", "original", spec.critical_regions)
        for phase_key in imdp.augmented.phases():
            _, goals, crits = imdp.augmented.at(phase_key)
            tag = ":".join(str(p) for p in phase_key)
            emit("goal_augmented", tag, goals)
            emit("critical_augmented", tag, crits)


def emit_trajectories(report: SimReport, path) -> None:
    """CSV of recorded traces: trial, step, state, belief mean, region, action."""
    if not report.trajectories:
        raise ValueError("report carries no recorded trajectories")
    n = report.trajectories[0][0][1].size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "step"] + [f"x{i}" for i in range(n)]
                   + [f"mu{i}" for i in range(n)] + ["region", "action_target", "action_rate"])
        for t, trace in enumerate(report.trajectories):
            for k, x, mu, region, action in trace:
                w.writerow([t, k] + [f"{c:.6g}" for c in x] + [f"{c:.6g}" for c in mu]
                           + [region,
                              action.target if action else "",
                              action.rate if action else ""])
