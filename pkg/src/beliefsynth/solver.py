"""Robust value iteration: maximal lower bound on the reach-avoid probability.

The inner minimization over distributions consistent with an interval row is
solved exactly by sorting successors by value and greedily assigning upper
bounds to the lowest values first (the optimum of the inner LP). Transient
layers are solved in one backward pass; the steady/adaptive part is iterated
Jacobi-style with a sweep cap reflecting the remaining horizon, so the result
stays a step-bounded lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AbstractionIntegrityError, ConfigurationError
from .abstraction import (ABSORBING_STATE, CRITICAL_STATE, GOAL_STATE, ActionId, Imdp,
                          Row, StateId, StateKind)

ROW_FEAS_TOL = 1e-9


@dataclass
class ValueTable:
    """Solved lower-bound values and the maximizing action per state."""

    value: dict
    policy: dict
    converged: bool = True
    sweeps: int = 0

    def __getitem__(self, state: StateId) -> float:
        return self.value[state]


def worst_case_expectation(intervals: dict, values: dict) -> float:
    """min over distributions P in the interval row of sum_s P(s) v(s)."""
    succ = list(intervals)
    lo = np.array([intervals[s].lo for s in succ])
    hi = np.array([intervals[s].hi for s in succ])
    v = np.array([values[s] for s in succ])
    return _row_worst_case(lo, hi, v)


def _row_worst_case(lo: np.ndarray, hi: np.ndarray, v: np.ndarray) -> float:
    lo_sum = lo.sum()
    if lo_sum > 1 + ROW_FEAS_TOL or hi.sum() < 1 - ROW_FEAS_TOL:
        raise AbstractionIntegrityError(
            f"interval row admits no distribution (sum lo {lo_sum:.9f}, sum hi {hi.sum():.9f})")
    order = np.argsort(v, kind="stable")
    lo_s, hi_s, v_s = lo[order], hi[order], v[order]
    slack = max(0.0, 1.0 - lo_sum)
    extra = hi_s - lo_s
    room = np.concatenate(([0.0], np.cumsum(extra)[:-1]))
    add = np.clip(slack - room, 0.0, extra)
    return float(np.dot(lo_s + add, v_s))


def _phase_of(state: StateId):
    return state.phase if state.kind is StateKind.REGION else None


def robust_value_iteration(imdp: Imdp, max_sweeps: int | None = None,
                           tol: float = 1e-6) -> ValueTable:
    """Fixed point of v(s) = max_a min_{P in row(s,a)} E_P[v] with boundary
    values 1/0/0 on the goal/critical/absorbing sinks.

    Ties in the outer max break toward the lowest ActionId. The iterated
    block's sweep budget defaults to the residual horizon N - Nbar.
    """
    n_states = len(imdp.states)
    values = np.zeros(n_states)
    goal_i = imdp.state_index[GOAL_STATE]
    values[goal_i] = 1.0

    phases = sorted({_phase_of(s) for s in imdp.states if s.kind is StateKind.REGION},
                    key=lambda p: (0, p[1]) if p[0] == "transient" else (1, 0))
    transient = [p for p in phases if p[0] == "transient"]
    block = [p for p in phases if p[0] != "transient"]

    state_idx_by_phase: dict = {p: [] for p in phases}
    for s in imdp.states:
        if s.kind is StateKind.REGION:
            state_idx_by_phase[_phase_of(s)].append(imdp.state_index[s])

    policy_idx: dict[int, ActionId | None] = {}

    def backup_states(indices, current: np.ndarray) -> np.ndarray:
        """Max-min backup of the given states against `current` values."""
        out = np.zeros(len(indices))
        q_cache: dict[int, float] = {}
        for pos, si in enumerate(indices):
            acts = imdp.actions.get(si, ())
            if not acts:
                policy_idx[si] = None
                out[pos] = 0.0
                continue
            best, best_a = -1.0, None
            for a in acts:  # sorted order: ties keep the lowest ActionId
                rid = imdp.row_of[(si, a)]
                if rid not in q_cache:
                    row: Row = imdp.rows[rid]
                    q_cache[rid] = _row_worst_case(row.lo, row.hi, current[row.succ])
                q = q_cache[rid]
                if q > best:
                    best, best_a = q, a
            policy_idx[si] = best_a
            out[pos] = best
        return out

    sweeps_used = 0
    converged = True
    if block:
        if max_sweeps is None:
            nbar = imdp.horizon.Nbar if imdp.horizon.Nbar is not None else imdp.horizon.N
            max_sweeps = max(imdp.horizon.N - nbar, 1)
        if max_sweeps < 0:
            raise ConfigurationError("max_sweeps must be non-negative")
        block_idx = [si for p in block for si in state_idx_by_phase[p]]
        converged = False
        for sweep in range(max_sweeps):
            new_vals = backup_states(block_idx, values)
            change = float(np.abs(new_vals - values[block_idx]).max()) if block_idx else 0.0
            values[block_idx] = new_vals
            sweeps_used = sweep + 1
            if change < tol:
                converged = True
                break

    for p in reversed(transient):
        idx = state_idx_by_phase[p]
        values[idx] = backup_states(idx, values)

    value_map = {s: float(values[i]) for i, s in enumerate(imdp.states)}
    policy_map = {imdp.states[i]: a for i, a in policy_idx.items()}
    for sink in (GOAL_STATE, CRITICAL_STATE, ABSORBING_STATE):
        policy_map[sink] = None
    return ValueTable(value=value_map, policy=policy_map,
                      converged=converged, sweeps=sweeps_used)


def reachability_from(imdp: Imdp, table: ValueTable, initial_region: int) -> float:
    """Lower-bound value at the step-0 state of the given region."""
    state = StateId(kind=StateKind.REGION, region=int(initial_region),
                    phase=("transient", 0))
    if state not in imdp.state_index:
        raise ConfigurationError(f"unknown initial region {initial_region}")
    return table.value[state]


def export_values_csv(imdp: Imdp, table: ValueTable, path) -> None:
    """CSV of all states: kind, phase fields, region, value, chosen action."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "phase", "step", "rate", "depth", "region", "value",
                    "action_rate", "action_target"])
        for s in imdp.states:
            phase = s.phase[0] if s.phase else ""
            step = s.phase[1] if phase == "transient" else ""
            rate = s.phase[1] if phase == "adaptive" else ""
            depth = s.phase[2] if phase == "adaptive" else ""
            a = table.policy.get(s)
            w.writerow([s.kind.name.lower(), phase, step, rate, depth,
                        s.region if s.kind is StateKind.REGION else "",
                        f"{table.value[s]:.9f}",
                        a.rate if a else "", a.target if a else ""])
