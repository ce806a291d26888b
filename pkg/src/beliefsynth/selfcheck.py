"""Built-in invariant suites behind the `verify` CLI verb.

Each suite returns (name, passed, detail). They are deliberately small and
self-contained: quick sanity gates, not the full test suite.
"""

from __future__ import annotations

import itertools

import numpy as np

from .abstraction import (ABSORBING_STATE, CRITICAL_STATE, GOAL_STATE, ActionId,
                          HorizonSpec, Imdp, Row, covariance_pair, region_state)
from .benchmarks import double_integrator
from .errors import AbstractionIntegrityError
from .geometry import build_partition, region_of_many
from .kalman import covariance_schedule
from .models import Box
from .probability import ProbConfig, successor_intervals
from .solver import robust_value_iteration


def _random_psd(rng, n):
    m = rng.normal(size=(n, n))
    return m @ m.T + 1e-3 * np.eye(n)


def suite_probability_sums() -> tuple[str, bool, str]:
    spec = double_integrator(horizon=4)
    part = build_partition(spec.system.state_domain, (11, 11))
    steps = covariance_schedule(spec.system, spec.initial_belief.cov, 3)
    worst = 0.0
    for s in steps:
        row = successor_intervals(part.centers[60], s.mean_dyn_cov, part,
                                  list(spec.goal_regions), list(spec.critical_regions))
        worst = max(worst, abs(row.nominal_sum - 1.0))
    ok = worst <= 1e-6
    return ("probability-sums", ok, f"max |sum-1| = {worst:.2e}")


def suite_psd_schedule() -> tuple[str, bool, str]:
    spec = double_integrator(horizon=8)
    steps = covariance_schedule(spec.system, spec.initial_belief.cov, 8)
    worst = 0.0
    for s in steps:
        for m in (s.predicted_cov, s.posterior_cov, s.mean_dyn_cov):
            worst = min(worst, float(np.linalg.eigvalsh(m)[0]))
            if np.abs(m - m.T).max() > 1e-12:
                return ("psd-schedule", False, "asymmetric covariance emitted")
    ok = worst >= -1e-10
    return ("psd-schedule", ok, f"min eigenvalue {worst:.2e}")


def suite_pair_soundness(sets: int = 20, seed: int = 5) -> tuple[str, bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sets):
        n = int(rng.integers(2, 5))
        covs = [_random_psd(rng, n) for _ in range(int(rng.integers(2, 6)))]
        pair = covariance_pair(covs)
        for c in covs:
            worst = min(worst,
                        float(np.linalg.eigvalsh(pair.upper - c)[0]),
                        float(np.linalg.eigvalsh(c - pair.lower)[0]))
    ok = worst >= -1e-9
    return ("covariance-pair-soundness", ok, f"min constraint eigenvalue {worst:.2e}")


def suite_partition_coverage(samples: int = 10_000, seed: int = 11) -> tuple[str, bool, str]:
    rng = np.random.default_rng(seed)
    part = build_partition(Box([-21.0, -21.0], [21.0, 21.0]), (21, 21))
    pts = rng.uniform(part.domain.lo, part.domain.hi, size=(samples, 2))
    idx = region_of_many(part, pts)
    centers_idx = region_of_many(part, part.centers)
    ok = bool(np.all(idx >= 0) and np.all(centers_idx == np.arange(part.size)))
    return ("partition-coverage", ok, f"{samples} interior samples, all mapped")


def brute_force_values(states, actions, rows, horizon: int):
    """Finite-horizon robust values by explicit enumeration.

    Inner minimization solved at the vertices of the interval polytope (all
    but one successor pinned to a bound), outer maximization by enumeration.
    """
    def inner_min(lo, hi, v):
        m = len(v)
        best = np.inf
        for free in range(m):
            for pattern in itertools.product((0, 1), repeat=m - 1):
                p = np.empty(m)
                it = iter(pattern)
                for j in range(m):
                    if j == free:
                        continue
                    p[j] = lo[j] if next(it) == 0 else hi[j]
                rest = 1.0 - (p.sum() - p[free]) if m > 1 else 1.0
                p[free] = rest
                if lo[free] - 1e-12 <= rest <= hi[free] + 1e-12:
                    best = min(best, float(p @ v))
        return best

    values = {s: 0.0 for s in states}
    values["goal"] = 1.0
    for _ in range(horizon):
        new = dict(values)
        for s in states:
            if s in ("goal", "critical", "absorbing"):
                continue
            best = 0.0
            for a in actions[s]:
                succ, lo, hi = rows[(s, a)]
                v = np.array([values[t] for t in succ])
                best = max(best, inner_min(np.array(lo), np.array(hi), v))
            new[s] = best
        values = new
    return values


def random_flat_imdp(rng, n_regions: int, n_actions: int = 2):
    """Random single-layer iMDP plus a mirrored plain-python description."""
    part = build_partition(Box([0.0], [float(n_regions)]), (n_regions,))
    phase = ("steady",)
    states = tuple([region_state(i, phase) for i in range(n_regions)]
                   + [GOAL_STATE, CRITICAL_STATE, ABSORBING_STATE])
    index = {s: i for i, s in enumerate(states)}
    names = [f"r{i}" for i in range(n_regions)] + ["goal", "critical", "absorbing"]
    rows, row_of, actions = [], {}, {}
    plain_rows, plain_actions = {}, {}
    for i in range(n_regions):
        acts = tuple(ActionId(rate=1, target=t) for t in range(n_actions))
        actions[index[region_state(i, phase)]] = acts
        plain_actions[names[i]] = list(range(n_actions))
        for ai, a in enumerate(acts):
            m = int(rng.integers(2, len(states) + 1))
            succ = sorted(rng.choice(len(states), size=m, replace=False).tolist())
            nominal = rng.dirichlet(np.ones(m))
            width = rng.uniform(0.0, 0.3, size=m)
            lo = np.maximum(0.0, nominal - width)
            hi = np.minimum(1.0, nominal + width)
            rows.append(Row(succ=np.array(succ, dtype=np.int64), lo=lo, hi=hi,
                            nominal=nominal))
            row_of[(index[region_state(i, phase)], a)] = len(rows) - 1
            plain_rows[(names[i], ai)] = ([names[j] for j in succ], lo.tolist(), hi.tolist())
    imdp = Imdp(states=states, state_index=index, actions=actions, rows=rows,
                row_of=row_of, partition=part, system=double_integrator().system,
                horizon=HorizonSpec(N=4, Nbar=1), kind="two-phase", beta=0.01)
    return imdp, (names, plain_actions, plain_rows)


def suite_solver_oracle(instances: int = 10, seed: int = 7) -> tuple[str, bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 4))
        imdp, (names, plain_actions, plain_rows) = random_flat_imdp(rng, n)
        table = robust_value_iteration(imdp, max_sweeps=4, tol=0.0)
        oracle = brute_force_values(names, plain_actions, plain_rows, horizon=4)
        for i in range(n):
            got = table.value[region_state(i, ("steady",))]
            worst = max(worst, abs(got - oracle[f"r{i}"]))
    ok = worst <= 1e-9
    return ("solver-oracle", ok, f"max |value - oracle| = {worst:.2e}")


def suite_row_integrity() -> tuple[str, bool, str]:
    spec = double_integrator(horizon=3)
    part = build_partition(spec.system.state_domain, (7, 7))
    from .abstraction import build_base
    from .solver import _row_worst_case

    imdp = build_base(spec, part)
    for si, acts in imdp.actions.items():
        for a in acts:
            row = imdp.rows[imdp.row_of[(si, a)]]
            if row.lo.sum() > 1 + 1e-9 or row.hi.sum() < 1 - 1e-9:
                return ("row-integrity", False, "built row infeasible")
    # fault injection: a tampered row must be rejected by the solver
    bad = Row(succ=np.array([0, 1], dtype=np.int64), lo=np.array([0.1, 0.2]),
              hi=np.array([0.3, 0.4]), nominal=np.array([0.2, 0.3]))
    try:
        _row_worst_case(bad.lo, bad.hi, np.array([0.0, 1.0]))
    except AbstractionIntegrityError:
        return ("row-integrity", True, "rows feasible; tampered row rejected")
    return ("row-integrity", False, "tampered row was accepted")


ALL_SUITES = (
    suite_probability_sums,
    suite_psd_schedule,
    suite_pair_soundness,
    suite_partition_coverage,
    suite_solver_oracle,
    suite_row_integrity,
)


def run_all(verbose: bool = True) -> list[tuple[str, bool, str]]:
    results = []
    for suite in ALL_SUITES:
        name, ok, detail = suite()
        results.append((name, ok, detail))
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return results
