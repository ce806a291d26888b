import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beliefsynth.abstraction import (ABSORBING_STATE, CRITICAL_STATE, GOAL_STATE,
                                     ActionId, HorizonSpec, Imdp, Row, build_base,
                                     build_two_phase, region_state)
from beliefsynth.benchmarks import double_integrator
from beliefsynth.errors import AbstractionIntegrityError, ConfigurationError
from beliefsynth.geometry import build_partition
from beliefsynth.models import Box
from beliefsynth.probability import ProbInterval
from beliefsynth.solver import (reachability_from, robust_value_iteration,
                                worst_case_expectation)


def interval(lo, hi):
    return ProbInterval(lo=lo, hi=hi, nominal=min(max((lo + hi) / 2, lo), hi))


def lp_vertex_min(lo, hi, v):
    """Oracle: minimize p.v over {lo <= p <= hi, sum p = 1} by enumerating the
    basic solutions (all but one coordinate at a bound)."""
    m = len(v)
    best = np.inf
    for free in range(m):
        others = [j for j in range(m) if j != free]
        for pattern in itertools.product((0, 1), repeat=m - 1):
            p = np.empty(m)
            for j, bit in zip(others, pattern):
                p[j] = lo[j] if bit == 0 else hi[j]
            p[free] = 1.0 - sum(p[j] for j in others)
            if lo[free] - 1e-12 <= p[free] <= hi[free] + 1e-12:
                best = min(best, float(np.dot(p, v)))
    return best


def flat_imdp(n_regions, rows_spec, n_actions=2):
    """Hand-built single-layer iMDP. rows_spec[(i, a)] = list of
    (successor_name, lo, hi); names are 'r<j>', 'goal', 'critical', 'absorbing'."""
    part = build_partition(Box([0.0], [float(n_regions)]), (n_regions,))
    phase = ("steady",)
    states = tuple([region_state(i, phase) for i in range(n_regions)]
                   + [GOAL_STATE, CRITICAL_STATE, ABSORBING_STATE])
    index = {s: i for i, s in enumerate(states)}

    def sid(name):
        if name == "goal":
            return index[GOAL_STATE]
        if name == "critical":
            return index[CRITICAL_STATE]
        if name == "absorbing":
            return index[ABSORBING_STATE]
        return index[region_state(int(name[1:]), phase)]

    rows, row_of, actions = [], {}, {}
    for i in range(n_regions):
        acts = []
        for a in range(n_actions):
            if (i, a) not in rows_spec:
                continue
            entries = sorted((sid(nm), lo, hi) for nm, lo, hi in rows_spec[(i, a)])
            action = ActionId(rate=1, target=a)
            acts.append(action)
            rows.append(Row(succ=np.array([e[0] for e in entries], dtype=np.int64),
                            lo=np.array([e[1] for e in entries]),
                            hi=np.array([e[2] for e in entries]),
                            nominal=np.array([(e[1] + e[2]) / 2 for e in entries])))
            row_of[(index[region_state(i, phase)], action)] = len(rows) - 1
        actions[index[region_state(i, phase)]] = tuple(acts)
    return Imdp(states=states, state_index=index, actions=actions, rows=rows,
                row_of=row_of, partition=part, system=double_integrator().system,
                horizon=HorizonSpec(N=4, Nbar=1), kind="two-phase", beta=0.01)


class TestWorstCaseExpectation:
    def test_degenerate_single(self):
        assert worst_case_expectation({"s": interval(1.0, 1.0)}, {"s": 0.7}) == 0.7

    def test_two_successors(self):
        row = {"a": interval(0.2, 0.6), "b": interval(0.2, 0.6)}
        vals = {"a": 0.0, "b": 1.0}
        assert np.isclose(worst_case_expectation(row, vals), 0.4)

    def test_three_successors(self):
        row = {"a": interval(0.1, 0.5), "b": interval(0.2, 0.4), "c": interval(0.3, 0.6)}
        vals = {"a": 0.0, "b": 0.5, "c": 1.0}
        # worst case p = (0.5, 0.2, 0.3) -> 0.4
        assert np.isclose(worst_case_expectation(row, vals), 0.4)

    def test_infeasible_row_raises(self):
        with pytest.raises(AbstractionIntegrityError):
            worst_case_expectation({"a": interval(0.1, 0.3), "b": interval(0.1, 0.4)},
                                   {"a": 0.0, "b": 1.0})

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_matches_lp_vertex_oracle(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 6))
        nominal = rng.dirichlet(np.ones(m))
        width = rng.uniform(0, 0.4, size=m)
        lo = np.maximum(0, nominal - width)
        hi = np.minimum(1, nominal + width)
        v = rng.uniform(0, 1, size=m)
        row = {j: interval(lo[j], hi[j]) for j in range(m)}
        vals = {j: v[j] for j in range(m)}
        assert abs(worst_case_expectation(row, vals) - lp_vertex_min(lo, hi, v)) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_monotone_in_values(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 6))
        nominal = rng.dirichlet(np.ones(m))
        lo = np.maximum(0, nominal - 0.2)
        hi = np.minimum(1, nominal + 0.2)
        v = rng.uniform(0, 1, size=m)
        row = {j: interval(lo[j], hi[j]) for j in range(m)}
        base = worst_case_expectation(row, {j: v[j] for j in range(m)})
        bump = int(rng.integers(0, m))
        v2 = v.copy()
        v2[bump] = min(1.0, v2[bump] + 0.2)
        assert worst_case_expectation(row, {j: v2[j] for j in range(m)}) >= base - 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_widening_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 6))
        nominal = rng.dirichlet(np.ones(m))
        lo = np.maximum(0, nominal - 0.1)
        hi = np.minimum(1, nominal + 0.1)
        v = rng.uniform(0, 1, size=m)
        tight = worst_case_expectation({j: interval(lo[j], hi[j]) for j in range(m)},
                                       {j: v[j] for j in range(m)})
        wlo = np.maximum(0, lo - 0.05)
        whi = np.minimum(1, hi + 0.05)
        wide = worst_case_expectation({j: interval(wlo[j], whi[j]) for j in range(m)},
                                      {j: v[j] for j in range(m)})
        assert wide <= tight + 1e-12


class TestRobustValueIteration:
    def test_single_goal_transition(self):
        imdp = flat_imdp(1, {(0, 0): [("goal", 1.0, 1.0)]}, n_actions=1)
        table = robust_value_iteration(imdp, max_sweeps=4, tol=0.0)
        assert np.isclose(table.value[region_state(0, ("steady",))], 1.0)

    def test_worst_case_chain(self):
        imdp = flat_imdp(1, {(0, 0): [("goal", 0.3, 0.5), ("critical", 0.5, 0.7)]},
                         n_actions=1)
        table = robust_value_iteration(imdp, max_sweeps=4, tol=0.0)
        assert np.isclose(table.value[region_state(0, ("steady",))], 0.3)

    def test_random_instances_match_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(20):
            n = int(rng.integers(1, 4))  # regions; total states <= 6
            rows_spec = {}
            for i in range(n):
                for a in range(2):
                    names = [f"r{j}" for j in range(n)] + ["goal", "critical", "absorbing"]
                    m = int(rng.integers(2, len(names) + 1))
                    chosen = rng.choice(names, size=m, replace=False)
                    nominal = rng.dirichlet(np.ones(m))
                    width = rng.uniform(0, 0.3, size=m)
                    rows_spec[(i, a)] = [
                        (nm, max(0.0, p - w), min(1.0, p + w))
                        for nm, p, w in zip(chosen, nominal, width)]
            imdp = flat_imdp(n, rows_spec)
            table = robust_value_iteration(imdp, max_sweeps=4, tol=0.0)
            oracle = oracle_finite_horizon(n, rows_spec, horizon=4)
            for i in range(n):
                got = table.value[region_state(i, ("steady",))]
                assert abs(got - oracle[f"r{i}"]) < 1e-9

    def test_policy_tie_break_lowest_action(self):
        rows = {(0, 0): [("goal", 0.5, 0.5), ("absorbing", 0.5, 0.5)],
                (0, 1): [("goal", 0.5, 0.5), ("absorbing", 0.5, 0.5)]}
        imdp = flat_imdp(1, rows)
        table = robust_value_iteration(imdp, max_sweeps=4, tol=0.0)
        assert table.policy[region_state(0, ("steady",))] == ActionId(rate=1, target=0)


def oracle_finite_horizon(n_regions, rows_spec, horizon):
    """Independent finite-horizon solver: vertex-enumerated inner LP, explicit
    outer max, dictionary state space."""
    values = {f"r{i}": 0.0 for i in range(n_regions)}
    values.update({"goal": 1.0, "critical": 0.0, "absorbing": 0.0})
    for _ in range(horizon):
        new = dict(values)
        for i in range(n_regions):
            best = 0.0
            for a in range(2):
                if (i, a) not in rows_spec:
                    continue
                entries = rows_spec[(i, a)]
                lo = [e[1] for e in entries]
                hi = [e[2] for e in entries]
                v = [values[e[0]] for e in entries]
                best = max(best, lp_vertex_min(lo, hi, v))
            new[f"r{i}"] = best
        values = new
    return values


@pytest.fixture(scope="module")
def solved():
    spec = double_integrator(horizon=6)
    part = build_partition(spec.system.state_domain, (11, 11))
    base = build_base(spec, part)
    two = build_two_phase(spec, part, HorizonSpec(N=6, Nbar=2))
    return (part, base, robust_value_iteration(base),
            two, robust_value_iteration(two))


class TestOnBenchmarks:
    def test_values_in_unit_interval(self, solved):
        _, _, tb, _, tt = solved
        for table in (tb, tt):
            vals = np.array(list(table.value.values()))
            assert np.all(vals >= 0) and np.all(vals <= 1)

    def test_boundary_values(self, solved):
        _, _, tb, _, _ = solved
        assert tb.value[GOAL_STATE] == 1.0
        assert tb.value[CRITICAL_STATE] == 0.0
        assert tb.value[ABSORBING_STATE] == 0.0

    def test_two_phase_conservative(self, solved):
        part, base, tb, two, tt = solved
        for r in range(part.size):
            assert (reachability_from(two, tt, r)
                    <= reachability_from(base, tb, r) + 1e-9)

    def test_deadlocked_region_value_zero(self, solved):
        part, base, tb, _, _ = solved
        # corner regions of the coarse grid are deadlocked
        assert reachability_from(base, tb, 0) == 0.0

    def test_reachability_from_unknown_region(self, solved):
        _, base, tb, _, _ = solved
        with pytest.raises(ConfigurationError):
            reachability_from(base, tb, 10_000)

    def test_near_goal_beats_corner(self, solved):
        part, base, tb, _, _ = solved
        from beliefsynth.geometry import region_of

        center_val = reachability_from(base, tb, region_of(part, [0.0, 0.0]))
        corner_val = reachability_from(base, tb, region_of(part, [-20.0, -20.0]))
        assert center_val > corner_val
