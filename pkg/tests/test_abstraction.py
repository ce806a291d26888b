import numpy as np
import pytest

from beliefsynth.abstraction import (ABSORBING_STATE, CRITICAL_STATE, DEADLOCK,
                                     GOAL_STATE, ActionId, HorizonSpec, StateKind,
                                     build_adaptive, build_base, build_two_phase,
                                     covariance_pair, region_state, structural_report)
from beliefsynth.benchmarks import double_integrator
from beliefsynth.errors import ConfigurationError, RejectedInputError
from beliefsynth.geometry import build_partition
from beliefsynth.kalman import covariance_schedule
from beliefsynth.models import Box
from beliefsynth.probability import ProbConfig, successor_intervals


@pytest.fixture(scope="module")
def spec6():
    return double_integrator(horizon=6)


@pytest.fixture(scope="module")
def part11(spec6):
    return build_partition(spec6.system.state_domain, (11, 11))


@pytest.fixture(scope="module")
def imdp_base(spec6, part11):
    return build_base(spec6, part11)


@pytest.fixture(scope="module")
def imdp_two_phase(spec6, part11):
    return build_two_phase(spec6, part11, HorizonSpec(N=6, Nbar=2))


@pytest.fixture(scope="module")
def imdp_adaptive(spec6, part11):
    return build_adaptive(spec6, part11,
                          HorizonSpec(N=6, Nbar=2, adaptive_rates=(2,), gamma_max=4))


class TestCovariancePair:
    def test_singleton(self):
        s = np.array([[2.0, 0.5], [0.5, 1.0]])
        pair = covariance_pair([s])
        assert np.array_equal(pair.upper, s) and np.array_equal(pair.lower, s)

    def test_nested_identities(self):
        pair = covariance_pair([np.eye(2), 2 * np.eye(2)])
        assert np.allclose(pair.upper, 2 * np.eye(2), atol=1e-9)
        assert np.allclose(pair.lower, np.eye(2), atol=1e-9)

    def test_crossed_diagonals(self):
        # accumulation reaches the tight envelope diag(2,2) here; the scaled
        # last-element recipe would have produced diag(4,2)
        pair = covariance_pair([np.diag([1.0, 2.0]), np.diag([2.0, 1.0])])
        assert np.allclose(pair.upper, np.diag([2.0, 2.0]), atol=1e-9)
        for c in (np.diag([1.0, 2.0]), np.diag([2.0, 1.0])):
            assert np.linalg.eigvalsh(pair.upper - c)[0] >= -1e-9
            assert np.linalg.eigvalsh(c - pair.lower)[0] >= -1e-9

    def test_rejects_empty(self):
        with pytest.raises(RejectedInputError):
            covariance_pair([])

    def test_soundness_random_sets(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            n = int(rng.integers(1, 5))
            covs = []
            for _ in range(int(rng.integers(2, 7))):
                m = rng.normal(size=(n, n))
                covs.append(m @ m.T)
            pair = covariance_pair(covs)
            for c in covs:
                assert np.linalg.eigvalsh(pair.upper - c)[0] >= -1e-9
                assert np.linalg.eigvalsh(c - pair.lower)[0] >= -1e-9

    def test_rank_deficient_family(self, di_merged_sys):
        steps = covariance_schedule(di_merged_sys, np.diag([2.0, 2.0]), 16)
        tildes = [s.mean_dyn_cov for s in steps[2:]]
        pair = covariance_pair(tildes)
        for t in tildes:
            assert np.linalg.eigvalsh(pair.upper - t)[0] >= -1e-9
            assert np.linalg.eigvalsh(t - pair.lower)[0] >= -1e-9
        # the upper bound stays within a small factor of the largest member
        assert np.abs(pair.upper).max() < 2.0 * max(np.abs(t).max() for t in tildes)


class TestStateCounts:
    def test_base_layering(self, imdp_base, part11):
        assert len(imdp_base.states) == 6 * part11.size + 3

    def test_two_phase_layering(self, imdp_two_phase, part11):
        assert len(imdp_two_phase.states) == 3 * part11.size + 3

    def test_single_region_horizon_one(self):
        spec = double_integrator(horizon=1)
        part = build_partition(spec.system.state_domain, (1, 1))
        imdp = build_base(spec, part)
        assert len(imdp.states) == 4
        acts = imdp.actions[imdp.state_index[region_state(0, ("transient", 0))]]
        assert len(acts) <= 1

    def test_nbar_equals_n(self, spec6, part11):
        imdp = build_two_phase(spec6, part11, HorizonSpec(N=6, Nbar=6))
        assert len(imdp.states) == 7 * part11.size + 3


class TestRowInvariants:
    def test_rows_admit_distribution(self, imdp_two_phase):
        for row in imdp_two_phase.rows:
            assert row.lo.sum() <= 1 + 1e-9
            assert row.hi.sum() >= 1 - 1e-9
            assert np.all(row.lo <= row.nominal + 1e-12)
            assert np.all(row.nominal <= row.hi + 1e-12)

    def test_sinks_have_no_actions(self, imdp_two_phase):
        for sink in (GOAL_STATE, CRITICAL_STATE, ABSORBING_STATE):
            si = imdp_two_phase.state_index[sink]
            assert si not in imdp_two_phase.actions

    def test_deadlock_row_goes_to_absorbing(self, imdp_base):
        deadlocked = [si for si, acts in imdp_base.actions.items() if not acts]
        assert deadlocked, "coarse grid should have deadlocked states"
        si = deadlocked[0]
        row = imdp_base.rows[imdp_base.row_of[(si, DEADLOCK)]]
        absorb = imdp_base.state_index[ABSORBING_STATE]
        assert row.succ.tolist() == [absorb]
        assert row.lo[0] == row.hi[0] == 1.0

    def test_enabling_invariant_across_layers(self, imdp_base, part11):
        for i in range(0, part11.size, 7):
            base = imdp_base.actions[imdp_base.state_index[region_state(i, ("transient", 0))]]
            for k in range(1, 6):
                other = imdp_base.actions[imdp_base.state_index[region_state(i, ("transient", k))]]
                assert base == other

    def test_transition_intervals_view(self, imdp_two_phase, part11):
        for si, acts in imdp_two_phase.actions.items():
            if acts:
                state = imdp_two_phase.states[si]
                view = imdp_two_phase.transition_intervals(state, acts[0])
                total = sum(pi.nominal for pi in view.values())
                assert 0.9 < total <= 1 + 1e-9
                break


class TestSteadyEnclosure:
    def test_steady_row_encloses_window_nominals(self, spec6, part11, imdp_two_phase):
        """The merged steady row must enclose each window step's nominal row."""
        cfg = ProbConfig()
        steps = covariance_schedule(spec6.system, spec6.initial_belief.cov, 6)
        eps, goals, crits = imdp_two_phase.augmented.at(("steady",))
        si = None
        for idx, acts in imdp_two_phase.actions.items():
            state = imdp_two_phase.states[idx]
            if acts and state.phase == ("steady",):
                si, action = idx, acts[0]
                break
        assert si is not None
        row = imdp_two_phase.rows[imdp_two_phase.row_of[(si, action)]]
        stored = {int(s): (lo, hi) for s, lo, hi in zip(row.succ, row.lo, row.hi)}
        goal_i = imdp_two_phase.state_index[GOAL_STATE]
        offset = imdp_two_phase.state_index[region_state(0, ("steady",))]
        d = part11.centers[action.target]
        for s in steps[1:]:
            sr = successor_intervals(d, s.mean_dyn_cov, part11, list(goals),
                                     list(crits), cfg)
            if goal_i in stored:
                lo, hi = stored[goal_i]
                assert lo <= sr.goal.nominal + 1e-9 and hi >= sr.goal.nominal - 1e-9
            for j, pi in sr.regions.items():
                if pi.nominal < 1e-8:
                    continue
                lo, hi = stored[offset + j]
                assert lo <= pi.nominal + 1e-9
                assert hi >= pi.nominal - 1e-9


class TestAdaptive:
    def test_empty_rates_equals_two_phase(self, spec6, part11, imdp_two_phase):
        imdp = build_adaptive(spec6, part11, HorizonSpec(N=6, Nbar=2))
        assert imdp.states == imdp_two_phase.states
        assert structural_report(imdp) == structural_report(imdp_two_phase)

    def test_action_superset_with_identical_shared_rows(self, imdp_two_phase,
                                                        imdp_adaptive):
        for si, acts in imdp_two_phase.actions.items():
            state = imdp_two_phase.states[si]
            si_a = imdp_adaptive.state_index[state]
            acts_a = imdp_adaptive.actions[si_a]
            assert set(acts).issubset(set(acts_a))
            for a in acts:
                row_t = imdp_two_phase.rows[imdp_two_phase.row_of[(si, a)]]
                row_a = imdp_adaptive.rows[imdp_adaptive.row_of[(si_a, a)]]
                # successor indices may differ (more states); compare content
                assert np.allclose(row_t.lo, row_a.lo)
                assert np.allclose(row_t.hi, row_a.hi)

    def test_strict_choice_growth(self, imdp_two_phase, imdp_adaptive):
        assert structural_report(imdp_adaptive).choices > \
            structural_report(imdp_two_phase).choices

    def test_adaptive_states_only_base_actions(self, imdp_adaptive):
        for si, acts in imdp_adaptive.actions.items():
            if imdp_adaptive.states[si].phase[0] == "adaptive":
                assert all(a.rate == 1 for a in acts)

    def test_depth_cap_sets_flag_and_routes_back(self, part11):
        # the longer window's tight steady pair delays containment past depth 1
        spec16 = double_integrator(horizon=16)
        imdp = build_adaptive(spec16, part11,
                              HorizonSpec(N=16, Nbar=3, adaptive_rates=(2,), gamma_max=1))
        assert imdp.adaptive_return_depth[2] == 1
        assert imdp.correctness_flag is False
        deepest = [s for s in imdp.states
                   if s.kind is StateKind.REGION and s.phase == ("adaptive", 2, 1)]
        assert deepest, "capped depth layer must exist"
        si = imdp.state_index[deepest[0]]
        for a in imdp.actions[si]:
            row = imdp.rows[imdp.row_of[(si, a)]]
            kinds = {imdp.states[j].phase[0] if imdp.states[j].kind is StateKind.REGION
                     else imdp.states[j].kind.name for j in row.succ}
            assert "adaptive" not in kinds

    def test_return_depth_by_containment(self, imdp_adaptive):
        # with the default cap the branch returns once containment holds
        assert imdp_adaptive.correctness_flag is True
        assert imdp_adaptive.adaptive_return_depth[2] >= 0

    def test_multi_rate_monotone(self, spec6, part11, imdp_adaptive):
        from beliefsynth.solver import robust_value_iteration

        multi = build_adaptive(spec6, part11,
                               HorizonSpec(N=6, Nbar=2, adaptive_rates=(2, 4),
                                           gamma_max=4))
        assert set(multi.adaptive_return_depth) == {2, 4}
        assert structural_report(multi).choices > structural_report(imdp_adaptive).choices
        t_single = robust_value_iteration(imdp_adaptive)
        t_multi = robust_value_iteration(multi)
        for s, v in t_single.value.items():
            if s.kind is StateKind.REGION and s.phase[0] != "adaptive":
                assert t_multi.value[s] >= v - 1e-9


class TestStructuralReport:
    def test_empty_partition_report(self):
        spec = double_integrator(horizon=1)
        part = build_partition(spec.system.state_domain, (1, 1))
        imdp = build_base(spec, part)
        rep = structural_report(imdp)
        assert rep.states == 4

    def test_counts_consistent(self, imdp_base):
        rep = structural_report(imdp_base)
        assert rep.states == len(imdp_base.states)
        assert rep.choices >= rep.states - 3  # each region state has >= 1 choice
        assert rep.transitions >= rep.choices


class TestHorizonSpec:
    def test_rejects_bad_nbar(self):
        with pytest.raises(ConfigurationError):
            HorizonSpec(N=4, Nbar=5)

    def test_rejects_rate_one(self):
        with pytest.raises(ConfigurationError):
            HorizonSpec(N=4, Nbar=2, adaptive_rates=(1,))

    def test_two_phase_requires_nbar(self, spec6, part11):
        with pytest.raises(ConfigurationError):
            build_two_phase(spec6, part11, HorizonSpec(N=6))
