"""Interval-MDP abstraction of the belief-mean dynamics.

Three builders share one machinery:

- base: one region layer per time step, exact per-step mean-dynamics
  covariances;
- two-phase: exact transient layers up to a cut, then a single self-looping
  steady layer whose rows are evaluated under a best/worst covariance pair and
  merged into enclosing intervals;
- adaptive: the two-phase model plus extra actions that hold a control for
  several steps between measurements. Those enter a recovery branch whose
  covariances are tracked as a *set* over all possible entry steps, bounded
  per depth by covariance pairs, until every propagated covariance fits inside
  the steady pair (or a depth cap forces the return).

Rows depend on (action, layer) but not on the source region, so they are
stored once and shared.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AbstractionIntegrityError, ConfigurationError, RejectedInputError
from .geometry import AugmentedSpec, Partition, augment_regions, enabled_matrix
from .kalman import covariance_schedule, filter_step
from .models import BenchmarkSpec, LtiSystem, check_psd, min_eigenvalue, rediscretize, symmetrize
from .probability import (DEFAULT_CONFIG, ProbConfig, ProbInterval, SuccessorRow,
                          error_bound, successor_intervals, to_interval)

PAIR_TOL = 1e-10
DEDUP_TOL = 1e-8


class StateKind(Enum):
    REGION = 0
    GOAL = 1
    CRITICAL = 2
    ABSORBING = 3


@dataclass(frozen=True)
class StateId:
    """Abstract state: a region within a phase, or one of the three sinks.

    Phases are tuples: ("transient", k), ("steady",) or
    ("adaptive", rate, depth); sinks carry the empty phase.
    """

    kind: StateKind
    region: int = -1
    phase: tuple = ()

    def sort_key(self):
        order = {"transient": 0, "steady": 1, "adaptive": 2}
        if self.kind is StateKind.REGION:
            p = self.phase
            rank = (order[p[0]],) + tuple(p[1:]) + (0,) * (3 - len(p))
            return (0,) + rank + (self.region,)
        return (1, self.kind.value, 0, 0, 0)


GOAL_STATE = StateId(kind=StateKind.GOAL)
CRITICAL_STATE = StateId(kind=StateKind.CRITICAL)
ABSORBING_STATE = StateId(kind=StateKind.ABSORBING)


def region_state(region: int, phase: tuple) -> StateId:
    return StateId(kind=StateKind.REGION, region=region, phase=phase)


@dataclass(frozen=True, order=True)
class ActionId:
    """Target a region center, acting over `rate` merged base steps."""

    rate: int
    target: int


DEADLOCK = ActionId(rate=0, target=-1)


@dataclass(frozen=True)
class CovariancePair:
    """Matrices bounding a set of covariances in the PSD order."""

    upper: np.ndarray
    lower: np.ndarray


@dataclass(frozen=True)
class HorizonSpec:
    """Horizon layout: total steps, transient cut, adaptive rates, depth cap."""

    N: int
    Nbar: int | None = None
    adaptive_rates: tuple[int, ...] = ()
    gamma_max: int = 4

    def __post_init__(self):
        object.__setattr__(self, "adaptive_rates", tuple(sorted(set(self.adaptive_rates))))
        if self.Nbar is not None and not (1 <= self.Nbar <= self.N):
            raise ConfigurationError("Nbar must satisfy 1 <= Nbar <= N")
        if any(r < 2 for r in self.adaptive_rates):
            raise ConfigurationError("adaptive rates must be >= 2")
        if self.gamma_max < 1:
            raise ConfigurationError("gamma_max must be >= 1")


@dataclass
class Row:
    """Sparse interval row over successor state indices (sorted ascending)."""

    succ: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    nominal: np.ndarray


@dataclass
class Imdp:
    """Finite interval MDP over partition regions plus three sinks."""

    states: tuple[StateId, ...]
    state_index: dict
    actions: dict                 # state index -> tuple[ActionId, ...] (sorted)
    rows: list
    row_of: dict                  # (state index, ActionId) -> row index
    partition: Partition
    system: LtiSystem
    horizon: HorizonSpec
    kind: str
    beta: float
    initial: StateId | None = None
    correctness_flag: bool = True
    adaptive_return_depth: dict = field(default_factory=dict)
    augmented: AugmentedSpec | None = None         # keyed by landing phase

    def transition_intervals(self, state: StateId, action: ActionId) -> dict:
        """Successor -> ProbInterval view of one row."""
        row = self.rows[self.row_of[(self.state_index[state], action)]]
        return {self.states[s]: ProbInterval(lo=float(l), hi=float(h), nominal=float(p))
                for s, l, h, p in zip(row.succ, row.lo, row.hi, row.nominal)}

    def enabled(self, state: StateId) -> tuple[ActionId, ...]:
        return self.actions.get(self.state_index[state], ())


def _psd_split(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, vec = np.linalg.eigh(symmetrize(m))
    pos = (vec * np.maximum(lam, 0.0)) @ vec.T
    neg = (vec * np.minimum(lam, 0.0)) @ vec.T
    return symmetrize(pos), symmetrize(neg)


def covariance_pair(covs) -> CovariancePair:
    """Feasible (possibly suboptimal) bounding pair for a set of covariances.

    Constructive accumulation: the upper bound absorbs the positive part of
    every deficit sigma - U (so U only ever grows in the PSD order and
    dominates each member by induction); the lower bound symmetrically sheds
    negative parts. If the accumulated lower bound leaves the PSD cone, which
    happens for rank-deficient members pointing in different directions, it
    falls back to its PSD projection and finally to zero; zero is always a
    valid lower bound. No SDP solver is involved; plugging one in would only
    tighten the log-det objective, not change any guarantee.
    """
    covs = [symmetrize(np.atleast_2d(np.asarray(c, dtype=float))) for c in covs]
    if not covs:
        raise RejectedInputError("covariance set must be non-empty")
    for c in covs:
        check_psd(c, what="covariance set member")
    if len(covs) == 1:
        return CovariancePair(upper=covs[0], lower=covs[0])
    upper = covs[0].copy()
    lower = covs[0].copy()
    for sigma in covs[1:]:
        pos, _ = _psd_split(sigma - upper)
        upper = symmetrize(upper + pos)
        _, neg = _psd_split(sigma - lower)
        lower = symmetrize(lower + neg)
    scale = max(float(np.abs(upper).max()), 1e-300)
    upper = upper + (1e-12 * scale) * np.eye(upper.shape[0])
    if min_eigenvalue(lower) < -PAIR_TOL:
        projected, _ = _psd_split(lower)
        ok = all(min_eigenvalue(c - projected) >= -PAIR_TOL for c in covs)
        lower = projected if ok else np.zeros_like(lower)
    return CovariancePair(upper=upper, lower=lower)


def pair_contains(pair: CovariancePair, sigma: np.ndarray, tol: float = PAIR_TOL) -> bool:
    return (min_eigenvalue(pair.upper - sigma) >= -tol
            and min_eigenvalue(sigma - pair.lower) >= -tol)


class _Builder:
    """Shared assembly for the three build variants."""

    def __init__(self, spec: BenchmarkSpec, partition: Partition,
                 cfg: ProbConfig, beta: float):
        if not np.allclose(partition.domain.lo, spec.system.state_domain.lo) or \
           not np.allclose(partition.domain.hi, spec.system.state_domain.hi):
            raise ConfigurationError("partition domain must equal the system state domain")
        self.spec = spec
        self.partition = partition
        self.cfg = cfg
        self.beta = beta
        self.sys = spec.system
        self.targets = partition.centers
        self.enabled_base = enabled_matrix(partition, self.targets, self.sys)
        self.phases: list[tuple] = []
        self.rows: list[Row] = []
        self.row_cache: dict = {}
        # phase -> {ActionId: row id}; actions enabled per (phase, region) via masks
        self.phase_rows: dict = {}
        self.phase_enabled: dict = {}
        self.augmented: dict = {}
        self.state_ids: list[StateId] = []
        self.state_index: dict = {}

    # -- state table ------------------------------------------------------
    def freeze_states(self, phases):
        """Fix the state ordering; must run before any row is assembled."""
        self.phases = sorted(phases, key=_phase_key)
        self._layer_offset = {p: i * self.partition.size
                              for i, p in enumerate(self.phases)}
        R = self.partition.size
        for phase in self.phases:
            for i in range(R):
                self.state_ids.append(region_state(i, phase))
        self.state_ids.extend([GOAL_STATE, CRITICAL_STATE, ABSORBING_STATE])
        self.state_index = {s: i for i, s in enumerate(self.state_ids)}

    def sink_indices(self):
        base = len(self.state_ids) - 3
        return base, base + 1, base + 2  # goal, critical, absorbing

    def region_index(self, region: int, phase: tuple) -> int:
        return self._layer_offset[phase] + region

    # -- rows ---------------------------------------------------------------
    def make_row(self, succ_rows: list[SuccessorRow], landing: tuple | None) -> Row:
        """Assemble a (possibly merged) row; landing None folds regions into
        the absorbing sink (used past the final layer)."""
        goal_i, crit_i, absorb_i = self.sink_indices()
        acc: dict[int, list] = {}

        def feed(sr: SuccessorRow):
            entries = [(goal_i, sr.goal), (crit_i, sr.critical)]
            if landing is None:
                fold = sr.absorbing.nominal + sum(pi.nominal for pi in sr.regions.values())
                entries.append((absorb_i, to_interval(min(1.0, fold), self.cfg)))
            else:
                entries.append((absorb_i, sr.absorbing))
                offset = self.region_index(0, landing)
                entries.extend((offset + j, pi) for j, pi in sr.regions.items())
            for idx, pi in entries:
                acc.setdefault(idx, []).append(pi)

        for sr in succ_rows:
            feed(sr)
        succ, lo, hi, nominal = [], [], [], []
        for idx in sorted(acc):
            pis = acc[idx]
            # a successor absent from one of a merged pair of rows has mass 0
            while len(pis) < len(succ_rows):
                pis.append(to_interval(0.0, self.cfg))
            nom = float(np.mean([pi.nominal for pi in pis]))
            if nom < self.cfg.min_transition_prob:
                continue
            succ.append(idx)
            lo.append(min(pi.lo for pi in pis))
            hi.append(max(pi.hi for pi in pis))
            nominal.append(nom)
        row = Row(succ=np.array(succ, dtype=np.int64), lo=np.array(lo),
                  hi=np.array(hi), nominal=np.array(nominal))
        if row.succ.size == 0 or row.lo.sum() > 1 + 1e-9 or row.hi.sum() < 1 - 1e-9:
            raise AbstractionIntegrityError(
                f"row infeasible after assembly (sum lo {row.lo.sum():.6f}, "
                f"sum hi {row.hi.sum():.6f})")
        self.rows.append(row)
        return len(self.rows) - 1

    def rows_for_family(self, source_phase: tuple, landing: tuple | None,
                        sigmas: list[np.ndarray], eps: float,
                        enabled: np.ndarray, rate: int):
        """Compute shared rows of one (source phase, rate) family."""
        goal_aug, crit_aug = _augment(self.spec, eps)
        key_phase = landing if landing is not None else ("absorbed",)
        self.augmented[key_phase] = (eps, tuple(goal_aug), tuple(crit_aug))
        # the dict becomes an AugmentedSpec at assembly time
        live_actions = np.flatnonzero(enabled.any(axis=1))
        amap = self.phase_rows.setdefault(source_phase, {})
        emap = self.phase_enabled.setdefault(source_phase, {})
        for l in live_actions:
            action = ActionId(rate=rate, target=int(l))
            cache_key = (rate, int(l), landing,
                         tuple(np.asarray(s).tobytes() for s in sigmas), eps)
            if cache_key not in self.row_cache:
                succ_rows = [successor_intervals(self.targets[l], s, self.partition,
                                                 goal_aug, crit_aug, self.cfg)
                             for s in sigmas]
                self.row_cache[cache_key] = self.make_row(succ_rows, landing)
            amap[action] = self.row_cache[cache_key]
            emap[action] = enabled[l]

    # -- final assembly -----------------------------------------------------
    def assemble(self, kind: str, horizon: HorizonSpec, beta: float,
                 correctness: bool = True, return_depth=None) -> Imdp:
        _, _, absorb_i = self.sink_indices()
        deadlock_row = Row(succ=np.array([absorb_i], dtype=np.int64),
                           lo=np.array([1.0]), hi=np.array([1.0]), nominal=np.array([1.0]))
        self.rows.append(deadlock_row)
        deadlock_id = len(self.rows) - 1
        actions: dict = {}
        row_of: dict = {}
        R = self.partition.size
        for phase in self.phases:
            amap = self.phase_rows.get(phase, {})
            emap = self.phase_enabled.get(phase, {})
            ordered = sorted(amap)
            masks = np.array([emap[a] for a in ordered]) if ordered else np.zeros((0, R), bool)
            for i in range(R):
                si = self.state_index[region_state(i, phase)]
                acts = tuple(a for j, a in enumerate(ordered) if masks[j, i])
                if acts:
                    actions[si] = acts
                    for a in acts:
                        row_of[(si, a)] = amap[a]
                else:
                    actions[si] = ()
                    row_of[(si, DEADLOCK)] = deadlock_id
        augmented = AugmentedSpec(
            beta=beta,
            epsilon={p: e for p, (e, _, _) in self.augmented.items()},
            contracted_goal={p: g for p, (_, g, _) in self.augmented.items()},
            expanded_critical={p: c for p, (_, _, c) in self.augmented.items()},
        )
        return Imdp(states=tuple(self.state_ids), state_index=self.state_index,
                    actions=actions, rows=self.rows, row_of=row_of,
                    partition=self.partition, system=self.sys, horizon=horizon,
                    kind=kind, beta=beta, correctness_flag=correctness,
                    adaptive_return_depth=dict(return_depth or {}),
                    augmented=augmented)


def _phase_key(phase: tuple):
    order = {"transient": 0, "steady": 1, "adaptive": 2}
    return (order[phase[0]],) + tuple(phase[1:]) + (0,) * (3 - len(phase))


def _augment(spec: BenchmarkSpec, eps: float):
    return augment_regions(spec.goal_regions, spec.critical_regions, eps)


def _schedule_and_bounds(spec: BenchmarkSpec, cfg: ProbConfig, beta: float):
    steps = covariance_schedule(spec.system, spec.initial_belief.cov, spec.horizon)
    eps = [error_bound(s.posterior_cov, beta, cfg) for s in steps]
    return steps, eps


def build_base(spec: BenchmarkSpec, partition: Partition,
               cfg: ProbConfig = DEFAULT_CONFIG, beta: float = 0.01) -> Imdp:
    """One region layer per step k = 0..N-1; exact per-step covariances.

    Rows out of layer k land in layer k+1 under the step-(k+1) mean-dynamics
    covariance and augmented regions; the final layer's region mass folds into
    the absorbing sink (no steps remain to reach the goal afterwards).
    """
    b = _Builder(spec, partition, cfg, beta)
    N = spec.horizon
    steps, eps = _schedule_and_bounds(spec, cfg, beta)
    b.freeze_states([("transient", k) for k in range(N)])
    for k in range(N):
        landing = ("transient", k + 1) if k + 1 < N else None
        b.rows_for_family(("transient", k), landing,
                          [steps[k].mean_dyn_cov], eps[k],
                          b.enabled_base, rate=1)
    return b.assemble("base", HorizonSpec(N=N), beta)


def _steady_pairs(steps, nbar: int):
    tilde = covariance_pair([s.mean_dyn_cov for s in steps[nbar - 1:]])
    post = covariance_pair([s.posterior_cov for s in steps[nbar - 1:]])
    return tilde, post


def _envelope_sigmas(pair: CovariancePair, members) -> list[np.ndarray]:
    """Evaluation set for a merged row: both pair matrices plus the distinct
    member covariances, so the merged intervals enclose every member's
    nominal row (the conservatism the steady collapse promises)."""
    out = [pair.upper]
    if not np.array_equal(pair.upper, pair.lower):
        out.append(pair.lower)
    out.extend(_dedup(list(members)))
    return _dedup(out)


def build_two_phase(spec: BenchmarkSpec, partition: Partition, horizon: HorizonSpec,
                    cfg: ProbConfig = DEFAULT_CONFIG, beta: float = 0.01) -> Imdp:
    """Exact transient layers k = 0..Nbar-1 plus one self-looping steady layer.

    Steady rows are evaluated under both elements of the covariance pair over
    the steady window and merged per successor into the enclosing interval.
    """
    if horizon.Nbar is None:
        raise ConfigurationError("two-phase build needs Nbar")
    b = _Builder(spec, partition, cfg, beta)
    N, nbar = horizon.N, horizon.Nbar
    if N != spec.horizon:
        raise ConfigurationError("horizon.N must match the benchmark horizon")
    steps, eps = _schedule_and_bounds(spec, cfg, beta)
    tilde_pair, post_pair = _steady_pairs(steps, nbar)
    eps_steady = error_bound(post_pair.upper, beta, cfg)
    b.freeze_states([("transient", k) for k in range(nbar)] + [("steady",)])
    for k in range(nbar):
        landing = ("transient", k + 1) if k + 1 < nbar else ("steady",)
        b.rows_for_family(("transient", k), landing,
                          [steps[k].mean_dyn_cov], eps[k], b.enabled_base, rate=1)
    sigmas = _envelope_sigmas(tilde_pair, [s.mean_dyn_cov for s in steps[nbar - 1:]])
    b.rows_for_family(("steady",), ("steady",), sigmas, eps_steady,
                      b.enabled_base, rate=1)
    return b.assemble("two-phase", horizon, beta)


def build_adaptive(spec: BenchmarkSpec, partition: Partition, horizon: HorizonSpec,
                   cfg: ProbConfig = DEFAULT_CONFIG, beta: float = 0.01) -> Imdp:
    """Two-phase model extended with multi-step (adaptive-rate) actions.

    Rate-delta actions are enabled wherever the region fits in the delta-step
    backward reachable set and lead into a recovery branch where only
    base-rate actions exist. The branch's covariances are propagated as a set
    over every possible entry step, bounded per depth by covariance pairs, and
    the branch rejoins the steady layer once all propagated covariances fit
    inside the steady pair, or at the depth cap (flagging lost correctness).
    """
    if horizon.Nbar is None:
        raise ConfigurationError("adaptive build needs Nbar")
    if not horizon.adaptive_rates:
        return build_two_phase(spec, partition, horizon, cfg, beta)
    b = _Builder(spec, partition, cfg, beta)
    N, nbar = horizon.N, horizon.Nbar
    if N != spec.horizon:
        raise ConfigurationError("horizon.N must match the benchmark horizon")
    steps, eps = _schedule_and_bounds(spec, cfg, beta)
    tilde_pair, post_pair = _steady_pairs(steps, nbar)
    eps_steady = error_bound(post_pair.upper, beta, cfg)

    entry_covs = _dedup([spec.initial_belief.cov] + [s.posterior_cov for s in steps])
    branches = {}
    correctness = True
    for delta in horizon.adaptive_rates:
        merged = rediscretize(spec.system, delta)
        merged_sys = merged.as_system()
        if np.linalg.matrix_rank(merged_sys.B) < merged_sys.n:
            warnings.warn(f"adaptive rate {delta} skipped: merged input matrix rank-deficient")
            continue
        enabled_d = enabled_matrix(partition, partition.centers, merged_sys)
        depth_sets = [[filter_step(merged_sys, s) for s in entry_covs]]
        return_depth = None
        for gamma in range(horizon.gamma_max + 1):
            nxt = [filter_step(spec.system, ks.posterior_cov) for ks in depth_sets[-1]]
            depth_sets.append(nxt)
            contained = all(pair_contains(tilde_pair, ks.mean_dyn_cov) for ks in nxt)
            if contained:
                return_depth = gamma
                break
            if gamma == horizon.gamma_max:
                return_depth = gamma
                correctness = False
        branches[delta] = (enabled_d, depth_sets, return_depth)

    phases = [("transient", k) for k in range(nbar)] + [("steady",)]
    for delta, (_, _, rdepth) in branches.items():
        phases += [("adaptive", delta, g) for g in range(rdepth + 1)]
    b.freeze_states(phases)

    def branch_sigmas(depth_steps):
        members = [ks.mean_dyn_cov for ks in depth_steps]
        return _envelope_sigmas(covariance_pair(members), members)

    def branch_eps(depth_steps):
        pair = covariance_pair([ks.posterior_cov for ks in depth_steps])
        return error_bound(pair.upper, beta, cfg)

    # base-rate rows of transient and steady layers (identical to two-phase)
    for k in range(nbar):
        landing = ("transient", k + 1) if k + 1 < nbar else ("steady",)
        b.rows_for_family(("transient", k), landing,
                          [steps[k].mean_dyn_cov], eps[k], b.enabled_base, rate=1)
    sig_steady = _envelope_sigmas(tilde_pair, [s.mean_dyn_cov for s in steps[nbar - 1:]])
    b.rows_for_family(("steady",), ("steady",), sig_steady, eps_steady,
                      b.enabled_base, rate=1)

    for delta, (enabled_d, depth_sets, rdepth) in branches.items():
        entry_sig = branch_sigmas(depth_sets[0])
        entry_eps = branch_eps(depth_sets[0])
        for k in range(nbar):
            b.rows_for_family(("transient", k), ("adaptive", delta, 0),
                              entry_sig, entry_eps, enabled_d, rate=delta)
        b.rows_for_family(("steady",), ("adaptive", delta, 0),
                          entry_sig, entry_eps, enabled_d, rate=delta)
        for gamma in range(rdepth + 1):
            landing = ("adaptive", delta, gamma + 1) if gamma < rdepth else ("steady",)
            b.rows_for_family(("adaptive", delta, gamma), landing,
                              branch_sigmas(depth_sets[gamma + 1]),
                              branch_eps(depth_sets[gamma + 1]),
                              b.enabled_base, rate=1)

    return b.assemble("adaptive", horizon, beta, correctness,
                      {d: rd for d, (_, _, rd) in branches.items()})


def _dedup(covs, tol: float = DEDUP_TOL):
    kept = []
    for c in covs:
        c = np.atleast_2d(np.asarray(c, dtype=float))
        if not any(np.abs(c - k).max() < tol for k in kept):
            kept.append(c)
    return kept


@dataclass(frozen=True)
class StructuralReport:
    states: int
    choices: int
    transitions: int


def structural_report(imdp: Imdp) -> StructuralReport:
    """Counts of states, choices (state-action pairs; a deadlocked state's
    forced transition and a sink's self-loop each count as one choice, the
    explicit-model convention), and stored interval transitions."""
    choices = 3        # goal/critical/absorbing self-loops
    transitions = 3
    for si, acts in imdp.actions.items():
        keys = [(si, a) for a in acts] if acts else [(si, DEADLOCK)]
        choices += len(keys)
        transitions += sum(imdp.rows[imdp.row_of[k]].succ.size for k in keys)
    return StructuralReport(states=len(imdp.states), choices=choices,
                            transitions=transitions)
