"""Gaussian box probabilities, probability intervals, and error bounds.

Mean-dynamics covariances here are typically rank-deficient (their rank is at
most the measurement dimension), so degenerate Gaussians are a first-class
case rather than an edge case:

- diagonal covariance: exact product of one-dimensional CDF differences;
- rank 0: point mass indicator;
- rank 1: exact line integral (interval intersection along the support line);
- full rank: separation-of-variables randomized QMC (scrambled Sobol);
- intermediate rank: randomized QMC over the latent space with a shared,
  seeded point cloud, so probabilities of disjoint sets telescope exactly.

Everything is deterministic given the configured seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .errors import ConfigurationError, RejectedInputError
from .geometry import ABSORBING, Partition, region_of_many, subtract_boxes
from .models import Box, check_psd, symmetrize

_RANK_TOL = 1e-12
_LINE_TOL = 1e-13


@dataclass(frozen=True)
class ProbInterval:
    """Probability interval [lo, hi] with the nominal estimate inside."""

    lo: float
    hi: float
    nominal: float

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.nominal <= self.hi <= 1.0):
            raise ConfigurationError(
                f"invalid probability interval lo={self.lo} nominal={self.nominal} hi={self.hi}")


@dataclass(frozen=True)
class ProbConfig:
    """Interval slack and quasi-Monte Carlo budget."""

    theta: float = 0.01
    qmc_samples: int = 2048
    qmc_randomizations: int = 8
    seed: int = 2023
    min_transition_prob: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise ConfigurationError("theta must lie in (0, 1)")
        if self.qmc_samples < 16 or self.qmc_randomizations < 1:
            raise ConfigurationError("QMC budget too small")


DEFAULT_CONFIG = ProbConfig()

_point_cache: dict = {}
_CACHE_MAX = 64


def _cached(key, maker):
    if key not in _point_cache:
        if len(_point_cache) >= _CACHE_MAX:
            _point_cache.pop(next(iter(_point_cache)))
        _point_cache[key] = maker()
    return _point_cache[key]


def _sobol_blocks(dim: int, cfg: ProbConfig) -> list[np.ndarray]:
    """One scrambled Sobol block per randomization, deterministic per seed."""
    m = int(np.ceil(np.log2(cfg.qmc_samples)))

    def make():
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.qmc_randomizations)
        return [qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(s)).random_base2(m)
                for s in seeds]

    return _cached(("sobol", dim, m, cfg.qmc_randomizations, cfg.seed), make)


def _factor(cov: np.ndarray) -> np.ndarray:
    """Columns M with cov = M M^T, keeping only numerically positive modes."""
    lam, vec = np.linalg.eigh(symmetrize(cov))
    lmax = max(lam[-1], 0.0)
    keep = lam > _RANK_TOL * max(lmax, 1e-300)
    return vec[:, keep] * np.sqrt(lam[keep])


def _diag_box_prob(mean, var, lo, hi):
    """Exact product path for diagonal covariances; broadcasts over boxes."""
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = np.where(sd > 0, ndtr((hi - mean) / sd), (hi >= mean).astype(float))
        lower = np.where(sd > 0, ndtr((lo - mean) / sd), (lo > mean).astype(float))
    return np.prod(np.clip(upper - lower, 0.0, 1.0), axis=-1)


def _line_box_prob(mean: np.ndarray, direction: np.ndarray,
                   lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Exact rank-1 path: X = mean + direction * xi, xi ~ N(0,1).

    `lo`/`hi` may be (n,) or (m, n); returns scalar or (m,) probabilities.
    """
    scale = max(1.0, float(np.abs(direction).max()))
    live = np.abs(direction) > _LINE_TOL * scale
    dead_ok = np.all((lo[..., ~live] <= mean[~live]) & (mean[~live] <= hi[..., ~live]), axis=-1)
    d = direction[live]
    a = (lo[..., live] - mean[live]) / d
    b = (hi[..., live] - mean[live]) / d
    t_lo = np.minimum(a, b).max(axis=-1) if d.size else np.full(np.shape(dead_ok), -np.inf)
    t_hi = np.maximum(a, b).min(axis=-1) if d.size else np.full(np.shape(dead_ok), np.inf)
    prob = np.clip(ndtr(t_hi) - ndtr(t_lo), 0.0, 1.0)
    return np.where(dead_ok, prob, 0.0)


def _genz_box_prob(mean: np.ndarray, cov: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                   cfg: ProbConfig) -> float:
    """Separation-of-variables randomized QMC for full-rank covariances."""
    n = mean.size
    L = np.linalg.cholesky(cov)
    a = lo - mean
    b = hi - mean
    blocks = _sobol_blocks(max(n - 1, 1), cfg)
    estimates = []
    for w in blocks:
        S = w.shape[0]
        d = np.full(S, ndtr(a[0] / L[0, 0]))
        e = np.full(S, ndtr(b[0] / L[0, 0]))
        f = e - d
        ys = np.empty((S, n - 1)) if n > 1 else None
        for i in range(1, n):
            u = np.clip(d + w[:, i - 1] * (e - d), 1e-15, 1 - 1e-15)
            ys[:, i - 1] = ndtri(u)
            shift = ys[:, :i] @ L[i, :i]
            d = ndtr((a[i] - shift) / L[i, i])
            e = ndtr((b[i] - shift) / L[i, i])
            f = f * np.clip(e - d, 0.0, 1.0)
        estimates.append(float(f.mean()))
    return float(np.clip(np.mean(estimates), 0.0, 1.0))


def _latent_cloud(cov: np.ndarray, cfg: ProbConfig) -> np.ndarray:
    """Deterministic latent-sample matrix (randomizations, S, rank)."""
    M = _factor(cov)
    r = M.shape[1]

    def make():
        blocks = _sobol_blocks(r, cfg)
        return np.stack([ndtri(np.clip(w, 1e-15, 1 - 1e-15)) @ M.T for w in blocks])

    return _cached(("cloud", cov.tobytes(), cfg.qmc_samples, cfg.qmc_randomizations, cfg.seed), make)


def mvn_box_prob(mean, cov, box: Box, cfg: ProbConfig = DEFAULT_CONFIG) -> float:
    """P(X in box) for X ~ N(mean, cov); box bounds may be infinite.

    Exact for diagonal and rank<=1 covariances; randomized-QMC estimate with a
    fixed seed otherwise.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = symmetrize(np.atleast_2d(np.asarray(cov, dtype=float)))
    check_psd(cov, what="covariance")
    lo, hi = box.lo, box.hi
    if np.any(hi < lo):
        return 0.0
    off = cov - np.diag(np.diag(cov))
    if not np.any(off):
        return float(_diag_box_prob(mean, np.diag(cov), lo, hi))
    M = _factor(cov)
    r = M.shape[1]
    if r == 0:
        return float(np.all((lo <= mean) & (mean <= hi)))
    if r == 1:
        return float(_line_box_prob(mean, M[:, 0], lo, hi))
    if r == mean.size:
        return _genz_box_prob(mean, cov, lo, hi, cfg)
    cloud = _latent_cloud(cov, cfg)
    x = cloud + mean
    inside = np.all((x >= lo) & (x <= hi), axis=-1)
    return float(inside.mean(axis=1).mean())


def to_interval(p: float, cfg: ProbConfig = DEFAULT_CONFIG) -> ProbInterval:
    """Interval [p - theta, p + theta] clamped to [0, 1]."""
    if not (-1e-12 <= p <= 1 + 1e-12):
        raise RejectedInputError(f"probability {p} outside [0, 1]")
    p = float(min(max(p, 0.0), 1.0))
    return ProbInterval(lo=max(0.0, p - cfg.theta), hi=min(1.0, p + cfg.theta), nominal=p)


def error_bound(cov, beta: float, cfg: ProbConfig = DEFAULT_CONFIG,
                tol: float = 1e-6) -> float:
    """Smallest eps with P(X in [-eps, eps]^n) >= 1 - beta, X ~ N(0, cov).

    Monotone bisection on eps; the returned value is the feasible end of the
    final bracket, so the confidence constraint holds.
    """
    if not (0.0 < beta < 1.0):
        raise RejectedInputError("beta must lie in (0, 1)")
    cov = symmetrize(np.atleast_2d(np.asarray(cov, dtype=float)))
    check_psd(cov, what="covariance")
    n = cov.shape[0]
    target = 1.0 - beta
    mean = np.zeros(n)

    def mass(eps: float) -> float:
        return mvn_box_prob(mean, cov, Box(np.full(n, -eps), np.full(n, eps)), cfg)

    if mass(0.0) >= target:
        return 0.0
    hi = 10.0 * float(np.sqrt(max(np.diag(cov).max(), 1e-300)))
    for _ in range(64):
        if mass(hi) >= target:
            break
        hi *= 2.0
    else:
        raise ConfigurationError("error bound bracket expansion failed")
    lo = 0.0
    while hi - lo > 0.5 * tol:
        mid = 0.5 * (lo + hi)
        if mass(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class SuccessorRow:
    """Rule-complete successor distribution of one (target, covariance) pair."""

    absorbing: ProbInterval
    goal: ProbInterval
    critical: ProbInterval
    regions: dict[int, ProbInterval] = field(default_factory=dict)

    @property
    def nominal_sum(self) -> float:
        return (self.absorbing.nominal + self.goal.nominal + self.critical.nominal
                + sum(pi.nominal for pi in self.regions.values()))

    def to_map(self) -> dict:
        """Flat successor -> interval map; region successors keyed by index."""
        out = {"absorbing": self.absorbing, "goal": self.goal,
               "critical": self.critical}
        out.update(self.regions)
        return out


def _disjoint_pieces(boxes) -> list[Box]:
    """Disjoint box cover of a union (expanded critical boxes may overlap)."""
    pieces: list[Box] = []
    for i, b in enumerate(boxes):
        pieces.extend(subtract_boxes(b, boxes[:i]))
    return pieces


def _exact_region_masses(mean, cov_kind, partition: Partition,
                         goal_in, crit_in) -> tuple[np.ndarray, float, float, float]:
    """Exact path (diagonal or rank<=1): box algebra over the grid."""
    kind, payload = cov_kind
    if kind == "diag":
        def prob(los, his):
            return _diag_box_prob(mean, payload, los, his)
    else:
        def prob(los, his):
            return _line_box_prob(mean, payload, los, his)

    goal_pieces = _disjoint_pieces(goal_in)
    crit_pieces = _disjoint_pieces(crit_in)
    region_full = np.atleast_1d(prob(partition.lowers, partition.uppers))
    p_domain = float(prob(partition.domain.lo, partition.domain.hi))
    p_goal = float(sum(prob(g.lo, g.hi) for g in goal_pieces))
    p_crit = float(sum(prob(c.lo, c.hi) for c in crit_pieces))

    region_masses = region_full.astype(float)
    overlap = goal_pieces + crit_pieces
    if overlap:
        olo = np.array([b.lo for b in overlap])
        ohi = np.array([b.hi for b in overlap])
        hit = np.flatnonzero(
            np.any(np.all((partition.lowers[:, None, :] < ohi[None, :, :]) &
                          (partition.uppers[:, None, :] > olo[None, :, :]), axis=2), axis=1))
        for j in hit:
            pieces = subtract_boxes(partition.regions[j].box, overlap)
            region_masses[j] = float(sum(prob(p.lo, p.hi) for p in pieces))
    p_absorb = max(0.0, 1.0 - p_domain)
    return region_masses, p_goal, p_crit, p_absorb


def _sampled_region_masses(mean, cov, partition: Partition, goal_in, crit_in,
                           cfg: ProbConfig) -> tuple[np.ndarray, float, float, float]:
    """Classification QMC: every sample lands in exactly one successor set, so
    the nominal masses sum to one by construction."""
    cloud = _latent_cloud(cov, cfg) + mean
    reps, S, n = cloud.shape
    pts = cloud.reshape(-1, n)
    total = pts.shape[0]
    idx = region_of_many(partition, pts)
    in_crit = np.zeros(total, dtype=bool)
    for c in crit_in:
        in_crit |= np.asarray(c.contains(pts))
    in_goal = np.zeros(total, dtype=bool)
    for g in goal_in:
        in_goal |= np.asarray(g.contains(pts))
    inside = idx != ABSORBING
    crit_mask = inside & in_crit
    goal_mask = inside & in_goal & ~crit_mask
    region_mask = inside & ~crit_mask & ~goal_mask
    p_absorb = float(np.count_nonzero(~inside)) / total
    p_crit = float(np.count_nonzero(crit_mask)) / total
    p_goal = float(np.count_nonzero(goal_mask)) / total
    counts = np.bincount(idx[region_mask], minlength=partition.size)
    return counts / total, p_goal, p_crit, p_absorb


def successor_intervals(d, mean_dyn_cov, partition: Partition, goal_boxes,
                        critical_boxes, cfg: ProbConfig = DEFAULT_CONFIG) -> SuccessorRow:
    """Transition mass of a belief-mean step landing around target d.

    Classifies mass into: absorbing (outside the domain), the goal sink
    (domain intersected with the step's contracted goal), the critical sink
    (domain intersected with the step's expanded critical set), and each
    region minus the goal/critical overlap. Nominal masses sum to one.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if not partition.domain.contains(d):
        raise RejectedInputError("target mean must lie inside the domain")
    cov = symmetrize(np.atleast_2d(np.asarray(mean_dyn_cov, dtype=float)))
    check_psd(cov, what="mean-dynamics covariance")
    dom = partition.domain
    goal_in = [b for g in goal_boxes if (b := g.intersect(dom)) is not None]
    crit_in = [b for c in critical_boxes if (b := c.intersect(dom)) is not None]

    off = cov - np.diag(np.diag(cov))
    M = _factor(cov)
    if not np.any(off):
        masses, p_goal, p_crit, p_absorb = _exact_region_masses(
            d, ("diag", np.diag(cov)), partition, goal_in, crit_in)
    elif M.shape[1] <= 1:
        direction = M[:, 0] if M.shape[1] == 1 else np.zeros(d.size)
        masses, p_goal, p_crit, p_absorb = _exact_region_masses(
            d, ("line", direction), partition, goal_in, crit_in)
    else:
        masses, p_goal, p_crit, p_absorb = _sampled_region_masses(
            d, cov, partition, goal_in, crit_in, cfg)

    regions = {int(j): to_interval(float(masses[j]), cfg)
               for j in np.flatnonzero(masses > 0.0)}
    return SuccessorRow(
        absorbing=to_interval(p_absorb, cfg),
        goal=to_interval(p_goal, cfg),
        critical=to_interval(p_crit, cfg),
        regions=regions,
    )
