"""State-space partition, backward reachable sets, and region augmentation.

Region containment in a backward reachable set is decided exactly: the set of
belief means that can be driven onto a target d is the affine preimage of the
control-image polytope {B u : u in U}, which is convex, so a region is
contained iff all of its vertices are. The control image is a zonotope and
does not depend on d; its halfspace form is computed once per system and
reused for every (region, target) query. Point queries go through a
feasibility LP instead, giving an independent second route.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import ConfigurationError, RejectedInputError
from .models import Box, LtiSystem, MultirateSystem

ABSORBING = -1
FEASIBILITY_TOL = 1e-9


def _box_halfspaces(box: Box) -> tuple[np.ndarray, np.ndarray]:
    n = box.dim
    M = np.vstack([np.eye(n), -np.eye(n)])
    b = np.concatenate([box.hi, -box.lo])
    return M, b


@dataclass(frozen=True)
class Region:
    """One partition cell: box form, halfspace form M x <= b, and center."""

    index: int
    box: Box
    halfspaces: tuple[np.ndarray, np.ndarray]
    center: np.ndarray


@dataclass(frozen=True)
class Partition:
    """Uniform grid over an axis-aligned domain, ordered row-major with the
    last axis fastest. Everything outside the domain is the absorbing region."""

    domain: Box
    counts: tuple[int, ...]
    regions: tuple[Region, ...]
    centers: np.ndarray        # (R, n)
    lowers: np.ndarray         # (R, n)
    uppers: np.ndarray         # (R, n)
    vertices: np.ndarray       # (R, 2^n, n)

    @property
    def size(self) -> int:
        return len(self.regions)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def cell_width(self) -> np.ndarray:
        return self.domain.width / np.asarray(self.counts, dtype=float)


def build_partition(domain: Box, counts) -> Partition:
    """Uniform grid with `counts[i]` cells along axis i."""
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) != domain.dim:
        raise ConfigurationError("counts must have one entry per axis")
    if any(c < 1 for c in counts):
        raise RejectedInputError("counts must be >= 1 per axis")
    if domain.is_degenerate():
        raise ConfigurationError("domain is degenerate")
    n = domain.dim
    width = domain.width / np.asarray(counts, dtype=float)
    grids = [np.arange(c) for c in counts]
    multi = np.array(np.meshgrid(*grids, indexing="ij")).reshape(n, -1).T  # (R, n)
    lowers = domain.lo + multi * width
    uppers = lowers + width
    centers = 0.5 * (lowers + uppers)
    corner_signs = np.array(list(itertools.product([0, 1], repeat=n)), dtype=float)
    vertices = lowers[:, None, :] + corner_signs[None, :, :] * width
    regions = tuple(
        Region(index=i, box=Box(lowers[i], uppers[i]),
               halfspaces=_box_halfspaces(Box(lowers[i], uppers[i])),
               center=centers[i])
        for i in range(len(lowers))
    )
    return Partition(domain=domain, counts=counts, regions=regions,
                     centers=centers, lowers=lowers, uppers=uppers, vertices=vertices)


def region_of(partition: Partition, point) -> int:
    """Index of the cell containing `point`, or ABSORBING outside the domain.

    Cells are half-open [lo, hi) except the topmost cell per axis, which is
    closed, so the mapping is total on the domain and deterministic on
    boundaries.
    """
    return int(region_of_many(partition, np.asarray(point, dtype=float)[None, :])[0])


def region_of_many(partition: Partition, points: np.ndarray) -> np.ndarray:
    """Vectorized region_of for an (m, n) array of points."""
    dom = partition.domain
    counts = np.asarray(partition.counts)
    width = partition.cell_width
    inside = np.all(points >= dom.lo, axis=1) & np.all(points <= dom.hi, axis=1)
    idx = np.floor((points - dom.lo) / width).astype(np.int64)
    np.clip(idx, 0, counts - 1, out=idx)
    flat = np.ravel_multi_index(idx.T, counts, mode="clip")
    return np.where(inside, flat, ABSORBING)


def control_image_halfspaces(Bbar: np.ndarray, control_box: Box,
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Halfspace form {z : G z <= h} of the zonotope {B u : u in box}.

    Requires full row rank (the set must have non-empty interior). Facet
    normals come from the null spaces of (n-1)-subsets of the generators.
    """
    n, m = Bbar.shape
    if np.linalg.matrix_rank(Bbar) < n:
        raise ConfigurationError(
            "input matrix is not full row rank; the backward reachable set has "
            "empty interior. Group multiple time steps (larger delta) to fix this."
        )
    center = Bbar @ control_box.center
    gens = Bbar * (0.5 * control_box.width)[None, :]  # columns scaled to half-width
    rows, offs = [], []
    if n == 1:
        normals = [np.array([1.0])]
    else:
        normals = []
        for subset in itertools.combinations(range(m), n - 1):
            sub = gens[:, subset]
            if np.linalg.matrix_rank(sub) < n - 1:
                continue
            # orthogonal complement of the chosen generators
            _, _, vt = np.linalg.svd(sub.T, full_matrices=True)
            v = vt[-1]
            norm = np.linalg.norm(v)
            if norm < 1e-14:
                continue
            normals.append(v / norm)
    seen = set()
    for v in normals:
        key = tuple(np.round(v if v[np.argmax(np.abs(v))] > 0 else -v, 12))
        if key in seen:
            continue
        seen.add(key)
        reach = float(np.abs(v @ gens).sum())
        rows.extend([v, -v])
        offs.extend([v @ center + reach, -(v @ center) + reach])
    return np.array(rows), np.array(offs)


@dataclass(frozen=True)
class BackwardSet:
    """Belief means from which some admissible control drives the predicted
    mean exactly onto `target` under the (possibly merged) system."""

    target: np.ndarray
    delta: int
    system: LtiSystem

    @classmethod
    def of(cls, system: LtiSystem | MultirateSystem, target) -> "BackwardSet":
        if isinstance(system, MultirateSystem):
            return cls(target=np.asarray(target, dtype=float), delta=system.delta,
                       system=system.as_system())
        return cls(target=np.asarray(target, dtype=float), delta=1, system=system)


def backward_reachable_contains(bset: BackwardSet, mu) -> bool:
    """Feasibility LP: exists u in the control box with B u = d - A mu - mu_w."""
    sys = bset.system
    mu = np.asarray(mu, dtype=float)
    rhs = bset.target - sys.A @ mu - sys.process_noise.mean
    if np.linalg.matrix_rank(sys.B) < sys.n:
        raise ConfigurationError(
            "input matrix is not full row rank; group multiple time steps "
            "(larger delta) so the backward reachable set has interior."
        )
    res = scipy.optimize.linprog(
        c=np.zeros(sys.p),
        A_eq=sys.B, b_eq=rhs,
        bounds=list(zip(sys.control_box.lo, sys.control_box.hi)),
        method="highs",
        options={"primal_feasibility_tolerance": FEASIBILITY_TOL},
    )
    return bool(res.status == 0)


def region_contained_in_backward_set(bset: BackwardSet, region: Region) -> bool:
    """True iff every vertex of the region is backward reachable. Sufficient
    and necessary because the feasible set of means is convex."""
    G, h = control_image_halfspaces(bset.system.B, bset.system.control_box)
    verts = region.box.vertices()
    z = bset.target - bset.system.process_noise.mean - verts @ bset.system.A.T
    return bool(np.all(z @ G.T <= h + FEASIBILITY_TOL * np.maximum(1.0, np.abs(h))))


def enabled_matrix(partition: Partition, targets: np.ndarray,
                   system: LtiSystem, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """Boolean (L, R) matrix: targets[l] reachable from every point of region r.

    Equivalent to region_contained_in_backward_set over all pairs, evaluated
    through the shared control-image halfspaces with a bounding-box prefilter.
    """
    G, h = control_image_halfspaces(system.B, system.control_box)
    mu_w = system.process_noise.mean
    R = partition.size
    n = partition.dim
    verts = partition.vertices.reshape(-1, n)              # (R*2^n, n)
    Av = verts @ system.A.T                                # (R*2^n, n)
    W = Av @ G.T                                           # (R*2^n, F)
    Wmin = W.reshape(R, -1, G.shape[0]).min(axis=1)        # (R, F)
    slack = h + tol * np.maximum(1.0, np.abs(h))
    # prefilter: per-axis range of A v per region vs the zonotope bounding box
    Av_r = Av.reshape(R, -1, n)
    Av_lo, Av_hi = Av_r.min(axis=1), Av_r.max(axis=1)      # (R, n)
    gens = system.B * (0.5 * system.control_box.width)[None, :]
    z_center = system.B @ system.control_box.center
    z_span = np.abs(gens).sum(axis=1)
    out = np.zeros((len(targets), R), dtype=bool)
    box_tol = tol * np.maximum(1.0, np.abs(z_center) + z_span)
    for l, d in enumerate(targets):
        t = d - mu_w
        # need z = t - A v inside [z_center - span, z_center + span] for all v
        lo_ok = np.all(t - Av_hi >= z_center - z_span - box_tol, axis=1)
        hi_ok = np.all(t - Av_lo <= z_center + z_span + box_tol, axis=1)
        cand = np.flatnonzero(lo_ok & hi_ok)
        if cand.size == 0:
            continue
        tG = G @ t
        out[l, cand] = np.all(tG[None, :] - Wmin[cand] <= slack[None, :], axis=1)
    return out


def subtract_boxes(base: Box, removals) -> list[Box]:
    """Decompose base \\ (union of removals) into disjoint boxes by axis
    sweeping. At most 2n pieces per removal per surviving piece."""
    pieces = [base]
    for r in removals:
        nxt: list[Box] = []
        for piece in pieces:
            cap = piece.intersect(r)
            if cap is None:
                nxt.append(piece)
                continue
            lo = piece.lo.copy()
            hi = piece.hi.copy()
            for ax in range(piece.dim):
                if lo[ax] < cap.lo[ax]:
                    left_hi = hi.copy()
                    left_hi[ax] = cap.lo[ax]
                    nxt.append(Box(lo.copy(), left_hi))
                    lo[ax] = cap.lo[ax]
                if cap.hi[ax] < hi[ax]:
                    right_lo = lo.copy()
                    right_lo[ax] = cap.hi[ax]
                    nxt.append(Box(right_lo, hi.copy()))
                    hi[ax] = cap.hi[ax]
        pieces = nxt
    return pieces


@dataclass(frozen=True)
class AugmentedSpec:
    """Per-phase augmentation record: the error bound applied at each landing
    phase and the resulting contracted-goal / expanded-critical boxes.

    Construction checks that the augmented goal and critical sets stay
    disjoint phase by phase (they do whenever the originals are disjoint and
    both sides use the same bound).
    """

    beta: float
    epsilon: dict
    contracted_goal: dict
    expanded_critical: dict

    def __post_init__(self):
        for phase, goals in self.contracted_goal.items():
            for g in goals:
                for c in self.expanded_critical.get(phase, ()):
                    if g.intersect(c) is not None:
                        raise ConfigurationError(
                            f"augmented goal and critical overlap in phase {phase}")

    def at(self, phase) -> tuple[float, tuple, tuple]:
        return (self.epsilon[phase], self.contracted_goal[phase],
                self.expanded_critical[phase])

    def phases(self):
        return sorted(self.epsilon, key=str)


def augment_regions(goal, critical, epsilon: float) -> tuple[list[Box], list[Box]]:
    """Contract goal boxes and expand critical boxes by epsilon per axis.

    Goal boxes that vanish are dropped (the caller reports on it); expansion
    and contraction use the same bound, which keeps the augmented sets
    disjoint whenever the originals are.
    """
    if epsilon < 0:
        raise RejectedInputError("epsilon must be non-negative")
    contracted = []
    for g in goal:
        shrunk = g.shrink(epsilon)
        if shrunk is not None:
            contracted.append(shrunk)
    expanded = [c.grow(epsilon) for c in critical]
    return contracted, expanded
