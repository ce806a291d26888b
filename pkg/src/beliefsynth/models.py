"""Linear Gaussian system model, boxes, and multi-step rediscretization.

All value objects are immutable after construction (arrays are copied and
frozen), so they can be shared freely across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, RejectedInputError

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def min_eigenvalue(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(m))[0])


def check_psd(m: np.ndarray, tol: float = PSD_TOL, what: str = "matrix") -> None:
    lam = min_eigenvalue(m)
    if lam < -tol:
        raise ConfigurationError(f"{what} is not positive semi-definite (min eigenvalue {lam:.3e})")


@dataclass(frozen=True)
class Box:
    """Axis-aligned hyperrectangle given by per-axis lower/upper bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _frozen(np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", _frozen(np.atleast_1d(self.hi)))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ConfigurationError("box bounds must be 1-D arrays of equal length")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def is_degenerate(self) -> bool:
        return bool(np.any(self.hi <= self.lo))

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        return np.all(x >= self.lo - tol, axis=-1) & np.all(x <= self.hi + tol, axis=-1)

    def vertices(self) -> np.ndarray:
        """All 2^n corner points, shape (2^n, n)."""
        n = self.dim
        corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in zip(self.lo, self.hi)],
                                       indexing="ij")).reshape(n, -1).T
        return corners

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi <= lo):
            return None
        return Box(lo, hi)

    def grow(self, eps: float) -> "Box":
        return Box(self.lo - eps, self.hi + eps)

    def shrink(self, eps: float) -> "Box | None":
        lo, hi = self.lo + eps, self.hi - eps
        if np.any(hi <= lo):
            return None
        return Box(lo, hi)

    def stack(self, copies: int) -> "Box":
        return Box(np.tile(self.lo, copies), np.tile(self.hi, copies))


@dataclass(frozen=True)
class GaussianDist:
    """Gaussian with mean vector and symmetric PSD covariance.

    The covariance is symmetrized on construction; inputs asymmetric beyond
    1e-12 (relative) or indefinite beyond -1e-10 are rejected.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.atleast_2d(np.array(self.cov, dtype=float))
        scale = max(1.0, float(np.abs(cov).max()) if cov.size else 1.0)
        if np.abs(cov - cov.T).max(initial=0.0) > SYMMETRY_TOL * scale:
            raise ConfigurationError("covariance is not symmetric")
        cov = symmetrize(cov)
        if cov.shape != (mean.size, mean.size):
            raise ConfigurationError("covariance shape does not match mean dimension")
        check_psd(cov, what="covariance")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time linear system x+ = A x + B u + w, y = C x + v.

    Process noise w is Gaussian (mean and covariance from `process_noise`);
    measurement noise v is zero-mean Gaussian with covariance `meas_noise_cov`.
    `control_box` is the admissible input set, `state_domain` the workspace.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    process_noise: GaussianDist
    meas_noise_cov: np.ndarray
    control_box: Box
    state_domain: Box

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        C = np.atleast_2d(np.array(self.C, dtype=float))
        R = np.atleast_2d(np.array(self.meas_noise_cov, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigurationError("A must be square")
        if B.shape[0] != n:
            raise ConfigurationError("B row count must match state dimension")
        if C.shape[1] != n:
            raise ConfigurationError("C column count must match state dimension")
        q = C.shape[0]
        if R.shape != (q, q):
            raise ConfigurationError("measurement noise covariance must be q x q")
        check_psd(R, what="measurement noise covariance")
        if self.process_noise.dim != n:
            raise ConfigurationError("process noise dimension must match state dimension")
        if self.control_box.dim != B.shape[1]:
            raise ConfigurationError("control box dimension must match input dimension")
        if self.state_domain.dim != n:
            raise ConfigurationError("state domain dimension must match state dimension")
        if self.control_box.is_degenerate():
            raise ConfigurationError("control box is degenerate")
        if self.state_domain.is_degenerate():
            raise ConfigurationError("state domain is degenerate")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "meas_noise_cov", _frozen(symmetrize(R)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class MultirateSystem:
    """`delta` merged steps of a base system, with stacked inputs and
    accumulated process noise."""

    base: LtiSystem
    delta: int
    Abar: np.ndarray
    Bbar: np.ndarray
    acc_noise: GaussianDist
    control_box_bar: Box

    def as_system(self) -> LtiSystem:
        """Equivalent single-step system over the merged time scale."""
        return LtiSystem(
            A=self.Abar,
            B=self.Bbar,
            C=self.base.C,
            process_noise=self.acc_noise,
            meas_noise_cov=self.base.meas_noise_cov,
            control_box=self.control_box_bar,
            state_domain=self.base.state_domain,
        )


@dataclass(frozen=True)
class BenchmarkSpec:
    """A named reach-avoid problem instance: system, horizon, regions."""

    name: str
    system: LtiSystem
    initial_belief: GaussianDist
    horizon: int
    goal_regions: tuple[Box, ...] = ()
    critical_regions: tuple[Box, ...] = ()
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "goal_regions", tuple(self.goal_regions))
        object.__setattr__(self, "critical_regions", tuple(self.critical_regions))
        if self.horizon < 1:
            raise ConfigurationError("horizon must be a positive integer")
        if self.noise_scale <= 0:
            raise ConfigurationError("noise scale must be positive")
        if self.initial_belief.dim != self.system.n:
            raise ConfigurationError("initial belief dimension must match the system")
        for g in self.goal_regions:
            for c in self.critical_regions:
                if g.intersect(c) is not None:
                    raise ConfigurationError("goal and critical regions must be disjoint")
        dom = self.system.state_domain
        for b in self.goal_regions + self.critical_regions:
            if b.intersect(dom) is None:
                raise ConfigurationError("every goal/critical region must meet the state domain")


def step_dynamics(sys: LtiSystem, x, u, w) -> np.ndarray:
    """One step of the process dynamics: A x + B u + w."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if x.size != sys.n or u.size != sys.p or w.size != sys.n:
        raise ConfigurationError("dimension mismatch in step_dynamics")
    if not sys.control_box.contains(u, tol=1e-12):
        raise RejectedInputError(f"control {u} outside control box")
    return sys.A @ x + sys.B @ u + w


def measure(sys: LtiSystem, x, v) -> np.ndarray:
    """One measurement: C x + v."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if x.size != sys.n or v.size != sys.q:
        raise ConfigurationError("dimension mismatch in measure")
    return sys.C @ x + v


def rediscretize(sys: LtiSystem, delta: int) -> MultirateSystem:
    """Merge `delta` consecutive steps into one.

    The merged system has A^delta as transition matrix, the horizontally
    stacked [A^{delta-1} B, ..., B] as input matrix acting on the stacked
    input vector, and process noise accumulated symmetrically:
    sum_i A^{delta-i} Sigma_w (A^{delta-i})^T.
    """
    if delta < 1:
        raise RejectedInputError("delta must be >= 1")
    A, B = sys.A, sys.B
    n = sys.n
    powers = [np.eye(n)]
    for _ in range(delta - 1):
        powers.append(A @ powers[-1])
    # powers[j] = A^j; block for input at step i (1-based) is A^{delta-i} B
    Abar = A @ powers[-1]
    blocks = [powers[delta - i] @ B for i in range(1, delta + 1)]
    Bbar = np.hstack(blocks)
    mu_w, Sigma_w = sys.process_noise.mean, sys.process_noise.cov
    acc_mean = sum(powers[delta - i] @ mu_w for i in range(1, delta + 1))
    acc_cov = sum(powers[delta - i] @ Sigma_w @ powers[delta - i].T for i in range(1, delta + 1))
    return MultirateSystem(
        base=sys,
        delta=delta,
        Abar=_frozen(Abar),
        Bbar=_frozen(Bbar),
        acc_noise=GaussianDist(acc_mean, symmetrize(acc_cov)),
        control_box_bar=sys.control_box.stack(delta),
    )
