"""Scaling-limit closed forms and path simulators.

Closed forms for the boundary plateau beta(v), the arc-pattern
probability P(v) and the boundary partition function; Bessel paths with
Euler or exact one-step transitions; the driving process of a single
exploration-tree branch; the four-point diffusion for (M, Y, W); Loewner
evolution with rightmost-point tracking; and driving-function extraction
from planar curves by unzipping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "KAPPA", "RHO", "SdeParams", "DrivingPath", "PartitionPoint",
    "beta_of_v", "crossing_prob", "partition_Z", "sle_kz_drift",
    "bessel_path", "sle_tree_branch", "FourPointPaths", "fourpoint_sde",
    "LoewnerResult", "loewner_evolve", "loewner_forward", "driving_extract",
]

KAPPA = 16.0 / 3.0
RHO = KAPPA - 6.0

_SQ3 = math.sqrt(3.0)


def _unit_interval(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError("cross-ratio must lie in [0, 1]")
    return a


def beta_of_v(v):
    """Boundary plateau level at cross-ratio v.

    Evaluated as v/(1+sqrt(1-v))^2, the stable form of
    (-v+2-2*sqrt(1-v))/v with the removable singularity at v=0 filled;
    equals tan(x/2)^2 for v = sin(x)^2.
    """
    a = _unit_interval(v)
    out = a / (1.0 + np.sqrt(1.0 - a)) ** 2
    return out.item() if out.ndim == 0 else out


def crossing_prob(v):
    """Probability of the internal arc pattern pairing (ad)(cb) at cross-ratio v."""
    a = _unit_interval(v)
    p = np.sqrt(1.0 - np.sqrt(1.0 - a))
    q = np.sqrt(1.0 - np.sqrt(a))
    out = p / (p + q)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class PartitionPoint:
    """Three ordered boundary points u < v < w with the fourth at infinity."""
    u: float
    v: float
    w: float

    def __post_init__(self):
        if not (self.u < self.v < self.w):
            raise ValueError("points must satisfy u < v < w")

    @property
    def x(self) -> float:
        return self.v - self.u

    @property
    def y(self) -> float:
        return self.w - self.v

    @property
    def m(self) -> float:
        # sqrt(1 + y/x) - sqrt(y/x), written stably for small x
        return math.sqrt(self.x) / (math.sqrt(self.x + self.y) + math.sqrt(self.y))


def partition_Z(p: PartitionPoint) -> float:
    """Boundary partition function, normalized to a finite limit for large w."""
    m = p.m
    return 1.0 / (p.y ** 0.125 * (m * m + 1.0) ** 0.25 * m ** 0.25)


def sle_kz_drift(u: float, v: float, w: float, rel_h: float = 1e-6) -> float:
    """Drift coefficient kappa * d/du log Z, by central difference."""
    h = rel_h * max(1.0, v - u)
    hi = math.log(partition_Z(PartitionPoint(u + h, v, w)))
    lo = math.log(partition_Z(PartitionPoint(u - h, v, w)))
    return KAPPA * (hi - lo) / (2.0 * h)


@dataclass(frozen=True)
class SdeParams:
    dt: float
    T: float
    seed: int = 0
    scheme: str = "euler"

    def __post_init__(self):
        if not 0.0 < self.dt <= self.T:
            raise ValueError("need 0 < dt <= T")
        if self.scheme not in ("euler", "exact-bessel"):
            raise ValueError("scheme must be 'euler' or 'exact-bessel'")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


@dataclass(frozen=True)
class DrivingPath:
    """Driving point U, rightmost hull image V, optional third point W.

    The step-jump component Lambda accumulates the right-jumps of the
    tracked rightmost point; it is non-decreasing and starts at zero.
    """
    times: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Lambda: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.times)
        for name in ("U", "V", "Lambda"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length must match times")
        if self.W is not None and len(self.W) != n:
            raise ValueError("W length must match times")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        tol = 1e-9 * max(1.0, float(np.max(np.abs(self.V))))
        if np.any(self.V - self.U < -tol):
            raise ValueError("V must stay right of U")
        if self.W is not None and np.any(self.W - self.V < -tol):
            raise ValueError("W must stay right of V")
        if abs(float(self.Lambda[0])) > tol or np.any(np.diff(self.Lambda) < -tol):
            raise ValueError("Lambda must be non-decreasing from 0")

    @property
    def X(self) -> np.ndarray:
        return self.V - self.U

    @property
    def Y(self) -> np.ndarray | None:
        return None if self.W is None else self.W - self.V

    @property
    def T(self) -> float:
        return float(self.times[-1])


def _besq_paths(rng, z0: np.ndarray, dim: float, dt: float, n_steps: int,
                scheme: str) -> np.ndarray:
    """Squared-process paths, shape (n_paths, n_steps + 1)."""
    z = np.array(z0, dtype=float)
    out = np.empty((z.size, n_steps + 1))
    out[:, 0] = z
    for k in range(1, n_steps + 1):
        if scheme == "exact-bessel":
            # exact one-step transition: scaled noncentral chi-square,
            # i.e. a Poisson mixture of Gamma variables
            z = dt * rng.noncentral_chisquare(dim, z / dt)
        else:
            dz = dim * dt + 2.0 * np.sqrt(z) * rng.normal(0.0, math.sqrt(dt), z.shape)
            z = np.maximum(z + dz, 0.0)
        out[:, k] = z
    return out


def bessel_path(x0: float, dim: float, params: SdeParams,
                n_paths: int = 1) -> np.ndarray:
    """Nonnegative Bessel path(s) of the given dimension started at x0.

    Returns shape (n_steps+1,) for a single path and (n_paths, n_steps+1)
    otherwise.
    """
    if x0 < 0.0:
        raise ValueError("x0 must be nonnegative")
    if not 1.0 < dim <= 2.0:
        raise ValueError("dimension restricted to (1, 2]")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    rng = np.random.default_rng(params.seed)
    z0 = np.full(n_paths, float(x0) ** 2)
    x = np.sqrt(_besq_paths(rng, z0, dim, params.dt, params.n_steps, params.scheme))
    return x[0] if n_paths == 1 else x


def sle_tree_branch(params: SdeParams, x0: float = 0.0,
                    v0: float = 0.0) -> DrivingPath:
    """Driving triple of a single exploration-tree branch.

    The gap X = V - U is 4/sqrt(3) times a Bessel path of dimension 3/2,
    V follows the hull flow 2/X, and the step-jump component vanishes by
    construction.
    """
    scale = 4.0 / _SQ3
    r = bessel_path(x0 / scale, 1.5, params)
    x = scale * r
    n = params.n_steps
    dt = params.T / n
    times = np.linspace(0.0, params.T, n + 1)
    xm = 0.5 * (x[1:] + x[:-1])
    floor = 1e-12 * max(1.0, float(x.max()))
    v = np.concatenate(([v0], v0 + np.cumsum(2.0 * dt / np.maximum(xm, floor))))
    return DrivingPath(times, v - x, v, np.zeros(n + 1))


def _fp_sigma(m: float, y: float) -> float:
    return (1.0 - m * m) ** 3 / (2.0 * _SQ3 * y * abs(m) * (m * m + 1.0))


def _fp_x(m: float, y: float) -> float:
    return 4.0 * y * m * m / (1.0 - m * m) ** 2


def _fp_absm(x: float, y: float) -> float:
    return math.sqrt(x) / (math.sqrt(x + y) + math.sqrt(y))


def _fp_wdot(m: float, y: float) -> float:
    return (2.0 / y) * ((m * m - 1.0) / (m * m + 1.0)) ** 2


def _fp_xdrift(m: float, y: float) -> float:
    m2 = m * m
    return ((3.0 * m2 * m2 + 2.0 * m2 + 1.0) * (m2 - 1.0) ** 2
            / (3.0 * y * m2 * (m2 + 1.0) ** 2))


@dataclass(frozen=True)
class FourPointPaths:
    times: np.ndarray
    M: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    U: np.ndarray
    V: np.ndarray
    X: np.ndarray
    dB: np.ndarray                 # Brownian increment consumed per grid step
    stopped_at: float | None       # time the Y floor froze the path, if any

    @property
    def driving(self) -> DrivingPath:
        return DrivingPath(self.times, self.U, self.V,
                           np.zeros(len(self.times)), self.W)


def fourpoint_sde(M0: float, Y0: float, W0: float, params: SdeParams,
                  y_floor: float | None = None,
                  sub_dt_factor: float = 1e-3) -> FourPointPaths:
    """Evolve the four-point diffusion (M, Y, W) on a regular grid.

    M diffuses with the unique volatility that keeps both M and the
    reconstructed second observable coefficient driftless; Y and W follow
    their ordinary differential equations.  Steps that would carry M
    across zero are re-taken in the gap variable X with reflection and a
    fair-coin sign, using the same noise.  The path freezes once Y
    reaches the floor (a stopped martingale stays a martingale).
    """
    if not abs(M0) < 1.0:
        raise ValueError("need |M0| < 1")
    if Y0 <= 0.0:
        raise ValueError("need Y0 > 0")
    if y_floor is None:
        y_floor = 0.01 * Y0
    n = params.n_steps
    dt = params.T / n
    min_dt = sub_dt_factor * dt
    rng = np.random.default_rng(params.seed)

    times = np.linspace(0.0, params.T, n + 1)
    M = np.empty(n + 1)
    Y = np.empty(n + 1)
    W = np.empty(n + 1)
    dB = np.zeros(n)
    M[0], Y[0], W[0] = M0, Y0, W0
    m, y, w = float(M0), float(Y0), float(W0)
    stopped_at: float | None = None

    for k in range(1, n + 1):
        db_acc = 0.0
        t_rem = dt
        while t_rem > 1e-12 * dt and stopped_at is None:
            sig = _fp_sigma(m, y) if m != 0.0 else math.inf
            h_safe = (0.25 * abs(m) / sig) ** 2 if math.isfinite(sig) else 0.0
            if h_safe >= min_dt:
                h = min(t_rem, h_safe)
                db = rng.normal(0.0, math.sqrt(h))
                db_acc += db
                m_new = m + sig * db
                if m_new * m > 0.0 and abs(m_new) < 1.0:
                    x = _fp_x(m, y)
                    wd = _fp_wdot(m, y)
                    y_new = y + (wd - 2.0 / x) * h
                    if y_new <= y_floor:
                        stopped_at = times[k - 1] + (dt - t_rem)
                        break
                    w += wd * h
                    y = y_new
                    m = m_new
                    t_rem -= h
                    continue
                # proposed step crosses zero or leaves (-1,1): re-take it
                # in the gap variable with the same noise
            else:
                h = min(t_rem, min_dt)
                db = rng.normal(0.0, math.sqrt(h))
                db_acc += db
            x = _fp_x(m, y)
            x_scale = (4.0 / _SQ3) * math.sqrt(h)
            drift = (4.0 / 3.0) / x_scale if x < x_scale else _fp_xdrift(m, y)
            x_new = x + (4.0 / _SQ3) * db + drift * h
            crossed = x_new <= 0.0
            x_new = abs(x_new) if x_new != 0.0 else 1e-300
            wd = _fp_wdot(m, y)
            x_mid = max(0.5 * (x + x_new), 1e-300)
            y_new = y + (wd - 2.0 / x_mid) * h
            if y_new <= y_floor:
                stopped_at = times[k - 1] + (dt - t_rem)
                break
            w += wd * h
            y = y_new
            s = (1.0 if rng.random() < 0.5 else -1.0) if crossed \
                else math.copysign(1.0, m if m != 0.0 else 1.0)
            m = s * _fp_absm(x_new, y)
            t_rem -= h
        M[k], Y[k], W[k] = m, y, w
        dB[k - 1] = db_acc

    X = 4.0 * Y * M * M / (1.0 - M * M) ** 2
    V = W - Y
    U = V - X
    return FourPointPaths(times, M, Y, W, U, V, X, dB, stopped_at)


def _sqrt_h(z: np.ndarray) -> np.ndarray:
    """Square root branch with nonnegative imaginary part."""
    s = np.sqrt(z.astype(complex, copy=False))
    return np.where(s.imag < 0.0, -s, s)


@dataclass(frozen=True)
class LoewnerResult:
    times: np.ndarray
    trace: np.ndarray
    U: np.ndarray
    V: np.ndarray
    Lambda: np.ndarray
    dt: float


def _driving_fn(driving, T):
    if isinstance(driving, DrivingPath):
        horizon = driving.T if T is None else min(float(T), driving.T)
        tarr, uarr = driving.times, driving.U

        def ufn(s: float) -> float:
            return float(np.interp(s, tarr, uarr))

        return ufn, horizon
    if T is None:
        raise ValueError("a horizon T is required for callable driving")
    return driving, float(T)


def loewner_evolve(driving: DrivingPath | Callable[[float], float],
                   dt_out: float, T: float | None = None) -> LoewnerResult:
    """Evolve the half-plane flow for piecewise-constant driving.

    Composes exact one-step slit maps.  The trace is the backward
    composition evaluated at the driving point; the rightmost swallowed
    real point is tracked through the same maps, with its forced right
    jumps accumulated into Lambda.
    """
    ufn, horizon = _driving_fn(driving, T)
    n = max(1, int(round(horizon / dt_out)))
    dt = horizon / n
    times = np.linspace(0.0, horizon, n + 1)
    u_mid = np.array([ufn((j + 0.5) * dt) for j in range(n)])
    u_grid = np.array([ufn(t) for t in times])

    eps = 10.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(u_grid))))
    v = u_grid[0] + eps
    V = np.empty(n + 1)
    lam = np.zeros(n + 1)
    V[0] = v
    for j in range(n):
        u = u_mid[j]
        jump = max(0.0, u + eps - v)
        v = max(v, u + eps)
        v = u + math.sqrt((v - u) ** 2 + 4.0 * dt)
        lam[j + 1] = lam[j] + jump
        V[j + 1] = v

    tips = u_grid[1:].astype(complex)
    for j in range(n - 1, -1, -1):
        u = u_mid[j]
        w = tips[j:]
        tips[j:] = u + _sqrt_h((w - u) ** 2 - 4.0 * dt)
    if not np.all(np.isfinite(tips)):
        raise RuntimeError("trace composition became unstable; reduce dt_out")
    tips = tips.real + 1j * np.maximum(tips.imag, 0.0)
    trace = np.concatenate(([complex(u_grid[0])], tips))
    return LoewnerResult(times, trace, u_grid, V, lam, dt)


def loewner_forward(driving: DrivingPath | Callable[[float], float],
                    dt_out: float, z, t_from: float = 0.0,
                    t_to: float | None = None):
    """Apply the forward slit maps for [t_from, t_to] to the point(s) z."""
    ufn, horizon = _driving_fn(driving, t_to)
    if t_to is None:
        t_to = horizon
    if t_to < t_from:
        raise ValueError("need t_from <= t_to")
    n = max(1, int(round((t_to - t_from) / dt_out)))
    dt = (t_to - t_from) / n
    w = np.asarray(z, dtype=complex)
    scalar = w.ndim == 0
    w = np.atleast_1d(w).copy()
    for j in range(n):
        u = ufn(t_from + (j + 0.5) * dt)
        w = u + _sqrt_h((w - u) ** 2 + 4.0 * dt)
    return complex(w[0]) if scalar else w


def driving_extract(curve, stop_capacity: float | None = None) -> DrivingPath:
    """Unzip a polyline from the real line into a driving sequence.

    Vertices are successively mapped to the real line by exact slit maps;
    the accumulated images give (capacity, driving) samples.  Vertices
    whose image already lies on the real line add no capacity and are
    skipped.  The image of the rightmost swallowed real point rides
    along, its right jumps accumulating into Lambda.
    """
    pts = np.array(curve, dtype=complex)
    if len(pts) < 2:
        raise ValueError("need at least two curve points")
    scale = max(1.0, float(np.max(np.abs(pts))))
    if abs(pts[0].imag) > 1e-9 * scale:
        raise ValueError("curve must start on the real line")
    if np.any(pts[1:].imag < -1e-9 * scale):
        raise ValueError("curve must stay in the upper half-plane")

    eps = 10.0 * np.finfo(float).eps * scale
    u0 = float(pts[0].real)
    times = [0.0]
    U = [u0]
    V = [u0 + eps]
    lam = [0.0]
    v = u0 + eps
    t = 0.0
    for k in range(1, len(pts)):
        w = pts[k]
        tau = max(w.imag, 0.0) ** 2 / 4.0
        if tau <= 0.0:
            continue
        u = float(w.real)
        t += tau
        jump = max(0.0, u + eps - v)
        v = max(v, u + eps)
        v = u + math.sqrt((v - u) ** 2 + 4.0 * tau)
        if k + 1 < len(pts):
            rem = pts[k + 1:]
            pts[k + 1:] = u + _sqrt_h((rem - u) ** 2 + 4.0 * tau)
        times.append(t)
        U.append(u)
        V.append(v)
        lam.append(lam[-1] + jump)
        if stop_capacity is not None and t >= stop_capacity:
            break
    if len(times) < 2:
        raise ValueError("curve has no interior points")
    return DrivingPath(np.array(times), np.array(U), np.array(V), np.array(lam))
