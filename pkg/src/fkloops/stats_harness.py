"""Experiments tying the lattice ensembles to their scaling limits.

Crossing-probability validation against the closed form, driving-function
variance estimation of the branch diffusivity, annulus crossing and arm
counts with their per-sample combinatorial implications, curve/loop/tree
metrics, and finite-subtree approximation studies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components, maximum_flow
from scipy.special import ellipk

from .continuum_sle import KAPPA, crossing_prob, driving_extract
from .explorer import Branch, ExplorationTree, branch_to, branch_to_vertices
from .fk_sampler import ModelParams, sample
from .lattice_domain import Coord, Domain, Domain4
from .loop_rep import Loop, LoopEnsemble, boundary_loops, extract_loops

__all__ = [
    "Annulus", "ExperimentReport", "CrossingCounts", "TailReport",
    "SubtreeReport", "rect_to_v", "pattern_of", "arc_pattern_experiment",
    "kappa_experiment", "annulus_crossing_counts", "annulus_position",
    "arm_bound_ok", "crossing_tail_diagnostic", "curve_distance",
    "loop_distance", "tree_distance", "ensemble_distance",
    "branch_polyline", "loop_polyline", "subtree_branches",
    "subtree_approx_experiment",
]

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Annulus:
    z0: complex
    r: float
    R: float

    def __post_init__(self):
        if not 0.0 < self.r < self.R:
            raise ValueError("need 0 < r < R")

    def region(self, z: complex) -> int:
        """-1 inside the inner disc, 0 in the annulus, +1 outside."""
        d = abs(z - self.z0)
        if d <= self.r:
            return -1
        if d >= self.R:
            return 1
        return 0


@dataclass(frozen=True)
class ExperimentReport:
    estimate: float
    stderr: float
    n: int
    seed: int
    params: dict = field(default_factory=dict)
    target: float | None = None
    target_note: str | None = None

    def to_jsonable(self) -> dict:
        return {
            "estimate": self.estimate, "stderr": self.stderr, "n": self.n,
            "seed": self.seed, "params": self.params, "target": self.target,
            "target_note": self.target_note,
        }


def rect_to_v(aspect: float) -> float:
    """Cross-ratio image of the marked corners of a rectangle.

    For a width:height ratio `aspect` the rectangle maps to the half
    plane with the corners going to four real points; v is the image of
    the fourth corner when the other three are sent to 0, 1 and infinity.
    The marking convention is fixed so that v -> 1 as aspect -> infinity,
    making crossing_prob(rect_to_v(aspect)) the probability that the
    strands pair along the two forced arcs (the short sides).
    """
    if not (aspect > 0.0 and math.isfinite(aspect)):
        raise ValueError("aspect must be a positive real")
    if aspect < 1.0:
        # quarter turn of the rectangle swaps the arc roles
        return 1.0 - rect_to_v(1.0 / aspect)
    if aspect > 20.0:
        # complete-integral asymptotics; exact to well below double precision
        v = 1.0 - 16.0 * math.exp(-math.pi * aspect)
        return min(v, math.nextafter(1.0, 0.0))

    def ratio(k: float) -> float:
        return 2.0 * ellipk(k * k) / ellipk(1.0 - k * k) - aspect

    k = brentq(ratio, 0.05, 1.0 - 1e-14, xtol=1e-15, rtol=8.9e-16)
    return 1.0 - ((1.0 - k) / (1.0 + k)) ** 2


def _grid_z(c: Coord) -> complex:
    return complex((c[0] - c[1]) / 4.0, (c[0] + c[1]) / 4.0)


def _vertex_zs(domain: Domain) -> np.ndarray:
    return np.array([_grid_z(b) for b in domain.blacks])


def _arc_vertex_ids(domain4: Domain4, label: str) -> np.ndarray:
    # mark midpoints delimit the arcs, so the pedge under a mark straddles
    # two arcs and contributes no vertex to either
    d = domain4.domain
    marks = set(domain4.pos.values())
    ids: set[int] = set()
    for p in domain4.arcs[label]:
        if p in marks:
            continue
        pe = d.ring_pedge[p]
        if pe >= 0:
            a, b = d.pedges[pe]
            ids.add(a)
            ids.add(b)
    return np.fromiter(sorted(ids), dtype=np.int64)


def pattern_of(domain4: Domain4, config: np.ndarray) -> str:
    """Internal arc pattern of a configuration, by cluster connectivity.

    The strands pair (ad)(cb) exactly when a single open cluster touches
    both forced arcs; the fluctuating arcs enter only through their own
    ring edges, which are part of the configuration already.
    """
    d = domain4.domain
    config = np.asarray(config, dtype=np.uint8)
    pe = np.asarray(d.pedges, dtype=np.int64).reshape(-1, 2)
    mask = config == 1
    us, vs = pe[mask, 0], pe[mask, 1]
    m = sparse.coo_matrix((np.ones(len(us), dtype=np.int8), (us, vs)),
                          shape=(d.n_vertices, d.n_vertices))
    _, labels = connected_components(m, directed=False)
    ab = set(labels[_arc_vertex_ids(domain4, "ab")])
    cd = set(labels[_arc_vertex_ids(domain4, "cd")])
    return "(ad)(cb)" if ab & cd else "(ab)(cd)"


def _rect_aspect(domain: Domain) -> float:
    zs = _vertex_zs(domain)
    wi = zs.real.max() - zs.real.min()
    hj = zs.imag.max() - zs.imag.min()
    return wi / hj


def arc_pattern_experiment(domain4: Domain4, n: int, seed: int = 0,
                           burn_in: int = 200, thinning: int = 5,
                           ) -> ExperimentReport:
    """Monte Carlo arc-pattern probability against the closed form.

    Samples the marked law (the free-boundary measure on the free edges),
    measures the frequency of pattern (ab)(cd), and converts it to the
    probability under the weighting where the strands carry no loop
    weight.  The reference value is crossing_prob(rect_to_v(aspect)).
    """
    if n <= 0:
        raise ValueError("need n > 0 samples")
    d = domain4.domain
    configs = sample(d, ModelParams(), n=n, seed=seed, engine="auto",
                     burn_in=burn_in, thinning=thinning,
                     edges=domain4.free_pedges, wired=False)
    hits = sum(pattern_of(domain4, c) == "(ab)(cd)" for c in configs)
    q = hits / n
    se_q = math.sqrt(max(q * (1.0 - q), 1.0 / n) / n)
    denom = SQRT2 - (SQRT2 - 1.0) * q
    p_hat = q / denom
    se_p = SQRT2 * se_q / denom ** 2
    aspect = _rect_aspect(d)
    target = crossing_prob(rect_to_v(aspect))
    return ExperimentReport(
        estimate=p_hat, stderr=se_p, n=n, seed=seed,
        params={"aspect": aspect, "raw_frequency": q, "burn_in": burn_in,
                "thinning": thinning},
        target=float(target),
        target_note="closed form at the rectangle cross-ratio",
    )


def _bottom_position_near(domain: Domain, x: float) -> int:
    best, best_d = -1, math.inf
    P = len(domain.inner_boundary)
    for p in range(P):
        if domain.ring_pedge[p] < 0:
            continue
        z = _grid_z(tuple(int(t) for t in domain.position_vertex[p]))
        if z.imag > 1e-9:
            continue
        if abs(z.real - x) < best_d:
            best, best_d = p, abs(z.real - x)
    if best < 0:
        raise ValueError("no boundary midpoints on the bottom edge")
    return best


def kappa_experiment(domain: Domain, n: int, seed: int = 0,
                     stop_capacity: float | None = None,
                     window: tuple[float, float] = (0.05, 0.25),
                     n_grid: int = 40, burn_in: int = 100,
                     thinning: int = 3) -> ExperimentReport:
    """Branch diffusivity from the variance growth of the driving function.

    Samples configurations, walks the exploration branch between two
    bottom-edge points, extracts the driving function by unzipping, and
    regresses Var(U_t) on t over an early capacity window where the
    influence of the target and the far boundary is small (the remaining
    bias is the documented finite-domain effect).
    """
    if n < 10:
        raise ValueError("too few paths for a variance regression")
    zs = _vertex_zs(domain)
    x_lo, x_hi = zs.real.min(), zs.real.max()
    span = x_hi - x_lo
    root = _bottom_position_near(domain, x_lo + 0.5 * span)
    target = _bottom_position_near(domain, x_lo + 0.75 * span)
    z_root = _grid_z(tuple(int(t) for t in domain.position_vertex[root]))
    t_max = stop_capacity if stop_capacity is not None else (span / 16.0) ** 2
    trim_radius = 8.0 * math.sqrt(t_max)

    configs = sample(domain, ModelParams(), n=n, seed=seed, engine="cluster",
                     burn_in=burn_in, thinning=thinning, wired=False)
    t_grid = np.linspace(0.0, t_max, n_grid + 1)[1:]
    rows = []
    for cfg in configs:
        br = branch_to(domain, cfg, target, root)
        zz = np.array([_grid_z(v) for v in branch_to_vertices(domain, br)])
        zz = zz - z_root
        far = np.nonzero(np.abs(zz) > trim_radius)[0]
        if len(far):
            zz = zz[: far[0] + 50]
        drv = driving_extract(zz, stop_capacity=t_max)
        if drv.T < t_max:
            continue
        rows.append(np.interp(t_grid, drv.times, drv.U))
    if len(rows) < 10:
        raise ValueError("too few branches reached the capacity horizon")
    U = np.array(rows)

    lo, hi = window
    sel = (t_grid >= lo * t_max) & (t_grid <= hi * t_max)
    tw = t_grid[sel]

    def slope_of(block: np.ndarray) -> float:
        var = block.var(axis=0, ddof=1)[sel]
        A = np.column_stack([tw, np.ones_like(tw)])
        coef, *_ = np.linalg.lstsq(A, var, rcond=None)
        return float(coef[0])

    k_hat = slope_of(U)
    rng = np.random.Generator(np.random.Philox(seed + 1))
    boots = [slope_of(U[rng.integers(0, len(U), len(U))]) for _ in range(80)]
    se = float(np.std(boots, ddof=1))
    mean_u = float(U[:, sel].mean(axis=0)[-1])
    mean_u_se = float(U[:, sel][:, -1].std(ddof=1) / math.sqrt(len(U)))
    return ExperimentReport(
        estimate=k_hat, stderr=se, n=len(U), seed=seed,
        params={"t_max": t_max, "window": list(window),
                "mean_U_window_end": mean_u, "mean_U_stderr": mean_u_se,
                "root": root, "target": target},
        target=KAPPA, target_note="branch diffusivity 16/3",
    )


class CrossingCounts(NamedTuple):
    tree_crossings: int
    open_arms: int
    dual_arms: int


def _transit_count(zs: np.ndarray, annulus: Annulus) -> int:
    reg = np.zeros(len(zs), dtype=np.int8)
    d = np.abs(zs - annulus.z0)
    reg[d <= annulus.r] = -1
    reg[d >= annulus.R] = 1
    nz = np.nonzero(reg)[0]
    if len(nz) == 0:
        return 0
    seq = reg[nz]
    # cyclic sequence of inner/outer visits; transits are sign changes
    changes = int(np.count_nonzero(seq != np.roll(seq, 1)))
    return changes


def _disjoint_arms(zs: np.ndarray, edges: np.ndarray, annulus: Annulus) -> int:
    """Maximum number of vertex-disjoint crossings of the annulus."""
    d = np.abs(zs - annulus.z0)
    reg = np.zeros(len(zs), dtype=np.int8)
    reg[d <= annulus.r] = -1
    reg[d >= annulus.R] = 1
    if len(edges) == 0:
        return 0
    a, b = edges[:, 0], edges[:, 1]
    in_a = reg == 0
    mid = in_a[a] & in_a[b]
    src_m = (in_a[a] & (reg[b] == -1)) | (in_a[b] & (reg[a] == -1))
    snk_m = (in_a[a] & (reg[b] == 1)) | (in_a[b] & (reg[a] == 1))
    nodes = np.nonzero(in_a)[0]
    if len(nodes) == 0:
        return 0
    idx = -np.ones(len(zs), dtype=np.int64)
    idx[nodes] = np.arange(len(nodes))
    N = len(nodes)
    S, T = 2 * N, 2 * N + 1
    us, vs, cap = [], [], []
    # split nodes: in = 2i, out = 2i+1, unit capacity through each
    us.append(2 * np.arange(N))
    vs.append(2 * np.arange(N) + 1)
    cap.append(np.ones(N, dtype=np.int32))
    ma, mb = a[mid], b[mid]
    for u, v in ((ma, mb), (mb, ma)):
        us.append(2 * idx[u] + 1)
        vs.append(2 * idx[v])
        cap.append(np.ones(len(u), dtype=np.int32))
    for msk, hub, out in ((src_m, S, False), (snk_m, T, True)):
        end = np.where(in_a[a[msk]], a[msk], b[msk])
        if out:
            us.append(2 * idx[end] + 1)
            vs.append(np.full(len(end), T, dtype=np.int64))
        else:
            us.append(np.full(len(end), S, dtype=np.int64))
            vs.append(2 * idx[end])
        cap.append(np.ones(len(end), dtype=np.int32))
    us = np.concatenate(us)
    vs = np.concatenate(vs)
    cap = np.concatenate(cap)
    if not len(us):
        return 0
    g = sparse.csr_matrix((cap, (us, vs)), shape=(2 * N + 2, 2 * N + 2),
                          dtype=np.int32)
    return int(maximum_flow(g, S, T).flow_value)


def _dual_box_graph(domain: Domain, config: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Dual vertices and dual-open edges on a bounding box with margin.

    Faces outside the domain are always connected (the free boundary is
    wired on the dual side); interior adjacencies are open when the
    crossed primal edge is closed.
    """
    zs = _vertex_zs(domain)
    i_lo = int(math.floor(zs.real.min())) - 1
    i_hi = int(math.ceil(zs.real.max())) + 1
    j_lo = int(math.floor(zs.imag.min())) - 1
    j_hi = int(math.ceil(zs.imag.max())) + 1
    gi = np.arange(i_lo, i_hi + 1) + 0.5
    gj = np.arange(j_lo, j_hi + 1) + 0.5
    ni, nj = len(gi), len(gj)
    G_i, G_j = np.meshgrid(gi, gj, indexing="ij")
    zpos = (G_i + 1j * G_j).ravel()

    def nid(ai: np.ndarray, aj: np.ndarray) -> np.ndarray:
        return ai * nj + aj

    mid = domain._mid_to_pedge
    cfg = np.asarray(config, dtype=np.uint8)
    us, vs = [], []
    ii, jj = np.meshgrid(np.arange(ni), np.arange(nj), indexing="ij")
    for di, dj in ((1, 0), (0, 1)):
        sa = (ii[: ni - di if di else ni, : nj - dj if dj else nj],
              jj[: ni - di if di else ni, : nj - dj if dj else nj])
        u = nid(sa[0], sa[1]).ravel()
        v = nid(sa[0] + di, sa[1] + dj).ravel()
        keep = np.ones(len(u), dtype=bool)
        for k in range(len(u)):
            za, zb = zpos[u[k]], zpos[v[k]]
            x2 = int(round(za.real + zb.real - za.imag - zb.imag))
            y2 = int(round(za.real + zb.real + za.imag + zb.imag))
            pe = mid.get((x2, y2), -1)
            if pe >= 0 and cfg[pe] == 1:
                keep[k] = False
        us.append(u[keep])
        vs.append(v[keep])
    edges = np.column_stack([np.concatenate(us), np.concatenate(vs)])
    return zpos, edges


def annulus_crossing_counts(arg, annulus: Annulus) -> CrossingCounts:
    """Crossing segments of the loop ensemble and disjoint open/dual arms.

    Tree crossings count transits of the annulus by loop segments (each
    transit contains exactly one minimal crossing); arm counts are the
    maximum numbers of vertex-disjoint open and dual-open connected
    crossings.
    """
    if isinstance(arg, LoopEnsemble):
        ensemble = arg
    elif isinstance(arg, ExplorationTree):
        ensemble = extract_loops(arg.domain, arg.config)
    else:
        domain, config = arg
        ensemble = extract_loops(domain, config)
    d = ensemble.domain
    cfg = np.asarray(ensemble.config, dtype=np.uint8)

    tails = d.medial_tail
    crossings = 0
    for lp in ensemble.loops:
        e = np.fromiter(lp.edges, dtype=np.int64)
        zz = (tails[e, 0] - tails[e, 1]) / 4.0 + 1j * (tails[e, 0] + tails[e, 1]) / 4.0
        crossings += _transit_count(zz, annulus)

    zs = _vertex_zs(d)
    pe = np.asarray(d.pedges, dtype=np.int64).reshape(-1, 2)
    open_arms = _disjoint_arms(zs, pe[cfg == 1], annulus)
    dzs, dedges = _dual_box_graph(d, cfg)
    dual_arms = _disjoint_arms(dzs, dedges, annulus)
    return CrossingCounts(crossings, open_arms, dual_arms)


def annulus_position(domain: Domain, annulus: Annulus) -> str:
    """interior, boundary (inner disc meets the boundary), or mixed."""
    zs = _vertex_zs(domain)
    hull = (zs.real.min(), zs.real.max(), zs.imag.min(), zs.imag.max())
    z0 = annulus.z0

    def dist_out(radius: float) -> bool:
        return (z0.real - radius < hull[0] or z0.real + radius > hull[1]
                or z0.imag - radius < hull[2] or z0.imag + radius > hull[3])

    if not dist_out(annulus.R):
        return "interior"
    if dist_out(annulus.r):
        return "boundary"
    return "mixed"


def arm_bound_ok(counts: CrossingCounts, position: str) -> bool:
    """Per-sample implication between crossing and dual-arm counts."""
    need = counts.tree_crossings // 2
    if position == "interior":
        return counts.dual_arms >= need
    if position == "boundary":
        return counts.dual_arms >= need - 1
    return True


@dataclass(frozen=True)
class TailReport:
    ns: tuple[int, ...]
    ratios: tuple[float, ...]
    probs: np.ndarray           # (len(ns), len(ratios))
    slopes: tuple[float, ...]
    insufficient: tuple[bool, ...]


def crossing_tail_diagnostic(samples: Sequence, ladder: Sequence[Annulus],
                             ns: tuple[int, ...] = (1, 2, 3)) -> TailReport:
    """Empirical crossing-count tails across an annulus ladder.

    Reports P(at least n crossing segments) per annulus and the log-log
    slope against r/R for each n; slopes are diagnostic only.
    """
    if not len(samples):
        raise ValueError("no samples")
    if not len(ladder):
        raise ValueError("no annuli")
    counts = np.array([[annulus_crossing_counts(s, a).tree_crossings
                        for a in ladder] for s in samples])
    ratios = tuple(a.r / a.R for a in ladder)
    probs = np.array([[float(np.mean(counts[:, j] >= 2 * n))
                       for j in range(len(ladder))] for n in ns])
    slopes = []
    insufficient = []
    lr = np.log(np.asarray(ratios))
    for i in range(len(ns)):
        ok = probs[i] > 0.0
        insufficient.append(bool(ok.sum() < 2))
        if ok.sum() < 2:
            slopes.append(float("nan"))
            continue
        coef = np.polyfit(lr[ok], np.log(probs[i][ok]), 1)
        slopes.append(float(coef[0]))
    return TailReport(tuple(ns), ratios, probs, tuple(slopes),
                      tuple(insufficient))


def _as_poly(c) -> np.ndarray:
    a = np.asarray(c)
    if a.ndim == 2 and a.shape[1] == 2:
        a = a[:, 0] + 1j * a[:, 1]
    a = a.astype(complex).ravel()
    if len(a) == 0:
        raise ValueError("empty curve")
    return a


def _frechet_feasible(D: np.ndarray, delta: float) -> bool:
    close = D <= delta
    n, m = close.shape
    if not (close[0, 0] and close[-1, -1]):
        return False
    idx = np.arange(m)
    reach = close[0] & (np.logical_and.accumulate(close[0]))
    for i in range(1, n):
        ci = close[i]
        seed = ci & (reach | np.concatenate(([False], reach[:-1])))
        last_block = np.maximum.accumulate(np.where(~ci, idx, -1))
        last_seed = np.maximum.accumulate(np.where(seed, idx, -1))
        reach = ci & (last_seed > last_block) & (last_seed >= 0)
    return bool(reach[-1])


def curve_distance(c1, c2) -> float:
    """Discrete monotone-matching distance between two polylines.

    Infimum over order-preserving vertex couplings of the maximum pointwise
    gap; the continuum reparametrization infimum is approximated at the
    polyline vertex resolution.
    """
    p, q = _as_poly(c1), _as_poly(c2)
    D = np.abs(p[:, None] - q[None, :])
    cands = np.unique(D)
    lo_req = max(D[0, 0], D[-1, -1])
    cands = cands[cands >= lo_req - 1e-15]
    lo, hi = 0, len(cands) - 1
    if _frechet_feasible(D, cands[lo]):
        return float(cands[lo])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _frechet_feasible(D, cands[mid]):
            hi = mid
        else:
            lo = mid
    return float(cands[hi])


def _closed(p: np.ndarray) -> np.ndarray:
    if len(p) > 1 and abs(p[0] - p[-1]) < 1e-12:
        return p[:-1]
    return p


def loop_distance(l1, l2) -> float:
    """Cyclic orientation-preserving curve distance between closed loops."""
    p = _closed(_as_poly(l1))
    q = _closed(_as_poly(l2))
    if len(q) > len(p):
        p, q = q, p
    pc = np.concatenate([p, p[:1]])
    start_gap = np.abs(q - pc[0])
    best = math.inf
    for r in np.argsort(start_gap):
        if start_gap[r] >= best:
            break
        qr = np.roll(q, -r)
        best = min(best, curve_distance(pc, np.concatenate([qr, qr[:1]])))
    return float(best)


def _hausdorff(A: Sequence, B: Sequence, dist) -> float:
    if not len(A) or not len(B):
        raise ValueError("empty input")

    def one_sided(xs, ys):
        worst = 0.0
        for x in xs:
            worst = max(worst, min(dist(x, y) for y in ys))
        return worst

    return max(one_sided(A, B), one_sided(B, A))


def tree_distance(t1: Sequence, t2: Sequence) -> float:
    """Symmetric Hausdorff combination of pairwise branch distances."""
    return _hausdorff(list(t1), list(t2), curve_distance)


def ensemble_distance(e1: Sequence, e2: Sequence) -> float:
    """Symmetric Hausdorff combination of pairwise loop distances."""
    return _hausdorff(list(e1), list(e2), loop_distance)


def branch_polyline(domain: Domain, branch: Branch) -> np.ndarray:
    return np.array([_grid_z(v) for v in branch_to_vertices(domain, branch)])


def loop_polyline(domain: Domain, edges: Sequence[int]) -> np.ndarray:
    tails = domain.medial_tail
    e = np.fromiter(edges, dtype=np.int64)
    z = (tails[e, 0] - tails[e, 1]) / 4.0 + 1j * (tails[e, 0] + tails[e, 1]) / 4.0
    return np.concatenate([z, z[:1]])


def subtree_branches(domain: Domain, config: np.ndarray,
                     targets: Sequence[int], root: int = 0
                     ) -> dict[int, Branch]:
    """Branches to the targets, augmented by their own branching points.

    Every boundary midpoint where a first-pass branch jumps is itself a
    point where the subtree splits, so the branch terminating there is
    added; for the full target set this adds nothing new.
    """
    want = sorted(set(int(t) for t in targets) | {root})
    out: dict[int, Branch] = {}
    for t in want:
        out[t] = branch_to(domain, config, t, root)
    extra: set[int] = set()
    for br in out.values():
        for v in br.jump_vertices:
            p = domain.vertex_position.get(tuple(v))
            if p is not None and p not in out:
                extra.add(p)
    for t in sorted(extra):
        out[t] = branch_to(domain, config, t, root)
    return out


def _partial_loops(domain: Domain, branches: dict[int, Branch],
                   root: int) -> list[tuple[int, ...]]:
    """Boundary loops recovered from a partial branch set.

    Same suffix rule as the full-tree recovery: a loop is read off the
    branch to its attachment point when the walk's last jump lands there.
    """
    heads = domain.medial_head
    out = []
    if root in branches:
        out.append(branches[root].edges)
    for p, br in branches.items():
        if p == root:
            continue
        w = domain.position_vertex[p]
        k = None
        for i, e in enumerate(br.edges):
            if (int(heads[e, 0]), int(heads[e, 1])) == w:
                k = i
                break
        if k is None or k + 1 >= len(br.edges):
            continue
        if (k + 1) not in br.jump_steps or any(j > k + 1 for j in br.jump_steps):
            continue
        out.append(br.edges[k + 1:])
    return out


@dataclass(frozen=True)
class SubtreeReport:
    arc_counts: tuple[int, ...]
    m_values: tuple[float, ...]          # max arc length per rung, grid units
    tree_medians: tuple[float, ...]
    tree_q75: tuple[float, ...]
    loop_medians: tuple[float, ...]
    n: int
    seed: int


def _ring_gap(P: int, a: int, b: int) -> int:
    d = abs(a - b) % P
    return min(d, P - d)


def subtree_approx_experiment(domain: Domain, n: int, seed: int = 0,
                              arc_counts: tuple[int, ...] = (4, 8, 16),
                              root: int = 0, decimate: int = 2,
                              n_candidates: int = 4, burn_in: int = 100,
                              thinning: int = 3) -> SubtreeReport:
    """Distance of finite subtrees to the full tree over a partition ladder.

    For each rung the boundary ring splits into equal arcs whose endpoints
    are the subtree targets; the tree distance to the full tree is taken
    with the infimum restricted to the nearest-target candidate branches
    (an upper bound, consistent across rungs).
    """
    if n <= 0:
        raise ValueError("need n > 0 samples")
    P = len(domain.inner_boundary)
    configs = sample(domain, ModelParams(), n=n, seed=seed, engine="cluster",
                     burn_in=burn_in, thinning=thinning, wired=False)

    def deci(z: np.ndarray) -> np.ndarray:
        if len(z) <= 2 * decimate:
            return z
        return np.concatenate([z[::decimate], z[-1:]])

    d_tree = {N: [] for N in arc_counts}
    d_loop = {N: [] for N in arc_counts}
    for cfg in configs:
        full = {t: branch_to(domain, cfg, t, root) for t in range(P)}
        full_poly = {t: deci(branch_polyline(domain, b))
                     for t, b in full.items()}
        ens = extract_loops(domain, cfg)
        bloops = [deci(loop_polyline(domain, lp.edges))
                  for lp in boundary_loops(ens)]
        for N in arc_counts:
            targets = [root + round(k * P / N) for k in range(N)]
            targets = sorted({t % P for t in targets})
            sub = subtree_branches(domain, cfg, targets, root)
            sub_poly = {t: deci(branch_polyline(domain, b))
                        for t, b in sub.items()}
            sub_keys = sorted(sub_poly)
            worst = 0.0
            for t in range(P):
                if t in sub_poly:
                    continue
                near = sorted(sub_keys, key=lambda s: _ring_gap(P, s, t))
                best = min(curve_distance(full_poly[t], sub_poly[s])
                           for s in near[:n_candidates])
                worst = max(worst, best)
            d_tree[N].append(worst)
            ploops = [deci(loop_polyline(domain, e))
                      for e in _partial_loops(domain, sub, root)]
            worst_l = 0.0
            for lz in bloops:
                best = min(loop_distance(lz, pz) for pz in ploops)
                worst_l = max(worst_l, best)
            d_loop[N].append(worst_l)

    m_vals = tuple(P / (2.0 * N) for N in arc_counts)  # arc length, grid units
    return SubtreeReport(
        arc_counts=tuple(arc_counts),
        m_values=m_vals,
        tree_medians=tuple(float(np.median(d_tree[N])) for N in arc_counts),
        tree_q75=tuple(float(np.quantile(d_tree[N], 0.75)) for N in arc_counts),
        loop_medians=tuple(float(np.median(d_loop[N])) for N in arc_counts),
        n=n, seed=seed,
    )
