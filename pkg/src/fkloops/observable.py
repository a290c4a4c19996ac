"""Edge observable on a four-marked domain and its step martingales.

The observable weights each configuration by the phase of the winding
that the target curve accumulates on its way from d back to a probe
edge.  Values live on direction-dependent lines in the complex plane;
the height function integrates their squared moduli over faces.  The
martingale section re-derives the observable along the exploration
branch from a to d and checks the exact step identities, including the
coin laws at boundary visits.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .lattice_domain import DIR_VEC, Coord, Domain, Domain4
from .loop_rep import (SQRT2, ArcDecomposition, enumerate_marked_measure,
                       marked_successors, white_arc_edges)
from .explorer import winding_turns

__all__ = [
    "LAMBDA", "ETA", "LineAssignment", "ObservableField", "HeightField", "CoinLaws",
    "MartingaleTrace", "observable_enum", "observable_solve",
    "gamma_hat_phases", "s_hol_residual", "line_residual", "build_H",
    "check_sub_super", "preharmonic_envelope", "fused_strip_domain",
    "PoissonProfileReport", "poisson_profile_check",
    "mart_branch", "mart_step_check",
]

LAMBDA = cmath.exp(-1j * math.pi / 4)

# line representatives l(e) = eta[dir] * R for edge directions E, N, W, S
ETA = (1.0 + 0.0j, LAMBDA, 1.0j, LAMBDA.conjugate())


@dataclass(frozen=True)
class LineAssignment:
    """Unit representatives of the value lines, one per edge direction.

    The line of an edge pointing in the unit direction u is sqrt(conj(u))*R,
    so the four representatives cycle through {1, lambda, i, conj(lambda)}.
    """
    eta: tuple[complex, complex, complex, complex] = ETA
    lam: complex = LAMBDA

    def line_of(self, direction: int) -> complex:
        return self.eta[direction % 4]

    def on_line(self, direction: int, z: complex, tol: float = 1e-9) -> bool:
        return abs((z * self.eta[direction % 4].conjugate()).imag) <= tol * max(1.0, abs(z))


def _phase(quarter_turns: int) -> complex:
    return cmath.exp(-1j * math.pi / 4 * quarter_turns)


def gamma_hat_phases(decomp: ArcDecomposition) -> dict[int, complex]:
    """Winding phase factor for every edge of the target curve.

    The winding is accumulated along the reversal of the curve starting
    from the edge at d.  When the curve wraps through the outer arc, the
    turns of the removed boundary edges between a and b are included so
    the winding is that of an honest continuous curve.
    """
    d4 = decomp.domain4
    d = d4.domain
    dirs = d.medial_dir
    parts = decomp.gamma_hat_parts
    items: list[tuple[int, int]] = []   # (edge id, -1 for outer arc; rdir)
    for pi in range(len(parts) - 1, -1, -1):
        for e in reversed(parts[pi]):
            items.append((e, (int(dirs[e]) + 2) % 4))
        if pi > 0:
            P = len(d.inner_boundary)
            p = d4.pos["a"]
            while p != d4.pos["b"]:
                e = int(d.inner_boundary[p])
                items.append((-1, (int(dirs[e]) + 2) % 4))
                p = (p - 1) % P
    out: dict[int, complex] = {}
    w = 0
    prev_rdir = None
    for e, rdir in items:
        if prev_rdir is not None:
            w += winding_turns(prev_rdir, rdir)
        if e >= 0:
            out[e] = _phase(w)
        prev_rdir = rdir
    return out


@dataclass(frozen=True)
class ObservableField:
    domain4: Domain4
    edge_values: np.ndarray       # complex, zero on absent edges
    exists: np.ndarray            # bool per medial edge
    theta: complex
    source: str

    def value(self, eid: int) -> complex:
        return complex(self.edge_values[eid])

    def vertex_value(self, v: Coord) -> complex:
        ce = compass_edges(self.domain4.domain, v)
        if len(ce) != 4:
            raise ValueError("vertex values are defined at four-edge vertices")
        return self.value(ce[0]) + self.value(ce[2])

    def vertex_values(self) -> dict[Coord, complex]:
        return {v: self.vertex_value(v) for v in _full_vertices(self.domain4)}


def _existing_mask(domain4: Domain4) -> np.ndarray:
    d = domain4.domain
    mask = np.ones(d.n_medial, dtype=bool)
    for e in white_arc_edges(domain4):
        mask[e] = False
    return mask


def observable_enum(domain4: Domain4, params=None, cap: int = 20) -> ObservableField:
    """Exact observable by enumeration of the marked measure."""
    if params is not None:
        from .fk_sampler import P_C
        if abs(params.q - 2.0) > 1e-12 or abs(params.p - P_C) > 1e-12:
            raise ValueError("observable is defined at the critical point")
    d = domain4.domain
    mm = enumerate_marked_measure(domain4, "observable", cap=cap)
    raw = np.zeros(d.n_medial, dtype=np.complex128)
    for p, dec in zip(mm.probs, mm.decomps):
        for e, ph in gamma_hat_phases(dec).items():
            raw[e] += p * ph
    theta = ETA[int(d.medial_dir[domain4.anchor_edge])]
    return ObservableField(domain4, theta * raw, _existing_mask(domain4),
                           theta, "enum")


# -- pointwise structure ------------------------------------------------------

def compass_edges(domain: Domain, v: Coord) -> dict[int, int]:
    """Incident medial edges keyed by the compass side they occupy."""
    out: dict[int, int] = {}
    for side in range(4):
        eid = domain._edge_from.get((v, side))
        if eid is None:
            eid = domain._edge_into.get((v, (side + 2) % 4))
        if eid is not None:
            out[side] = eid
    return out


def _full_vertices(domain4: Domain4) -> list[Coord]:
    d = domain4.domain
    mask = _existing_mask(domain4)
    out = []
    seen = set()
    for eid in range(d.n_medial):
        for v in ((int(d.medial_tail[eid, 0]), int(d.medial_tail[eid, 1])),
                  (int(d.medial_head[eid, 0]), int(d.medial_head[eid, 1]))):
            if v in seen:
                continue
            seen.add(v)
            ce = compass_edges(d, v)
            if len(ce) == 4 and all(mask[e] for e in ce.values()):
                out.append(v)
    return sorted(out)


def s_hol_residual(field: ObservableField) -> float:
    """Max |f(e_E)+f(e_W) - f(e_N)-f(e_S)| over four-edge vertices."""
    d = field.domain4.domain
    f = field.edge_values
    worst = 0.0
    for v in _full_vertices(field.domain4):
        ce = compass_edges(d, v)
        r = abs(f[ce[0]] + f[ce[2]] - f[ce[1]] - f[ce[3]])
        worst = max(worst, r)
    return worst


def line_residual(field: ObservableField) -> float:
    """Max distance of any edge value from its line."""
    d = field.domain4.domain
    f = field.edge_values
    worst = 0.0
    for eid in np.nonzero(field.exists)[0]:
        eta = ETA[int(d.medial_dir[eid])]
        worst = max(worst, abs((f[eid] * eta.conjugate()).imag))
    return worst


# -- height function ----------------------------------------------------------

def _faces_of_edge(domain: Domain, eid: int) -> tuple[Coord, Coord]:
    """(black on the left, white on the right) face centers of an edge."""
    t = domain.medial_tail[eid]
    dr = int(domain.medial_dir[eid])
    vx, vy = DIR_VEC[dr]
    mx, my = int(t[0]) + vx // 2, int(t[1]) + vy // 2
    nx, ny = DIR_VEC[(dr + 1) % 4]
    black = (mx + nx // 2, my + ny // 2)
    white = (mx - nx // 2, my - ny // 2)
    return black, white


@dataclass(frozen=True)
class HeightField:
    """Height function of the observable, anchored at 0 on the outer whites.

    With this orientation the black at d carries value 1 and the three
    boundary plateaus are exactly {0, 1, 1 - beta}; ab_plateau = 1 - beta
    is the arc-ab level, the quantity with a continuum limit.
    """
    domain4: Domain4
    values: dict[Coord, float]
    beta: float
    ab_plateau: float
    residual: float

    def __getitem__(self, face: Coord) -> float:
        return self.values[face]


def build_H(field: ObservableField, domain4: Domain4) -> HeightField:
    """Integrate H(black) - H(white) = |f|^2 from the anchor white at d."""
    d = domain4.domain
    sq = np.abs(field.edge_values) ** 2
    inc: list[tuple[Coord, Coord, float]] = []
    for eid in np.nonzero(field.exists)[0]:
        b, w = _faces_of_edge(d, int(eid))
        inc.append((b, w, float(sq[eid])))
    adj: dict[Coord, list[tuple[Coord, float]]] = {}
    for b, w, s in inc:
        adj.setdefault(b, []).append((w, -s))
        adj.setdefault(w, []).append((b, +s))
    _, anchor_white = _faces_of_edge(d, domain4.anchor_edge)
    values: dict[Coord, float] = {anchor_white: 0.0}
    stack = [anchor_white]
    while stack:
        u = stack.pop()
        for nb, dv in adj[u]:
            if nb not in values:
                values[nb] = values[u] + dv
                stack.append(nb)
    residual = 0.0
    for b, w, s in inc:
        if b in values and w in values:
            residual = max(residual, abs(values[b] - values[w] - s))
    missing = [u for u in adj if u not in values]
    if missing:
        raise AssertionError(f"height increments do not reach {len(missing)} faces")
    e1b = domain4.roles["b"][0]
    ab_plateau = float(sq[e1b])
    return HeightField(domain4, values, 1.0 - ab_plateau, ab_plateau, residual)


def _color_of(face: Coord) -> int:
    return (face[0] + face[1]) % 4     # 0 black, 2 white


@dataclass(frozen=True)
class SubSuperReport:
    min_black_lap: float
    max_white_lap: float
    n_black: int
    n_white: int
    violations: tuple[tuple[Coord, float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


DIAG = ((2, 2), (2, -2), (-2, 2), (-2, -2))


def _outer_whites(domain4: Domain4) -> set[Coord]:
    d = domain4.domain
    return {_faces_of_edge(d, int(e))[1] for e in d.inner_boundary}


def check_sub_super(H: HeightField, tol: float = 1e-10) -> SubSuperReport:
    """Black-face Laplacians are nonnegative, white-face nonpositive.

    Whites are checked away from the boundary ring: a white next to the
    zero plateau outside mixes boundary data into its stencil and the
    comparison-function argument does not apply there.
    """
    vals = H.values
    outer = _outer_whites(H.domain4)
    min_b, max_w = math.inf, -math.inf
    nb = nw = 0
    bad = []
    for face, h in vals.items():
        nbrs = [(face[0] + dx, face[1] + dy) for dx, dy in DIAG]
        if not all(n in vals for n in nbrs):
            continue
        white = _color_of(face) != 0
        if white and (face in outer or any(n in outer for n in nbrs)):
            continue
        lap = sum(vals[n] for n in nbrs) - 4.0 * h
        if not white:
            nb += 1
            min_b = min(min_b, lap)
            if lap < -tol:
                bad.append((face, lap))
        else:
            nw += 1
            max_w = max(max_w, lap)
            if lap > tol:
                bad.append((face, lap))
    return SubSuperReport(min_b, max_w, nb, nw, tuple(bad))


@dataclass(frozen=True)
class EnvelopeReport:
    black_envelope: dict[Coord, float]
    white_envelope: dict[Coord, float]
    black_slack: float     # min over interior blacks of envelope - H
    white_slack: float     # min over interior whites of H - envelope
    middle_slack: float    # min over edges of H(black) - H(white)

    @property
    def ok(self) -> bool:
        return min(self.black_slack, self.white_slack,
                   self.middle_slack) >= -1e-10


def _dirichlet_extend(vals: dict[Coord, float], color: int,
                      pinned: set[Coord] | None = None) -> dict[Coord, float]:
    import scipy.sparse as sp
    import scipy.sparse.linalg as spl

    pinned = pinned or set()
    faces = [f for f in vals if _color_of(f) == color]
    interior = [f for f in faces if f not in pinned
                and all((f[0] + dx, f[1] + dy) in vals for dx, dy in DIAG)]
    if not interior:
        return dict(vals)
    idx = {f: i for i, f in enumerate(interior)}
    n = len(interior)
    A = sp.lil_matrix((n, n))
    rhs = np.zeros(n)
    for f, i in idx.items():
        A[i, i] = 4.0
        for dx, dy in DIAG:
            nb = (f[0] + dx, f[1] + dy)
            if nb in idx:
                A[i, idx[nb]] = -1.0
            else:
                rhs[i] += vals[nb]
    sol = spl.spsolve(A.tocsr(), rhs)
    out = dict(vals)
    for f, i in idx.items():
        out[f] = float(sol[i])
    return out


def preharmonic_envelope(H: HeightField, domain4: Domain4) -> EnvelopeReport:
    """Harmonic extensions of the boundary values on each sublattice.

    The white extension pins the ring next to the zero plateau outside,
    the same set excluded from the superharmonicity check; the comparison
    argument holds on the remaining interior.
    """
    vals = H.values
    outer = _outer_whites(domain4)
    ring = set(outer)
    for f in vals:
        if _color_of(f) != 0 and any((f[0] + dx, f[1] + dy) in outer
                                     for dx, dy in DIAG):
            ring.add(f)
    benv = _dirichlet_extend(vals, 0)
    wenv = _dirichlet_extend(vals, 2, pinned=ring)
    bslack = math.inf
    wslack = math.inf
    for f, h in vals.items():
        nbrs = [(f[0] + dx, f[1] + dy) for dx, dy in DIAG]
        if not all(n in vals for n in nbrs):
            continue
        if _color_of(f) == 0:
            bslack = min(bslack, benv[f] - h)
        elif f not in ring:
            wslack = min(wslack, h - wenv[f])
    d = domain4.domain
    field_sq_min = math.inf
    for eid in range(d.n_medial):
        b, w = _faces_of_edge(d, eid)
        if b in vals and w in vals:
            field_sq_min = min(field_sq_min, vals[b] - vals[w])
    return EnvelopeReport(benv, wenv, bslack, wslack, field_sq_min)


# -- coin laws and martingale checks ------------------------------------------

@dataclass(frozen=True)
class CoinLaws:
    """Exact laws of the jump and sign coins at boundary visits."""
    zeta_stay: float = 1.0 / (1.0 + SQRT2)
    zeta_jump: float = SQRT2 / (1.0 + SQRT2)
    xi_plus: float = 1.0 / SQRT2
    xi_minus: float = 1.0 - 1.0 / SQRT2

    def coupling(self) -> dict[tuple[int, int], float]:
        return {(0, 1): 1.0, (0, -1): 0.0, (1, 1): 0.5, (1, -1): 0.5}


@dataclass(frozen=True)
class MartBranch:
    edges: tuple[int, ...]
    coin_steps: tuple[int, ...]     # indices whose head is a free bc midpoint
    coin_pedges: tuple[int, ...]
    forced_jump_steps: tuple[int, ...]


def _coin_sites(domain4: Domain4) -> dict[int, tuple[int, int]]:
    """Arriving interior edge -> (crossing pedge, inward continuation)
    at every visitable vertex of the target-side wired arc."""
    d = domain4.domain
    marks = set(domain4.pos.values())
    sites: dict[int, tuple[int, int]] = {}
    for p in domain4.arcs["bc"]:
        pe = int(d.ring_pedge[p])
        if p not in marks and pe >= 0 and pe not in domain4.forced_closed:
            e1, e2, f1, f2 = d.roles_at(p)
            sites[e1] = (pe, f2)
    return sites


def mart_branch(domain4: Domain4, config: np.ndarray) -> MartBranch:
    """Exploration branch from a to d on the marked graph.

    Landing on the boundary arc between b and c is replaced by a jump
    to the inward edge at the same vertex; the strand end at b jumps
    inward deterministically; the walk stops at the edge into d.
    """
    d = domain4.domain
    nxt = marked_successors(domain4, config)
    sites = _coin_sites(domain4)
    e1b = domain4.roles["b"][0]
    f2b = domain4.roles["b"][3]
    end = domain4.roles["d"][0]
    e2d = domain4.roles["d"][1]
    pos_a, pos_d = domain4.pos["a"], domain4.pos["d"]
    P = len(d.inner_boundary)
    span = (pos_a - pos_d) % P

    edges = [int(domain4.roles["a"][3])]
    seen = {edges[0]}
    coin_steps: list[int] = []
    coin_pedges: list[int] = []
    forced: list[int] = []
    e = edges[0]
    for _ in range(2 * d.n_medial + 4):
        if e == end:
            return MartBranch(tuple(edges), tuple(coin_steps),
                              tuple(coin_pedges), tuple(forced))
        if e in sites:
            # open and closed pairings both continue inward here, so the
            # step itself reveals nothing about the crossed state
            pe, f2 = sites[e]
            coin_steps.append(len(edges) - 1)
            coin_pedges.append(pe)
            cand = f2
        else:
            cand = int(nxt[e])
            if cand == -1:
                if e != e1b:
                    raise AssertionError("walk stalled away from b and d")
                forced.append(len(edges) - 1)
                cand = int(f2b)
            elif cand == e2d:
                # reached d along the boundary
                edges.append(cand)
                return MartBranch(tuple(edges), tuple(coin_steps),
                                  tuple(coin_pedges), tuple(forced))
            elif (d.edge_position[cand] >= 0
                  and (int(d.edge_position[cand]) - pos_d) % P <= span):
                # landed on the far boundary at a crossed-state vertex; the
                # only non-random such landings are at predetermined edges
                vp = d.vertex_position[tuple(int(x) for x in d.medial_head[e])]
                pe = int(d.ring_pedge[vp])
                if pe < 0 or pe not in domain4.forced_closed:
                    raise AssertionError("jump at an undetermined vertex")
                forced.append(len(edges) - 1)
                cand = int(d.roles_at(vp)[3])
        if cand in seen:
            raise AssertionError("branch revisited an edge")
        seen.add(cand)
        edges.append(cand)
        e = cand
    raise AssertionError("marked branch did not terminate")


@dataclass(frozen=True)
class MartingaleTrace:
    times: tuple[int, ...]
    m_plus: tuple[float, ...]
    m: tuple[float, ...]
    n: tuple[complex, ...]


@dataclass(frozen=True)
class MartCheckReport:
    max_resid_m: float
    max_resid_n: float
    max_coin_dev: float
    max_m_plus: float
    max_det_m_dev: float
    max_det_n_dev: float
    n_prefix_groups: int
    trace: MartingaleTrace

    @property
    def ok(self) -> bool:
        return (self.max_resid_m <= 1e-10 and self.max_resid_n <= 1e-10
                and self.max_coin_dev <= 1e-10
                and self.max_m_plus <= 1.0 + 1e-12)


def mart_step_check(domain4: Domain4, steps: int | None = None,
                    probe: int | None = None,
                    jump_factor: float = 1.0 + SQRT2,
                    coin_stay_prob: float | None = None,
                    cap: int = 20) -> MartCheckReport:
    """Exhaustive step-identity check of the branch martingales.

    Groups all configurations by branch prefix and verifies the tower
    identities for the signed product martingale and for the observable
    value at the probe edge; `jump_factor` and `coin_stay_prob` exist to
    run negative controls with deliberately wrong constants.
    """
    d = domain4.domain
    mm = enumerate_marked_measure(domain4, "observable", cap=cap)
    if probe is None:
        probe = int(domain4.roles["c"][3])
    theta = ETA[int(d.medial_dir[domain4.anchor_edge])]
    n_cfg = mm.probs.size
    branches = []
    atoms = np.zeros(n_cfg, dtype=np.complex128)
    is_cross = np.zeros(n_cfg, dtype=bool)
    for i in range(n_cfg):
        dec = mm.decomps[i]
        branches.append(mart_branch(domain4, mm.configs[i]))
        is_cross[i] = dec.pattern == "(ad)(cb)"
        atoms[i] = theta * gamma_hat_phases(dec).get(probe, 0.0)
    probs = mm.probs

    def node_stats(members, depth):
        p = probs[members].sum()
        pc = probs[members][is_cross[members]].sum() / p
        nv = (probs[members] * atoms[members]).sum() / p
        br = branches[members[0]]
        j = sum(1 for s in br.coin_steps if s < depth - 1)
        return p, pc, nv, j

    max_rm = max_rn = max_cd = max_mp = max_dm = max_dn = 0.0
    groups = 0
    root_members = np.arange(n_cfg)
    stack = [(root_members, 1)]
    while stack:
        members, depth = stack.pop()
        if steps is not None and depth > steps:
            continue
        groups += 1
        p_g, pc_g, nv_g, j_g = node_stats(members, depth)
        mp_g = jump_factor ** j_g * pc_g
        max_mp = max(max_mp, mp_g)
        br0 = branches[members[0]]
        last_is_coin = (depth - 1) in br0.coin_steps
        # partition into children by the next edge (or completion)
        buckets: dict[int, list[int]] = {}
        done: list[int] = []
        for i in members:
            br = branches[i]
            if len(br.edges) <= depth:
                done.append(i)
            else:
                buckets.setdefault(br.edges[depth], []).append(i)
        em = 0.0
        en = 0.0
        if last_is_coin:
            pe = br0.coin_pedges[br0.coin_steps.index(depth - 1)]
            stay_emp = probs[members][mm.configs[members, pe] == 1].sum() / p_g
            max_cd = max(max_cd, abs(stay_emp - 1.0 / (1.0 + SQRT2)))
            xi_mean = stay_emp if coin_stay_prob is None else coin_stay_prob
        else:
            xi_mean = 1.0
        for i in done:
            mp_i = jump_factor ** (j_g + (1 if last_is_coin else 0)) \
                * (1.0 if is_cross[i] else 0.0)
            em += probs[i] / p_g * xi_mean * mp_i
            en += probs[i] / p_g * atoms[i]
        for eid, kids in buckets.items():
            kids = np.array(kids)
            p_c, pc_c, nv_c, j_c = node_stats(kids, depth + 1)
            mp_c = jump_factor ** j_c * pc_c
            em += (p_c / p_g) * xi_mean * mp_c
            en += (p_c / p_g) * nv_c
            if last_is_coin:
                max_dm = max(max_dm, abs(mp_c - jump_factor * mp_g))
                max_dn = max(max_dn, abs(nv_c - nv_g))
            stack.append((kids, depth + 1))
        max_rm = max(max_rm, abs(em - mp_g))
        max_rn = max(max_rn, abs(en - nv_g))

    # trace along the most likely full branch, with realized sign coins
    rng = np.random.default_rng(7)
    i_star = int(np.argmax(probs))
    br = branches[i_star]
    times, mps, ms, nvs = [], [], [], []
    members = np.arange(n_cfg)
    sign = 1.0
    for t in range(1, len(br.edges) + 1):
        members = members[[branches[i].edges[:t] == br.edges[:t]
                           for i in members]]
        if (t - 2) in br.coin_steps:
            pe = br.coin_pedges[br.coin_steps.index(t - 2)]
            if mm.configs[i_star, pe] == 0 and rng.random() < 0.5:
                sign = -sign
        p_g, pc_g, nv_g, j_g = node_stats(members, t)
        times.append(t)
        mps.append(jump_factor ** j_g * pc_g)
        ms.append(sign * mps[-1])
        nvs.append(nv_g)
    trace = MartingaleTrace(tuple(times), tuple(mps), tuple(ms), tuple(nvs))
    return MartCheckReport(max_rm, max_rn, max_cd, max_mp, max_dm, max_dn,
                           groups, trace)


def _transport_pairs(domain4: Domain4) -> list[tuple[int, int]]:
    """(arriving, departing) edge pairs every curve must take consecutively.

    Covers vertices with a single arriving and single departing edge
    (corners and reflection sites) and the forced pairings at the marks.
    """
    d = domain4.domain
    mask = _existing_mask(domain4)
    heads: dict[Coord, list[int]] = {}
    tails: dict[Coord, list[int]] = {}
    for eid in np.nonzero(mask)[0]:
        h = (int(d.medial_head[eid, 0]), int(d.medial_head[eid, 1]))
        t = (int(d.medial_tail[eid, 0]), int(d.medial_tail[eid, 1]))
        heads.setdefault(h, []).append(int(eid))
        tails.setdefault(t, []).append(int(eid))
    pairs = []
    for v, ins in heads.items():
        outs = tails.get(v, [])
        if len(ins) == 1 and len(outs) == 1:
            pairs.append((ins[0], outs[0]))
    for m in ("a", "c"):
        e1, e2, f1, f2 = domain4.roles[m]
        pairs.append((e1, f1))
    for m in ("b", "d"):
        e1, e2, f1, f2 = domain4.roles[m]
        pairs.append((e2, f2))
    return pairs


def transport_sign(domain: Domain, e_in: int, e_out: int) -> float:
    """Relative sign of the line components across a forced passage."""
    di, do = int(domain.medial_dir[e_in]), int(domain.medial_dir[e_out])
    tau = winding_turns(do, di)
    s = ETA[do] * _phase(tau) / ETA[di]
    if abs(s.imag) > 1e-12:
        raise AssertionError("transport does not close on the lines")
    return float(round(s.real))


def _strand_end_rows(domain4: Domain4) -> list[tuple[int, int, int]]:
    """Fixed-sign relations between the four strand end edges.

    Any two of the dangling edges at the marks are joined by a strand in
    every configuration that charges both, and the turning between two
    fixed boundary edges is the same for every such strand modulo full
    turns.  The sign is read off one explicit realization: the all-open
    configuration, whose exploration path visits all four ends.
    """
    from .loop_rep import arc_decompose

    d = domain4.domain
    cfg = np.ones(d.n_edges, dtype=np.uint8)
    dec = arc_decompose(domain4, cfg)
    phases = gamma_hat_phases(dec)
    out = []
    f2a, e1b = int(domain4.roles["a"][3]), int(domain4.roles["b"][0])
    f2c, e1d = int(domain4.roles["c"][3]), int(domain4.roles["d"][0])
    for u, v in ((f2a, e1b), (e1d, f2c)):
        if u == v or u not in phases or v not in phases:
            continue
        ratio = phases[v] / phases[u]
        s = ETA[int(d.medial_dir[u])] * ratio / ETA[int(d.medial_dir[v])]
        if abs(s.imag) > 1e-9 or abs(abs(s.real) - 1.0) > 1e-9:
            raise AssertionError("strand end transport is not a sign")
        out.append((u, v, round(s.real)))
    return out


def observable_solve(domain4: Domain4) -> ObservableField:
    """Observable from the local relations alone, no enumeration.

    Unknowns are the real line components of the edge values.  Rows are
    the four-edge vertex relation f(e_E)+f(e_W)=f(e_N)+f(e_S) split into
    real and imaginary parts, the projection of the vertex sum onto each
    edge line, the forced-passage transports, the strand-end relations,
    and the unit anchor at d.  Solved in the least-squares sense; the
    residual of the returned field is checked by the callers.
    """
    import scipy.sparse as sp
    import scipy.sparse.linalg as spl

    d = domain4.domain
    mask = _existing_mask(domain4)
    eids = np.nonzero(mask)[0]
    col = {int(e): i for i, e in enumerate(eids)}
    n = len(eids)
    rows: list[tuple[int, int, float]] = []
    rhs: list[float] = []
    r = 0
    for v in _full_vertices(domain4):
        ce = compass_edges(d, v)
        eta = [ETA[int(d.medial_dir[ce[s]])] for s in range(4)]
        for part in (lambda z: z.real, lambda z: z.imag):
            for side in range(4):
                coef = part(eta[side]) * (1.0 if side % 2 == 0 else -1.0)
                if coef != 0.0:
                    rows.append((r, col[ce[side]], coef))
            rhs.append(0.0)
            r += 1
        # each edge value is the projection of the vertex sum onto its line
        for t in range(4):
            p, q = (t + 1) % 4, (t + 3) % 4
            rows.append((r, col[ce[t]], 1.0))
            for s in (p, q):
                coef = (eta[s] * eta[t].conjugate()).real
                if coef != 0.0:
                    rows.append((r, col[ce[s]], -coef))
            rhs.append(0.0)
            r += 1
    for e_in, e_out in _transport_pairs(domain4):
        s = transport_sign(d, e_in, e_out)
        rows.append((r, col[e_in], 1.0))
        rows.append((r, col[e_out], -s))
        rhs.append(0.0)
        r += 1
    for u, v, s in _strand_end_rows(domain4):
        rows.append((r, col[v], 1.0))
        rows.append((r, col[u], -s))
        rhs.append(0.0)
        r += 1
    rows.append((r, col[int(domain4.anchor_edge)], 1.0))
    rhs.append(1.0)
    r += 1

    ri = np.array([t[0] for t in rows])
    ci = np.array([t[1] for t in rows])
    dv = np.array([t[2] for t in rows])
    A = sp.coo_matrix((dv, (ri, ci)), shape=(r, n)).tocsr()
    b = np.array(rhs)
    x, istop, itn, normr = spl.lsqr(A, b, atol=1e-14, btol=1e-14,
                                    iter_lim=20000)[:4]
    vals = np.zeros(d.n_medial, dtype=np.complex128)
    for e, i in col.items():
        vals[e] = x[i] * ETA[int(d.medial_dir[e])]
    theta = ETA[int(d.medial_dir[domain4.anchor_edge])]
    return ObservableField(domain4, vals, mask, theta, "solve")


def _face_to_grid(face: Coord) -> complex:
    return complex((face[0] - face[1]) / 4.0, (face[0] + face[1]) / 4.0)


def fused_strip_domain(width: int, height: int) -> Domain4:
    """Rectangle with c,d fused at the middle of the bottom side and the
    free window ab far away at the middle of the top side."""
    from .lattice_domain import build_rect_domain, mark_four_points

    d = build_rect_domain(width, height)
    P = len(d.inner_boundary)
    pts = []
    for p in range(P):
        if int(d.ring_pedge[p]) < 0:
            continue
        v = tuple(int(x) for x in d.position_vertex[p])
        z = complex((v[0] - v[1]) / 4.0, (v[0] + v[1]) / 4.0)
        pts.append((p, z))
    ys = [z.imag for _, z in pts]
    y_bot, y_top = min(ys), max(ys)
    bottom = sorted((p, z) for p, z in pts if z.imag == y_bot)
    top = sorted((p, z) for p, z in pts if z.imag == y_top)
    x_mid = (bottom[0][1].real + bottom[-1][1].real) / 2.0
    k = min(range(len(bottom) - 1),
            key=lambda i: abs((bottom[i][1].real + bottom[i + 1][1].real) / 2 - x_mid))
    pd, pc = bottom[k][0], bottom[k + 1][0]
    if (pc - pd) % P > P // 2:
        pd, pc = pc, pd
    # keep the cyclic order a -> d -> c -> b: b is the top midpoint closest
    # to the middle, a the next one along the ring (tiny free window ab)
    kb = min(range(len(top)), key=lambda i: abs(top[i][1].real - x_mid))
    pb = top[kb][0]
    order = sorted((p for p, _ in top), key=lambda p: (p - pb) % P)
    pa = order[1]
    return mark_four_points(d, (pa, pb, pc, pd))


@dataclass(frozen=True)
class PoissonProfileReport:
    z0: complex
    theta: float
    w_face: Coord
    normalization: float      # H at the normalization face before rescaling
    max_dev: float            # max |Hhat - normalized kernel| on the window
    n_window: int
    boundary_max: float       # max |H| on outer whites away from z0
    mesh: float


def poisson_profile_check(domain4: Domain4, w: Coord | None = None,
                          field: ObservableField | None = None,
                          window: tuple[float, float] = (0.2, 0.45),
                          height_cut: float = 0.12,
                          ) -> PoissonProfileReport:
    """Profile of the height function around a fused pair c,d.

    The normalized height is compared with the half-plane profile
    Im(-e^{i theta}/(z-z0)), itself normalized at the same point.  The
    deviation is taken over the faces of a fixed continuum window, an
    annulus around z0 cut at a minimum distance from the boundary line
    (the comparison only holds on compacts of the open half-plane);
    lengths are scaled so the domain height is 1.
    """
    d = domain4.domain
    P = len(d.inner_boundary)
    if (domain4.pos["c"] - domain4.pos["d"]) % P > 4:
        raise ValueError("marks c and d are not fused")
    vc = tuple(int(x) for x in d.position_vertex[domain4.pos["c"]])
    vd = tuple(int(x) for x in d.position_vertex[domain4.pos["d"]])
    z0 = (_face_to_grid(vc) + _face_to_grid(vd)) / 2.0

    if field is None:
        field = observable_solve(domain4)
    H = build_H(field, domain4)
    outer = _outer_whites(domain4)

    zs = {f: _face_to_grid(f) for f in H.values}
    span_y = max(z.imag for z in zs.values()) - min(z.imag for z in zs.values())
    mesh = 1.0 / span_y
    inner = [f for f in H.values if f not in outer]
    # inward normal at z0: flat boundary means a single dominant direction
    near = [f for f in inner if abs(zs[f] - z0) <= 2.0]
    if not near:
        raise ValueError("no interior faces near the fused point")
    nvec = sum(zs[f] - z0 for f in near)
    theta = math.atan2(nvec.imag, nvec.real) - math.pi / 2.0
    flat = [f for f in outer if abs(zs[f] - z0) <= 3.0]
    if len({round(zs[f].imag, 6) for f in flat}) > 1 \
            and len({round(zs[f].real, 6) for f in flat}) > 1:
        raise ValueError("boundary is not flat near the fused point")

    if w is None:
        target = z0 + 1j * cmath.exp(1j * theta) * (0.25 / mesh)
        w = min((f for f in inner if _color_of(f) == 0),
                key=lambda f: abs(zs[f] - target))
    L = H.values[w]
    if L <= 0:
        raise AssertionError("normalization value is not positive")

    def kernel(z: complex) -> float:
        return (-cmath.exp(1j * theta) / (z - z0)).imag

    kw = kernel(zs[w])
    rot = cmath.exp(-1j * theta)
    r_lo, r_hi = window[0] / mesh, window[1] / mesh
    y_lo = height_cut / mesh
    dev = 0.0
    n_win = 0
    for f in inner:
        dz = zs[f] - z0
        if (rot * dz).imag < y_lo:
            continue
        if r_lo <= abs(dz) <= r_hi:
            n_win += 1
            dev = max(dev, abs(H.values[f] / L - kernel(zs[f]) / kw))
    bmax = max((abs(H.values[f]) for f in outer if abs(zs[f] - z0) > r_lo),
               default=0.0)
    return PoissonProfileReport(z0, theta, w, L, dev, n_win, bmax, mesh)
