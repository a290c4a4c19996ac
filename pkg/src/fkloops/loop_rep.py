"""Loop representation of edge configurations on a domain.

A configuration assigns open/closed to every primal edge.  At each primal
edge midpoint the two arriving medial edges are paired with the two
departing ones: an open edge pairs each arrival with the departure that
turns right (the walk crosses the primal edge), a closed edge pairs with
the left turn (the walk bounces off).  Corners always turn left around
their black face.  Following these successors decomposes the medial edge
set into disjoint cycles, the loops.

Boundary loops are reported as clockwise: renderings use screen
orientation (y axis pointing down), under which a stored turning number
of +4 traces a clockwise curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice_domain import Domain, Domain4, DirectedMedialEdge

SQRT2 = math.sqrt(2.0)


def config_successors(domain: Domain, config: np.ndarray) -> np.ndarray:
    """Successor medial edge under the configuration, for every medial edge."""
    nxt = domain.succ_black.copy()
    mids = domain.head_pedge >= 0
    state = np.zeros(domain.n_medial, dtype=bool)
    state[mids] = np.asarray(config, dtype=np.uint8)[domain.head_pedge[mids]] == 1
    nxt[state] = domain.succ_white[state]
    return nxt


def cross_successors(domain: Domain, config: np.ndarray) -> np.ndarray:
    """The other departing edge at each midpoint head; -1 at corners."""
    cross = np.full(domain.n_medial, -1, dtype=np.int64)
    mids = domain.head_pedge >= 0
    state = np.zeros(domain.n_medial, dtype=bool)
    state[mids] = np.asarray(config, dtype=np.uint8)[domain.head_pedge[mids]] == 1
    cross[mids] = domain.succ_black[mids]
    closed_mid = mids & ~state
    cross[closed_mid] = domain.succ_white[closed_mid]
    return cross


def _turning_of(domain: Domain, edges: Sequence[int]) -> int:
    t = 0
    dirs = domain.medial_dir
    for k in range(len(edges)):
        d1 = int(dirs[edges[k]])
        d2 = int(dirs[edges[(k + 1) % len(edges)]])
        t += ((d2 - d1 + 1) % 4) - 1
    return t


@dataclass(frozen=True)
class Loop:
    edges: tuple[int, ...]
    turning: int

    @property
    def orientation(self) -> str:
        return "clockwise" if self.turning == 4 else "counterclockwise"

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class LoopEnsemble:
    domain: Domain
    config: np.ndarray
    loops: tuple[Loop, ...]

    @property
    def n_loops(self) -> int:
        return len(self.loops)

    def successor(self) -> np.ndarray:
        return config_successors(self.domain, self.config)

    def touches_boundary(self, loop: Loop) -> bool:
        return any(self.domain.is_contour[e] and self.domain.edge_position[e] >= 0
                   for e in loop.edges)


def extract_loops(domain: Domain, config: np.ndarray) -> LoopEnsemble:
    config = np.asarray(config, dtype=np.uint8)
    if config.shape != (domain.n_edges,):
        raise ValueError(f"config must have one state per primal edge ({domain.n_edges})")
    nxt = config_successors(domain, config)
    ne = domain.n_medial
    seen = np.zeros(ne, dtype=bool)
    loops = []
    for start in range(ne):
        if seen[start]:
            continue
        cyc = []
        e = start
        while not seen[e]:
            seen[e] = True
            cyc.append(e)
            e = int(nxt[e])
        if e != start:
            raise AssertionError("successor walk left its cycle")
        loops.append(Loop(tuple(cyc), _turning_of(domain, cyc)))
    return LoopEnsemble(domain, config, tuple(loops))


def boundary_loops(ensemble: LoopEnsemble, domain: Domain | None = None) -> tuple[Loop, ...]:
    """Loops that contain at least one inner-boundary edge."""
    d = domain if domain is not None else ensemble.domain
    pos = d.edge_position
    return tuple(lp for lp in ensemble.loops if any(pos[e] >= 0 for e in lp.edges))


def loop_weight(ensemble: LoopEnsemble, base: float = SQRT2) -> float:
    return base ** ensemble.n_loops


@dataclass(frozen=True)
class DcnilReport:
    ok: bool
    message: str | None = None


def validate_dcnil(ensemble: LoopEnsemble) -> DcnilReport:
    """Check that the loops are disjoint cycles covering every medial edge
    with configuration-consistent pairings at each vertex."""
    d = ensemble.domain
    ne = d.n_medial
    seen = np.zeros(ne, dtype=np.int64)
    nxt_in_loop = np.full(ne, -1, dtype=np.int64)
    for li, lp in enumerate(ensemble.loops):
        for k, e in enumerate(lp.edges):
            seen[e] += 1
            nxt_in_loop[e] = lp.edges[(k + 1) % len(lp.edges)]
    if (seen > 1).any():
        e = int(np.argmax(seen > 1))
        return DcnilReport(False, f"medial edge {e} appears in more than one loop position")
    if (seen == 0).any():
        e = int(np.argmax(seen == 0))
        return DcnilReport(False, f"medial edge {e} is not covered by any loop")
    nxt = config_successors(d, ensemble.config)
    bad = np.nonzero(nxt_in_loop != nxt)[0]
    if bad.size:
        e = int(bad[0])
        return DcnilReport(
            False,
            f"loop transition at edge {e} disagrees with the configuration pairing")
    return DcnilReport(True)


def check_loop_cluster_identity(ensemble: LoopEnsemble) -> bool:
    """Per-sample count identity: #loops == #clusters + #dual clusters - 1.

    Clusters are counted without boundary identification; dual clusters on
    the interior whites plus the single outer dual vertex.
    """
    from .fk_sampler import count_clusters, count_dual_clusters

    d = ensemble.domain
    k = count_clusters(d, ensemble.config, wired=False)
    kd = count_dual_clusters(d, ensemble.config)
    return ensemble.n_loops == k + kd - 1


# -- top and bottom arcs ----------------------------------------------------

@dataclass(frozen=True)
class SplitArcs:
    top: tuple[int, ...]
    bottoms: tuple[tuple[int, ...], ...]


def top_bottom_split(ensemble: LoopEnsemble, loop: Loop, root: int) -> SplitArcs:
    """Split a boundary-visiting loop into its top arc and bottom arcs.

    The loop is cut at every visit of an inner-boundary vertex into
    maximal pieces (interior excursions and runs of boundary edges).  With
    boundary distance measured from the root along the traversal, exactly
    one piece moves away from the root; that piece is the top arc.  For
    loops wrapping past the root the piece with the largest advance is
    used.
    """
    d = ensemble.domain
    P = len(d.inner_boundary)
    edges = loop.edges
    n = len(edges)
    # vertex visited after edge k, if it lies on the inner boundary
    vpos = []
    for e in edges:
        h = (int(d.medial_head[e, 0]), int(d.medial_head[e, 1]))
        vpos.append(d.vertex_position.get(h, -1))
    cuts = [k for k in range(n) if vpos[k] >= 0]
    if not cuts:
        raise ValueError("loop never visits the inner boundary")

    pieces = []
    for i, k in enumerate(cuts):
        k2 = cuts[(i + 1) % len(cuts)]
        seg = tuple(edges[(k + 1 + j) % n] for j in range((k2 - k - 1) % n + 1))
        # piece runs from the vertex after edge k to the vertex after edge k2
        pieces.append((vpos[k], vpos[k2], seg))
    # merge pure boundary runs: consecutive contour edges stay one piece by
    # construction since every contour edge ends on a boundary vertex; an
    # interior excursion is likewise one piece per boundary touch.
    merged = []
    i = 0
    while i < len(pieces):
        u, v, seg = pieces[i]
        if all(d.edge_position[e] >= 0 for e in seg):
            while i + 1 < len(pieces):
                u2, v2, seg2 = pieces[i + 1]
                if all(d.edge_position[e] >= 0 for e in seg2):
                    v, seg = v2, seg + seg2
                    i += 1
                else:
                    break
        merged.append((u, v, seg))
        i += 1
    # boundary runs may straddle the cyclic seam of the piece list
    if len(merged) > 1:
        bnd = lambda p: all(d.edge_position[e] >= 0 for e in p[2])
        if bnd(merged[0]) and bnd(merged[-1]):
            u, _, seg = merged[-1]
            _, v, seg2 = merged[0]
            merged = [(u, v, seg + seg2)] + merged[1:-1]

    def advance(u, v):
        return ((v - root) % P) - ((u - root) % P)

    ups = [p for p in merged if advance(p[0], p[1]) > 0]
    if len(ups) == 1:
        top = ups[0]
    else:
        top = max(merged, key=lambda p: advance(p[0], p[1]))
    bottoms = tuple(p[2] for p in merged if p is not top)
    return SplitArcs(top[2], bottoms)


# -- marked four-point structure -------------------------------------------

def _forced_config(domain4: Domain4, config: np.ndarray) -> np.ndarray:
    cfg = np.asarray(config, dtype=np.uint8).copy()
    for p in domain4.forced_closed:
        cfg[p] = 0
    return cfg


def white_arc_edges(domain4: Domain4) -> tuple[int, ...]:
    """Inner-boundary edges along the wired-white arcs ab and cd.

    These edges are absent from the marked graph: the identified white
    boundary reflects the walk straight back into the domain.
    """
    d = domain4.domain
    return tuple(d.inner_boundary[p] for lab in ("ab", "cd")
                 for p in domain4.arcs[lab])


def marked_successors(domain4: Domain4, config: np.ndarray) -> np.ndarray:
    """Walk successors on the four-marked graph.

    The boundary edges along the white arcs ab and cd do not exist there
    (-2); at the white-arc midpoints between the marks the walk reflects
    from the interior arrival straight to the interior departure.  The
    inward mark edges at a and c start the two strands and the interior
    arrivals at b and d end them (-1).
    """
    cfg = _forced_config(domain4, config)
    d = domain4.domain
    nxt = config_successors(d, cfg)
    marks = set(domain4.pos.values())
    for lab in ("ab", "cd"):
        for p in domain4.arcs[lab]:
            nxt[d.inner_boundary[p]] = -2
            if d.ring_pedge[p] >= 0 and p not in marks:
                e1, e2, f1, f2 = d.roles_at(p)
                nxt[e1] = f2
    nxt[domain4.roles["b"][0]] = -1
    nxt[domain4.roles["d"][0]] = -1
    return nxt


@dataclass(frozen=True)
class ArcDecomposition:
    """Strands and loops of a configuration on a four-marked domain.

    gamma1 runs from a, gamma2 from c; each ends arriving at b or d.
    `pattern` is "(ab)(cd)" when gamma1 connects a to b (then gamma2
    connects c to d) and "(ad)(cb)" when gamma1 connects a to d.  The
    target curve gamma_hat always ends at d: it is gamma2 alone in the
    first pattern and gamma2 followed by the outer ab arc and gamma1 in
    the second.  `n_loops` counts full cycles only; strands never count.
    """
    domain4: Domain4
    gamma1: tuple[int, ...]
    gamma2: tuple[int, ...]
    loops: tuple[tuple[int, ...], ...]
    pattern: str

    @property
    def n_loops(self) -> int:
        return len(self.loops)

    @property
    def has_outer_arc(self) -> bool:
        return self.pattern == "(ad)(cb)"

    @property
    def gamma_hat_parts(self) -> tuple[tuple[int, ...], ...]:
        if self.pattern == "(ab)(cd)":
            return (self.gamma2,)
        return (self.gamma2, self.gamma1)

    @property
    def gamma_hat_edges(self) -> tuple[int, ...]:
        out: tuple[int, ...] = ()
        for part in self.gamma_hat_parts:
            out = out + part
        return out


def arc_decompose(domain4: Domain4, config: np.ndarray) -> ArcDecomposition:
    d = domain4.domain
    nxt = marked_successors(domain4, config)

    def walk(start: int) -> tuple[int, ...]:
        seq = [start]
        e = start
        for _ in range(d.n_medial + 1):
            e2 = int(nxt[e])
            if e2 < 0:
                return tuple(seq)
            seq.append(e2)
            e = e2
        raise AssertionError("marked chain walk did not terminate")

    ra = domain4.roles["a"]
    rb = domain4.roles["b"]
    rc = domain4.roles["c"]
    rd = domain4.roles["d"]
    gamma1 = walk(ra[3])
    gamma2 = walk(rc[3])

    ends = {gamma1[-1], gamma2[-1]}
    if ends != {rb[0], rd[0]}:
        raise AssertionError("strands do not end at the outward marks b and d")
    pattern = "(ab)(cd)" if gamma1[-1] == rb[0] else "(ad)(cb)"

    used = nxt == -2
    for seq in (gamma1, gamma2):
        for e in seq:
            used[e] = True
    loops = []
    for start in range(d.n_medial):
        if used[start]:
            continue
        cyc = []
        e = start
        while not used[e]:
            used[e] = True
            cyc.append(e)
            e = int(nxt[e])
        if e != start:
            raise AssertionError("leftover marked edges do not form cycles")
        loops.append(tuple(cyc))
    return ArcDecomposition(domain4, gamma1, gamma2, tuple(loops), pattern)


def marked_weight_exponent(decomp: ArcDecomposition, mode: str) -> int:
    """Exponent k of the configuration weight sqrt(2)**k under the marked law.

    Crossing mode counts loops only; observable mode adds one for the
    internal pattern, where the outer ab arc closes gamma1 into a loop.
    """
    if mode not in ("crossing", "observable"):
        raise ValueError(f"unknown mode {mode!r}")
    bonus = 1 if (mode == "observable" and decomp.pattern == "(ab)(cd)") else 0
    return decomp.n_loops + bonus


@dataclass(frozen=True)
class MarkedMeasure:
    domain4: Domain4
    mode: str
    configs: np.ndarray        # (n, n_edges) uint8, forced edges closed
    weight_exponents: np.ndarray
    probs: np.ndarray
    decomps: tuple[ArcDecomposition, ...]

    def sample_index(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        return np.searchsorted(cum, rng.random(n), side="right")


def enumerate_marked_measure(domain4: Domain4, mode: str = "crossing",
                             cap: int = 20) -> MarkedMeasure:
    """Exact weight table over the free edges of a four-marked domain."""
    free = domain4.free_pedges
    nf = len(free)
    if nf > cap:
        raise ValueError(f"{nf} free edges exceed enumeration cap {cap}")
    d = domain4.domain
    n = 1 << nf
    configs = np.zeros((n, d.n_edges), dtype=np.uint8)
    exps = np.empty(n, dtype=np.int64)
    decomps = []
    for i in range(n):
        for k, pe in enumerate(free):
            configs[i, pe] = (i >> k) & 1
        dec = arc_decompose(domain4, configs[i])
        decomps.append(dec)
        exps[i] = marked_weight_exponent(dec, mode)
    w = np.exp2((exps - exps.max()) / 2.0)
    probs = w / w.sum()
    return MarkedMeasure(domain4, mode, configs, exps, probs, tuple(decomps))


# -- serialization -----------------------------------------------------------

def loop_to_jsonable(domain: Domain, loop: Loop) -> dict:
    return {
        "edges": [[*domain.medial_edge(e).tail, int(domain.medial_dir[e])]
                  for e in loop.edges],
        "orientation": loop.orientation,
        "turning": loop.turning,
    }


def ensemble_to_jsonable(ensemble: LoopEnsemble) -> dict:
    return {
        "n_loops": ensemble.n_loops,
        "loops": [loop_to_jsonable(ensemble.domain, lp) for lp in ensemble.loops],
    }
