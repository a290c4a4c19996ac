"""Doubled-coordinate lattice geometry: domains, medial edges, boundaries, marks.

All combinatorics lives on integer pairs ``(x2, y2)`` at twice the natural
lattice unit so that edge midpoints stay integral.  A point is a *black*
face center when ``(x2 + y2) % 4 == 0``, a *white* face center when the
residue is 2 (both have even coordinates), and a *medial* vertex when both
coordinates are odd.  A domain is a finite, edge-connected, simply
connected set of black faces.  Primal edges join diagonally adjacent
blacks.  Each medial edge is stored once, directed with its black face on
the left, which runs counterclockwise around every black face.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

Coord = tuple[int, int]

E, N, W, S = 0, 1, 2, 3
DIR_VEC: tuple[Coord, ...] = ((2, 0), (0, 2), (-2, 0), (0, -2))
DIR_NAME = ("E", "N", "W", "S")

# Unit tangents of the four directions in the doubled-coordinate plane.
_DX = (2, 0, -2, 0)
_DY = (0, 2, 0, -2)

# Offsets from edge tail to the face center on the right / left of the edge.
_RIGHT_FACE = ((1, -1), (1, 1), (-1, 1), (-1, -1))
_LEFT_FACE = ((1, 1), (-1, 1), (-1, -1), (1, -1))


class DomainError(ValueError):
    """Raised when a set of black faces fails an admissibility requirement."""


def is_black(v: Coord) -> bool:
    return v[0] % 2 == 0 and (v[0] + v[1]) % 4 == 0


def is_white(v: Coord) -> bool:
    return v[0] % 2 == 0 and (v[0] + v[1]) % 4 == 2


def is_medial(v: Coord) -> bool:
    return v[0] % 2 == 1 and v[1] % 2 == 1


def grid_to_black(i: int, j: int) -> Coord:
    """Black face center for integer grid coordinates (i, j).

    The grid axes run along the diagonals of the doubled-coordinate plane,
    so a w x h grid of blacks forms a diamond-free solid rectangle of
    diagonally adjacent faces.
    """
    return (2 * i + 2 * j, 2 * j - 2 * i)


def to_grid_complex(v: Coord) -> complex:
    """Map a doubled coordinate to the complex plane with grid axes.

    Blacks land on integer points (i + 1j*j matching grid_to_black) and
    medial vertices on half-integer points.
    """
    return (v[0] + 1j * v[1]) * (1 + 1j) / 4


class DirectedMedialEdge(NamedTuple):
    tail: Coord
    direction: int

    @property
    def head(self) -> Coord:
        return (self.tail[0] + _DX[self.direction], self.tail[1] + _DY[self.direction])


def _turn(d1: int, d2: int) -> int:
    """Signed quarter turns from direction d1 to d2, with U-turns counted +2."""
    return ((d2 - d1 + 1) % 4) - 1


class Domain:
    """A finite simply connected set of black faces with its medial graph.

    Medial edges are indexed ``4 * black_index + side`` where side 0..3 is
    the bottom/right/top/left side of the black face; the side index equals
    the direction of travel, so side 0 runs east along the bottom.  The
    inner boundary is the cycle of medial edges whose right white face is
    not interior, traced in the direction of the stored edges.
    """

    def __init__(self, blacks: Iterable[Coord]):
        blk = sorted({(int(x), int(y)) for x, y in blacks})
        if not blk:
            raise DomainError("domain needs at least one black face")
        for v in blk:
            if not is_black(v):
                raise DomainError(f"{v} is not a black face center")
        self.blacks: tuple[Coord, ...] = tuple(blk)
        self.black_index: dict[Coord, int] = {v: i for i, v in enumerate(blk)}
        self._build_pedges()
        self._build_medial()
        self._check_connected()
        self._build_interior_whites()
        self._check_simply_connected()
        self._build_succ()
        self._trace_inner_boundary()
        self._build_dual()

    # -- construction ---------------------------------------------------

    def _build_pedges(self):
        pairs = []
        for v in self.blacks:
            for off in ((2, 2), (2, -2)):
                w = (v[0] + off[0], v[1] + off[1])
                if w in self.black_index:
                    pairs.append((self.black_index[v], self.black_index[w]))
        mids = [self._pedge_mid_of(a, b) for a, b in pairs]
        order = sorted(range(len(pairs)), key=lambda k: mids[k])
        self.pedges: tuple[tuple[int, int], ...] = tuple(pairs[k] for k in order)
        self.pedge_mid: tuple[Coord, ...] = tuple(mids[k] for k in order)
        self._mid_to_pedge: dict[Coord, int] = {m: i for i, m in enumerate(self.pedge_mid)}

    def _pedge_mid_of(self, a: int, b: int) -> Coord:
        va, vb = self.blacks[a], self.blacks[b]
        return ((va[0] + vb[0]) // 2, (va[1] + vb[1]) // 2)

    def _build_medial(self):
        nb = len(self.blacks)
        ne = 4 * nb
        tails = np.empty((ne, 2), dtype=np.int64)
        for bi, (bx, by) in enumerate(self.blacks):
            # CCW corners: side 0 starts at the SW corner of the face.
            tails[4 * bi + E] = (bx - 1, by - 1)
            tails[4 * bi + N] = (bx + 1, by - 1)
            tails[4 * bi + W] = (bx + 1, by + 1)
            tails[4 * bi + S] = (bx - 1, by + 1)
        dirs = np.tile(np.arange(4, dtype=np.int64), nb)
        self.medial_tail = tails
        self.medial_dir = dirs
        heads = tails.copy()
        heads[:, 0] += np.take(_DX, dirs)
        heads[:, 1] += np.take(_DY, dirs)
        self.medial_head = heads

        self._edge_from: dict[tuple[Coord, int], int] = {}
        self._edge_into: dict[tuple[Coord, int], int] = {}
        for eid in range(ne):
            t = (int(tails[eid, 0]), int(tails[eid, 1]))
            h = (int(heads[eid, 0]), int(heads[eid, 1]))
            d = int(dirs[eid])
            self._edge_from[(t, d)] = eid
            self._edge_into[(h, d)] = eid

        hp = np.full(ne, -1, dtype=np.int64)
        for eid in range(ne):
            h = (int(heads[eid, 0]), int(heads[eid, 1]))
            hp[eid] = self._mid_to_pedge.get(h, -1)
        self.head_pedge = hp

    def _check_connected(self):
        nb = len(self.blacks)
        if nb == 1:
            return
        adj: list[list[int]] = [[] for _ in range(nb)]
        for a, b in self.pedges:
            adj[a].append(b)
            adj[b].append(a)
        seen = [False] * nb
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        if not all(seen):
            raise DomainError("black faces are not edge-connected")

    def _build_interior_whites(self):
        cand: set[Coord] = set()
        for bx, by in self.blacks:
            for dx, dy in ((2, 0), (-2, 0), (0, 2), (0, -2)):
                cand.add((bx + dx, by + dy))
        interior = []
        for w in sorted(cand):
            nbrs = ((w[0] + 2, w[1]), (w[0] - 2, w[1]), (w[0], w[1] + 2), (w[0], w[1] - 2))
            if all(u in self.black_index for u in nbrs):
                interior.append(w)
        self.interior_whites: tuple[Coord, ...] = tuple(interior)
        self._interior_white_set = frozenset(interior)
        self._white_index = {w: i for i, w in enumerate(interior)}

    def _check_simply_connected(self):
        v = len(self.blacks)
        e = len(self.pedges)
        f = len(self.interior_whites)
        if v - e + f != 1:
            raise DomainError(
                f"not simply connected: V - E + F = {v} - {e} + {f} = {v - e + f} != 1"
            )

    def _build_succ(self):
        ne = 4 * len(self.blacks)
        sb = np.empty(ne, dtype=np.int64)
        for eid in range(ne):
            sb[eid] = 4 * (eid // 4) + (eid % 4 + 1) % 4
        self.succ_black = sb

        sw = np.full(ne, -1, dtype=np.int64)
        for eid in range(ne):
            if self.head_pedge[eid] < 0:
                continue
            h = (int(self.medial_head[eid, 0]), int(self.medial_head[eid, 1]))
            d = (int(self.medial_dir[eid]) - 1) % 4
            sw[eid] = self._edge_from[(h, d)]
        self.succ_white = sw

        rw = np.empty((ne, 2), dtype=np.int64)
        lb = np.empty(ne, dtype=np.int64)
        for eid in range(ne):
            d = int(self.medial_dir[eid])
            t = self.medial_tail[eid]
            rw[eid] = (t[0] + _RIGHT_FACE[d][0], t[1] + _RIGHT_FACE[d][1])
            lb[eid] = eid // 4
        self.right_white = rw
        self.left_black = lb

        contour = np.empty(ne, dtype=bool)
        for eid in range(ne):
            w = (int(rw[eid, 0]), int(rw[eid, 1]))
            contour[eid] = w not in self._interior_white_set
        self.is_contour = contour

    def _contour_succ(self, eid: int) -> int:
        if self.head_pedge[eid] >= 0:
            return int(self.succ_white[eid])
        return int(self.succ_black[eid])

    def _trace_inner_boundary(self):
        ne = self.n_medial
        todo = {eid for eid in range(ne) if self.is_contour[eid]}
        start = min(
            todo,
            key=lambda e: (
                int(self.medial_tail[e, 0]),
                int(self.medial_tail[e, 1]),
                int(self.medial_dir[e]),
            ),
        )
        order = []
        eid = start
        for _ in range(ne + 1):
            order.append(eid)
            todo.discard(eid)
            eid = self._contour_succ(eid)
            if eid == start:
                break
        else:
            raise DomainError("inner boundary trace did not close")
        if todo:
            raise DomainError("inner boundary is not a single cycle")

        turning = 0
        for k, eid in enumerate(order):
            nxt = order[(k + 1) % len(order)]
            turning += _turn(int(self.medial_dir[eid]), int(self.medial_dir[nxt]))
        if turning != 4:
            raise DomainError(f"inner boundary turning number {turning} != 4")

        self.inner_boundary: tuple[int, ...] = tuple(order)
        pos = np.full(ne, -1, dtype=np.int64)
        for k, eid in enumerate(order):
            pos[eid] = k
        self.edge_position = pos
        self.ring_pedge = tuple(int(self.head_pedge[eid]) for eid in order)
        verts = []
        vpos: dict[Coord, int] = {}
        for k, eid in enumerate(order):
            h = (int(self.medial_head[eid, 0]), int(self.medial_head[eid, 1]))
            if h in vpos:
                raise DomainError("boundary vertex visited twice on inner boundary")
            vpos[h] = k
            verts.append(h)
        self.position_vertex: tuple[Coord, ...] = tuple(verts)
        self.vertex_position: dict[Coord, int] = vpos
        self.boundary_blacks = frozenset(int(self.left_black[eid]) for eid in order)

    def _build_dual(self):
        # one dual vertex per interior white plus a single outer vertex.
        self.dual_out = len(self.interior_whites)
        self.n_dual = self.dual_out + 1
        de = np.empty((len(self.pedges), 2), dtype=np.int64)
        for pi, m in enumerate(self.pedge_mid):
            a, b = self.pedges[pi]
            va, vb = self.blacks[a], self.blacks[b]
            # perpendicular offset from the pedge midpoint to its two whites
            perp = (1, -1) if vb[1] > va[1] else (1, 1)
            w1 = (m[0] + perp[0], m[1] + perp[1])
            w2 = (m[0] - perp[0], m[1] - perp[1])
            de[pi, 0] = self._white_index.get(w1, self.dual_out)
            de[pi, 1] = self._white_index.get(w2, self.dual_out)
        self.dual_edges = de

    # -- queries ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.blacks)

    @property
    def n_edges(self) -> int:
        return len(self.pedges)

    @property
    def n_medial(self) -> int:
        return 4 * len(self.blacks)

    def medial_edge(self, eid: int) -> DirectedMedialEdge:
        t = (int(self.medial_tail[eid, 0]), int(self.medial_tail[eid, 1]))
        return DirectedMedialEdge(t, int(self.medial_dir[eid]))

    def edge_id(self, tail: Coord, direction: int) -> int:
        return self._edge_from[(tuple(tail), direction)]

    def edge_into(self, head: Coord, direction: int) -> int:
        return self._edge_into[(tuple(head), direction)]

    def position_of_vertex(self, v: Coord) -> int:
        try:
            return self.vertex_position[tuple(v)]
        except KeyError:
            raise ValueError(f"{v} is not an inner-boundary vertex") from None

    def midpoint_positions(self) -> list[int]:
        return [k for k, p in enumerate(self.ring_pedge) if p >= 0]

    def roles_at(self, pos: int) -> tuple[int, int, int, int]:
        """Edges (e1, e2, f1, f2) meeting the boundary midpoint at `pos`.

        e2 is the inner-boundary edge arriving there, f1 its boundary
        continuation, f2 the interior continuation, and e1 the interior
        edge arriving at the same vertex.
        """
        if self.ring_pedge[pos] < 0:
            raise ValueError(f"position {pos} is not a primal-edge midpoint")
        e2 = self.inner_boundary[pos]
        f1 = int(self.succ_white[e2])
        f2 = int(self.succ_black[e2])
        v = self.position_vertex[pos]
        e1 = self._edge_into[(v, (int(self.medial_dir[e2]) + 2) % 4)]
        return e1, e2, f1, f2


def build_rect_domain(width: int, height: int) -> Domain:
    """Solid width x height block of diagonally adjacent black faces."""
    if width < 1 or height < 1:
        raise DomainError("rectangle sides must be positive")
    return Domain(grid_to_black(i, j) for i in range(width) for j in range(height))


def outer_boundary(domain: Domain) -> list[Coord]:
    """Ordered corner cycle of the closed region (blacks plus touching whites).

    Descriptive decoration only: the traversal keeps the region on the
    right and squeezes through pinch points by preferring the sharpest
    available turn.
    """
    region: set[Coord] = set(domain.blacks)
    for bx, by in domain.blacks:
        for dx, dy in ((2, 0), (-2, 0), (0, 2), (0, -2)):
            region.add((bx + dx, by + dy))
    segs: dict[tuple[Coord, int], Coord] = {}
    for fx, fy in region:
        if (fx, fy - 2) not in region:
            segs[((fx + 1, fy - 1), W)] = (fx - 1, fy - 1)
        if (fx + 2, fy) not in region:
            segs[((fx + 1, fy + 1), S)] = (fx + 1, fy - 1)
        if (fx, fy + 2) not in region:
            segs[((fx - 1, fy + 1), E)] = (fx + 1, fy + 1)
        if (fx - 2, fy) not in region:
            segs[((fx - 1, fy - 1), N)] = (fx - 1, fy + 1)
    if not segs:
        return []
    start = min(segs)
    path = [start[0]]
    cur = start
    for _ in range(len(segs) + 1):
        head = segs[cur]
        nxt = None
        for dd in (-1, 0, 1, 2):
            cand = (head, (cur[1] + dd) % 4)
            if cand in segs and (cand != start or dd != 2):
                nxt = cand
                break
        path.append(head)
        if nxt is None or nxt == start:
            break
        cur = nxt
    return path


# -- domain files ---------------------------------------------------------

def write_domain(domain: Domain, f: IO[str] | str):
    if isinstance(f, str):
        with open(f, "w") as fh:
            write_domain(domain, fh)
            return
    f.write("fkdomain 1\n")
    for x, y in domain.blacks:
        f.write(f"{x} {y}\n")


def read_domain(f: IO[str] | str) -> Domain:
    if isinstance(f, str):
        with open(f) as fh:
            return read_domain(fh)
    header = f.readline().split()
    if header[:2] != ["fkdomain", "1"]:
        raise DomainError("not a fkdomain version 1 file")
    blacks = []
    for line in f:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        x, y = line.split()
        blacks.append((int(x), int(y)))
    return Domain(blacks)


# -- four marked boundary points ------------------------------------------

_ARCS = ("ab", "bc", "cd", "da")


@dataclass(frozen=True)
class Domain4:
    """A domain with four marked boundary midpoints a, b, c, d.

    Marks are boundary positions listed counterclockwise along the inner
    boundary in the order a, d, c, b of the traversal (the conventional
    cyclic labels a, b, c, d run the other way around).  The ab and cd
    boundary arcs carry the forced (closed) primal edges; bc and da stay
    free.  Mark edges a and c point into the domain, b and d outward.
    """

    domain: Domain
    pos: dict
    roles: dict
    arcs: dict
    arc_of_pos: tuple
    forced_closed: frozenset
    free_pedges: tuple

    @property
    def a(self) -> DirectedMedialEdge:
        return self.domain.medial_edge(self.roles["a"][3])

    @property
    def b(self) -> DirectedMedialEdge:
        return self.domain.medial_edge(self.roles["b"][0])

    @property
    def c(self) -> DirectedMedialEdge:
        return self.domain.medial_edge(self.roles["c"][3])

    @property
    def d(self) -> DirectedMedialEdge:
        return self.domain.medial_edge(self.roles["d"][0])

    def mark_edge_id(self, label: str) -> int:
        r = self.roles[label]
        return r[3] if label in ("a", "c") else r[0]

    @property
    def anchor_edge(self) -> int:
        """Interior edge arriving at d; the observable is normalized there."""
        return self.roles["d"][0]

    def mark_vertex(self, label: str) -> Coord:
        return self.domain.position_vertex[self.pos[label]]


def mark_four_points(domain: Domain, positions: Sequence[int]) -> Domain4:
    """Mark boundary midpoints a, b, c, d given by inner-boundary positions.

    `positions` is (pos_a, pos_b, pos_c, pos_d).  Going counterclockwise
    from a, the marks must appear in the order a, d, c, b; all four must
    be midpoints of boundary primal edges and mutually distinct.
    """
    if len(positions) != 4:
        raise ValueError("need exactly four marked positions")
    pa, pb, pc, pd = (int(p) for p in positions)
    P = len(domain.inner_boundary)
    for p in (pa, pb, pc, pd):
        if not (0 <= p < P):
            raise ValueError(f"position {p} out of range")
        if domain.ring_pedge[p] < 0:
            raise ValueError(f"position {p} is a corner, not a primal-edge midpoint")
    rd, rc, rb = ((p - pa) % P for p in (pd, pc, pb))
    if not (0 < rd < rc < rb):
        raise ValueError("marks must be distinct and ordered a, d, c, b along the boundary")

    pos = {"a": pa, "b": pb, "c": pc, "d": pd}
    roles = {lab: domain.roles_at(p) for lab, p in pos.items()}

    def fwd(p_from: int, p_to: int) -> tuple[int, ...]:
        n = (p_to - p_from) % P
        return tuple((p_from + k) % P for k in range(1, n + 1))

    arcs = {"ab": fwd(pb, pa), "bc": fwd(pc, pb), "cd": fwd(pd, pc), "da": fwd(pa, pd)}
    arc_of = [""] * P
    for lab, ps in arcs.items():
        for p in ps:
            arc_of[p] = lab

    forced = {domain.ring_pedge[p] for lab in ("ab", "cd") for p in arcs[lab]
              if domain.ring_pedge[p] >= 0}
    forced.add(domain.ring_pedge[pb])
    forced.add(domain.ring_pedge[pd])
    free = tuple(i for i in range(domain.n_edges) if i not in forced)
    return Domain4(
        domain=domain,
        pos=pos,
        roles=roles,
        arcs={k: tuple(v) for k, v in arcs.items()},
        arc_of_pos=tuple(arc_of),
        forced_closed=frozenset(forced),
        free_pedges=free,
    )


def boundary_arc_membership(domain4: Domain4, v: Coord) -> str:
    """Arc label ('ab', 'bc', 'cd' or 'da') of an inner-boundary vertex."""
    p = domain4.domain.position_of_vertex(v)
    return domain4.arc_of_pos[p]


def rect_corner_marks(domain: Domain, width: int, height: int) -> tuple[int, int, int, int]:
    """Mark positions (a, b, c, d) at the four corners of a rectangle block.

    a sits at grid corner (0, 0), d at (width-1, 0), c at
    (width-1, height-1) and b at (0, height-1), so the two forced arcs ab
    and cd run along the width-1 sides of the block.
    """
    if width < 2 or height < 2:
        raise ValueError("corner marks need at least a 2 x 2 block")

    def mark_of(corner: Coord) -> int:
        bi = domain.black_index[corner]
        for side in range(4):
            eid = 4 * bi + side
            if domain.is_contour[eid] and domain.head_pedge[eid] >= 0:
                p = int(domain.edge_position[eid])
                if p >= 0:
                    return p
        raise ValueError(f"no boundary midpoint at corner {corner}")

    pa = mark_of(grid_to_black(0, 0))
    pd = mark_of(grid_to_black(width - 1, 0))
    pc = mark_of(grid_to_black(width - 1, height - 1))
    pb = mark_of(grid_to_black(0, height - 1))
    return pa, pb, pc, pd
