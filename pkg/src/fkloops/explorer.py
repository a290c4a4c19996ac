"""Exploration tree of the loop representation.

A branch targets a boundary vertex w.  It walks the configuration
successors starting from the root's boundary edge; whenever the next
edge would land on the boundary window between w and the root (going
forward along the contour from w), the walk jumps to the other edge
leaving the same vertex instead, until it finally closes into the
target's own boundary edge.  Concatenating over targets in contour
order yields a spanning exploration of every boundary-touching loop:
the branch to a loop's attachment point enters the loop by a jump at
that point and then traverses the whole loop back to it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice_domain import Coord, Domain
from .loop_rep import (LoopEnsemble, boundary_loops, config_successors,
                       cross_successors)

__all__ = [
    "Branch", "ExplorationTree", "branch_to", "loops_to_tree",
    "tree_to_loops", "check_target_independence", "winding_turns",
    "path_winding",
]


@dataclass(frozen=True)
class Branch:
    """One chordal branch of the exploration tree.

    `edges` runs from the first edge after the root's boundary edge up to
    and including the target's boundary edge.  `jump_steps[i]` indexes the
    edge appended by the i-th jump; `jump_vertices[i]` is the boundary
    midpoint where it happened.
    """
    root_position: int
    target_position: int
    edges: tuple[int, ...]
    jump_steps: tuple[int, ...]
    jump_vertices: tuple[Coord, ...]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_steps)


def _window_len(domain: Domain, root: int, target: int) -> int:
    P = len(domain.inner_boundary)
    return (root - target) % P


def branch_to(domain: Domain, config: np.ndarray, target: int,
              root: int = 0,
              nxt: np.ndarray | None = None,
              cross: np.ndarray | None = None) -> Branch:
    """Walk the exploration branch from the root to a boundary position."""
    P = len(domain.inner_boundary)
    if not (0 <= target < P and 0 <= root < P):
        raise ValueError("positions must index the inner boundary")
    if nxt is None:
        nxt = config_successors(domain, config)
    if cross is None:
        cross = cross_successors(domain, config)
    edge_pos = domain.edge_position
    heads = domain.medial_head
    f_end = domain.inner_boundary[target]
    win = _window_len(domain, root, target)

    edges: list[int] = []
    jump_steps: list[int] = []
    jump_vertices: list[Coord] = []
    e = int(domain.inner_boundary[root])
    limit = 2 * domain.n_medial + 4
    for _ in range(limit):
        cand = int(nxt[e])
        if cand == f_end:
            edges.append(cand)
            return Branch(root, target, tuple(edges), tuple(jump_steps),
                          tuple(jump_vertices))
        p = edge_pos[cand]
        if p >= 0 and (p - target) % P <= win:
            other = int(cross[e])
            if other < 0:
                raise AssertionError("jump required at a corner vertex")
            jump_steps.append(len(edges))
            jump_vertices.append((int(heads[e, 0]), int(heads[e, 1])))
            cand = other
        edges.append(cand)
        e = cand
    raise AssertionError("branch walk did not terminate")


@dataclass(frozen=True)
class ExplorationTree:
    domain: Domain
    config: np.ndarray
    root_position: int
    branches: tuple[Branch, ...]

    @property
    def n_jumps(self) -> int:
        return sum(b.n_jumps for b in self.branches)


def loops_to_tree(domain: Domain, config: np.ndarray,
                  root: int = 0) -> ExplorationTree:
    """Branches from the root to every boundary position."""
    nxt = config_successors(domain, config)
    cross = cross_successors(domain, config)
    P = len(domain.inner_boundary)
    branches = tuple(branch_to(domain, config, t, root, nxt, cross)
                     for t in range(P))
    return ExplorationTree(domain, np.asarray(config, dtype=np.uint8),
                           root, branches)


def _canon(cycle: tuple[int, ...]) -> tuple[int, ...]:
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]


def tree_to_loops(tree: ExplorationTree) -> tuple[tuple[int, ...], ...]:
    """Recover all boundary-touching loops from the branches alone.

    The root branch is its own loop.  Any other loop is read off the
    branch to its attachment point: the walk jumps into the loop there
    and follows it around without further jumps, so the recovered loop
    is the branch suffix after the first arrival at the target vertex,
    accepted when that suffix starts with the branch's final jump.
    """
    d = tree.domain
    heads = d.medial_head
    out = [_canon(tree.branches[tree.root_position].edges)]
    for p, br in enumerate(tree.branches):
        if p == tree.root_position:
            continue
        w = d.position_vertex[p]
        k = None
        for i, e in enumerate(br.edges):
            if (int(heads[e, 0]), int(heads[e, 1])) == w:
                k = i
                break
        if k is None or k + 1 >= len(br.edges):
            continue
        if (k + 1) not in br.jump_steps:
            continue
        if any(j > k + 1 for j in br.jump_steps):
            continue
        out.append(_canon(br.edges[k + 1:]))
    return tuple(out)


def recovered_matches_ensemble(tree: ExplorationTree,
                               ensemble: LoopEnsemble) -> bool:
    want = {_canon(l.edges) for l in boundary_loops(ensemble)}
    got = tree_to_loops(tree)
    return len(got) == len(want) and set(got) == want


def check_target_independence(domain: Domain, config: np.ndarray,
                              target_a: int, target_b: int,
                              root: int = 0) -> bool:
    """Branches agree up to the first window event of the wider target.

    Requires target_a at most as far forward of the root as target_b, so
    the window of target_a contains the window of target_b.
    """
    P = len(domain.inner_boundary)
    if (target_a - root) % P > (target_b - root) % P:
        raise ValueError("target_a must precede target_b from the root")
    ba = branch_to(domain, config, target_a, root)
    bb = branch_to(domain, config, target_b, root)
    win = _window_len(domain, root, target_a)
    edge_pos = domain.edge_position
    nxt = config_successors(domain, config)
    k = 0
    e = int(domain.inner_boundary[root])
    while True:
        cand = int(nxt[e])
        p = edge_pos[cand]
        if p >= 0 and (p - target_a) % P <= win:
            break
        k += 1
        e = cand
    return ba.edges[:k] == bb.edges[:k]


# -- winding -----------------------------------------------------------------

def winding_turns(d1: int, d2: int) -> int:
    """Signed quarter turns from direction d1 to d2; reversals count +2."""
    return ((d2 - d1 + 1) % 4) - 1


def path_winding(domain: Domain, edges) -> int:
    """Total quarter turns accumulated along a directed edge path."""
    dirs = domain.medial_dir
    total = 0
    for a, b in zip(edges, edges[1:]):
        total += winding_turns(int(dirs[a]), int(dirs[b]))
    return total


def branch_to_vertices(domain: Domain, branch: Branch) -> list[Coord]:
    """Vertex trajectory of a branch, starting at the root vertex."""
    heads = domain.medial_head
    start = domain.position_vertex[branch.root_position]
    out = [start]
    for e in branch.edges:
        out.append((int(heads[e, 0]), int(heads[e, 1])))
    return out
