"""Ring perception via a minimum cycle basis (Horton candidate set + GF(2)
elimination). Molecules are small, so the cubic candidate set is fine."""
from __future__ import annotations

from collections import deque


def _bfs_tree(root: int, adj: list[list[int]]) -> tuple[list[int], list[int]]:
    parent = [-1] * len(adj)
    depth = [-1] * len(adj)
    depth[root] = 0
    q = deque([root])
    while q:
        u = q.popleft()
        for v in sorted(adj[u]):
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                parent[v] = u
                q.append(v)
    return parent, depth


def _path_to_root(v: int, parent: list[int]) -> list[int]:
    path = [v]
    while parent[path[-1]] >= 0:
        path.append(parent[path[-1]])
    return path


def minimum_cycle_basis(n_atoms: int, edges: list[tuple[int, int]]) -> list[tuple[int, ...]]:
    """Return a minimum cycle basis as a list of atom-index cycles, shortest first."""
    adj: list[list[int]] = [[] for _ in range(n_atoms)]
    edge_index: dict[frozenset, int] = {}
    for k, (a, b) in enumerate(edges):
        adj[a].append(b)
        adj[b].append(a)
        edge_index[frozenset((a, b))] = k

    # cyclomatic number = E - V + components
    seen = [False] * n_atoms
    components = 0
    for s in range(n_atoms):
        if not seen[s]:
            components += 1
            stack = [s]
            seen[s] = True
            while stack:
                u = stack.pop()
                for v in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
    n_rings = len(edges) - n_atoms + components
    if n_rings <= 0:
        return []

    candidates: dict[int, tuple[int, ...]] = {}
    for root in range(n_atoms):
        if not adj[root]:
            continue
        parent, depth = _bfs_tree(root, adj)
        for a, b in edges:
            if depth[a] < 0 or depth[b] < 0:
                continue
            if parent[a] == b or parent[b] == a:
                continue
            pa = _path_to_root(a, parent)
            pb = _path_to_root(b, parent)
            if set(pa) & set(pb) != {root}:
                continue
            cycle = pa[::-1] + pb[:-1]  # root .. a, b .. (child of root)
            mask = 0
            for u, v in zip(cycle, cycle[1:] + cycle[:1]):
                mask |= 1 << edge_index[frozenset((u, v))]
            if mask not in candidates:
                candidates[mask] = tuple(cycle)

    ordered = sorted(candidates.items(), key=lambda kv: (len(kv[1]), sorted(kv[1])))
    basis_rows: dict[int, int] = {}  # pivot bit -> reduced row
    rings: list[tuple[int, ...]] = []
    for mask, cycle in ordered:
        row = mask
        while row:
            pivot = row.bit_length() - 1
            if pivot in basis_rows:
                row ^= basis_rows[pivot]
            else:
                basis_rows[pivot] = row
                rings.append(cycle)
                break
        if len(rings) == n_rings:
            break
    return rings
