"""Independent reference computations used by the tests."""

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra


def graph_distance(surface, p, q, nu=61, nv=61, reach=6, margin=0.25, turn=0.5):
    """Shortest path between p and q through a dense graph on the surface.

    Nodes are a grid in the tangent plane at the projected midpoint, aligned
    with q - p and projected onto the surface; each node links to every grid
    neighbour within ``reach`` steps, weighted by the chord. The grid is
    turned by ``turn`` radians so the path does not follow a grid line.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    mid = surface.project(0.5 * (p + q)[None])[0]
    n = surface.normal(mid[None])[0]
    e1 = (q - p) - np.dot(q - p, n) * n
    D = np.linalg.norm(e1)
    e1 /= D
    e2 = np.cross(n, e1)
    e1, e2 = np.cos(turn) * e1 + np.sin(turn) * e2, -np.sin(turn) * e1 + np.cos(turn) * e2
    u = np.linspace(-(0.5 + margin) * D, (0.5 + margin) * D, nu)
    v = np.linspace(-(0.5 + margin) * D, (0.5 + margin) * D, nv)
    U, V = np.meshgrid(u, v, indexing="ij")
    X = surface.project((mid + U[..., None] * e1 + V[..., None] * e2).reshape(-1, 3))
    idx = np.arange(nu * nv).reshape(nu, nv)
    a = int(np.argmin(np.linalg.norm(X - p, axis=1)))
    b = int(np.argmin(np.linalg.norm(X - q, axis=1)))
    X[a], X[b] = p, q
    rows, cols = [], []
    for di in range(0, reach + 1):
        for dj in range(-reach, reach + 1):
            if di == 0 and dj <= 0:
                continue
            i0, i1 = idx[: nu - di], idx[di:]
            if dj >= 0:
                rows.append(i0[:, : nv - dj].ravel())
                cols.append(i1[:, dj:].ravel())
            else:
                rows.append(i0[:, -dj:].ravel())
                cols.append(i1[:, : nv + dj].ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    N = surface.normal(X)
    w = surface.short_distance(X[rows], X[cols], N[rows], N[cols])
    G = coo_matrix((w, (rows, cols)), shape=(len(X), len(X))).tocsr()
    return float(dijkstra(G, directed=False, indices=a)[b])


def sphere_distance(radius, p, q):
    c = np.clip(np.dot(p, q) / radius**2, -1.0, 1.0)
    return radius * float(np.arccos(c))
