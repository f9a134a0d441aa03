"""Graph shortest-path reference for the discrete path energy.

A regular grid over a 2-D latent box is turned into an 8-neighbour graph
whose directed edge ``i -> j`` costs ``(|H(G(z_j)) - H(G(z_i))| + phi_j)^2``,
the summand of the discrete energy. Dijkstra then gives the cheapest grid
path between two nodes, independently of any polynomial parametrization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import geodesic
from .gan import critic_values

NEIGHBOURS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass
class GridPath:
    nodes: np.ndarray     # latent points along the path, endpoints included
    edge_sum: float       # sum of edge costs (what Dijkstra minimizes)
    spacing: float        # grid spacing

    @property
    def n_segments(self):
        return len(self.nodes) - 1

    @property
    def energy(self):
        """Discrete energy of the grid path, i.e. ``edge_sum / n_segments``."""
        return self.edge_sum / self.n_segments


def _axis(a, b, h, n):
    """``n`` grid coordinates with spacing ~h centred on (a+b)/2, holding a and b exactly."""
    lo = 0.5 * (a + b) - 0.5 * (n - 1) * h
    coords = lo + h * np.arange(n)
    ia = int(np.clip(np.rint((a - lo) / h), 0, n - 1))
    ib = int(np.clip(np.rint((b - lo) / h), 0, n - 1))
    if ia == ib and a != b:
        ib = ia + 1 if b > a else ia - 1
    coords[ia] = a
    coords[ib] = b
    if np.any(np.diff(coords) < 0):
        raise ValueError("grid construction produced non-monotone coordinates")
    return coords, ia, ib


def latent_grid(z_start, z_end, n=64, padding=0.5):
    """Grid axes covering both endpoints, which land exactly on grid nodes.

    The spacing is set by the longer endpoint separation and the box extends
    ``padding`` times that separation beyond the endpoints on each side.
    """
    z_start = np.asarray(z_start, dtype=np.float64)
    z_end = np.asarray(z_end, dtype=np.float64)
    if z_start.shape != (2,) or z_end.shape != (2,):
        raise ValueError("the grid oracle works on 2-D latent spaces only")
    span = np.max(np.abs(z_end - z_start))
    if span == 0:
        raise ValueError("endpoints coincide")
    h = span * (1.0 + 2.0 * padding) / (n - 1)
    xs, ia0, ib0 = _axis(z_start[0], z_end[0], h, n)
    ys, ia1, ib1 = _axis(z_start[1], z_end[1], h, n)
    return xs, ys, (ia0, ia1), (ib0, ib1), h


def grid_shortest_path(z_start, z_end, model, method, calib=None, n=64, padding=0.5):
    xs, ys, s_idx, e_idx, h = latent_grid(z_start, z_end, n, padding)
    Z = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    X = model.generate(Z)
    H = method.features()
    Y = X if H is None else H(X)
    lam_eff = method.lam / Y.shape[1] if method.penalized else 0.0
    D = critic_values(model, X, calib)[1] if lam_eff > 0 else None

    idx = np.arange(n * n).reshape(n, n)
    rows, cols, costs = [], [], []
    for di, dj in NEIGHBOURS:
        src = idx[max(0, -di):n - max(0, di), max(0, -dj):n - max(0, dj)].ravel()
        dst = idx[max(0, di):n - max(0, -di), max(0, dj):n - max(0, -dj)].ravel()
        seg = np.linalg.norm(Y[dst] - Y[src], axis=1)
        if lam_eff > 0:
            d = np.sqrt(D[src] * D[dst]) if method.use_geometric_averaging else D[dst]
            phi = lam_eff / (d + method.eps)
        else:
            phi = 0.0
        rows.append(src)
        cols.append(dst)
        costs.append((seg + phi) ** 2)
    costs = np.concatenate(costs)
    # csgraph treats explicit zeros as missing edges
    costs = np.maximum(costs, np.finfo(float).tiny)
    graph = csr_matrix((costs, (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n))
    start, end = idx[s_idx], idx[e_idx]
    dist, pred = dijkstra(graph, directed=True, indices=start, return_predecessors=True)
    if not np.isfinite(dist[end]):
        raise RuntimeError("end node unreachable")
    path = [end]
    while path[-1] != start:
        path.append(pred[path[-1]])
    path = path[::-1]
    return GridPath(Z[path], float(dist[end]), h)


def curve_energy_at(curve, model, method, n_segments, calib=None):
    """Energy of ``curve`` discretized with ``n_segments`` segments."""
    z = geodesic.discretize(curve, n_segments + 1)
    return geodesic.path_energy(z, model, method, calib)


def curve_energy_at_spacing(curve, model, method, spacing, n_segments, calib=None, n_fine=4096):
    """Sum of energy terms with segments of latent length ~``spacing``, divided by ``n_segments``.

    Puts a curve on the same footing as a grid path: as many steps as its
    latent arc length needs at the grid spacing, normalized like the grid path.
    """
    fine = geodesic.discretize(curve, n_fine)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(fine, axis=0), axis=1))])
    k = max(1, int(np.rint(arc[-1] / spacing)))
    targets = np.linspace(0.0, arc[-1], k + 1)
    z = np.stack([np.interp(targets, arc, fine[:, j]) for j in range(fine.shape[1])], axis=1)
    e = geodesic.path_energy(z, model, method, calib)
    return e * k / n_segments
