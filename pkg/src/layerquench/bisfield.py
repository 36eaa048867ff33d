"""Brillouin-zone sampling of polarization data, band-inversion contours,
dynamical fields on them, and winding numbers.

Contours are zero sets of a signed source criterion (the quench-axis
field component h_j, or its mode-shifted version for subspace data)
extracted by marching squares on the periodic sampling cell, so torus
wrapping is handled natively and every contour is closed.  Crossing
edges are refined by bisection; contour orientation is canonicalized so
that the negative side of the source lies to the right of travel.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateFieldError, NonQuantizedWindingError, SingularPointError,
                     UsageError)
from .models import monolayer_field, sampling_cell
from .quench import gtasp_abba, singular_mask, tasp_closed_form
from .spectra import sine_modes

# tracked component pair (zero-based) for each quench axis: the two
# polarization components other than j, in cyclic order
FIELD_COMPONENTS = {3: (0, 1), 1: (1, 2), 2: (2, 0)}

WINDING_RESIDUAL_TOL = 0.05


@dataclass
class TaspGrid:
    """Per-node polarization vectors on the periodic sampling cell."""

    cfg: object
    j: int
    observable: tuple
    nx: int
    ny: int
    cell: object
    values: np.ndarray  # (nx, ny, 3)


@dataclass
class BisContour:
    """Closed zero contour of a signed source criterion.

    points are physical momenta (oriented, not endpoint-repeated); frac
    the unwrapped cell fractions; wraps counts torus periods along the
    two cell directions (nonzero for contours stitched across the
    boundary).  residual is the largest polarization magnitude of the
    defining grid over the contour.
    """

    points: np.ndarray
    frac: np.ndarray
    source: str
    wraps: np.ndarray
    residual: float
    gfield: np.ndarray = field(default=None, repr=False)
    w: int = None


def polarization_evaluator(cfg, j, observable=("global",)):
    """Vectorized momentum -> 3-vector closed-form evaluator for a grid kind."""
    kind = observable[0]
    if kind == "global":
        return lambda kx, ky: tasp_closed_form(kx, ky, cfg, j)
    if kind == "subspace":
        r = observable[1]
        return lambda kx, ky: gtasp_abba(kx, ky, cfg, j, r)
    if kind == "bilayer":
        if cfg.layers != 2:
            raise UsageError("bilayer observables require layers = 2")
        r = observable[1]
        return lambda kx, ky: gtasp_abba(kx, ky, cfg, j, r)
    raise UsageError(f"unknown observable kind {kind!r}")


def source_function(grid):
    """Signed criterion whose zero set defines the contours of this grid.

    Global data uses the monolayer component h_j; mode-resolved data the
    shifted component h_r^j (which differs from h_j only for j = 1).
    """
    cfg, j = grid.cfg, grid.j
    shift = 0.0
    if grid.observable[0] in ("subspace", "bilayer") and j == 1:
        r = grid.observable[1]
        shift = 2.0 * cfg.t * np.cos(sine_modes(cfg.layers).theta[r - 1])

    def src(kx, ky):
        return monolayer_field(cfg, kx, ky)[..., j - 1] + shift

    return src


def source_tag(grid):
    if grid.observable[0] == "global":
        return f"s{grid.j}"
    return f"mode{grid.observable[1]}.s{grid.j}"


def sample_grid(cfg, j, observable=("global",), resolution=256, threads=1, cell=None):
    """Evaluate the closed-form polarization on an nx x ny periodic grid.

    Nodes sit at fractions (i/nx, l/ny) of the sampling cell.  Nodes that
    hit a gap closing exactly are offset by half a grid step; if still
    singular the error is re-raised with the node location.
    """
    if isinstance(resolution, int):
        nx = ny = resolution
    else:
        nx, ny = resolution
    if nx < 16 or ny < 16:
        raise UsageError("grid resolution must be at least 16 per axis")
    if cell is None:
        cell = sampling_cell(cfg.model)
    ev = polarization_evaluator(cfg, j, observable)
    u = np.arange(nx)[:, None] / nx
    v = np.arange(ny)[None, :] / ny
    KX, KY = cell.k_at(u, v)
    bad = singular_mask(KX, KY, cfg)
    if np.any(bad):
        du, dv = 0.5 / nx, 0.5 / ny
        KXn, KYn = cell.k_at(u + du, v + dv)
        KX = np.where(bad, KXn, KX)
        KY = np.where(bad, KYn, KY)
        still = singular_mask(KX, KY, cfg)
        if np.any(still):
            i0, l0 = np.argwhere(still)[0]
            raise SingularPointError(
                f"gap closes at grid node ({i0}, {l0}), k=({KX[i0, l0]}, {KY[i0, l0]})")
    if threads and threads > 1:
        values = np.empty((nx, ny, 3))
        chunks = np.array_split(np.arange(nx), min(threads, nx))
        def work(rows):
            values[rows] = ev(KX[rows], KY[rows])
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        values = ev(KX, KY)
    return TaspGrid(cfg=cfg, j=j, observable=tuple(observable), nx=nx, ny=ny,
                    cell=cell, values=values)


def _marching_loops(phi, nodes, nx, ny):
    """Zero loops of a signed function on the unit torus.

    phi maps fractional (u, v) scalars to a signed value; nodes is the
    precomputed (nx, ny) node array of phi.  Returns a list of
    (points, wraps): unwrapped fractional polylines and their integer
    period counts.  Nodes exactly at zero are classed with the negative
    side, so zero sets through nodes still produce closed loops.
    """
    pos = nodes > 0

    def bisect(pa, pb):
        fa = phi(*pa)
        pa = np.asarray(pa, dtype=float).copy()
        pb = np.asarray(pb, dtype=float).copy()
        if fa > 0:  # keep pa on the non-positive side
            pa, pb = pb, pa
        for _ in range(64):
            pm = 0.5 * (pa + pb)
            if phi(*pm) > 0:
                pb = pm
            else:
                pa = pm
            if np.max(np.abs(pb - pa)) <= 1e-9:
                break
        return 0.5 * (pa + pb)

    root_cache = {}

    def edge_root(edge):
        axis, i, l = edge
        key = (axis, i % nx, l % ny)
        if key not in root_cache:
            a = np.array([(i % nx) / nx, (l % ny) / ny])
            step = np.array([1.0 / nx, 0.0]) if axis == "h" else np.array([0.0, 1.0 / ny])
            root_cache[key] = bisect(a, a + step)
        return root_cache[key]

    pair_cache = {}

    def cell_pairs(ci, cl):
        key = (ci % nx, cl % ny)
        if key in pair_cache:
            return pair_cache[key]
        i, l = key
        c = [pos[i, l], pos[(i + 1) % nx, l],
             pos[(i + 1) % nx, (l + 1) % ny], pos[i, (l + 1) % ny]]
        bottom, right = ("h", i, l), ("v", (i + 1) % nx, l)
        top, left = ("h", i, (l + 1) % ny), ("v", i, l)
        crossing = [e for e, (sa, sb) in ((bottom, (c[0], c[1])), (right, (c[1], c[2])),
                                          (top, (c[3], c[2])), (left, (c[0], c[3])))
                    if sa != sb]
        if not crossing:
            pairs = {}
        elif len(crossing) == 2:
            a, b = crossing
            pairs = {a: b, b: a}
        elif len(crossing) == 4:
            # saddle cell: resolve the pairing with a centre sample
            center = phi((i + 0.5) / nx, (l + 0.5) / ny) > 0
            if center == c[0]:
                pl = [(bottom, right), (top, left)]
            else:
                pl = [(left, bottom), (right, top)]
            pairs = {}
            for a, b in pl:
                pairs[a] = b
                pairs[b] = a
        else:
            raise RuntimeError("inconsistent sign pattern in marching squares")
        pair_cache[key] = pairs
        return pairs

    def cells_of_edge(axis, i, l):
        if axis == "h":
            return ((i, l), (i, (l - 1) % ny))
        return ((i, l), ((i - 1) % nx, l))

    visited = set()
    loops = []
    for ci in range(nx):
        for cl in range(ny):
            for start_edge in cell_pairs(ci, cl):
                if ((ci, cl), start_edge) in visited:
                    continue
                pts = []
                cell = (ci, cl)
                offset = np.zeros(2)
                entry = start_edge
                while True:
                    if (cell, entry) in visited:
                        break
                    # mark both ends so the reverse traversal is blocked too
                    visited.add((cell, entry))
                    visited.add((cell, cell_pairs(*cell)[entry]))
                    r = edge_root(entry).copy()
                    # wrap the cached root into the frame of the current cell
                    base = np.array([cell[0] / nx, cell[1] / ny])
                    span = np.array([1.0 / nx, 1.0 / ny])
                    for d in range(2):
                        while r[d] < base[d] - 0.5 * span[d]:
                            r[d] += 1.0
                        while r[d] > base[d] + 1.5 * span[d]:
                            r[d] -= 1.0
                    pts.append(r + offset)
                    exit_edge = cell_pairs(*cell)[entry]
                    cands = cells_of_edge(*exit_edge)
                    nxt = cands[0] if cands[0] != cell else cands[1]
                    axis = exit_edge[0]
                    if axis == "v":
                        if exit_edge == ("v", (cell[0] + 1) % nx, cell[1]):
                            if cell[0] == nx - 1:
                                offset[0] += 1.0
                        else:
                            if cell[0] == 0:
                                offset[0] -= 1.0
                    else:
                        if exit_edge == ("h", cell[0], (cell[1] + 1) % ny):
                            if cell[1] == ny - 1:
                                offset[1] += 1.0
                        else:
                            if cell[1] == 0:
                                offset[1] -= 1.0
                    cell = nxt
                    entry = exit_edge
                if len(pts) >= 3:
                    loops.append((np.array(pts), np.rint(offset).astype(int)))
    return loops


def _orient(points, frac, src):
    """Put the negative side of the source on the right of travel."""
    m = len(points)
    seglen = np.hypot(*(np.roll(points, -1, axis=0) - points).T)
    typical = np.median(seglen)
    for p in range(m):
        a = points[p]
        b = points[(p + 1) % m]
        L = seglen[p]
        if L < 1e-12 or L > 5.0 * typical + 1e-9:
            continue  # skip degenerate and torus-closure segments
        tau = (b - a) / L
        right = np.array([tau[1], -tau[0]])
        mid = 0.5 * (a + b)
        val = src(mid[0] + max(L, 1e-4) * right[0], mid[1] + max(L, 1e-4) * right[1])
        if abs(val) > 1e-10:
            if val > 0:
                return points[::-1].copy(), frac[::-1].copy()
            return points, frac
    raise DegenerateFieldError("cannot orient contour: source vanishes on both sides")


def _extract(grid, node_source, src, tag, ev):
    loops = _marching_loops(lambda uu, vv: float(src(*grid.cell.k_at(uu, vv))),
                            node_source, grid.nx, grid.ny)
    out = []
    for frac, wraps in loops:
        kx, ky = grid.cell.k_at(frac[:, 0], frac[:, 1])
        points = np.stack([kx, ky], axis=-1)
        points, frac = _orient(points, frac, src)
        vals = ev(points[:, 0], points[:, 1])
        out.append(BisContour(points=points, frac=frac, source=tag, wraps=wraps,
                              residual=float(np.max(np.abs(vals)))))
    return out


def extract_bis(grid, tol_bis=1e-6, include_rejected=False):
    """Band-inversion contours: zero sets of the source criterion on which
    every polarization component of the grid also vanishes.

    Contours failing the all-components check (possible for synthetic or
    mode-mixed data) are excluded; pass include_rejected=True to get
    them in a second list instead of dropping them.
    """
    src = source_function(grid)
    u = np.arange(grid.nx)[:, None] / grid.nx
    v = np.arange(grid.ny)[None, :] / grid.ny
    KX, KY = grid.cell.k_at(u, v)
    nodes = src(KX, KY)
    ev = polarization_evaluator(grid.cfg, grid.j, grid.observable)
    contours = _extract(grid, nodes, src, source_tag(grid), ev)
    good = [c for c in contours if c.residual < tol_bis]
    if include_rejected:
        return good, [c for c in contours if c.residual >= tol_bis]
    return good


def component_zero_curves(grid, component):
    """Zero contours of one measured polarization component.

    Unlike extract_bis the source here is the signed component value
    itself, so only sign-changing (transversal) zeros are found.  No
    band-inversion filtering is applied; the residual field tells how
    small the remaining components are.
    """
    ev = polarization_evaluator(grid.cfg, grid.j, grid.observable)

    def src(kx, ky):
        return ev(kx, ky)[..., component - 1]

    return _extract(grid, grid.values[..., component - 1], src,
                    f"{source_tag(grid)}:zero-s{component}", ev)


def dynamical_field(contour, grid, delta=1e-4):
    """Unit dynamical field on a contour.

    At each contour point the inward normal is the normalized gradient
    of the source criterion (pointing toward positive source values);
    the two non-j polarization components are differentiated along it
    with a central step delta and the negated derivative is normalized.
    """
    src = source_function(grid)
    ev = polarization_evaluator(grid.cfg, grid.j, grid.observable)
    pq = FIELD_COMPONENTS[grid.j]
    k = contour.points
    eps = 1e-6
    gx = (src(k[:, 0] + eps, k[:, 1]) - src(k[:, 0] - eps, k[:, 1])) / (2 * eps)
    gy = (src(k[:, 0], k[:, 1] + eps) - src(k[:, 0], k[:, 1] - eps)) / (2 * eps)
    nrm = np.hypot(gx, gy)
    if np.any(nrm < 1e-12):
        p = int(np.argmin(nrm))
        raise DegenerateFieldError(f"source gradient vanishes at k={tuple(k[p])}")
    nhx, nhy = gx / nrm, gy / nrm
    tp = ev(k[:, 0] + delta * nhx, k[:, 1] + delta * nhy)
    tm = ev(k[:, 0] - delta * nhx, k[:, 1] - delta * nhy)
    g = -(tp[:, list(pq)] - tm[:, list(pq)]) / (2 * delta)
    L = np.hypot(g[:, 0], g[:, 1])
    if np.any(L < 1e-12):
        p = int(np.argmin(L))
        raise DegenerateFieldError(f"dynamical field vanishes at k={tuple(k[p])}")
    contour.gfield = g / L[:, None]
    return contour.gfield


def winding(contour, layer_factor=1):
    """Accumulated angle of the dynamical field around the contour over 2 pi.

    Requires dynamical_field to have been evaluated and at least 32
    contour points.  The pre-rounding residual must stay below 0.05;
    the rounded integer is stored on the contour and the returned value
    carries the layer factor (1 for abba subspaces, N for ba data).
    """
    if contour.gfield is None:
        raise UsageError("winding requires the dynamical field; call dynamical_field first")
    g = contour.gfield
    if len(g) < 32:
        raise UsageError(f"contour has only {len(g)} points; at least 32 required")
    a = g
    b = np.roll(g, -1, axis=0)
    ang = np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0],
                     a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]).sum()
    total = ang / (2 * np.pi)
    nearest = np.rint(total)
    if abs(total - nearest) >= WINDING_RESIDUAL_TOL:
        raise NonQuantizedWindingError(
            f"winding {total} is not integer within {WINDING_RESIDUAL_TOL}")
    contour.w = int(nearest)
    return contour.w * layer_factor


def characterize(cfg, j=3, resolution=256, delta=1e-4, tol_bis=1e-6, threads=1):
    """Full dynamical characterization: contours, fields and windings.

    abba stacks are analysed mode by mode (layer factor 1 each); ba
    stacks from the global polarization with layer factor N.  Returns a
    dict with the contour list, per-contour windings and the total
    invariant.  An empty contour list is a valid trivial result.
    """
    contours = []
    total = 0
    if cfg.stacking == "abba":
        layer_factor = 1
        for r in range(1, cfg.layers + 1):
            grid = sample_grid(cfg, j, ("subspace", r), resolution, threads=threads)
            for c in extract_bis(grid, tol_bis):
                dynamical_field(c, grid, delta)
                total += winding(c, layer_factor)
                contours.append(c)
    else:
        layer_factor = cfg.layers
        grid = sample_grid(cfg, j, ("global",), resolution, threads=threads)
        for c in extract_bis(grid, tol_bis):
            dynamical_field(c, grid, delta)
            total += winding(c, layer_factor)
            contours.append(c)
    return {"contours": contours, "total_w": int(total), "layer_factor": layer_factor}
