"""Equilibrium topological invariants and phase-diagram scans.

Two independent integer oracles are provided: a lattice field-strength
Chern number built from plaquette link variables of the filled bands,
and the solid-angle degree (skyrmion number) of a two-band unit field.
Their overall orientation is fixed once by requiring the square-lattice
monolayer at m = 1 to carry Chern number -1; the skyrmion sum needs no
extra factor in this convention.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GaplessError, NonQuantizedWindingError
from .models import build_layered, monolayer_field, sampling_cell
from .spectra import analytic_positive_levels, sine_modes

FHS_ORIENTATION = -1.0
GAP_TOL_DEFAULT = 1e-6
ROUND_TOL = 0.05

# smallest admissible triangle denominator in the solid-angle sum; a
# plaquette with nearly antipodal corner directions (den near 0) can
# flip a triangulation branch and yield a cleanly wrong integer, so
# such grids are rejected instead of trusted
DEN_FLOOR = 0.05

# analogous floor for the plaquette link variables
LINK_FLOOR = 1e-3


def _cell_nodes(cell, n):
    u = np.arange(n)[:, None] / n
    v = np.arange(n)[None, :] / n
    return cell.k_at(u, v)


def chern_fhs(cfg, filled=None, grid_n=100, gap_tol=GAP_TOL_DEFAULT, cell=None):
    """Chern number of the lowest `filled` bands via plaquette link variables.

    filled defaults to half filling (N of the 2N bands).  The spectral
    gap above the filled bands must exceed gap_tol everywhere on the
    grid.  The summed plaquette field strength is rounded to an integer;
    doubling grid_n must reproduce it (see tests).
    """
    if filled is None:
        filled = cfg.layers
    if cell is None:
        cell = sampling_cell(cfg.model)
    KX, KY = _cell_nodes(cell, grid_n)
    E, V = np.linalg.eigh(build_layered(KX, KY, cfg))
    nbands = E.shape[-1]
    if filled < nbands:
        gaps = E[..., filled] - E[..., filled - 1]
        if gaps.min() <= gap_tol:
            i, l = np.unravel_index(int(np.argmin(gaps)), gaps.shape)
            raise GaplessError(
                f"gap {gaps[i, l]:.3e} at k=({KX[i, l]}, {KY[i, l]}) below {gap_tol}")
    V = V[..., :filled]
    o1 = np.einsum("ijam,ijan->ijmn", V.conj(), np.roll(V, -1, axis=0))
    o2 = np.einsum("ijam,ijan->ijmn", V.conj(), np.roll(V, -1, axis=1))
    U1 = np.linalg.det(o1)
    U2 = np.linalg.det(o2)
    if min(np.abs(U1).min(), np.abs(U2).min()) < LINK_FLOOR:
        raise GaplessError("near-vanishing link variable; gap unresolved at this grid")
    U1 = U1 / np.abs(U1)
    U2 = U2 / np.abs(U2)
    F = np.angle(U1 * np.roll(U2, -1, axis=0) * np.conj(np.roll(U1, -1, axis=1)) * np.conj(U2))
    total = FHS_ORIENTATION * F.sum() / (2 * np.pi)
    nearest = np.rint(total)
    if abs(total - nearest) >= ROUND_TOL:
        raise NonQuantizedWindingError(f"curvature sum {total} is not integer")
    return int(nearest)


def _solid_angle_sum(nh):
    """Signed sphere area swept by the plaquette quadrilaterals.

    Returns (sum, den_min); den_min is the smallest triangle denominator
    and certifies the triangulation when above DEN_FLOOR.
    """
    n1 = nh
    n2 = np.roll(nh, -1, axis=0)
    n3 = np.roll(nh, -1, axis=(0, 1))
    n4 = np.roll(nh, -1, axis=1)

    def solid(a, b, c):
        num = np.einsum("...i,...i->...", a, np.cross(b, c))
        den = (1.0 + np.einsum("...i,...i->...", a, b)
               + np.einsum("...i,...i->...", b, c)
               + np.einsum("...i,...i->...", c, a))
        return 2.0 * np.arctan2(num, den), den

    s1, d1 = solid(n1, n2, n3)
    s2, d2 = solid(n1, n3, n4)
    return s1.sum() + s2.sum(), float(min(d1.min(), d2.min()))


def chern_two_band(field_fn, grid_n=100, cell=None, model="qwz"):
    """Degree of the normalized field k -> h(k)/|h(k)| over the sampling cell.

    field_fn maps (kx, ky) arrays to (..., 3) field values.  Equals
    chern_fhs of the corresponding 2x2 Bloch Hamiltonian's lower band.
    Raises GaplessError when the field vanishes on the grid or comes
    close enough that a plaquette cannot be certified.
    """
    if cell is None:
        cell = sampling_cell(model)
    KX, KY = _cell_nodes(cell, grid_n)
    h = field_fn(KX, KY)
    nrm = np.linalg.norm(h, axis=-1)
    if nrm.min() < 1e-9:
        i, l = np.unravel_index(int(np.argmin(nrm)), nrm.shape)
        raise GaplessError(f"field vanishes at k=({KX[i, l]}, {KY[i, l]})")
    s, den_min = _solid_angle_sum(h / nrm[..., None])
    if den_min < DEN_FLOOR:
        raise GaplessError(
            f"nearly antipodal plaquette (den {den_min:.3g}); gap unresolved at this grid")
    total = s / (4 * np.pi)
    nearest = np.rint(total)
    if abs(total - nearest) >= ROUND_TOL:
        raise NonQuantizedWindingError(f"degree {total} is not integer")
    return int(nearest)


def subsystem_field_fn(cfg, r):
    """Momentum -> h_r field of one abba sine mode."""
    shift = 2.0 * cfg.t * np.cos(sine_modes(cfg.layers).theta[r - 1])

    def fn(kx, ky):
        h = monolayer_field(cfg, kx, ky).copy()
        h[..., 0] += shift
        return h

    return fn


def total_chern_abba(cfg, grid_n=100):
    """Sum of the two-band degrees of all abba sine-mode fields."""
    cell = sampling_cell(cfg.model)
    return sum(chern_two_band(subsystem_field_fn(cfg, r), grid_n, cell)
               for r in range(1, cfg.layers + 1))


@dataclass
class PhaseDiagram:
    """Half-filling Chern numbers on a (t, m) grid of cell centres.

    boundary marks cells whose gap minimum falls below gap_tol; their
    chern entry is meaningless and reported as "boundary" downstream.
    """

    stacking: str
    layers: int
    ts: np.ndarray
    ms: np.ndarray
    chern: np.ndarray
    gap_min: np.ndarray
    boundary: np.ndarray


def _halffilling_gap(cfg, grid_n, cell):
    KX, KY = _cell_nodes(cell, grid_n)
    ep = analytic_positive_levels(KX, KY, cfg)
    return 2.0 * float(ep.min())


def phase_diagram(stacking, layers, t_range, m_range, steps, model="qwz",
                  grid_n=48, gap_tol=GAP_TOL_DEFAULT, threads=1, fhs_grid=40):
    """Scan half-filling Chern numbers over a (t, m) window.

    steps may be an int or a (t_steps, m_steps) pair; cells are sampled
    at their centres so exact phase boundaries are met only through the
    gap_tol flagging.  abba cells use the mode-degree sum, ba cells the
    link-variable Chern number.
    """
    from .models import LayeredConfig
    if isinstance(steps, int):
        st = sm = steps
    else:
        st, sm = steps
    ts = t_range[0] + (np.arange(st) + 0.5) * (t_range[1] - t_range[0]) / st
    ms = m_range[0] + (np.arange(sm) + 0.5) * (m_range[1] - m_range[0]) / sm
    cell = sampling_cell(model)
    chern = np.zeros((st, sm), dtype=int)
    gap = np.zeros((st, sm))
    boundary = np.zeros((st, sm), dtype=bool)

    def work(it):
        i, l = it
        cfg = LayeredConfig(stacking=stacking, layers=layers, t=float(ts[i]),
                            model=model, m=float(ms[l]))
        g = _halffilling_gap(cfg, grid_n, cell)
        gap[i, l] = g
        if g < gap_tol:
            boundary[i, l] = True
            return
        # a cell too close to a phase boundary may be uncertifiable at
        # the base grid; refine twice before flagging it as boundary
        for factor in (1, 2, 4):
            try:
                if stacking == "abba":
                    chern[i, l] = total_chern_abba(cfg, factor * grid_n)
                else:
                    chern[i, l] = chern_fhs(cfg, layers, factor * fhs_grid, gap_tol, cell)
                return
            except (GaplessError, NonQuantizedWindingError):
                continue
        boundary[i, l] = True

    items = [(i, l) for i in range(st) for l in range(sm)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, items))
    else:
        for it in items:
            work(it)
    return PhaseDiagram(stacking=stacking, layers=layers, ts=ts, ms=ms,
                        chern=chern, gap_min=gap, boundary=boundary)


@dataclass(frozen=True)
class TransitionCurve:
    """One analytic gap-closing curve m(t) of an abba sine mode.

    The subsystem gap closes at momentum (kx, ky) with sin kx balancing
    the mode shift: sin kx = -2 t cos(theta_r), cos kx = sign * sqrt(...),
    ky in {0, pi}, m = cos ky + cos kx.
    """

    r: int
    ky: float
    sign: int
    t: np.ndarray
    m: np.ndarray
    kx: np.ndarray


@dataclass(frozen=True)
class TransitionSet:
    layers: int
    curves: tuple


def transition_lines_abba(layers, t_range=(0.0, 2.0), samples=201):
    """Analytic abba phase-boundary curves for the square-lattice monolayer."""
    theta = sine_modes(layers).theta
    tgrid = np.linspace(t_range[0], t_range[1], samples)
    curves = []
    for r in range(1, layers + 1):
        c = np.cos(theta[r - 1])
        s = 2.0 * tgrid * c
        ok = np.abs(s) <= 1.0
        if not np.any(ok):
            continue
        root = np.sqrt(1.0 - s[ok] ** 2)
        for ky in (0.0, np.pi):
            for sign in (1, -1):
                curves.append(TransitionCurve(
                    r=r, ky=ky, sign=sign, t=tgrid[ok],
                    m=np.cos(ky) + sign * root,
                    kx=np.arctan2(-s[ok], sign * root)))
    return TransitionSet(layers=layers, curves=tuple(curves))


def segment_crosses_transition(layers, p0, p1, samples=129):
    """Whether the straight segment p0 -> p1 in the (t, m) plane crosses
    any analytic abba transition curve."""
    theta = sine_modes(layers).theta
    s = np.linspace(0.0, 1.0, samples)
    t = p0[0] + s * (p1[0] - p0[0])
    m = p0[1] + s * (p1[1] - p0[1])
    for r in range(1, layers + 1):
        c = np.cos(theta[r - 1])
        arg = 2.0 * t * c
        ok = np.abs(arg) <= 1.0
        if not np.any(ok):
            continue
        root = np.sqrt(np.where(ok, 1.0 - arg ** 2, 0.0))
        for ky in (0.0, np.pi):
            for sign in (1, -1):
                g = np.where(ok, m - (np.cos(ky) + sign * root), np.nan)
                gs = g[~np.isnan(g)]
                if len(gs) >= 2 and np.any(np.sign(gs[:-1]) * np.sign(gs[1:]) <= 0):
                    return True
    return False
