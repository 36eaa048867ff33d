"""Interlayer-hopping estimation from polarization data.

abba: the subspace-I polarization s1 component vanishes both on the
band-inversion set and on the curve h1(k) = -t; points of the second
kind are recognized by their nonvanishing s3 response and -h1 averaged
over them recovers t.  ba: closed-form magnitudes at three reference
momenta are inverted, via rational forms for the m = 1 bilayer and a
bracketed root solve otherwise.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .bisfield import TaspGrid, component_zero_curves, polarization_evaluator, sample_grid
from .errors import InconsistentSampleError, TrivialRegimeError, UsageError
from .models import LayeredConfig, monolayer_field
from .quench import tasp_closed_form

# reference momenta of the ba inversion channels (component -> k)
REFERENCE_MOMENTA = {
    "s1": (np.pi / 4, 0.0),
    "s2": (0.0, np.pi / 4),
    "s3": (0.0, 0.0),
}

# smallest |s3| response for a zero-curve point to count as off the
# band-inversion set
SIGMA3_FLOOR = 1e-3

MIN_BRANCH_POINTS = 8


@dataclass(frozen=True)
class HoppingEstimate:
    """Nonnegative hopping estimate (the closed forms are even in t)."""

    t_hat: float
    method: str
    residual: float


def estimate_t_abba(source, resolution=256, j=3):
    """Estimate t from the subspace-I polarization of an abba stack.

    source is either a sampled subspace-I TaspGrid or a LayeredConfig
    from which one is generated.  The s1-component zero curves are
    traced; points with |s3| above SIGMA3_FLOOR lie on h1 = -t rather
    than on the band-inversion set, and the estimate is the mean of -h1
    there with the max-abs deviation as residual.  Raises
    TrivialRegimeError when no such branch exists (t > 1 for the
    square-lattice monolayer near m = 1); exactly at the critical
    coupling the zero line degenerates onto a gap closing and tracing
    raises SingularPointError instead.
    """
    if isinstance(source, TaspGrid):
        grid = source
        if grid.observable[0] not in ("subspace", "bilayer") or grid.observable[1] != 1:
            raise UsageError("estimate_t_abba needs subspace-1 polarization data")
    elif isinstance(source, LayeredConfig):
        if source.stacking != "abba":
            raise UsageError("estimate_t_abba requires the abba stacking")
        grid = sample_grid(source, j, ("subspace", 1), resolution)
    else:
        raise UsageError(f"cannot estimate from {type(source).__name__}")
    cfg = grid.cfg
    curves = component_zero_curves(grid, 1)
    ev = polarization_evaluator(cfg, grid.j, grid.observable)
    kept = []
    for c in curves:
        vals = ev(c.points[:, 0], c.points[:, 1])
        on_branch = np.abs(vals[:, 2]) > SIGMA3_FLOOR
        if np.any(on_branch):
            kept.append(c.points[on_branch])
    if not kept or sum(len(p) for p in kept) < MIN_BRANCH_POINTS:
        raise TrivialRegimeError(
            "no s1 zero curve with nonzero s3 response; "
            "the hopping does not imprint a zero line in this regime")
    pts = np.concatenate(kept)
    minus_h1 = -monolayer_field(cfg, pts[:, 0], pts[:, 1])[..., 0]
    t_hat = float(np.mean(minus_h1))
    return HoppingEstimate(t_hat=t_hat, method="abba-zero-line",
                           residual=float(np.max(np.abs(minus_h1 - t_hat))))


def ba_reference_magnitudes(t, m=1.0, layers=2, j=3):
    """Closed-form |TASP| magnitudes of the ba stack at the reference momenta.

    For m = 1, N = 2 these equal 1/(2+t^2) for the in-plane channels and
    (2+t^2)/(2+2t^2) for the s3 channel.
    """
    cfg = LayeredConfig(stacking="ba", layers=layers, t=float(t), model="qwz", m=float(m))
    out = {}
    for key, (kx, ky) in REFERENCE_MOMENTA.items():
        comp = int(key[1])
        out[key] = float(abs(tasp_closed_form(kx, ky, cfg, j)[comp - 1]))
    return out


def _invert_rational(key, mag):
    if key in ("s1", "s2"):
        if mag > 0.5 or mag <= 0.0:
            raise InconsistentSampleError(
                f"|{key}| = {mag} outside the invertible range (0, 1/2]")
        return np.sqrt(1.0 / mag - 2.0)
    if mag > 1.0 or mag <= 0.5:
        raise InconsistentSampleError(
            f"|s3| = {mag} outside the invertible range (1/2, 1]")
    return np.sqrt(2.0 * (1.0 - mag) / (2.0 * mag - 1.0))


def _invert_numeric(key, mag, m, layers, j, t_max=10.0):
    def f(t):
        return ba_reference_magnitudes(t, m, layers, j)[key] - mag

    tgrid = np.linspace(0.0, t_max, 101)
    fvals = np.array([f(t) for t in tgrid])
    idx = np.flatnonzero(np.sign(fvals[:-1]) * np.sign(fvals[1:]) <= 0)
    if len(idx) == 0:
        raise InconsistentSampleError(
            f"|{key}| = {mag} not attained for any t in [0, {t_max}] at m = {m}")
    i = idx[0]
    if fvals[i] == 0.0:
        return float(tgrid[i])
    return float(brentq(f, tgrid[i], tgrid[i + 1], xtol=1e-12))


def estimate_t_ba(samples, m=1.0, layers=2, j=3):
    """Invert measured |TASP| magnitudes of a ba stack for t >= 0.

    samples maps channel names s1, s2, s3 to measured polarization
    values at the reference momenta (pi/4, 0), (0, pi/4), (0, 0); signs
    are ignored.  At least one channel is required; the combined
    estimate is the channel mean and the residual the max-abs spread.
    """
    names = [k for k in ("s1", "s2", "s3") if k in samples]
    if not names:
        raise UsageError("samples must contain at least one of s1, s2, s3")
    unknown = set(samples) - set(REFERENCE_MOMENTA)
    if unknown:
        raise UsageError(f"unknown sample channels {sorted(unknown)}")
    rational = (m == 1.0 and layers == 2)
    ests = []
    for key in names:
        mag = abs(float(samples[key]))
        if rational:
            ests.append(_invert_rational(key, mag))
        else:
            ests.append(_invert_numeric(key, mag, m, layers, j))
    t_hat = float(np.mean(ests))
    return HoppingEstimate(t_hat=t_hat,
                           method="ba-rational" if rational else "ba-numeric",
                           residual=float(np.max(np.abs(np.array(ests) - t_hat))))
