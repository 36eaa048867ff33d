"""Analytic spectra, numeric eigendecomposition with degeneracy grouping,
and the sine-mode block diagonalization of the abba stacking."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, NonConvergenceError, UnsupportedStackingError
from .models import PAULI, build_layered, monolayer_field

DEG_TOL_DEFAULT = 1e-9


@dataclass(frozen=True)
class SineModes:
    """Orthonormal eigenvectors a_r of the chain coupling Sigma1.

    theta[r-1] = r*pi/(N+1); vectors[r-1] has components
    sqrt(2/(N+1)) * sin(n*theta_r) for n = 1..N, and
    Sigma1 a_r = 2 cos(theta_r) a_r.
    """

    N: int
    theta: np.ndarray
    vectors: np.ndarray  # rows are the a_r


def sine_modes(N):
    r = np.arange(1, N + 1)
    theta = r * np.pi / (N + 1)
    n = np.arange(1, N + 1)
    vectors = np.sqrt(2.0 / (N + 1)) * np.sin(np.outer(theta, n))
    return SineModes(N=N, theta=theta, vectors=vectors)


def subsystem_fields(kx, ky, cfg):
    """Per-mode fields h_r = (h1 + 2 t cos(theta_r), h2, h3) of the abba stacking.

    Returns shape (..., N, 3).  For N = 2 the two first components are
    h1 + t and h1 - t.  Only defined for the abba stacking, whose
    Hamiltonian splits into the 2x2 blocks h_r . sigma.
    """
    if cfg.stacking != "abba":
        raise UnsupportedStackingError("subsystem fields require the abba stacking")
    h = monolayer_field(cfg, kx, ky)
    c = np.cos(sine_modes(cfg.layers).theta)
    out = np.repeat(h[..., None, :], cfg.layers, axis=-2).astype(float)
    out[..., 0] = out[..., 0] + 2.0 * cfg.t * c
    return out


@dataclass(frozen=True)
class SubsystemField:
    r: int
    h: np.ndarray


def abba_transform(N):
    """Orthogonal S = A (x) 1 with rows of A the sine modes; S H S^T is block diagonal."""
    return np.kron(sine_modes(N).vectors, np.eye(2))


def block_diagonalize_abba(kx, ky, cfg):
    """Sine-transform decomposition of the abba Hamiltonian at one momentum.

    Returns (fields, S) where fields is a list of SubsystemField and
    S build_layered(...) S^T equals the direct sum of the h_r . sigma blocks.
    """
    fields = subsystem_fields(kx, ky, cfg)
    S = abba_transform(cfg.layers)
    return [SubsystemField(r=r + 1, h=fields[..., r, :]) for r in range(cfg.layers)], S


def analytic_positive_levels(kx, ky, cfg):
    """Positive branches E_r ordered by mode index r = 1..N; shape (..., N).

    abba: E_r = |h_r| with the shifted first component.
    ba:   E_r = sqrt(h3^2 + (sqrt(h1^2 + h2^2 + t^2 cos^2 theta_r)
                             + t cos theta_r)^2).
    The full spectrum is the symmetric set {+-E_r}.
    """
    h = monolayer_field(cfg, kx, ky)
    c = np.cos(np.arange(1, cfg.layers + 1) * np.pi / (cfg.layers + 1))
    if cfg.stacking == "abba":
        h1r = h[..., 0, None] + 2.0 * cfg.t * c
        return np.sqrt(h1r ** 2 + h[..., 1, None] ** 2 + h[..., 2, None] ** 2)
    tc = cfg.t * c
    u = np.sqrt(h[..., 0, None] ** 2 + h[..., 1, None] ** 2 + tc ** 2)
    return np.sqrt(h[..., 2, None] ** 2 + (u + tc) ** 2)


def analytic_levels(kx, ky, cfg):
    """All 2N analytic eigenvalues sorted ascending; shape (..., 2N)."""
    ep = analytic_positive_levels(kx, ky, cfg)
    return np.sort(np.concatenate([-ep, ep], axis=-1), axis=-1)


def analytic_spectrum(kx, ky, cfg):
    """Sequence of (r, E_plus, E_minus) triples at a single momentum."""
    ep = np.atleast_1d(analytic_positive_levels(kx, ky, cfg))
    return [(r + 1, float(ep[..., r]), -float(ep[..., r])) for r in range(cfg.layers)]


def degeneracy_groups(energies, tol_deg=DEG_TOL_DEFAULT):
    """Partition sorted eigenvalues into groups with |E_i - E_j| <= tol_deg*max(1,|E|)."""
    groups = []
    i = 0
    n = len(energies)
    while i < n:
        j = i + 1
        while j < n and abs(energies[j] - energies[j - 1]) <= tol_deg * max(1.0, abs(energies[i])):
            j += 1
        groups.append(list(range(i, j)))
        i = j
    return groups


@dataclass
class SpectrumSample:
    """Numeric eigendecomposition at one momentum with degeneracy grouping."""

    k: tuple
    cfg: object
    energies: np.ndarray
    states: np.ndarray  # orthonormal columns
    groups: list


def numeric_spectrum(kx, ky, cfg, tol_deg=DEG_TOL_DEFAULT):
    H = build_layered(kx, ky, cfg)
    try:
        E, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError(
            f"eigensolver failed at k=({kx}, {ky}) for {cfg}") from exc
    return SpectrumSample(k=(float(kx), float(ky)), cfg=cfg, energies=E, states=V,
                          groups=degeneracy_groups(E, tol_deg))


def numeric_levels(kx, ky, cfg):
    """Eigenvalues only, batched over momentum arrays; shape (..., 2N)."""
    return np.linalg.eigvalsh(build_layered(kx, ky, cfg))


def level_labels(kx, ky, cfg, energies, tol=1e-8):
    """Match numeric eigenvalues to analytic branches.

    Returns (r, sign) integer arrays: energies[m] ~ sign[m] * E_{r[m]}.
    Ties are broken toward the smaller r.
    """
    ep = np.atleast_1d(analytic_positive_levels(kx, ky, cfg))
    cand = np.concatenate([ep, -ep])  # index r-1 -> +E_r, N + r-1 -> -E_r
    r_out = np.empty(len(energies), dtype=int)
    s_out = np.empty(len(energies), dtype=int)
    for m, E in enumerate(energies):
        d = np.abs(cand - E)
        best = np.flatnonzero(d <= d.min() + tol)[0]
        r_out[m] = best % cfg.layers + 1
        s_out[m] = 1 if best < cfg.layers else -1
    return r_out, s_out


def eigvec_identities(sample, h, stacking):
    """Residuals of closed-form eigenvector expectations.

    For every eigenvector: <1 (x) s3> = h3/E (both stackings).  For the
    ba stacking additionally, with G = E^2 - h3^2 + h1^2 + h2^2:
    <1 (x) s_a> = 2 h_a (E^2 - h3^2) / (E G) for a = 1, 2.
    Requires a fully nondegenerate sample.
    """
    if any(len(g) > 1 for g in sample.groups):
        raise DegenerateSpectrumError(
            f"eigenvector identities undefined on degenerate spectrum at k={sample.k}")
    N = sample.cfg.layers
    E = sample.energies
    V = sample.states
    res = {}
    vals = {}
    for i in range(3):
        O = np.kron(np.eye(N), PAULI[i])
        vals[i] = np.real(np.einsum("am,ab,bm->m", V.conj(), O, V))
    res["s3"] = float(np.max(np.abs(vals[2] - h[2] / E)))
    if stacking == "ba":
        G = E ** 2 - h[2] ** 2 + h[0] ** 2 + h[1] ** 2
        for a, key in ((0, "s1"), (1, "s2")):
            res[key] = float(np.max(np.abs(vals[a] - 2.0 * h[a] * (E ** 2 - h[2] ** 2) / (E * G))))
    return res
