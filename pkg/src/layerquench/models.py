"""Monolayer fields and layered Bloch Hamiltonians.

Two monolayer two-band models are provided: a square-lattice model with
h = (sin kx, sin ky, m - cos kx - cos ky) and a triangular-lattice model
built from three nearest-neighbour and three next-nearest-neighbour
vectors.  N copies of a monolayer are coupled either through an
interlayer term t * Sigma1 (x) s1 acting on both sublattices ("abba")
or through (t/2) * (Sigma1 (x) s1 + Sigma2 (x) s2) with an alternating
Bernal-pattern Sigma2 ("ba").

Tensor order convention: the layer index is the left Kronecker factor,
the sublattice/spin index the right one, so 1 (x) s_i acts on spin only.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

SQ3 = np.sqrt(3.0)

# triangular-lattice vectors: a_i connect one sublattice to the other,
# b_i connect same-sublattice neighbours (integer combinations of the a_i)
TRI_A = np.array([[0.0, 1.0], [-SQ3 / 2, -0.5], [SQ3 / 2, -0.5]])
TRI_B = np.array([[-SQ3, 0.0], [-SQ3 / 2, 1.5], [-SQ3 / 2, -1.5]])

STACKINGS = ("abba", "ba")
MODELS = ("qwz", "haldane")


@dataclass(frozen=True)
class LayeredConfig:
    """Stacking pattern, layer count, hopping and monolayer parameters."""

    stacking: str
    layers: int
    t: float
    model: str = "qwz"
    m: float = 1.0

    def __post_init__(self):
        if self.stacking not in STACKINGS:
            raise UsageError(f"unknown stacking {self.stacking!r}, expected one of {STACKINGS}")
        if self.model not in MODELS:
            raise UsageError(f"unknown model {self.model!r}, expected one of {MODELS}")
        if self.layers < 1:
            raise UsageError("layers must be a positive integer")
        if not np.isfinite(self.t) or not np.isfinite(self.m):
            raise UsageError("t and m must be finite")


@dataclass(frozen=True)
class Cell:
    """Periodic sampling cell: k = origin + u*basis[0] + v*basis[1], u,v in [0,1)."""

    origin: np.ndarray
    basis: np.ndarray  # rows are the two cell vectors

    def k_at(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        kx = self.origin[0] + u * self.basis[0, 0] + v * self.basis[1, 0]
        ky = self.origin[1] + u * self.basis[0, 1] + v * self.basis[1, 1]
        return kx, ky

    def fractions(self, kx, ky):
        """Inverse of k_at (no wrapping)."""
        d = np.stack([np.asarray(kx) - self.origin[0], np.asarray(ky) - self.origin[1]], axis=-1)
        uv = d @ np.linalg.inv(self.basis)
        return uv[..., 0], uv[..., 1]

    def reduce(self, kx, ky):
        """Wrap momenta into the cell."""
        u, v = self.fractions(kx, ky)
        return self.k_at(u % 1.0, v % 1.0)


def qwz_field(kx, ky, m):
    """Square-lattice field (sin kx, sin ky, m - cos kx - cos ky)."""
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    kx, ky = np.broadcast_arrays(kx, ky)
    return np.stack([np.sin(kx), np.sin(ky), m - np.cos(kx) - np.cos(ky)], axis=-1)


def haldane_field(kx, ky, m):
    """Triangular-lattice field.

    h1 = 4 sum_i cos(k.a_i), h2 = 4 sum_i sin(k.a_i),
    h3 = m - 2 sum_i sin(k.b_i).
    """
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    kx, ky = np.broadcast_arrays(kx, ky)
    k = np.stack([kx, ky], axis=-1)
    ka = k @ TRI_A.T
    kb = k @ TRI_B.T
    return np.stack([
        4.0 * np.cos(ka).sum(axis=-1),
        4.0 * np.sin(ka).sum(axis=-1),
        m - 2.0 * np.sin(kb).sum(axis=-1),
    ], axis=-1)


def monolayer_field(cfg, kx, ky):
    if cfg.model == "qwz":
        return qwz_field(kx, ky, cfg.m)
    return haldane_field(kx, ky, cfg.m)


def sampling_cell(model):
    """Periodic cell used for grids, contours and curvature sums.

    The square-lattice model uses [-pi, pi)^2.  The triangular model uses
    the parallelogram spanned by the reciprocal vectors G_i of the direct
    vectors a_1, a_2 (G_i . a_j = 2 pi delta_ij); all three field
    components are periodic under both G_i because every b_i is an
    integer combination of the a_i.
    """
    if model == "qwz":
        return Cell(np.array([-np.pi, -np.pi]),
                    np.array([[2 * np.pi, 0.0], [0.0, 2 * np.pi]]))
    if model == "haldane":
        A = TRI_A[:2]
        G = 2 * np.pi * np.linalg.inv(A).T
        if np.linalg.det(G) < 0:
            G = G[::-1].copy()
        return Cell(np.array([0.0, 0.0]), G)
    raise UsageError(f"unknown model {model!r}")


def interlayer_chain(N):
    """Tridiagonal coupling Sigma1 with ones on the super/subdiagonal."""
    S = np.zeros((N, N))
    idx = np.arange(N - 1)
    S[idx, idx + 1] = 1.0
    S[idx + 1, idx] = 1.0
    return S


def interlayer_alternating(N):
    """Bernal-pattern coupling Sigma2: entries -i, +i, -i, ... above the diagonal."""
    S = np.zeros((N, N), dtype=complex)
    for l in range(N - 1):
        v = -1j * (-1.0) ** l
        S[l, l + 1] = v
        S[l + 1, l] = np.conj(v)
    return S


def coupling_matrix(cfg):
    """The k-independent interlayer part of the Bloch Hamiltonian."""
    N = cfg.layers
    if cfg.stacking == "abba":
        return cfg.t * np.kron(interlayer_chain(N), PAULI[0])
    return 0.5 * cfg.t * (np.kron(interlayer_chain(N), PAULI[0])
                          + np.kron(interlayer_alternating(N), PAULI[1]))


def build_layered(kx, ky, cfg):
    """2N x 2N Bloch Hamiltonian; broadcasts over momentum arrays.

    Returns shape (..., 2N, 2N) for array input, (2N, 2N) for scalars.
    For N = 1 both stackings reduce to the bare monolayer h . sigma.
    """
    h = monolayer_field(cfg, kx, ky)
    N = cfg.layers
    eye = np.eye(N)
    H = sum(h[..., i, None, None] * np.kron(eye, PAULI[i]) for i in range(3))
    return H + coupling_matrix(cfg)


def hamiltonian_terms(cfg):
    """Structure matrices of the Hamiltonian terms, without field prefactors.

    Returns a list of (label, matrix) pairs: the three monolayer terms
    1 (x) s_i and the interlayer term(s) of the requested stacking.
    """
    N = cfg.layers
    eye = np.eye(N)
    terms = [(f"1.s{i + 1}", np.kron(eye, PAULI[i])) for i in range(3)]
    terms.append(("Sig1.s1", np.kron(interlayer_chain(N), PAULI[0])))
    if cfg.stacking == "ba":
        terms.append(("Sig2.s2", np.kron(interlayer_alternating(N), PAULI[1])))
    return terms


def anticommutator_table(cfg):
    """Frobenius norm of {A, B} for every pair of Hamiltonian terms.

    Useful to see which terms square-combine in the spectrum: a term
    anticommuting with all others contributes under a single square root.
    """
    terms = hamiltonian_terms(cfg)
    table = {}
    for a, (la, Ma) in enumerate(terms):
        for lb, Mb in terms[a + 1:]:
            anti = Ma @ Mb + Mb @ Ma
            table[(la, lb)] = float(np.linalg.norm(anti))
    return table
