"""Occupation-number bases and sparse operators.

Bosonic lattice states are enumerated at fixed total atom number; the cavity
mode lives in a truncated Fock space.  Everything downstream (model builders,
solvers, observables) works with the `SparseOperator` wrapper defined here,
which is a scipy CSR matrix plus a verified hermiticity flag.

Conventions:
  * lattice sites are indexed from 0; site 0 sits at kx = 0 (an antinode)
  * occupation vectors are ordered lexicographically descending, from
    |N,0,...,0> to |0,...,0,N>
  * joint (atom ⊗ photon) indices are atomic-major:
    index = atomic_index * (n_max + 1) + photon_number
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

HERMITICITY_TOL = 1e-12


class SparseOperator:
    """Complex sparse matrix with a tracked, verified hermiticity flag."""

    __slots__ = ("matrix", "hermitian")

    def __init__(self, matrix, hermitian=False, drop_tol=0.0, check=True):
        m = sp.csr_matrix(matrix, dtype=complex)
        if drop_tol > 0.0:
            m.data[np.abs(m.data) < drop_tol] = 0.0
            m.eliminate_zeros()
        if hermitian and check and m.nnz:
            dev = abs(m - m.conj().T)
            if dev.nnz and dev.max() > HERMITICITY_TOL:
                raise ValueError(
                    f"operator flagged hermitian deviates from H=H^dag by {dev.max():.3e}"
                )
        self.matrix = m
        self.hermitian = bool(hermitian)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def nnz(self):
        return self.matrix.nnz

    def dag(self):
        if self.hermitian:
            return self
        return SparseOperator(self.matrix.conj().T, check=False)

    def to_dense(self):
        return self.matrix.toarray()

    def entries(self):
        """Yield (row, col, value) triplets of the stored entries."""
        coo = self.matrix.tocoo()
        yield from zip(coo.row, coo.col, coo.data)

    def expect(self, state):
        """<psi|A|psi> for a ket, or tr(A rho) for a square matrix."""
        state = np.asarray(state)
        if state.ndim == 1:
            val = np.vdot(state, self.matrix @ state)
        else:
            val = (self.matrix @ state).trace()
        return val.real if self.hermitian else val

    def __add__(self, other):
        o = other.matrix if isinstance(other, SparseOperator) else other
        herm = self.hermitian and isinstance(other, SparseOperator) and other.hermitian
        return SparseOperator(self.matrix + o, hermitian=herm, check=False)

    def __sub__(self, other):
        o = other.matrix if isinstance(other, SparseOperator) else other
        herm = self.hermitian and isinstance(other, SparseOperator) and other.hermitian
        return SparseOperator(self.matrix - o, hermitian=herm, check=False)

    def __mul__(self, scalar):
        herm = self.hermitian and np.isreal(scalar)
        return SparseOperator(self.matrix * scalar, hermitian=bool(herm), check=False)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            return SparseOperator(self.matrix @ other.matrix, check=False)
        return self.matrix @ other

    def __repr__(self):
        tag = "hermitian" if self.hermitian else "general"
        return f"SparseOperator(dim={self.dim}, nnz={self.nnz}, {tag})"


@dataclass(frozen=True)
class LatticeBasis:
    """All occupation vectors of `num_atoms` bosons on `num_sites` sites.

    `states[i]` is the i-th occupation tuple; `index` inverts that map.
    """

    num_atoms: int
    num_sites: int
    states: tuple
    index: dict

    @property
    def dim(self):
        return len(self.states)

    def state_vector(self, occupation):
        """Unit vector for one occupation tuple."""
        occ = tuple(int(n) for n in occupation)
        if occ not in self.index:
            raise ValueError(f"occupation {occ} not in basis (N={self.num_atoms}, M={self.num_sites})")
        v = np.zeros(self.dim, dtype=complex)
        v[self.index[occ]] = 1.0
        return v


@dataclass(frozen=True)
class JointBasis:
    """Tensor product of an atomic `LatticeBasis` with a photon Fock space
    truncated at `photon_cutoff` (atomic-major index ordering)."""

    atomic: LatticeBasis
    photon_cutoff: int

    @property
    def dim(self):
        return self.atomic.dim * (self.photon_cutoff + 1)

    def joint_index(self, atomic_index, n_photon):
        if not 0 <= n_photon <= self.photon_cutoff:
            raise ValueError(f"photon number {n_photon} outside cutoff {self.photon_cutoff}")
        return atomic_index * (self.photon_cutoff + 1) + n_photon

    def split_index(self, joint_index):
        return divmod(joint_index, self.photon_cutoff + 1)

    def state_vector(self, occupation, n_photon):
        v = np.zeros(self.dim, dtype=complex)
        v[self.joint_index(self.atomic.index[tuple(occupation)], n_photon)] = 1.0
        return v


def _occupations(n, m):
    if m == 1:
        yield (n,)
        return
    for k in range(n, -1, -1):
        for rest in _occupations(n - k, m - 1):
            yield (k,) + rest


def enumerate_basis(num_atoms, num_sites):
    """Enumerate the fixed-N occupation basis, lexicographically descending.

    `num_atoms = 0` is allowed and yields the single empty-lattice state
    (used for pure-cavity reference calculations).
    """
    if num_atoms < 0:
        raise ValueError(f"num_atoms must be >= 0, got {num_atoms}")
    if num_sites < 2:
        raise ValueError(f"num_sites must be >= 2, got {num_sites}")
    states = tuple(_occupations(num_atoms, num_sites))
    expected = math.comb(num_atoms + num_sites - 1, num_atoms)
    assert len(states) == expected
    index = {occ: i for i, occ in enumerate(states)}
    return LatticeBasis(num_atoms=num_atoms, num_sites=num_sites, states=states, index=index)


def _bonds(num_sites, boundary):
    if boundary not in ("open", "periodic"):
        raise ValueError(f"boundary must be 'open' or 'periodic', got {boundary!r}")
    bonds = [(k, k + 1) for k in range(num_sites - 1)]
    # A two-site ring would traverse its single bond twice; keep one bond so
    # the coupling stays the physical one (no spurious factor 2).
    if boundary == "periodic" and num_sites > 2:
        bonds.append((num_sites - 1, 0))
    return bonds


def build_hop_operator(basis, boundary="open"):
    """Nearest-neighbour hop operator: sum over bonds of b_j^dag b_i + h.c."""
    dim = basis.dim
    rows, cols, vals = [], [], []
    for col, occ in enumerate(basis.states):
        for i, j in _bonds(basis.num_sites, boundary):
            for src, dst in ((i, j), (j, i)):
                if occ[src] == 0:
                    continue
                new = list(occ)
                new[src] -= 1
                new[dst] += 1
                rows.append(basis.index[tuple(new)])
                cols.append(col)
                vals.append(math.sqrt(occ[src] * (occ[dst] + 1)))
    m = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
    return SparseOperator(m, hermitian=True)


def build_onsite_interaction(basis):
    """Diagonal operator with entries sum_k n_k (n_k - 1)."""
    diag = [sum(n * (n - 1) for n in occ) for occ in basis.states]
    return SparseOperator(sp.diags(np.asarray(diag, dtype=float), format="csr"), hermitian=True)


def build_imbalance_operator(basis):
    """Odd-even site population difference, site 0 counted with +."""
    diag = [sum(((-1) ** k) * n for k, n in enumerate(occ)) for occ in basis.states]
    return SparseOperator(sp.diags(np.asarray(diag, dtype=float), format="csr"), hermitian=True)


def build_number_operator(basis):
    """Total atom number (a multiple of the identity on a fixed-N basis)."""
    diag = [float(sum(occ)) for occ in basis.states]
    return SparseOperator(sp.diags(diag, format="csr"), hermitian=True)


def build_site_number_operator(basis, site):
    """Occupation of one site."""
    if not 0 <= site < basis.num_sites:
        raise ValueError(f"site {site} outside 0..{basis.num_sites - 1}")
    diag = [float(occ[site]) for occ in basis.states]
    return SparseOperator(sp.diags(diag, format="csr"), hermitian=True)


def build_photon_ops(n_max):
    """Truncated photon ladder operators (a, a_dag, a_dag a)."""
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    d = n_max + 1
    data = np.sqrt(np.arange(1, d, dtype=float))
    a = sp.diags(data, offsets=1, shape=(d, d), format="csr")
    num = sp.diags(np.arange(d, dtype=float), format="csr")
    return (
        SparseOperator(a),
        SparseOperator(a.conj().T),
        SparseOperator(num, hermitian=True),
    )


def lift_to_joint(op, joint, side):
    """Tensor an operator on one factor with the identity on the other."""
    if side == "atomic":
        if op.dim != joint.atomic.dim:
            raise ValueError(f"atomic operator dim {op.dim} != basis dim {joint.atomic.dim}")
        m = sp.kron(op.matrix, sp.identity(joint.photon_cutoff + 1, format="csr"), format="csr")
    elif side == "photonic":
        if op.dim != joint.photon_cutoff + 1:
            raise ValueError(f"photon operator dim {op.dim} != cutoff dim {joint.photon_cutoff + 1}")
        m = sp.kron(sp.identity(joint.atomic.dim, format="csr"), op.matrix, format="csr")
    else:
        raise ValueError(f"side must be 'atomic' or 'photonic', got {side!r}")
    return SparseOperator(m, hermitian=op.hermitian, check=False)


def photon_coherent_state(n_max, alpha):
    """Truncated coherent state, renormalized after truncation."""
    n = np.arange(n_max + 1)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, n_max + 1, dtype=float)))))
    amp = np.exp(-0.5 * abs(alpha) ** 2) * np.power(complex(alpha), n) / np.exp(0.5 * log_fact)
    amp = amp.astype(complex)
    norm = np.linalg.norm(amp)
    if norm == 0.0:
        raise ValueError("coherent amplitude underflows the truncated space")
    return amp / norm


def identity_operator(dim):
    return SparseOperator(sp.identity(dim, format="csr", dtype=complex), hermitian=True, check=False)
