"""Hamiltonian and Liouvillian builders.

Every builder returns a `LindbladModel`: a hermitian Hamiltonian plus a list
of (collapse operator, rate) pairs, all in recoil units (energies E_R, rates
and frequencies omega_R, hbar = 1).  The dissipator convention throughout is

    D[c, rate] rho = rate * (2 c rho c^dag - c^dag c rho - rho c^dag c),

so cavity loss at linewidth kappa is the pair (a, kappa), equivalent to a
standard Lindblad jump operator sqrt(2 kappa) a.

Two pump geometries are covered, each in a full joint (atom ⊗ photon) version
and in field-eliminated atomic-only versions:

  * cavity pump: drive eta injected through a mirror; all atoms couple to the
    same mode, which mediates an infinite-range atom-atom interaction,
  * atom pump: transverse drive eta_eff scattered into the mode by the atoms
    themselves, with opposite phase on neighbouring sites, so the odd/even
    population imbalance sources the field (self-organization).

The shifted detuning delta_c - u0 * J0 * N (cavity detuning corrected by the
collective dispersive shift) can be supplied directly via
`ModelParams.delta_c_shifted`; the effective models depend on the detuning
only through it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import scipy.sparse as sp

from .errors import CutoffError, CutoffWarning, ModelValidityError
from .fockspace import (
    JointBasis,
    SparseOperator,
    build_hop_operator,
    build_imbalance_operator,
    build_number_operator,
    build_onsite_interaction,
    build_photon_ops,
    enumerate_basis,
)


@dataclass(frozen=True)
class ModelParams:
    """Physical configuration in recoil units.

    u0: single-atom dispersive light shift at an antinode (omega_R, < 0 for
        red detuning); also the lattice depth per cavity photon.
    kappa: cavity linewidth (omega_R).
    eta: cavity pump amplitude (omega_R); eta_eff: effective transverse pump
        amplitude (omega_R).  The generic setups use exactly one of them.
    delta_c / delta_c_shifted: cavity-pump detuning, bare or corrected by the
        collective shift u0*J0*N; set exactly one.
    v_cl: classical (FORT) lattice depth (E_R, <= 0).
    g1d: one-dimensional on-site interaction strength (E_R * d).
    """

    num_atoms: int
    num_sites: int
    u0: float = 0.0
    kappa: float = 1.0
    eta: float = 0.0
    eta_eff: float = 0.0
    delta_c: float | None = None
    delta_c_shifted: float | None = None
    v_cl: float = 0.0
    g1d: float = 0.0
    photon_cutoff: int = 0
    boundary: str = "open"

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.photon_cutoff < 0:
            raise ValueError(f"photon_cutoff must be >= 0, got {self.photon_cutoff}")
        if (self.delta_c is None) == (self.delta_c_shifted is None):
            raise ValueError("set exactly one of delta_c / delta_c_shifted")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")


@dataclass(frozen=True)
class LindbladModel:
    """A Hamiltonian plus collapse channels; the universal solver input."""

    hamiltonian: SparseOperator
    collapse_ops: tuple
    basis: object  # LatticeBasis or JointBasis
    label: str
    params: ModelParams | None = None
    elements: object | None = None

    def __post_init__(self):
        if not self.hamiltonian.hermitian:
            raise ValueError("model Hamiltonian must carry a verified hermitian flag")
        for _, rate in self.collapse_ops:
            if rate < 0:
                raise ModelValidityError(f"negative collapse rate {rate}")

    @property
    def dim(self):
        return self.hamiltonian.dim

    @property
    def is_joint(self):
        return isinstance(self.basis, JointBasis)


def shifted_detuning(p, m):
    """delta_c - u0 * J0 * N, from whichever detuning field is set."""
    if p.delta_c_shifted is not None:
        return p.delta_c_shifted
    return p.delta_c - p.u0 * m.onsite_lattice * p.num_atoms


def bare_detuning(p, m):
    if p.delta_c is not None:
        return p.delta_c
    return p.delta_c_shifted + p.u0 * m.onsite_lattice * p.num_atoms


def estimate_photon_number(p, m):
    """Zeroth-order steady photon number for the active pump geometry."""
    dp = shifted_detuning(p, m)
    lorentz = p.kappa**2 + dp**2
    n = 0.0
    if p.eta:
        n += p.eta**2 / lorentz
    if p.eta_eff:
        # worst case: fully imbalanced atoms, |<D>| = N
        n += (p.eta_eff * m.onsite_pump * p.num_atoms) ** 2 / lorentz
    return n


def suggest_photon_cutoff(n_estimate):
    """Coherent-tail covering cutoff for an estimated mean photon number."""
    return math.ceil(n_estimate + 6.0 * math.sqrt(max(n_estimate, 0.0)) + 10.0)


def _check_cutoff(p, m, strict):
    n_est = estimate_photon_number(p, m)
    suggested = suggest_photon_cutoff(n_est)
    if p.photon_cutoff < suggested:
        msg = (
            f"photon_cutoff={p.photon_cutoff} below suggested {suggested} "
            f"for estimated <n>={n_est:.3g}"
        )
        if strict:
            raise CutoffError(msg)
        warnings.warn(msg, CutoffWarning, stacklevel=3)


def atomic_operators(p):
    """(basis, hop B, interaction C, imbalance D, number N) for the params."""
    basis = enumerate_basis(p.num_atoms, p.num_sites)
    return (
        basis,
        build_hop_operator(basis, p.boundary),
        build_onsite_interaction(basis),
        build_imbalance_operator(basis),
        build_number_operator(basis),
    )


def _joint(at_op, ph_op):
    return sp.kron(at_op.matrix, ph_op.matrix, format="csr")


def _joint_model_pieces(p):
    basis, hop, inter, imb, num = atomic_operators(p)
    joint = JointBasis(basis, p.photon_cutoff)
    a, ad, nph = build_photon_ops(p.photon_cutoff)
    ident_at = sp.identity(basis.dim, format="csr", dtype=complex)
    ident_ph = sp.identity(p.photon_cutoff + 1, format="csr", dtype=complex)
    return basis, joint, hop, inter, imb, num, a, ad, nph, ident_at, ident_ph


def build_general_full(p, m, strict_cutoff=False):
    """Joint model with both pump channels present (ground states and
    completeness; the generic single-pump builders cover the dynamics)."""
    _check_cutoff(p, m, strict_cutoff)
    basis, joint, hop, inter, imb, num, a, ad, nph, i_at, i_ph = _joint_model_pieces(p)
    dp = bare_detuning(p, m)
    h = (
        (m.onsite_kinetic + p.v_cl * m.onsite_lattice) * sp.kron(num.matrix, i_ph, format="csr")
        + (m.hop_kinetic + p.v_cl * m.hop_lattice) * sp.kron(hop.matrix, i_ph, format="csr")
        + p.u0 * m.onsite_lattice * _joint(num, nph)
        + p.u0 * m.hop_lattice * _joint(hop, nph)
        + p.eta_eff * m.onsite_pump * _joint(imb, a + ad)
        - dp * sp.kron(i_at, nph.matrix, format="csr")
        - 1.0j * p.eta * sp.kron(i_at, (a - ad).matrix, format="csr")
        + 0.5 * m.interaction * sp.kron(inter.matrix, i_ph, format="csr")
    )
    a_l = SparseOperator(sp.kron(i_at, a.matrix, format="csr"), check=False)
    return LindbladModel(
        hamiltonian=SparseOperator(h, hermitian=True),
        collapse_ops=((a_l, p.kappa),),
        basis=joint,
        label="general_full",
        params=p,
        elements=m,
    )


def build_cavity_pump_full(p, m, strict_cutoff=False):
    """Full joint model for a coherently driven cavity (eta_eff = 0)."""
    if p.eta_eff != 0.0:
        raise ValueError("cavity-pump model requires eta_eff = 0")
    return replace(build_general_full(p, m, strict_cutoff), label="cavity_pump_full")


def build_atom_pump_full(p, m, keep_dispersive_hop=False, strict_cutoff=False):
    """Full joint model for transverse pumping (eta = 0).

    With `keep_dispersive_hop` the photon-number dependent hopping term
    u0 * J * a^dag a * B is retained; without it the model reduces to the
    simpler form whose hopping depth is purely classical.
    """
    if p.eta != 0.0:
        raise ValueError("atom-pump model requires eta = 0")
    _check_cutoff(p, m, strict_cutoff)
    basis, joint, hop, inter, imb, num, a, ad, nph, i_at, i_ph = _joint_model_pieces(p)
    dp = shifted_detuning(p, m)
    h = (
        (m.hop_kinetic + m.hop_lattice * p.v_cl) * sp.kron(hop.matrix, i_ph, format="csr")
        - dp * sp.kron(i_at, nph.matrix, format="csr")
        + 0.5 * m.interaction * sp.kron(inter.matrix, i_ph, format="csr")
        + p.eta_eff * m.onsite_pump * _joint(imb, a + ad)
    )
    if keep_dispersive_hop:
        h = h + p.u0 * m.hop_lattice * _joint(hop, nph)
    a_l = SparseOperator(sp.kron(i_at, a.matrix, format="csr"), check=False)
    return LindbladModel(
        hamiltonian=SparseOperator(h, hermitian=True),
        collapse_ops=((a_l, p.kappa),),
        basis=joint,
        label="atom_pump_full",
        params=p,
        elements=m,
    )


def build_adiabatic_cavity_pump(p, m, variant="symmetrized"):
    """Cavity-pump model with the field eliminated (atomic basis).

    Both variants share the first-order cavity-induced hopping term and a
    hop-squared long-range term; they differ in that term's coefficient:

      * "symmetrized" (default): read off the symmetrized Heisenberg
        equations; coefficient u0*J*dp / (kappa^2 + dp^2),
      * "substitution": steady-state field substituted into Hamiltonian and
        Liouvillian; extra factor (kappa^2 - 3 dp^2) / (kappa^2 + dp^2).

    The two coincide exactly at dp = 0 and converge for large kappa.
    Dissipation acts through the hop operator with rate
    kappa * (u0 J eta)^2 / (kappa^2 + dp^2)^2.
    """
    if p.eta_eff != 0.0:
        raise ValueError("cavity-pump model requires eta_eff = 0")
    if variant not in ("symmetrized", "substitution"):
        raise ValueError(f"unknown variant {variant!r}")
    basis, hop, inter, _, _ = atomic_operators(p)
    dp = shifted_detuning(p, m)
    lorentz = p.kappa**2 + dp**2
    c2 = p.u0 * m.hop_lattice * dp / lorentz
    if variant == "substitution":
        c2 *= (p.kappa**2 - 3.0 * dp**2) / lorentz
    drive = p.u0 * m.hop_lattice * p.eta**2 / lorentz
    h = (
        (m.hop_kinetic + m.hop_lattice * p.v_cl) * hop.matrix
        + 0.5 * m.interaction * inter.matrix
        + drive * (hop.matrix + c2 * (hop.matrix @ hop.matrix))
    )
    rate = p.kappa * (p.u0 * m.hop_lattice * p.eta) ** 2 / lorentz**2
    return LindbladModel(
        hamiltonian=SparseOperator(h, hermitian=True),
        collapse_ops=((hop, rate),),
        basis=basis,
        label=f"adiabatic_cavity_{variant}",
        params=p,
        elements=m,
    )


def build_field_eliminated_master(p, m, epsilon_warn=0.1):
    """Cavity-pump generator from the density-operator elimination route.

    The dissipative part is the double commutator -gamma [B, [B, rho]] with
    gamma = (J u0 eta)^2 (kappa^2 - dp^2) / (2 kappa (kappa^2 + dp^2)^2),
    which for hermitian B equals the standard pair (B, gamma).  The analysis
    requires gamma >= 0; |dp| > kappa is refused rather than guessed at.
    Validity also needs epsilon = |u0 <n> / kappa| << 1 (warned above
    `epsilon_warn`).
    """
    if p.eta_eff != 0.0:
        raise ValueError("cavity-pump model requires eta_eff = 0")
    basis, hop, inter, _, _ = atomic_operators(p)
    dp = shifted_detuning(p, m)
    lorentz = p.kappa**2 + dp**2
    gamma = (m.hop_lattice * p.u0 * p.eta) ** 2 * (p.kappa**2 - dp**2) / (
        2.0 * p.kappa * lorentz**2
    )
    if gamma < 0.0:
        raise ModelValidityError(
            f"|shifted detuning| {abs(dp):.3g} exceeds kappa {p.kappa:.3g}: "
            "double-commutator rate would be negative"
        )
    eps = abs(p.u0) * estimate_photon_number(p, m) / p.kappa
    if eps > epsilon_warn:
        warnings.warn(
            f"field elimination marginal: |u0 <n> / kappa| = {eps:.3g}",
            UserWarning,
            stacklevel=2,
        )
    h = (
        (m.hop_kinetic + m.hop_lattice * p.v_cl) * hop.matrix
        + 0.5 * m.interaction * inter.matrix
        + (p.u0 * p.eta**2 / lorentz)
        * (
            m.hop_lattice * hop.matrix
            + (p.u0 * dp * m.hop_lattice**2 / lorentz) * (hop.matrix @ hop.matrix)
        )
    )
    return LindbladModel(
        hamiltonian=SparseOperator(h, hermitian=True),
        collapse_ops=((hop, gamma),),
        basis=basis,
        label="field_eliminated",
        params=p,
        elements=m,
    )


def build_adiabatic_atom_pump(p, m):
    """Atom-pump model with the field eliminated (atomic basis).

    The cavity shifts the energy of imbalanced configurations through D^2 and
    damps through D: rate kappa * (eta_eff * Jt0)^2 / (kappa^2 + dp^2).  The
    balanced (Mott) state is annihilated by D and therefore decoupled from
    the dissipator.
    """
    if p.eta != 0.0:
        raise ValueError("atom-pump model requires eta = 0")
    basis, hop, inter, imb, _ = atomic_operators(p)
    dp = shifted_detuning(p, m)
    lorentz = p.kappa**2 + dp**2
    coupling = (m.onsite_pump * p.eta_eff) ** 2
    h = (
        (m.hop_kinetic + m.hop_lattice * p.v_cl) * hop.matrix
        + 0.5 * m.interaction * inter.matrix
        + (coupling * dp / lorentz) * (imb.matrix @ imb.matrix)
    )
    rate = p.kappa * coupling / lorentz
    return LindbladModel(
        hamiltonian=SparseOperator(h, hermitian=True),
        collapse_ops=((imb, rate),),
        basis=basis,
        label="adiabatic_atom_pump",
        params=p,
        elements=m,
    )


def build_classical_bh(p, m):
    """Plain Bose-Hubbard reference: lattice depth from `m.depth` alone,
    no cavity, no dissipation."""
    basis, hop, inter, _, _ = atomic_operators(p)
    h = (m.hop_kinetic + m.hop_lattice * m.depth) * hop.matrix + 0.5 * m.interaction * inter.matrix
    return LindbladModel(
        hamiltonian=SparseOperator(h, hermitian=True),
        collapse_ops=(),
        basis=basis,
        label="classical_bh",
        params=p,
        elements=m,
    )


def adiabatic_field_operator(setup, p, m):
    """Steady-state cavity field as an atomic-basis operator.

    cavity pump: eta/(kappa - i dp) * [1 - i u0 J B /(kappa - i dp)
                 - (u0 J)^2 B^2 /(kappa - i dp)^2]   (expansion in the hop)
    atom pump:   i eta_eff Jt0 D / (i dp - kappa)

    The returned operator is non-hermitian; photon-number estimates use
    a_ss^dag a_ss.
    """
    basis, hop, _, imb, _ = atomic_operators(p)
    dp = shifted_detuning(p, m)
    if setup == "cavity_pump":
        pole = p.kappa - 1.0j * dp
        uj = p.u0 * m.hop_lattice
        ident = sp.identity(basis.dim, format="csr", dtype=complex)
        mat = (p.eta / pole) * (
            ident
            - (1.0j * uj / pole) * hop.matrix
            - (uj / pole) ** 2 * (hop.matrix @ hop.matrix)
        )
    elif setup == "atom_pump":
        mat = (1.0j * p.eta_eff * m.onsite_pump / (1.0j * dp - p.kappa)) * imb.matrix
    else:
        raise ValueError(f"setup must be 'cavity_pump' or 'atom_pump', got {setup!r}")
    return SparseOperator(mat, check=False)


def adiabatic_photon_number_operator(setup, p, m):
    """a_ss^dag a_ss for the chosen geometry (hermitian, atomic basis)."""
    a_ss = adiabatic_field_operator(setup, p, m)
    return SparseOperator((a_ss.dag() @ a_ss).matrix, hermitian=True)
