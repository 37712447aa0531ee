"""Reference states and the observables reported by every solver.

All evaluators accept either a ket (1D complex array) or a density operator
(2D array) over a declared basis; joint-basis inputs are reduced over the
photon factor where an atomic quantity is asked for.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from .errors import CutoffWarning
from .fockspace import JointBasis, SparseOperator
from .models import adiabatic_photon_number_operator

CUTOFF_POPULATION_TOL = 1e-4


def build_mi_state(basis):
    """Uniform-filling product Fock state |n, n, ..., n>, n = N / M."""
    n_atoms, n_sites = basis.num_atoms, basis.num_sites
    if n_atoms % n_sites:
        raise ValueError(
            f"Mott state undefined: {n_atoms} atoms not divisible by {n_sites} sites"
        )
    return basis.state_vector((n_atoms // n_sites,) * n_sites)


def build_sf_state(basis):
    """Every atom delocalized uniformly: (sum_j b_j^dag / sqrt(M))^N |vac>.

    Coefficients are proportional to 1/sqrt(prod_i k_i!) and the state is
    normalized numerically.
    """
    amps = np.array(
        [math.prod(math.factorial(n) for n in occ) ** -0.5 for occ in basis.states],
        dtype=complex,
    )
    return amps / np.linalg.norm(amps)


def _as_density(state):
    state = np.asarray(state)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def partial_trace_photon(state, joint):
    """Reduced atomic density operator of a joint ket or density operator."""
    d_at, d_ph = joint.atomic.dim, joint.photon_cutoff + 1
    state = np.asarray(state)
    if state.ndim == 1:
        m = state.reshape(d_at, d_ph)
        return m @ m.conj().T
    r = state.reshape(d_at, d_ph, d_at, d_ph)
    return np.einsum("anbn->ab", r)


def photon_populations(state, joint):
    """Diagonal photon-number distribution of a joint state."""
    d_at, d_ph = joint.atomic.dim, joint.photon_cutoff + 1
    state = np.asarray(state)
    if state.ndim == 1:
        return (np.abs(state.reshape(d_at, d_ph)) ** 2).sum(axis=0)
    diag = np.real(np.diagonal(state)).reshape(d_at, d_ph)
    return diag.sum(axis=0)


def expectation(op, state):
    """<A> for a ket or tr(A rho); `op` is a SparseOperator or matrix."""
    mat = op.matrix if isinstance(op, SparseOperator) else op
    state = np.asarray(state)
    if state.ndim == 1:
        return complex(np.vdot(state, mat @ state))
    return complex((mat @ state).trace())


def overlap_probability(state, reference, basis):
    """|<ref|psi>|^2 for kets, <ref|rho|ref> for density operators.

    For a joint basis the photon factor is traced out first, so the result is
    <ref| tr_ph rho |ref>.
    """
    reference = np.asarray(reference)
    if isinstance(basis, JointBasis):
        if reference.shape[0] != basis.atomic.dim:
            raise ValueError("reference must live on the atomic factor")
        rho_at = partial_trace_photon(state, basis)
        return float(np.real(reference.conj() @ rho_at @ reference))
    state = np.asarray(state)
    if state.shape[0] != reference.shape[0]:
        raise ValueError(
            f"basis mismatch: state dim {state.shape[0]}, reference dim {reference.shape[0]}"
        )
    if state.ndim == 1:
        return float(abs(np.vdot(reference, state)) ** 2)
    return float(np.real(reference.conj() @ state @ reference))


def site_occupations(state, basis):
    """<n_j> over sites, for atomic or joint input."""
    if isinstance(basis, JointBasis):
        rho_at = partial_trace_photon(state, basis)
        probs = np.real(np.diagonal(rho_at))
        atomic = basis.atomic
    else:
        rho = _as_density(state)
        probs = np.real(np.diagonal(rho))
        atomic = basis
    occ = np.asarray(atomic.states, dtype=float)
    return probs @ occ


def mean_position(state, basis):
    """Population-weighted mean position in units of kx (site j at j*pi)."""
    if isinstance(basis, JointBasis):
        n_atoms = basis.atomic.num_atoms
        n_sites = basis.atomic.num_sites
    else:
        n_atoms = basis.num_atoms
        n_sites = basis.num_sites
    occ = site_occupations(state, basis)
    sites = np.pi * np.arange(n_sites)
    return float(occ @ sites / n_atoms)


def photon_number(state, joint, warn_cutoff=True):
    """<a^dag a> of a joint state; warns when the truncation edge is populated."""
    pops = photon_populations(state, joint)
    if warn_cutoff and pops[-1] > CUTOFF_POPULATION_TOL:
        warnings.warn(
            f"photon cutoff saturating: population {pops[-1]:.3g} at n_max",
            CutoffWarning,
            stacklevel=2,
        )
    return float(pops @ np.arange(joint.photon_cutoff + 1))


def photon_number_adiabatic(state, setup, p, m):
    """Photon-number estimate from the steady-state field operator, evaluated
    on an atomic-basis state."""
    op = adiabatic_photon_number_operator(setup, p, m)
    return float(np.real(expectation(op, state)))


def projector(state):
    """|psi><psi| as a SparseOperator (for expectation-style evaluation)."""
    state = np.asarray(state, dtype=complex)
    return SparseOperator(sp.csr_matrix(np.outer(state, state.conj())), hermitian=True)


@dataclass
class ObservableRecord:
    """One sampled row of the standard observable set."""

    time: float
    p_mi: float
    p_sf: float
    photon_number: float
    photon_number_adiabatic: float
    mean_kx: float
    imbalance_sq: float
    hop: float
    trace_drift: float

    def validate(self):
        if not (-1e-9 <= self.p_mi <= 1.0 + 1e-9 and -1e-9 <= self.p_sf <= 1.0 + 1e-9):
            raise ValueError(f"overlap probabilities outside [0, 1]: {self}")
        if self.photon_number < -1e-9:
            raise ValueError(f"negative photon number: {self}")


RECORD_FIELDS = [f.name for f in fields(ObservableRecord)]


def standard_observable_set(model):
    """Operators whose expectations fill an ObservableRecord, adapted to the
    model's basis (joint or atomic) and pump geometry.

    Quantities that do not exist for a basis (e.g. the direct photon number
    of an atomic-only model) are simply absent from the returned dict.
    """
    from .fockspace import (
        build_hop_operator,
        build_imbalance_operator,
        build_photon_ops,
        build_site_number_operator,
        lift_to_joint,
    )

    joint = model.basis if model.is_joint else None
    atomic = model.basis.atomic if joint else model.basis
    p, m = model.params, model.elements

    def lift(op):
        return lift_to_joint(op, joint, "atomic") if joint else op

    ops = {}
    if atomic.num_atoms and atomic.num_atoms % atomic.num_sites == 0:
        ops["p_mi"] = lift(projector(build_mi_state(atomic)))
    if atomic.num_atoms:
        ops["p_sf"] = lift(projector(build_sf_state(atomic)))
        hop = build_hop_operator(atomic, p.boundary if p else "open")
        imb = build_imbalance_operator(atomic)
        ops["hop"] = lift(hop)
        ops["imbalance_sq"] = lift(SparseOperator((imb @ imb).matrix, hermitian=True))
        kx = sum(
            (np.pi * j / atomic.num_atoms) * build_site_number_operator(atomic, j).matrix
            for j in range(atomic.num_sites)
        )
        ops["mean_kx"] = lift(SparseOperator(kx, hermitian=True))
    if joint:
        _, _, nph = build_photon_ops(joint.photon_cutoff)
        ops["photon_number"] = lift_to_joint(nph, joint, "photonic")
    if p is not None and m is not None:
        setup = "atom_pump" if p.eta_eff and not p.eta else "cavity_pump"
        ops["photon_number_adiabatic"] = lift(adiabatic_photon_number_operator(setup, p, m))
    return ops


def records_from_expectations(times, expectations, trace_drift=None):
    """Assemble ObservableRecords from solver expectation arrays (missing
    quantities filled with nan)."""
    rows = []
    n = len(times)
    drift = trace_drift if trace_drift is not None else np.zeros(n)

    def col(name):
        if name in expectations:
            return np.real(np.asarray(expectations[name]))
        return np.full(n, np.nan)

    data = {name: col(name) for name in RECORD_FIELDS if name not in ("time", "trace_drift")}
    for i, t in enumerate(times):
        rows.append(
            ObservableRecord(
                time=float(t),
                trace_drift=float(drift[i]),
                **{k: float(v[i]) for k, v in data.items()},
            )
        )
    return rows


def write_records_csv(path, records, header_lines=()):
    """CSV export: '#' comment header, then one row per record.

    Times are in units of 1/omega_R (the header names the units); floats are
    written with 17 significant digits for lossless round-trip.
    """
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("# units: time in 1/omega_R, photon numbers dimensionless\n")
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for rec in records:
            writer.writerow([f"{getattr(rec, name):.17g}" for name in RECORD_FIELDS])
