"""Fixed-point coupling of lattice depth, matrix elements, adiabatic ground
state and mean photon number.

The cavity part of the optical potential depends on the photon number, which
depends on the atomic ground state, which depends on the matrix elements at
the operative depth.  `iterate` closes that loop with optional relaxation:

    elements(V) -> ground state of the field-eliminated model
                -> <a+a> from the steady-state field operator
                -> V_new = v_cl + u0 <a+a> -> V <- (1-alpha) V + alpha V_new

Convergence slows near the collective cavity resonance, so the default
relaxation factor drops to 0.5 there.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, UnsupportedGeometryError
from .lattice import matrix_elements_at
from .models import (
    adiabatic_photon_number_operator,
    build_adiabatic_cavity_pump,
    build_classical_bh,
)
from .observables import build_mi_state, build_sf_state, overlap_probability
from .solvers import ground_state

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class SelfConsistentResult:
    """Fixed point of the depth/photon-number loop.

    `trace` records (depth, photon_number, residual) per iteration; the
    stored elements, ground state and photon number are re-evaluated at the
    returned depth, so recomputing any of them from `depth` is reproducible
    to machine precision.
    """

    depth: float
    elements: object
    ground_state: np.ndarray
    ground_energy: float
    photon_number: float
    converged: bool
    trace: tuple
    variant: str


def _quality(kwargs):
    keys = ("n_q", "n_pw", "periods", "points_per_period")
    return {k: kwargs[k] for k in keys if k in kwargs}


def _evaluate(p, depth, variant, quality):
    """One loop body evaluation at a fixed depth."""
    m = matrix_elements_at(depth, g1d=p.g1d, **quality)
    model = build_adiabatic_cavity_pump(p, m, variant=variant)
    reference = None
    if p.num_atoms % p.num_sites == 0:
        reference = build_mi_state(model.basis)
    gs = ground_state(model.hamiltonian, reference=reference)
    n_op = adiabatic_photon_number_operator("cavity_pump", p, m)
    n_ph = float(np.real(np.vdot(gs.state, n_op.matrix @ gs.state)))
    return m, model, gs, n_ph


def initial_depth_guess(p):
    """Empty-lattice estimate v_cl + u0 * eta^2 / (kappa^2 + dp^2)."""
    if p.delta_c_shifted is not None:
        dp = p.delta_c_shifted
    else:
        # seed the collective shift with a deep-lattice overlap of one
        dp = p.delta_c - p.u0 * p.num_atoms
    return p.v_cl + p.u0 * p.eta**2 / (p.kappa**2 + dp**2)


def _default_relaxation(p, m):
    """Damped update near the collective resonance, plain update elsewhere."""
    if p.delta_c_shifted is not None:
        dp = p.delta_c_shifted
    else:
        dp = p.delta_c - p.u0 * m.onsite_lattice * p.num_atoms
    return 0.5 if abs(dp) <= 3.0 * p.kappa else 1.0


def iterate(
    p,
    initial_depth=None,
    relaxation=None,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    variant="symmetrized",
    **quality_kwargs,
):
    """Run the fixed-point loop for cavity-pump parameters `p`.

    Returns a SelfConsistentResult with `converged=False` (and the full
    trace) instead of raising when `max_iter` is exhausted.  A depth >= 0 at
    any step means the atoms are untrapped and raises
    UnsupportedGeometryError.
    """
    quality = _quality(quality_kwargs)
    depth = initial_depth if initial_depth is not None else initial_depth_guess(p)
    if depth >= 0.0:
        raise UnsupportedGeometryError(f"initial depth {depth} is not trapping")

    trace = []
    converged = False
    alpha = relaxation
    for _ in range(max_iter):
        m, _, _, n_ph = _evaluate(p, depth, variant, quality)
        if alpha is None:
            alpha = _default_relaxation(p, m)
        depth_new = p.v_cl + p.u0 * n_ph
        if depth_new >= 0.0:
            raise UnsupportedGeometryError(
                f"iteration left the trapping regime (depth {depth_new:.4g})"
            )
        residual = abs(depth_new - depth)
        trace.append((depth, n_ph, residual))
        depth = (1.0 - alpha) * depth + alpha * depth_new
        if residual < tol:
            converged = True
            break

    m, _, gs, n_ph = _evaluate(p, depth, variant, quality)
    return SelfConsistentResult(
        depth=depth,
        elements=m,
        ground_state=gs.state,
        ground_energy=gs.energy,
        photon_number=n_ph,
        converged=converged,
        trace=tuple(trace),
        variant=variant,
    )


# ---------------------------------------------------------------------------
# crossing sweep (quantum-vs-classical transition point)


@dataclass(frozen=True)
class CrossingPoint:
    kappa: float
    eta: float
    g1d_quantum: float
    g1d_classical: float


def _mi_sf_balance(state, basis):
    return overlap_probability(state, build_mi_state(basis), basis) - overlap_probability(
        state, build_sf_state(basis), basis
    )


def classical_crossing(p, pump_depth, g1d_lo, g1d_hi, xtol=1e-6, **quality_kwargs):
    """Interaction strength where the plain Bose-Hubbard ground state at
    depth `pump_depth` has equal Mott anddelocalized weight."""
    quality = _quality(quality_kwargs)

    def balance(g1d):
        m = matrix_elements_at(pump_depth, g1d=g1d, **quality)
        model = build_classical_bh(p, m)
        gs = ground_state(model.hamiltonian, reference=build_mi_state(model.basis))
        return _mi_sf_balance(gs.state, model.basis)

    return _bisect(balance, g1d_lo, g1d_hi, xtol)


def quantum_crossing(p, g1d_lo, g1d_hi, xtol=1e-6, variant="symmetrized", **quality_kwargs):
    """Same crossing for the self-consistent field-eliminated model."""

    def balance(g1d):
        res = iterate(replace(p, g1d=g1d), variant=variant, **quality_kwargs)
        basis = enumerate_like(p)
        return _mi_sf_balance(res.ground_state, basis)

    return _bisect(balance, g1d_lo, g1d_hi, xtol)


def enumerate_like(p):
    from .fockspace import enumerate_basis

    return enumerate_basis(p.num_atoms, p.num_sites)


def _bisect(fn, lo, hi, xtol):
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo * f_hi > 0:
        raise BracketError(
            f"no Mott/superfluid balance change in [{lo}, {hi}] (f={f_lo:.3g}, {f_hi:.3g})"
        )
    return float(brentq(fn, lo, hi, xtol=xtol))


def sweep_crossing(
    p,
    kappas,
    pump_depth,
    g1d_lo,
    g1d_hi,
    xtol=1e-6,
    variant="symmetrized",
    **quality_kwargs,
):
    """Crossing points along a cavity-linewidth schedule.

    Per kappa the pump is rescaled so u0 * eta^2 / kappa^2 stays at
    `pump_depth` (E_R); the shifted detuning in `p` is held fixed.  The
    classical reference is the plain model at depth `pump_depth`, recomputed
    per point (it is kappa-independent by construction).  Requires a filling
    commensurate with the lattice.
    """
    if p.num_atoms % p.num_sites:
        raise ValueError("crossing sweep needs N divisible by M (Mott state defined)")
    if pump_depth / p.u0 < 0:
        raise ValueError("pump_depth and u0 must have the same sign")
    rows = []
    for kappa in kappas:
        eta = kappa * np.sqrt(pump_depth / p.u0)
        pk = replace(p, kappa=float(kappa), eta=float(eta), v_cl=0.0)
        gq = quantum_crossing(pk, g1d_lo, g1d_hi, xtol=xtol, variant=variant, **quality_kwargs)
        gc = classical_crossing(pk, pump_depth, g1d_lo, g1d_hi, xtol=xtol, **quality_kwargs)
        rows.append(CrossingPoint(kappa=float(kappa), eta=float(eta), g1d_quantum=gq, g1d_classical=gc))
    return rows
