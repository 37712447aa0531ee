"""Ground states, Lindblad propagation, quantum-jump trajectories and
steady states.

All propagators share adaptive Dormand-Prince 5(4) stepping via scipy's
`solve_ivp`.  Randomness comes exclusively from the counter-based Philox
generator seeded per trajectory through `SeedSequence.spawn`, so ensembles
are bitwise reproducible and independent of execution order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from joblib import Parallel, delayed
from numpy.random import Generator, Philox, SeedSequence
from scipy.integrate import solve_ivp
from scipy.linalg import eig, eigh, svd

from .errors import MultiplicityWarning, NumericalError, TraceDriftError
from .fockspace import JointBasis, SparseOperator

DEGENERACY_GAP = 1e-10
RNG_NAME = "philox"


# ---------------------------------------------------------------------------
# exact diagonalization


@dataclass
class GroundStateResult:
    energy: float
    state: np.ndarray
    degenerate: bool
    gap: float


def _as_matrix(hamiltonian):
    if isinstance(hamiltonian, SparseOperator):
        if not hamiltonian.hermitian:
            raise ValueError("ground_state requires a hermitian Hamiltonian")
        return hamiltonian.matrix
    m = sp.csr_matrix(hamiltonian, dtype=complex)
    dev = abs(m - m.conj().T)
    if dev.nnz and dev.max() > 1e-12 * max(1.0, abs(m).max()):
        raise ValueError("ground_state requires a hermitian Hamiltonian")
    return m


def _fix_phase(vec):
    idx = int(np.argmax(np.abs(vec)))
    phase = vec[idx] / abs(vec[idx])
    return vec / phase


def ground_state(hamiltonian, reference=None, dense_cutoff=4096):
    """Lowest eigenpair; dense below `dense_cutoff`, Lanczos above.

    A gap below 1e-10 flags a degenerate ground manifold; `reference` then
    selects the manifold state with maximal overlap against it (deterministic
    reporting for symmetric double wells), otherwise the solver's first
    vector is returned with a fixed phase convention.
    """
    m = _as_matrix(hamiltonian)
    dim = m.shape[0]
    if dim == 1:
        return GroundStateResult(float(m[0, 0].real), np.ones(1, dtype=complex), False, np.inf)
    if dim <= dense_cutoff:
        vals, vecs = eigh(m.toarray())
    else:
        k = min(6, dim - 1)
        vals, vecs = spla.eigsh(m, k=k, which="SA")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    gap = float(vals[1] - vals[0])
    degenerate = gap < DEGENERACY_GAP
    manifold = np.nonzero(vals - vals[0] < DEGENERACY_GAP)[0]
    state = vecs[:, 0].astype(complex)
    if degenerate and reference is not None:
        basis = vecs[:, manifold]
        coeffs = basis.conj().T @ np.asarray(reference, dtype=complex)
        if np.linalg.norm(coeffs) > 1e-12:
            state = basis @ coeffs
            state = state / np.linalg.norm(state)
    return GroundStateResult(float(vals[0]), _fix_phase(state), degenerate, gap)


# ---------------------------------------------------------------------------
# Lindblad master equation


def check_density_operator(rho, herm_tol=1e-10, trace_tol=1e-8, pos_tol=1e-8):
    rho = np.asarray(rho)
    if np.abs(rho - rho.conj().T).max() > herm_tol:
        raise ValueError("density operator not hermitian")
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise ValueError(f"density operator trace {np.trace(rho).real} != 1")
    if rho.shape[0] <= 512 and np.linalg.eigvalsh(rho).min() < -pos_tol:
        raise ValueError("density operator not positive semidefinite")


def _channels(model):
    out = []
    for c, rate in model.collapse_ops:
        cm = c.matrix
        cd = cm.conj().T.tocsr()
        out.append((cm, cd, (cd @ cm).tocsr(), float(rate)))
    return out


SUPEROP_DIM_LIMIT = 128


def _lindblad_rhs(h, channels):
    """Right-hand side of the master equation.

    Small systems use one precomputed sparse superoperator matvec per call
    (much cheaper than a chain of matrix products); large ones fall back to
    operator products to avoid the d^2 x d^2 matrix.
    """
    d = h.shape[0]
    if d <= SUPEROP_DIM_LIMIT:
        lv = _superoperator(h, channels)

        def rhs(_, y):
            return lv @ y

        return rhs

    def rhs(_, y):
        rho = y.reshape(d, d)
        out = -1.0j * (h @ rho - rho @ h)
        for c, cd, cdc, rate in channels:
            if rate == 0.0:
                continue
            out += rate * (2.0 * (c @ rho) @ cd - cdc @ rho - rho @ cdc)
        return out.ravel()

    return rhs


def _superoperator(h, channels):
    d = h.shape[0]
    ident = sp.identity(d, format="csr", dtype=complex)
    lv = -1.0j * (sp.kron(h, ident) - sp.kron(ident, h.T))
    for c, cd, cdc, rate in channels:
        if rate == 0.0:
            continue
        lv = lv + rate * (
            2.0 * sp.kron(c, c.conj()) - sp.kron(cdc, ident) - sp.kron(ident, cdc.T)
        )
    return lv.tocsr()


@dataclass
class MasterResult:
    times: np.ndarray
    expectations: dict
    trace_drift: np.ndarray
    states: np.ndarray | None
    model: object


def evolve_master(
    model,
    rho0,
    t_grid,
    rtol=1e-8,
    atol=1e-9,
    max_trace_drift=1e-6,
    observables=None,
    store_states=None,
    validate_initial=True,
):
    """Propagate d(rho)/dt = -i[H, rho] + sum rate (2 c rho c+ - c+c rho - rho c+c).

    The trace of every sample is renormalized and its pre-renormalization
    drift logged; drift beyond `max_trace_drift` raises TraceDriftError.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing with >= 2 points")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    if validate_initial:
        check_density_operator(rho0)
    if store_states is None:
        store_states = observables is None

    h = model.hamiltonian.matrix
    rhs = _lindblad_rhs(h, _channels(model))
    sol = solve_ivp(
        rhs,
        (t_grid[0], t_grid[-1]),
        rho0.ravel(),
        method="RK45",
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise NumericalError(f"master-equation integration failed: {sol.message}")

    d = h.shape[0]
    n_t = len(t_grid)
    drift = np.empty(n_t)
    states = np.empty((n_t, d, d), dtype=complex) if store_states else None
    exps = {name: np.empty(n_t) for name in (observables or {})}
    for i in range(n_t):
        rho = sol.y[:, i].reshape(d, d)
        tr = float(np.trace(rho).real)
        drift[i] = abs(tr - 1.0)
        if drift[i] > max_trace_drift:
            raise TraceDriftError(
                f"trace drift {drift[i]:.3e} at t={t_grid[i]:.6g} exceeds {max_trace_drift:.1e}"
            )
        rho = rho / tr
        if store_states:
            states[i] = rho
        for name, op in (observables or {}).items():
            mat = op.matrix if isinstance(op, SparseOperator) else op
            exps[name][i] = float(np.real((mat @ rho).trace()))
    return MasterResult(
        times=t_grid, expectations=exps, trace_drift=drift, states=states, model=model
    )


# ---------------------------------------------------------------------------
# Monte-Carlo wavefunction (quantum jumps)


@dataclass
class TrajectoryEnsemble:
    """Per-trajectory observable samples plus jump records.

    expectations[name] has shape (n_traj, n_times); jump_records[i] is the
    list of (time, channel) collapses of trajectory i.
    """

    times: np.ndarray
    n_traj: int
    seed: int
    rng_name: str
    expectations: dict
    jump_records: list
    states: np.ndarray | None
    model: object

    def mean(self, name):
        return self.expectations[name].mean(axis=0)

    def stderr(self, name):
        if self.n_traj < 2:
            return np.zeros(self.expectations[name].shape[1])
        return self.expectations[name].std(axis=0, ddof=1) / np.sqrt(self.n_traj)


def _run_trajectory(drift_op, jumps, psi0, t_grid, child_seed, rtol, atol, observables, store):
    rng = Generator(Philox(child_seed))
    n_t = len(t_grid)
    dim = psi0.shape[0]
    samples = np.empty((n_t, dim), dtype=complex) if store else None
    exps = {name: np.empty(n_t) for name in observables}
    record = []

    def rhs(_, y):
        return drift_op @ y

    def take(i, psi):
        norm = np.linalg.norm(psi)
        phi = psi / norm
        if store:
            samples[i] = phi
        for name, mat in observables.items():
            exps[name][i] = float(np.real(np.vdot(phi, mat @ phi)))

    psi = psi0.astype(complex)
    threshold = rng.random()
    t_cur = float(t_grid[0])
    idx = 0
    while idx < n_t:
        def crossing(t, y, r=threshold):
            return float(np.real(np.vdot(y, y)) - r)

        crossing.terminal = True
        crossing.direction = -1
        t_eval = t_grid[idx:]
        sol = solve_ivp(
            rhs,
            (t_cur, t_grid[-1]),
            psi,
            method="RK45",
            t_eval=t_eval,
            events=crossing,
            rtol=rtol,
            atol=atol,
        )
        if sol.status < 0:
            raise NumericalError(f"trajectory integration failed: {sol.message}")
        n_new = len(sol.t)
        for k in range(n_new):
            take(idx + k, np.asarray(sol.y)[:, k])
        idx += n_new
        if sol.status != 1:
            break
        # a jump: the root finder refines the crossing time internally
        t_cur = float(sol.t_events[0][0])
        psi_e = sol.y_events[0][0]
        weights = np.array([rate * np.linalg.norm(c @ psi_e) ** 2 for c, rate in jumps])
        total = weights.sum()
        if total <= 0.0:
            raise NumericalError("norm crossed the jump threshold without open decay channel")
        channel = int(np.searchsorted(np.cumsum(weights) / total, rng.random()))
        channel = min(channel, len(jumps) - 1)
        psi = jumps[channel][0] @ psi_e
        psi = psi / np.linalg.norm(psi)
        record.append((t_cur, channel))
        threshold = rng.random()
    return exps, record, samples


def evolve_mcwf(
    model,
    psi0,
    t_grid,
    n_traj,
    seed,
    observables=None,
    n_jobs=1,
    rtol=1e-10,
    atol=1e-12,
    store_states=False,
):
    """First-order quantum-jump unravelling of the master equation.

    Between jumps the state follows the non-hermitian drift
    H - i sum rate c^dag c; a uniform threshold on the squared norm decides
    jump times (refined to root-finder precision), the collapse channel is
    drawn proportionally to rate * |c psi|^2, and the state is renormalized.
    Deterministic for a given `seed`; trajectories use independent spawned
    Philox streams, so the result does not depend on scheduling.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing with >= 2 points")

    h_nh = model.hamiltonian.matrix.astype(complex)
    jumps = []
    for c, cd, cdc, rate in _channels(model):
        if rate == 0.0:
            continue
        h_nh = h_nh - 1.0j * rate * cdc
        jumps.append((c, rate))
    drift_op = (-1.0j) * h_nh.tocsr()

    obs_mats = {
        name: (op.matrix if isinstance(op, SparseOperator) else op)
        for name, op in (observables or {}).items()
    }
    children = SeedSequence(seed).spawn(n_traj)
    runner = delayed(_run_trajectory)
    tasks = (
        runner(drift_op, jumps, psi0, t_grid, cs, rtol, atol, obs_mats, store_states)
        for cs in children
    )
    if n_jobs == 1:
        results = [
            _run_trajectory(drift_op, jumps, psi0, t_grid, cs, rtol, atol, obs_mats, store_states)
            for cs in children
        ]
    else:
        results = Parallel(n_jobs=n_jobs)(tasks)

    expectations = {
        name: np.stack([res[0][name] for res in results]) for name in obs_mats
    }
    jump_records = [res[1] for res in results]
    states = np.stack([res[2] for res in results]) if store_states else None
    return TrajectoryEnsemble(
        times=t_grid,
        n_traj=n_traj,
        seed=seed,
        rng_name=RNG_NAME,
        expectations=expectations,
        jump_records=jump_records,
        states=states,
        model=model,
    )


# ---------------------------------------------------------------------------
# steady states


def liouvillian_matrix(model):
    """Sparse superoperator of the model in row-major vectorization."""
    return _superoperator(model.hamiltonian.matrix, _channels(model))


def _steady_from_projector(lv, rho0, d, kernel_tol):
    dense = lv.toarray()
    vals, vl, vr = eig(dense, left=True, right=True)
    scale = max(1.0, np.abs(vals).max())
    kernel = np.nonzero(np.abs(vals) < kernel_tol * scale)[0]
    if len(kernel) == 0:
        raise NumericalError("no Liouvillian kernel found")
    vec0 = rho0.ravel()
    out = np.zeros(d * d, dtype=complex)
    for k in kernel:
        wk = vl[:, k]
        out += vr[:, k] * (wk.conj() @ vec0) / (wk.conj() @ vr[:, k])
    return out.reshape(d, d)


def steady_state(
    model,
    rho0=None,
    dense_cutoff=256,
    check_uniqueness=None,
    degeneracy_tol=1e-12,
    kernel_tol=1e-10,
):
    """Stationary density operator of the model.

    For dimensions up to `dense_cutoff` the vectorized Liouvillian is solved
    directly (trace-constrained linear system).  A degenerate steady manifold
    triggers MultiplicityWarning; if `rho0` is given, the returned state is
    then the t -> infinity limit of that initial state (spectral projection
    onto the Liouvillian kernel), which resolves conserved-quantity sectors.
    Above `dense_cutoff`, long-time propagation from `rho0` (or the maximally
    mixed state) is used until |d rho/dt|_1 < 1e-10.
    """
    if not model.collapse_ops:
        raise ValueError("steady_state requires at least one collapse operator")
    d = model.dim
    if d > dense_cutoff:
        return _steady_by_propagation(model, rho0)
    lv = liouvillian_matrix(model)

    if check_uniqueness is None:
        check_uniqueness = d <= 40
    degenerate = False
    if check_uniqueness:
        svals = svd(lv.toarray(), compute_uv=False)
        degenerate = svals[-2] < degeneracy_tol * max(1.0, svals[0])

    if degenerate:
        warnings.warn(
            "steady-state manifold is degenerate; result depends on the initial state",
            MultiplicityWarning,
            stacklevel=2,
        )
        if rho0 is not None:
            rho0 = np.asarray(rho0, dtype=complex)
            if rho0.ndim == 1:
                rho0 = np.outer(rho0, rho0.conj())
            rho = _steady_from_projector(lv, rho0, d, kernel_tol)
            return _cleanup_density(rho)

    lv_mod = lv.tolil()
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[:: d + 1] = 1.0
    lv_mod[0] = trace_row
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    x = spla.spsolve(lv_mod.tocsc(), rhs)
    residual = np.abs(lv @ x).max()
    scale = max(1.0, np.abs(lv.data).max() if lv.nnz else 1.0)
    if not np.all(np.isfinite(x)) or residual > 1e-8 * scale:
        if rho0 is not None and d <= 64:
            rho0m = np.asarray(rho0, dtype=complex)
            if rho0m.ndim == 1:
                rho0m = np.outer(rho0m, rho0m.conj())
            warnings.warn(
                "trace-constrained solve ill-conditioned; falling back to spectral projection",
                MultiplicityWarning,
                stacklevel=2,
            )
            return _cleanup_density(_steady_from_projector(lv, rho0m, d, kernel_tol))
        raise NumericalError(f"steady-state solve residual {residual:.3e}")
    return _cleanup_density(x.reshape(d, d))


def _cleanup_density(rho):
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def _steady_by_propagation(model, rho0, tol=1e-10, max_rounds=60):
    d = model.dim
    if rho0 is None:
        rho = np.eye(d, dtype=complex) / d
    else:
        rho = np.asarray(rho0, dtype=complex)
        if rho.ndim == 1:
            rho = np.outer(rho, rho.conj())
    rhs = _lindblad_rhs(model.hamiltonian.matrix, _channels(model))
    window = 1.0
    for _ in range(max_rounds):
        res = evolve_master(
            model, rho, np.array([0.0, window]), store_states=True, validate_initial=False
        )
        rho = res.states[-1]
        if np.abs(rhs(0.0, rho.ravel())).sum() < tol:
            return _cleanup_density(rho)
        window *= 2.0
    raise NumericalError("steady-state propagation did not converge")


# ---------------------------------------------------------------------------
# checkpoint / restore


def _basis_descriptor(basis):
    if isinstance(basis, JointBasis):
        at = basis.atomic
        return (
            f"basis=joint atoms={at.num_atoms} sites={at.num_sites} "
            f"photon_cutoff={basis.photon_cutoff} ordering=lexicographic-descending"
        )
    return (
        f"basis=atomic atoms={basis.num_atoms} sites={basis.num_sites} "
        "ordering=lexicographic-descending"
    )


def save_state(path, state, basis):
    """Checkpoint a ket or density operator as (index, re, im) records with a
    basis descriptor header."""
    state = np.asarray(state, dtype=complex)
    kind = "ket" if state.ndim == 1 else "rho"
    flat = state.ravel()
    with open(path, "w") as fh:
        fh.write(f"# cavitybh-state kind={kind} dim={state.shape[0]} {_basis_descriptor(basis)}\n")
        fh.write("index,re,im\n")
        for i, z in enumerate(flat):
            fh.write(f"{i},{z.real:.17g},{z.imag:.17g}\n")


def load_state(path):
    """Restore a checkpointed state; returns (array, metadata dict)."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# cavitybh-state"):
            raise ValueError(f"{path} is not a cavitybh state file")
        meta = dict(tok.split("=", 1) for tok in header[2:].split()[1:])
        fh.readline()  # column names
        rows = [line.split(",") for line in fh if line.strip()]
    flat = np.array([complex(float(r[1]), float(r[2])) for r in rows])
    dim = int(meta["dim"])
    if meta["kind"] == "rho":
        return flat.reshape(dim, dim), meta
    return flat, meta
