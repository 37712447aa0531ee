"""Band structure, Wannier functions and tight-binding matrix elements
for the 1D cos^2 lattice.

Units: lengths in 1/k (so the lattice period is pi), energies in the recoil
energy E_R = hbar^2 k^2 / 2m, i.e. the single-particle Hamiltonian is
H = -d^2/dx^2 + depth * cos^2(x) with a signed depth.  Negative depth puts
the wells at the antinodes x = 0, pi, 2pi, ..., which is the red-detuned
case this package targets; site s is centered at x = s*pi.

The Bloch problem is solved in a plane-wave basis, the gauge is fixed to the
real-symmetric one (periodic part real and positive at the well center), and
Wannier functions follow by summing the gauge-fixed Bloch states over a
uniform quasimomentum grid.  Kinetic matrix elements use the exact second
derivative of the plane-wave representation; all integrals are composite
Simpson on a uniform grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import eigh_tridiagonal

from .errors import DegenerateBandError, GaugeError, UnsupportedGeometryError

LATTICE_PERIOD = np.pi

# Lowered defaults are fine for sweeps; these keep every stated tolerance
# with an order of magnitude to spare.
DEFAULT_N_Q = 64
DEFAULT_N_PW = 16
DEFAULT_PERIODS = 10
DEFAULT_POINTS_PER_PERIOD = 512


@dataclass(frozen=True, eq=False)
class BandSolution:
    """Lowest band of the cos^2 lattice on a symmetric quasimomentum grid.

    `coeffs[i, j]` is the (real, gauge-fixed) amplitude of the plane wave
    exp(i*(q_i + 2*j_off)*x) with j_off = j - n_pw; `dispersion` holds the
    band energies and `kinetic_dispersion` the kinetic part <psi_q|p^2|psi_q>.
    """

    depth: float
    quasimomenta: np.ndarray
    coeffs: np.ndarray
    dispersion: np.ndarray
    kinetic_dispersion: np.ndarray
    n_pw: int

    @property
    def n_q(self):
        return len(self.quasimomenta)

    @property
    def bandwidth(self):
        return float(self.dispersion.max() - self.dispersion.min())

    @property
    def reciprocal_offsets(self):
        return 2.0 * np.arange(-self.n_pw, self.n_pw + 1)


@dataclass(frozen=True, eq=False)
class WannierFunction:
    """Lowest-band Wannier orbital, real samples on a uniform grid.

    The grid always spans an integer number of periods centered on the site,
    with spacing an exact divisor of the period so translation by one site is
    an integer grid shift.  The generating `band` is kept so the exact
    plane-wave representation (and hence an exact Laplacian) stays available.
    """

    x: np.ndarray
    values: np.ndarray
    center: float
    depth: float
    band: BandSolution
    site_index: int
    norm_defect: float

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    def evaluate(self, x, derivative=0):
        """Evaluate the orbital (or -w'' for derivative=2) at arbitrary points
        from the plane-wave representation."""
        vals = _bloch_sum(self.band, np.asarray(x, dtype=float) - self.center, derivative)
        return vals / (1.0 + self.norm_defect)


@dataclass(frozen=True)
class MatrixElements:
    """Tight-binding parameters of the generalized lattice model at one depth.

    onsite_kinetic / hop_kinetic: matrix elements of -d^2/dx^2 (E_R)
    onsite_lattice / hop_lattice: overlaps against cos^2(x) (dimensionless)
    onsite_pump: magnitude of the overlap against cos(x); the odd/even sign
        alternation is applied by the model builders, not here
    interaction: on-site two-body energy U (E_R), equal to
        g1d * interaction_per_g1d with g1d in units of E_R * d
    """

    onsite_kinetic: float
    hop_kinetic: float
    onsite_lattice: float
    hop_lattice: float
    onsite_pump: float
    interaction: float
    depth: float
    interaction_per_g1d: float


def solve_bloch(depth, n_q=DEFAULT_N_Q, n_pw=DEFAULT_N_PW):
    """Solve the lowest band at signed `depth` (E_R) on an `n_q`-point
    symmetric quasimomentum grid with plane-wave cutoff `n_pw`."""
    if depth > 0:
        raise UnsupportedGeometryError(
            f"depth must be <= 0 (wells at antinodes); got {depth}"
        )
    if depth == 0:
        raise DegenerateBandError("flat band at zero depth: Wannier functions undefined")
    if n_q < 16:
        raise ValueError(f"n_q must be >= 16, got {n_q}")
    if n_pw < 7:
        raise ValueError(f"n_pw must be >= 7, got {n_pw}")

    offs = 2.0 * np.arange(-n_pw, n_pw + 1)
    qs = (2.0 * np.arange(n_q) + 1.0) / n_q - 1.0  # midpoint grid, symmetric in q
    coeffs = np.empty((n_q, offs.size))
    disp = np.empty(n_q)
    kin = np.empty(n_q)
    off_diag = np.full(offs.size - 1, depth / 4.0)
    for i, q in enumerate(qs):
        diag = (q + offs) ** 2 + depth / 2.0
        w, v = eigh_tridiagonal(diag, off_diag, select="i", select_range=(0, 0))
        c = v[:, 0]
        if c.sum() < 0.0:  # periodic part positive at the well center
            c = -c
        coeffs[i] = c
        disp[i] = w[0]
        kin[i] = np.sum((q + offs) ** 2 * c**2)
    return BandSolution(
        depth=float(depth),
        quasimomenta=qs,
        coeffs=coeffs,
        dispersion=disp,
        kinetic_dispersion=kin,
        n_pw=n_pw,
    )


def _bloch_sum(band, x_rel, derivative=0):
    """Sum the gauge-fixed Bloch states over the q grid at points `x_rel`
    relative to the site center.  derivative=2 returns -w''."""
    offs = band.reciprocal_offsets
    qs = band.quasimomenta
    if derivative == 0:
        weights = band.coeffs
    elif derivative == 2:
        weights = band.coeffs * (qs[:, None] + offs[None, :]) ** 2
    else:
        raise ValueError("only derivative orders 0 and 2 are supported")
    u = weights @ np.exp(1.0j * np.outer(offs, x_rel))
    vals = np.einsum("qx,qx->x", np.exp(1.0j * np.outer(qs, x_rel)), u)
    return vals.real / (band.n_q * np.sqrt(np.pi))


def build_wannier(
    band,
    site_index=0,
    periods=DEFAULT_PERIODS,
    points_per_period=DEFAULT_POINTS_PER_PERIOD,
):
    """Construct the Wannier orbital centered at site `site_index`.

    Raises GaugeError if the result is not localized (tail above 1e-2 of the
    peak two periods out, checked for depths <= -5 E_R where the bound is
    meaningful).
    """
    if periods < 5:
        raise ValueError(f"grid must span >= 5 periods, got {periods}")
    if periods % 2:
        periods += 1  # keep the window symmetric about the site
    dx = LATTICE_PERIOD / points_per_period
    half = periods // 2 * points_per_period
    center = site_index * LATTICE_PERIOD
    x = center + dx * np.arange(-half, half + 1)

    vals = _bloch_sum(band, x - center)
    norm = np.sqrt(simpson(vals**2, dx=dx))
    defect = abs(norm - 1.0)
    vals = vals / norm

    peak = np.abs(vals).max()
    tail = np.abs(vals[np.abs(x - center) >= 2.0 * LATTICE_PERIOD]).max()
    if band.depth <= -5.0 and tail > 1e-2 * peak:
        raise GaugeError(
            f"Wannier tail {tail / peak:.2e} of peak at 2 periods (depth {band.depth})"
        )
    return WannierFunction(
        x=x,
        values=vals,
        center=center,
        depth=band.depth,
        band=band,
        site_index=site_index,
        norm_defect=defect,
    )


def compute_matrix_elements(w, g1d=0.0):
    """All tight-binding elements of one Wannier orbital by Simpson quadrature.

    `g1d` is the 1D interaction strength in units of E_R * d (d = lattice
    constant); it only scales the interaction element.
    """
    if w.dx > LATTICE_PERIOD / 64 + 1e-15:
        raise ValueError(
            f"grid too coarse: {LATTICE_PERIOD / w.dx:.1f} points per period, need >= 64"
        )
    x = w.x
    dx = w.dx
    v = w.values
    lap = w.evaluate(x, derivative=2)          # -w''(x), exact
    v_nn = w.evaluate(x - LATTICE_PERIOD)      # neighbour orbital on this grid
    lap_nn = w.evaluate(x - LATTICE_PERIOD, derivative=2)

    cos2 = np.cos(x) ** 2
    onsite_kinetic = simpson(v * lap, dx=dx)
    hop_kinetic = simpson(v * lap_nn, dx=dx)
    onsite_lattice = simpson(v**2 * cos2, dx=dx)
    hop_lattice = simpson(v * cos2 * v_nn, dx=dx)
    onsite_pump = abs(simpson(v**2 * np.cos(x), dx=dx))
    quartic = simpson(v**4, dx=dx)
    per_g1d = LATTICE_PERIOD * quartic
    return MatrixElements(
        onsite_kinetic=float(onsite_kinetic),
        hop_kinetic=float(hop_kinetic),
        onsite_lattice=float(onsite_lattice),
        hop_lattice=float(hop_lattice),
        onsite_pump=float(onsite_pump),
        interaction=float(g1d * per_g1d),
        depth=w.depth,
        interaction_per_g1d=float(per_g1d),
    )


def nn_pump_overlap(w):
    """Nearest-neighbour overlap against cos(x); vanishes by symmetry and is
    computed only for verification."""
    v = w.values
    v_nn = w.evaluate(w.x - LATTICE_PERIOD)
    return float(simpson(v * np.cos(w.x) * v_nn, dx=w.dx))


def matrix_elements_at(
    depth,
    g1d=0.0,
    n_q=DEFAULT_N_Q,
    n_pw=DEFAULT_N_PW,
    periods=DEFAULT_PERIODS,
    points_per_period=DEFAULT_POINTS_PER_PERIOD,
):
    """Convenience chain: band solve -> Wannier -> matrix elements."""
    band = solve_bloch(depth, n_q=n_q, n_pw=n_pw)
    w = build_wannier(band, periods=periods, points_per_period=points_per_period)
    return compute_matrix_elements(w, g1d=g1d)


def write_elements_csv(path, depths, g1d=0.0, **quality):
    """Tabulate matrix elements over a list of depths (documentation plots)."""
    fields = [
        "depth",
        "onsite_kinetic",
        "hop_kinetic",
        "onsite_lattice",
        "hop_lattice",
        "onsite_pump",
        "interaction",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for depth in depths:
            m = matrix_elements_at(depth, g1d=g1d, **quality)
            writer.writerow([f"{getattr(m, f):.17g}" for f in fields])
