"""Exception and warning types shared across the package.

The CLI maps these onto exit codes: config problems -> 2, physics-validity
problems -> 3, numerical failures -> 4.
"""


class PhysicsError(Exception):
    """A requested computation is outside the model's regime of validity."""


class UnsupportedGeometryError(PhysicsError):
    """Lattice depth is non-negative: no bound Wannier orbitals exist."""


class DegenerateBandError(PhysicsError):
    """Zero lattice depth: the lowest band is flat and Wannier functions
    are gauge-ambiguous."""


class GaugeError(PhysicsError):
    """Wannier construction produced a function that fails its
    localization check."""


class ModelValidityError(PhysicsError):
    """Model parameters violate a validity condition (e.g. a negative
    dissipation rate in a field-eliminated generator)."""


class CutoffError(PhysicsError):
    """Photon Fock cutoff too small for the estimated photon number
    (raised only in strict mode; otherwise a CutoffWarning is issued)."""


class NumericalError(Exception):
    """An integrator or linear solver failed to meet its error control."""


class TraceDriftError(NumericalError):
    """Master-equation propagation lost more trace than allowed before
    renormalization."""


class BracketError(NumericalError):
    """A root bracket did not contain a sign change."""


class ConfigError(Exception):
    """Invalid experiment configuration file."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)


class CutoffWarning(UserWarning):
    """Photon cutoff may be too small for the estimated photon number."""


class MultiplicityWarning(UserWarning):
    """The steady-state manifold appears degenerate; the returned state
    is one representative."""
