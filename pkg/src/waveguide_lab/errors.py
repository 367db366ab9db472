"""Exception hierarchy for the waveguide lab."""


class WaveguideLabError(Exception):
    """Base class for all package errors."""


class EmptyDomain(WaveguideLabError):
    """Discretization produced no active cells."""


class InvalidDomain(WaveguideLabError):
    """Active set violates a structural invariant (e.g. disconnected)."""


class ProfileOutOfBounds(WaveguideLabError):
    """Profile perturbation does not fit inside the grid extents."""


class NoFlatTail(WaveguideLabError):
    """Profile never stabilizes to a product shape within the grid."""


class NegativePotential(WaveguideLabError):
    """Potential violates the V >= 0 hypothesis."""


class NotRadial(WaveguideLabError):
    """Sector reduction requested on a non-radial grid or profile."""


class ArityMismatch(WaveguideLabError):
    """Inequality check called with the wrong number of fields/parameters."""


class PowerIterationStall(WaveguideLabError):
    """Operator-norm power iteration failed to converge."""


class SolverBreakdown(WaveguideLabError):
    """Linear solve stagnated or exceeded the residual tolerance."""


class SpectrumHit(WaveguideLabError):
    """Resolvent requested at a real point of the discrete spectrum."""


class ZeroSource(WaveguideLabError):
    """Resolvent-ratio requested for a source with vanishing X* norm."""


class BranchPoint(WaveguideLabError):
    """Weight evaluation exactly at a branch point that has no convention."""


class UnderResolved(WaveguideLabError):
    """Requested mode count exceeds what the grid can resolve."""


class EigenIterationStall(WaveguideLabError):
    """Shift-invert eigeniteration failed to converge at some shift."""


class EigenbasisIncomplete(WaveguideLabError):
    """Spectral propagator basis misses a non-negligible part of the data."""


class BoxTooSmall(WaveguideLabError):
    """Periodic box wrap-around detected in a Fourier propagator."""


class UnstableTimestep(WaveguideLabError):
    """Explicit time step violates the stability bound."""


class MissingArtifact(WaveguideLabError):
    """Report rendering requested from an empty or incomplete bundle set."""


class ConfigInvalid(WaveguideLabError):
    """Experiment configuration failed validation."""

    def __init__(self, issues):
        if isinstance(issues, str):
            issues = [("", issues)]
        self.issues = list(issues)
        super().__init__("; ".join(f"{p}: {m}" if p else m for p, m in self.issues))
