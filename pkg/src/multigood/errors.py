"""Exception types shared across the package."""


class SolverError(RuntimeError):
    """A numerical solver failed to converge or hit an invalid region."""


class AllocationError(SolverError):
    """The budget allocation problem could not be solved to tolerance."""


class BracketError(SolverError):
    """A root-finding bracket was exhausted before a sign change was found."""


class RiccatiBlowUp(SolverError):
    """The Riccati system exploded before reaching the initial time."""


class ConfigError(ValueError):
    """An experiment configuration failed schema or invariant validation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = [f"{d['path']}: {d['message']}" for d in self.diagnostics]
        super().__init__("; ".join(lines) or "invalid config")
