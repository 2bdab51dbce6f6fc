"""Error taxonomy shared across the library.

Invalid arguments raise the builtin ``ValueError``; the classes below mark
failure modes that callers may want to catch separately (the CLI maps them
to distinct exit codes).
"""

__all__ = [
    "CoercivityError",
    "ConfigError",
    "MatFuncConvergenceError",
    "NumericalError",
]


class CoercivityError(ValueError):
    """Diffusion tensor failed the positive-definiteness check at assembly."""


class ConfigError(ValueError):
    """Malformed experiment configuration (unknown key, bad value, ...)."""


class NumericalError(RuntimeError):
    """A numerical stage failed irrecoverably (factorization, trajectory)."""


class MatFuncConvergenceError(NumericalError):
    """Krylov matrix-function action did not meet its tolerance.

    Carries the state of the adaptive substepping loop for diagnosis.
    """

    def __init__(self, message, *, t_remaining=None, substep=None,
                 krylov_dim=None, est_error=None, halvings=None):
        super().__init__(message)
        self.t_remaining = t_remaining
        self.substep = substep
        self.krylov_dim = krylov_dim
        self.est_error = est_error
        self.halvings = halvings

    def __str__(self):
        base = super().__str__()
        detail = (f" [t_remaining={self.t_remaining!r}, substep={self.substep!r}, "
                  f"krylov_dim={self.krylov_dim!r}, est_error={self.est_error!r}, "
                  f"halvings={self.halvings!r}]")
        return base + detail
