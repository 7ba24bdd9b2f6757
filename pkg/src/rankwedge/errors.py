"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``code`` so the CLI can emit a
structured record and pick an exit status without string matching.
"""


class RankWedgeError(Exception):
    code = "internal"
    exit_status = 2


class DomainError(RankWedgeError, ValueError):
    """Parameters outside the region where an operation is defined."""

    code = "domain"
    exit_status = 1


class UnsupportedSigma(DomainError):
    """No integer ``ell`` with ``sigma == cos(pi / (2 (ell + 2)))``."""

    code = "unsupported_sigma"


class ConfigError(DomainError):
    code = "config"


class NonConvergence(RankWedgeError):
    """Picard iteration hit ``max_iter`` before the sup-norm gap fell below ``tol``."""

    code = "non_convergence"

    def __init__(self, message, gaps=()):
        super().__init__(message)
        self.gaps = list(gaps)


class ConsistencyError(RankWedgeError):
    """A constructed path violates a sign constraint by more than round-off."""

    code = "consistency"
