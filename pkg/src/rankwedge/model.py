"""Model parameters, wedge geometry and closed-form classifications.

Two particles move on ``[0, inf)``.  The leader gets drift ``-h`` and dispersion
``rho``; the laggard gets drift ``g`` and dispersion ``sigma``, with
``rho**2 + sigma**2 == 1``.  The laggard is reflected at the origin.

Angle conventions
-----------------
After the scaling ``(R1, R2) -> (R1 / rho, R2 / sigma)`` the ranked pair is a
reflected Brownian motion in a wedge of angle ``xi_angle`` with
``cos(xi_angle) == sigma``.  Reflection angles are measured from the inward
normal of each face and are positive when they point toward the corner
(Varadhan-Williams).  Some references add ``pi / 2`` to both angles; the scalar
``alpha = (theta1 + theta2) / xi_angle`` is the same under either convention.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConfigError, DomainError

NORM_TOL = 1e-9
GEOM_TOL = 1e-12

CONFIG_KEYS = ("g", "h", "rho", "sigma", "x1", "x2")


class Corner(enum.Enum):
    NEVER = "never"
    POSITIVE_PROBABILITY = "positive_probability"
    ALMOST_SURELY = "almost_surely"


class Recurrence(enum.Enum):
    TRANSIENT = "transient"
    NULL_RECURRENT_BOUNDARY = "null_recurrent_boundary"
    POSITIVE_RECURRENT = "positive_recurrent"


class EntryProbability(enum.Enum):
    SUB_PROBABILITY = "sub_probability"
    ALMOST_SURE = "almost_sure"


class ExpectedEntry(enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"


@dataclass(frozen=True)
class ModelParams:
    """Drift/dispersion pair per rank plus the initial positions.

    Either ``rho`` or ``sigma`` may be omitted and is completed from
    ``rho**2 + sigma**2 == 1``.  A pair whose Euclidean norm is within ``1e-9``
    of one is rescaled onto the unit circle; anything further off is rejected.
    """

    g: float
    h: float
    rho: float | None = None
    sigma: float | None = None
    x1: float = 1.0
    x2: float = 0.0

    lam: float = field(init=False)
    nu: float = field(init=False)
    xi_sum: float = field(init=False)
    y0: float = field(init=False)
    r1: float = field(init=False)
    r2: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        rho, sigma = _complete_dispersions(self.rho, self.sigma)
        g, h, x1, x2 = (float(v) for v in (self.g, self.h, self.x1, self.x2))
        for name, v in (("g", g), ("h", h), ("x1", x1), ("x2", x2)):
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"{name} must be finite and >= 0, got {v!r}")
        if x1 + x2 <= 0:
            raise DomainError("x1 + x2 must be > 0")
        values = dict(
            g=g, h=h, rho=rho, sigma=sigma, x1=x1, x2=x2,
            lam=g + h,
            nu=g - h,
            xi_sum=x1 + x2,
            y0=x1 - x2,
            r1=max(x1, x2),
            r2=min(x1, x2),
            mu=g * rho**2 - h * sigma**2,
        )
        for k, v in values.items():
            object.__setattr__(self, k, v)

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "ModelParams":
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
        missing = {"g", "h", "x1", "x2"} - set(data)
        if missing:
            raise ConfigError(f"missing parameter keys: {sorted(missing)}")
        if "rho" not in data and "sigma" not in data:
            raise ConfigError("one of rho, sigma is required")
        try:
            kw = {k: float(v) for k, v in data.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"non-numeric parameter value: {exc}") from None
        return cls(**kw)

    def to_mapping(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in CONFIG_KEYS}

    @property
    def sigma_sq(self) -> float:
        return self.sigma**2


def _complete_dispersions(rho, sigma):
    if rho is None and sigma is None:
        raise DomainError("one of rho, sigma must be given")
    if sigma is None:
        rho = float(rho)
        if not 0.0 <= rho <= 1.0 + NORM_TOL:
            raise DomainError(f"rho must lie in [0, 1], got {rho!r}")
        rho = min(rho, 1.0)
        return rho, math.sqrt(1.0 - rho * rho)
    if rho is None:
        sigma = float(sigma)
        if not 0.0 <= sigma <= 1.0 + NORM_TOL:
            raise DomainError(f"sigma must lie in [0, 1], got {sigma!r}")
        sigma = min(sigma, 1.0)
        return math.sqrt(1.0 - sigma * sigma), sigma
    rho, sigma = float(rho), float(sigma)
    if rho < 0 or sigma < 0 or not (math.isfinite(rho) and math.isfinite(sigma)):
        raise DomainError("rho and sigma must be finite and >= 0")
    norm = math.hypot(rho, sigma)
    # a few ulps of slack so that a pair scaled by exactly 1 +- 1e-9 is accepted
    if abs(norm - 1.0) > NORM_TOL + 8e-16:
        raise DomainError(f"rho**2 + sigma**2 must equal 1, got {norm * norm!r}")
    return rho / norm, sigma / norm


def _sigma_sq_vs_half(sigma: float) -> int:
    """-1, 0 or +1 as sigma**2 is below, at (within GEOM_TOL) or above 1/2."""
    d = sigma * sigma - 0.5
    if abs(d) <= GEOM_TOL:
        return 0
    return 1 if d > 0 else -1


@dataclass(frozen=True)
class WedgeGeometry:
    xi_angle: float
    theta1: float
    theta2: float
    alpha: float
    nu1: tuple[float, float]
    nu2: tuple[float, float]
    n1: tuple[float, float]
    n2: tuple[float, float]


@dataclass(frozen=True)
class Classification:
    corner: Corner
    recurrence: Recurrence | None


@dataclass(frozen=True)
class HobsonRogers:
    entry_as: EntryProbability
    expected_entry: ExpectedEntry
    effective_rates: tuple[float, float]


def wedge_geometry(p: ModelParams) -> WedgeGeometry:
    """Geometry of the scaled wedge for ``0 < sigma < 1``.

    Face 1 is the horizontal axis with normal reflection ``(0, 1)``; face 2 runs
    along ``(1/rho, 1/sigma)`` with reflection vector ``(1/rho, -1/sigma)``.
    """
    if not 0.0 < p.sigma < 1.0:
        raise DomainError(
            f"wedge geometry needs 0 < sigma < 1, got sigma={p.sigma!r}; "
            "sigma = 0 belongs to the degenerate construction"
        )
    xi = math.acos(p.sigma)
    if _sigma_sq_vs_half(p.sigma) == 0:
        xi, theta2, alpha = math.pi / 4, 0.0, 0.0
    else:
        theta2 = 2.0 * xi - math.pi / 2
        alpha = 2.0 - math.pi / (2.0 * xi)
    return WedgeGeometry(
        xi_angle=xi,
        theta1=0.0,
        theta2=theta2,
        alpha=alpha,
        nu1=(0.0, 1.0),
        nu2=(1.0 / p.rho, -1.0 / p.sigma),
        n1=(0.0, 1.0),
        n2=(p.rho, -p.sigma),
    )


def classify_corner(p: ModelParams) -> Corner:
    if p.sigma <= 0.0:
        raise DomainError(
            "sigma = 0: use rankwedge.degenerate.classify_corner_degenerate"
        )
    if _sigma_sq_vs_half(p.sigma) >= 0:
        return Corner.NEVER
    if p.lam == 0.0:
        return Corner.ALMOST_SURELY
    # measure change only yields positivity; a.s. hitting with drift is not claimed
    return Corner.POSITIVE_PROBABILITY


def classify_recurrence(p: ModelParams) -> Recurrence:
    if not 0.0 < p.sigma < 1.0:
        raise DomainError(f"recurrence classification needs 0 < sigma < 1, got {p.sigma!r}")
    if p.lam <= 0.0:
        raise DomainError("recurrence classification needs g + h > 0")
    if p.g > p.h:
        return Recurrence.TRANSIENT
    if p.g == p.h:
        return Recurrence.NULL_RECURRENT_BOUNDARY
    return Recurrence.POSITIVE_RECURRENT


def classify(p: ModelParams) -> Classification:
    """Corner class plus recurrence class where the latter is defined."""
    try:
        rec = classify_recurrence(p)
    except DomainError:
        rec = None
    return Classification(corner=classify_corner(p), recurrence=rec)


def classify_hobson_rogers(mu: float, nu: float, alpha_r: float, beta_r: float) -> HobsonRogers:
    """Recurrence of a quadrant RBM from its effective drift rates.

    The coordinates have drifts ``mu``, ``nu`` and are pushed by each other's
    boundary local time with weights ``alpha_r``, ``beta_r``.
    """
    if mu == 0.0 and nu == 0.0:
        raise DomainError("(mu, nu) must not both vanish")
    eff1 = mu + alpha_r * max(-nu, 0.0)
    eff2 = nu + beta_r * max(-mu, 0.0)
    entry = (
        EntryProbability.ALMOST_SURE if eff1 <= 0 and eff2 <= 0 else EntryProbability.SUB_PROBABILITY
    )
    expected = ExpectedEntry.FINITE if eff1 < 0 and eff2 < 0 else ExpectedEntry.INFINITE
    return HobsonRogers(entry, expected, (eff1, eff2))


def rank_hobson_rogers_inputs(p: ModelParams) -> tuple[float, float, float, float]:
    """(mu, nu, alpha, beta) for the (gap, laggard) pair of the ranked system."""
    return (-p.lam, p.g, -1.0, -0.5)
