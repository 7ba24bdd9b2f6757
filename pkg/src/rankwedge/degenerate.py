"""The sigma = 0 system: a ballistic laggard and a Brownian leader.

With ``rho = 1`` only one Brownian motion ``V`` drives the pair.  Both
regulators are explicit running maxima:

    Lambda(t)            = max_{s<=t} (-xi_sum - nu s - V(s))^+
    Lambda(t) + 2 LY(t)  = max_{s<=t} (-|y0| + lam s - V(s))^+

and the ranks follow as ``R1 = r1 - h t + V + Lambda + LY`` and
``R2 = r2 + g t - LY``.  Excursions of the gap ``R1 - R2`` that leave the
corner are always given the mark -1, so the name that left the corner is the
laggard; all other excursions get fair marks as in the main pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError
from .model import Corner, ModelParams
from .pathgen import (
    DEFAULT_ZERO_TOL,
    ExcursionSet,
    assemble_names,
    draw_marks,
    enumerate_excursions,
    gen_brownian_pair,
    grid_size,
    initial_forcing,
    unfold_gap,
    write_columns,
)
from .rng import PathSeed, as_seed
from .skorokhod import SampledPath, running_max_positive

ENVELOPE_TOL = 1e-10
EXPORT_COLUMNS = ("t", "V", "Lambda", "LY", "R1", "R2", "Y", "X1", "X2")


@dataclass(frozen=True)
class DegenerateBundle:
    params: ModelParams
    V: SampledPath
    Lambda: SampledPath
    LY: SampledPath
    R1: SampledPath
    R2: SampledPath
    G: SampledPath
    Y: SampledPath
    X1: SampledPath
    X2: SampledPath
    excursions: ExcursionSet
    seed: PathSeed
    envelope_deviation: float = 0.0
    zero_tol: float = DEFAULT_ZERO_TOL

    @property
    def times(self) -> np.ndarray:
        return self.V.times


def _check_params(p: ModelParams) -> None:
    if p.sigma != 0.0 or p.rho != 1.0:
        raise DomainError(f"the degenerate construction needs sigma = 0, got sigma={p.sigma!r}")
    if not p.g > 0:
        raise DomainError("the degenerate construction needs g > 0")


def degenerate_regulators(V: SampledPath, p: ModelParams) -> tuple[SampledPath, SampledPath, float]:
    """``(Lambda, LY, envelope_deviation)`` from the driving path.

    ``LY`` is half the difference of two running maxima.  That difference is
    nondecreasing in exact arithmetic; a running-max envelope absorbs the
    round-off and the largest correction is returned.  A correction above
    ``1e-10`` raises :class:`ConsistencyError`.
    """
    _check_params(p)
    s = V.times - V.t0
    v = V.values
    lam_ = running_max_positive(-p.xi_sum - p.nu * s - v)
    total = running_max_positive(-abs(p.y0) + p.lam * s - v)
    raw = 0.5 * (total - lam_)
    ly = np.maximum.accumulate(raw)
    dev = float(np.max(ly - raw)) if ly.size else 0.0
    if dev > ENVELOPE_TOL:
        raise ConsistencyError(f"LY decreased by {dev:.3e} before the monotone envelope")
    return SampledPath(lam_, V.dt, V.t0), SampledPath(ly, V.dt, V.t0), dev


def degenerate_ranks(V: SampledPath, p: ModelParams):
    """``(Lambda, LY, R1, R2, dev)``; ``R2`` is clamped at 0 against round-off."""
    lam_, ly, dev = degenerate_regulators(V, p)
    t = V.times
    r1 = p.r1 - p.h * t + V.values + lam_.values + ly.values
    r2 = p.r2 + p.g * t - ly.values
    low = float(r2.min())
    if low < -1e-9 * max(1.0, float(np.max(np.abs(r1)))):
        raise ConsistencyError(f"laggard reaches {low:.3e}")
    r2 = np.maximum(r2, 0.0)
    r1 = np.maximum(r1, r2)
    return lam_, ly, SampledPath(r1, V.dt, V.t0), SampledPath(r2, V.dt, V.t0), dev


def corner_origin_flags(exc: ExcursionSet, R1: SampledPath, Lambda: SampledPath, zero_tol: float) -> np.ndarray:
    """An excursion leaves the corner when the leader is at 0 just before it.

    A rise of ``Lambda`` at that index also counts: ``Lambda`` only moves when
    the sum ``R1 + R2`` is at 0, and round-off can leave ``R1`` a few ulps up.
    """
    left = np.maximum(exc.starts - 1, 0)
    dl = np.diff(Lambda.values, prepend=0.0)
    return (R1.values[left] <= zero_tol) | (dl[left] > 0)


def degenerate_simulate(
    p: ModelParams,
    horizon: float,
    dt: float,
    seed,
    *,
    zero_tol: float = DEFAULT_ZERO_TOL,
    marks=None,
) -> DegenerateBundle:
    """One realization of the sigma = 0 system on ``0, dt, ..., horizon``."""
    _check_params(p)
    seed = as_seed(seed)
    n = grid_size(horizon, dt)
    V = gen_brownian_pair(n, dt, seed, 1.0, 0.0).V
    lam_, ly, R1, R2, dev = degenerate_ranks(V, p)
    G = SampledPath(R1.values - R2.values, dt)

    exc = enumerate_excursions(G, R1, zero_tol)
    flags = corner_origin_flags(exc, R1, lam_, zero_tol)
    exc = ExcursionSet(exc.starts, exc.stops, flags)
    if marks is None:
        marks = draw_marks(len(exc), seed.streams()["marks"])
    forced = {int(k): -1 for k in np.flatnonzero(flags)}
    if len(exc) and exc.starts[0] == 0:
        forced.update(initial_forcing(p))
    Y, exc = unfold_gap(G, exc, marks=marks, forced=forced)
    X1, X2 = assemble_names(R2, R1, Y)
    return DegenerateBundle(
        params=p, V=V, Lambda=lam_, LY=ly, R1=R1, R2=R2, G=G, Y=Y, X1=X1, X2=X2,
        excursions=exc, seed=seed, envelope_deviation=dev, zero_tol=zero_tol,
    )


def degenerate_corner_prob(p: ModelParams) -> float:
    """Probability that both particles meet at the origin at some time."""
    if p.sigma != 0.0:
        raise DomainError("degenerate_corner_prob needs sigma = 0")
    if p.h >= p.g:
        return 1.0
    return math.exp(-2.0 * (p.g - p.h) * p.xi_sum)


def classify_corner_degenerate(p: ModelParams) -> Corner:
    """Corner class of the sigma = 0 system from the closed-form probability."""
    return Corner.ALMOST_SURELY if degenerate_corner_prob(p) >= 1.0 else Corner.POSITIVE_PROBABILITY


def export_degenerate(bundle: DegenerateBundle, path) -> None:
    cols = {
        "t": bundle.times,
        "V": bundle.V.values,
        "Lambda": bundle.Lambda.values,
        "LY": bundle.LY.values,
        "R1": bundle.R1.values,
        "R2": bundle.R2.values,
        "Y": bundle.Y.values,
        "X1": bundle.X1.values,
        "X2": bundle.X2.values,
    }
    write_columns(path, cols, EXPORT_COLUMNS)
