"""Grid synthesis of the two-particle ranked system.

Pipeline for one realization::

    (V1, V2) -> regulators (A, Lambda) -> Z, G, K, M, N
             -> excursions of G -> marks -> Y -> (X1, X2) -> derived drivers

Every path functional is computed from grid values only, so the algebraic
identities between the processes hold to round-off at every grid point.  The
names are assembled with ``np.where`` on the sign of ``Y`` rather than as
``M + Y^+``; the two agree exactly in real arithmetic, and the selection form
makes ``max(X1, X2) == N`` and ``min(X1, X2) == M`` bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DomainError
from .model import ModelParams
from .rng import PathSeed, as_seed
from .skorokhod import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    RegulatorPair,
    SampledPath,
    forcing_terms,
    solve_coupled_regulators,
)

DEFAULT_ZERO_TOL = 0.0
# clamp slack per unit of magnitude; values near T = 2000 carry ~1e-13 round-off
_ROUNDOFF_ULPS = 64 * np.finfo(float).eps

EXPORT_COLUMNS = ("t", "V1", "V2", "A", "Lambda", "Z", "G", "Y", "M", "N", "X1", "X2", "B1", "B2")


@dataclass(frozen=True)
class BrownianBundle:
    V1: SampledPath
    V2: SampledPath
    V: SampledPath
    Q: SampledPath
    V_flat: SampledPath
    Q_flat: SampledPath


@dataclass(frozen=True)
class ExcursionSet:
    """Maximal runs ``[starts[k], stops[k])`` of grid indices with ``G > zero_tol``."""

    starts: np.ndarray
    stops: np.ndarray
    origin_flags: np.ndarray
    marks: np.ndarray | None = None

    def __len__(self):
        return self.starts.size

    @property
    def intervals(self) -> list[tuple[int, int]]:
        return list(zip(self.starts.tolist(), self.stops.tolist()))

    @property
    def durations(self) -> np.ndarray:
        return self.stops - self.starts

    def with_marks(self, marks: np.ndarray) -> "ExcursionSet":
        marks = np.asarray(marks, dtype=np.int8)
        if marks.shape != self.starts.shape:
            raise DomainError(f"need {len(self)} marks, got {marks.size}")
        if not np.all((marks == 1) | (marks == -1)):
            raise DomainError("marks must be +1 or -1")
        return ExcursionSet(self.starts, self.stops, self.origin_flags, marks)


@dataclass(frozen=True)
class PathBundle:
    params: ModelParams
    brownian: BrownianBundle
    regulators: RegulatorPair
    Z: SampledPath
    G: SampledPath
    K: SampledPath
    M: SampledPath
    N: SampledPath
    Y: SampledPath
    X1: SampledPath
    X2: SampledPath
    excursions: ExcursionSet
    seed: PathSeed
    zero_tol: float = DEFAULT_ZERO_TOL
    monitoring: str = "grid"
    drivers: dict[str, SampledPath] = field(default_factory=dict, repr=False)

    @property
    def R1(self) -> SampledPath:
        return self.N

    @property
    def R2(self) -> SampledPath:
        return self.M

    @property
    def A(self) -> SampledPath:
        return self.regulators.A

    @property
    def Lambda(self) -> SampledPath:
        return self.regulators.Lambda

    @property
    def times(self) -> np.ndarray:
        return self.G.times

    def __getattr__(self, name):
        # derived drivers B1, B2, W1, W2, W live in a dict so they can be skipped
        drivers = self.__dict__.get("drivers", {})
        if name in drivers:
            return drivers[name]
        raise AttributeError(name)


def _path(values, dt) -> SampledPath:
    return SampledPath(values, dt)


def _cumsum0(increments: np.ndarray) -> np.ndarray:
    out = np.empty(increments.shape[-1] + 1)
    out[0] = 0.0
    np.cumsum(increments, out=out[1:])
    return out


def brownian_increments(n: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """``(2, n - 1)`` array of independent N(0, dt) increments."""
    return rng.standard_normal((2, n - 1)) * math.sqrt(dt)


def rotate(v1: np.ndarray, v2: np.ndarray, rho: float, sigma: float):
    """``(V, Q, V_flat, Q_flat)`` from the independent pair."""
    return (
        rho * v1 + sigma * v2,
        sigma * v1 + rho * v2,
        rho * v1 - sigma * v2,
        sigma * v1 - rho * v2,
    )


def gen_brownian_pair(n: int, dt: float, seed, rho: float, sigma: float) -> BrownianBundle:
    """Two independent Brownian paths on ``n`` grid points and their rotations.

    Only the ``increments`` stream of ``seed`` is consumed.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if not dt > 0:
        raise DomainError("dt must be > 0")
    rng = as_seed(seed).streams()["increments"]
    inc = brownian_increments(n, dt, rng)
    v1, v2 = _cumsum0(inc[0]), _cumsum0(inc[1])
    rotated = rotate(v1, v2, rho, sigma)
    return BrownianBundle(*(_path(x, dt) for x in (v1, v2, *rotated)))


def _clamp_nonneg(x: np.ndarray, tol: float, scale: float, name: str) -> np.ndarray:
    tol_eff = max(tol, _ROUNDOFF_ULPS * scale)
    low = float(x.min())
    if low < -10.0 * tol_eff:
        raise ConsistencyError(
            f"{name} reaches {low:.3e} < -10*tol ({tol_eff:.1e}); regulators not converged?"
        )
    if low < 0.0:
        x = np.where(x < 0.0, 0.0, x)
    return x


def build_supporting_processes(
    b: BrownianBundle, reg: RegulatorPair, p: ModelParams, tol: float = DEFAULT_TOL
) -> tuple[SampledPath, SampledPath, SampledPath, SampledPath, SampledPath]:
    """``(Z, G, K, M, N)`` from the drivers and a converged regulator pair.

    ``Z = |y0| - lam t - Lambda + V_flat``, ``G = Z + 2A``,
    ``K = r2 + g t - A + sigma V2``, ``M = K + Lambda`` and
    ``N = r1 - h t + A + rho V1``.  ``G`` and ``M`` are clamped at zero when
    round-off pushes them slightly negative; the slack is ``tol`` or 64 ulps
    of the largest magnitude involved, whichever is larger.  ``N`` is stored
    as ``M + G``, which makes ``0 <= M <= N`` exact, after checking it
    against its own formula with the same slack.
    """
    if not b.V_flat.same_grid(reg.A):
        raise DomainError("regulators and drivers must share a grid")
    dt = b.V1.dt
    a = reg.A.values
    lam_ = reg.Lambda.values
    w_a, w_l = forcing_terms(b.V_flat, b.V2, p)
    z = -(w_a + lam_)
    k = -(w_l + a)
    g_raw = z + 2.0 * a
    m_raw = k + lam_
    t = b.V1.times
    n_formula = p.r1 - p.h * t + a + p.rho * b.V1.values

    scale = max(1.0, float(np.max(np.abs(w_a))), float(np.max(np.abs(w_l))), float(lam_[-1]), float(a[-1]))
    g = _clamp_nonneg(g_raw, tol, scale, "G")
    m = _clamp_nonneg(m_raw, tol, scale, "M")
    n = m + g
    tol_n = max(tol, _ROUNDOFF_ULPS * (scale + p.r1 + p.h * float(t[-1])))
    dev = float(np.max(np.abs(n - n_formula)))
    if dev > 10.0 * tol_n:
        raise ConsistencyError(f"N - M - G reaches {dev:.3e}; regulators not converged?")
    return tuple(_path(x, dt) for x in (z, g, k, m, n))


def enumerate_excursions(G: SampledPath, N: SampledPath, zero_tol: float = DEFAULT_ZERO_TOL) -> ExcursionSet:
    """Maximal index runs with ``G > zero_tol``.

    ``origin_flags[k]`` records whether ``N`` is within ``zero_tol`` of zero at
    the grid point just before excursion ``k`` (or at its first point when the
    excursion starts the path).
    """
    pos = G.values > zero_tol
    edges = np.diff(pos.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    left = np.maximum(starts - 1, 0)
    flags = N.values[left] <= zero_tol
    return ExcursionSet(starts, stops, flags)


def excursions_from_touches(A: SampledPath, N: SampledPath, zero_tol: float = DEFAULT_ZERO_TOL) -> ExcursionSet:
    """Excursions split at the steps where the gap touched zero between grid points.

    Under bridge monitoring the gap is positive at grid points and its zeros are
    the steps over which ``A`` rises.  Index ``k`` with ``A[k] > A[k-1]`` opens a
    new excursion; every grid point belongs to exactly one excursion.
    """
    n = len(A)
    touches = np.flatnonzero(np.diff(A.values) > 0) + 1
    starts = np.concatenate(([0], touches)).astype(np.int64)
    stops = np.concatenate((touches, [n])).astype(np.int64)
    left = np.maximum(starts - 1, 0)
    return ExcursionSet(starts, stops, N.values[left] <= zero_tol)


def draw_marks(count: int, rng: np.random.Generator) -> np.ndarray:
    """Fair +-1 marks, one per excursion in excursion order."""
    return (2 * rng.integers(0, 2, size=count) - 1).astype(np.int8)


def signs_from_marks(n: int, exc: ExcursionSet) -> np.ndarray:
    """Per-index sign: the excursion's mark inside it, -1 on the zero set."""
    acc = np.zeros(n + 1, dtype=np.int64)
    lift = exc.marks.astype(np.int64) + 1  # 0 or 2
    np.add.at(acc, exc.starts, lift)
    np.add.at(acc, exc.stops, -lift)
    return np.cumsum(acc[:-1]) - 1


def unfold_gap(
    G: SampledPath,
    exc: ExcursionSet,
    rng: np.random.Generator | None = None,
    marks=None,
    forced: dict[int, int] | None = None,
) -> tuple[SampledPath, ExcursionSet]:
    """Attach a sign to every excursion of ``G``.

    Marks are taken from ``marks`` when injected, otherwise from ``exc.marks``
    if already set, otherwise drawn from ``rng``.  ``forced`` maps excursion
    positions to a mark that overrides the draw.  Returns ``Y`` (with
    ``|Y| == G`` bitwise) and the excursion set carrying its marks.
    """
    if marks is None:
        marks = exc.marks
    if marks is None:
        if rng is None:
            raise DomainError("unfold_gap needs an rng stream or injected marks")
        marks = draw_marks(len(exc), rng)
    marks = np.array(marks, dtype=np.int8)
    for k, m in (forced or {}).items():
        marks[k] = m
    exc = exc.with_marks(marks)
    sgn = signs_from_marks(len(G), exc)
    # + 0.0 turns -0.0 on the zero set into 0.0
    y = np.where(sgn > 0, G.values, -G.values) + 0.0
    return _path(y, G.dt), exc


def assemble_names(M: SampledPath, N: SampledPath, Y: SampledPath) -> tuple[SampledPath, SampledPath]:
    """Named particles from ranks and the signed gap: the leader is X1 iff Y > 0."""
    lead1 = Y.values > 0
    x1 = np.where(lead1, N.values, M.values)
    x2 = np.where(lead1, M.values, N.values)
    return _path(x1, M.dt), _path(x2, M.dt)


def derive_named_brownians(Y: SampledPath, V1: SampledPath, V2: SampledPath) -> tuple[SampledPath, SampledPath]:
    """Drivers of the named particles, indicators taken at left endpoints."""
    lead1 = Y.values[:-1] > 0
    d1, d2 = np.diff(V1.values), np.diff(V2.values)
    b1 = _cumsum0(np.where(lead1, d1, d2))
    b2 = _cumsum0(np.where(lead1, d2, d1))
    return _path(b1, Y.dt), _path(b2, Y.dt)


def left_sgn(y: np.ndarray) -> np.ndarray:
    """sgn with sgn(0) = -1."""
    return np.where(y > 0, 1.0, -1.0)


def derive_rank_brownians(
    Y: SampledPath, V1: SampledPath, V2: SampledPath, V_flat: SampledPath
) -> tuple[SampledPath, SampledPath, SampledPath]:
    """``W1 = int sgn(Y) dV1``, ``W2 = -int sgn(Y) dV2``, ``W = int sgn(Y) dV_flat``."""
    s = left_sgn(Y.values[:-1])
    w1 = _cumsum0(s * np.diff(V1.values))
    w2 = -_cumsum0(s * np.diff(V2.values)) + 0.0
    w = _cumsum0(s * np.diff(V_flat.values))
    return _path(w1, Y.dt), _path(w2, Y.dt), _path(w, Y.dt)


def grid_size(horizon: float, dt: float) -> int:
    if not dt > 0:
        raise DomainError("dt must be > 0")
    if not horizon >= dt:
        raise DomainError("horizon must be >= dt")
    # tolerate horizon/dt landing a hair below an integer
    return int(math.floor(horizon / dt + 1e-9)) + 1


def initial_forcing(p: ModelParams) -> dict[int, int]:
    """An excursion running at t = 0 carries the sign of the initial name gap."""
    if p.y0 == 0:
        return {}
    return {0: 1 if p.y0 > 0 else -1}


MONITORING = ("grid", "bridge")


def simulate_ranks(
    p: ModelParams,
    horizon: float,
    dt: float,
    seed,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    monitoring: str = "grid",
):
    """Drivers, regulators and ``(Z, G, K, M, N)`` only; no marks are drawn.

    ``monitoring="bridge"`` reflects against the within-step maxima of the
    driving terms (see :func:`solve_coupled_regulators`).  The increments are
    the same as for ``"grid"``; the extra uniforms come from the seed's
    ``bridge`` stream.
    """
    if not 0 < p.sigma <= 1:
        raise DomainError("the main pipeline needs 0 < sigma <= 1; sigma = 0 is the degenerate module")
    if monitoring not in MONITORING:
        raise DomainError(f"monitoring must be one of {MONITORING}, got {monitoring!r}")
    seed = as_seed(seed)
    n = grid_size(horizon, dt)
    b = gen_brownian_pair(n, dt, seed, p.rho, p.sigma)
    uniforms = None
    if monitoring == "bridge":
        u = seed.streams()["bridge"].random((2, n - 1))
        # log(0) guard; random() can return exactly 0.0
        uniforms = (1.0 - u[0], 1.0 - u[1])
    reg = solve_coupled_regulators(b.V_flat, b.V2, p, tol, max_iter, bridge_uniforms=uniforms)
    return b, reg, build_supporting_processes(b, reg, p, tol)


def simulate_path(
    p: ModelParams,
    horizon: float,
    dt: float,
    seed,
    *,
    zero_tol: float = DEFAULT_ZERO_TOL,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    drivers: bool = True,
    marks=None,
    monitoring: str = "grid",
) -> PathBundle:
    """One realization on the grid ``0, dt, ..., horizon``.

    Parameters
    ----------
    seed : PathSeed, int or (base_seed, index)
        Increments and marks use separate child streams of this seed.
    drivers : bool
        Also build ``B1, B2, W1, W2, W``; skip for long runs to save memory.
    marks : array of +-1, optional
        Injected excursion marks (tests).
    monitoring : {"grid", "bridge"}
        ``"grid"`` reflects against grid values only: the regulators rise
        exactly at grid zeros and excursions are runs of ``G > zero_tol``.
        ``"bridge"`` reflects against within-step maxima, which removes the
        ``O(sqrt(dt))`` downward bias of the ranks near 0; excursions are then
        delimited by the steps where ``A`` rises.  The algebraic identities
        hold in both modes.
    """
    seed = as_seed(seed)
    b, reg, (z, g, k, m, n) = simulate_ranks(p, horizon, dt, seed, tol, max_iter, monitoring)
    if monitoring == "bridge":
        exc = excursions_from_touches(reg.A, n, zero_tol)
    else:
        exc = enumerate_excursions(g, n, zero_tol)
    forced = initial_forcing(p) if len(exc) and exc.starts[0] == 0 else {}
    y, exc = unfold_gap(g, exc, seed.streams()["marks"], marks=marks, forced=forced)
    x1, x2 = assemble_names(m, n, y)
    if min(x1.values.min(), x2.values.min()) < 0:
        raise ConsistencyError("a named particle went negative")

    extra = {}
    if drivers:
        extra["B1"], extra["B2"] = derive_named_brownians(y, b.V1, b.V2)
        extra["W1"], extra["W2"], extra["W"] = derive_rank_brownians(y, b.V1, b.V2, b.V_flat)
    return PathBundle(
        params=p, brownian=b, regulators=reg, Z=z, G=g, K=k, M=m, N=n, Y=y,
        X1=x1, X2=x2, excursions=exc, seed=seed, zero_tol=zero_tol, monitoring=monitoring,
        drivers=extra,
    )


def bundle_columns(bundle: PathBundle) -> dict[str, np.ndarray]:
    b = bundle.brownian
    cols = {
        "t": bundle.times,
        "V1": b.V1.values,
        "V2": b.V2.values,
        "A": bundle.A.values,
        "Lambda": bundle.Lambda.values,
        "Z": bundle.Z.values,
        "G": bundle.G.values,
        "Y": bundle.Y.values,
        "M": bundle.M.values,
        "N": bundle.N.values,
        "X1": bundle.X1.values,
        "X2": bundle.X2.values,
    }
    if "B1" in bundle.drivers:
        cols["B1"] = bundle.drivers["B1"].values
        cols["B2"] = bundle.drivers["B2"].values
    else:
        cols["B1"], cols["B2"] = derive_named_brownians(bundle.Y, b.V1, b.V2)
        cols["B1"], cols["B2"] = cols["B1"].values, cols["B2"].values
    return cols


def write_columns(path, columns: dict[str, np.ndarray], names) -> None:
    """Comma-separated table, header row, ``%.17g`` floats, ``\\n`` line ends."""
    data = np.column_stack([columns[k] for k in names])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(names), comments="", newline="\n")


def export_bundle(bundle: PathBundle, path) -> None:
    write_columns(path, bundle_columns(bundle), EXPORT_COLUMNS)
