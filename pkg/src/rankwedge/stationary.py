"""Invariant densities of the ranks and their Monte Carlo counterparts.

When ``sigma = cos(pi / (2 (ell + 2)))`` for an integer ``ell >= 0`` the ranks
rescaled to unit diffusion, ``(R1 / rho, R2 / sigma)``, form a reflected
Brownian motion in a wedge whose invariant density is a finite signed sum of
exponentials.  Each term ``exp(-<mu, (I - T) x>)`` with ``x = D xi``,
``D = diag(1/rho, 1/sigma)``, becomes ``exp(-a . xi)`` with
``a = D (I - T)' mu`` in rank coordinates ``xi = (R1, R2)``.  On the domain
``0 < xi2 < xi1`` such a term integrates to ``1 / (a1 (a1 + a2))``, and in the
coordinates ``(gap, laggard) = (xi1 - xi2, xi2)`` it factors into independent
exponentials with rates ``a1`` and ``a1 + a2``.  Normalization, moments and
marginals below are all exact consequences of that factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from .errors import DomainError, UnsupportedSigma
from .model import NORM_TOL, ModelParams
from .pathgen import simulate_ranks, write_columns
from .rng import PathSeed, as_seed

ELL_TOL = 1e-9
# terms whose weight is this small relative to the largest are dropped
_WEIGHT_FLOOR = 1e-13


def _check_rates(p: ModelParams) -> None:
    if not p.h > p.g:
        raise DomainError(f"no invariant probability density unless h > g (g={p.g}, h={p.h})")


def density_equal_variance(xi1, xi2, p: ModelParams):
    """``16 h (h - g) exp(-4 (h xi1 - g xi2))`` on ``0 < xi2 < xi1``, else 0."""
    if abs(p.sigma**2 - 0.5) > NORM_TOL:
        raise DomainError(f"equal-variance density needs sigma**2 = 1/2, got {p.sigma**2!r}")
    _check_rates(p)
    xi1, xi2 = np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float)
    inside = (xi2 > 0) & (xi2 < xi1)
    val = 16.0 * p.h * (p.h - p.g) * np.exp(-4.0 * (p.h * xi1 - p.g * xi2))
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def match_ell(sigma: float, tol: float = ELL_TOL) -> int:
    """The integer ``ell`` with ``sigma == cos(pi / (2 (ell + 2)))`` within ``tol``."""
    if not 0.0 < sigma < 1.0:
        raise UnsupportedSigma(f"sigma={sigma!r} is outside (0, 1)")
    ell = round(math.pi / (2.0 * math.acos(sigma)) - 2.0)
    if ell < 0 or abs(sigma - math.cos(math.pi / (2.0 * (ell + 2)))) >= tol:
        raise UnsupportedSigma(
            f"sigma={sigma!r} is not cos(pi/(2(ell+2))) for any integer ell >= 0"
        )
    return int(ell)


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return -np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class SumExpDensity:
    """Normalized sum-of-exponentials density of ``(R1, R2)``.

    ``weights[j] * exp(-exponents[j] @ xi)`` summed over ``j`` is the density at
    ``xi = (R1, R2)`` inside ``0 < xi2 < xi1``.
    """

    ell: int
    mu_vec: np.ndarray
    nu1_vec: np.ndarray
    rot: tuple[np.ndarray, ...]
    ref: tuple[np.ndarray, ...]
    coefficients: np.ndarray
    weights: np.ndarray
    exponents: np.ndarray
    scaling: np.ndarray
    raw_terms: list[tuple[float, np.ndarray]] = field(repr=False, default_factory=list)

    @property
    def experimental(self) -> bool:
        # face labelling in the coefficient product is only checked for ell <= 1
        return self.ell >= 2

    @property
    def wedge_angle(self) -> float:
        return math.pi / (2.0 * (self.ell + 2))

    @property
    def terms(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.weights.tolist(), self.exponents))

    def __call__(self, xi1, xi2):
        return self.evaluate(xi1, xi2)

    def evaluate(self, xi1, xi2):
        xi1, xi2 = np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float)
        inside = (xi2 > 0) & (xi2 < xi1)
        z = xi1[..., None] * self.exponents[:, 0] + xi2[..., None] * self.exponents[:, 1]
        val = np.exp(-z) @ self.weights
        out = np.where(inside, val, 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def _rates(self) -> tuple[np.ndarray, np.ndarray]:
        a1 = self.exponents[:, 0]
        return a1, a1 + self.exponents[:, 1]

    @property
    def _masses(self) -> np.ndarray:
        a1, b = self._rates
        return self.weights / (a1 * b)

    def total_mass(self) -> float:
        return float(self._masses.sum())

    def moments(self) -> dict[str, float]:
        """Means and second moments of gap ``R1 - R2`` and laggard ``R2``."""
        a1, b = self._rates
        m = self._masses
        return {
            "mean_gap": float(m @ (1.0 / a1)),
            "mean_laggard": float(m @ (1.0 / b)),
            "second_gap": float(m @ (2.0 / a1**2)),
            "second_laggard": float(m @ (2.0 / b**2)),
            "cross": float(m @ (1.0 / (a1 * b))),
        }

    def gap_cdf(self, u):
        a1, _ = self._rates
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        return (1.0 - np.exp(-u[..., None] * a1)) @ self._masses

    def laggard_cdf(self, v):
        _, b = self._rates
        v = np.maximum(np.asarray(v, dtype=float), 0.0)
        return (1.0 - np.exp(-v[..., None] * b)) @ self._masses

    def gap_pdf(self, u):
        a1, _ = self._rates
        u = np.asarray(u, dtype=float)
        return np.where(u >= 0, (a1 * np.exp(-u[..., None] * a1)) @ self._masses, 0.0)

    def laggard_pdf(self, v):
        _, b = self._rates
        v = np.asarray(v, dtype=float)
        return np.where(v >= 0, (b * np.exp(-v[..., None] * b)) @ self._masses, 0.0)


def build_sum_exp_density(p: ModelParams) -> SumExpDensity:
    """Expand the sum-of-exponentials invariant density for ``p``.

    Raises :class:`UnsupportedSigma` unless ``sigma = cos(pi / (2 (ell + 2)))``
    within ``1e-9``, and :class:`DomainError` unless ``h > g``.
    """
    ell = match_ell(p.sigma)
    _check_rates(p)
    xi = math.pi / (2.0 * (ell + 2))
    rho, sigma = math.sin(xi), math.cos(xi)
    mu = np.array([p.h / rho, -p.g / sigma])
    nu1 = np.array([0.0, 1.0])
    e1 = np.array([1.0, 0.0])
    eye = np.eye(2)
    J = np.diag([1.0, -1.0])
    theta1 = 0.0
    rot = tuple(_rot(2.0 * theta1 + 2.0 * k * xi) for k in range(ell + 1))
    ref = tuple(r @ J for r in rot)

    coeffs = np.empty(ell + 1)
    for k in range(ell + 1):
        num = 1.0
        for i, j in combinations([m for m in range(ell + 1) if m != k], 2):
            num *= mu @ ((rot[i] - rot[j]) @ e1)
        den = mu @ ((ref[k] - rot[k]) @ nu1)
        if den == 0.0:
            raise DomainError(f"degenerate coefficient denominator at k={k}")
        coeffs[k] = (-1) ** k * num / den

    D = np.diag([1.0 / rho, 1.0 / sigma])
    raw = []
    for k in range(ell + 1):
        for sign, T in ((1.0, rot[k]), (-1.0, ref[k])):
            w = sign * coeffs[k] * (mu @ ((eye - T) @ nu1))
            a = D @ (eye - T).T @ mu
            raw.append((float(w), a))

    wmax = max(abs(w) for w, _ in raw)
    kept = [(w, a) for w, a in raw if abs(w) > _WEIGHT_FLOOR * wmax]
    weights = np.array([w for w, _ in kept])
    exponents = np.array([a for _, a in kept])
    a1 = exponents[:, 0]
    b = a1 + exponents[:, 1]
    if np.any(a1 <= 0) or np.any(b <= 0):
        raise DomainError("a term of the expansion is not integrable over the wedge")
    mass = float(np.sum(weights / (a1 * b)))
    # the expansion is only defined up to a constant, whose sign can be negative
    if mass == 0.0 or not math.isfinite(mass):
        raise DomainError(f"expansion has degenerate total mass {mass!r}")
    return SumExpDensity(
        ell=ell, mu_vec=mu, nu1_vec=nu1, rot=rot, ref=ref, coefficients=coeffs,
        weights=weights / mass, exponents=exponents, scaling=D, raw_terms=raw,
    )


@dataclass(frozen=True)
class InvariantSample:
    gap: np.ndarray
    laggard: np.ndarray
    seeds: list[PathSeed]
    histogram: np.ndarray
    gap_edges: np.ndarray
    laggard_edges: np.ndarray

    @property
    def n(self) -> int:
        return self.gap.size

    def summary(self) -> dict[str, float]:
        return {
            "n": self.n,
            "mean_gap": float(self.gap.mean()),
            "mean_laggard": float(self.laggard.mean()),
            "var_gap": float(self.gap.var(ddof=1)),
            "var_laggard": float(self.laggard.var(ddof=1)),
            "corr": float(np.corrcoef(self.gap, self.laggard)[0, 1]),
        }


def empirical_invariant(
    p: ModelParams,
    horizon: float,
    burn_in: float,
    dt: float,
    subsample_stride: float = 1.0,
    seed=0,
    *,
    n_paths: int = 1,
    monitoring: str = "bridge",
    bins: int = 40,
    hist_range: tuple[tuple[float, float], tuple[float, float]] | None = None,
) -> InvariantSample:
    """Subsampled ``(gap, laggard)`` pairs from long runs after a burn-in.

    Parameters
    ----------
    subsample_stride : float
        Time between retained samples.
    seed : PathSeed, int or (base_seed, index)
        Replicate ``i`` uses ``PathSeed(base_seed, index + i)``.
    n_paths : int
        Independent replicates whose samples are pooled.
    monitoring : {"bridge", "grid"}
        ``"bridge"`` (default) reflects against within-step maxima, removing the
        ``O(sqrt(dt))`` pile-up of grid-reflected ranks at 0.
    """
    _check_rates(p)
    if not 0 <= burn_in < horizon:
        raise DomainError("need 0 <= burn_in < horizon")
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    stride = max(1, int(round(subsample_stride / dt)))
    first = int(round(burn_in / dt))
    base = as_seed(seed)
    seeds = [PathSeed(base.base_seed, base.index + i) for i in range(n_paths)]
    gaps, lags = [], []
    for s in seeds:
        _, _, (_, G, _, M, _) = simulate_ranks(p, horizon, dt, s, monitoring=monitoring)
        gaps.append(G.values[first::stride])
        lags.append(M.values[first::stride])
    gap, lag = np.concatenate(gaps), np.concatenate(lags)
    if hist_range is None:
        hist_range = ((0.0, float(np.quantile(gap, 0.999))), (0.0, float(np.quantile(lag, 0.999))))
    hist, ge, le = np.histogram2d(gap, lag, bins=bins, range=hist_range)
    return InvariantSample(gap, lag, seeds, hist, ge, le)


def marginal_ks(sample: InvariantSample, density) -> tuple[float, float]:
    """Kolmogorov-Smirnov distances of the gap and laggard marginals."""
    return (
        float(stats.kstest(sample.gap, density.gap_cdf).statistic),
        float(stats.kstest(sample.laggard, density.laggard_cdf).statistic),
    )


def export_histogram(sample: InvariantSample, path) -> None:
    ge, le = sample.gap_edges, sample.laggard_edges
    gi, li = np.meshgrid(np.arange(ge.size - 1), np.arange(le.size - 1), indexing="ij")
    cols = {
        "gap_lo": ge[gi].ravel(),
        "gap_hi": ge[gi + 1].ravel(),
        "laggard_lo": le[li].ravel(),
        "laggard_hi": le[li + 1].ravel(),
        "count": sample.histogram.ravel(),
    }
    write_columns(path, cols, tuple(cols))


def density_grid(density, xi1_max: float, n: int = 50) -> dict[str, np.ndarray]:
    """Evaluate ``density(xi1, xi2)`` on an ``n x n`` grid of ``(0, xi1_max]**2``."""
    axis = np.linspace(0.0, xi1_max, n + 1)[1:]
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    return {"xi1": x1.ravel(), "xi2": x2.ravel(), "p": np.asarray(density(x1.ravel(), x2.ravel()))}


def export_density_grid(density, path, xi1_max: float, n: int = 50) -> None:
    write_columns(path, density_grid(density, xi1_max, n), ("xi1", "xi2", "p"))
