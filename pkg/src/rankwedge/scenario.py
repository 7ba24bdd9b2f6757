"""Scenarios, the Monte Carlo batch engine and artifact writing.

Path ``i`` of a scenario always uses ``PathSeed(base_seed, i)``, so a batch is
reproducible from ``(base_seed, n_paths)`` alone and its results do not depend
on the number of workers: statistics are collected per index and reduced in
index order.
"""

from __future__ import annotations

import configparser
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy

from . import __version__
from .degenerate import degenerate_corner_prob, degenerate_ranks, degenerate_simulate, export_degenerate
from .errors import ConfigError, DomainError
from .localtime import identity_suite
from .model import CONFIG_KEYS, ModelParams, classify, wedge_geometry
from .pathgen import MONITORING, export_bundle, gen_brownian_pair, grid_size, simulate_path, simulate_ranks
from .rng import PathSeed
from .stationary import (
    build_sum_exp_density,
    density_equal_variance,
    empirical_invariant,
    export_density_grid,
    export_histogram,
    marginal_ks,
)

OUTPUTS = ("path-bundle", "histogram", "identity-report", "classification", "density-grid", "corner-hit")
MIN_CORNER_PATHS = 100


@dataclass(frozen=True)
class Scenario:
    params: ModelParams
    horizon: float = 10.0
    dt: float = 1e-3
    burn_in: float = 0.0
    n_paths: int = 1
    base_seed: int = 0
    outputs: tuple[str, ...] = ("path-bundle",)
    zero_tol: float = 0.0
    eps_corner: float = 0.01
    lt_epsilon: float = 0.01
    stride: float = 1.0
    monitoring: str = "auto"

    def __post_init__(self):
        if self.monitoring not in ("auto",) + MONITORING:
            raise ConfigError(f"monitoring must be 'auto', 'grid' or 'bridge', got {self.monitoring!r}")
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        if not self.horizon >= self.dt:
            raise DomainError("horizon must be >= dt")
        if not 0 <= self.burn_in < self.horizon:
            raise DomainError("burn_in must lie in [0, horizon)")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError("n_paths must be an integer >= 1")
        if not 0 <= self.base_seed < 2**64:
            raise DomainError("base_seed must be a 64-bit nonnegative integer")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad:
            raise ConfigError(f"unknown outputs {bad}; choose from {list(OUTPUTS)}")
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "base_seed", int(self.base_seed))

    def seed(self, i: int) -> PathSeed:
        return PathSeed(self.base_seed, i)

    def monitoring_for(self, output: str) -> str:
        """``"auto"`` means bridge monitoring for statistics that sit at 0
        (histograms, local times) and grid monitoring otherwise."""
        if self.monitoring != "auto":
            return self.monitoring
        return "bridge" if output in ("histogram", "identity-report") else "grid"

    def to_mapping(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "params"}
        d.update(self.params.to_mapping())
        d["outputs"] = list(self.outputs)
        return d


_SCENARIO_FLOATS = ("horizon", "dt", "burn_in", "zero_tol", "eps_corner", "lt_epsilon", "stride")
_SCENARIO_INTS = ("n_paths", "base_seed")


def scenario_from_mapping(data: dict) -> Scenario:
    """Build a scenario from flat string or numeric values; unknown keys are errors."""
    known = set(CONFIG_KEYS) | set(_SCENARIO_FLOATS) | set(_SCENARIO_INTS) | {"outputs", "monitoring"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {unknown}")
    params = ModelParams.from_mapping({k: data[k] for k in CONFIG_KEYS if k in data})
    kw = {}
    try:
        for k in _SCENARIO_FLOATS:
            if k in data:
                kw[k] = float(data[k])
        for k in _SCENARIO_INTS:
            if k in data:
                kw[k] = int(data[k])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "outputs" in data:
        out = data["outputs"]
        kw["outputs"] = tuple(o.strip() for o in out.split(",") if o.strip()) if isinstance(out, str) else tuple(out)
    if "monitoring" in data:
        kw["monitoring"] = str(data["monitoring"]).strip()
    return Scenario(params, **kw)


def load_scenario(path) -> Scenario:
    """Read a ``[scenario]`` section of ``key = value`` lines."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    extra = [s for s in cp.sections() if s != "scenario"]
    if extra or "scenario" not in cp:
        raise ConfigError(f"expected exactly one [scenario] section, got {cp.sections()}")
    return scenario_from_mapping(dict(cp["scenario"]))


def dump_scenario(s: Scenario) -> str:
    lines = ["[scenario]"]
    for k, v in s.to_mapping().items():
        if k == "outputs":
            v = ", ".join(v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class McResult:
    estimate: float
    stderr: float
    n: int
    seeds: list[tuple[int, int]] = field(repr=False, default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["stderr"] = None if math.isnan(self.stderr) else self.stderr
        return d


def summarize(values: Sequence[float], seeds: Sequence[PathSeed] = (), **extra) -> McResult:
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        raise DomainError("no values to summarize")
    est = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return McResult(est, se, n, [(s.base_seed, s.index) for s in seeds], dict(extra))


@dataclass(frozen=True)
class RankPath:
    """The ranks and regulators of one path, for either sigma regime."""

    params: ModelParams
    dt: float
    R1: np.ndarray
    R2: np.ndarray
    Lambda: np.ndarray
    seed: PathSeed


def rank_path(p: ModelParams, horizon: float, dt: float, seed: PathSeed, monitoring: str = "grid") -> RankPath:
    if p.sigma == 0.0:
        n = grid_size(horizon, dt)
        V = gen_brownian_pair(n, dt, seed, 1.0, 0.0).V
        lam_, _, r1, r2, _ = degenerate_ranks(V, p)
        return RankPath(p, dt, r1.values, r2.values, lam_.values, seed)
    _, reg, (_, _, _, m, n_) = simulate_ranks(p, horizon, dt, seed, monitoring=monitoring)
    return RankPath(p, dt, n_.values, m.values, reg.Lambda.values, seed)


def full_path(p: ModelParams, horizon: float, dt: float, seed: PathSeed, monitoring: str = "grid",
              zero_tol: float = 0.0):
    if p.sigma == 0.0:
        return degenerate_simulate(p, horizon, dt, seed, zero_tol=zero_tol)
    return simulate_path(p, horizon, dt, seed, zero_tol=zero_tol, monitoring=monitoring)


class _PathTask:
    """Picklable per-index job: build the path, apply the statistic."""

    def __init__(self, f, s: Scenario, simulate, output: str):
        self.f, self.s, self.simulate, self.output = f, s, simulate, output

    def __call__(self, i: int):
        s = self.s
        return self.f(self.simulate(s.params, s.horizon, s.dt, s.seed(i), s.monitoring_for(self.output)))


def mc_batch(
    f: Callable,
    s: Scenario,
    *,
    simulate: Callable = full_path,
    workers: int = 1,
    output: str = "path-bundle",
) -> McResult:
    """Mean and standard error of ``f(path)`` over the scenario's paths.

    ``simulate(params, horizon, dt, seed, monitoring)`` builds each path; the
    default gives a full bundle.  ``f`` may return a scalar or a 1-d array (one
    statistic per component); a vector result is summarized per component in
    ``extra["components"]`` and the first component is the estimate.  With
    ``workers > 1`` paths run in a process pool; results are identical.
    ``output`` selects the monitoring mode when the scenario's is ``"auto"``.
    """
    task = _PathTask(f, s, simulate, output)
    idx = range(s.n_paths)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            values = list(ex.map(task, idx, chunksize=max(1, s.n_paths // (4 * workers))))
    else:
        values = [task(i) for i in idx]
    seeds = [s.seed(i) for i in idx]
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        return summarize(arr, seeds)
    comps = [summarize(arr[:, j]).to_mapping() for j in range(arr.shape[1])]
    head = summarize(arr[:, 0], seeds, components=comps)
    return head


class _CornerStat:
    def __init__(self, eps: float, cut_indices: Sequence[int]):
        self.eps, self.cuts = eps, list(cut_indices)

    def __call__(self, path: RankPath):
        # running min of the leader: hit by T_j is read off a prefix, so the
        # estimates for different horizons come from the same paths
        runmin = np.minimum.accumulate(path.R1)
        out = []
        for c in self.cuts:
            out.append(float(runmin[c] <= self.eps))
            out.append(float(runmin[c] <= 0.5 * self.eps))
        return out


def mc_corner_hit(
    s: Scenario,
    horizons: Sequence[float] | None = None,
    *,
    workers: int = 1,
    min_paths: int = MIN_CORNER_PATHS,
) -> McResult:
    """Frequency of ``min R1 <= eps_corner`` over the grid.

    The estimate is for ``s.horizon``; ``extra["by_horizon"]`` holds one result
    per entry of ``horizons`` (each at most ``s.horizon``) read from prefixes of
    the same paths, and ``extra["half_eps"]`` repeats each at ``eps_corner / 2``
    as a resolution check.  For ``sigma = 0`` with ``g > h`` the closed-form
    probability is reported as ``extra["reference"]``.
    """
    if s.n_paths < min_paths:
        raise DomainError(f"mc_corner_hit needs at least {min_paths} paths, got {s.n_paths}")
    horizons = list(horizons) if horizons else [s.horizon]
    if s.horizon not in horizons:
        horizons.append(s.horizon)
    if max(horizons) > s.horizon + 1e-12:
        raise DomainError("horizons must not exceed the scenario horizon")
    cuts = [int(math.floor(T / s.dt + 1e-9)) for T in horizons]
    res = mc_batch(_CornerStat(s.eps_corner, cuts), s, simulate=rank_path, workers=workers, output="corner-hit")
    comps = res.extra["components"]
    by_h, half = {}, {}
    for j, T in enumerate(horizons):
        full, hf = comps[2 * j], comps[2 * j + 1]
        by_h[float(T)] = full
        half[float(T)] = hf
    main = by_h[float(s.horizon)]
    extra = {"by_horizon": by_h, "half_eps": half, "eps_corner": s.eps_corner}
    p = s.params
    if p.sigma == 0.0 and p.g > p.h:
        extra["reference"] = degenerate_corner_prob(p)
    stderr = main["stderr"] if main["stderr"] is not None else math.nan
    return McResult(main["estimate"], stderr, main["n"], res.seeds, extra)


# --- artifacts --------------------------------------------------------------


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(type(o))


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default, allow_nan=False)
        fh.write("\n")


def classification_record(p: ModelParams) -> dict:
    rec = {"params": p.to_mapping()}
    if p.sigma == 0.0:
        from .degenerate import classify_corner_degenerate

        rec["corner"] = classify_corner_degenerate(p).value
        rec["corner_probability"] = degenerate_corner_prob(p)
        return rec
    c = classify(p)
    rec["corner"] = c.corner.value
    rec["recurrence"] = c.recurrence.value if c.recurrence else None
    if p.sigma < 1.0:
        rec["geometry"] = asdict(wedge_geometry(p))
    return rec


def closed_form_density(p: ModelParams):
    """The equal-variance density when sigma**2 = 1/2, else the expansion."""
    if abs(p.sigma**2 - 0.5) <= 1e-9:
        return lambda x1, x2: density_equal_variance(x1, x2, p)
    return build_sum_exp_density(p)


def _versions() -> dict:
    return {
        "rankwedge": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def run_scenario(s: Scenario, out_dir, *, workers: int = 1) -> dict:
    """Write the requested artifacts and ``manifest.json`` under ``out_dir``.

    Artifact files are byte-identical across runs of the same scenario; only
    the manifest's wall time differs.  Returns the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    p = s.params
    written = []

    if "classification" in s.outputs:
        write_json(out / "classification.json", classification_record(p))
        written.append("classification.json")

    if "path-bundle" in s.outputs:
        for i in range(s.n_paths):
            name = f"path_{i:04d}.csv"
            b = full_path(p, s.horizon, s.dt, s.seed(i), s.monitoring_for("path-bundle"), s.zero_tol)
            if p.sigma == 0.0:
                export_degenerate(b, out / name)
            else:
                export_bundle(b, out / name)
            written.append(name)

    if "identity-report" in s.outputs:
        if p.sigma == 0.0:
            raise DomainError("the identity report needs sigma > 0")
        reports = []
        for i in range(s.n_paths):
            b = simulate_path(p, s.horizon, s.dt, s.seed(i), zero_tol=s.zero_tol, drivers=False,
                              monitoring=s.monitoring_for("identity-report"))
            r = identity_suite(b, s.lt_epsilon)
            reports.append({"seed": s.seed(i).to_mapping(), "passed": r.passed, "checks": r.to_records()})
        write_json(out / "identity_report.json", {"epsilon": s.lt_epsilon, "paths": reports})
        written.append("identity_report.json")

    if "histogram" in s.outputs:
        smp = empirical_invariant(p, s.horizon, s.burn_in, s.dt, s.stride, s.seed(0), n_paths=s.n_paths,
                                  monitoring=s.monitoring_for("histogram"))
        export_histogram(smp, out / "histogram.csv")
        summary = smp.summary()
        try:
            dens = build_sum_exp_density(p)
            ks = marginal_ks(smp, dens)
            summary["closed_form"] = dens.moments()
            summary["ks_gap"], summary["ks_laggard"] = ks
        except DomainError as exc:
            summary["closed_form"] = None
            summary["closed_form_note"] = str(exc)
        write_json(out / "invariant_summary.json", summary)
        written += ["histogram.csv", "invariant_summary.json"]

    if "density-grid" in s.outputs:
        dens = closed_form_density(p)
        m = build_sum_exp_density(p).moments()
        export_density_grid(dens, out / "density_grid.csv", xi1_max=8.0 * (m["mean_gap"] + m["mean_laggard"]))
        written.append("density_grid.csv")

    if "corner-hit" in s.outputs:
        res = mc_corner_hit(s, workers=workers)
        write_json(out / "corner_hit.json", res.to_mapping())
        written.append("corner_hit.json")

    manifest = {
        "scenario": s.to_mapping(),
        "seeds": [s.seed(i).to_mapping() for i in range(s.n_paths)],
        "seed_rule": "path i uses numpy SeedSequence([base_seed, i]); children 0, 1, 2 feed increments, marks, bridge",
        "versions": _versions(),
        "artifacts": written,
        "wall_time_s": time.perf_counter() - t0,
    }
    write_json(out / "manifest.json", manifest)
    with open(out / "scenario.ini", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_scenario(s))
    return manifest
