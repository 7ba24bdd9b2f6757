"""Command-line entry point.

Every subcommand takes model parameters from flags, from ``--config`` (a
``[scenario]`` INI file), or both, with flags winning.  Results go to stdout as
JSON; errors go to stderr as one JSON object ``{code, module, message}``.  Exit
status is 0 on success, 1 for domain or configuration errors and 2 for
internal failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .errors import ConfigError, RankWedgeError
from .model import CONFIG_KEYS
from .scenario import (
    OUTPUTS,
    Scenario,
    classification_record,
    closed_form_density,
    load_scenario,
    mc_corner_hit,
    run_scenario,
    scenario_from_mapping,
)

_FLAG_KEYS = {
    "horizon": float,
    "dt": float,
    "burn_in": float,
    "n_paths": int,
    "base_seed": int,
    "zero_tol": float,
    "eps_corner": float,
    "lt_epsilon": float,
    "stride": float,
    "monitoring": str,
}


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors: JSON on stderr and exit status 1
    def error(self, message):
        raise ConfigError(message)


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", type=Path, help="INI file with a [scenario] section")
    for k in CONFIG_KEYS:
        sp.add_argument(f"--{k}", type=float)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--seed", dest="base_seed", type=int)
    sp.add_argument("--monitoring", choices=("auto", "grid", "bridge"))
    sp.add_argument("--zero-tol", dest="zero_tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rankwedge", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run a scenario and write its artifacts")
    _add_common(sp)
    sp.add_argument("--paths", dest="n_paths", type=int)
    sp.add_argument("--outputs", help=f"comma-separated subset of {','.join(OUTPUTS)}")
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("simulate", help="simulate one path and write its columns as CSV")
    _add_common(sp)
    sp.add_argument("--index", type=int, default=0, help="path index within the seed's batch")
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("classify", help="corner and recurrence classes")
    _add_common(sp)

    sp = sub.add_parser("density", help="closed-form invariant density")
    _add_common(sp)
    sp.add_argument("--at", nargs=2, type=float, metavar=("XI1", "XI2"), action="append", default=[])
    sp.add_argument("--grid", type=int, default=0, help="write an N x N grid to --out")
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("invariant", help="empirical invariant law from long runs")
    _add_common(sp)
    sp.add_argument("--burn-in", dest="burn_in", type=float)
    sp.add_argument("--stride", type=float)
    sp.add_argument("--paths", dest="n_paths", type=int)
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("mc-corner", help="Monte Carlo frequency of reaching the corner")
    _add_common(sp)
    sp.add_argument("--paths", dest="n_paths", type=int)
    sp.add_argument("--eps", dest="eps_corner", type=float)
    sp.add_argument("--horizons", type=float, nargs="+")
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("identity-check", help="local-time identities on simulated paths")
    _add_common(sp)
    sp.add_argument("--paths", dest="n_paths", type=int)
    sp.add_argument("--eps", dest="lt_epsilon", type=float)
    sp.add_argument("--out", type=Path, required=True)
    return ap


def scenario_from_args(args: argparse.Namespace, outputs: tuple[str, ...] | None = None) -> Scenario:
    data: dict = {}
    if args.config is not None:
        data.update(load_scenario(args.config).to_mapping())
        # the loaded scenario has both rho and sigma completed; let a flag for
        # either one re-complete the other
        if args.rho is not None or args.sigma is not None:
            data.pop("rho"), data.pop("sigma")
    for k in CONFIG_KEYS + tuple(_FLAG_KEYS):
        v = getattr(args, k, None)
        if v is not None:
            data[k] = v
    if getattr(args, "outputs", None):
        data["outputs"] = args.outputs
    elif outputs is not None:
        data["outputs"] = outputs
    missing = {"g", "h", "x1", "x2"} - set(data)
    if missing:
        raise ConfigError(f"missing parameters: {sorted(missing)} (give flags or --config)")
    return scenario_from_mapping(data)


def _print(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")


def _cmd_run(args) -> int:
    s = scenario_from_args(args)
    manifest = run_scenario(s, args.out, workers=args.workers)
    _print({"out": str(args.out), "artifacts": manifest["artifacts"]})
    return 0


def _cmd_simulate(args) -> int:
    from .degenerate import export_degenerate
    from .pathgen import export_bundle
    from .scenario import full_path

    s = scenario_from_args(args)
    seed = s.seed(args.index)
    b = full_path(s.params, s.horizon, s.dt, seed, s.monitoring_for("path-bundle"), s.zero_tol)
    (export_degenerate if s.params.sigma == 0.0 else export_bundle)(b, args.out)
    _print({"out": str(args.out), "seed": seed.to_mapping(), "rows": len(b.times)})
    return 0


def _cmd_classify(args) -> int:
    _print(classification_record(scenario_from_args(args).params))
    return 0


def _cmd_density(args) -> int:
    from .stationary import build_sum_exp_density, export_density_grid

    s = scenario_from_args(args)
    dens = closed_form_density(s.params)
    expansion = build_sum_exp_density(s.params)
    rec = {"ell": expansion.ell, "experimental": expansion.experimental, "moments": expansion.moments()}
    rec["values"] = [{"xi1": a, "xi2": b, "p": float(dens(a, b))} for a, b in args.at]
    if args.grid:
        if args.out is None:
            raise ConfigError("--grid needs --out")
        m = rec["moments"]
        export_density_grid(dens, args.out, 8.0 * (m["mean_gap"] + m["mean_laggard"]), args.grid)
        rec["out"] = str(args.out)
    _print(rec)
    return 0


def _cmd_invariant(args) -> int:
    s = scenario_from_args(args, outputs=("histogram",))
    run_scenario(s, args.out)
    with open(Path(args.out) / "invariant_summary.json", encoding="utf-8") as fh:
        _print(json.load(fh))
    return 0


def _cmd_mc_corner(args) -> int:
    s = scenario_from_args(args, outputs=("corner-hit",))
    res = mc_corner_hit(s, args.horizons, workers=args.workers)
    _print(res.to_mapping() | {"seeds": {"base_seed": s.base_seed, "n_paths": s.n_paths}})
    return 0


def _cmd_identity(args) -> int:
    s = scenario_from_args(args, outputs=("identity-report",))
    run_scenario(s, args.out)
    with open(Path(args.out) / "identity_report.json", encoding="utf-8") as fh:
        rep = json.load(fh)
    _print({"epsilon": rep["epsilon"], "passed": [r["passed"] for r in rep["paths"]]})
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "simulate": _cmd_simulate,
    "classify": _cmd_classify,
    "density": _cmd_density,
    "invariant": _cmd_invariant,
    "mc-corner": _cmd_mc_corner,
    "identity-check": _cmd_identity,
}


def _raising_module(exc: BaseException) -> str:
    tb = exc.__traceback__
    module = "rankwedge"
    while tb is not None:
        g = tb.tb_frame.f_globals
        # under ``python -m`` the module is ``__main__``; its spec keeps the real name
        spec = g.get("__spec__")
        name = spec.name if spec is not None else g.get("__name__", "")
        if name.startswith("rankwedge"):
            module = name
        tb = tb.tb_next
    return module.rpartition(".")[2] if "." in module else module


def error_record(exc: BaseException) -> dict:
    code = exc.code if isinstance(exc, RankWedgeError) else "internal"
    return {"code": code, "module": _raising_module(exc), "message": str(exc)}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except RankWedgeError as exc:
        json.dump(error_record(exc), sys.stderr)
        sys.stderr.write("\n")
        return exc.exit_status
    except Exception as exc:  # noqa: BLE001 - reported as an internal failure
        rec = error_record(exc)
        rec["traceback"] = traceback.format_exc()
        json.dump(rec, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
