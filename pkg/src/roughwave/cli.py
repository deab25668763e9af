"""Command-line front end: ``roughwave {noise,solve,skeleton,rate,ldp-sweep,verify}``.

Every command resolves its configuration as flags > ``--config`` JSON > defaults,
writes its outputs into ``--out`` and leaves a ``<command>_manifest.json`` next to them.
Exit codes: 0 success, 1 verification failure, 2 configuration error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field
import datetime as _dt
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .fileio import file_sha256, read_array, write_array, write_csv, write_field
from .fracspace import Grid, HurstParam, fourier_resolution
from .noise import METHODS, NoiseSpec, sample_noise
from .skeleton import Control, PicardNonConvergence, bump_control, solve_skeleton
from .swe import (InitialData, NumericFailure, bump_data, damped_sigma, linear_sigma,
                  solve_swe, table_sigma)

log = logging.getLogger("roughwave")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "H": None, "L": 3.0, "nx": 64, "T": 1.0, "nt": 64, "seed": 0, "replicate": 0,
    "method": "exact_cholesky", "eps": 0.0, "sigma": "linear", "sigma_c": 1.0,
    "u0": "bump", "v0": "zero", "bump_amp": 1.0, "bump_radius": 1.0,
    "g": "zero", "eps_mollify": 0.0, "tol": 1e-8, "max_iter": 60,
    "event_kind": "terminal_point_level", "x_star": 0.0, "level": None, "offset": 0.5,
    "nc_t": 8, "nc_x": 8, "eps_ladder": [0.5, 0.2, 0.1, 0.05], "n_samples": 20000,
    "energy": None, "csv": False, "jobs": None,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    tool_version: str
    command: str
    config: dict
    seeds: dict
    inputs: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)
    status: str = "ok"
    extra: dict = field(default_factory=dict)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# argument parsing

def _grid_flags(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--H", type=float, default=S, help="Hurst index in (1/4, 1/2)")
    p.add_argument("--L", type=float, default=S, help="half-width of the spatial domain")
    p.add_argument("--nx", type=int, default=S)
    p.add_argument("--T", type=float, default=S)
    p.add_argument("--nt", type=int, default=S)
    p.add_argument("--seed", type=int, default=S, help="overridden by $RWLD_SEED when set")
    p.add_argument("--config", type=str, default=None, help="JSON config or a previous run manifest")
    p.add_argument("--out", type=str, default=".", help="output directory")
    p.add_argument("--jobs", type=int, default=S, help="worker processes for Monte-Carlo sweeps")


def _model_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--sigma", type=str, default=S, help="linear | damped | table:FILE")
    p.add_argument("--sigma-c", dest="sigma_c", type=float, default=S)
    p.add_argument("--u0", type=str, default=S, help="zero | bump | table:FILE")
    p.add_argument("--v0", type=str, default=S, help="zero | bump | table:FILE")
    p.add_argument("--bump-amp", dest="bump_amp", type=float, default=S)
    p.add_argument("--bump-radius", dest="bump_radius", type=float, default=S)


def _event_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--event-kind", dest="event_kind", choices=("terminal_point_level", "sup_level"),
                   default=S)
    p.add_argument("--x-star", dest="x_star", type=float, default=S)
    p.add_argument("--level", type=float, default=S, help="absolute level a")
    p.add_argument("--offset", type=float, default=S, help="level as I0(T, x*) + offset")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    ap = argparse.ArgumentParser(prog="roughwave", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noise", help="sample one noise field")
    _grid_flags(p)
    p.add_argument("--method", choices=METHODS, default=S)
    p.add_argument("--replicate", type=int, default=S)

    p = sub.add_parser("solve", help="solve the stochastic wave equation for one replica")
    _grid_flags(p)
    _model_flags(p)
    p.add_argument("--eps", type=float, default=S)
    p.add_argument("--method", choices=METHODS, default=S)
    p.add_argument("--replicate", type=int, default=S)
    p.add_argument("--csv", action="store_true", default=S)

    p = sub.add_parser("skeleton", help="solve the skeleton equation by Picard iteration")
    _grid_flags(p)
    _model_flags(p)
    p.add_argument("--g", type=str, default=S, help="zero | bump-energy:E | FILE")
    p.add_argument("--eps-mollify", dest="eps_mollify", type=float, default=S)
    p.add_argument("--tol", type=float, default=S)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    p.add_argument("--trace-out", dest="trace_out", type=str, default="skeleton_trace.csv")
    p.add_argument("--csv", action="store_true", default=S)

    p = sub.add_parser("rate", help="minimise control energy for an event")
    _grid_flags(p)
    _model_flags(p)
    _event_flags(p)
    p.add_argument("--nc-t", dest="nc_t", type=int, default=S)
    p.add_argument("--nc-x", dest="nc_x", type=int, default=S)

    p = sub.add_parser("ldp-sweep", help="Monte-Carlo tail estimates along an eps ladder")
    _grid_flags(p)
    _model_flags(p)
    _event_flags(p)
    p.add_argument("--eps-ladder", dest="eps_ladder", type=float, nargs="+", default=S)
    p.add_argument("--n-samples", dest="n_samples", type=int, default=S)
    p.add_argument("--energy", type=float, default=S,
                   help="reference energy; computed with `rate` settings when omitted")
    p.add_argument("--nc-t", dest="nc_t", type=int, default=S)
    p.add_argument("--nc-x", dest="nc_x", type=int, default=S)

    p = sub.add_parser("verify", help="run the property suite and print a pass/fail table")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--only", type=int, nargs="+", default=None, help="criterion numbers")
    p.add_argument("--include-ldp", dest="include_ldp", action="store_true",
                   help="also run the (slow) LDP trend sweep")
    return ap


def resolve_config(ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(ns, "config", None):
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read --config {ns.config}: {e}") from e
        if "config" in loaded and "tool_version" in loaded:
            loaded = loaded["config"]
        unknown = set(loaded) - set(DEFAULTS) - {"trace_out"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    skip = {"command", "config", "out", "verbose", "quick", "only", "include_ldp"}
    cfg.update({k: v for k, v in vars(ns).items() if k not in skip})
    if os.environ.get("RWLD_SEED"):
        try:
            cfg["seed"] = int(os.environ["RWLD_SEED"])
        except ValueError as e:
            raise ConfigError("RWLD_SEED must be an integer") from e
    if cfg["H"] is None:
        raise ConfigError("missing required flag --H (Hurst index in (1/4, 1/2))")
    if cfg["jobs"] is None:
        cfg["jobs"] = os.cpu_count() or 1
    return cfg


# ---------------------------------------------------------------------------
# model construction from a resolved config

def _grid(cfg) -> Grid:
    return Grid(cfg["L"], cfg["nx"], cfg["T"], cfg["nt"])


def _read_table(spec: str, inputs: dict) -> tuple[np.ndarray, np.ndarray]:
    path = Path(spec.split(":", 1)[1])
    if not path.is_file():
        raise ConfigError(f"table file not found: {path}")
    arr = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if arr.shape[1] != 2:
        raise ConfigError(f"{path}: expected two columns (point, value)")
    inputs[str(path)] = file_sha256(path)
    return arr[:, 0], arr[:, 1]


def _sigma(cfg, inputs):
    s = cfg["sigma"]
    if s == "linear":
        return linear_sigma(cfg["sigma_c"])
    if s == "damped":
        return damped_sigma(cfg["sigma_c"])
    if s.startswith("table:"):
        return table_sigma(*_read_table(s, inputs))
    raise ConfigError(f"--sigma must be linear, damped or table:FILE (got {s!r})")


def _profile(which: str, cfg, inputs):
    if which == "zero":
        return (lambda x: np.zeros_like(np.asarray(x, float))), 0.0
    if which == "bump":
        amp, rad = cfg["bump_amp"], cfg["bump_radius"]
        d = bump_data(amp, rad)
        return d.u0, rad
    if which.startswith("table:"):
        xs, vs = _read_table(which, inputs)
        nz = np.nonzero(vs)[0]
        rad = float(np.abs(xs[nz]).max()) if nz.size else 0.0
        return (lambda x: np.interp(x, xs, vs, left=0.0, right=0.0)), rad
    raise ConfigError(f"initial profile must be zero, bump or table:FILE (got {which!r})")


def _data(cfg, inputs) -> InitialData:
    u0, r0 = _profile(cfg["u0"], cfg, inputs)
    v0, r1 = _profile(cfg["v0"], cfg, inputs)
    return InitialData(u0, v0, 1.0, max(r0, r1), f"{cfg['u0']}/{cfg['v0']}", {})


def _control(cfg, grid, hp, inputs) -> Control:
    g = cfg["g"]
    if g == "zero":
        return Control.zero(grid)
    if g.startswith("bump-energy:"):
        return bump_control(grid, hp, float(g.split(":", 1)[1]))
    path = Path(g)
    if not path.is_file():
        raise ConfigError(f"--g must be zero, bump-energy:E or an existing file (got {g!r})")
    arr, ggrid, _ = read_array(path)
    if ggrid != grid:
        raise ConfigError(f"control file grid {ggrid} does not match {grid}")
    inputs[str(path)] = file_sha256(path)
    return Control(arr, grid)


def _event(cfg, data, grid):
    from .ldp import EventSpec
    from .swe import initial_term_I0
    level = cfg["level"]
    if level is None:
        I0 = initial_term_I0(data, grid)
        level = float(I0.values[-1, grid.node(cfg["x_star"])]) + cfg["offset"]
    return EventSpec(cfg["event_kind"], cfg["x_star"], level)


# ---------------------------------------------------------------------------
# commands

class _Run:
    """Collects outputs and writes the manifest, also on failure."""

    def __init__(self, command, cfg, out: Path):
        self.out = out
        self.m = RunManifest(__version__, command, cfg,
                             {"seed": cfg.get("seed"), "replicate": cfg.get("replicate")},
                             started=_now())

    def path(self, name: str) -> Path:
        p = self.out / Path(name).name
        self.m.outputs.append(p.name)
        return p

    def finish(self, status="ok"):
        self.m.status = status
        self.m.finished = _now()
        mp = self.out / f"{self.m.command.replace('-', '_')}_manifest.json"
        mp.write_text(json.dumps(asdict(self.m), indent=2, sort_keys=True, default=_jsonable))
        return mp


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def cmd_noise(cfg, run: _Run):
    grid, hp = _grid(cfg), HurstParam(cfg["H"])
    spec = NoiseSpec(hp, grid, cfg["seed"], cfg["method"])
    nf = sample_noise(spec, cfg["replicate"])
    write_array(run.path("noise.rwld"), nf.dW, grid, "noise")
    run.path("noise_spec.json").write_text(spec.to_json())


def cmd_solve(cfg, run: _Run):
    grid, hp = _grid(cfg), HurstParam(cfg["H"])
    data, sigma = _data(cfg, run.m.inputs), _sigma(cfg, run.m.inputs)
    grid.check_light_cone(data.support_radius)
    dW = sample_noise(NoiseSpec(hp, grid, cfg["seed"], cfg["method"]), cfg["replicate"])
    res = solve_swe(data, sigma, cfg["eps"], dW, grid, hp)
    run.m.extra["scheme"] = res.scheme_meta
    write_field(run.path("solve.rwld"), res.u)
    if cfg["csv"]:
        write_csv(run.path("solve.csv"), res.u.values, grid)


def cmd_skeleton(cfg, run: _Run):
    grid, hp = _grid(cfg), HurstParam(cfg["H"])
    data, sigma = _data(cfg, run.m.inputs), _sigma(cfg, run.m.inputs)
    grid.check_light_cone(data.support_radius)
    g = _control(cfg, grid, hp, run.m.inputs)
    run.m.extra["control_energy"] = g.energy(hp)
    if cfg["eps_mollify"] > 0:
        run.m.extra["fourier_resolution"] = fourier_resolution(grid, eps=cfg["eps_mollify"])
    try:
        u, tr = solve_skeleton(data, sigma, g, hp, grid, cfg["eps_mollify"], cfg["tol"],
                               cfg["max_iter"])
    except PicardNonConvergence as e:
        _write_trace(run, cfg, e.trace)
        raise
    _write_trace(run, cfg, tr)
    run.m.extra["iterations"] = len(tr)
    write_field(run.path("skeleton.rwld"), u)
    if cfg["csv"]:
        write_csv(run.path("skeleton.csv"), u.values, grid)


def _write_trace(run, cfg, tr):
    p = run.path(cfg.get("trace_out") or "skeleton_trace.csv")
    rows = ["iteration,d_l2,d_s2,distance"]
    rows += [f"{i + 1},{a!r},{b!r},{a + b!r}" for i, (a, b) in enumerate(zip(tr.d_l2, tr.d_s2))]
    p.write_text("\n".join(rows) + "\n")


def _rate(cfg, grid, hp, data, sigma):
    from .ldp import OptConfig, rate_minimize
    ev = _event(cfg, data, grid)
    return ev, rate_minimize(ev, data, sigma, hp, grid, OptConfig(cfg["nc_t"], cfg["nc_x"]))


def cmd_rate(cfg, run: _Run):
    grid, hp = _grid(cfg), HurstParam(cfg["H"])
    data, sigma = _data(cfg, run.m.inputs), _sigma(cfg, run.m.inputs)
    grid.check_light_cone(data.support_radius)
    ev, res = _rate(cfg, grid, hp, data, sigma)
    gp = run.path("g_star.rwld")
    write_array(gp, res.g_star.g, grid, "control")
    out = {"event": ev.to_dict(), "energy": res.energy if res.feasible else "inf",
           "g_star_file": gp.name, "constraint_residual": res.constraint_residual,
           "feasible": res.feasible, "trace": res.trace}
    run.path("rate.json").write_text(json.dumps(out, indent=2, default=_jsonable))
    if not res.feasible:
        raise NumericFailure("rate minimisation did not reach a feasible control")


def cmd_ldp_sweep(cfg, run: _Run):
    from .ldp import mc_tail
    grid, hp = _grid(cfg), HurstParam(cfg["H"])
    data, sigma = _data(cfg, run.m.inputs), _sigma(cfg, run.m.inputs)
    grid.check_light_cone(data.support_radius)
    ev = _event(cfg, data, grid)
    energy = cfg["energy"]
    if energy is None:
        energy = _rate(cfg, grid, hp, data, sigma)[1].energy
    tail = mc_tail(ev, data, sigma, hp, grid, cfg["eps_ladder"], cfg["n_samples"], cfg["seed"],
                   jobs=cfg["jobs"])
    rows = tail.rows()
    run.path("ldp_sweep.json").write_text(json.dumps(
        {"event": ev.to_dict(), "energy": energy, "ladder": rows}, indent=2, default=_jsonable))
    lines = ["eps,n,hits,p_hat,se,r_hat,zero_hit,energy"]
    lines += [f"{r['eps']!r},{r['n']},{r['hits']},{r['p_hat']!r},{r['se']!r},{r['r_hat']!r},"
              f"{int(r['zero_hit'])},{energy!r}" for r in rows]
    run.path("ldp_sweep.csv").write_text("\n".join(lines) + "\n")
    run.path("ldp_sweep_figure.txt").write_text(
        "Intended figure: r_hat (column r_hat) against eps (column eps, log scale, decreasing to\n"
        "the right) from ldp_sweep.csv, error bars eps*se/p_hat, zero-hit rows drawn hollow,\n"
        "with a horizontal line at the rate-minimisation energy (column energy).\n")


def cmd_verify(ns) -> int:
    from .checks import CHECKS, PROPERTY_ROWS
    keys = ns.only or (tuple(CHECKS) if ns.include_ldp else PROPERTY_ROWS)
    bad = [k for k in keys if k not in CHECKS]
    if bad:
        print(f"unknown criterion numbers: {bad}", file=sys.stderr)
        return EXIT_CONFIG
    print("criterion,name,measured,tolerance,passed,seconds")
    ok = True
    for k in keys:
        r = CHECKS[k](ns.quick)
        ok &= r.passed
        print(f"{r.key},{r.name},{r.measured:.6g},{r.tolerance:.6g},{'PASS' if r.passed else 'FAIL'},"
              f"{r.seconds:.2f}", flush=True)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"noise": cmd_noise, "solve": cmd_solve, "skeleton": cmd_skeleton,
            "rate": cmd_rate, "ldp-sweep": cmd_ldp_sweep}


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if ns.command == "verify":
        return cmd_verify(ns)
    try:
        cfg = resolve_config(ns)
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as e:
        ap.print_usage(sys.stderr)
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    run = _Run(ns.command, cfg, out)
    try:
        COMMANDS[ns.command](cfg, run)
    except (NumericFailure, PicardNonConvergence, FloatingPointError) as e:
        run.finish("numeric_failure")
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError) as e:
        run.finish("config_error")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    mp = run.finish()
    log.info("wrote %s", mp)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
