"""Command line front end.

    twoch transform   | evolve | predict | vectorfield | diagnose
          [--config FILE] [--out DIR] [--<key> VALUE ...]

Settings come from a flat ``key = value`` file; any key can be overridden by
the flag of the same name (underscores become dashes).  Every run writes
``manifest.json`` to the output directory before its results.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import inspect
import json
import platform
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, get_type_hints

import numpy as np

from . import __version__
from .breaking import (
    BreakingKind,
    classify_grid,
    energy_constant,
    vectorfield_grid,
)
from .coords import EulerianState, GridError, InvalidStateError, LagrangianState, label_grid, to_eulerian, to_lagrangian
from .evolution import EvolveConfig, NumericalAbort, StepRejected, evolve
from .kernel import eval_P
from .presets import DEFAULT_NX, PROFILES, PresetSpec, build

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
PRESET_PARAMS = ("amplitude", "width", "envelope", "slope_ratio", "delta", "c")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # initial data
    preset: str = "gaussian"
    amplitude: float | None = None
    width: float | None = None
    envelope: float | None = None
    slope_ratio: float | None = None
    delta: float | None = None
    c: float | None = None
    nx: int = DEFAULT_NX
    half_width: float | None = None
    rho: float = 0.0
    rho_half_width: float | None = None
    atom_mass: float = 0.0
    atom_pos: float = 0.0
    state_in: str | None = None
    # label grid
    n: int = 2048
    margin: float = 0.0
    # time stepping
    dt: float = 1e-3
    t_end: float = 1.0
    diag_every: int = 10
    breaking_eps: float | None = None
    snapshot_times: tuple[float, ...] = ()
    # characteristic phase plane
    forcing: float = 0.0
    alpha_min: float = -6.0
    alpha_max: float = 6.0
    beta_min: float = -6.0
    beta_max: float = 6.0
    lattice_n: int = 21
    # prediction
    predict_points: int = 201
    out_dir: str = "out"


_HINTS = get_type_hints(RunConfig)


def _convert(key: str, raw: str) -> Any:
    hint = _HINTS[key]
    text = raw.strip()
    try:
        if hint in (str, str | None):
            return None if text.lower() in ("", "none") and hint != str else text
        if text.lower() == "none":
            if type(None) not in getattr(hint, "__args__", ()):
                raise ConfigError(f"{key} may not be none")
            return None
        if hint in (int,):
            return int(text)
        if hint in (float, float | None):
            return float(text)
        if hint == tuple[float, ...]:
            return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unsupported key type for {key}")


def read_config_file(path: str) -> dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        text = Path(path).read_text()
        parser.read_string("[run]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return dict(parser["run"])


def make_config(file_values: dict[str, str], overrides: dict[str, str]) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    values: dict[str, Any] = {}
    for src in (file_values, overrides):
        for k, v in src.items():
            if k not in names:
                raise ConfigError(f"unknown config key {k!r}")
            values[k] = _convert(k, v)
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.preset not in PROFILES:
        raise ConfigError(f"unknown preset {cfg.preset!r}; choose from {sorted(PROFILES)}")
    accepted = set(inspect.signature(PROFILES[cfg.preset]).parameters)
    if cfg.preset == "atom":
        accepted |= {"c"}
    for p in PRESET_PARAMS:
        if getattr(cfg, p) is not None and p not in accepted:
            raise ConfigError(f"preset {cfg.preset!r} takes no parameter {p!r}")
    if cfg.n < 4 or cfg.nx < 4:
        raise ConfigError("n and nx must be >= 4")
    if not cfg.dt > 0:
        raise ConfigError("dt must be positive")
    if cfg.diag_every < 1 or cfg.lattice_n < 2 or cfg.predict_points < 1:
        raise ConfigError("diag_every >= 1, lattice_n >= 2, predict_points >= 1 required")
    if not (cfg.alpha_min < cfg.alpha_max and cfg.beta_min < cfg.beta_max):
        raise ConfigError("alpha and beta ranges must be increasing")
    if cfg.atom_mass < 0:
        raise ConfigError("atom_mass must be >= 0")


def eulerian_from_config(cfg: RunConfig) -> EulerianState:
    params = {p: getattr(cfg, p) for p in PRESET_PARAMS if getattr(cfg, p) is not None}
    spec = PresetSpec(cfg.preset, params, cfg.nx, cfg.half_width, cfg.rho,
                      cfg.rho_half_width, cfg.atom_mass, cfg.atom_pos)
    return build(spec)


def lagrangian_from_config(cfg: RunConfig) -> tuple[LagrangianState, EulerianState | None]:
    if cfg.state_in:
        try:
            data = json.loads(Path(cfg.state_in).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read state {cfg.state_in}: {exc}") from exc
        data = data.get("state", data)
        try:
            X = LagrangianState.from_dict(data)
            X.validate()
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid state in {cfg.state_in}: {exc}") from exc
        return X, None
    e = eulerian_from_config(cfg)
    return to_lagrangian(e, label_grid(e, cfg.n, cfg.margin)), e


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def write_manifest(out: Path, command: str, cfg: RunConfig, derived: dict) -> None:
    import numba
    import scipy
    manifest = {
        "command": command,
        "config": dataclasses.asdict(cfg),
        "derived": derived,
        "versions": {"twoch": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__, "python": platform.python_version()},
    }
    _dump(out / "manifest.json", manifest)


def _derived(X: LagrangianState | None, e: EulerianState | None) -> dict:
    d = {}
    if e is not None:
        d["C"] = energy_constant(e)
        d["E0_eulerian"] = e.energy()
    if X is not None:
        d["E0"] = X.energy()
        d["C"] = d.get("C", 2.0 * X.energy())
        d["label_grid"] = {"n": X.n, "xi_min": float(X.xi[0]), "xi_max": float(X.xi[-1]), "dxi": X.dxi}
    if e is not None:
        d["eulerian_grid"] = {"nx": int(e.x_grid.size), "x_min": float(e.x_grid[0]),
                              "x_max": float(e.x_grid[-1])}
    return d


def roundtrip_report(e: EulerianState, X: LagrangianState) -> dict:
    back = to_eulerian(X)
    xs = back.x_grid
    pts = back.mu.grid
    err = np.abs(back.mu.cdf(pts) - e.mu.cdf(pts))
    for p in e.mu.atom_positions:
        err[np.abs(pts - p) <= 1e-9 * max(1.0, abs(p))] = 0.0
    atoms_in, atoms_out = list(e.mu.atoms), list(back.mu.atoms)
    atom_err = None
    if len(atoms_in) == len(atoms_out):
        atom_err = max((abs(a[1] - b[1]) for a, b in zip(atoms_in, atoms_out)), default=0.0)
    return {
        "u_sup_error": float(np.max(np.abs(back.u - e.u_at(xs)))),
        "rho_sup_error": float(np.max(np.abs(back.rho - e.rho_at(xs)))),
        "cdf_sup_error": float(np.max(err)),
        "atom_count": [len(atoms_in), len(atoms_out)],
        "atom_mass_error": atom_err,
        "energy_lagrangian": X.energy(),
        "energy_eulerian": e.energy(),
        "constraint_residual": X.constraint_residual(),
    }


def cmd_transform(cfg: RunConfig, out: Path) -> int:
    X, e = lagrangian_from_config(cfg)
    write_manifest(out, "transform", cfg, _derived(X, e))
    _dump(out / "lagrangian.json", X.to_dict())
    if e is not None:
        _dump(out / "roundtrip.json", roundtrip_report(e, X))
    else:
        _dump(out / "eulerian.json", to_eulerian(X).to_dict())
    return EXIT_OK


def cmd_evolve(cfg: RunConfig, out: Path) -> int:
    X, e = lagrangian_from_config(cfg)
    write_manifest(out, "evolve", cfg, _derived(X, e))
    ecfg = EvolveConfig(dt=cfg.dt, t_end=cfg.t_end, diag_every=cfg.diag_every,
                        breaking_eps=cfg.breaking_eps, snapshot_times=cfg.snapshot_times)
    cols = ["t", "E", "min_yxi", "constraint_residual", "breaking_count", "max_abs_forcing"]
    last = [0.0, X]

    def keep(t, Y):
        last[:] = [t, Y]

    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        try:
            res = evolve(X, ecfg, on_step=keep,
                         sink=lambda d: writer.writerow({k: repr(v) if isinstance(v, float) else v
                                                         for k, v in d.row().items()}))
        except (StepRejected, NumericalAbort) as exc:
            _dump(out / "abort.json", {"reason": str(exc), "t": last[0], "state": last[1].to_dict()})
            raise
    snaps = [{"t": t, "state": s.to_dict()} for t, s in sorted(res.snapshots.items())]
    _dump(out / "snapshots.json", snaps)
    first = res.first_breaking()
    report = {"first_breaking_time": None, "node": None, "xi": None, "x": None,
              "nodes_broken": int(np.sum(np.isfinite(res.breaking_times)))}
    if first is not None:
        t, i = first
        report.update(first_breaking_time=t, node=i, xi=float(X.xi[i]), x=float(X.y[i]))
    _dump(out / "breaking.json", report)
    _dump(out / "final_state.json", {"t": cfg.t_end, "state": res.final.to_dict()})
    return EXIT_OK


def cmd_predict(cfg: RunConfig, out: Path) -> int:
    e = eulerian_from_config(cfg)
    write_manifest(out, "predict", cfg, _derived(None, e))
    xs = np.linspace(e.x_grid[0], e.x_grid[-1], cfg.predict_points)
    verdicts = classify_grid(e, xs)
    _dump(out / "verdicts.json", [v.to_dict() for v in verdicts])
    counts = {k.value: 0 for k in BreakingKind}
    for v in verdicts:
        counts[v.kind.value] += 1
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "count"])
        for k, c in counts.items():
            w.writerow([k, c])
    return EXIT_OK


def cmd_vectorfield(cfg: RunConfig, out: Path) -> int:
    write_manifest(out, "vectorfield", cfg, {"forcing": cfg.forcing})
    rows = vectorfield_grid(cfg.forcing, (cfg.alpha_min, cfg.alpha_max),
                            (cfg.beta_min, cfg.beta_max), cfg.lattice_n)
    with open(out / "vectorfield.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "beta", "alpha_t", "beta_t"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, out: Path) -> int:
    X, e = lagrangian_from_config(cfg)
    write_manifest(out, "diagnose", cfg, _derived(X, e))
    P = eval_P(X)
    E = X.energy()
    eps = cfg.breaking_eps if cfg.breaking_eps is not None else 1e-6 * float(np.median(X.yxi))
    ident = X.y + X.H() - (X.xi - X.xi[0]) - X.y[0]
    report = {
        "energy": E,
        "constraint_residual": X.constraint_residual(),
        "min_yxi": float(np.min(X.yxi)),
        "breaking_count": int(np.sum(X.yxi < eps)),
        "max_abs_forcing": float(np.max(np.abs(X.U ** 2 - P))),
        "max_P": float(np.max(P)),
        "P_bound_ok": bool(np.max(P) <= 0.5 * E * (1 + 1e-6)),
        "labelling_defect": float(np.max(np.abs(ident))),
        "invariant_violations": X.invariant_violations(),
    }
    _dump(out / "diagnostics.json", report)
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "transform": cmd_transform,
    "evolve": cmd_evolve,
    "predict": cmd_predict,
    "vectorfield": cmd_vectorfield,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twoch", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value settings file")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    for f in fields(RunConfig):
        ap.add_argument("--" + f.name.replace("_", "-"), dest="set_" + f.name, metavar="VALUE")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("set_") and v is not None}
        if args.out:
            overrides["out_dir"] = args.out
        cfg = make_config(file_values, overrides)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, GridError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepRejected, NumericalAbort, InvalidStateError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
