"""Command-line entry point.

Subcommands map to the standard simulation workflows: steady (unconditional
steady state), trajectory (one seeded jump record), conditional (post
detection statistics and the fidelity table), sweep (two-parameter steady
state maps), and compare-models (full versus eliminated generator).

Configuration is a flat key=value file with # comments, overridable with
repeatable --set flags. CSV output is UTF-8 with LF line endings, a leading
"# schema=..." line, and floats at 17 significant digits so values
round-trip exactly. Exit codes: 0 ok, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import analyze, evolve, jumps
from .errors import ConfigError, NumericalError
from .qops import HilbertSpec
from .scheme import SchemeParams, build_eliminated_generator, build_full_generator


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; defaults follow the reference parameter set."""

    model: str = "eliminated"
    omega: float = 26e3
    omega_r: float = 20e3
    omega_rp: float = 1e6
    gamma_s: float = 1.0
    gamma_sp: float = 1e8
    h_r: float = 0.0
    xi: float = 0.1
    n_motional: int = 20
    dt: float = 0.0  # 0 means the stability-based default
    t_max: float = 0.1
    seed: int = 1234
    ensemble_size: int = 500
    initial: str = "gg"
    threads: int = 1
    out: str = "out"
    slope_threshold: float = 1e-3
    slope_window: float = 1e-3
    t_window: float = 0.03
    table1_h_r: tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    table1_xi: tuple[float, ...] = (0.0, 0.01, 0.03, 0.10)
    conditional_method: str = "deterministic"
    sweep_axis1: str = ""
    sweep_axis2: str = ""
    fit: bool = False

    def scheme_params(self) -> SchemeParams:
        return SchemeParams(
            omega=self.omega,
            omega_r=self.omega_r,
            omega_rp=self.omega_rp,
            gamma_s=self.gamma_s,
            gamma_sp=self.gamma_sp,
            h_r=self.h_r,
            xi=self.xi,
        )

    def hilbert_spec(self) -> HilbertSpec:
        levels = {"eliminated": 2, "full": 3}.get(self.model)
        if levels is None:
            raise ConfigError(f"model must be 'eliminated' or 'full', got {self.model!r}")
        return HilbertSpec(internal_levels=levels, n_motional=self.n_motional)

    def generator(self):
        build = build_eliminated_generator if self.model == "eliminated" else build_full_generator
        return build(self.scheme_params(), self.hilbert_spec())

    def initial_density(self) -> evolve.DensityState:
        return evolve.initial_state(self.hilbert_spec(), self.initial)

    def timestep(self) -> float | None:
        return self.dt if self.dt > 0 else None

    def criteria(self) -> evolve.SteadyStateCriteria:
        return evolve.SteadyStateCriteria(
            slope_threshold=self.slope_threshold,
            window=self.slope_window,
            t_cap=self.t_max,
        )


_PARSERS = {
    str: str,
    float: float,
    int: int,
    bool: _parse_bool,
    tuple[float, ...]: _parse_float_list,
}
_FIELD_TYPES = {
    "model": str, "omega": float, "omega_r": float, "omega_rp": float,
    "gamma_s": float, "gamma_sp": float, "h_r": float, "xi": float,
    "n_motional": int, "dt": float, "t_max": float, "seed": int,
    "ensemble_size": int, "initial": str, "threads": int, "out": str,
    "slope_threshold": float, "slope_window": float, "t_window": float,
    "table1_h_r": tuple[float, ...], "table1_xi": tuple[float, ...],
    "conditional_method": str,
    "sweep_axis1": str, "sweep_axis2": str, "fit": bool,
}
assert set(_FIELD_TYPES) == {f.name for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat key=value lines; unknown keys are rejected by name."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _PARSERS[_FIELD_TYPES[key]](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    for item in args.set or []:
        values.update(parse_config_text(item, "--set"))
    if args.out is not None:
        values["out"] = args.out
    if args.threads is not None:
        values["threads"] = args.threads
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        cfg = RunConfig(**values)
        cfg.scheme_params()  # validate ranges early
        cfg.hilbert_spec()
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def write_csv(path: Path, schema: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema={schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else _fmt(cell) for cell in row])


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _params_dict(cfg: RunConfig) -> dict:
    return {
        "model": cfg.model,
        "omega": cfg.omega,
        "omega_r": cfg.omega_r,
        "omega_rp": cfg.omega_rp,
        "gamma_s": cfg.gamma_s,
        "gamma_sp": cfg.gamma_sp,
        "h_r": cfg.h_r,
        "xi": cfg.xi,
        "n_motional": cfg.n_motional,
        "initial": cfg.initial,
        "seed": cfg.seed,
    }


def _series_rows(series: evolve.TimeSeries):
    for i in range(len(series.times)):
        yield (
            series.times[i],
            series.fidelity[i],
            1.0 - series.fidelity[i],
            series.trace[i],
            series.mean_phonon[i],
            series.top_level_population[i],
        )


_SERIES_HEADER = ["t", "fidelity", "error", "trace", "mean_phonon", "top_level_population"]


def cmd_steady(cfg: RunConfig, out: Path) -> None:
    t0 = time.perf_counter()
    res = evolve.steady_state(
        cfg.generator(), cfg.initial_density(), criteria=cfg.criteria(), dt=cfg.timestep()
    )
    wall = time.perf_counter() - t0
    write_csv(out / "timeseries.csv", "timeseries.v1", _SERIES_HEADER, _series_rows(res.series))
    write_json(out / "summary.json", {
        "schema": "summary.v1",
        "command": "steady",
        "final_fidelity": res.series.fidelity[-1],
        "final_error": 1.0 - res.series.fidelity[-1],
        "converged": bool(res.converged),
        "truncation_valid": not res.series.truncation_violated,
        "t_final": res.series.times[-1],
        "wall_time_s": wall,
        "params": _params_dict(cfg),
    })


def cmd_trajectory(cfg: RunConfig, out: Path) -> None:
    t0 = time.perf_counter()
    record = jumps.run_trajectory(
        cfg.generator(), cfg.initial_density(), cfg.t_max, dt=cfg.timestep(), seed=cfg.seed
    )
    wall = time.perf_counter() - t0
    write_csv(out / "trajectory.csv", "trajectory.v1", _SERIES_HEADER, _series_rows(record.series))
    write_csv(
        out / "events.csv", "events.v1", ["t", "channel"],
        ((e.time, str(e.channel)) for e in record.events),
    )
    write_json(out / "summary.json", {
        "schema": "summary.v1",
        "command": "trajectory",
        "n_events": len(record.events),
        "final_fidelity": record.series.fidelity[-1],
        "wall_time_s": wall,
        "params": _params_dict(cfg),
    })


def cmd_conditional(cfg: RunConfig, out: Path) -> None:
    t0 = time.perf_counter()
    gen = cfg.generator()
    rho_ss = evolve.steady_state(
        gen, cfg.initial_density(), criteria=cfg.criteria(), dt=cfg.timestep()
    ).state
    cond = jumps.conditional_after_detection(
        gen, rho_ss, cfg.t_window, dt=cfg.timestep()
    )
    write_csv(
        out / "conditional.csv", "conditional.v1",
        ["t", "conditional_fidelity", "survival"],
        (
            (cond.series.times[i], cond.series.fidelity[i], cond.series.trace[i])
            for i in range(len(cond.series.times))
        ),
    )
    header = ["h_r"] + [
        "F_U" if xi == 0.0 else f"F_C_{xi:g}" for xi in cfg.table1_xi
    ]
    rows = []
    for h_r in cfg.table1_h_r:
        row = [h_r]
        base = replace(cfg, h_r=h_r)
        res = evolve.steady_state(
            base.generator(), base.initial_density(), criteria=base.criteria(),
            dt=base.timestep(),
        )
        f_u = analyze.fidelity(res.state)
        for xi in cfg.table1_xi:
            if xi == 0.0:
                row.append(f_u)
                continue
            gen_xi = replace(base, xi=xi).generator()
            cond_xi = jumps.conditional_after_detection(
                gen_xi, res.state, cfg.t_window, dt=base.timestep()
            )
            row.append(cond_xi.series.fidelity[-1])
        rows.append(row)
    write_csv(out / "table1.csv", "table1.v1", header, rows)
    summary = {
        "schema": "summary.v1",
        "command": "conditional",
        "conditional_asymptote": cond.series.fidelity[-1],
        "survival_final": cond.series.trace[-1],
        "params": _params_dict(cfg),
    }
    if cfg.conditional_method == "sampled":
        # trajectory-based cross-check of the deterministic asymptote
        records = jumps.run_ensemble(
            gen, cfg.initial_density(), cfg.t_max, cfg.ensemble_size,
            dt=cfg.timestep(), seed=cfg.seed, workers=cfg.threads,
        )
        mean, stderr = jumps.plateau_estimate(
            records, min_age=cfg.t_window / 2, t_start=cfg.t_window / 2
        )
        summary["sampled_asymptote"] = mean
        summary["sampled_stderr"] = stderr
    elif cfg.conditional_method != "deterministic":
        raise ConfigError(
            f"conditional_method must be 'deterministic' or 'sampled', got {cfg.conditional_method!r}"
        )
    summary["wall_time_s"] = time.perf_counter() - t0
    write_json(out / "summary.json", summary)


def _parse_axis(text: str, which: str) -> tuple[str, np.ndarray]:
    """Axis grammar: 'name=v1,v2,v3' or 'name=lin:start:stop:num' or
    'name=log:start:stop:num'."""
    if "=" not in text:
        raise ConfigError(f"{which}: expected name=values, got {text!r}")
    name, _, rest = text.partition("=")
    name = name.strip()
    rest = rest.strip()
    try:
        if rest.startswith(("lin:", "log:")):
            kind, lo, hi, num = rest.split(":")
            lo, hi, num = float(lo), float(hi), int(num)
            values = (
                np.linspace(lo, hi, num) if kind == "lin"
                else np.geomspace(lo, hi, num)
            )
        else:
            values = np.array(_parse_float_list(rest))
    except ValueError as exc:
        raise ConfigError(f"{which}: bad axis spec {text!r}: {exc}") from exc
    if len(values) == 0:
        raise ConfigError(f"{which}: empty axis {text!r}")
    if name not in analyze.SWEEPABLE_FIELDS:
        raise ConfigError(f"{which}: cannot sweep {name!r}; choose from {analyze.SWEEPABLE_FIELDS}")
    return name, values


def _sweep_cell_task(args):
    fixed, spec, overrides, criteria, dt = args
    return analyze.steady_error_cell(fixed, spec, overrides, criteria=criteria, dt=dt)


def cmd_sweep(cfg: RunConfig, out: Path) -> None:
    if not cfg.sweep_axis1 or not cfg.sweep_axis2:
        raise ConfigError("sweep needs sweep_axis1 and sweep_axis2 (name=v1,v2,... )")
    t0 = time.perf_counter()
    name1, vals1 = _parse_axis(cfg.sweep_axis1, "sweep_axis1")
    name2, vals2 = _parse_axis(cfg.sweep_axis2, "sweep_axis2")
    try:
        if cfg.threads > 1:
            # cells are independent; fan out but keep the row-major ordering
            tasks = [
                (cfg.scheme_params(), cfg.hilbert_spec(), {name1: v1, name2: v2},
                 cfg.criteria(), cfg.timestep())
                for v1 in vals1 for v2 in vals2
            ]
            with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
                cells = list(pool.map(_sweep_cell_task, tasks))
            shape = (len(vals1), len(vals2))
            grid = analyze.SweepGrid(
                axis1_name=name1, axis1_values=np.asarray(vals1, dtype=float),
                axis2_name=name2, axis2_values=np.asarray(vals2, dtype=float),
                error=np.array([c[0] for c in cells]).reshape(shape),
                converged=np.array([c[1] for c in cells]).reshape(shape),
                valid=np.array([c[2] for c in cells]).reshape(shape),
            )
        else:
            grid = analyze.sweep_params(
                cfg.scheme_params(), cfg.hilbert_spec(), name1, vals1, name2, vals2,
                criteria=cfg.criteria(), dt=cfg.timestep(),
            )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for i, v1 in enumerate(grid.axis1_values):
        for j, v2 in enumerate(grid.axis2_values):
            err = grid.error[i, j]
            rows.append((
                v1, v2, err, np.log10(max(err, 1e-16)),
                grid.converged[i, j], grid.valid[i, j],
            ))
    write_csv(
        out / "sweep.csv", f"sweep.v1 axis1={name1} axis2={name2}",
        ["axis1", "axis2", "error", "log10_error", "converged", "valid"],
        rows,
    )
    if cfg.fit:
        if {name1, name2} != {"h_r", "gamma_s"}:
            raise ConfigError("fit requires sweeping h_r and gamma_s")
        samples = []
        for i, v1 in enumerate(grid.axis1_values):
            for j, v2 in enumerate(grid.axis2_values):
                h_r, g_s = (v1, v2) if name1 == "h_r" else (v2, v1)
                samples.append((h_r, g_s, grid.error[i, j]))
        fit = analyze.fit_error_model(samples)
        write_json(out / "fit.json", {
            "schema": "fit.v1",
            "model": "error ~ a*h_r + b*gamma_s",
            "a": fit.a,
            "b": fit.b,
            "residuals": [float(r) for r in fit.residuals],
            "max_abs_residual": float(np.abs(fit.residuals).max()),
        })
    write_json(out / "summary.json", {
        "schema": "summary.v1",
        "command": "sweep",
        "cells": int(grid.error.size),
        "wall_time_s": time.perf_counter() - t0,
        "params": _params_dict(cfg),
    })


def cmd_compare_models(cfg: RunConfig, out: Path) -> None:
    t0 = time.perf_counter()
    full_cfg = replace(cfg, model="full")
    elim_cfg = replace(cfg, model="eliminated")
    # a common grid needs a common step; the full model sets the stiffer pace
    dt = cfg.timestep()
    if dt is None:
        dt = evolve.default_timestep(full_cfg.generator())
    n_steps = max(1, round(cfg.t_max / dt))
    record_every = max(1, n_steps // 2000)
    series_full = evolve.integrate(
        full_cfg.generator(), full_cfg.initial_density(), cfg.t_max,
        dt=dt, record_every=record_every,
    )
    series_elim = evolve.integrate(
        elim_cfg.generator(), elim_cfg.initial_density(), cfg.t_max,
        dt=dt, record_every=record_every,
    )
    dev = float(np.abs(series_full.fidelity - series_elim.fidelity).max())
    write_csv(
        out / "compare.csv", "compare.v1",
        ["t", "fidelity_full", "fidelity_eliminated"],
        (
            (series_full.times[i], series_full.fidelity[i], series_elim.fidelity[i])
            for i in range(len(series_full.times))
        ),
    )
    write_json(out / "summary.json", {
        "schema": "summary.v1",
        "command": "compare-models",
        "max_fidelity_deviation": dev,
        "wall_time_s": time.perf_counter() - t0,
        "params": _params_dict(cfg),
    })


_COMMANDS = {
    "steady": cmd_steady,
    "trajectory": cmd_trajectory,
    "conditional": cmd_conditional,
    "sweep": cmd_sweep,
    "compare-models": cmd_compare_models,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darkbell",
        description="Two-ion driven-dissipative Bell-state preparation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="flat key=value configuration file")
        cmd.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--threads", type=int, help="worker processes for ensembles/sweeps")
        cmd.add_argument("--seed", type=int, help="base RNG seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
