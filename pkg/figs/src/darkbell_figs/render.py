"""Figure renderers over the simulator's documented CSV schemas.

Each renderer maps one figure id to the CSV files it consumes. Reading is
strictly read-only and schema-checked: a missing column aborts with the
column diff, and a CSV without data rows is a hard error rather than an
empty plot.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class SchemaError(Exception):
    """Input CSV does not match the documented schema."""


@dataclass
class FigureSpec:
    """What to render: figure id, where the run CSVs live, where the image
    goes. Log scaling of error axes is fixed per figure id."""

    figure_id: str
    input_dir: Path
    output_path: Path

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        self.output_path = Path(self.output_path)
        if self.figure_id not in FIGURE_IDS:
            raise ValueError(f"unknown figure id {self.figure_id!r}, expected one of {FIGURE_IDS}")


@dataclass
class Table:
    schema: str
    columns: list[str]
    data: dict[str, np.ndarray]
    raw_rows: list[list[str]] = field(default_factory=list)


def read_table(path: Path, schema_prefix: str, required: list[str] | None = None) -> Table:
    """Load a schema-tagged CSV; fails loudly on schema or column mismatch."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"missing input file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise SchemaError(f"{path}: expected a '# schema=' line, got {first!r}")
        schema = first[len("# schema="):]
        if not schema.startswith(schema_prefix):
            raise SchemaError(f"{path}: schema {schema!r} does not match {schema_prefix!r}")
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: no header row") from None
        rows = [row for row in reader if row]
    if required:
        missing = [c for c in required if c not in columns]
        if missing:
            extra = [c for c in columns if c not in required]
            raise SchemaError(
                f"{path}: column mismatch: missing {missing}, found extra {extra}"
            )
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    cols = {c: [] for c in columns}
    for row in rows:
        if len(row) != len(columns):
            raise SchemaError(f"{path}: row width {len(row)} != header width {len(columns)}")
        for c, cell in zip(columns, row):
            cols[c].append(cell)
    data = {}
    for c, cells in cols.items():
        try:
            data[c] = np.array([float(x) for x in cells])
        except ValueError:
            data[c] = np.array(cells)
    return Table(schema=schema, columns=columns, data=data, raw_rows=rows)


def _run_dirs(input_dir: Path, filename: str) -> list[Path]:
    """Run directories under input_dir holding the named CSV; input_dir
    itself counts when it holds one directly."""
    hits = []
    if (input_dir / filename).exists():
        hits.append(input_dir)
    hits.extend(sorted(p.parent for p in input_dir.glob(f"*/{filename}")))
    if not hits:
        raise SchemaError(f"no {filename} found under {input_dir}")
    return hits


def _run_label(run_dir: Path, key: str = "h_r") -> str:
    summary = run_dir / "summary.json"
    if summary.exists():
        params = json.loads(summary.read_text(encoding="utf-8")).get("params", {})
        if key in params:
            return f"{key} = {params[key]:g}"
    return run_dir.name


_ERROR_FLOOR = 1e-16


def _build_fig2(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4))
    for run in _run_dirs(spec.input_dir, "timeseries.csv"):
        t = read_table(run / "timeseries.csv", "timeseries", ["t", "error"])
        ax.plot(t.data["t"] * 1e3, np.maximum(t.data["error"], _ERROR_FLOOR),
                label=_run_label(run))
    ax.set_yscale("log")
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("error 1 - F")
    ax.legend()
    fig.tight_layout()
    return fig


def _build_fig3(spec: FigureSpec):
    run = _run_dirs(spec.input_dir, "trajectory.csv")[0]
    traj = read_table(run / "trajectory.csv", "trajectory", ["t", "error"])
    events_path = run / "events.csv"
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(traj.data["t"] * 1e3, traj.data["error"], lw=0.9)
    if events_path.exists():
        try:
            ev = read_table(events_path, "events", ["t", "channel"])
            for t in np.atleast_1d(ev.data["t"]):
                ax.axvline(t * 1e3, color="crimson", alpha=0.4, lw=0.8)
        except SchemaError as exc:
            if "no data rows" not in str(exc):
                raise
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("error 1 - F")
    fig.tight_layout()
    return fig


def _build_fig4a(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4))
    for run in _run_dirs(spec.input_dir, "conditional.csv"):
        cond = read_table(run / "conditional.csv", "conditional", ["t", "conditional_fidelity"])
        err = np.maximum(1.0 - cond.data["conditional_fidelity"], _ERROR_FLOOR)
        line, = ax.plot(cond.data["t"] * 1e3, err, label=_run_label(run))
        f_u = _unconditional_reference(run)
        if f_u is not None:
            ax.axhline(max(1.0 - f_u, _ERROR_FLOOR), color=line.get_color(),
                       ls="--", lw=0.8, alpha=0.7)
    ax.set_yscale("log")
    ax.set_xlabel("time after detection (ms)")
    ax.set_ylabel("conditional error")
    ax.legend()
    fig.tight_layout()
    return fig


def _unconditional_reference(run_dir: Path) -> float | None:
    """Steady-state fidelity without a detector, from the run's table CSV."""
    table_path = run_dir / "table1.csv"
    summary_path = run_dir / "summary.json"
    if not (table_path.exists() and summary_path.exists()):
        return None
    params = json.loads(summary_path.read_text(encoding="utf-8")).get("params", {})
    if "h_r" not in params:
        return None
    table = read_table(table_path, "table1", ["h_r", "F_U"])
    match = np.isclose(table.data["h_r"], params["h_r"])
    if not np.any(match):
        return None
    return float(table.data["F_U"][match][0])


def _build_fig4b(spec: FigureSpec):
    run = _run_dirs(spec.input_dir, "conditional.csv")[0]
    cond = read_table(run / "conditional.csv", "conditional", ["t", "survival"])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(cond.data["t"] * 1e3, cond.data["survival"])
    ax.set_xlabel("time after detection (ms)")
    ax.set_ylabel("no-further-detection probability")
    ax.set_ylim(0, 1.02)
    fig.tight_layout()
    return fig


def _sweep_axes(table: Table) -> tuple[str, str]:
    # the sweep schema line carries "axis1=<name> axis2=<name>"
    names = dict(
        tok.split("=", 1) for tok in table.schema.split()[1:] if "=" in tok
    )
    return names.get("axis1", "axis1"), names.get("axis2", "axis2")


def _build_fig5(spec: FigureSpec):
    run = _run_dirs(spec.input_dir, "sweep.csv")[0]
    sweep = read_table(run / "sweep.csv", "sweep", ["axis1", "axis2", "error"])
    name1, name2 = _sweep_axes(sweep)
    axes = {name1: sweep.data["axis1"], name2: sweep.data["axis2"]}
    if set(axes) != {"h_r", "gamma_s"}:
        raise SchemaError(f"fig5 needs a sweep over h_r and gamma_s, got {name1}, {name2}")
    h_r, gamma_s = axes["h_r"], axes["gamma_s"]
    err = np.maximum(sweep.data["error"], _ERROR_FLOOR)
    fig, ax = plt.subplots(figsize=(6, 4))
    for g in np.unique(gamma_s):
        sel = gamma_s == g
        order = np.argsort(h_r[sel])
        ax.plot(h_r[sel][order], err[sel][order], "o-", label=f"gamma_s = {g:g} /s")
    fit_path = run / "fit.json"
    if fit_path.exists():
        fit = json.loads(fit_path.read_text(encoding="utf-8"))
        grid = np.geomspace(max(h_r.min(), 1e-3), h_r.max(), 50)
        for g in np.unique(gamma_s):
            ax.plot(grid, np.maximum(fit["a"] * grid + fit["b"] * g, _ERROR_FLOOR),
                    "k--", lw=0.7, alpha=0.6)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("heating rate h_r (phonons/s)")
    ax.set_ylabel("steady-state error")
    ax.legend()
    fig.tight_layout()
    return fig


def _build_fig6(spec: FigureSpec):
    run = _run_dirs(spec.input_dir, "sweep.csv")[0]
    sweep = read_table(
        run / "sweep.csv", "sweep",
        ["axis1", "axis2", "error", "log10_error", "converged", "valid"],
    )
    name1, name2 = _sweep_axes(sweep)
    v1 = np.unique(sweep.data["axis1"])
    v2 = np.unique(sweep.data["axis2"])
    log_err = np.full((len(v1), len(v2)), np.nan)
    for a, b, le, ok in zip(
        sweep.data["axis1"], sweep.data["axis2"], sweep.data["log10_error"], sweep.data["valid"]
    ):
        i = np.searchsorted(v1, a)
        j = np.searchsorted(v2, b)
        log_err[i, j] = le if ok else np.nan  # truncation-invalid cells masked
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(v2, v1, log_err, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10 steady-state error")
    ax.set_xlabel(f"{name2} (rad/s)")
    ax.set_ylabel(f"{name1} (rad/s)")
    fig.tight_layout()
    return fig


def _render_table1(spec: FigureSpec) -> None:
    run = _run_dirs(spec.input_dir, "table1.csv")[0]
    table = read_table(run / "table1.csv", "table1", ["h_r", "F_U"])
    widths = [max(len(c), 10) for c in table.columns]
    lines = ["  ".join(c.ljust(w) for c, w in zip(table.columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in table.raw_rows:
        cells = [f"{float(x):.4f}" if i > 0 else f"{float(x):g}" for i, x in enumerate(row)]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    spec.output_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


_BUILDERS = {
    "fig2": _build_fig2,
    "fig3": _build_fig3,
    "fig4a": _build_fig4a,
    "fig4b": _build_fig4b,
    "fig5": _build_fig5,
    "fig6": _build_fig6,
}

FIGURE_IDS = (*_BUILDERS, "table1")


def build_figure(spec: FigureSpec):
    """Matplotlib figure for a plot id (table1 has no figure form)."""
    if spec.figure_id not in _BUILDERS:
        raise ValueError(f"{spec.figure_id!r} is not a plot id")
    return _BUILDERS[spec.figure_id](spec)


def render(spec: FigureSpec) -> Path:
    """Render one figure; returns the output path."""
    spec.output_path.parent.mkdir(parents=True, exist_ok=True)
    if spec.figure_id == "table1":
        _render_table1(spec)
    else:
        fig = build_figure(spec)
        fig.savefig(spec.output_path, dpi=200)
        plt.close(fig)
    return spec.output_path
