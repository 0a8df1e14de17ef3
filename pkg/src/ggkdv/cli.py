"""ggctl: scenario runner with JSON configs and machine-readable outputs.

Every scenario writes a deterministic summary.json plus CSV data files
into the output directory (bit-identical across runs for a fixed config
and seed); wall-clock timings go to timings.txt, which is excluded from
the determinism guarantee.  Optional SVG line plots re-render the CSV
values losslessly.

Exit codes: 0 success, 1 config error, 2 solver error, 3 precondition or
certificate failure (--force overrides the gate).
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import critical as crit
from . import evolution as evo
from . import hum
from .model import (
    SpaceTimeGrid,
    StatePair,
    SystemParams,
    CoefficientViolation,
    validate_params,
)

SCENARIOS = (
    "simulate",
    "adjoint",
    "hum",
    "nonlinear-control",
    "critical-list",
    "critical-check",
    "obs-scan",
    "gramian-scan",
)

_NUM = {"type": "number"}
_PROFILE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "sine", "parabola", "gaussian", "values"]},
        "amplitude": _NUM,
        "mode": {"type": "integer", "minimum": 1},
        "center": _NUM,
        "width": _NUM,
        "values": {"type": "array", "items": _NUM},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_SERIES_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "sine", "cosine", "values"]},
        "amplitude": _NUM,
        "mode": {"type": "integer", "minimum": 0},
        "values": {"type": "array", "items": _NUM},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": 1},
        "scenario": {"enum": list(SCENARIOS)},
        "params": {
            "type": "object",
            "properties": {k: _NUM for k in ("a", "a1", "a2", "b", "c", "r")},
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "L": _NUM,
                "T": _NUM,
                "nx": {"type": "integer", "minimum": 8},
                "nt": {"type": "integer", "minimum": 8},
            },
            "additionalProperties": False,
        },
        "config_id": {"enum": ["C1", "C2", "C3", "C4", "C5", "C6"]},
        "seed": {"type": "integer", "minimum": 0},
        "plots": {"type": "boolean"},
        "options": {"type": "object"},
    },
    "required": ["version"],
    "additionalProperties": False,
}

_DEFAULTS = {
    "params": {"a": 0.5, "a1": 1.0, "a2": 1.0, "b": 1.0, "c": 1.0, "r": 1.0},
    "grid": {"L": float(np.pi), "T": 1.0, "nx": 64, "nt": 256},
    "config_id": "C3",
    "seed": 0,
    "plots": False,
    "options": {},
}


class ConfigError(ValueError):
    pass


def _resolve_config(raw: dict, scenario: str, seed_override) -> dict:
    import jsonschema

    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from None
    if "scenario" in raw and raw["scenario"] != scenario:
        raise ConfigError(
            f"config names scenario {raw['scenario']!r} but {scenario!r} was invoked"
        )
    cfg = {"version": 1, "scenario": scenario}
    for key in ("params", "grid"):
        merged = dict(_DEFAULTS[key])
        merged.update(raw.get(key, {}))
        cfg[key] = merged
    for key in ("config_id", "seed", "plots", "options"):
        cfg[key] = raw.get(key, _DEFAULTS[key])
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    return cfg


def _profile(spec: dict, g: SpaceTimeGrid) -> np.ndarray:
    import jsonschema

    try:
        jsonschema.validate(spec, _PROFILE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"bad profile spec: {exc.message}") from None
    x = g.x
    kind = spec["kind"]
    amp = float(spec.get("amplitude", 1.0))
    if kind == "zero":
        return np.zeros_like(x)
    if kind == "sine":
        return amp * np.sin(spec.get("mode", 1) * np.pi * x / g.L)
    if kind == "parabola":
        return amp * x * (g.L - x) / g.L ** 2
    if kind == "gaussian":
        center = float(spec.get("center", 0.5)) * g.L
        width = float(spec.get("width", 0.1)) * g.L
        return amp * np.exp(-0.5 * ((x - center) / width) ** 2)
    vals = np.asarray(spec["values"], dtype=float)
    if vals.size != g.nx + 1:
        raise ConfigError(f"profile needs nx+1={g.nx + 1} values, got {vals.size}")
    return vals


def _series(spec: dict, g: SpaceTimeGrid) -> np.ndarray:
    import jsonschema

    try:
        jsonschema.validate(spec, _SERIES_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"bad series spec: {exc.message}") from None
    t = g.t
    kind = spec["kind"]
    amp = float(spec.get("amplitude", 1.0))
    if kind == "zero":
        return np.zeros_like(t)
    if kind == "sine":
        return amp * np.sin(spec.get("mode", 1) * np.pi * t / g.T)
    if kind == "cosine":
        return amp * np.cos(spec.get("mode", 1) * np.pi * t / g.T)
    vals = np.asarray(spec["values"], dtype=float)
    if vals.size != g.nt + 1:
        raise ConfigError(f"series needs nt+1={g.nt + 1} values, got {vals.size}")
    return vals


def _state(opts: dict, key: str, g: SpaceTimeGrid) -> StatePair:
    spec = opts.get(key, {})
    u = _profile(spec.get("u", {"kind": "zero"}), g)
    v = _profile(spec.get("v", {"kind": "zero"}), g)
    return StatePair(u, v)


def _boundary(opts: dict, g: SpaceTimeGrid) -> evo.BoundaryData:
    spec = opts.get("boundary", {})
    series = {ch: _series(spec.get(ch, {"kind": "zero"}), g) for ch in evo.CHANNELS}
    return evo.BoundaryData(**series)


def _write_curve_csv(path, header, columns):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in zip(*columns):
            wr.writerow([repr(float(v)) for v in row])


def _run_scenario(cfg: dict, outdir: Path, force: bool) -> dict:
    p = validate_params(SystemParams(**cfg["params"]))
    g = SpaceTimeGrid(**cfg["grid"])
    ctl = evo.ControlConfig[cfg["config_id"]]
    opts = cfg["options"]
    seed = cfg["seed"]
    scenario = cfg["scenario"]
    summary = {"config": cfg, "artifacts": []}
    produced = summary["artifacts"]

    def emit(name):
        produced.append(name)
        return outdir / name

    if scenario == "simulate":
        init = _state(opts, "init", g)
        bd = _boundary(opts, g)
        if opts.get("kind", "linear") == "nonlinear":
            traj = evo.solve_nonlinear_forward(p, g, init, bd)
        else:
            traj = evo.solve_linear_forward(p, g, init, bd)
        evo.trajectory_to_csv(traj, g, emit("trajectory.csv"), stride=int(opts.get("stride", 1)))
        summary["trajectory"] = evo.trajectory_summary(traj, p, g)

    elif scenario == "adjoint":
        final = _state(opts, "final", g)
        traj, traces = evo.solve_adjoint_backward(p, g, final)
        evo.trajectory_to_csv(traj, g, emit("trajectory.csv"), stride=int(opts.get("stride", 1)))
        cols = [g.t] + [getattr(traces, f) for f in (
            "phi0", "psi0", "phiL", "psiL", "dphiL", "dpsiL",
            "d2phi0", "d2psi0", "d2phiL", "d2psiL")]
        _write_curve_csv(emit("traces.csv"),
                         ["t", "phi0", "psi0", "phiL", "psiL", "dphiL", "dpsiL",
                          "d2phi0", "d2psi0", "d2phiL", "d2psiL"], cols)
        summary["trajectory"] = evo.trajectory_summary(traj, p, g)

    elif scenario in ("hum", "nonlinear-control"):
        init = _state(opts, "init", g)
        target = _state(opts, "target", g)
        cert = None
        if "certificate" in opts:
            cs = opts["certificate"]
            cert = hum.one_control_certificate(
                p, g, C_T=cs.get("C_T"), beta=cs.get("beta", 1.0),
                samples=int(cs.get("samples", 50)), seed=seed)
            summary["certificate"] = {
                "C_T": cert.C_T, "beta": cert.beta,
                "condition_value": cert.condition_value, "K": cert.K,
            }
        prob = hum.ControlProblem(p, g, ctl, init, target, cert)
        problems = prob.preconditions(float(opts.get("critical_rel_tol", 1e-6)))
        if problems and not force:
            raise hum.PreconditionFailure("; ".join(problems))
        if scenario == "hum":
            sol = hum.hum_solve(
                prob,
                tol=float(opts.get("tol", 1e-8)),
                maxit=int(opts.get("maxit", 200)),
                stagnation_window=opts.get("stagnation_window"),
            )
        else:
            sol = hum.nonlinear_control(
                prob,
                delta=opts.get("delta"),
                tol=float(opts.get("outer_tol", 5e-2)),
                maxit_outer=int(opts.get("maxit_outer", 20)),
                cg_tol=float(opts.get("cg_tol", 1e-9)),
                cg_maxit=int(opts.get("cg_maxit", 400)),
                include_self_advection=bool(opts.get("self_advection", True)),
            )
        hum.controls_to_csv(sol.controls, g, emit("controls.csv"))
        evo.trajectory_to_csv(sol.trajectory, g, emit("trajectory.csv"),
                              stride=int(opts.get("stride", 1)))
        summary["solution"] = hum.solution_summary(sol)

    elif scenario == "critical-list":
        cs = crit.enumerate_critical_lengths(p, float(opts.get("Lmax", 20.0)))
        crit.critical_set_to_csv(cs, emit("critical_lengths.csv"))
        summary["count"] = len(cs.lengths)
        summary["first_values"] = [float(c.value) for c in cs.lengths[:10]]

    elif scenario == "critical-check":
        L = float(opts.get("L", g.L))
        gen = crit.is_critical(p, L, float(opts.get("rel_tol", 1e-6)))
        summary["L"] = L
        summary["critical"] = gen is not None
        if gen is not None:
            summary["generator"] = {"family": gen.family.value, "indices": list(gen.indices)}
            if gen.family is crit.Family.F2:
                rec = crit.verify_tuple(p, gen)
                summary["tuple_residuals"] = {
                    k: abs(v) if isinstance(v, complex) else
                    (float(v) if isinstance(v, float) else v)
                    for k, v in rec.residuals.items()
                    if k.startswith("e") or k.startswith("alpha") or k.startswith("length")
                }
        summary["root_sharing_p0"] = crit.root_sharing_oracle(
            p, 0.0, L, float(opts.get("oracle_tol", 1e-6)))
        if "lambda_im_grid" in opts:
            lam = [1j * float(q) for q in opts["lambda_im_grid"]]
            scan = crit.ode_kernel_scan(p, L, lam, nx=int(opts.get("scan_nx", 96)),
                                        variant=opts.get("variant", "coupled"))
            _write_curve_csv(emit("kernel_scan.csv"), ["lambda_im", "min_singular_value"],
                             [[s[0].imag for s in scan], [s[1] for s in scan]])
            summary["kernel_scan_min"] = float(min(s[1] for s in scan))

    elif scenario == "obs-scan":
        samples = int(opts.get("samples", 20))
        ratios = hum.observability_ratio_curve(ctl, p, g, samples, seed=seed)
        _write_curve_csv(emit("obs_ratio.csv"), ["samples", "running_min_ratio"],
                         [list(range(1, samples + 1)), ratios])
        summary["ratio"] = float(ratios[-1])

    elif scenario == "gramian-scan":
        lengths = [float(v) for v in opts["lengths"]]
        iters = int(opts.get("iters", 40))
        operator = opts.get("operator", "observability")
        eigs = []
        for L in lengths:
            gg = SpaceTimeGrid(L=L, T=g.T, nx=g.nx, nt=g.nt)
            eigs.append(hum.gramian_min_eig(ctl, p, gg, iters=iters, seed=seed,
                                            operator=operator))
        _write_curve_csv(emit("gramian_scan.csv"), ["L", "min_eig"], [lengths, eigs])
        summary["min_eigs"] = [float(e) for e in eigs]

    else:  # pragma: no cover - guarded by argparse
        raise ConfigError(f"unknown scenario {scenario}")

    return summary


_PLOT_SPECS = {
    # csv name -> (x column, y columns, y label)
    "kernel_scan.csv": ("lambda_im", ["min_singular_value"], "min singular value"),
    "gramian_scan.csv": ("L", ["min_eig"], "Gramian min eigenvalue"),
    "obs_ratio.csv": ("samples", ["running_min_ratio"], "observability ratio"),
    "controls.csv": ("t", list(evo.CHANNELS), "control value"),
    "traces.csv": ("t", ["phi0", "psi0", "phiL", "psiL"], "trace value"),
}


def emit_plots(outdir: Path, artifacts) -> dict:
    """Render SVG line plots from already-written CSV files.

    Values are re-parsed from disk so the rendered data is exactly what the
    CSV holds.  Returns {svg name: {column: values}} for the curves drawn;
    missing or empty inputs are skipped with a warning.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rendered = {}
    for name in artifacts:
        path = Path(outdir) / name
        if name == "trajectory.csv":
            rows = list(csv.reader(open(path)))
            if len(rows) < 2:
                print(f"warning: {name} empty, no plot", file=sys.stderr)
                continue
            data = np.array(rows[1:], dtype=float)
            times = np.unique(data[:, 0])
            picks = times[np.linspace(0, times.size - 1, min(5, times.size)).astype(int)]
            fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
            series = {}
            for tv in picks:
                sel = data[data[:, 0] == tv]
                axes[0].plot(sel[:, 1], sel[:, 2], label=f"t={tv:.3g}")
                axes[1].plot(sel[:, 1], sel[:, 3])
                series[f"u@t={tv!r}"] = sel[:, 2].tolist()
                series[f"v@t={tv!r}"] = sel[:, 3].tolist()
            axes[0].set_xlabel("x"), axes[0].set_ylabel("u"), axes[0].legend(fontsize=6)
            axes[1].set_xlabel("x"), axes[1].set_ylabel("v")
            svg = path.with_suffix(".svg")
            fig.tight_layout(), fig.savefig(svg, format="svg"), plt.close(fig)
            rendered[svg.name] = series
        elif name in _PLOT_SPECS:
            xcol, ycols, ylabel = _PLOT_SPECS[name]
            rows = list(csv.reader(open(path)))
            if len(rows) < 2:
                print(f"warning: {name} empty, no plot", file=sys.stderr)
                continue
            header = rows[0]
            data = np.array(rows[1:], dtype=float)
            xi = header.index(xcol)
            fig, ax = plt.subplots(figsize=(5, 3.2))
            series = {xcol: data[:, xi].tolist()}
            for yc in ycols:
                if yc not in header:
                    continue
                yi = header.index(yc)
                ax.plot(data[:, xi], data[:, yi], label=yc)
                series[yc] = data[:, yi].tolist()
            ax.set_xlabel(xcol), ax.set_ylabel(ylabel), ax.legend(fontsize=6)
            svg = path.with_suffix(".svg")
            fig.tight_layout(), fig.savefig(svg, format="svg"), plt.close(fig)
            rendered[svg.name] = series
    if not rendered and artifacts:
        print("warning: no plottable artifacts", file=sys.stderr)
    return rendered


def run(scenario: str, config_file, outdir, seed=None, force=False, plots=None) -> int:
    """Execute one scenario; returns the process exit code."""
    t_start = time.perf_counter()
    outdir = Path(outdir)
    try:
        raw = json.loads(Path(config_file).read_text())
        cfg = _resolve_config(raw, scenario, seed)
    except (OSError, json.JSONDecodeError, ConfigError, CoefficientViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if plots is not None:
        cfg["plots"] = bool(plots)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        try:
            summary = _run_scenario(cfg, outdir, force)
        except (ConfigError, CoefficientViolation, ValueError, KeyError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
    except hum.PreconditionFailure as exc:
        print(f"precondition failure: {exc}", file=sys.stderr)
        return 3
    except (evo.SingularSystem, evo.PicardDivergence, hum.CgStagnation,
            hum.OuterDivergence, crit.RootConditioning) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if cfg["plots"]:
        emit_plots(outdir, summary["artifacts"])
    (outdir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n")
    (outdir / "timings.txt").write_text(
        f"wall_seconds: {time.perf_counter() - t_start:.3f}\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ggctl",
        description="Scenario runner for the coupled-KdV boundary control toolkit.",
    )
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--force", action="store_true",
                        help="run despite precondition failures")
        sp.add_argument("--plots", action="store_true", help="emit SVG plots")
    args = parser.parse_args(argv)
    return run(args.scenario, args.config, args.out, seed=args.seed,
               force=args.force, plots=args.plots or None)


if __name__ == "__main__":
    sys.exit(main())
