"""Batch front end: config-driven runs over the four backends.

Configs are flat sectioned key/value files ([run], [model]); every run
writes its delimited results plus a manifest, atomically.  Exit codes:
0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelParams, ModelError

TOOLKIT = "btc-sim"

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("artifact")
except Exception:  # not installed; running from a checkout
    VERSION = "0.1.0"


class ConfigError(Exception):
    """Carries line-tagged diagnostics for exit code 2."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


class BackendFailure(Exception):
    """Wraps numerical errors for exit code 3."""


# ---------------------------------------------------------------------------
# config reading

def read_config(path) -> dict:
    """Parse a flat sectioned key/value file.

    Returns {section: [(key, value, line)]}; duplicate keys and text
    outside a section are rejected with file:line diagnostics.
    """
    path = Path(path)
    problems = []
    sections: dict[str, list] = {}
    current = None
    seen_keys: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current in sections:
                problems.append(f"{path}:{lineno}: duplicate section [{current}]")
            sections.setdefault(current, [])
            continue
        if "=" not in line:
            problems.append(f"{path}:{lineno}: expected 'key = value'")
            continue
        if current is None:
            problems.append(f"{path}:{lineno}: key outside any section")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if (current, key) in seen_keys:
            problems.append(f"{path}:{lineno}: duplicate key {key!r} in [{current}]")
            continue
        seen_keys.add((current, key))
        sections[current].append((key, value, lineno))
    if problems:
        raise ConfigError(problems)
    return sections


def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _str(text):
    return text


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [_int(x) for x in text.split(",") if x.strip()]


def _grid(text):
    """Either 'lo:hi:count' (inclusive linspace) or a comma list."""
    if ":" in text:
        lo, hi, count = text.split(":")
        return np.linspace(float(lo), float(hi), _int(count))
    return np.array(_floats(text))


REQUIRED = object()

# per-(backend, task) key schema: name -> (converter, default)
TASKS = {
    ("meanfield", "series"): {
        "t_final": (_float, 60.0),
        "samples": (_int, 1200),
        "transient": (_float, 0.0),
    },
    ("meanfield", "scan"): {
        "param1": (_str, REQUIRED),
        "values1": (_grid, REQUIRED),
        "param2": (_str, REQUIRED),
        "values2": (_grid, REQUIRED),
    },
    ("permsym", "spectrum"): {
        "n_eigs": (_int, 18),
        "method": (_str, "auto"),
    },
    ("permsym", "correlation"): {
        "t_final": (_float, 40.0),
        "samples": (_int, 400),
    },
    ("permsym", "fluctuation"): {
        "sizes": (_ints, REQUIRED),
        "detunings": (_floats, REQUIRED),
    },
    ("cumulant", "series"): {
        "t_final": (_float, 40.0),
        "samples": (_int, 800),
        "rtol": (_float, 1e-8),
    },
    ("cumulant", "tails"): {
        "sizes": (_ints, [100, 200, 400]),
        "alphas_powerlaw": (_grid, np.linspace(0.6, 2.0, 8)),
        "alphas_exponential": (_grid, np.linspace(1.2, 2.6, 8)),
        "t_measure": (_float, 30.0),
        "rtol": (_float, 1e-8),
    },
    ("cumulant", "collapse"): {
        "sizes": (_ints, [500, 1000, 1500]),
        "alphas": (_grid, np.linspace(0.8, 1.7, 10)),
        "t_measure": (_float, 30.0),
        "rtol": (_float, 1e-8),
    },
    ("cumulant", "lifetime"): {
        "sizes": (_ints, [500, 1000, 1500]),
        "alphas": (_grid, [1.0, 1.5, 2.0]),
        "eps": (_float, 1e-5),
        "t_max": (_float, 600.0),
        "chunk": (_float, 100.0),
    },
    ("trajectory", "ensemble"): {
        "n_traj": (_int, REQUIRED),
        "t_final": (_float, REQUIRED),
        "sample_dt": (_float, 0.05),
        "seed": (_int, 0),
        "observables": (_str, "s_z,n,q,d"),
    },
    ("model-oracle", "series"): {
        "t_final": (_float, 5.0),
        "samples": (_int, 200),
    },
}

BACKENDS = sorted({backend for backend, _ in TASKS})

DEFAULT_TASK = {
    "meanfield": "series",
    "permsym": "spectrum",
    "cumulant": "series",
    "trajectory": "ensemble",
    "model-oracle": "series",
}

_MODEL_FIELDS = {f.name for f in ModelParams.__dataclass_fields__.values()}


@dataclass
class ResolvedRun:
    backend: str
    task: str
    params: ModelParams
    options: dict
    raw: dict = field(default_factory=dict)


def resolve_config(sections: dict, path) -> ResolvedRun:
    problems = []
    run_items = {k: (v, ln) for k, v, ln in sections.get("run", [])}
    if "run" not in sections:
        raise ConfigError([f"{path}: missing [run] section"])

    backend = run_items.pop("backend", (None, 0))[0]
    if backend is None:
        problems.append(f"{path}: [run] needs a backend key")
    elif backend not in BACKENDS:
        problems.append(
            f"{path}: unknown backend {backend!r}; choose from "
            + ", ".join(BACKENDS))
    task = run_items.pop("task", (None, 0))[0]
    if backend in BACKENDS and task is None:
        task = DEFAULT_TASK[backend]
    if problems:
        raise ConfigError(problems)
    if (backend, task) not in TASKS:
        known = sorted(t for b, t in TASKS if b == backend)
        raise ConfigError([
            f"{path}: unknown task {task!r} for backend {backend};"
            f" choose from {', '.join(known)}"])

    schema = TASKS[(backend, task)]
    options = {}
    for key, (value, lineno) in run_items.items():
        if key not in schema:
            problems.append(f"{path}:{lineno}: unknown key {key!r} in [run]"
                            f" for {backend}/{task}")
            continue
        conv = schema[key][0]
        try:
            options[key] = conv(value)
        except ValueError as exc:
            problems.append(f"{path}:{lineno}: bad value for {key!r}: {exc}")
    for key, (conv, default) in schema.items():
        if key in options:
            continue
        if default is REQUIRED:
            problems.append(f"{path}: [run] is missing required key {key!r}"
                            f" for {backend}/{task}")
        else:
            options[key] = default

    model_kwargs = {}
    for key, value, lineno in sections.get("model", []):
        if key not in _MODEL_FIELDS:
            problems.append(f"{path}:{lineno}: unknown key {key!r} in [model]")
            continue
        if key in ("profile", "boundary"):
            model_kwargs[key] = value
        elif key == "size":
            try:
                model_kwargs[key] = _int(value)
            except ValueError as exc:
                problems.append(f"{path}:{lineno}: bad value for 'size': {exc}")
        else:
            try:
                model_kwargs[key] = float(value)
            except ValueError:
                problems.append(f"{path}:{lineno}: bad value for {key!r}")

    for name in sections:
        if name not in ("run", "model"):
            problems.append(f"{path}: unknown section [{name}]")
    if problems:
        raise ConfigError(problems)

    model_kwargs.setdefault("size", 1)
    try:
        params = ModelParams(**model_kwargs)
    except ModelError as exc:
        raise ConfigError([f"{path}: [model] rejected: {exc}"])

    raw = {"backend": backend, "task": task,
           "model": {k: (v if isinstance(v, (int, str)) else float(v))
                     for k, v in model_kwargs.items()},
           "run": {k: _jsonable(v) for k, v in options.items()}}
    return ResolvedRun(backend=backend, task=task, params=params,
                       options=options, raw=raw)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return None if math.isnan(v) else v
    return value


# ---------------------------------------------------------------------------
# atomic output

class RunWriter:
    """Collects outputs as .part files; commit renames all of them at once.

    An abort (or an unhandled failure before commit) removes the temps, so
    an interrupted run never leaves a partially written result file.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.pending: list[tuple[Path, Path]] = []

    def stage(self, name: str) -> Path:
        tmp = self.out_dir / (name + ".part")
        self.pending.append((tmp, self.out_dir / name))
        return tmp

    def write_text(self, name: str, text: str):
        self.stage(name).write_text(text)

    def commit(self) -> list[str]:
        names = []
        for tmp, final in self.pending:
            os.replace(tmp, final)
            names.append(final.name)
        self.pending.clear()
        return names

    def abort(self):
        for tmp, _ in self.pending:
            tmp.unlink(missing_ok=True)
        self.pending.clear()


# ---------------------------------------------------------------------------
# task runners

def _run_meanfield_series(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import meanfield as mf
    opt = run.options
    t0 = opt["transient"]
    samples = np.linspace(t0, t0 + opt["t_final"], opt["samples"])
    series = mf.integrate(mf.ALL_IN_ZERO, run.params, t0 + opt["t_final"],
                          t_samples=samples)
    mf.series_to_csv(series, writer.stage("series.csv"))
    extras = {}
    try:
        cyc = mf.detect_limit_cycle(series)
        extras["cycle"] = _jsonable({
            "is_cycle": bool(cyc.is_cycle), "period": cyc.period,
            "frequency": cyc.frequency, "amplitude": cyc.amplitude,
            "period_spread": cyc.period_spread})
        writer.write_text("cycle.json",
                          json.dumps(extras["cycle"], sort_keys=True) + "\n")
    except mf.MeanFieldError:
        pass  # too short for the cycle test; the series alone is the result
    return extras, [("series", "series.csv", {})]


def _run_meanfield_scan(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import meanfield as mf
    opt = run.options
    results = mf.scan_phase_diagram(run.params, opt["param1"], opt["values1"],
                                    opt["param2"], opt["values2"], jobs=jobs)
    mf.scan_to_csv(results, opt["param1"], opt["param2"],
                   writer.stage("scan.csv"))
    labels = {}
    for _, _, rep in results:
        labels[rep.label] = labels.get(rep.label, 0) + 1
    meta = {"param1": opt["param1"], "param2": opt["param2"]}
    return {"labels": labels}, [("scan", "scan.csv", meta)]


def _run_permsym_spectrum(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import permsym as ps
    opt = run.options
    L = ps.build_sym_liouvillian(run.params)
    omega = ps.meanfield_frequency(run.params)
    if opt["method"] == "auto" and not math.isnan(omega):
        rep = ps.gather_spectrum(L, opt["n_eigs"], omega)
    else:
        rep = ps.low_spectrum(L, opt["n_eigs"], omega=omega,
                              method=opt["method"])
    ps.spectrum_to_csv(rep, writer.stage("spectrum.csv"))
    return ({"gap": rep.gap, "omega_ref": omega},
            [("spectrum", "spectrum.csv", {"omega": omega})])


def _run_permsym_correlation(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import permsym as ps
    opt = run.options
    L = ps.build_sym_liouvillian(run.params)
    rho_ss = ps.steady_state(L)
    times = np.linspace(0.0, opt["t_final"], opt["samples"])
    g = ps.two_time_correlation(L, rho_ss, times)
    ps.correlation_to_csv(times, g, writer.stage("correlation.csv"))
    fit = ps.fit_damped_cosine(times, g.real)
    fit["f_squared"] = ps.fluctuations(L, rho_ss)
    writer.write_text("fit.json", json.dumps(fit, sort_keys=True) + "\n")
    return {"fit": fit}, [("correlation", "correlation.csv", fit)]


def _run_permsym_fluctuation(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import permsym as ps
    opt = run.options
    lines = ["N,detuning,f_squared"]
    for delta in opt["detunings"]:
        for n in opt["sizes"]:
            p = run.params.with_(size=int(n), detuning=float(delta))
            L = ps.build_sym_liouvillian(p)
            f2 = ps.fluctuations(L, ps.steady_state(L))
            lines.append(f"{n},{delta:.10g},{f2:.10g}")
    writer.write_text("fluctuation.csv", "\n".join(lines) + "\n")
    return {}, [("fluctuation", "fluctuation.csv", {})]


def _run_cumulant_series(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import cumulant as cm
    opt = run.options
    times = np.linspace(0.0, opt["t_final"], opt["samples"])
    series = cm.cme_integrate(cm.all_ground(run.params.size), run.params,
                              opt["t_final"], t_samples=times,
                              rtol=opt["rtol"], keep="firsts")
    sz = series.s_z()
    pop = series.population()
    lines = ["t,s_z,n"]
    for t, z, n in zip(series.t, sz, pop):
        lines.append(f"{t:.10g},{z:.10g},{n:.10g}")
    writer.write_text("series.csv", "\n".join(lines) + "\n")
    return {}, [("series", "series.csv", {})]


def _run_cumulant_tails(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import cumulant as cm
    opt = run.options
    rows = cm.compare_interaction_tails(
        run.params, opt["alphas_powerlaw"], opt["sizes"],
        profiles=("PowerLaw",), t_measure=opt["t_measure"],
        rtol=opt["rtol"], jobs=jobs)
    rows += cm.compare_interaction_tails(
        run.params, opt["alphas_exponential"], opt["sizes"],
        profiles=("Exponential",), t_measure=opt["t_measure"],
        rtol=opt["rtol"], jobs=jobs)
    cm.sweep_to_csv(rows, writer.stage("tails.csv"))
    crossings = {
        "PowerLaw": [[int(a), int(b), float(x)] for a, b, x
                     in cm.find_crossings(rows, "PowerLaw")],
        "Exponential": [[int(a), int(b), float(x)] for a, b, x
                        in cm.find_crossings(rows, "Exponential")],
    }
    writer.write_text("crossings.json",
                      json.dumps(crossings, sort_keys=True) + "\n")
    return {"crossings": crossings}, [("tails", "tails.csv", {})]


def _run_cumulant_collapse(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import cumulant as cm
    opt = run.options
    rows = cm.compare_interaction_tails(
        run.params, opt["alphas"], opt["sizes"], profiles=("PowerLaw",),
        t_measure=opt["t_measure"], rtol=opt["rtol"], jobs=jobs)
    cm.sweep_to_csv(rows, writer.stage("collapse.csv"))
    rep = cm.fit_scaling_collapse(rows)
    fitted = {"alpha_c": rep.alpha_c, "zeta": rep.zeta, "nu": rep.nu,
              "residual": rep.residual}
    writer.write_text("collapse.json", json.dumps(fitted, sort_keys=True) + "\n")
    return dict(fitted), [("collapse", "collapse.csv", fitted)]


def _run_cumulant_lifetime(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import cumulant as cm
    opt = run.options
    lines = ["N,alpha,tau,flag"]
    for alpha in opt["alphas"]:
        for n in opt["sizes"]:
            p = run.params.with_(size=int(n), profile="PowerLaw",
                                 powerlaw_exponent=float(alpha))
            res = cm.run_lifetime(p, eps=opt["eps"], t_max=opt["t_max"],
                                  chunk=opt["chunk"])
            lines.append(f"{n},{alpha:.10g},{res.tau:.10g},{res.flag}")
    writer.write_text("lifetime.csv", "\n".join(lines) + "\n")
    return {}, [("lifetime", "lifetime.csv", {})]


def _run_trajectory_ensemble(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import trajectory as tj
    opt = run.options
    obs = tuple(x.strip() for x in opt["observables"].split(",") if x.strip())
    eff_seed = opt["seed"] if seed is None else seed
    result = tj.run_ensemble(run.params, opt["n_traj"], opt["t_final"],
                             seeds=eff_seed, sample_dt=opt["sample_dt"],
                             observables=obs)
    writer.write_text("ensemble.csv", tj.ensemble_to_csv(result))
    writer.write_text("trajectory0.csv", tj.record_to_csv(result.records[0]))
    writer.write_text("jumps0.csv", tj.jumps_to_csv(result.records[0]))
    n_jumps = sum(len(r.jumps) for r in result.records)
    return ({"seed": eff_seed, "total_jumps": n_jumps},
            [("ensemble", "ensemble.csv", {})])


def _run_oracle_series(run: ResolvedRun, writer: RunWriter, jobs, seed):
    from . import model
    opt = run.options
    p = run.params
    dim = 3 ** p.size
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1.0
    times = np.linspace(0.0, opt["t_final"], opt["samples"])
    states = model.evolve_dense(p, rho0, times)
    ops = model.build_local_operators().as_dict()
    cols = ["n", "sz", "sx", "sy", "smx", "smy", "q", "d"]
    lines = ["t,n,s_z,s_x,s_y,s_mx,s_my,q,d"]
    for t, rho in zip(times, states):
        vals = [model.collective_expectation(rho, ops[c], p.size).real / p.size
                for c in cols]
        lines.append(f"{t:.10g}," + ",".join(f"{v:.10g}" for v in vals))
    writer.write_text("series.csv", "\n".join(lines) + "\n")
    return {}, [("series", "series.csv", {})]


RUNNERS = {
    ("meanfield", "series"): _run_meanfield_series,
    ("meanfield", "scan"): _run_meanfield_scan,
    ("permsym", "spectrum"): _run_permsym_spectrum,
    ("permsym", "correlation"): _run_permsym_correlation,
    ("permsym", "fluctuation"): _run_permsym_fluctuation,
    ("cumulant", "series"): _run_cumulant_series,
    ("cumulant", "tails"): _run_cumulant_tails,
    ("cumulant", "collapse"): _run_cumulant_collapse,
    ("cumulant", "lifetime"): _run_cumulant_lifetime,
    ("trajectory", "ensemble"): _run_trajectory_ensemble,
    ("model-oracle", "series"): _run_oracle_series,
}


# ---------------------------------------------------------------------------
# recipes

RECIPES = {
    "fig1d": "mean-field limit cycle at the oscillating point (~5 s)",
    "fig2a": "mean-field phase scan, split drive on (~8 min at --jobs 8)",
    "fig3a": "Liouvillian spectrum with branch tags, N=10 (~2 min)",
    "fig3b": "steady-state autocorrelation and its damped-cosine fit, N=8 (~2 min)",
    "fig4a-small": "magnetization fluctuations vs N, two detunings (~5 min)",
    "fig5b-d": "oscillation lifetime vs interaction range (~25 min)",
    "fig5e-small": "jump-unraveled ensemble at N=6 (~2 min)",
    "figS1": "mean-field phase scan, split drive off (~8 min at --jobs 8)",
    "figS2": "tail sweep: power-law vs exponential interactions (~10 min)",
}


def recipe_dir() -> Path:
    return Path(__file__).resolve().parent / "recipes"


def resolve_recipe(name: str) -> Path:
    path = recipe_dir() / f"{name}.cfg"
    if not path.exists():
        raise ConfigError([f"no bundled recipe named {name!r}; "
                           f"see --list-recipes"])
    return path


def list_recipes() -> str:
    width = max(len(n) for n in RECIPES)
    lines = [f"{name:<{width}}  {blurb}" for name, blurb
             in sorted(RECIPES.items())]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# driver

def run(config_path, out_dir, jobs: int = 1, seed=None, plot: bool = True) -> dict:
    """Execute one config; returns the manifest dict.

    Raises ConfigError for bad input and BackendFailure when the
    dispatched backend errors out; the caller maps these to exit codes.
    """
    config_path = Path(config_path)
    sections = read_config(config_path)
    resolved = resolve_config(sections, config_path)
    writer = RunWriter(out_dir)
    started = time.time()
    runner = RUNNERS[(resolved.backend, resolved.task)]
    try:
        extras, plot_specs = runner(resolved, writer, jobs, seed)
        if plot:
            from . import plots
            for kind, csv_name, meta in plot_specs:
                png = csv_name.rsplit(".", 1)[0] + ".png"
                plots.render(kind, writer.out_dir / (csv_name + ".part"),
                             writer.stage(png), meta)
    except (ConfigError, BackendFailure):
        writer.abort()
        raise
    except Exception as exc:
        writer.abort()
        raise BackendFailure(f"{resolved.backend}/{resolved.task}: {exc}") from exc
    outputs = writer.commit()
    manifest = {
        "toolkit": f"{TOOLKIT} {VERSION}",
        "config": config_path.name,
        "config_sha256": hashlib.sha256(config_path.read_bytes()).hexdigest(),
        "resolved": resolved.raw,
        "jobs": jobs,
        "seed": seed,
        "outputs": sorted(outputs),
        "wall_seconds": round(time.time() - started, 3),
    }
    manifest.update({k: _jsonable(v) for k, v in extras.items()})
    tmp = writer.out_dir / "manifest.json.part"
    tmp.write_text(json.dumps(manifest, sort_keys=True, indent=1,
                              default=_jsonable) + "\n")
    os.replace(tmp, writer.out_dir / "manifest.json")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog=TOOLKIT,
        description="dissipative spin-1 chain toolkit: config-driven runs")
    parser.add_argument("--config", help="config file path or bundled recipe name")
    parser.add_argument("--jobs", type=int, default=None,
                        help="sweep parallelism (fallback: BTC_SIM_THREADS)")
    parser.add_argument("--out", default=None,
                        help="output directory (default: ./<config stem>)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed for stochastic runs")
    parser.add_argument("--list-recipes", action="store_true",
                        help="print bundled recipe names and runtimes")
    parser.add_argument("--no-plot", action="store_true",
                        help="skip figure rendering, write only delimited output")
    args = parser.parse_args(argv)

    if args.list_recipes:
        print(list_recipes())
        return 0
    if args.config is None:
        parser.print_usage(sys.stderr)
        print(f"{TOOLKIT}: --config or --list-recipes is required",
              file=sys.stderr)
        return 2

    jobs = args.jobs
    if jobs is None:
        env = os.environ.get("BTC_SIM_THREADS", "")
        try:
            jobs = int(env) if env else 1
        except ValueError:
            print(f"{TOOLKIT}: BTC_SIM_THREADS={env!r} is not an integer",
                  file=sys.stderr)
            return 2
    if jobs < 1:
        print(f"{TOOLKIT}: --jobs must be >= 1", file=sys.stderr)
        return 2

    try:
        config_path = Path(args.config)
        if not config_path.exists():
            if "/" not in args.config and not args.config.endswith(".cfg"):
                config_path = resolve_recipe(args.config)
            else:
                print(f"{TOOLKIT}: config not found: {args.config}",
                      file=sys.stderr)
                return 2
        out_dir = args.out if args.out is not None else f"./{config_path.stem}"
        manifest = run(config_path, out_dir, jobs=jobs, seed=args.seed,
                       plot=not args.no_plot)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"{TOOLKIT}: {line}", file=sys.stderr)
        return 2
    except BackendFailure as exc:
        print(f"{TOOLKIT}: numerical failure: {exc}", file=sys.stderr)
        return 3
    print(f"{TOOLKIT}: wrote {', '.join(manifest['outputs'])} "
          f"to {out_dir} in {manifest['wall_seconds']}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
