"""Run orchestration and bit-stable file output.

Every run writes CSV/JSON data products plus a deterministic manifest
(config echo, code version, seeds, produced files).  Numeric output uses the
shortest round-trip decimal representation, so rerunning a config with the
same master seed reproduces every data file byte for byte; wall-clock timing
goes to a separate run_info.log that is not part of the data products.
"""

from __future__ import annotations

import json
import time
import traceback
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (crater_statistic, cross_spectrum_phase_at_peak, gaussian_fit,
                       hull_area, peak_frequency, phase_histogram, power_series,
                       spectrum_of_records)
from .config import RunConfig, config_to_text
from .master import evolve, steady_state
from .model import build_operator_set
from .trajectories import run_ensemble

__all__ = ["run", "write_csv"]

EVOLVE_COLUMNS = ("t", "x_mean", "v_mean", "n_phonon", "n_electron", "trace",
                  "q_dot_hot", "q_dot_cold", "e_dot_control", "e_dot_total")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, columns) -> None:
    """Write columns (equal-length sequences) with shortest round-trip floats."""
    cols = [np.asarray(c) if not isinstance(c, list) else c for c in columns]
    n = len(cols[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not JSON serialisable: {type(v)}")


def _evolve_columns(res) -> list:
    return [res.times, res.x_mean, res.v_mean, res.n_phonon, res.n_electron,
            res.trace, res.q_dot_hot, res.q_dot_cold, res.e_dot_control, res.e_dot_total]


def _maybe_plots(cfg: RunConfig) -> "object | None":
    if not cfg.plots:
        return None
    from . import plots
    return plots


def run_evolve(cfg: RunConfig, out: Path) -> list[str]:
    ops = build_operator_set(cfg.engine_params())
    res = evolve(ops, None, t_max=cfg.t_max, dt=cfg.dt, record_stride=cfg.record_stride)
    files = ["timeseries.csv", "flux_closed.csv"]
    write_csv(out / "timeseries.csv", EVOLVE_COLUMNS, _evolve_columns(res))
    write_csv(out / "flux_closed.csv",
              ("t", "hot_closed", "hot_closed_linear", "cold_closed", "control_closed"),
              [res.times, res.hot_closed, res.hot_closed_linear,
               res.cold_closed, res.control_closed])
    plots = _maybe_plots(cfg)
    if plots:
        plots.plot_time_evolution(res, out / "timeseries.png")
        files.append("timeseries.png")
    return files


def run_steady(cfg: RunConfig, out: Path) -> list[str]:
    ops = build_operator_set(cfg.engine_params())
    rho, info = steady_state(ops)
    payload = {
        "method": info.method,
        "residual_max": info.residual,
        "uniqueness_checked": info.uniqueness_checked,
        "n_phonon": info.n_phonon,
        "x_mean": info.x_mean,
        "n_electron": info.n_electron,
        "analytic_fixed_charge_n_ss":
            (cfg.gamma * cfg.n_e ** 2 / (4.0 * cfg.kappa)) if cfg.kappa > 0 else None,
    }
    _write_json(out / "steady.json", payload)
    files = ["steady.json"]
    pops = np.abs(np.diag(rho)).real
    write_csv(out / "steady_populations.csv", ("level", "population"),
              [np.arange(pops.size), pops])
    files.append("steady_populations.csv")
    plots = _maybe_plots(cfg)
    if plots:
        plots.plot_steady_populations(pops, out / "steady_populations.png")
        files.append("steady_populations.png")
    return files


def _record_csv_columns(rec) -> tuple[tuple, list]:
    header = EVOLVE_COLUMNS[:8] + ("e_dot_meas", "de_jump", "event")
    events_by_time = {}
    for t, kind in rec.jump_events:
        k = int(np.searchsorted(rec.times, t - 1e-12))
        k = min(k, len(rec.times) - 1)
        events_by_time.setdefault(k, []).append(kind)
    marks = [";".join(events_by_time.get(i, [])) for i in range(len(rec.times))]
    cols = [rec.times, rec.x_mean, rec.v_mean, rec.n_phonon, rec.n_electron, rec.trace,
            rec.q_dot_hot, rec.q_dot_cold, rec.e_dot_meas, rec.de_jump, marks]
    return header, cols


def _run_ensemble_for(cfg: RunConfig):
    return run_ensemble(cfg.engine_params(), cfg.n_traj, cfg.master_seed,
                        t_max=cfg.t_max, dt=cfg.dt, record_stride=cfg.record_stride,
                        workers=cfg.workers if cfg.workers > 0 else None)


def run_trajectories(cfg: RunConfig, out: Path) -> list[str]:
    ens = _run_ensemble_for(cfg)
    ops = build_operator_set(cfg.engine_params())
    unc = evolve(ops, None, t_max=cfg.t_max, dt=cfg.dt, record_stride=cfg.record_stride)
    files = []
    for rec in ens.records:
        name = f"traj_{rec.seed:04d}.csv"
        header, cols = _record_csv_columns(rec)
        write_csv(out / name, header, cols)
        files.append(name)
    write_csv(out / "unconditional.csv", EVOLVE_COLUMNS, _evolve_columns(unc))
    files.append("unconditional.csv")

    summary_cols = [ens.times]
    header = ["t"]
    for name in ("x_mean", "v_mean", "n_phonon", "n_electron"):
        summary_cols += [ens.mean(name), ens.stderr(name)]
        header += [f"{name}_mean", f"{name}_stderr"]
    write_csv(out / "ensemble_summary.csv", header, summary_cols)
    files.append("ensemble_summary.csv")

    ev_t, ev_kind, ev_id = [], [], []
    for rec in sorted(ens.records, key=lambda r: r.seed):
        for t, kind in rec.jump_events:
            ev_t.append(t), ev_kind.append(kind), ev_id.append(rec.seed)
    write_csv(out / "jump_events.csv", ("t", "kind", "trajectory_id"),
              [ev_t, ev_kind, ev_id])
    files.append("jump_events.csv")

    t0 = cfg.window_start()
    hist = phase_histogram(ens.records, bins=cfg.hist_bins, t_start=t0)
    xc, vc = hist.centers()
    bx, bv = np.meshgrid(xc, vc, indexing="ij")
    write_csv(out / "phase_histogram.csv", ("bin_x", "bin_v", "count"),
              [bx.ravel(), bv.ravel(), hist.counts.ravel()])
    files.append("phase_histogram.csv")

    vs = np.concatenate([r.v_mean[r.times >= t0] for r in ens.records])
    counts, edges = np.histogram(vs, bins=cfg.hist_bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    write_csv(out / "momentum_histogram.csv", ("bin_v", "count"), [centers, counts])
    files.append("momentum_histogram.csv")
    fit_payload: dict
    try:
        fit = gaussian_fit(counts, centers)
        fit_payload = {"mean": fit.mean, "sigma": fit.sigma, "amplitude": fit.amplitude,
                       "residual_rms": fit.residual_rms, "degenerate": False}
    except ValueError as exc:
        fit, fit_payload = None, {"degenerate": True, "reason": str(exc)}
    try:
        fit_payload["crater_ratio"] = crater_statistic(hist)
    except ValueError:
        pass
    _write_json(out / "momentum_fit.json", fit_payload)
    files.append("momentum_fit.json")

    plots = _maybe_plots(cfg)
    if plots:
        plots.plot_trajectory_spread(ens, unc, out / "trajectories.png")
        files.append("trajectories.png")
        fixed_point = (float(unc.x_mean[-1]), float(unc.v_mean[-1]))
        plots.plot_phase_space(ens.records[0], unc, fixed_point, out / "phase_space.png",
                               t_start=t0)
        files.append("phase_space.png")
        plots.plot_phase_histogram(hist, out / "phase_histogram.png")
        files.append("phase_histogram.png")
        plots.plot_momentum_histogram(counts, centers, fit, out / "momentum_histogram.png")
        files.append("momentum_histogram.png")
    return files


def run_spectrum(cfg: RunConfig, out: Path) -> list[str]:
    ens = _run_ensemble_for(cfg)
    t0 = cfg.window_start()
    files = []
    spectra = {}
    for obs, name in (("x_mean", "spectrum_x"), ("v_mean", "spectrum_v")):
        sp = spectrum_of_records(ens.records, obs, window=cfg.spectrum_window,
                                 detrend=cfg.spectrum_detrend, t_start=t0)
        spectra[obs] = sp
        om, vals = sp.positive()
        write_csv(out / f"{name}.csv", ("omega_tilde", "S"), [om, vals])
        files.append(f"{name}.csv")
    pk_x = peak_frequency(spectra["x_mean"])
    pk_v = peak_frequency(spectra["v_mean"])
    _write_json(out / "spectrum_summary.json", {
        "peak_omega_x": pk_x[0], "peak_height_x": pk_x[1],
        "peak_omega_v": pk_v[0], "peak_height_v": pk_v[1],
        "vx_phase_at_peak": cross_spectrum_phase_at_peak(ens.records, t_start=t0),
        "n_traj": cfg.n_traj,
    })
    files.append("spectrum_summary.json")
    plots = _maybe_plots(cfg)
    if plots:
        plots.plot_spectra(spectra["x_mean"], spectra["v_mean"], out / "spectra.png")
        files.append("spectra.png")
    return files


def run_power(cfg: RunConfig, out: Path) -> list[str]:
    ens = _run_ensemble_for(cfg)
    t0 = cfg.window_start()
    series = [power_series(rec, t_start=t0) for rec in
              sorted(ens.records, key=lambda r: r.seed)]
    t = series[0].times
    mean = lambda attr: np.mean([getattr(s, attr) for s in series], axis=0)
    p_sc, p_q = mean("p_semiclassical"), mean("p_quantum")
    q_c, w_sc = mean("q_dot_cold"), mean("w_semiclassical_cumulative")
    write_csv(out / "power.csv", ("t", "p_sc", "p_q", "q_dot_cold", "w_sc_cum"),
              [t, p_sc, p_q, q_c, w_sc])
    files = ["power.csv"]
    sel = t >= t0
    avg_sc = float(p_sc[sel].mean())
    avg_q = float(p_q[sel].mean())
    avg_c = float(q_c[sel].mean())
    _write_json(out / "power_summary.json", {
        "t_start": t0,
        "p_semiclassical": avg_sc,
        "p_quantum": avg_q,
        "q_dot_cold": avg_c,
        "quantum_to_semiclassical_ratio": avg_q / avg_sc if avg_sc else None,
        "quantum_to_cold_flux_mismatch": abs(avg_q - avg_c) / avg_c if avg_c else None,
        "n_traj": cfg.n_traj,
    })
    files.append("power_summary.json")
    plots = _maybe_plots(cfg)
    if plots:
        plots.plot_power(t, p_sc, p_q, q_c, t0, out / "power.png")
        files.append("power.png")
        plots.plot_work(series, out / "work.png")
        files.append("work.png")
    return files


_RUNNERS = {}


def run_sweep(cfg: RunConfig, out: Path) -> list[str]:
    files = []
    rows = []
    for value in cfg.sweep_values:
        sub_cfg = _replace_cfg(cfg, **{cfg.sweep_param: _cast_like(cfg, value),
                                       "run": cfg.sweep_run})
        sub_dir = out / f"{cfg.sweep_param}_{_fmt(value)}"
        sub_dir.mkdir(parents=True, exist_ok=True)
        sub_files = _RUNNERS[cfg.sweep_run](sub_cfg, sub_dir)
        files += [f"{sub_dir.name}/{f}" for f in sub_files]
        rows.append((value, _sweep_metrics(cfg.sweep_run, sub_cfg, sub_dir)))
    metric_names = sorted(rows[0][1]) if rows else []
    write_csv(out / "sweep_summary.csv", (cfg.sweep_param, *metric_names),
              [[r[0] for r in rows]] + [[r[1][m] for r in rows] for m in metric_names])
    files.append("sweep_summary.csv")
    plots = _maybe_plots(cfg)
    if plots and rows:
        plots.plot_sweep(cfg.sweep_param, rows, metric_names, out / "sweep.png",
                         analytic=_sweep_analytic(cfg))
        files.append("sweep.png")
    return files


def _sweep_analytic(cfg: RunConfig):
    if cfg.sweep_run == "steady" and cfg.model == "fixed_charge" and cfg.kappa > 0 \
            and cfg.sweep_param == "gamma":
        return lambda g: g * cfg.n_e ** 2 / (4.0 * cfg.kappa)
    return None


def _cast_like(cfg: RunConfig, value):
    current = getattr(cfg, cfg.sweep_param)
    return type(current)(value) if not isinstance(current, tuple) else value


def _replace_cfg(cfg: RunConfig, **kw) -> RunConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def _sweep_metrics(run_kind: str, cfg: RunConfig, sub_dir: Path) -> dict:
    if run_kind == "steady":
        data = json.loads((sub_dir / "steady.json").read_text())
        return {"n_phonon": data["n_phonon"], "x_mean": data["x_mean"],
                "n_electron": data["n_electron"]}
    if run_kind == "spectrum":
        data = json.loads((sub_dir / "spectrum_summary.json").read_text())
        return {"peak_omega_x": data["peak_omega_x"], "peak_height_x": data["peak_height_x"]}
    if run_kind == "power":
        data = json.loads((sub_dir / "power_summary.json").read_text())
        return {"p_semiclassical": data["p_semiclassical"], "p_quantum": data["p_quantum"],
                "q_dot_cold": data["q_dot_cold"]}
    if run_kind == "trajectories":
        ens_file = sub_dir / "traj_0000.csv"
        rows = np.genfromtxt(ens_file, delimiter=",", names=True,
                             usecols=("t", "x_mean", "v_mean"))
        t0 = cfg.window_start()
        sel = rows["t"] >= t0
        return {"hull_area": hull_area(rows["x_mean"][sel], rows["v_mean"][sel])}
    if run_kind == "evolve":
        rows = np.genfromtxt(sub_dir / "timeseries.csv", delimiter=",", names=True)
        return {"x_mean_final": float(rows["x_mean"][-1]),
                "n_phonon_final": float(rows["n_phonon"][-1])}
    return {}


_RUNNERS.update({
    "evolve": run_evolve,
    "steady": run_steady,
    "trajectories": run_trajectories,
    "spectrum": run_spectrum,
    "power": run_power,
    "sweep": run_sweep,
})


def run(cfg: RunConfig, out_dir=None) -> int:
    """Execute a configured run; returns a process exit status."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "FAILED.marker"
    if stale.exists():
        stale.unlink()
    started = time.time()
    try:
        files = _RUNNERS[cfg.run](cfg, out)
    except Exception:
        (out / "FAILED.marker").write_text(traceback.format_exc(), encoding="utf-8")
        raise
    manifest = {
        "version": __version__,
        "run": cfg.run,
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "master_seed": cfg.master_seed,
        "files": sorted(files) + ["manifest.json"],
        "config_echo": config_to_text(cfg),
    }
    _write_json(out / "manifest.json", manifest)
    (out / "run_info.log").write_text(
        f"run={cfg.run}\nelapsed_seconds={time.time() - started:.3f}\n", encoding="utf-8")
    return 0
