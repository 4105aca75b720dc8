"""Matplotlib rendering of the run reports.

Every CLI run can drop PNG figures next to its CSV/JSON products: time
evolution with the trajectory spread, phase-space portraits, stochastic
resonance spectra, work/power curves and the appendix-style histograms.
The CSV files remain the canonical output; figures are a convenience view.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_META = {"Software": "shuttlesim"}  # keep PNGs free of volatile metadata
DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_META)
    plt.close(fig)


def plot_time_evolution(res, path) -> None:
    """Position, charge, phonon number and energy fluxes vs time."""
    fig, axes = plt.subplots(4, 1, figsize=(7, 9), sharex=True)
    axes[0].plot(res.times, res.x_mean, lw=1.0, color="C0")
    axes[0].set_ylabel(r"$\langle x \rangle$")
    axes[1].plot(res.times, res.n_electron, lw=1.0, color="C1")
    axes[1].set_ylabel(r"$\langle c^\dagger c \rangle$")
    axes[2].plot(res.times, res.n_phonon, lw=1.0, color="C2")
    axes[2].set_ylabel(r"$\langle a^\dagger a \rangle$")
    ax = axes[3]
    ax.plot(res.times, res.e_dot_total, lw=1.0, color="C0", label=r"$\dot E$")
    ax.plot(res.times, res.q_dot_hot - res.q_dot_cold, "r:", lw=1.0,
            label=r"$\dot Q_H - \dot Q_C$")
    ax.fill_between(res.times, 0.0, res.e_dot_control, color="green", alpha=0.3,
                    label=r"$\dot E_{control}$")
    ax.set_ylabel("energy flux")
    ax.set_xlabel("t")
    ax.legend(fontsize=8, loc="upper right")
    _save(fig, path)


def plot_trajectory_spread(ens, unc, path, max_shown: int = 200) -> None:
    """Conditional spread around the unconditional solution."""
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    labels = (r"$\langle x \rangle$", r"$\langle c^\dagger c \rangle$",
              r"$\langle a^\dagger a \rangle$")
    names = ("x_mean", "n_electron", "n_phonon")
    unc_series = (unc.x_mean, unc.n_electron, unc.n_phonon)
    shown = ens.records[:max_shown]
    for ax, name, lab, u in zip(axes, names, labels, unc_series):
        for rec in shown:
            ax.plot(rec.times, getattr(rec, name), color="plum", lw=0.3, alpha=0.25)
        ax.plot(ens.records[0].times, getattr(ens.records[0], name), "k--", lw=0.9)
        ax.plot(unc.times, u, color="C0", lw=1.5)
        ax.set_ylabel(lab)
    axes[-1].set_xlabel("t")
    _save(fig, path)


def plot_phase_space(rec, unc, fixed_point, path, t_start: float = 0.0) -> None:
    """Unconditional curve, late-time trajectory points and the fixed point."""
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.plot(unc.x_mean, unc.v_mean, color="C0", lw=1.0, label="unconditional")
    sel = rec.times >= t_start
    ax.plot(rec.x_mean[sel], rec.v_mean[sel], ".", color="crimson", ms=2.0,
            label="trajectory (late)")
    ax.plot(*fixed_point, "o", color="green", ms=8, label="fixed point")
    ax.set_xlabel(r"$\langle x \rangle$")
    ax.set_ylabel(r"$v = \langle p \rangle / M$")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_spectra(spec_x, spec_v, path) -> None:
    fig, axes = plt.subplots(2, 1, figsize=(6.5, 7), sharex=True)
    for ax, sp, lab in ((axes[0], spec_x, r"$S_x$"), (axes[1], spec_v, r"$S_v$")):
        om, vals = sp.positive()
        ax.semilogy(om, vals, lw=0.9)
        ax.axvline(2.0, color="gray", ls=":", lw=0.8)
        ax.set_ylabel(lab)
    axes[1].set_xlabel(r"$\tilde\omega / \omega$")
    axes[0].set_xlim(0, 8)
    _save(fig, path)


def plot_power(t, p_sc, p_q, q_c, t_start, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(t, p_sc, color="crimson", lw=0.9, label=r"$P_{SC}$")
    ax.plot(t, p_q, color="orange", lw=0.9, label=r"$P_Q$")
    ax.plot(t, q_c, color="C0", lw=0.9, label=r"$\dot Q_C$")
    ax.axvline(t_start, color="gray", ls=":", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("power")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_work(series_list, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for s in series_list:
        ax.plot(s.times, s.w_semiclassical_cumulative, lw=0.4, alpha=0.5)
    mean = np.mean([s.w_semiclassical_cumulative for s in series_list], axis=0)
    ax.plot(series_list[0].times, mean, "k", lw=2.0, label="ensemble mean")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$W_{SC}$")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_phase_histogram(hist, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    pc = ax.pcolormesh(hist.x_edges, hist.v_edges, hist.counts.T, cmap="viridis")
    fig.colorbar(pc, ax=ax, label="counts")
    ax.set_xlabel(r"$\langle x \rangle$")
    ax.set_ylabel(r"$v$")
    _save(fig, path)


def plot_momentum_histogram(counts, centers, fit, path) -> None:
    if fit is not None:
        fig, (ax, axr) = plt.subplots(2, 1, figsize=(6, 6), sharex=True,
                                      height_ratios=[3, 1])
    else:
        fig, ax = plt.subplots(figsize=(6, 4.5))
    width = centers[1] - centers[0] if len(centers) > 1 else 1.0
    ax.bar(centers, counts, width=0.9 * width, color="lightsteelblue")
    if fit is not None:
        grid = np.linspace(centers[0], centers[-1], 300)
        ax.plot(grid, fit.amplitude * np.exp(-(grid - fit.mean) ** 2 / (2 * fit.sigma ** 2)),
                color="C0", lw=1.5, label="Gaussian fit")
        ax.legend(fontsize=8)
        axr.bar(centers, fit.residuals, width=0.9 * width, color="gray")
        axr.axhline(0, color="k", lw=0.5)
        axr.set_ylabel("residual")
        axr.set_xlabel(r"$v$")
    else:
        ax.set_xlabel(r"$v$")
    ax.set_ylabel("counts")
    _save(fig, path)


def plot_steady_populations(pops, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(len(pops)), np.maximum(pops, 1e-18), "o-", ms=3, lw=0.8)
    ax.set_xlabel("level m")
    ax.set_ylabel("population")
    _save(fig, path)


def plot_sweep(param, rows, metric_names, path, analytic=None) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    values = [r[0] for r in rows]
    for name in metric_names:
        ax.plot(values, [r[1][name] for r in rows], "o-", ms=4, lw=1.0, label=name)
    if analytic is not None:
        grid = np.linspace(min(values), max(values), 200)
        ax.plot(grid, [analytic(g) for g in grid], "g-", lw=1.0, alpha=0.7,
                label="analytic")
    ax.set_xlabel(param)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_operator_matrix(op, path, title="") -> None:
    """Heat maps of Re/Im of an operator matrix (debug view)."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, part, lab in ((axes[0], np.real(op), "Re"), (axes[1], np.imag(op), "Im")):
        im = ax.imshow(part, cmap="RdBu_r",
                       vmax=np.abs(part).max() or 1.0, vmin=-(np.abs(part).max() or 1.0))
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(f"{lab} {title}")
    _save(fig, path)
