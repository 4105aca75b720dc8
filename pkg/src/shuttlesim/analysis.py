"""Work, power, spectra and histogram diagnostics.

The work force is the reaction on the cold-bath sink.  From the adjoint
(Heisenberg-picture) equations of motion under damping kappa D[a], Newton's
law for the oscillator reads

    M x'' = -M w^2 x + 2 kappa D+[a] p + O(kappa^2),

so the bath exerts F_bath = 2 kappa D+[a] p (a drag, ~ -kappa p near the
diagonal) and the engine pushes the sink with F_work = -F_bath
= -2 kappa D+[a] p.  With this orientation the semiclassical power
<F><p>/M and the quantum power (<F v + v F>/2 - P0) are positive for a
driven engine and the quantum power tracks the cold-bath flux 2 w kappa <N>.
The kappa^2 double-dissipator term is dropped; its relative operator norm is
computed once and logged so the neglect is substantiated rather than assumed.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import EngineParams, OperatorSet, build_operator_set

__all__ = [
    "GaussianFit",
    "PhaseHistogram",
    "PowerSeries",
    "Spectrum",
    "attach_force_recording",
    "crater_statistic",
    "cross_spectrum_phase_at_peak",
    "force_operator",
    "gaussian_fit",
    "ground_power_offset",
    "hull_area",
    "peak_frequency",
    "phase_histogram",
    "power_series",
    "power_spectrum",
    "spectrum_of_records",
    "symmetrized_force_velocity",
]

log = logging.getLogger(__name__)


def _adjoint_dissipator(o: np.ndarray, a_mat: np.ndarray) -> np.ndarray:
    """D+[o] a = o^dag a o - (o^dag o a + a o^dag o)/2."""
    od = o.conj().T
    odo = od @ o
    return od @ a_mat @ o - 0.5 * (odo @ a_mat + a_mat @ odo)


def force_operator(ops: OperatorSet) -> np.ndarray:
    """Work force on the cold-bath sink, -2 kappa D+[a] p (oscillator space)."""
    a = ops.osc["a"]
    p = ops.osc["p"]
    kappa = ops.params.kappa
    f = -2.0 * kappa * _adjoint_dissipator(a, p)
    # substantiate dropping the kappa^2 M (D+[a])^2 x term of the Newton expansion
    x = ops.osc["x"]
    second = kappa ** 2 * ops.params.mass * _adjoint_dissipator(a, _adjoint_dissipator(a, x))
    f_norm = np.linalg.norm(f)
    if f_norm > 0:
        log.info("force operator: ||kappa^2 term|| / ||F|| = %.3e",
                 np.linalg.norm(second) / f_norm)
    return f


def symmetrized_force_velocity(ops: OperatorSet) -> tuple[np.ndarray, float]:
    """((F v + v F)/2, ground-state offset P0) on the oscillator space."""
    f = force_operator(ops)
    v = ops.osc["p"] / ops.params.mass
    s = 0.5 * (f @ v + v @ f)
    return s, float(s[0, 0].real)


@functools.lru_cache(maxsize=8)
def ground_power_offset(params: EngineParams) -> float:
    """P0 = <0|(F v + v F)/2|0> on the half-harmonic ground state."""
    _, p0 = symmetrized_force_velocity(build_operator_set(params))
    return p0


def attach_force_recording(eng, ops: OperatorSet) -> None:
    """Install force observables on a propagation engine (internal hook)."""
    s, p0 = symmetrized_force_velocity(ops)
    eng.attach_force(force_operator(ops), s, p0)


# ---------------------------------------------------------------------------
# power

@dataclass
class PowerSeries:
    """Semiclassical and quantum power along one record."""

    times: np.ndarray
    p_semiclassical: np.ndarray
    p_quantum: np.ndarray
    q_dot_cold: np.ndarray
    w_semiclassical_cumulative: np.ndarray
    t_start: float

    def averages(self) -> dict:
        """Time averages over t >= t_start (the stationary window)."""
        sel = self.times >= self.t_start
        return {
            "p_semiclassical": float(self.p_semiclassical[sel].mean()),
            "p_quantum": float(self.p_quantum[sel].mean()),
            "q_dot_cold": float(self.q_dot_cold[sel].mean()),
        }


def power_series(record, t_start: float | None = None) -> PowerSeries:
    """Assemble powers from a record carrying f_mean / fv_sym_mean series.

    Work is accumulated from t_start (default 10/kappa, i.e. well after the
    transient) by trapezoidal integration of the semiclassical power, which
    realizes the force-displacement line integral along the same record.
    """
    if getattr(record, "f_mean", None) is None:
        raise ValueError("record has no force series; rerun with force recording")
    params = record.params
    if t_start is None:
        t_start = 10.0 / params.kappa if params.kappa > 0 else 0.0
    t = record.times
    p_sc = record.f_mean * record.v_mean
    p0 = ground_power_offset(params)
    p_q = record.fv_sym_mean - p0
    w = np.zeros_like(p_sc)
    sel = t >= t_start
    if sel.sum() >= 2:
        idx = np.flatnonzero(sel)
        seg = p_sc[idx]
        ts = t[idx]
        w_seg = np.concatenate([[0.0], np.cumsum(0.5 * (seg[1:] + seg[:-1]) * np.diff(ts))])
        w[idx] = w_seg
    return PowerSeries(times=t, p_semiclassical=p_sc, p_quantum=p_q,
                       q_dot_cold=record.q_dot_cold,
                       w_semiclassical_cumulative=w, t_start=t_start)


# ---------------------------------------------------------------------------
# spectra

@dataclass
class Spectrum:
    """|FFT|^2 / n of a (detrended, optionally windowed) series.

    frequencies are angular, two-sided on the grid 2 pi k / (n dt); with this
    normalisation sum(values) equals the sum of squares of the transformed
    series (Parseval).
    """

    frequencies: np.ndarray
    values: np.ndarray
    window: str
    detrend: bool
    averaged: int = 1

    def positive(self) -> tuple[np.ndarray, np.ndarray]:
        sel = self.frequencies > 0
        return self.frequencies[sel], self.values[sel]


def _prep_series(series: np.ndarray, window: str, detrend: bool) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if detrend:
        y = y - y.mean()
    if window == "hann":
        y = y * np.hanning(y.size)
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    return y


def power_spectrum(series, dt: float, window: str = "none",
                   detrend: bool = True) -> Spectrum:
    """Spectrum of one uniformly sampled series (length >= 256)."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if y.size < 256:
        raise ValueError(f"series too short for a spectrum ({y.size} < 256)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = _prep_series(y, window, detrend)
    vals = np.abs(np.fft.fft(y)) ** 2 / y.size
    freqs = 2.0 * math.pi * np.fft.fftfreq(y.size, d=dt)
    return Spectrum(frequencies=freqs, values=vals, window=window, detrend=detrend)


def _check_uniform_times(times: np.ndarray) -> float:
    d = np.diff(times)
    if d.size == 0 or np.abs(d - d[0]).max() > 1e-9 * max(abs(d[0]), 1e-300):
        raise ValueError("spectrum requires a uniform time grid")
    return float(d[0])


def spectrum_of_records(records, observable: str = "x_mean", *, window: str = "none",
                        detrend: bool = True, t_start: float = 0.0) -> Spectrum:
    """Trajectory-averaged spectrum: mean of per-record spectra, never the
    spectrum of the mean (the fluctuations carry the resonance)."""
    if not records:
        raise ValueError("no records")
    total = None
    n = 0
    for rec in records:
        sel = rec.times >= t_start
        dt = _check_uniform_times(rec.times[sel])
        sp = power_spectrum(getattr(rec, observable)[sel], dt, window=window, detrend=detrend)
        total = sp.values if total is None else total + sp.values
        freqs = sp.frequencies
        n += 1
    return Spectrum(frequencies=freqs, values=total / n, window=window,
                    detrend=detrend, averaged=n)


def peak_frequency(spec: Spectrum) -> tuple[float, float]:
    """(omega, height) of the largest positive-frequency bin (zero bin excluded)."""
    freqs, vals = spec.positive()
    k = int(np.argmax(vals))
    return float(freqs[k]), float(vals[k])


def cross_spectrum_phase_at_peak(records, *, t_start: float = 0.0) -> float:
    """Phase of <v> relative to <x> at the position-spectrum peak.

    Averages the cross spectrum FFT(v) conj(FFT(x)) over records before taking
    the angle; pi/2 indicates a cyclic phase-space orbit.
    """
    cross = None
    sx = None
    for rec in records:
        sel = rec.times >= t_start
        dt = _check_uniform_times(rec.times[sel])
        x = _prep_series(rec.x_mean[sel], "none", True)
        v = _prep_series(rec.v_mean[sel], "none", True)
        fx = np.fft.fft(x)
        fv = np.fft.fft(v)
        c = fv * fx.conj()
        s = np.abs(fx) ** 2
        cross = c if cross is None else cross + c
        sx = s if sx is None else sx + s
        freqs = 2.0 * math.pi * np.fft.fftfreq(x.size, d=dt)
    pos = freqs > 0
    k = int(np.argmax(sx[pos]))
    return float(np.angle(cross[pos][k]))


# ---------------------------------------------------------------------------
# histograms

@dataclass
class PhaseHistogram:
    counts: np.ndarray        # (nx, nv)
    x_edges: np.ndarray
    v_edges: np.ndarray

    @property
    def marginal_x(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def marginal_v(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        return (0.5 * (self.x_edges[1:] + self.x_edges[:-1]),
                0.5 * (self.v_edges[1:] + self.v_edges[:-1]))


def phase_histogram(records, bins: int = 40, ranges=None,
                    t_start: float = 0.0) -> PhaseHistogram:
    """2D histogram of the recorded phase-space points (<x>, <v>), pooled."""
    if not isinstance(records, (list, tuple)):
        records = [records]
    if not records:
        raise ValueError("no records")
    xs = np.concatenate([r.x_mean[r.times >= t_start] for r in records])
    vs = np.concatenate([r.v_mean[r.times >= t_start] for r in records])
    if xs.size == 0:
        raise ValueError("empty sample range")
    counts, xe, ve = np.histogram2d(xs, vs, bins=bins, range=ranges)
    return PhaseHistogram(counts=counts, x_edges=xe, v_edges=ve)


def crater_statistic(hist: PhaseHistogram) -> float:
    """Annulus-max over central-mean ratio; > 1 flags a crater-like dip.

    Centre cell = bin holding the count-weighted mean point; central mean is
    the 3x3 block around it, the annulus is the Chebyshev ring at distance
    2..4 cells.
    """
    cx, cv = hist.centers()
    w = hist.counts
    if w.sum() == 0:
        raise ValueError("empty histogram")
    mx = float((cx[:, None] * w).sum() / w.sum())
    mv = float((cv[None, :] * w).sum() / w.sum())
    i = int(np.clip(np.searchsorted(hist.x_edges, mx) - 1, 0, w.shape[0] - 1))
    j = int(np.clip(np.searchsorted(hist.v_edges, mv) - 1, 0, w.shape[1] - 1))
    def block(r_lo, r_hi):
        vals = []
        for di in range(-r_hi, r_hi + 1):
            for dj in range(-r_hi, r_hi + 1):
                if max(abs(di), abs(dj)) < r_lo:
                    continue
                ii, jj = i + di, j + dj
                if 0 <= ii < w.shape[0] and 0 <= jj < w.shape[1]:
                    vals.append(w[ii, jj])
        return np.array(vals)
    central = block(0, 1).mean()
    ring = block(2, 4)
    if ring.size == 0:
        raise ValueError("histogram too small for the crater statistic")
    return float(ring.max() / max(central, 1e-300))


@dataclass
class GaussianFit:
    mean: float
    sigma: float
    amplitude: float
    residuals: np.ndarray
    residual_rms: float


def gaussian_fit(counts, centers) -> GaussianFit:
    """Least-squares A exp(-(x-m)^2 / 2 s^2) via log-quadratic regression
    on the nonzero bins plus one Gauss-Newton refinement."""
    counts = np.asarray(counts, dtype=float)
    centers = np.asarray(centers, dtype=float)
    nz = counts > 0
    if nz.sum() < 5:
        raise ValueError("need at least 5 nonzero bins for a Gaussian fit")
    x = centers[nz]
    ln = np.log(counts[nz])
    coef = np.polynomial.polynomial.polyfit(x, ln, 2)  # c0 + c1 x + c2 x^2
    c0, c1, c2 = coef
    if c2 >= -1e-12:
        raise ValueError("degenerate fit: non-negative curvature (sigma -> inf or 0)")
    sigma2 = -1.0 / (2.0 * c2)
    mean = c1 * sigma2
    log_amp = c0 + mean ** 2 / (2.0 * sigma2)
    if log_amp > 700.0:
        raise ValueError("degenerate fit: amplitude overflow")
    amp = math.exp(log_amp)
    theta = np.array([amp, mean, math.sqrt(sigma2)])

    # one Gauss-Newton step on the linear-scale residuals
    a, m, s = theta
    g = np.exp(-((centers - m) ** 2) / (2.0 * s * s))
    model = a * g
    J = np.column_stack([g,
                         a * g * (centers - m) / s ** 2,
                         a * g * (centers - m) ** 2 / s ** 3])
    r = counts - model
    try:
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        cand = theta + step
        if cand[0] > 0 and cand[2] > 0:
            theta = cand
    except np.linalg.LinAlgError:
        pass
    a, m, s = theta
    model = a * np.exp(-((centers - m) ** 2) / (2.0 * s * s))
    resid = counts - model
    return GaussianFit(mean=float(m), sigma=float(abs(s)), amplitude=float(a),
                       residuals=resid, residual_rms=float(np.sqrt((resid ** 2).mean())))


def hull_area(x, v) -> float:
    """Convex-hull area of a phase-space point cloud."""
    from scipy.spatial import ConvexHull
    pts = np.column_stack([np.asarray(x, float), np.asarray(v, float)])
    if len(pts) < 3:
        return 0.0
    return float(ConvexHull(pts).volume)
