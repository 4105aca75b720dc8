"""Quantum-jump unravelling of the reduced master equation.

Between electron jumps the conditional state follows the deterministic part
of the stochastic master equation: the unconditional noise and damping
dissipators plus the no-jump back-action -(1/2){O^dag O, .} of the three
tunnelling channels, renormalised each step (equivalent to carrying the
nonlinear trace counterterms, to O(dt^2), and unconditionally trace-safe).
Jumps are drawn once per step against the cumulative channel probabilities

    p_in  = Gs f_s  a_s^2 Tr[c c^dag e^{-2 eta x} rho] dt
    p_out = Gs (1-f_s) a_s^2 Tr[c^dag c e^{-2 eta x} rho] dt
    p_dr  = Gd a_d^2 Tr[c^dag c e^{+2 eta x} rho] dt

and a jump replaces the state by the normalised O rho O^dag.

Because every jump operator is proportional to c or c^dag, the conditional
state always carries a definite electron number: it is one oscillator-space
block plus a classical charge bit.  The fast path exploits exactly that; the
dense-state functions (`jump_probabilities`, `sme_step`) are the reference
implementation and work on full composite states.

Trajectory i of an ensemble draws from its own counter-based Philox stream
seeded by (master_seed, i), so ensembles are bit-reproducible regardless of
chunking or worker scheduling, and each record is a deterministic function
of (params, rho0, grid, seed).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .master import StepSizeError, check_step_size, default_dt
from .model import EngineParams, OperatorSet, build_operator_set
from .propagate import (EngineMatrices, TrajectoryState, expect_antisym_im, expect_diag,
                        expect_sym, rk4_step_single, trace_batch)

__all__ = [
    "Ensemble",
    "TrajectoryRecord",
    "jump_probabilities",
    "run_ensemble",
    "run_trajectory",
    "sme_step",
]

CHUNK_SIZE = 32              # trajectories propagated together (fixed: determinism contract)
JUMP_KINDS = ("source_in", "source_out", "drain_out")
MAX_STEP_PROB = 0.05         # monitored bound on the per-step total jump probability
NEG_PROB_TOL = -1e-12


def _require_reduced(params: EngineParams) -> None:
    if params.model != "reduced":
        raise ValueError("the jump unravelling is defined for the reduced model")


# ---------------------------------------------------------------------------
# dense reference implementation

def jump_probabilities(ops: OperatorSet, rho_c: np.ndarray, dt: float) -> tuple[float, float, float]:
    """(p_source_in, p_source_out, p_drain_out) for one step of length dt."""
    _require_reduced(ops.params)
    rho_c = np.asarray(rho_c, dtype=complex)
    ps = []
    for label in JUMP_KINDS:
        j = ops.jump(label)
        odo = j.op.conj().T @ j.op
        p = j.rate * float(np.trace(odo @ rho_c).real) * dt
        if p < NEG_PROB_TOL:
            raise FloatingPointError(
                f"negative jump probability {p:.3e} for {label}: state corrupted")
        ps.append(max(p, 0.0))
    total = sum(ps)
    if total >= 0.1:
        warnings.warn(f"total per-step jump probability {total:.3f} >= 0.1; reduce dt",
                      RuntimeWarning, stacklevel=2)
    return tuple(ps)


def _deterministic_apply(ops: OperatorSet, rho: np.ndarray) -> np.ndarray:
    """Linear part of the no-jump conditional generator (before renormalisation)."""
    h = ops.h_osc
    out = -1j * (h @ rho - rho @ h)
    for j in ops.jumps:
        if j.rate == 0.0:
            continue
        o = j.op
        odo = o.conj().T @ o
        if j.label in JUMP_KINDS:
            out -= 0.5 * j.rate * (odo @ rho + rho @ odo)
        else:  # noise and damping stay unconditional
            out += j.rate * (o @ rho @ o.conj().T - 0.5 * (odo @ rho + rho @ odo))
    return out


def sme_step(ops: OperatorSet, rho_c: np.ndarray, dt: float,
             random_draw: float) -> tuple[np.ndarray, str | None]:
    """One step of the unravelling: at most one jump, else RK4 + renormalise."""
    _require_reduced(ops.params)
    if not 0.0 <= random_draw < 1.0:
        raise ValueError("random_draw must lie in [0, 1)")
    rho_c = np.asarray(rho_c, dtype=complex)
    ps = jump_probabilities(ops, rho_c, dt)
    acc = 0.0
    for label, p in zip(JUMP_KINDS, ps):
        acc += p
        if random_draw < acc:
            o = ops.jump(label).op
            post = o @ rho_c @ o.conj().T
            tr = float(np.trace(post).real)
            if tr < 1e-14:
                raise FloatingPointError(
                    f"zero-probability jump {label} forced (post-jump trace {tr:.2e})")
            return post / tr, label
    k1 = _deterministic_apply(ops, rho_c)
    k2 = _deterministic_apply(ops, rho_c + 0.5 * dt * k1)
    k3 = _deterministic_apply(ops, rho_c + 0.5 * dt * k2)
    k4 = _deterministic_apply(ops, rho_c + dt * k3)
    rho = rho_c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho / np.trace(rho).real, None


# ---------------------------------------------------------------------------
# records

@dataclass
class TrajectoryRecord:
    """Time series of one conditional realization."""

    seed: int                     # trajectory index within the ensemble stream
    master_seed: int
    params: EngineParams
    dt: float
    record_stride: int
    times: np.ndarray
    x_mean: np.ndarray
    v_mean: np.ndarray
    n_phonon: np.ndarray
    n_electron: np.ndarray        # exactly 0.0 or 1.0 at every sample
    trace: np.ndarray
    f_mean: np.ndarray
    fv_sym_mean: np.ndarray
    q_dot_hot: np.ndarray
    q_dot_cold: np.ndarray
    e_dot_meas: np.ndarray
    de_jump: np.ndarray           # jump energy accumulated since previous sample
    jump_events: list = field(default_factory=list)   # (time, kind)
    max_jump_prob: float = 0.0

    @property
    def energy(self) -> np.ndarray:
        return 2.0 * self.params.omega * self.n_phonon


OBSERVABLES = ("x_mean", "v_mean", "n_phonon", "n_electron")


@dataclass
class Ensemble:
    """A set of trajectory records plus cross-trajectory statistics."""

    master_seed: int
    records: list

    def __post_init__(self):
        self._stats = None

    @property
    def times(self) -> np.ndarray:
        return self.records[0].times

    def _compute(self):
        if self._stats is None:
            ordered = sorted(self.records, key=lambda r: r.seed)
            stats = {}
            n = len(ordered)
            for name in OBSERVABLES:
                stack = np.stack([getattr(r, name) for r in ordered])
                mean = stack.mean(axis=0)
                if n > 1:
                    se = stack.std(axis=0, ddof=1) / math.sqrt(n)
                else:
                    se = np.zeros_like(mean)
                stats[name] = (mean, se)
            self._stats = stats
        return self._stats

    def mean(self, name: str) -> np.ndarray:
        return self._compute()[name][0]

    def stderr(self, name: str) -> np.ndarray:
        return self._compute()[name][1]


# ---------------------------------------------------------------------------
# fast chunked propagation

def _traj_rng_streams(master_seed: int, indices) -> list:
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence((master_seed, int(i)))))
            for i in indices]


def _initial_block(params: EngineParams, rho0: np.ndarray | None):
    """Single-block initial state (R, I, charged) from an optional composite rho0."""
    d = params.dim
    if rho0 is None:
        R = np.zeros((d, d))
        R[0, 0] = 1.0
        return R, np.zeros((d, d)), False
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape == (2 * d, 2 * d):
        b0, b1 = rho0[:d, :d], rho0[d:, d:]
        off = np.abs(rho0[:d, d:]).max()
        t0, t1 = float(np.trace(b0).real), float(np.trace(b1).real)
        if off > 1e-12 or min(t0, t1) > 1e-12:
            raise ValueError("trajectory initial state must carry a definite electron number")
        blk, charged = (b1, True) if t1 > t0 else (b0, False)
    elif rho0.shape == (d, d):
        blk, charged = rho0, False
    else:
        raise ValueError(f"bad initial state shape {rho0.shape}")
    blk = blk / np.trace(blk).real
    r, im = blk.real, blk.imag
    return 0.5 * (r + r.T), 0.5 * (im - im.T), charged  # bitwise Hermitian parts


def _run_chunk(eng: EngineMatrices, params: EngineParams, indices, master_seed: int,
               R0, I0, charged0: bool, n_steps: int, dt: float, stride: int):
    """Propagate one chunk of trajectories; returns a list of TrajectoryRecord."""
    nb = len(indices)
    d = params.dim
    st = TrajectoryState.initial(nb, d, R0, I0, charged0)
    draws = np.stack([g.random(n_steps) for g in _traj_rng_streams(master_seed, indices)])
    n_rec = n_steps // stride + 1
    cols = {k: np.zeros((nb, n_rec)) for k in
            ("x_mean", "v_mean", "n_phonon", "n_electron", "trace", "f_mean",
             "fv_sym_mean", "q_dot_hot", "q_dot_cold", "e_dot_meas", "de_jump")}
    times = np.zeros(n_rec)
    events = [[] for _ in range(nb)]
    de_acc = np.zeros(nb)
    max_p = np.zeros(nb)
    m_vec = np.arange(d, dtype=float)

    k = 0
    for i in range(n_steps + 1):
        if i % stride == 0:
            t = i * dt
            times[k] = t
            ch = st.charged.astype(float)
            cols["x_mean"][:, k] = expect_sym(eng.X, st.R)
            cols["v_mean"][:, k] = expect_antisym_im(eng.P_im, st.I) / params.mass
            cols["n_phonon"][:, k] = expect_diag(m_vec, st.R)
            cols["n_electron"][:, k] = ch
            tr = trace_batch(st.R)
            cols["trace"][:, k] = tr
            cols["f_mean"][:, k] = expect_antisym_im(eng.force_im, st.I)
            cols["fv_sym_mean"][:, k] = expect_sym(eng.fv_sym, st.R)
            cols["q_dot_hot"][:, k] = ch * eng.gamma * expect_sym(eng.adj_hot, st.R)
            cols["q_dot_cold"][:, k] = eng.kappa_down * expect_diag(eng.cold_diag, st.R)
            h_mean = expect_diag(eng.energy, st.R)
            w_mean = np.where(st.charged, expect_sym(eng.W1, st.R), expect_sym(eng.W0, st.R))
            meas = np.where(st.charged, expect_sym(eng.meas1, st.R), expect_sym(eng.meas0, st.R))
            cols["e_dot_meas"][:, k] = -(meas - w_mean * h_mean)
            cols["de_jump"][:, k] = de_acc
            de_acc[:] = 0.0
            if np.abs(tr - 1.0).max() > 1e-6:
                raise StepSizeError(f"conditional trace drifted beyond 1e-6 at t={t:g}")
            k += 1
        if i >= n_steps:
            break

        u = draws[:, i]
        tr_f2 = expect_sym(eng.F2, st.R)
        tr_g2 = expect_sym(eng.G2, st.R)
        if min(tr_f2.min(), tr_g2.min()) < NEG_PROB_TOL / dt:
            raise FloatingPointError("negative jump probability: state corrupted")
        p_in = np.where(~st.charged, eng.rate_in * tr_f2 * dt, 0.0)
        p_out = np.where(st.charged, eng.rate_out * tr_f2 * dt, 0.0)
        p_dr = np.where(st.charged, eng.rate_dr * tr_g2 * dt, 0.0)
        np.maximum(max_p, p_in + p_out + p_dr, out=max_p)
        jump_in = (~st.charged) & (u < p_in)
        jump_out = st.charged & (u < p_out)
        jump_dr = st.charged & ~jump_out & (u < p_out + p_dr)
        movers = jump_in | jump_out | jump_dr

        for mask, flag in ((st.charged & ~movers, True), (~st.charged & ~movers, False)):
            idx = np.flatnonzero(mask)
            if idx.size:
                Rn, In = rk4_step_single(eng, st.R[idx], st.I[idx], flag, dt)
                tr = trace_batch(Rn)[:, None, None]
                st.R[idx] = Rn / tr
                st.I[idx] = In / tr

        if movers.any():
            t_event = (i + 1) * dt
            for b in np.flatnonzero(movers):
                op = eng.F if (jump_in[b] or jump_out[b]) else eng.G
                e_before = float(np.dot(eng.energy, st.R[b].diagonal()))
                Rj = op @ st.R[b] @ op
                Ij = op @ st.I[b] @ op
                tr = float(np.trace(Rj))
                if tr < 1e-14:
                    raise FloatingPointError("zero-probability jump forced")
                # restore bitwise Hermitian parts (2D GEMMs do not guarantee them)
                st.R[b] = 0.5 * (Rj + Rj.T) / tr
                st.I[b] = 0.5 * (Ij - Ij.T) / tr
                de_acc[b] += float(np.dot(eng.energy, st.R[b].diagonal())) - e_before
                kind = ("source_in" if jump_in[b] else
                        "source_out" if jump_out[b] else "drain_out")
                events[b].append((t_event, kind))
                st.charged[b] = not st.charged[b]

    records = []
    for b, idx in enumerate(indices):
        records.append(TrajectoryRecord(
            seed=int(idx), master_seed=master_seed, params=params, dt=dt,
            record_stride=stride, times=times.copy(),
            **{name: cols[name][b].copy() for name in cols},
            jump_events=events[b], max_jump_prob=float(max_p[b])))
    return records


def _prepare_engine(params: EngineParams, dt: float) -> tuple[OperatorSet, EngineMatrices]:
    ops = build_operator_set(params)
    eng = EngineMatrices.from_operator_set(ops)
    check_step_size(eng, dt)
    from .analysis import attach_force_recording
    attach_force_recording(eng, ops)
    return ops, eng


def run_trajectory(params: EngineParams, rho0: np.ndarray | None = None, *,
                   t_max: float, dt: float | None = None, seed: int = 0,
                   master_seed: int | None = None,
                   record_stride: int = 10) -> TrajectoryRecord:
    """One conditional trajectory; bit-identical for identical inputs."""
    _require_reduced(params)
    if dt is None:
        dt = default_dt(params.omega)
    if master_seed is None:
        master_seed = seed
        seed = 0
    _, eng = _prepare_engine(params, dt)
    R0, I0, charged = _initial_block(params, rho0)
    n_steps = int(round(t_max / dt))
    rec = _run_chunk(eng, params, [seed], master_seed, R0, I0, charged,
                     n_steps, dt, record_stride)[0]
    _warn_max_prob(rec.max_jump_prob)
    return rec


def _warn_max_prob(p: float) -> None:
    if p > MAX_STEP_PROB:
        warnings.warn(f"per-step jump probability reached {p:.3f} > {MAX_STEP_PROB}; "
                      "consider a smaller dt", RuntimeWarning, stacklevel=3)


def _chunk_indices(n_traj: int):
    return [range(s, min(s + CHUNK_SIZE, n_traj)) for s in range(0, n_traj, CHUNK_SIZE)]


def _chunk_worker(args):
    (params, indices, master_seed, R0, I0, charged, n_steps, dt, stride) = args
    _, eng = _prepare_engine(params, dt)
    return _run_chunk(eng, params, list(indices), master_seed, R0, I0, charged,
                      n_steps, dt, stride)


def run_ensemble(params: EngineParams, n_traj: int, master_seed: int, *,
                 rho0: np.ndarray | None = None, t_max: float,
                 dt: float | None = None, record_stride: int = 10,
                 workers: int | None = None) -> Ensemble:
    """n_traj independent trajectories with streams derived from (master_seed, i).

    Trajectories are propagated in fixed chunks of CHUNK_SIZE; chunks may be
    farmed out to a process pool (workers > 1, or SHUTTLESIM_WORKERS) without
    changing any result.
    """
    _require_reduced(params)
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if dt is None:
        dt = default_dt(params.omega)
    if workers is None:
        workers = int(os.environ.get("SHUTTLESIM_WORKERS", "1"))
    R0, I0, charged = _initial_block(params, rho0)
    n_steps = int(round(t_max / dt))
    chunks = _chunk_indices(n_traj)

    if workers > 1 and len(chunks) > 1:
        import multiprocessing as mp
        args = [(params, ch, master_seed, R0, I0, charged, n_steps, dt, record_stride)
                for ch in chunks]
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
        with ctx.Pool(processes=min(workers, len(chunks))) as pool:
            chunk_records = pool.map(_chunk_worker, args)
    else:
        _, eng = _prepare_engine(params, dt)
        chunk_records = [_run_chunk(eng, params, list(ch), master_seed, R0, I0, charged,
                                    n_steps, dt, record_stride) for ch in chunks]

    records = [r for batch in chunk_records for r in batch]
    _warn_max_prob(max(r.max_jump_prob for r in records))
    return Ensemble(master_seed=master_seed, records=records)
