"""Unconditional Lindblad evolution, steady states and energy-flux accounting.

The generator is

    drho/dt = -i [H_osc, rho] + sum_j rate_j ( O_j rho O_j^dag
              - (O_j^dag O_j rho + rho O_j^dag O_j) / 2 )

`lindblad_apply` is the dense reference implementation; `evolve` integrates
it with fixed-step RK4, dispatching to the block-structured real engine in
propagate.py whenever the state is block-diagonal in electron number (always
true for the default initial state).  `flux_breakdown` splits
Tr[H_osc drho/dt] into hot-bath, cold-bath and controller parts term by term
in the generator; the split is exact by linearity.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import EngineParams, OperatorSet, build_operator_set
from .propagate import (EngineMatrices, deriv_blocks, deriv_single, expect_antisym_im,
                        expect_diag, expect_sym, rk4_step_blocks, rk4_step_single)

__all__ = [
    "DegenerateSteadyStateError",
    "EvolutionResult",
    "FluxBreakdown",
    "SteadyStateInfo",
    "StepSizeError",
    "default_dt",
    "evolve",
    "flux_breakdown",
    "ground_state",
    "lindblad_apply",
    "steady_state",
]

log = logging.getLogger(__name__)

TRACE_TOL = 1e-6          # abort threshold on |Tr rho - 1|
MIN_EIG_ABORT = -1e-4     # abort threshold on the smallest eigenvalue
DENSE_STEADY_LIMIT = 120  # dense null-space solve allowed for matrix side <= this


class StepSizeError(RuntimeError):
    """Integration step too large for the generator's fastest rates."""


class DegenerateSteadyStateError(RuntimeError):
    """The Liouvillian null space has dimension > 1."""


def default_dt(omega: float = 1.0) -> float:
    """10^-3 of the oscillation period 2 pi / (2 w)."""
    return 1.0e-3 * math.pi / omega


def ground_state(ops: OperatorSet) -> np.ndarray:
    """Oscillator ground state (tensor empty shuttle on the composite space)."""
    n = ops.dim
    rho = np.zeros((n, n), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def lindblad_apply(ops: OperatorSet, rho: np.ndarray) -> np.ndarray:
    """Dense generator application; linear in rho (rho itself is never conjugated)."""
    rho = np.asarray(rho, dtype=complex)
    n = ops.dim
    if rho.shape != (n, n):
        raise ValueError(f"state shape {rho.shape} does not match operator dim {n}")
    h = ops.h_osc
    out = -1j * (h @ rho - rho @ h)
    for j in ops.jumps:
        if j.rate == 0.0:
            continue
        o = j.op
        od = o.conj().T
        odo = od @ o
        out += j.rate * (o @ rho @ od - 0.5 * (odo @ rho + rho @ odo))
    return out


# ---------------------------------------------------------------------------
# flux decomposition

_COLD_LABELS = ("damping", "thermal")
_CONTROL_LABELS = ("source_in", "source_out", "drain_out", "drain_in")


def _term_trace(ops: OperatorSet, labels, rho: np.ndarray) -> float:
    h = ops.h_osc
    tot = 0.0
    for j in ops.jumps:
        if j.label not in labels or j.rate == 0.0:
            continue
        o = j.op
        od = o.conj().T
        odo = od @ o
        term = j.rate * (o @ rho @ od - 0.5 * (odo @ rho + rho @ odo))
        tot += float(np.trace(h @ term).real)
    return tot


@dataclass(frozen=True)
class FluxBreakdown:
    """Energy fluxes through the oscillator at one instant.

    q_dot_hot/q_dot_cold/e_dot_control are generator traces (exact);
    the *_closed fields evaluate the corresponding closed-form expressions.
    hot_closed squares the mean charge as printed in the source model
    (~<c^dag c>^2), hot_closed_linear uses <(c^dag c)^2> = <c^dag c>; the two
    differ whenever the charge fluctuates and both are reported.
    """

    time: float
    q_dot_hot: float
    q_dot_cold: float
    e_dot_control: float
    e_dot_total: float
    hot_closed: float
    hot_closed_linear: float
    cold_closed: float
    control_closed: float

    @property
    def identity_residual(self) -> float:
        """|hot - cold + control - total| (exact decomposition check)."""
        return abs(self.q_dot_hot - self.q_dot_cold + self.e_dot_control - self.e_dot_total)


def _closed_forms(pr: EngineParams, n_e: float, n_phonon: float,
                  exp_m2: float, exp_p2: float) -> tuple[float, float, float, float]:
    w = pr.omega
    hot_sq = 0.5 * w * pr.gamma * n_e ** 2
    hot_lin = 0.5 * w * pr.gamma * n_e
    cold = 2.0 * w * pr.kappa * ((pr.nbar_p + 1.0) * n_phonon - pr.nbar_p * (n_phonon + 1.0))
    ctrl = 0.5 * w * pr.eta ** 2 * (
        pr.Gamma_s * pr.alpha_s ** 2
        * (pr.f_s * (1.0 - n_e) + (1.0 - pr.f_s) * n_e) * exp_m2
        + pr.Gamma_d * pr.alpha_d ** 2
        * ((1.0 - pr.f_d) * n_e + pr.f_d * (1.0 - n_e)) * exp_p2
    )
    return hot_sq, hot_lin, cold, ctrl


def flux_breakdown(ops: OperatorSet, rho: np.ndarray, time: float = 0.0) -> FluxBreakdown:
    """Split Tr[H_osc L(rho)] into hot / cold / controller contributions."""
    rho = np.asarray(rho, dtype=complex)
    pr = ops.params
    hot = _term_trace(ops, ("noise",), rho)
    cold = -_term_trace(ops, _COLD_LABELS, rho)
    control = _term_trace(ops, _CONTROL_LABELS, rho)
    total = float(np.trace(ops.h_osc @ lindblad_apply(ops, rho)).real)

    if ops.space == "composite":
        n_e = float(np.trace(ops.number_e @ rho).real)
        f2 = ops.osc["exp_minus"] @ ops.osc["exp_minus"]
        g2 = ops.osc["exp_plus"] @ ops.osc["exp_plus"]
        from .model import compose
        eye2 = np.eye(2)
        exp_m2 = float(np.trace(compose(f2, eye2) @ rho).real)
        exp_p2 = float(np.trace(compose(g2, eye2) @ rho).real)
        n_ph = float(np.trace((ops.a.conj().T @ ops.a) @ rho).real)
    else:
        n_e = float(pr.n_e)
        exp_m2 = exp_p2 = 0.0
        n_ph = float(np.trace((ops.a.conj().T @ ops.a) @ rho).real)
    hot_sq, hot_lin, cold_cf, ctrl_cf = _closed_forms(pr, n_e, n_ph, exp_m2, exp_p2)
    if ops.space == "oscillator":
        ctrl_cf = 0.0
    return FluxBreakdown(time=time, q_dot_hot=hot, q_dot_cold=cold, e_dot_control=control,
                         e_dot_total=total, hot_closed=hot_sq, hot_closed_linear=hot_lin,
                         cold_closed=cold_cf, control_closed=ctrl_cf)


# ---------------------------------------------------------------------------
# time evolution

@dataclass
class EvolutionResult:
    """Recorded unconditional time series."""

    params: EngineParams
    dt: float
    record_stride: int
    times: np.ndarray
    x_mean: np.ndarray
    v_mean: np.ndarray
    n_phonon: np.ndarray
    n_electron: np.ndarray
    trace: np.ndarray
    q_dot_hot: np.ndarray
    q_dot_cold: np.ndarray
    e_dot_control: np.ndarray
    e_dot_total: np.ndarray
    hot_closed: np.ndarray
    hot_closed_linear: np.ndarray
    cold_closed: np.ndarray
    control_closed: np.ndarray
    rho_final: np.ndarray
    min_eig: np.ndarray | None = None
    min_eig_times: np.ndarray | None = None
    f_mean: np.ndarray | None = None
    fv_sym_mean: np.ndarray | None = None

    def flux_at(self, k: int) -> FluxBreakdown:
        return FluxBreakdown(
            time=float(self.times[k]), q_dot_hot=float(self.q_dot_hot[k]),
            q_dot_cold=float(self.q_dot_cold[k]), e_dot_control=float(self.e_dot_control[k]),
            e_dot_total=float(self.e_dot_total[k]), hot_closed=float(self.hot_closed[k]),
            hot_closed_linear=float(self.hot_closed_linear[k]),
            cold_closed=float(self.cold_closed[k]), control_closed=float(self.control_closed[k]),
        )


def check_step_size(eng: EngineMatrices, dt: float) -> None:
    z = eng.check_step(dt)
    if z >= 2.5:
        raise StepSizeError(
            f"dt={dt:g} is unstable for the fastest dissipative rate "
            f"(dt*rate = {z:.2f} >= 2.5); reduce dt, eta or the drain rate")
    if z > 1.8:
        warnings.warn(f"dt*max_rate = {z:.2f} leaves little RK4 stability margin",
                      RuntimeWarning, stacklevel=3)


def _hermitian_parts(block: np.ndarray):
    """Bitwise symmetric / antisymmetric real pair of a Hermitian block."""
    r, im = block.real, block.imag
    return (0.5 * (r + r.T))[None], (0.5 * (im - im.T))[None]


def _split_blocks(rho: np.ndarray, d: int):
    """(R0, I0, R1, I1) if rho is electron-block-diagonal, else None."""
    if rho.shape[0] == d:  # oscillator-only space
        return _hermitian_parts(rho) + (None, None)
    r00, r11 = rho[:d, :d], rho[d:, d:]
    off = max(np.abs(rho[:d, d:]).max(initial=0.0), np.abs(rho[d:, :d]).max(initial=0.0))
    if off > 1e-12:
        return None
    return _hermitian_parts(r00) + _hermitian_parts(r11)


def evolve(ops: OperatorSet, rho0: np.ndarray | None = None, *, t_max: float,
           dt: float | None = None, record_stride: int = 10,
           record_force: bool = False, min_eig_stride: int = 10) -> EvolutionResult:
    """Fixed-step RK4 integration of the unconditional master equation.

    Records observables and the flux breakdown every `record_stride` steps and
    the smallest eigenvalue every `min_eig_stride` records (0 disables).
    Aborts with StepSizeError if the trace drifts beyond 1e-6.
    """
    pr = ops.params
    if dt is None:
        dt = default_dt(pr.omega)
    if dt <= 0 or t_max < dt:
        raise ValueError("need dt > 0 and t_max >= dt")
    if rho0 is None:
        rho0 = ground_state(ops)
    rho0 = np.asarray(rho0, dtype=complex)

    eng = EngineMatrices.from_operator_set(ops)
    check_step_size(eng, dt)
    if record_force:
        from .analysis import attach_force_recording
        attach_force_recording(eng, ops)

    blocks = _split_blocks(rho0, pr.dim)
    if blocks is None:
        return _evolve_dense(ops, eng, rho0, t_max, dt, record_stride, min_eig_stride,
                             record_force)
    return _evolve_blocks(ops, eng, blocks, t_max, dt, record_stride, min_eig_stride,
                          record_force)


class _Recorder:
    def __init__(self, n_rec: int, record_force: bool):
        z = lambda: np.zeros(n_rec)
        self.times = z()
        self.cols = {k: z() for k in
                     ("x_mean", "v_mean", "n_phonon", "n_electron", "trace",
                      "q_dot_hot", "q_dot_cold", "e_dot_control", "e_dot_total",
                      "hot_closed", "hot_closed_linear", "cold_closed", "control_closed")}
        if record_force:
            self.cols["f_mean"] = z()
            self.cols["fv_sym_mean"] = z()
        self.min_eig = []
        self.min_eig_times = []

    def result(self, pr, dt, stride, rho_final) -> EvolutionResult:
        extra = {}
        if "f_mean" in self.cols:
            extra = {"f_mean": self.cols["f_mean"], "fv_sym_mean": self.cols["fv_sym_mean"]}
        return EvolutionResult(
            params=pr, dt=dt, record_stride=stride, times=self.times,
            rho_final=rho_final,
            min_eig=np.array(self.min_eig) if self.min_eig else None,
            min_eig_times=np.array(self.min_eig_times) if self.min_eig_times else None,
            **{k: v for k, v in self.cols.items() if k not in extra}, **extra)


def _check_health(tr: float, t: float, rho_for_eig, rec: _Recorder, want_eig: bool):
    if abs(tr - 1.0) > TRACE_TOL:
        raise StepSizeError(f"trace drifted to {tr:.3e} at t={t:g}; reduce dt")
    if want_eig:
        w = np.linalg.eigvalsh(rho_for_eig())
        mn = float(w.min())
        rec.min_eig.append(mn)
        rec.min_eig_times.append(t)
        if mn < MIN_EIG_ABORT:
            raise StepSizeError(f"state min eigenvalue {mn:.3e} below {MIN_EIG_ABORT} at t={t:g}")


def _evolve_blocks(ops, eng, blocks, t_max, dt, stride, min_eig_stride, record_force):
    pr = ops.params
    R0, I0, R1, I1 = blocks
    single = R1 is None
    n_steps = int(round(t_max / dt))
    n_rec = n_steps // stride + 1
    rec = _Recorder(n_rec, record_force)
    k = 0
    for i in range(n_steps + 1):
        if i % stride == 0:
            t = i * dt
            rec.times[k] = t
            _record_block_obs(eng, pr, rec, k, R0, I0, R1, I1)
            _check_health(rec.cols["trace"][k], t,
                          lambda: _blocks_to_dense(R0, I0, R1, I1),
                          rec, min_eig_stride > 0 and (k % min_eig_stride == 0))
            k += 1
        if i < n_steps:
            if single:
                R0, I0 = rk4_step_single(eng, R0, I0, True, dt)
            else:
                R0, I0, R1, I1 = rk4_step_blocks(eng, (R0, I0, R1, I1), dt)
    return rec.result(pr, dt, stride, _blocks_to_dense(R0, I0, R1, I1))


def _blocks_to_dense(R0, I0, R1, I1) -> np.ndarray:
    r0 = R0[0] + 1j * I0[0]
    if R1 is None:
        return r0
    d = r0.shape[0]
    rho = np.zeros((2 * d, 2 * d), dtype=complex)
    rho[:d, :d] = r0
    rho[d:, d:] = R1[0] + 1j * I1[0]
    return rho


def _record_block_obs(eng, pr, rec, k, R0, I0, R1, I1):
    c = rec.cols
    single = R1 is None
    if single:
        Rs, Is = R0, I0
        tr1 = 0.0
        n_e = float(pr.n_e)
    else:
        Rs, Is = R0 + R1, I0 + I1
        tr1 = float(np.einsum("bii->", R1))
        n_e = tr1
    c["x_mean"][k] = float(expect_sym(eng.X, Rs)[0])
    c["v_mean"][k] = float(expect_antisym_im(eng.P_im, Is)[0]) / pr.mass
    n_ph = float(expect_diag(np.arange(eng.dim, dtype=float), Rs)[0])
    c["n_phonon"][k] = n_ph
    c["trace"][k] = float(np.einsum("bii->", Rs))
    c["n_electron"][k] = n_e
    # generator-trace fluxes
    if single:
        hot = eng.gamma and eng.gamma * float(expect_sym(eng.adj_hot, R0)[0])
        ctrl = 0.0
        cold = eng.kappa_down * float(expect_diag(eng.cold_diag, R0)[0])
        if eng.kappa_up:
            cold += eng.kappa_up * float(expect_diag(eng.cold_up_diag, R0)[0])
        dR0, dI0 = deriv_single(eng, R0, I0, True)
        total = float(expect_diag(eng.energy, dR0)[0])
        exp_m2 = exp_p2 = 0.0
    else:
        hot = eng.gamma * float(expect_sym(eng.adj_hot, R1)[0])
        cold = eng.kappa_down * float(expect_diag(eng.cold_diag, Rs)[0])
        if eng.kappa_up:
            cold += eng.kappa_up * float(expect_diag(eng.cold_up_diag, Rs)[0])
        ctrl = (eng.rate_in * float(expect_sym(eng.adj_in, R0)[0])
                + eng.rate_out * float(expect_sym(eng.adj_out, R1)[0])
                + eng.rate_dr * float(expect_sym(eng.adj_dr, R1)[0])
                + eng.rate_drin * float(expect_sym(eng.adj_drin, R0)[0]))
        d0, _, d1, _ = deriv_blocks(eng, R0, I0, R1, I1)
        total = float(expect_diag(eng.energy, d0)[0] + expect_diag(eng.energy, d1)[0])
        exp_m2 = float(expect_sym(eng.F2, Rs)[0])
        exp_p2 = float(expect_sym(eng.G2, Rs)[0])
    c["q_dot_hot"][k] = hot
    c["q_dot_cold"][k] = cold
    c["e_dot_control"][k] = ctrl
    c["e_dot_total"][k] = total
    hs, hl, cc, cf = _closed_forms(pr, n_e, n_ph, exp_m2, exp_p2)
    c["hot_closed"][k] = hs
    c["hot_closed_linear"][k] = hl
    c["cold_closed"][k] = cc
    c["control_closed"][k] = cf if not single else 0.0
    if "f_mean" in c:
        c["f_mean"][k] = float(expect_antisym_im(eng.force_im, Is)[0])
        c["fv_sym_mean"][k] = float(expect_sym(eng.fv_sym, Rs)[0]) / 1.0


def _evolve_dense(ops, eng, rho0, t_max, dt, stride, min_eig_stride, record_force):
    """Generic dense path for states that are not electron-block-diagonal."""
    pr = ops.params
    rho = rho0.copy()
    n_steps = int(round(t_max / dt))
    n_rec = n_steps // stride + 1
    rec = _Recorder(n_rec, record_force)
    if record_force:
        from .analysis import force_operator, symmetrized_force_velocity
        f_op = force_operator(ops)
        s_op, p0 = symmetrized_force_velocity(ops)
        from .model import compose
        eye2 = np.eye(2)
        f_full = compose(f_op, eye2) if ops.space == "composite" else f_op
        s_full = compose(s_op, eye2) if ops.space == "composite" else s_op
    num_op = ops.a.conj().T @ ops.a
    k = 0
    for i in range(n_steps + 1):
        if i % stride == 0:
            t = i * dt
            rec.times[k] = t
            fb = flux_breakdown(ops, rho, time=t)
            c = rec.cols
            c["x_mean"][k] = float(np.trace(ops.x @ rho).real)
            c["v_mean"][k] = float(np.trace(ops.p @ rho).real) / pr.mass
            c["n_phonon"][k] = float(np.trace(num_op @ rho).real)
            c["n_electron"][k] = (float(np.trace(ops.number_e @ rho).real)
                                  if ops.number_e is not None else float(pr.n_e))
            c["trace"][k] = float(np.trace(rho).real)
            for name, val in (("q_dot_hot", fb.q_dot_hot), ("q_dot_cold", fb.q_dot_cold),
                              ("e_dot_control", fb.e_dot_control), ("e_dot_total", fb.e_dot_total),
                              ("hot_closed", fb.hot_closed), ("hot_closed_linear", fb.hot_closed_linear),
                              ("cold_closed", fb.cold_closed), ("control_closed", fb.control_closed)):
                c[name][k] = val
            if record_force:
                c["f_mean"][k] = float(np.trace(f_full @ rho).real)
                c["fv_sym_mean"][k] = float(np.trace(s_full @ rho).real)
            _check_health(c["trace"][k], t, lambda: rho, rec,
                          min_eig_stride > 0 and (k % min_eig_stride == 0))
            k += 1
        if i < n_steps:
            k1 = lindblad_apply(ops, rho)
            k2 = lindblad_apply(ops, rho + 0.5 * dt * k1)
            k3 = lindblad_apply(ops, rho + 0.5 * dt * k2)
            k4 = lindblad_apply(ops, rho + dt * k3)
            rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rec.result(pr, dt, stride, rho)


# ---------------------------------------------------------------------------
# steady state

@dataclass(frozen=True)
class SteadyStateInfo:
    method: str
    residual: float          # max |L(rho_ss)|
    uniqueness_checked: bool
    n_phonon: float
    x_mean: float
    n_electron: float


def _vectorized_liouvillian(ops: OperatorSet) -> np.ndarray:
    n = ops.dim
    eye = np.eye(n, dtype=complex)
    h = ops.h_osc
    L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for j in ops.jumps:
        if j.rate == 0.0:
            continue
        o = j.op
        odo = o.conj().T @ o
        L += j.rate * (np.kron(o, o.conj())
                       - 0.5 * (np.kron(odo, eye) + np.kron(eye, odo.T)))
    return L


def steady_state(ops: OperatorSet, *, check_unique: bool = True,
                 fallback_t_max: float = 2000.0) -> tuple[np.ndarray, SteadyStateInfo]:
    """Stationary state of the generator.

    Dense null-space solve (trace row replacement) for matrix side up to
    DENSE_STEADY_LIMIT; long-time integration beyond that.  The residual
    max|L(rho)| is verified below 1e-9 and uniqueness is probed by solving
    with a second pinned row; disagreement raises DegenerateSteadyStateError.
    """
    n = ops.dim
    if n <= DENSE_STEADY_LIMIT:
        L = _vectorized_liouvillian(ops)
        nn = n * n
        tr_row = np.zeros(nn, dtype=complex)
        tr_row[:: n + 1] = 1.0
        rhos = []
        rows = (0, nn - 1) if check_unique else (0,)
        for row in rows:
            M = L.copy()
            M[row, :] = tr_row
            b = np.zeros(nn, dtype=complex)
            b[row] = 1.0
            try:
                v = np.linalg.solve(M, b)
            except np.linalg.LinAlgError as exc:
                raise DegenerateSteadyStateError(
                    f"singular system with pinned row {row}: {exc}") from exc
            rhos.append(v.reshape(n, n))
        if len(rhos) == 2 and np.abs(rhos[0] - rhos[1]).max() > 1e-8:
            raise DegenerateSteadyStateError(
                "two pinned-row solves disagree: null space dimension > 1")
        rho = rhos[0]
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
        residual = float(np.abs(lindblad_apply(ops, rho)).max())
        if residual > 1e-9:
            raise DegenerateSteadyStateError(
                f"null-space solve residual {residual:.2e} exceeds 1e-9")
        method = "dense_null_space"
        unique = check_unique
    else:
        dt = default_dt(ops.params.omega)
        res = evolve(ops, None, t_max=fallback_t_max, dt=dt,
                     record_stride=1000, min_eig_stride=0)
        rho = res.rho_final
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.trace(rho).real
        residual = float(np.abs(lindblad_apply(ops, rho)).max())
        method = "long_time_integration"
        unique = False

    num_op = ops.a.conj().T @ ops.a
    info = SteadyStateInfo(
        method=method, residual=residual, uniqueness_checked=unique,
        n_phonon=float(np.trace(num_op @ rho).real),
        x_mean=float(np.trace(ops.x @ rho).real),
        n_electron=(float(np.trace(ops.number_e @ rho).real)
                    if ops.number_e is not None else float(ops.params.n_e)),
    )
    return rho, info
