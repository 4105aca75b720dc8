"""Fast block-structured propagation engine (internal).

The composite generator never couples the two electron sectors coherently:
every jump operator is proportional to c, c^dag or c^dag c, so a state that
starts block-diagonal in electron number stays block-diagonal, and a
conditional trajectory is a single oscillator-space block plus a classical
charge bit.  This module evolves those blocks with real arithmetic:

* a state block rho = R + i I is stored as the real pair (R, I);
* every derivative term is assembled so R stays bitwise symmetric and I
  bitwise antisymmetric (e.g. anticommutators as T + T^T), which confines
  round-off to the Hermitian manifold -- the physical generator restricted
  there is dissipative, so the integration is stable where a naive
  "T + T.conj().T" right-hand side (antilinear off the manifold) blows up;
* all heavy products are real GEMMs against the real symmetric matrices
  X, X^2, e^{+-eta x} and e^{+-2 eta x}, half the flops of complex GEMMs.

Everything here is validated against the dense complex generator in the
tests; the public API lives in master.py / trajectories.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import add_sandwich, fuse_deriv, rk4_combine, stage
from .model import EngineParams, OperatorSet

__all__ = ["EngineMatrices", "TrajectoryState", "rk4_step_blocks", "rk4_step_single"]

RK4_STABILITY_LIMIT = 2.78  # |z| bound on the negative real axis


@dataclass
class EngineMatrices:
    """Real-arithmetic building blocks shared by the fast paths."""

    params: EngineParams
    dim: int
    # oscillator-space real matrices
    X: np.ndarray
    X2: np.ndarray
    F: np.ndarray            # e^{-eta x}
    G: np.ndarray            # e^{+eta x}
    F2: np.ndarray           # e^{-2 eta x}
    G2: np.ndarray           # e^{+2 eta x}
    W0: np.ndarray           # anticommutator matrix, uncharged block
    W1: np.ndarray           # anticommutator matrix, charged block (no noise)
    Wc: np.ndarray           # W1 + gamma X^2 (charged incl. noise)
    delta: np.ndarray        # 2 w (m - m') grid (real antisymmetric)
    energy: np.ndarray       # 2 w m
    s_down: np.ndarray       # sqrt(m) sqrt(m') outer grid for a rho a^dag
    nsum: np.ndarray         # (m + m')/2 grid for {a^dag a, .}
    usum: np.ndarray         # (u_m + u_m')/2 grid for {a a^dag, .} (truncated)
    rate_in: float
    rate_out: float
    rate_dr: float
    rate_drin: float
    kappa_down: float        # kappa (nbar + 1)
    kappa_up: float          # kappa nbar
    gamma: float
    # flux adjoint matrices (A such that Tr[H L_term rho] = <A>)
    adj_hot: np.ndarray      # gamma-noise adjoint of H (per unit rate, per n_e^2)
    cold_diag: np.ndarray    # -D+[a](H) diagonal (energy flow out per unit kappa_down)
    cold_up_diag: np.ndarray  # -D+[a^dag](H) diagonal (per unit kappa_up)
    adj_in: np.ndarray       # source-in adjoint (per unit rate), acts on block 0
    adj_out: np.ndarray      # source-out adjoint, block 1
    adj_dr: np.ndarray       # drain-out adjoint, block 1
    adj_drin: np.ndarray     # drain-in adjoint, block 0 (full model)
    meas0: np.ndarray        # (1/2){W0, H} for the measurement flux, block 0
    meas1: np.ndarray        # (1/2){W1, H}, block 1
    # observables
    P_im: np.ndarray         # Im P (real antisymmetric); <p> = -sum(P_im * I^T)
    force_im: np.ndarray | None = None   # Im F_work
    fv_sym: np.ndarray | None = None     # (F v + v F)/2, real symmetric
    p0: float = 0.0                      # ground-state offset of fv_sym
    stiffness: float = field(default=0.0)

    @classmethod
    def from_operator_set(cls, ops: OperatorSet) -> "EngineMatrices":
        pr = ops.params
        d = pr.dim
        X = ops.osc["x"].real.copy()
        H = ops.osc["h_osc"].real
        F = ops.osc["exp_minus"].real.copy()
        G = ops.osc["exp_plus"].real.copy()
        F2 = F @ F
        G2 = G @ G
        X2 = X @ X
        m = np.arange(d, dtype=float)
        a = ops.osc["a"].real
        rate_in = pr.Gamma_s * pr.f_s * pr.alpha_s ** 2
        rate_out = pr.Gamma_s * (1.0 - pr.f_s) * pr.alpha_s ** 2
        rate_dr = pr.Gamma_d * (1.0 - pr.f_d) * pr.alpha_d ** 2
        rate_drin = pr.Gamma_d * pr.f_d * pr.alpha_d ** 2 if pr.model == "full" else 0.0
        if pr.model == "fixed_charge":
            rate_in = rate_out = rate_dr = rate_drin = 0.0
        W0 = rate_in * F2 + rate_drin * G2
        W1 = rate_out * F2 + rate_dr * G2
        gamma_eff = pr.gamma if pr.model != "fixed_charge" else pr.gamma * pr.n_e ** 2
        Wc = W1 + gamma_eff * X2

        aa_dag = a @ a.T  # truncated product: diag(1 .. d-1, 0)
        u = np.diag(aa_dag).copy()

        def anti(A):  # adjoint of (1/2){A, .} on H: we store (A H + H A)/2
            return 0.5 * (A @ H + H @ A)

        adj_hot = X @ H @ X - anti(X2) * 1.0  # X H X - (1/2){X^2, H}
        cold_diag = -(np.diag(a.T @ H @ a) - m * np.diag(H))      # -D+[a](H) diagonal
        cold_up_diag = -(np.diag(a @ H @ a.T) - u * np.diag(H))   # -D+[a^dag](H) diagonal
        adj_in = F @ H @ F - anti(F2)
        adj_out = adj_in.copy()   # same oscillator factor e^{-eta x}
        adj_dr = G @ H @ G - anti(G2)
        adj_drin = adj_dr.copy()

        eng = cls(
            params=pr, dim=d, X=X, X2=X2, F=F, G=G, F2=F2, G2=G2,
            W0=W0, W1=W1, Wc=Wc,
            delta=(2.0 * pr.omega) * (m[:, None] - m[None, :]),
            energy=2.0 * pr.omega * m,
            s_down=np.outer(np.sqrt(m[1:]), np.sqrt(m[1:])),
            nsum=0.5 * (m[:, None] + m[None, :]),
            usum=0.5 * (u[:, None] + u[None, :]),
            rate_in=rate_in, rate_out=rate_out, rate_dr=rate_dr, rate_drin=rate_drin,
            kappa_down=pr.kappa * (pr.nbar_p + 1.0),
            kappa_up=pr.kappa * pr.nbar_p,
            gamma=gamma_eff,
            adj_hot=adj_hot, cold_diag=cold_diag, cold_up_diag=cold_up_diag,
            adj_in=adj_in, adj_out=adj_out, adj_dr=adj_dr, adj_drin=adj_drin,
            meas0=anti(W0), meas1=anti(W1),
            P_im=ops.osc["p"].imag.copy(),
        )
        # dissipative stiffness estimate: fastest decay rate seen by RK4,
        # from the extremal eigenvalues of X (the tunnelling exponentials
        # peak at e^{2 eta lam_max}, far above their diagonal entries)
        lam = np.linalg.eigvalsh(X)
        spread = float(lam.max() - lam.min())
        f2max = float(np.exp(-2.0 * pr.eta * lam.min()))
        g2max = float(np.exp(2.0 * pr.eta * lam.max()))
        eng.stiffness = (
            gamma_eff * 0.5 * spread ** 2
            + (rate_out + rate_in) * f2max + (rate_dr + rate_drin) * g2max
            + eng.kappa_down * (d - 1.0) + eng.kappa_up * d
        )
        return eng

    def attach_force(self, force_op: np.ndarray, fv_sym: np.ndarray, p0: float) -> None:
        self.force_im = np.ascontiguousarray(force_op.imag)
        self.fv_sym = np.ascontiguousarray(fv_sym.real)
        self.p0 = p0

    def check_step(self, dt: float) -> float:
        """z = dt * stiffness; RK4 needs z < 2.78 (use margin ~2 in practice)."""
        return dt * self.stiffness


# ---------------------------------------------------------------------------
# derivative evaluations
#
# Products are arranged so the expensive GEMMs always right-multiply a
# contiguous (B*d, d) view by a real symmetric (d, d) matrix, and the
# symmetry of the state supplies the left products for free:
#   R @ W + (R @ W)^T = W R + R W          (R symmetric, W symmetric)
#   ((R @ X)^T) @ X   = X R X
#   ((I @ X)^T) @ X   = -X I X             (I antisymmetric)
# The fused kernels then write exactly symmetric dR / antisymmetric dI, so
# the state never leaves the Hermitian manifold (where the generator is
# dissipative); a naive RHS that conjugates the state is unstable to
# round-off off that manifold.

def _rmul(batch: np.ndarray, M: np.ndarray) -> np.ndarray:
    """batch (B,d,d) @ M as a single GEMM."""
    B, d, _ = batch.shape
    return np.dot(batch.reshape(B * d, d), M).reshape(B, d, d)


def _t_copy(batch: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(batch.transpose(0, 2, 1))


def _sandwich(batch_R, batch_I, M):
    """(M R M, -(M I M)) via two right-GEMMs per part."""
    VR = _rmul(_t_copy(_rmul(batch_R, M)), M)
    VI = _rmul(_t_copy(_rmul(batch_I, M)), M)
    return VR, VI


def deriv_single(eng: EngineMatrices, R: np.ndarray, I: np.ndarray, charged: bool):
    """Conditional (no-jump, pre-renormalisation) generator on one block batch."""
    W = eng.Wc if charged else eng.W0
    UR = _rmul(R, W)
    UI = _rmul(I, W)
    use_noise = bool(charged and eng.gamma != 0.0)
    if use_noise:
        VR, VI = _sandwich(R, I, eng.X)
    else:
        VR, VI = UR, UI  # placeholders; kernel skips them
    dR = np.empty_like(R)
    dI = np.empty_like(I)
    fuse_deriv(dR, dI, R, I, UR, UI, VR, VI, use_noise, eng.gamma,
               eng.delta, eng.nsum, eng.s_down, eng.usum,
               eng.kappa_down, eng.kappa_up)
    return dR, dI


def deriv_blocks(eng: EngineMatrices, R0, I0, R1, I1):
    """Unconditional two-block generator (adds the jump feed terms)."""
    dR0, dI0 = deriv_single(eng, R0, I0, charged=False)
    dR1, dI1 = deriv_single(eng, R1, I1, charged=True)
    if eng.rate_in:
        add_sandwich(dR1, dI1, *_sandwich(R0, I0, eng.F), eng.rate_in)
    if eng.rate_drin:
        add_sandwich(dR1, dI1, *_sandwich(R0, I0, eng.G), eng.rate_drin)
    if eng.rate_out:
        add_sandwich(dR0, dI0, *_sandwich(R1, I1, eng.F), eng.rate_out)
    if eng.rate_dr:
        add_sandwich(dR0, dI0, *_sandwich(R1, I1, eng.G), eng.rate_dr)
    return dR0, dI0, dR1, dI1


def rk4_step_single(eng, R, I, charged, dt):
    k1R, k1I = deriv_single(eng, R, I, charged)
    sR, sI = np.empty_like(R), np.empty_like(I)
    stage(sR, R, k1R, 0.5 * dt)
    stage(sI, I, k1I, 0.5 * dt)
    k2R, k2I = deriv_single(eng, sR, sI, charged)
    stage(sR, R, k2R, 0.5 * dt)
    stage(sI, I, k2I, 0.5 * dt)
    k3R, k3I = deriv_single(eng, sR, sI, charged)
    stage(sR, R, k3R, dt)
    stage(sI, I, k3I, dt)
    k4R, k4I = deriv_single(eng, sR, sI, charged)
    outR, outI = np.empty_like(R), np.empty_like(I)
    rk4_combine(outR, R, k1R, k2R, k3R, k4R, dt)
    rk4_combine(outI, I, k1I, k2I, k3I, k4I, dt)
    return outR, outI


def rk4_step_blocks(eng, blocks, dt):
    y = tuple(blocks)
    k1 = deriv_blocks(eng, *y)
    s = tuple(np.empty_like(a) for a in y)
    for a, b, k in zip(s, y, k1):
        stage(a, b, k, 0.5 * dt)
    k2 = deriv_blocks(eng, *s)
    for a, b, k in zip(s, y, k2):
        stage(a, b, k, 0.5 * dt)
    k3 = deriv_blocks(eng, *s)
    for a, b, k in zip(s, y, k3):
        stage(a, b, k, dt)
    k4 = deriv_blocks(eng, *s)
    out = tuple(np.empty_like(a) for a in y)
    for i in range(4):
        rk4_combine(out[i], y[i], k1[i], k2[i], k3[i], k4[i], dt)
    return out


# ---------------------------------------------------------------------------
# observable extraction on real pairs

def trace_batch(R: np.ndarray) -> np.ndarray:
    return np.einsum("bii->b", R)


def expect_sym(A: np.ndarray, R: np.ndarray) -> np.ndarray:
    """<A> for a real symmetric A against blocks (R, I): only R contributes."""
    return np.einsum("ij,bij->b", A, R)


def expect_antisym_im(A_im: np.ndarray, I: np.ndarray) -> np.ndarray:
    """<A> for purely imaginary Hermitian A = i A_im: Re Tr = -sum A_im I^T."""
    return np.einsum("ij,bij->b", A_im, I)


def expect_diag(v: np.ndarray, R: np.ndarray) -> np.ndarray:
    return np.einsum("i,bii->b", v, R)


@dataclass
class TrajectoryState:
    """One chunk of conditional trajectories: stacked blocks + charge bits."""

    R: np.ndarray            # (B, d, d) real
    I: np.ndarray
    charged: np.ndarray      # (B,) bool

    @classmethod
    def initial(cls, n: int, dim: int, R0: np.ndarray, I0: np.ndarray, charged: bool):
        R = np.broadcast_to(R0, (n, dim, dim)).copy()
        I = np.broadcast_to(I0, (n, dim, dim)).copy()
        return cls(R=R, I=I, charged=np.full(n, charged, dtype=bool))
