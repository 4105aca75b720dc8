"""Fused elementwise kernels for the block propagator (numba).

The generator splits into GEMM products (done by BLAS) and an elementwise
remainder: Hamiltonian phases, ladder damping shifts and the
(anti)symmetrisation of the product terms.  Fusing the remainder into single
passes keeps the integrator memory-bound only on the unavoidable arrays.
All kernels write exactly symmetric real parts / antisymmetric imaginary
parts, which confines the state to the Hermitian manifold bitwise.
"""

from __future__ import annotations

import numba
import numpy as np

_sig_cache = {"cache": True, "fastmath": False}


@numba.njit(**_sig_cache)
def fuse_deriv(dR, dI, R, I, UR, UI, VR, VI, use_noise, gamma,
               delta, nsum, s_down, usum, kd, ku):
    """dR/dI <- full elementwise part of the no-jump generator.

    UR = R @ W, UI = I @ W (anticommutator halves); VR = X R X,
    VI = -X I X (noise sandwich, prepared by the caller); delta = 2w(m-m');
    kd/ku the downward/upward damping rates.
    """
    B, d, _ = R.shape
    for b in range(B):
        for i in range(d):
            for j in range(d):
                tR = -0.5 * (UR[b, i, j] + UR[b, j, i]) \
                     + delta[i, j] * I[b, i, j] - kd * nsum[i, j] * R[b, i, j]
                tI = -0.5 * (UI[b, i, j] - UI[b, j, i]) \
                     - delta[i, j] * R[b, i, j] - kd * nsum[i, j] * I[b, i, j]
                if i < d - 1 and j < d - 1:
                    s = kd * s_down[i, j]
                    tR += s * R[b, i + 1, j + 1]
                    tI += s * I[b, i + 1, j + 1]
                if ku != 0.0:
                    tR -= ku * usum[i, j] * R[b, i, j]
                    tI -= ku * usum[i, j] * I[b, i, j]
                    if i > 0 and j > 0:
                        s = ku * s_down[i - 1, j - 1]
                        tR += s * R[b, i - 1, j - 1]
                        tI += s * I[b, i - 1, j - 1]
                if use_noise:
                    tR += 0.5 * gamma * (VR[b, i, j] + VR[b, j, i])
                    tI -= 0.5 * gamma * (VI[b, i, j] - VI[b, j, i])
                dR[b, i, j] = tR
                dI[b, i, j] = tI


@numba.njit(**_sig_cache)
def add_sandwich(dR, dI, VR, VI, coef):
    """dR += coef sym(VR); dI += -coef asym(VI)  (VI = -(sandwich of I))."""
    B, d, _ = dR.shape
    for b in range(B):
        for i in range(d):
            for j in range(d):
                dR[b, i, j] += 0.5 * coef * (VR[b, i, j] + VR[b, j, i])
                dI[b, i, j] -= 0.5 * coef * (VI[b, i, j] - VI[b, j, i])


@numba.njit(**_sig_cache)
def stage(out, base, k, c):
    """out = base + c * k."""
    f = out.ravel()
    g = base.ravel()
    h = k.ravel()
    for i in range(f.size):
        f[i] = g[i] + c * h[i]


@numba.njit(**_sig_cache)
def rk4_combine(out, base, k1, k2, k3, k4, dt):
    """out = base + dt/6 (k1 + 2 k2 + 2 k3 + k4)."""
    c = dt / 6.0
    f = out.ravel()
    g = base.ravel()
    a1 = k1.ravel()
    a2 = k2.ravel()
    a3 = k3.ravel()
    a4 = k4.ravel()
    for i in range(f.size):
        f[i] = g[i] + c * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
