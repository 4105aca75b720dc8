"""Truncated operator algebra of the half-harmonic oscillator.

A particle of mass M in the potential V(x) = M w^2 x^2 / 2 for x >= 0 with a
hard wall at x = 0.  Only the odd full-line harmonic solutions survive the
boundary condition, so level m (m = 0, 1, ...) is the full-line state
n = 2m + 1 renormalised to the half line.  The level spacing is 2w and the
number operator a^dag a counts half-harmonic quanta.

Positions are dimensionless (units of sqrt(hbar / M w)); all operators are
dense complex matrices on the first `dim` levels.  Truncation is not benign
here: the wall at x = 0 gives the position operator slowly decaying
off-diagonal tails (see `position_closed_form`), so products such as X @ P
converge only polynomially in `dim`.  `commutator_residuals` quantifies this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Basis",
    "CommutatorReport",
    "build_exp_position",
    "build_hamiltonian",
    "build_ladder",
    "build_momentum",
    "build_position",
    "commutator_residuals",
    "hermite_function",
    "hermite_psi",
    "hermite_psi_deriv",
    "interior_margin",
    "position_closed_form",
    "quadrature_grid",
    "wall_derivatives",
]


@dataclass(frozen=True)
class Basis:
    """Truncated half-harmonic basis: levels m = 0 .. dim-1."""

    dim: int
    length_unit: float = 1.0  # x in units of sqrt(hbar / M w); 1 in code units

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"basis needs dim >= 2, got {self.dim}")


def hermite_function(n: int, x) -> np.ndarray:
    """Orthonormal full-line Hermite function phi_n(x).

    Three-term recurrence on the normalised functions; raw Hermite
    polynomials overflow near n ~ 150 while this stays O(1).
    """
    if n < 0:
        raise ValueError("level index must be >= 0")
    x = np.asarray(x, dtype=float)
    h0 = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n == 0:
        return h0
    h1 = math.sqrt(2.0) * x * h0
    for k in range(2, n + 1):
        h0, h1 = h1, math.sqrt(2.0 / k) * x * h1 - math.sqrt((k - 1) / k) * h0
    return h1


def _hermite_table(nmax: int, x: np.ndarray) -> np.ndarray:
    """phi_0 .. phi_nmax evaluated at x, shape (nmax+1, len(x))."""
    out = np.empty((nmax + 1, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(2, nmax + 1):
        out[n] = math.sqrt(2.0 / n) * x * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def hermite_psi(m: int, x) -> np.ndarray:
    """Half-harmonic eigenfunction psi_m(x); zero for x < 0.

    psi_m(x) = pi^(-1/4) (2^(2m) (2m+1)!)^(-1/2) H_{2m+1}(x) exp(-x^2/2)
             = sqrt(2) phi_{2m+1}(x)   for x >= 0.
    """
    if m < 0:
        raise ValueError("level index must be >= 0")
    x = np.asarray(x, dtype=float)
    val = math.sqrt(2.0) * hermite_function(2 * m + 1, x)
    return np.where(x > 0.0, val, 0.0)


def hermite_psi_deriv(m: int, x) -> np.ndarray:
    """d psi_m / dx for x > 0, via H'_n = 2n H_{n-1} (phi'_n = sqrt(2n) phi_{n-1} - x phi_n)."""
    if m < 0:
        raise ValueError("level index must be >= 0")
    x = np.asarray(x, dtype=float)
    n = 2 * m + 1
    val = math.sqrt(2.0) * (math.sqrt(2.0 * n) * hermite_function(n - 1, x)
                            - x * hermite_function(n, x))
    return np.where(x > 0.0, val, 0.0)


def quadrature_grid(basis: Basis) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, x_max].

    x_max = sqrt(2 (2 dim + 1)) + 6 covers the classical turning point of the
    highest retained level with enough padding that the Gaussian tail is
    below 1e-12; node count >= 8*dim resolves the fastest oscillation.
    """
    x_max = math.sqrt(2.0 * (2 * basis.dim + 1)) + 6.0
    n_nodes = max(8 * basis.dim, 256)
    xg, wg = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (xg + 1.0) * x_max, 0.5 * wg * x_max


def _psi_tables(basis: Basis, xg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(psi_m(x), psi'_m(x)) for m < dim on the grid, shapes (dim, n_nodes)."""
    dim = basis.dim
    phi = _hermite_table(2 * dim, xg)
    psi = math.sqrt(2.0) * phi[1::2][:dim]
    root = np.sqrt(2.0 * (2.0 * np.arange(dim) + 1.0))[:, None]
    dpsi = math.sqrt(2.0) * root * phi[0::2][:dim] - xg[None, :] * psi
    return psi, dpsi


def build_ladder(basis: Basis) -> tuple[np.ndarray, np.ndarray]:
    """(a, a_dag) with a = sum_m sqrt(m+1) |m><m+1|."""
    a = np.diag(np.sqrt(np.arange(1, basis.dim, dtype=float)), 1).astype(complex)
    return a, a.conj().T


def build_hamiltonian(basis: Basis, omega: float, include_offset: bool = False) -> np.ndarray:
    """H_osc = 2 w a^dag a, optionally plus the 3w/2 ground-state offset.

    The offset commutes with everything, so dynamics and fluxes never see it;
    it only matters when reporting absolute energies.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    e = 2.0 * omega * np.arange(basis.dim, dtype=float)
    if include_offset:
        e = e + 1.5 * omega
    return np.diag(e).astype(complex)


def build_position(basis: Basis) -> np.ndarray:
    """X_{mm'} = int_0^inf psi_m x psi_m' dx by fixed-node quadrature."""
    xg, wg = quadrature_grid(basis)
    psi, _ = _psi_tables(basis, xg)
    X = (psi * (wg * xg)) @ psi.T
    X = 0.5 * (X + X.T)  # integrand is symmetric; kill quadrature round-off
    return X.astype(complex)


def build_momentum(basis: Basis) -> np.ndarray:
    """P_{mm'} = -i int_0^inf psi_m psi'_m' dx; Hermitian, purely imaginary."""
    xg, wg = quadrature_grid(basis)
    psi, dpsi = _psi_tables(basis, xg)
    D = (psi * wg) @ dpsi.T
    D = 0.5 * (D - D.T)  # boundary terms vanish, so D is exactly antisymmetric
    return -1j * D


def build_exp_position(basis: Basis, s: float, x_op: np.ndarray | None = None,
                       mode: str = "eigen") -> np.ndarray:
    """exp(s X) for the truncated X.

    mode="eigen" (default) exponentiates the eigenvalues of the truncated X,
    so exp(s1 X) exp(s2 X) = exp((s1+s2) X) holds exactly at the truncated
    level; the jump/no-jump bookkeeping of the unravelling relies on that.
    mode="quadrature" instead integrates <m|e^{sx}|m'> directly; more accurate
    per element but it breaks the product identity (kept for error studies).
    """
    if not math.isfinite(s):
        raise ValueError("s must be finite")
    if mode == "eigen":
        if x_op is None:
            x_op = build_position(basis)
        lam, vec = np.linalg.eigh(x_op)
        return ((vec * np.exp(s * lam)) @ vec.conj().T).astype(complex)
    if mode == "quadrature":
        xg, wg = quadrature_grid(basis)
        psi, _ = _psi_tables(basis, xg)
        M = (psi * (wg * np.exp(s * xg))) @ psi.T
        return 0.5 * (M + M.T).astype(complex)
    raise ValueError(f"unknown mode {mode!r}")


def wall_derivatives(basis: Basis) -> np.ndarray:
    """psi'_m(0+) for m < dim (the wall slopes; they control truncation tails)."""
    m = np.arange(basis.dim)
    # phi_{2m}(0) = pi^(-1/4) (-1)^m sqrt((2m)!) / (2^m m!), via log to avoid overflow
    logf = np.zeros(basis.dim)
    for i in range(1, basis.dim):
        logf[i] = logf[i - 1] + 0.5 * math.log(2 * i * (2 * i - 1)) - math.log(2.0 * i)
    phi0 = np.pi ** -0.25 * (-1.0) ** m * np.exp(logf)
    return math.sqrt(2.0) * np.sqrt(2.0 * (2 * m + 1)) * phi0


def position_closed_form(basis: Basis) -> np.ndarray:
    """Off-diagonal X in closed form: X_{mm'} = -psi'_m(0) psi'_m'(0) / (2 (4(m-m')^2 - 1)).

    Follows from commuting x and then d/dx through H and keeping the wall
    boundary term; independent of the quadrature, so it serves as an oracle
    for build_position (diagonal excluded: the same derivation gives 0/0).
    """
    s = wall_derivatives(basis)
    m = np.arange(basis.dim)
    dm = m[:, None] - m[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        X = -np.outer(s, s) / (2.0 * (4.0 * dm ** 2 - 1.0))
    np.fill_diagonal(X, 0.0)
    return X


def interior_margin(dim: int) -> int:
    """Levels excluded at the top edge for interior-block checks: max(4, dim // 6)."""
    return max(4, dim // 6)


@dataclass(frozen=True)
class CommutatorReport:
    """Max-entry residuals of the canonical commutation identities."""

    dim: int
    margin: int
    xp_interior: float        # [X, P] - i  on the interior block
    xp_full: float
    xn_interior: float        # [X, a^dag a] - (i/2) P  on the interior block
    xn_full: float


def commutator_residuals(basis: Basis, margin: int | None = None,
                         ops: tuple[np.ndarray, np.ndarray] | None = None) -> CommutatorReport:
    """Residuals of [X,P] = i and [X, a^dag a] = (i/2) P on the truncated basis.

    [X, a^dag a] - (i/2) P vanishes entrywise (both sides reduce to
    (m'-m) X_{mm'}), so its residual sits at the quadrature floor.  [X, P]
    involves a genuine operator product whose tail over the discarded levels
    decays only polynomially, so its interior residual is large at practical
    dims and shrinks slowly; the report exposes both.
    """
    dim = basis.dim
    if margin is None:
        margin = interior_margin(dim)
    if ops is None:
        X, P = build_position(basis), build_momentum(basis)
    else:
        X, P = ops
    N = np.diag(np.arange(dim, dtype=float)).astype(complex)
    c_xp = X @ P - P @ X - 1j * np.eye(dim)
    c_xn = X @ N - N @ X - 0.5j * P
    k = max(dim - margin, 1)
    return CommutatorReport(
        dim=dim,
        margin=margin,
        xp_interior=float(np.abs(c_xp[:k, :k]).max()),
        xp_full=float(np.abs(c_xp).max()),
        xn_interior=float(np.abs(c_xn[:k, :k]).max()),
        xn_full=float(np.abs(c_xn).max()),
    )
