"""Physical parameter set and Liouvillian jump-operator assembly.

Three generator variants share one parameter record:

* ``full``         -- electron (2) x oscillator (dim) space; Johnson-noise
  dissipator, cold-bath damping at mean phonon number nbar_p, and all four
  lead tunnelling channels with position-dependent amplitudes.
* ``reduced``      -- same space with f_d = 0 and nbar_p = 0: five jump
  channels (noise, damping, source-in/out, drain-out).
* ``fixed_charge`` -- oscillator space only, electron number frozen at n_e:
  noise L[x] at rate gamma n_e^2 plus damping; no tunnelling.

Composite index convention (fixed project-wide): electron index outer,
oscillator index inner, i.e. kron(electron_op, oscillator_op); basis states
ordered |0>|0..dim-1>, |1>|0..dim-1>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import Basis, build_exp_position, build_hamiltonian, build_ladder, \
    build_momentum, build_position

__all__ = [
    "ELECTRON_ANNIHILATE",
    "EngineParams",
    "Jump",
    "OperatorSet",
    "build_operator_set",
    "compose",
    "fermi",
]

# electron space {|0>, |1>}: c|1> = |0>
ELECTRON_ANNIHILATE = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)

_MODELS = ("full", "reduced", "fixed_charge")


def fermi(energy: float, mu: float, temperature: float) -> float:
    """Fermi-Dirac occupation 1/(exp((E-mu)/T) + 1); T = 0 is the step limit."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0.0:
        if energy < mu:
            return 1.0
        if energy > mu:
            return 0.0
        return 0.5
    z = (energy - mu) / temperature
    if z > 0:  # avoid overflow for large |z|
        e = math.exp(-z)
        return e / (1.0 + e)
    return 1.0 / (math.exp(z) + 1.0)


@dataclass(frozen=True)
class EngineParams:
    """All physical and numerical knobs of the shuttle engine.

    Code units: hbar = 1, oscillator mass ``mass`` and frequency ``omega``
    default to 1; x is dimensionless (units sqrt(hbar / M w)), so ``eta`` and
    ``x0`` are dimensionless too and all rates are in units of omega.

    The lead occupations may be given directly (f_s, f_d) or computed from
    (omega_I, mu, T_s, T_d) via fermi(); the paper never states the lead
    temperatures behind its figures, so direct occupations are the default.
    """

    omega: float = 1.0
    gamma: float = 2.0          # Johnson-noise rate, gamma = e^2 E_rms^2
    kappa: float = 0.05         # cold-bath damping rate
    Gamma_s: float = 1.2        # bare source tunnelling rate
    Gamma_d: float = 0.3        # bare drain tunnelling rate
    eta: float = 0.25           # inverse tunnelling length
    x0: float = 0.3             # lead midpoint (drain sits at 2*x0)
    A: float = 1.0              # tunnelling amplitude scale
    f_s: float = 0.5            # source Fermi occupation at omega_I
    f_d: float = 0.0            # drain Fermi occupation at omega_I
    nbar_p: float = 0.0         # cold-bath mean phonon number
    mass: float = 1.0
    dim: int = 40               # oscillator truncation
    model: str = "reduced"
    n_e: int = 1                # frozen charge (fixed_charge model only)

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ValueError(f"model must be one of {_MODELS}, got {self.model!r}")
        for name in ("omega", "kappa", "Gamma_s", "Gamma_d", "gamma", "A", "mass"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.omega == 0 or self.mass == 0:
            raise ValueError("omega and mass must be positive")
        for name in ("f_s", "f_d"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.nbar_p < 0:
            raise ValueError("nbar_p must be >= 0")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.model == "fixed_charge" and self.n_e not in (0, 1):
            raise ValueError("fixed_charge n_e must be 0 or 1")
        if self.model == "reduced" and (self.f_d != 0.0 or self.nbar_p != 0.0):
            raise ValueError("reduced model requires f_d = 0 and nbar_p = 0")

    @classmethod
    def from_lead_spec(cls, omega_I: float, mu: float, T_s: float, T_d: float,
                       **kwargs) -> "EngineParams":
        """Build with occupations computed from lead energies/temperatures."""
        return cls(f_s=fermi(omega_I, mu, T_s), f_d=fermi(omega_I, mu, T_d), **kwargs)

    @property
    def alpha_s(self) -> float:
        return self.A * math.exp(self.eta * self.x0)

    @property
    def alpha_d(self) -> float:
        return self.A * math.exp(-self.eta * self.x0)

    @property
    def basis(self) -> Basis:
        return Basis(self.dim)

    def with_(self, **kwargs) -> "EngineParams":
        return replace(self, **kwargs)


def compose(basis_op: np.ndarray, electron_op: np.ndarray) -> np.ndarray:
    """Lift operators to the composite space: kron(electron_op, basis_op)."""
    electron_op = np.asarray(electron_op)
    basis_op = np.asarray(basis_op)
    if electron_op.shape != (2, 2):
        raise ValueError(f"electron operator must be 2x2, got {electron_op.shape}")
    if basis_op.ndim != 2 or basis_op.shape[0] != basis_op.shape[1]:
        raise ValueError(f"oscillator operator must be square, got {basis_op.shape}")
    return np.kron(electron_op.astype(complex), basis_op.astype(complex))


@dataclass(frozen=True)
class Jump:
    """One Lindblad channel: rate * L[op]."""

    label: str
    rate: float
    op: np.ndarray

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"jump rate for {self.label!r} must be >= 0")


@dataclass(frozen=True)
class OperatorSet:
    """Hamiltonian, observables and the jump list defining the generator.

    All matrices live on the oscillator space (fixed_charge) or the
    2*dim composite space (full/reduced); ``space`` records which.
    """

    params: EngineParams
    space: str                  # "oscillator" | "composite"
    h_osc: np.ndarray           # evolution Hamiltonian (no 3w/2 offset)
    x: np.ndarray
    p: np.ndarray
    a: np.ndarray
    c: np.ndarray | None
    number_e: np.ndarray | None
    jumps: tuple[Jump, ...]
    osc: dict = field(repr=False, default_factory=dict)  # oscillator-space building blocks

    @property
    def dim(self) -> int:
        return self.h_osc.shape[0]

    def jump(self, label: str) -> Jump:
        for j in self.jumps:
            if j.label == label:
                return j
        raise KeyError(label)


def build_operator_set(params: EngineParams, basis: Basis | None = None) -> OperatorSet:
    """Assemble the generator's operator content for the requested model."""
    if basis is None:
        basis = params.basis
    elif basis.dim != params.dim:
        raise ValueError(f"basis dim {basis.dim} != params dim {params.dim}")

    x = build_position(basis)
    p = build_momentum(basis)
    a, a_dag = build_ladder(basis)
    h = build_hamiltonian(basis, params.omega)
    f_tun = build_exp_position(basis, -params.eta, x_op=x)   # e^{-eta x}
    g_tun = build_exp_position(basis, +params.eta, x_op=x)   # e^{+eta x}
    osc = {"x": x, "p": p, "a": a, "h_osc": h, "exp_minus": f_tun, "exp_plus": g_tun}

    if params.model == "fixed_charge":
        jumps = (
            Jump("noise", params.gamma * params.n_e ** 2, x),
            Jump("damping", params.kappa * (params.nbar_p + 1.0), a),
        )
        if params.nbar_p > 0:
            jumps = jumps + (Jump("thermal", params.kappa * params.nbar_p, a_dag),)
        return OperatorSet(params=params, space="oscillator", h_osc=h, x=x, p=p, a=a,
                           c=None, number_e=None, jumps=jumps, osc=osc)

    c = ELECTRON_ANNIHILATE
    c_dag = c.conj().T
    eye2 = np.eye(2, dtype=complex)
    n_e_op = compose(np.eye(basis.dim), c_dag @ c)
    als2 = params.alpha_s ** 2
    ald2 = params.alpha_d ** 2

    jumps = [
        Jump("noise", params.gamma, compose(x, c_dag @ c)),
        Jump("damping", params.kappa * (params.nbar_p + 1.0), compose(a, eye2)),
        Jump("source_in", params.Gamma_s * params.f_s * als2, compose(f_tun, c_dag)),
        Jump("source_out", params.Gamma_s * (1.0 - params.f_s) * als2, compose(f_tun, c)),
        Jump("drain_out", params.Gamma_d * (1.0 - params.f_d) * ald2, compose(g_tun, c)),
    ]
    if params.model == "full":
        jumps.append(Jump("drain_in", params.Gamma_d * params.f_d * ald2, compose(g_tun, c_dag)))
        if params.nbar_p > 0:
            jumps.append(Jump("thermal", params.kappa * params.nbar_p, compose(a_dag, eye2)))

    return OperatorSet(
        params=params,
        space="composite",
        h_osc=compose(h, eye2),
        x=compose(x, eye2),
        p=compose(p, eye2),
        a=compose(a, eye2),
        c=compose(np.eye(basis.dim), c),
        number_e=n_e_op,
        jumps=tuple(jumps),
        osc=osc,
    )
