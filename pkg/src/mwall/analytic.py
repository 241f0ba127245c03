"""Closed-form fields for a matter wave reflecting off a uniformly moving hard wall.

The wall sits at x = v*t and is perfectly reflecting: the wavefunction vanishes
there. For an incident plane wave exp[i(kx - wt)] with w = hbar k^2 / 2m, the
lab-frame solution in the region x < v*t is

    psi(x, t) = exp[i(kx - wt)] - exp[i(k'x - w't)],

with reflected wavenumber k' = -k + 2mv/hbar and w' = hbar k'^2 / 2m. In the
frame gliding with the wall (coordinates x_bar = x - vt, k_bar = k - mv/hbar)
the same field is a standing wave 2i sin(k_bar x_bar) exp(-i hbar k_bar^2 t/2m)
times the Galilean boost phase.

Everything here works with unnormalized plane-wave fields; hbar and m stay
symbolic through PhysicalParams (natural units by default).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "FrameError",
    "NodeSingularityError",
    "PhysicalParams",
    "Frame",
    "RegimeClass",
    "Grid1D",
    "FieldSnapshot",
    "PlaneWaveScattering",
    "reflected_wavenumber",
    "reflection_coefficient",
    "dispersion",
    "reflected_phase_velocity",
    "classify_regime",
    "total_wavefunction",
    "comoving_wavefunction",
    "galilean_lift",
    "probability_density",
    "probability_current",
    "discrete_current",
    "drift_velocity",
    "schrodinger_residual",
]


class DomainError(ValueError):
    """An argument lies outside the physical domain of an operation."""


class FrameError(ValueError):
    """A snapshot is tagged with the wrong reference frame for this operation."""


class NodeSingularityError(ArithmeticError):
    """The density vanishes here, so the drift ratio J/|psi|^2 is 0/0."""


@dataclass(frozen=True)
class PhysicalParams:
    """The only dimensional inputs: hbar (action) and mass. Defaults are natural units."""

    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0.0):
            raise DomainError(f"hbar must be positive, got {self.hbar}")
        if not (self.mass > 0.0):
            raise DomainError(f"mass must be positive, got {self.mass}")


_NATURAL = PhysicalParams()


class Frame(Enum):
    """Reference frame tag: Lab (wall moves at v) or Comoving (wall static at x_bar = 0)."""

    Lab = "lab"
    Comoving = "comoving"


class RegimeClass(Enum):
    """Propagation character of the reflected wave relative to the incident one.

    For fixed k > 0 the wall velocity axis splits at the incident phase
    velocity hbar*k/2m and at hbar*k/m (where k_bar = 0 and the whole field
    vanishes identically). Between the two, reflected and incident phase
    fronts move in the same direction; beyond the second, the reflected
    phase fronts are the faster ones.

    Which component counts as "incident" is a frame convention: an observer
    gliding with the wall relabels the pair whenever k_bar changes sign. The
    labels here always refer to the lab frame with k > 0 incident.

    Note the thresholds are phase-velocity statements. Group velocities
    behave differently (the reflected group velocity is 2v - hbar*k/m), which
    is why a physical wavepacket stops colliding with the wall altogether
    once v reaches hbar*k/m.
    """

    CounterPropagating = "CounterPropagating"
    ZeroReflectedWavenumber = "ZeroReflectedWavenumber"
    CoPropagating = "CoPropagating"
    Degenerate = "Degenerate"
    CoPropagatingFaster = "CoPropagatingFaster"


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1-D grid with n nodes from x_min to x_max inclusive."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise DomainError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n < 3:
            raise DomainError(f"need at least 3 nodes, got n={self.n}")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)


@dataclass(frozen=True)
class FieldSnapshot:
    """Complex field sampled on a grid at one instant, tagged with its frame.

    wall_velocity is the lab-frame wall speed defining the comoving
    transformation; it is carried unchanged through frame changes.
    """

    time: float
    frame: Frame
    wall_velocity: float
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != (self.grid.n,):
            raise DomainError(
                f"values shape {vals.shape} does not match grid with n={self.grid.n}"
            )
        object.__setattr__(self, "values", vals)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class PlaneWaveScattering:
    """One (k, v) scattering instance; derived quantities hang off properties."""

    k: float
    v: float
    params: PhysicalParams = _NATURAL

    def __post_init__(self):
        if not (self.k > 0.0):
            raise DomainError(f"incident wavenumber k must be positive, got {self.k}")

    @property
    def k_prime(self) -> float:
        return reflected_wavenumber(self.k, self.v, self.params)

    @property
    def omega(self) -> float:
        return dispersion(self.k, self.params)

    @property
    def omega_prime(self) -> float:
        return dispersion(self.k_prime, self.params)

    @property
    def r(self) -> complex:
        return reflection_coefficient()

    @property
    def k_bar(self) -> float:
        return self.k - self.params.mass * self.v / self.params.hbar

    @property
    def regime(self) -> RegimeClass:
        return classify_regime(self.k, self.v, self.params)


def reflected_wavenumber(k: float, v: float, params: PhysicalParams = _NATURAL) -> float:
    """Doppler relation for a mirror moving at v: k' = -k + 2mv/hbar."""
    if not (k > 0.0):
        raise DomainError(f"incident wavenumber k must be positive, got {k}")
    return -k + 2.0 * params.mass * v / params.hbar


def reflection_coefficient() -> complex:
    """Amplitude ratio of reflected to incident wave; exactly -1 for a hard wall."""
    return complex(-1.0, 0.0)


def dispersion(k: float, params: PhysicalParams = _NATURAL) -> float:
    """Free-particle dispersion w(k) = hbar k^2 / 2m; even in k."""
    return params.hbar * k * k / (2.0 * params.mass)


def reflected_phase_velocity(k: float, v: float, params: PhysicalParams = _NATURAL) -> float:
    """Phase velocity of the reflected wave: v - hbar k / 2m."""
    if not (k > 0.0):
        raise DomainError(f"incident wavenumber k must be positive, got {k}")
    return v - params.hbar * k / (2.0 * params.mass)


def classify_regime(k: float, v: float, params: PhysicalParams = _NATURAL) -> RegimeClass:
    """Place (k, v) in one of five wall-velocity regimes for fixed incident k > 0.

    Threshold comparisons are exact; sweeps over floats should not land
    exactly on hbar*k/2m or hbar*k/m unless they mean to.
    """
    if not (k > 0.0):
        raise DomainError(f"incident wavenumber k must be positive, got {k}")
    v_phase = params.hbar * k / (2.0 * params.mass)
    v_degenerate = params.hbar * k / params.mass
    # k_bar = 0 kills the whole field, so no reflected wave exists to label;
    # checked before the phase-velocity thresholds.
    if v == v_degenerate:
        return RegimeClass.Degenerate
    if v < v_phase:
        return RegimeClass.CounterPropagating
    if v == v_phase:
        return RegimeClass.ZeroReflectedWavenumber
    if v < v_degenerate:
        return RegimeClass.CoPropagating
    return RegimeClass.CoPropagatingFaster


def total_wavefunction(x, t, scat: PlaneWaveScattering):
    """Lab-frame field exp[i(kx - wt)] - exp[i(k'x - w't)].

    Evaluates the formula for any x; the physical region is x <= v*t and the
    field vanishes on the wall line x = v*t. Accepts scalars or arrays.
    """
    inc = np.exp(1j * (scat.k * x - scat.omega * t))
    ref = np.exp(1j * (scat.k_prime * x - scat.omega_prime * t))
    return inc - ref


def comoving_wavefunction(x_bar, t, k_bar: float, params: PhysicalParams = _NATURAL):
    """Standing wave seen by an observer gliding with the wall.

    phi(x_bar, t) = 2i sin(k_bar x_bar) exp(-i hbar k_bar^2 t / 2m). Vanishes
    identically when k_bar = 0. Accepts scalars or arrays in x_bar and t.
    """
    return (
        2j
        * np.sin(k_bar * x_bar)
        * np.exp(-1j * params.hbar * k_bar * k_bar * t / (2.0 * params.mass))
    )


def galilean_lift(
    snapshot: FieldSnapshot, v: float, params: PhysicalParams = _NATURAL
) -> FieldSnapshot:
    """Boost a comoving snapshot into the lab frame.

    Coordinates shift by v*t and the values pick up the boost phase
    exp[i(m v x / hbar - m v^2 t / 2 hbar)], so the pointwise modulus is
    preserved. Raises FrameError if the snapshot is already lab-frame.
    """
    if snapshot.frame is not Frame.Comoving:
        raise FrameError("galilean_lift expects a Comoving snapshot")
    t = snapshot.time
    grid = Grid1D(snapshot.grid.x_min + v * t, snapshot.grid.x_max + v * t, snapshot.grid.n)
    x = grid.nodes()
    phase = np.exp(
        1j * (params.mass * v * x / params.hbar - params.mass * v * v * t / (2.0 * params.hbar))
    )
    return FieldSnapshot(
        time=t,
        frame=Frame.Lab,
        wall_velocity=snapshot.wall_velocity,
        grid=grid,
        values=phase * snapshot.values,
    )


def probability_density(x, t, scat: PlaneWaveScattering):
    """Unnormalized density 4 sin^2[(k - mv/hbar)(x - vt)]; ranges over [0, 4]."""
    u = scat.k_bar * (x - scat.v * t)
    return 4.0 * np.sin(u) ** 2


def probability_current(x, t, scat: PlaneWaveScattering):
    """Probability current J = 4v sin^2[(k - mv/hbar)(x - vt)] = v * density."""
    return scat.v * probability_density(x, t, scat)


def discrete_current(snapshot: FieldSnapshot, params: PhysicalParams = _NATURAL) -> np.ndarray:
    """Finite-difference current (hbar/m) Im(psi* d_x psi) on the snapshot grid.

    Central differences at interior nodes, second-order one-sided stencils at
    the ends; converges at O(h^2) for smooth fields.
    """
    psi = snapshot.values
    if psi.size < 3:
        raise DomainError("discrete_current needs at least 3 nodes")
    h = snapshot.grid.h
    dpsi = np.empty_like(psi)
    dpsi[1:-1] = (psi[2:] - psi[:-2]) / (2.0 * h)
    dpsi[0] = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * h)
    dpsi[-1] = (3.0 * psi[-1] - 4.0 * psi[-2] + psi[-3]) / (2.0 * h)
    return (params.hbar / params.mass) * np.imag(np.conj(psi) * dpsi)


def drift_velocity(x: float, t: float, scat: PlaneWaveScattering, node_tolerance: float = 1e-12) -> float:
    """Pattern drift J/|psi|^2, computed as the literal ratio.

    Analytically the ratio collapses to the wall velocity v everywhere the
    density is finite; keeping the division explicit makes that cancellation
    something tests can observe. At density nodes the ratio is 0/0 and a
    NodeSingularityError is raised instead of returning a silent value.
    """
    rho = probability_density(x, t, scat)
    if rho <= node_tolerance:
        raise NodeSingularityError(
            f"density {rho:g} at (x={x}, t={t}) is at or below the node tolerance {node_tolerance:g}"
        )
    return probability_current(x, t, scat) / rho


def schrodinger_residual(
    field: Callable[[float, float], complex],
    x: float,
    t: float,
    h: float,
    dt: float,
    params: PhysicalParams = _NATURAL,
) -> complex:
    """Finite-difference check that a sampled field solves i hbar d_t psi = -(hbar^2/2m) d_xx psi.

    Returns i hbar (psi_t central) + (hbar^2/2m)(psi_xx central); for an exact
    solution the magnitude is O(h^2 + dt^2), so halving both shrinks it about
    fourfold. Non-solutions leave an O(1) residual.
    """
    if not (h > 0.0 and dt > 0.0):
        raise DomainError("stencil spacings h and dt must be positive")
    dt_part = 1j * params.hbar * (field(x, t + dt) - field(x, t - dt)) / (2.0 * dt)
    dxx = (field(x + h, t) - 2.0 * field(x, t) + field(x - h, t)) / (h * h)
    return dt_part + params.hbar * params.hbar / (2.0 * params.mass) * dxx
