"""Measurement layer: pull reflected wavenumbers out of simulated fields.

The point of the measurement chain is that it never assumes the Doppler
relation k' = -k + 2mv/hbar. The packet is evolved by the finite-difference
integrator in the comoving frame, lifted to the lab frame with the boost
phase (pure kinematics), and the signed spectral peak of the reflected
packet is read off a windowed Fourier transform. Agreement with the closed
form is then evidence, not construction.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .analytic import (
    DomainError,
    FieldSnapshot,
    PhysicalParams,
    RegimeClass,
    classify_regime,
    reflected_wavenumber,
)
from .solver import (
    EvolutionConfig,
    NoCollisionError,
    auto_step_count,
    evolve,
    init_gaussian,
    to_lab_frame,
    WavepacketSpec,
)

__all__ = [
    "NoSignalError",
    "AliasedShiftError",
    "FlatPatternError",
    "ContaminatedRunError",
    "SpectralEstimate",
    "SweepRow",
    "DopplerReport",
    "estimate_peak_wavenumber",
    "reflection_estimate",
    "measure_reflection",
    "doppler_sweep",
    "measure_drift_velocity",
]

# Fraction of spectral power that must sit at negative comoving wavenumbers
# before a snapshot counts as "after the collision".
REVERSAL_GATE = 0.99

_ZERO_PAD = 8
_EDGE_MARGIN_NODES = 4


class NoSignalError(ValueError):
    """The field in the requested region is numerically zero."""


class AliasedShiftError(ValueError):
    """The pattern moved at least half a period between frames; shift is ambiguous."""


class FlatPatternError(ValueError):
    """k_bar = 0: the density pattern is featureless and carries no shift information."""


class ContaminatedRunError(RuntimeError):
    """The underlying run tripped the far-boundary contamination warning."""


@dataclass(frozen=True)
class SpectralEstimate:
    """Signed peak wavenumber with the window-limited resolution it came with.

    k_peak carries a +-resolution/2 meaning; amplitude is the coherent-gain
    corrected magnitude of the windowed peak.
    """

    k_peak: float
    amplitude: float
    resolution: float

    def __post_init__(self):
        if not (self.resolution > 0.0):
            raise DomainError(f"resolution must be positive, got {self.resolution}")


@dataclass(frozen=True)
class SweepRow:
    """One wall velocity of a Doppler sweep."""

    v: float
    k_predicted: float
    regime: RegimeClass
    k_measured: Optional[float] = None
    relative_error: Optional[float] = None
    skipped_reason: Optional[str] = None
    resolution: Optional[float] = None

    def passes(self, rel_tol: float = 0.02) -> Optional[bool]:
        """Tolerance check max(resolution, rel_tol*|k_pred|); None for skipped rows."""
        if self.skipped_reason is not None:
            return None
        tol = max(self.resolution, rel_tol * abs(self.k_predicted))
        return abs(self.k_measured - self.k_predicted) <= tol


@dataclass(frozen=True)
class DopplerReport:
    """Predicted vs measured reflected wavenumbers across wall velocities."""

    k0: float
    params: PhysicalParams
    rows: tuple[SweepRow, ...]

    def to_json_dict(self) -> dict:
        return {
            "k0": self.k0,
            "hbar": self.params.hbar,
            "mass": self.params.mass,
            "rows": [
                {
                    "v": r.v,
                    "k_predicted": r.k_predicted,
                    "k_measured": r.k_measured,
                    "relative_error": r.relative_error,
                    "regime": r.regime.value,
                    "skipped_reason": r.skipped_reason,
                }
                for r in self.rows
            ],
        }

    def to_csv(self) -> str:
        from .serialize import format_number

        lines = ["v,k_predicted,k_measured,relative_error,regime,skipped_reason"]
        for r in self.rows:
            cells = [
                format_number(r.v),
                format_number(r.k_predicted),
                "" if r.k_measured is None else format_number(r.k_measured),
                "" if r.relative_error is None else format_number(r.relative_error),
                r.regime.value,
                r.skipped_reason or "",
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def estimate_peak_wavenumber(
    snapshot: FieldSnapshot, region: tuple[float, float]
) -> SpectralEstimate:
    """Locate the dominant signed wavenumber of the field over [x_lo, x_hi].

    Hann window over the region, 8x zero-padded FFT of the complex field,
    argmax over the signed spectrum, then 3-point parabolic refinement of the
    peak bin. Resolution is 2 pi / (window length). The sign of k_peak
    distinguishes the propagation direction, which is the whole point here.
    """
    x_lo, x_hi = region
    x = snapshot.grid.nodes()
    sel = (x >= x_lo) & (x <= x_hi)
    vals = snapshot.values[sel]
    n = int(vals.size)
    if n < 64:
        raise DomainError(f"region [{x_lo}, {x_hi}] holds {n} nodes; need at least 64")
    if float(np.max(np.abs(vals))) < 1e-12:
        raise NoSignalError(f"field is numerically zero over [{x_lo}, {x_hi}]")
    h = snapshot.grid.h
    window = np.hanning(n)
    n_fft = _ZERO_PAD * n
    spectrum = np.fft.fftshift(np.fft.fft(vals * window, n=n_fft))
    k = np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(n_fft, d=h))
    mag = np.abs(spectrum)
    i = int(np.argmax(mag))
    if 0 < i < n_fft - 1:
        a, b, g = mag[i - 1], mag[i], mag[i + 1]
        denom = a - 2.0 * b + g
        delta = 0.0 if denom == 0.0 else 0.5 * (a - g) / denom
        peak_mag = b - 0.25 * (a - g) * delta
    else:
        delta = 0.0
        peak_mag = mag[i]
    bin_width = 2.0 * np.pi / (n_fft * h)
    return SpectralEstimate(
        k_peak=float(k[i] + delta * bin_width),
        amplitude=float(peak_mag / np.sum(window)),
        resolution=2.0 * np.pi / (n * h),
    )


def _reversed_fraction(snapshot: FieldSnapshot) -> float:
    """Spectral power fraction at negative comoving wavenumbers."""
    power = np.abs(np.fft.fft(snapshot.values)) ** 2
    k = np.fft.fftfreq(snapshot.grid.n, d=snapshot.grid.h)
    total = float(np.sum(power))
    if total == 0.0:
        return 0.0
    return float(np.sum(power[k < 0.0])) / total


def reflection_estimate(
    k0_lab: float, v: float, sim: EvolutionConfig, spec: WavepacketSpec
) -> SpectralEstimate:
    """Run one reflection and estimate the lab-frame wavenumber of the packet after it.

    Time gating picks the measurement snapshot: among emitted states with more
    than 99% of the spectral power already at negative comoving wavenumbers,
    the one whose density centroid sits closest to mid-domain is used (there
    the window weights the packet symmetrically, which keeps the chirped
    packet from biasing the peak). The snapshot is lifted to the lab frame and
    the signed peak is read over the whole domain minus a small edge margin.
    """
    packet = init_gaussian(sim.grid, replace(spec, k0_lab=k0_lab), v, sim.params)
    result = evolve(packet, sim)
    if result.boundary_contaminated:
        raise ContaminatedRunError(
            f"ContaminatedRun: far-boundary contamination at v={v:g}; enlarge the domain "
            "or shorten the run"
        )
    mid = sim.grid.x_min / 2.0
    nodes = sim.grid.nodes()
    best = None
    for snap in result.snapshots[1:]:
        if _reversed_fraction(snap) <= REVERSAL_GATE:
            continue
        dens = snap.density()
        centroid = float(np.sum(nodes * dens) / np.sum(dens))
        offset = abs(centroid - mid)
        if best is None or offset < best[0]:
            best = (offset, snap)
    if best is None:
        raise DomainError(
            f"momentum reversal never exceeded {REVERSAL_GATE:.0%} during the run at v={v:g}; "
            "the evolution is too short to measure a reflected packet"
        )
    lab = to_lab_frame(best[1], v, sim.params)
    h = lab.grid.h
    region = (lab.grid.x_min + (_EDGE_MARGIN_NODES - 0.5) * h, lab.grid.x_max + h)
    return estimate_peak_wavenumber(lab, region)


def measure_reflection(
    k0_lab: float, v: float, sim: EvolutionConfig, spec: WavepacketSpec
) -> float:
    """Measured lab-frame wavenumber of the reflected packet (signed)."""
    return reflection_estimate(k0_lab, v, sim, spec).k_peak


def _sweep_workers(n_rows: int) -> int:
    raw = os.environ.get("MWALL_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap <= 0:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_rows))


def _sweep_row(
    k0_lab: float, v: float, sim_template: EvolutionConfig, spec: WavepacketSpec
) -> SweepRow:
    params = sim_template.params
    k_pred = reflected_wavenumber(k0_lab, v, params)
    regime = classify_regime(k0_lab, v, params)
    row_spec = replace(spec, k0_lab=k0_lab)
    try:
        sim = replace(
            sim_template,
            wall_velocity=v,
            n_steps=auto_step_count(row_spec, v, sim_template.grid, sim_template.dt, params),
            snapshot_stride=max(1, round(0.5 / sim_template.dt)),
        )
        est = reflection_estimate(k0_lab, v, sim, row_spec)
    except NoCollisionError as exc:
        return SweepRow(v=v, k_predicted=k_pred, regime=regime, skipped_reason=str(exc))
    except ContaminatedRunError as exc:
        return SweepRow(v=v, k_predicted=k_pred, regime=regime, skipped_reason=str(exc))
    # Near the k' = 0 threshold a relative error against |k_pred| blows up;
    # fall back to the resolution scale as denominator there.
    rel = abs(est.k_peak - k_pred) / max(abs(k_pred), 3.0 * est.resolution)
    return SweepRow(
        v=v,
        k_predicted=k_pred,
        regime=regime,
        k_measured=est.k_peak,
        relative_error=rel,
        resolution=est.resolution,
    )


def doppler_sweep(
    k0_lab: float,
    velocities: list[float],
    sim_template: EvolutionConfig,
    spec: WavepacketSpec,
) -> DopplerReport:
    """One reflection measurement per wall velocity, assembled in input order.

    Each row runs an independently sized simulation (n_steps and stride of the
    template are re-derived per velocity, everything else is reused). Rows
    are pure and independent; they execute on a small thread pool capped by
    MWALL_THREADS (0 or unset = one worker per core). Output is identical for
    any worker count.
    """
    if not velocities:
        raise DomainError("velocities must be non-empty")
    workers = _sweep_workers(len(velocities))
    if workers == 1:
        rows = [_sweep_row(k0_lab, v, sim_template, spec) for v in velocities]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(lambda v: _sweep_row(k0_lab, v, sim_template, spec), velocities)
            )
    return DopplerReport(k0=k0_lab, params=sim_template.params, rows=tuple(rows))


def measure_drift_velocity(
    density_a: np.ndarray,
    density_b: np.ndarray,
    grid,
    delta_t: float,
    k_bar: float,
) -> float:
    """Drift speed of the density pattern from two samples delta_t apart.

    Finds the cyclic shift maximizing the cross-correlation of the two arrays
    (FFT correlation, 3-point parabolic sub-node refinement) and returns
    shift / delta_t. The pattern 4 sin^2[k_bar (x - vt)] repeats every
    pi/|k_bar|, so only shifts below half that period are unambiguous; a peak
    landing at that limit raises AliasedShiftError. k_bar = 0 has no pattern
    to track at all.
    """
    if k_bar == 0.0:
        raise FlatPatternError("k_bar = 0: density is constant and carries no drift signal")
    if not (delta_t > 0.0):
        raise DomainError(f"delta_t must be positive, got {delta_t}")
    a = np.asarray(density_a, dtype=float)
    b = np.asarray(density_b, dtype=float)
    n = a.size
    if b.size != n or n != grid.n:
        raise DomainError("density arrays must both match the grid length")
    h = grid.h
    half_period = np.pi / (2.0 * abs(k_bar))
    corr = np.fft.ifft(np.conj(np.fft.fft(a - a.mean())) * np.fft.fft(b - b.mean())).real
    shifts = np.fft.fftfreq(n, d=1.0 / n).astype(int)  # signed node shifts
    admissible = np.abs(shifts * h) < half_period
    if not np.any(admissible):
        raise AliasedShiftError(
            f"half period {half_period:g} is below the grid spacing {h:g}; shift unresolvable"
        )
    candidates = np.flatnonzero(admissible)
    i = candidates[int(np.argmax(corr[candidates]))]
    if abs(shifts[i] * h) >= half_period - h:
        raise AliasedShiftError(
            f"correlation peak at shift {shifts[i] * h:g} sits at the half-period limit "
            f"{half_period:g}; |v|*delta_t must stay below it"
        )
    ca, cb, cg = corr[(i - 1) % n], corr[i], corr[(i + 1) % n]
    denom = ca - 2.0 * cb + cg
    delta = 0.0 if denom == 0.0 else 0.5 * (ca - cg) / denom
    return float((shifts[i] + delta) * h / delta_t)
