"""Finite-horizon sampled signals standing in for square-integrable trajectories.

A :class:`Signal` is a uniformly sampled vector trajectory on ``[0, N*dt)``.
All energy bookkeeping (norm, inner product, Fourier transform) uses the
left-endpoint rectangle rule, so time-domain and frequency-domain quantities
agree exactly (Parseval) rather than merely asymptotically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Signal",
    "Spectrum",
    "norm",
    "inner",
    "angle",
    "dft",
    "idft",
    "truncate",
    "write_csv",
    "read_csv",
    "pulse",
    "tapered_sine",
    "lowpass_noise",
    "probe_family",
    "probe_pairs",
]

# Generators must hand back signals that have effectively died out by the end
# of the horizon, so a finite window is a faithful stand-in for [0, inf).
_DECAY_RATIO = 1e-6


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled trajectory; ``samples[k]`` is the value at ``t = k*dt``.

    ``samples`` has shape ``(N, n)`` with ``N >= 1`` samples of dimension
    ``n >= 1``; a 1-D array is promoted to a single channel.  Instances are
    immutable (the sample array is marked read-only) and safe to share.
    """

    samples: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("samples must have shape (N, n) with N, n >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if not float(self.dt) > 0.0:
            raise ValueError("dt must be positive")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def horizon(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    @staticmethod
    def zeros(n_samples: int, dim: int, dt: float) -> "Signal":
        return Signal(np.zeros((n_samples, dim)), dt)

    def _check_compatible(self, other: "Signal") -> None:
        if self.samples.shape != other.samples.shape:
            raise ValueError(
                f"shape mismatch: {self.samples.shape} vs {other.samples.shape}"
            )
        if abs(self.dt - other.dt) > 1e-12 * self.dt:
            raise ValueError(f"dt mismatch: {self.dt} vs {other.dt}")

    def __add__(self, other: "Signal") -> "Signal":
        self._check_compatible(other)
        return Signal(self.samples + other.samples, self.dt)

    def __sub__(self, other: "Signal") -> "Signal":
        self._check_compatible(other)
        return Signal(self.samples - other.samples, self.dt)

    def __neg__(self) -> "Signal":
        return Signal(-self.samples, self.dt)

    def __mul__(self, c: float) -> "Signal":
        return Signal(self.samples * float(c), self.dt)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Two-sided discrete Fourier data of a :class:`Signal`.

    ``bins[k]`` is the transform at ``frequencies[k]`` (rad/s, centered at 0,
    ascending).  The normalization matches the continuous-time transform, so
    ``norm(signal)**2 == sum(|bins|**2) * d_omega / (2*pi)``.
    """

    bins: np.ndarray
    d_omega: float
    frequencies: np.ndarray

    def __post_init__(self) -> None:
        bins = np.asarray(self.bins, dtype=complex)
        if bins.ndim == 1:
            bins = bins[:, None]
        freqs = np.asarray(self.frequencies, dtype=float)
        if bins.shape[0] != freqs.shape[0]:
            raise ValueError("bins and frequencies must have equal length")
        if not float(self.d_omega) > 0.0:
            raise ValueError("d_omega must be positive")
        bins = bins.copy()
        bins.setflags(write=False)
        freqs = freqs.copy()
        freqs.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "d_omega", float(self.d_omega))

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def dim(self) -> int:
        return self.bins.shape[1]


def norm(s: Signal) -> float:
    """Energy norm ``sqrt(sum_k s_k^T s_k * dt)`` (left-endpoint quadrature)."""
    return float(np.sqrt(np.sum(s.samples * s.samples) * s.dt))


def inner(a: Signal, b: Signal) -> float:
    """Real inner product ``sum_k a_k^T b_k * dt``; ``inner(s, s) == norm(s)**2``."""
    a._check_compatible(b)
    return float(np.sum(a.samples * b.samples) * a.dt)


def angle(u: Signal, y: Signal) -> float:
    """Angle in ``[0, pi]`` between two nonzero signals.

    The cosine ratio is clamped to ``[-1, 1]`` before ``arccos`` to guard
    against round-off at the endpoints.
    """
    nu, ny = norm(u), norm(y)
    if nu == 0.0 or ny == 0.0:
        raise ValueError("angle requires both signals to have positive norm")
    c = inner(u, y) / (nu * ny)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def dft(s: Signal) -> Spectrum:
    """Two-sided transform with ``d_omega = 2*pi/(N*dt)``; inverse of :func:`idft`."""
    n = s.n_samples
    bins = np.fft.fftshift(np.fft.fft(s.samples, axis=0), axes=0) * s.dt
    freqs = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(n, d=s.dt))
    return Spectrum(bins, 2.0 * np.pi / (n * s.dt), freqs)


def idft(sp: Spectrum) -> Signal:
    """Inverse transform back to a real signal (imaginary residue discarded)."""
    n = sp.n_bins
    dt = 2.0 * np.pi / (n * sp.d_omega)
    samples = np.fft.ifft(np.fft.ifftshift(sp.bins, axes=0), axis=0) / dt
    return Signal(samples.real, dt)


def truncate(s: Signal, t_cut: float) -> Signal:
    """Zero all samples at times ``t >= t_cut``; idempotent."""
    if t_cut < 0.0:
        raise ValueError("truncation time must be nonnegative")
    out = s.samples.copy()
    out[s.times >= t_cut] = 0.0
    return Signal(out, s.dt)


# ---------------------------------------------------------------------------
# CSV interchange: header "t,x1,...,xn", uniform time spacing required.


def write_csv(s: Signal, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(s.dim)])
        for t, row in zip(s.times, s.samples):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_csv(path) -> Signal:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or not rows[0] or rows[0][0] != "t":
        raise ValueError(f"{path}: expected header 't,x1,...,xn'")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 2:
        raise ValueError(f"{path}: no sample rows")
    t = data[:, 0]
    if abs(t[0]) > 1e-12:
        raise ValueError(f"{path}: time column must start at 0")
    if len(t) > 1:
        dt = t[1] - t[0]
        if dt <= 0 or np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(dt, 1.0):
            raise ValueError(f"{path}: time column must be uniformly spaced")
    else:
        dt = 1.0
    return Signal(data[:, 1:], float(dt))


# ---------------------------------------------------------------------------
# Probe signal generators.  All probes decay to ~0 before the horizon so the
# finite window behaves like the semi-infinite axis; this is asserted.


def _check_decay(samples: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(samples))
    if peak > 0 and np.max(np.abs(samples[-1])) > _DECAY_RATIO * peak:
        raise ValueError("probe generator produced a non-decaying signal")
    return samples


def pulse(
    amplitude: float, t_off: float, horizon: float, dt: float, dim: int = 1,
    t_on: float = 0.0,
) -> Signal:
    """Rectangular pulse: ``amplitude`` on ``[t_on, t_off)``, zero elsewhere."""
    if not 0.0 <= t_on < t_off < horizon:
        raise ValueError("pulse support must satisfy 0 <= t_on < t_off < horizon")
    t = np.arange(int(round(horizon / dt))) * dt
    x = np.where((t >= t_on) & (t < t_off), amplitude, 0.0)
    return Signal(_check_decay(np.tile(x[:, None], (1, dim))), dt)


def tapered_sine(
    amplitude: float, omega: float, horizon: float, dt: float, dim: int = 1,
    fade: float = 0.1,
) -> Signal:
    """Sinusoid with a raised-cosine fade-out over the trailing ``fade`` fraction."""
    n = int(round(horizon / dt))
    t = np.arange(n) * dt
    x = amplitude * np.sin(omega * t)
    n_fade = max(2, int(n * fade))
    window = np.ones(n)
    ramp = 0.5 * (1.0 + np.cos(np.linspace(0.0, np.pi, n_fade)))
    window[-n_fade:] = ramp
    window[-1] = 0.0
    x = x * window
    return Signal(_check_decay(np.tile(x[:, None], (1, dim))), dt)


def lowpass_noise(
    rng: np.random.Generator, horizon: float, dt: float, dim: int = 1,
    cutoff: float = 2.0, amplitude: float = 1.0,
) -> Signal:
    """Seeded Gaussian noise smoothed by a one-pole filter, tapered to zero."""
    n = int(round(horizon / dt))
    white = rng.standard_normal((n, dim))
    alpha = float(np.exp(-cutoff * dt))
    out = np.empty_like(white)
    acc = np.zeros(dim)
    for k in range(n):
        acc = alpha * acc + (1.0 - alpha) * white[k]
        out[k] = acc
    n_fade = max(2, n // 10)
    window = np.ones(n)
    window[-n_fade:] = 0.5 * (1.0 + np.cos(np.linspace(0.0, np.pi, n_fade)))
    window[-1] = 0.0
    out = out * window[:, None]
    peak = np.max(np.abs(out))
    if peak > 0:
        out = out * (amplitude / peak)
    return Signal(_check_decay(out), dt)


def probe_family(
    horizon: float = 20.0, dt: float = 0.01, dim: int = 1, seed: int = 0,
    amplitude: float = 1.0,
) -> list[Signal]:
    """Fixed reproducible probe set: pulses, log-spaced sines, filtered noise."""
    rng = np.random.default_rng(seed)
    probes: list[Signal] = []
    for frac in (0.25, 0.5, 0.75):
        probes.append(pulse(amplitude, frac * horizon, horizon, dt, dim))
    for omega in np.geomspace(2.0 * np.pi / horizon, np.pi / (10.0 * dt), 6):
        probes.append(tapered_sine(amplitude, float(omega), horizon, dt, dim))
    for _ in range(3):
        probes.append(lowpass_noise(rng, horizon, dt, dim, amplitude=amplitude))
    return probes


def probe_pairs(
    horizon: float = 20.0, dt: float = 0.01, dim: int = 1, seed: int = 0,
    count: int | None = None, amplitude: float = 1.0,
) -> list[tuple[Signal, Signal]]:
    """Distinct signal pairs built from :func:`probe_family`.

    The base set pairs each probe with zero, with its half-amplitude copy and
    with its neighbor; extra seeded noise pairs are appended when ``count``
    exceeds the base set.  Output is deterministic in ``seed``.
    """
    probes = probe_family(horizon, dt, dim, seed, amplitude)
    zero = Signal.zeros(probes[0].n_samples, dim, dt)
    pairs: list[tuple[Signal, Signal]] = []
    for p in probes:
        pairs.append((p, zero))
    for p in probes:
        pairs.append((p, 0.5 * p))
    for a, b in zip(probes, probes[1:]):
        pairs.append((a, b))
    rng = np.random.default_rng(seed + 1)
    while count is not None and len(pairs) < count:
        a = lowpass_noise(rng, horizon, dt, dim, amplitude=amplitude)
        b = lowpass_noise(rng, horizon, dt, dim, amplitude=amplitude)
        pairs.append((a, b))
    if count is not None:
        pairs = pairs[:count]
    return pairs
