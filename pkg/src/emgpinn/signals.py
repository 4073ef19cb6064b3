"""EMG envelope extraction and joint-angle conditioning."""
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal

from .errors import NoOverlap, NonPositiveMvc, NyquistViolation, TooShort

EMG_RATE = 4000.0
ANGLE_RATE = 125.0


@dataclass(frozen=True)
class UniformSeries:
    """Uniformly sampled multichannel signal; ``values`` has shape (n, channels)."""

    rate: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be > 0, got {self.rate}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError(f"values must be 1-D or 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dt(self):
        return 1.0 / self.rate

    @property
    def times(self):
        return self.t0 + np.arange(len(self.values)) / self.rate

    def __len__(self):
        return len(self.values)

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    corners: tuple
    order: int = 4

    def __post_init__(self):
        corners = tuple(float(c) for c in np.atleast_1d(self.corners))
        if self.kind == "bandpass" and len(corners) != 2:
            raise ValueError("bandpass needs two corner frequencies")
        if self.kind == "lowpass" and len(corners) != 1:
            raise ValueError("lowpass needs one corner frequency")
        if self.kind not in ("bandpass", "lowpass"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        object.__setattr__(self, "corners", corners)


EMG_BANDPASS = FilterSpec("bandpass", (10.0, 450.0), 4)
EMG_LOWPASS = FilterSpec("lowpass", (7.0,), 4)


def butter_sos(spec, rate):
    nyq = 0.5 * rate
    for c in spec.corners:
        if not 0 < c < nyq:
            raise NyquistViolation(f"corner {c} Hz must lie in (0, {nyq}) for rate {rate} Hz")
    btype = "bandpass" if spec.kind == "bandpass" else "lowpass"
    wn = spec.corners if btype == "bandpass" else spec.corners[0]
    return signal.butter(spec.order, wn, btype=btype, fs=rate, output="sos")


def butterworth_filter(x, spec, zero_phase=True):
    """Butterworth IIR filter along time; forward-backward when ``zero_phase``."""
    sos = butter_sos(spec, x.rate)
    if zero_phase:
        y = signal.sosfiltfilt(sos, x.values, axis=0)
    else:
        y = signal.sosfilt(sos, x.values, axis=0)
    return x.with_values(y)


def rectify(x):
    return x.with_values(np.abs(x.values))


def mvc_normalize(env, mvc_peak):
    peak = np.broadcast_to(np.asarray(mvc_peak, dtype=float), (env.values.shape[1],))
    if not np.all(peak > 0):
        raise NonPositiveMvc(f"MVC peaks must be > 0, got {peak.tolist()}")
    return env.with_values(env.values / peak)


def raw_envelope(raw, bandpass=EMG_BANDPASS, lowpass=EMG_LOWPASS):
    """Linear envelope before MVC scaling: band-pass, rectify, low-pass."""
    return butterworth_filter(rectify(butterworth_filter(raw, bandpass)), lowpass)


def emg_envelope(raw, mvc_peak, bandpass=EMG_BANDPASS, lowpass=EMG_LOWPASS):
    """MVC-normalized linear envelope of raw EMG.

    The forward-backward low-pass can ring slightly below zero next to sharp
    onsets; those samples are clipped to 0 so the envelope stays a magnitude.
    """
    env = raw_envelope(raw, bandpass, lowpass)
    env = env.with_values(np.maximum(env.values, 0.0))
    return mvc_normalize(env, mvc_peak)


def mvc_peaks(mvc_trials, bandpass=EMG_BANDPASS, lowpass=EMG_LOWPASS):
    """Per-channel maximum of the processed envelope over the MVC recordings."""
    peaks = None
    for raw in mvc_trials:
        p = raw_envelope(raw, bandpass, lowpass).values.max(axis=0)
        peaks = p if peaks is None else np.maximum(peaks, p)
    if peaks is None:
        raise ValueError("no MVC trials given")
    return peaks


def gaussian_kernel(sigma_samples, half_width_samples):
    if not sigma_samples > 0:
        raise ValueError("sigma must be > 0")
    hw = int(half_width_samples)
    if hw < 1:
        raise ValueError("half_width must be >= 1")
    k = np.arange(-hw, hw + 1, dtype=float)
    w = np.exp(-0.5 * (k / sigma_samples) ** 2)
    return w / w.sum()


def gaussian_smooth(x, sigma_samples=10.0, half_width_samples=None):
    """Truncated, renormalized Gaussian smoothing with reflection at the edges.

    ``half_width_samples`` defaults to ``ceil(3 * sigma)``.
    """
    if half_width_samples is None:
        half_width_samples = int(np.ceil(3.0 * sigma_samples))
    w = gaussian_kernel(sigma_samples, half_width_samples)
    hw = len(w) // 2
    v = x.values
    if len(v) == 1:
        return x
    padded = np.pad(v, ((hw, hw), (0, 0)), mode="reflect")
    out = np.empty_like(v)
    for c in range(v.shape[1]):
        out[:, c] = np.convolve(padded[:, c], w, mode="valid")
    return x.with_values(out)


def central_difference(x, order=1):
    """Central differences with second-order one-sided stencils at the ends."""
    v = x.values
    n = len(v)
    if n < 3:
        raise TooShort(f"need at least 3 samples, got {n}")
    dt = x.dt
    out = np.empty_like(v)
    if order == 1:
        out[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
        out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dt)
        out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * dt)
    elif order == 2:
        out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / dt ** 2
        if n >= 4:
            out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / dt ** 2
            out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / dt ** 2
        else:
            out[0] = out[1]
            out[-1] = out[1]
    else:
        raise ValueError("order must be 1 or 2")
    return x.with_values(out)


def align_and_resample(emg_env, angles):
    """Average the envelope over each angle sample period.

    Each angle sample at ``t_k`` takes the mean of envelope samples in
    ``[t_k - T/2, t_k + T/2)`` with ``T`` the angle period. Angle rows whose
    window is not fully covered by the envelope are dropped. Returns
    ``(envelope, angles)`` on the shared timestamps.
    """
    half = 0.5 / angles.rate
    ta = angles.times
    te = emg_env.times
    eps = 1e-9 / emg_env.rate
    lo_edge = te[0] - 0.5 / emg_env.rate - eps
    hi_edge = te[-1] + 0.5 / emg_env.rate + eps
    keep = (ta - half >= lo_edge) & (ta + half <= hi_edge)
    if not keep.any():
        raise NoOverlap("envelope and angle series do not overlap")
    idx = np.flatnonzero(keep)
    lo = np.searchsorted(te, ta[idx] - half - eps, side="left")
    hi = np.searchsorted(te, ta[idx] + half - eps, side="left")
    hi = np.maximum(hi, lo + 1)
    hi = np.minimum(hi, len(te))
    csum = np.vstack([np.zeros((1, emg_env.values.shape[1])),
                      np.cumsum(emg_env.values, axis=0)])
    env = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
    new_t0 = ta[idx[0]]
    if not np.all(np.diff(idx) == 1):
        raise NoOverlap("overlap region is not contiguous")
    return (UniformSeries(angles.rate, env, new_t0),
            UniformSeries(angles.rate, angles.values[idx], new_t0))
