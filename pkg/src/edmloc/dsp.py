"""STFT analysis and GCC-PHAT delay estimation.

Spectrograms are stored over the nonnegative DFT bins (``dft_len // 2 + 1``
rows); the conjugate-symmetric half is implied.  All frequency sums fold
that symmetry back in, i.e. they run over the full DFT length with the
negative bins at their negative frequencies, which keeps time-domain
correlations real at fractional lags.

Correlation curves are normalized by the DFT length so a perfectly
coherent pair peaks at 1.0; that keeps the exponential peak weighting
``exp(beta * xi)`` bounded.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_SPEED_OF_SOUND = 343.0

# relative threshold below which a cross-spectrum bin counts as silent
PHAT_EPS_MAG = 1e-12

# base curves are materialized by zero-padded inverse FFT at up to this
# oversampling; finer lags are evaluated exactly around the top peaks
MAX_BASE_FACTOR = 8

# local maxima closer than this many interpolated grid steps are merged
PEAK_MERGE_STEPS = 2

_WINDOWS = ("sqrt-hann", "hann", "rect")


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 512
    dft_len: int = 1024
    hop: int = 256
    window: str = "sqrt-hann"
    sample_rate: float = 16000.0

    def __post_init__(self):
        if not (0 < self.hop <= self.frame_len <= self.dft_len):
            raise ValueError("need 0 < hop <= frame_len <= dft_len")
        if self.dft_len % 2 != 0:
            raise ValueError("dft_len must be even")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.window not in _WINDOWS:
            raise ValueError(f"unknown window {self.window!r}")

    def window_samples(self):
        n = self.frame_len
        if self.window == "rect":
            return np.ones(n)
        hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
        return np.sqrt(hann) if self.window == "sqrt-hann" else hann

    def num_frames(self, n_samples):
        if n_samples < self.frame_len:
            raise ValueError("signal shorter than one analysis frame")
        return (n_samples - self.frame_len) // self.hop + 1


@dataclass
class CrossSpectrum:
    """Per-frame phase-normalized cross spectrum of one microphone pair.

    ``values`` has shape (dft_len // 2 + 1, n_frames); every entry is either
    zero (silent bin) or unit magnitude.
    """

    values: np.ndarray
    dft_len: int
    sample_rate: float
    pair: Optional[tuple] = None

    @property
    def num_frames(self):
        return self.values.shape[1]


@dataclass
class TdoaCandidateSet:
    """Up to C delay candidates for one pair, strongest first."""

    pair: Optional[tuple]
    delays: np.ndarray  # seconds
    scores: np.ndarray


@dataclass
class GccFunction:
    """Frame-aggregated, peak-weighted correlation of one microphone pair.

    The curve lives on the lag lattice with step ``1 / (sample_rate *
    interp_factor)`` seconds, bounded to ``|lag| < mic_distance / nu``.
    ``lags``/``values`` hold the exactly evaluated base sublattice (every
    ``interp_factor // base_factor``-th fine lag; the full lattice whenever
    ``interp_factor <= MAX_BASE_FACTOR``).  :meth:`evaluate` computes exact
    values at arbitrary fine-lattice lags; candidate extraction refines the
    base peaks with it.
    """

    pair: Optional[tuple]
    sample_rate: float
    dft_len: int
    interp_factor: int
    weight_beta: float
    max_lag_fine: int
    base_factor: int
    base_lags_fine: np.ndarray
    base_values: np.ndarray
    cross: Optional[CrossSpectrum] = field(default=None, repr=False)

    @property
    def lags(self):
        """Lag positions of the materialized base curve, seconds."""
        return self.base_lags_fine / (self.sample_rate * self.interp_factor)

    @property
    def values(self):
        return self.base_values

    def lag_seconds(self, n_fine):
        return np.asarray(n_fine) / (self.sample_rate * self.interp_factor)

    def evaluate(self, n_fine, chunk=4096):
        """Exact aggregated curve at the given fine-lattice lags.

        Evaluates the inverse-DFT correlation of every frame by a direct
        complex-exponential sum (exact band-limited interpolation), applies
        the per-frame exponential weighting and sums over frames.
        """
        if self.cross is None:
            raise ValueError("this curve was built without its cross spectrum")
        n_fine = np.atleast_1d(np.asarray(n_fine, dtype=float))
        if np.any(np.abs(n_fine) > self.max_lag_fine):
            raise ValueError("lag outside the configured bound")
        psi = self.cross.values
        kh = psi.shape[0]
        k = self.dft_len
        omega = (2.0 * np.pi / (k * self.interp_factor)) * np.arange(kh)
        w = np.full(kh, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        out = np.empty(n_fine.size)
        for lo in range(0, n_fine.size, chunk):
            sel = n_fine[lo : lo + chunk]
            steer = np.exp(1j * np.outer(sel, omega)) * w
            xi = (steer @ psi).real / k
            out[lo : lo + sel.size] = np.exp(self.weight_beta * xi).sum(axis=1)
        return out


def stft(signal, cfg):
    """Windowed, zero-padded short-time transform.

    Returns the complex spectrogram over the nonnegative bins, shape
    ``(dft_len // 2 + 1, n_frames)``.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    n_frames = cfg.num_frames(x.size)
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len)[:: cfg.hop]
    frames = frames[:n_frames] * cfg.window_samples()
    return np.fft.rfft(frames, n=cfg.dft_len, axis=1).T


def phat_cross_spectrum(spec_i, spec_j, cfg, pair=None):
    """Phase-transform normalized instantaneous cross spectrum.

    Each bin of ``Y_i * conj(Y_j)`` is divided by its magnitude; bins whose
    magnitude falls below ``PHAT_EPS_MAG`` relative to the frame RMS level
    contribute zero instead.
    """
    yi = np.asarray(spec_i)
    yj = np.asarray(spec_j)
    if yi.shape != yj.shape:
        raise ValueError(f"spectrogram shapes differ: {yi.shape} vs {yj.shape}")
    cross = yi * np.conj(yj)
    mag = np.abs(cross)
    rms_i = np.sqrt(np.mean(np.abs(yi) ** 2, axis=0))
    rms_j = np.sqrt(np.mean(np.abs(yj) ** 2, axis=0))
    thr = PHAT_EPS_MAG * rms_i * rms_j
    values = np.zeros_like(cross)
    keep = mag > thr
    np.divide(cross, mag, out=values, where=keep)
    return CrossSpectrum(
        values=values, dft_len=cfg.dft_len, sample_rate=cfg.sample_rate, pair=pair
    )


def _largest_divisor_at_most(n, cap):
    for d in range(min(n, cap), 0, -1):
        if n % d == 0:
            return d
    return 1


def gcc_time_domain(
    cs,
    mic_distance,
    interp_factor=720,
    weight_beta=15.0,
    speed_of_sound=DEFAULT_SPEED_OF_SOUND,
):
    """Aggregate the time-domain correlation of one pair over all frames.

    Per frame, the inverse-DFT correlation is evaluated on the interpolated
    lag grid (resolution ``1 / (sample_rate * interp_factor)``) restricted
    to physically possible lags ``|tau| < mic_distance / speed_of_sound``,
    weighted as ``exp(weight_beta * xi)`` and summed over frames.
    """
    interp_factor = int(interp_factor)
    if interp_factor < 1:
        raise ValueError("interp_factor must be >= 1")
    if mic_distance <= 0:
        raise ValueError("mic_distance must be positive")
    psi = cs.values
    if psi.ndim != 2 or psi.shape[1] == 0:
        raise ValueError("cross spectrum holds no frames")
    k = cs.dft_len
    fs = cs.sample_rate

    bound = mic_distance * fs * interp_factor / speed_of_sound
    n_max = max(0, int(math.ceil(bound)) - 1)
    n_max = min(n_max, (k // 2) * interp_factor - 1)

    base = _largest_divisor_at_most(interp_factor, MAX_BASE_FACTOR)
    h = interp_factor // base
    m_max = n_max // h

    n_up = k * base
    spec = np.zeros((n_up // 2 + 1, psi.shape[1]), dtype=complex)
    spec[: k // 2] = psi[: k // 2]
    # the original Nyquist bin splits across +-K/2 when it becomes an
    # interior bin of the longer transform
    spec[k // 2] = psi[k // 2] if base == 1 else 0.5 * psi[k // 2]
    corr = np.fft.irfft(spec, n=n_up, axis=0) * (n_up / k)
    idx = np.concatenate((np.arange(n_up - m_max, n_up), np.arange(m_max + 1)))
    xi = corr[idx, :]
    values = np.exp(weight_beta * xi).sum(axis=1)

    return GccFunction(
        pair=cs.pair,
        sample_rate=fs,
        dft_len=k,
        interp_factor=interp_factor,
        weight_beta=weight_beta,
        max_lag_fine=n_max,
        base_factor=base,
        base_lags_fine=np.arange(-m_max, m_max + 1) * h,
        base_values=values,
        cross=cs,
    )


def _tie_order(lags):
    """Sort key arrays implementing 'smallest |lag|, then smaller signed lag'."""
    lags = np.asarray(lags)
    return np.abs(lags), lags


def _argmax_lagwise(values, lags):
    """Index of the maximum; ties go to the smallest |lag|, then signed lag."""
    values = np.asarray(values)
    top = np.flatnonzero(values == values.max())
    a, s = _tie_order(lags[top])
    return int(top[np.lexsort((s, a))[0]])


def _interior_maxima(values, lags):
    """Indices of strict local maxima, one representative per plateau."""
    values = np.asarray(values)
    lags = np.asarray(lags)
    n = values.size
    out = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[j + 1] == values[i]:
            j += 1
        if 0 < i and j < n - 1 and values[i - 1] < values[i] and values[j + 1] < values[i]:
            a, s = _tie_order(lags[i : j + 1])
            out.append(i + int(np.lexsort((s, a))[0]))
        i = j + 1
    return out


def _refine_peak(gcc, pos, lo, hi):
    """Exact fine-lattice argmax near a base-lattice peak.

    ``pos`` is a base-lattice lag (fine units); the peak is bracketed by the
    neighboring base samples.  The lattice step is reduced stagewise (each
    stage re-bracketing the maximum), ending on the fine lattice itself, so
    every evaluation is an exact curve value.
    """
    step = gcc.interp_factor // gcc.base_factor
    value = None
    while step > 1:
        # smallest proper divisor keeping the window at <= 33 points;
        # falls back to 1 (direct fine scan of the bracket) for prime steps
        divisors = [d for d in range(1, step) if step % d == 0]
        bounded = [d for d in divisors if d >= step / 16]
        nxt = min(bounded) if bounded else 1
        window_lo = max(lo, pos - step)
        window_hi = min(hi, pos + step)
        grid = np.arange(
            math.ceil(window_lo / nxt) * nxt, window_hi + 1, nxt, dtype=float
        )
        vals = gcc.evaluate(grid)
        best = _argmax_lagwise(vals, grid)
        pos = int(grid[best])
        value = float(vals[best])
        step = nxt
    if value is None:  # base lattice == fine lattice
        value = float(gcc.evaluate([pos])[0])
    return pos, value


def extract_candidates(gcc, count):
    """Top delay candidates from the aggregated correlation curve.

    Local maxima (strict, plateau-aware) are ranked by value; maxima closer
    than ``PEAK_MERGE_STEPS`` fine lags are merged keeping the higher one.
    The global argmax is always a candidate, so ``count == 1`` reduces to
    the plain argmax delay.  A curve with no interior local maximum yields
    its global maximum as the single candidate.
    """
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    base_vals = gcc.base_values
    base_lags = gcc.base_lags_fine
    peaks = _interior_maxima(base_vals, base_lags)
    gmax = _argmax_lagwise(base_vals, base_lags)
    if gmax not in peaks:
        peaks.append(gmax)

    if gcc.base_factor == gcc.interp_factor:
        found = [(int(base_lags[i]), float(base_vals[i])) for i in peaks]
    else:
        order = np.lexsort(
            (base_lags[peaks], np.abs(base_lags[peaks]), -base_vals[peaks])
        )
        keep = [peaks[t] for t in order[: count + 4]]
        if gmax not in keep:
            keep.append(gmax)
        lo, hi = -gcc.max_lag_fine, gcc.max_lag_fine
        found = [_refine_peak(gcc, int(base_lags[i]), lo, hi) for i in keep]

    found.sort(key=lambda lv: (-lv[1], abs(lv[0]), lv[0]))
    merged = []
    for lag, val in found:
        if all(abs(lag - m[0]) >= PEAK_MERGE_STEPS for m in merged):
            merged.append((lag, val))
            if len(merged) == count:
                break

    delays = np.array([m[0] for m in merged], dtype=float) / (
        gcc.sample_rate * gcc.interp_factor
    )
    scores = np.array([m[1] for m in merged])
    return TdoaCandidateSet(pair=gcc.pair, delays=delays, scores=scores)
