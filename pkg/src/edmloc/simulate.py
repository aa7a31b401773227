"""Shoebox-room scenario synthesis at desk scale.

Image-method impulse responses with windowed-sinc fractional delays,
random microphone/source placement, a synthetic speech-like excitation,
approximately isotropic noise mixing at a target SNR, and ground-truth
bookkeeping for the localization benchmarks.
"""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import wavio

logger = logging.getLogger(__name__)

DEFAULT_SPEED_OF_SOUND = 343.0

# windowed-sinc fractional delay: 81 taps under a Hann window
_SINC_HALF = 40
_DIRECT_WINDOW_S = 0.001  # direct-path energy window for DRR
_ENERGY_CUTOFF = 1e-3  # drop images 60 dB below the direct path


class PlacementError(RuntimeError):
    """Random placement failed to satisfy the constraints."""


class CalibrationError(RuntimeError):
    """No wall coefficient in range reaches the requested DRR."""


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple = (6.0, 6.0, 2.4)
    reflection_coeffs: object = 0.0  # scalar or 6 per-wall values
    max_image_order: int = 10
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    sample_rate: float = 16000.0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError("dims must be three positive lengths")
        object.__setattr__(self, "dims", dims)
        betas = self.wall_coeffs()
        if np.any(betas < 0) or np.any(betas > 1):
            raise ValueError("reflection coefficients must lie in [0, 1]")

    def wall_coeffs(self):
        """Per-wall coefficients (x_lo, x_hi, y_lo, y_hi, z_lo, z_hi)."""
        b = np.asarray(self.reflection_coeffs, dtype=float)
        if b.ndim == 0:
            return np.full(6, float(b))
        if b.shape != (6,):
            raise ValueError("reflection_coeffs must be scalar or 6 values")
        return b


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    mic_count: int = 6
    cube_len: float = 2.0
    min_mic_spacing: float = 0.02
    source_distance: float = 2.0  # from the microphone centroid
    snr_db: float = 5.0
    duration_s: float = 5.0
    excitation: str = "speechlike"  # or a path to a WAV file
    noise_model: str = "diffuse"  # diffuse | white | none
    target_drr_db: object = 0.0  # None: use the room coefficients as-is
    wall_margin: float = 0.1

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.mic_count < 4:
            raise ValueError("need at least 4 microphones")
        if self.cube_len <= 0 or self.min_mic_spacing < 0:
            raise ValueError("bad cube/spacing settings")
        if self.source_distance <= 0:
            raise ValueError("source_distance must be positive")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.noise_model not in ("diffuse", "white", "none"):
            raise ValueError("noise_model must be diffuse, white or none")


@dataclass
class ScenarioInstance:
    spec: ScenarioSpec
    room: RoomSpec
    mic_positions: np.ndarray  # (3, M)
    source_position: np.ndarray  # (3,)
    rirs: np.ndarray  # (M, L)
    mic_signals: np.ndarray  # (M, N) = clean + noise
    clean_signals: np.ndarray
    noise_signals: np.ndarray
    ground_truth_tdoas: np.ndarray  # (M-1,) seconds, relative to mic 0
    reflection_coeff: float
    t60_s: float
    drr_db: float


def exact_tdoas(mic_positions, source_position, speed_of_sound=DEFAULT_SPEED_OF_SOUND):
    """Geometric delays of mics 1..M-1 relative to mic 0, seconds."""
    mics = np.asarray(mic_positions, dtype=float)
    src = np.asarray(source_position, dtype=float)
    d = np.linalg.norm(mics - src[:, None], axis=0)
    return (d[1:] - d[0]) / speed_of_sound


def generate_geometry(spec, room, rng=None):
    """Random microphone cube plus a source at the configured distance.

    Microphones are drawn uniformly inside a cube of side ``cube_len``
    placed uniformly in the room (with wall margin), re-drawing any mic
    closer than ``min_mic_spacing`` to an earlier one.  The source sits at
    ``source_distance`` from the microphone centroid in a rejection-sampled
    random direction that keeps it inside the room.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    dims = np.asarray(room.dims)
    margin = spec.wall_margin
    half = spec.cube_len / 2.0
    lo = margin + half
    hi = dims - margin - half
    if np.any(hi < lo):
        raise PlacementError("microphone cube does not fit in the room")
    center = rng.uniform(lo, hi)

    mics = np.empty((3, spec.mic_count))
    placed = 0
    for _ in range(10000):
        cand = center + rng.uniform(-half, half, size=3)
        if placed and np.min(np.linalg.norm(mics[:, :placed] - cand[:, None], axis=0)) < spec.min_mic_spacing:
            continue
        mics[:, placed] = cand
        placed += 1
        if placed == spec.mic_count:
            break
    else:
        raise PlacementError("could not satisfy the minimum microphone spacing")

    centroid = mics.mean(axis=1)
    for _ in range(10000):
        direction = rng.standard_normal(3)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        src = centroid + spec.source_distance * direction / norm
        if np.all(src >= margin) and np.all(src <= dims - margin):
            return mics, src
    raise PlacementError(
        f"no direction keeps the source at {spec.source_distance} m inside the room"
    )


def _image_set(room, src, mic, max_dist=None):
    """Distances and per-wall bounce counts of all image sources for one mic.

    Returns ``(dists, orders)`` with orders shaped (N, 6) in the wall order
    (x_lo, x_hi, y_lo, y_hi, z_lo, z_hi).  The enumeration is capped at
    ``max_image_order`` reflections per axis and, when ``max_dist`` is
    given, at images within that path length.
    """
    dims = room.dims
    axes = []
    for a in range(3):
        if max_dist is None:
            n_ax = room.max_image_order
        else:
            n_ax = min(room.max_image_order, int(math.ceil(max_dist / (2.0 * dims[a]))) + 1)
        r = np.arange(-n_ax, n_ax + 1)
        coords = np.concatenate((src[a] + 2.0 * r * dims[a], -src[a] + 2.0 * r * dims[a]))
        e_lo = np.concatenate((np.abs(r), np.abs(r - 1)))
        e_hi = np.concatenate((np.abs(r), np.abs(r)))
        axes.append((coords - mic[a], e_lo, e_hi))

    (dx, xlo, xhi), (dy, ylo, yhi), (dz, zlo, zhi) = axes
    d2 = (
        (dx**2)[:, None, None] + (dy**2)[None, :, None] + (dz**2)[None, None, :]
    ).ravel()
    shape = (dx.size, dy.size, dz.size)
    orders = np.empty((d2.size, 6), dtype=np.int32)
    orders[:, 0] = np.broadcast_to(xlo[:, None, None], shape).ravel()
    orders[:, 1] = np.broadcast_to(xhi[:, None, None], shape).ravel()
    orders[:, 2] = np.broadcast_to(ylo[None, :, None], shape).ravel()
    orders[:, 3] = np.broadcast_to(yhi[None, :, None], shape).ravel()
    orders[:, 4] = np.broadcast_to(zlo[None, None, :], shape).ravel()
    orders[:, 5] = np.broadcast_to(zhi[None, None, :], shape).ravel()
    dists = np.sqrt(d2)
    if max_dist is not None:
        keep = dists <= max_dist
        dists, orders = dists[keep], orders[keep]
    return dists, orders


def _image_amplitudes(dists, orders, wall_coeffs):
    amp = 1.0 / (4.0 * np.pi * np.maximum(dists, 1e-9))
    for w in range(6):
        amp = amp * wall_coeffs[w] ** orders[:, w]
    return amp


def image_method_rir(room, src, mic, length):
    """Image-method impulse response sampled at the room rate.

    Each image contributes ``prod(beta_w**bounces) / (4 pi d)`` at delay
    ``d / nu`` placed with an 81-tap Hann-windowed sinc, so the direct path
    lands within half a sample of the geometric delay.  Images more than
    60 dB below the direct path are dropped.
    """
    src = np.asarray(src, dtype=float)
    mic = np.asarray(mic, dtype=float)
    dims = np.asarray(room.dims)
    for p, name in ((src, "source"), (mic, "microphone")):
        if np.any(p <= 0) or np.any(p >= dims):
            raise ValueError(f"{name} position {p.tolist()} is not strictly inside the room")
    length = int(length)
    if length < 1:
        raise ValueError("length must be positive")

    fs = room.sample_rate
    nu = room.speed_of_sound
    max_dist = (length + _SINC_HALF) / fs * nu
    dists, orders = _image_set(room, src, mic, max_dist)
    amp = _image_amplitudes(dists, orders, room.wall_coeffs())

    direct_amp = 1.0 / (4.0 * np.pi * np.linalg.norm(src - mic))
    keep = amp >= _ENERGY_CUTOFF * direct_amp
    dists, amp = dists[keep], amp[keep]
    return _place_impulses(dists / nu * fs, amp, length)


def _place_impulses(delays_samples, amps, length):
    """Accumulate windowed-sinc pulses at fractional sample delays."""
    delays_samples = np.asarray(delays_samples, dtype=float)
    amps = np.asarray(amps, dtype=float)
    centers = np.floor(delays_samples).astype(np.int64)
    offsets = np.arange(-_SINC_HALF, _SINC_HALF + 1)
    taps = centers[None, :] + offsets[:, None]
    u = taps - delays_samples[None, :]
    window = np.where(
        np.abs(u) <= _SINC_HALF + 0.5,
        0.5 * (1.0 + np.cos(np.pi * u / (_SINC_HALF + 0.5))),
        0.0,
    )
    vals = window * np.sinc(u) * amps[None, :]
    ok = (taps >= 0) & (taps < length)
    return np.bincount(taps[ok].ravel(), weights=vals[ok].ravel(), minlength=length)


def schroeder_t60(rir, sample_rate):
    """Reverberation time from the backward-integrated decay curve.

    Fits the -5 dB to -25 dB span and extrapolates to 60 dB; NaN when the
    decay never reaches -25 dB (e.g. anechoic responses).
    """
    energy = np.asarray(rir, dtype=float) ** 2
    total = energy.sum()
    if total <= 0:
        return float("nan")
    edc = np.cumsum(energy[::-1])[::-1] / total
    with np.errstate(divide="ignore"):
        edc_db = 10.0 * np.log10(edc)
    idx = np.flatnonzero((edc_db <= -5.0) & (edc_db >= -25.0))
    if idx.size < 8 or edc_db[-1] > -25.0:
        return float("nan")
    t = idx / sample_rate
    slope, _ = np.polyfit(t, edc_db[idx], 1)
    if slope >= 0:
        return float("nan")
    return float(-60.0 / slope)


def direct_to_reverberant_db(rir, sample_rate, direct_time_s):
    """Energy in the +-1 ms window around the direct arrival vs the rest."""
    rir = np.asarray(rir, dtype=float)
    n = rir.size
    lo = max(0, int(math.floor((direct_time_s - _DIRECT_WINDOW_S) * sample_rate)))
    hi = min(n, int(math.ceil((direct_time_s + _DIRECT_WINDOW_S) * sample_rate)) + 1)
    direct = np.sum(rir[lo:hi] ** 2)
    rest = np.sum(rir**2) - direct
    if rest <= 0:
        return float("inf")
    return float(10.0 * np.log10(direct / rest))


def _incoherent_drr_db(image_sets, direct_times, speed_of_sound, beta):
    """Per-geometry DRR estimate from image energies only (no RIR build)."""
    out = []
    for (dists, orders), t_direct in zip(image_sets, direct_times):
        amp = _image_amplitudes(dists, orders, np.full(6, beta))
        energy = amp**2
        t = dists / speed_of_sound
        direct = np.abs(t - t_direct) <= _DIRECT_WINDOW_S
        e_direct = energy[direct].sum()
        e_rest = energy[~direct].sum()
        out.append(np.inf if e_rest <= 0 else 10.0 * np.log10(e_direct / e_rest))
    return float(np.mean(out))


def calibrate_reflections(room, mic_positions, source_position, target_drr_db, tol_db=0.5):
    """Common wall coefficient giving the target mean DRR over the mics.

    Bisection on the coefficient using the incoherent image-energy estimate
    (monotone in the coefficient), then a verification pass on actual
    impulse responses with a secondary bisection if the measured mean DRR
    is off by more than ``tol_db``.
    """
    mics = np.asarray(mic_positions, dtype=float)
    src = np.asarray(source_position, dtype=float)
    nu = room.speed_of_sound
    direct_times = [np.linalg.norm(src - mics[:, m]) / nu for m in range(mics.shape[1])]
    image_sets = [_image_set(room, src, mics[:, m]) for m in range(mics.shape[1])]

    lo, hi = 0.0, 0.99
    f_hi = _incoherent_drr_db(image_sets, direct_times, nu, hi)
    if f_hi > target_drr_db:
        raise CalibrationError(
            f"DRR {f_hi:.1f} dB at coefficient {hi} is still above the "
            f"target {target_drr_db} dB"
        )
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f_mid = _incoherent_drr_db(image_sets, direct_times, nu, mid)
        if f_mid > target_drr_db:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break
    beta = hi

    def measured(b):
        test_room = dataclasses.replace(room, reflection_coeffs=b)
        length = _rir_length(test_room, mics, src, b)
        drrs = [
            direct_to_reverberant_db(
                image_method_rir(test_room, src, mics[:, m], length),
                room.sample_rate,
                direct_times[m],
            )
            for m in range(mics.shape[1])
        ]
        return float(np.mean(drrs))

    actual = measured(beta)
    if abs(actual - target_drr_db) > tol_db:
        logger.info(
            "incoherent calibration off by %.2f dB; refining on actual responses",
            actual - target_drr_db,
        )
        lo, hi = (beta, 0.99) if actual > target_drr_db else (0.0, beta)
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            if measured(mid) > target_drr_db:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-4:
                break
        beta = hi
        actual = measured(beta)
        if abs(actual - target_drr_db) > tol_db:
            raise CalibrationError(
                f"could not reach {target_drr_db} dB DRR (closest: {actual:.2f} dB)"
            )
    return float(beta)


def _sabine_t60(room, beta):
    lx, ly, lz = room.dims
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    absorption = max(1.0 - beta**2, 1e-3)
    return 0.161 * volume / (surface * absorption)


def _rir_length(room, mics, src, beta):
    direct_max = max(
        np.linalg.norm(src - mics[:, m]) for m in range(mics.shape[1])
    ) / room.speed_of_sound
    tail = 0.0 if beta == 0 else 1.25 * _sabine_t60(room, beta)
    seconds = min(max(direct_max + tail + 0.02, 0.05), 1.2)
    return int(round(seconds * room.sample_rate))


def _pink_shape(freqs_hz, corner_hz=80.0):
    shape = 1.0 / np.sqrt(np.maximum(freqs_hz, corner_hz))
    shape[freqs_hz == 0] = 0.0
    return shape


def speechlike_excitation(n_samples, sample_rate, rng):
    """Pink-filtered noise with a 4 Hz syllabic amplitude modulation.

    The modulation floor is nearly silent, mimicking inter-syllable gaps.
    """
    spec = rng.standard_normal(n_samples // 2 + 1) + 1j * rng.standard_normal(
        n_samples // 2 + 1
    )
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    x = np.fft.irfft(spec * _pink_shape(freqs), n=n_samples)
    t = np.arange(n_samples) / sample_rate
    phase = rng.uniform(0, 2 * np.pi)
    envelope = 0.02 + 0.98 * 0.5 * (1.0 - np.cos(2.0 * np.pi * 4.0 * t + phase))
    x = x * envelope
    return x / np.sqrt(np.mean(x**2))


def isotropic_noise(
    mic_positions,
    n_samples,
    sample_rate,
    rng,
    n_sources=32,
    speed_of_sound=DEFAULT_SPEED_OF_SOUND,
):
    """Approximately spherically isotropic noise field.

    Superposes ``n_sources`` independent pink-spectrum plane waves from
    random far-field directions; each microphone sees every wave with its
    geometry-consistent delay (applied as a circular phase shift).
    """
    mics = np.asarray(mic_positions, dtype=float)
    n_mics = mics.shape[1]
    freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
    shape = _pink_shape(freqs)
    spectra = np.zeros((n_mics, freqs.size), dtype=complex)
    for _ in range(n_sources):
        direction = rng.standard_normal(3)
        direction /= max(np.linalg.norm(direction), 1e-12)
        base = (rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size)) * shape
        delays = -(direction @ mics) / speed_of_sound  # plane-wave arrivals
        spectra += base * np.exp(-2j * np.pi * freqs[None, :] * delays[:, None])
    noise = np.fft.irfft(spectra, n=n_samples, axis=1)
    return noise / np.sqrt(np.mean(noise**2))


def _fft_convolve(a, b):
    n = a.size + b.size - 1
    nf = 1 << (n - 1).bit_length()
    return np.fft.irfft(np.fft.rfft(a, nf) * np.fft.rfft(b, nf), nf)[:n]


def synthesize_scenario(spec, room):
    """Build one reproducible scenario: geometry, RIRs, signals, truth.

    The result is a pure function of ``(spec, room)``; sub-streams of the
    scenario seed drive geometry, excitation and noise independently.
    """
    geom_rng = np.random.default_rng([spec.seed, 0])
    exc_rng = np.random.default_rng([spec.seed, 1])
    noise_rng = np.random.default_rng([spec.seed, 2])

    mics, src = generate_geometry(spec, room, geom_rng)
    n_mics = spec.mic_count
    fs = room.sample_rate
    n_samples = int(round(spec.duration_s * fs))

    if spec.target_drr_db is not None:
        beta = calibrate_reflections(room, mics, src, float(spec.target_drr_db))
        scen_room = dataclasses.replace(room, reflection_coeffs=beta)
    else:
        scen_room = room
        coeffs = scen_room.wall_coeffs()
        beta = float(np.mean(coeffs))

    length = _rir_length(scen_room, mics, src, beta)
    rirs = np.stack(
        [image_method_rir(scen_room, src, mics[:, m], length) for m in range(n_mics)]
    )

    if spec.excitation == "speechlike":
        excitation = speechlike_excitation(n_samples, fs, exc_rng)
    else:
        excitation = wavio.load_signal(spec.excitation, fs)
        if excitation.size < n_samples:
            raise ValueError(
                f"excitation file is shorter than {spec.duration_s} s at {fs} Hz"
            )
        excitation = excitation[:n_samples]

    clean = np.stack(
        [_fft_convolve(excitation, rirs[m])[:n_samples] for m in range(n_mics)]
    )

    if spec.noise_model == "none" or np.isinf(spec.snr_db):
        noise = np.zeros_like(clean)
    else:
        if spec.noise_model == "diffuse":
            noise = isotropic_noise(mics, n_samples, fs, noise_rng)
        else:
            noise = noise_rng.standard_normal(clean.shape)
        e_sig = np.sum(clean**2)
        e_noise = np.sum(noise**2)
        gain = np.sqrt(e_sig / (e_noise * 10.0 ** (spec.snr_db / 10.0)))
        noise = noise * gain

    direct_times = np.linalg.norm(mics - src[:, None], axis=0) / scen_room.speed_of_sound
    drr = float(
        np.mean(
            [
                direct_to_reverberant_db(rirs[m], fs, direct_times[m])
                for m in range(n_mics)
            ]
        )
    )
    t60_per_mic = [schroeder_t60(rirs[m], fs) for m in range(n_mics)]
    t60 = (
        float(np.nanmean(t60_per_mic))
        if np.any(np.isfinite(t60_per_mic))
        else float("nan")
    )

    return ScenarioInstance(
        spec=spec,
        room=scen_room,
        mic_positions=mics,
        source_position=src,
        rirs=rirs,
        mic_signals=clean + noise,
        clean_signals=clean,
        noise_signals=noise,
        ground_truth_tdoas=exact_tdoas(mics, src, scen_room.speed_of_sound),
        reflection_coeff=beta,
        t60_s=t60,
        drr_db=drr,
    )


@dataclass
class TwoPathScenario:
    """Stress scenario: direct path plus one strong discrete echo per mic.

    The echo comes from a wall-mirrored image of the source with a small
    per-microphone position jitter, so the echo delays of different pairs
    are not jointly consistent with any single 3D point; the direct path
    is attenuated at ``suppressed`` microphones to let the echo win the
    correlation argmax there.
    """

    mic_positions: np.ndarray
    source_position: np.ndarray
    mic_signals: np.ndarray
    direct_tdoas: np.ndarray  # (M-1,) seconds, relative to mic 0
    suppressed: np.ndarray  # mic indices with attenuated direct path


def synthesize_two_path_scenario(
    seed,
    room=None,
    source_distance=2.0,
    duration_s=2.0,
    reflection_gain=1.1,
    direct_suppression=0.6,
    n_suppressed=2,
    image_jitter=0.4,
    snr_db=30.0,
):
    """Build a :class:`TwoPathScenario` (see the class docstring)."""
    room = room or RoomSpec()
    spec = ScenarioSpec(
        seed=seed,
        source_distance=source_distance,
        duration_s=duration_s,
        target_drr_db=None,
        noise_model="white",
        snr_db=snr_db,
    )
    geom_rng = np.random.default_rng([seed, 0])
    exc_rng = np.random.default_rng([seed, 1])
    noise_rng = np.random.default_rng([seed, 2])
    path_rng = np.random.default_rng([seed, 3])

    mics, src = generate_geometry(spec, room, geom_rng)
    n_mics = spec.mic_count
    fs = room.sample_rate
    nu = room.speed_of_sound

    # mirror across the wall nearest to the source
    dims = np.asarray(room.dims)
    gaps = np.concatenate((src, dims - src))
    wall = int(np.argmin(gaps))
    image = src.copy()
    if wall < 3:
        image[wall] = -src[wall]
    else:
        image[wall - 3] = 2.0 * dims[wall - 3] - src[wall - 3]

    d_direct = np.linalg.norm(mics - src[:, None], axis=0)
    for _ in range(200):
        images = image[:, None] + image_jitter * path_rng.standard_normal((3, n_mics))
        d_echo = np.linalg.norm(mics - images, axis=0)
        if np.all(d_echo > d_direct + 0.15):
            break
    else:
        raise PlacementError("could not place echo images behind the direct path")

    suppressed = path_rng.choice(n_mics, size=n_suppressed, replace=False)
    gains = np.ones(n_mics)
    gains[suppressed] = direct_suppression

    n_samples = int(round(duration_s * fs))
    excitation = speechlike_excitation(n_samples, fs, exc_rng)
    length = int(np.ceil(d_echo.max() / nu * fs)) + 2 * _SINC_HALF + 4
    signals = np.empty((n_mics, n_samples))
    for m in range(n_mics):
        ir = _place_impulses(
            np.array([d_direct[m], d_echo[m]]) / nu * fs,
            np.array(
                [
                    gains[m] / (4.0 * np.pi * d_direct[m]),
                    reflection_gain / (4.0 * np.pi * d_echo[m]),
                ]
            ),
            length,
        )
        signals[m] = _fft_convolve(excitation, ir)[:n_samples]
    noise = noise_rng.standard_normal(signals.shape)
    noise *= np.sqrt(np.sum(signals**2) / (np.sum(noise**2) * 10.0 ** (snr_db / 10.0)))

    return TwoPathScenario(
        mic_positions=mics,
        source_position=src,
        mic_signals=signals + noise,
        direct_tdoas=exact_tdoas(mics, src, nu),
        suppressed=np.sort(suppressed),
    )


SCENARIO_META_FILE = "scenario.json"


def save_scenario(instance, out_dir):
    """Write per-mic WAV files plus a JSON metadata sidecar.

    Files: ``mic_01.wav`` .. ``mic_MM.wav`` (32-bit float, one per mic) and
    ``scenario.json`` with the geometry, seeds and ground truth; see the
    README for the field list.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fs = instance.room.sample_rate
    for m in range(instance.mic_signals.shape[0]):
        wavio.write_wav(out / f"mic_{m + 1:02d}.wav", fs, instance.mic_signals[m])
    meta = {
        "schema_version": 1,
        "seed": instance.spec.seed,
        "sample_rate_hz": fs,
        "duration_s": instance.spec.duration_s,
        "mic_count": instance.mic_signals.shape[0],
        "speed_of_sound_mps": instance.room.speed_of_sound,
        "room_dims_m": list(instance.room.dims),
        "mic_positions_m": instance.mic_positions.T.tolist(),
        "source_position_m": instance.source_position.tolist(),
        "source_distance_m": instance.spec.source_distance,
        "snr_db": instance.spec.snr_db,
        "noise_model": instance.spec.noise_model,
        "excitation": instance.spec.excitation,
        "reflection_coeff": instance.reflection_coeff,
        "t60_s": instance.t60_s,
        "drr_db": instance.drr_db,
        "ground_truth_tdoas_s": instance.ground_truth_tdoas.tolist(),
    }
    with open(out / SCENARIO_META_FILE, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_scenario(scenario_dir):
    """Read back the signals and metadata written by :func:`save_scenario`."""
    d = Path(scenario_dir)
    with open(d / SCENARIO_META_FILE) as fh:
        meta = json.load(fh)
    fs = meta["sample_rate_hz"]
    signals = np.stack(
        [
            wavio.load_signal(d / f"mic_{m + 1:02d}.wav", fs)
            for m in range(meta["mic_count"])
        ]
    )
    return signals, meta
