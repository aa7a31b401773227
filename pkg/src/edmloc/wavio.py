"""Mono WAV reading and writing (16-bit PCM and 32-bit float).

Readers never resample: a caller that expects a specific rate must use
:func:`load_signal`, which rejects mismatches.
"""

import numpy as np
from scipy.io import wavfile


def read_wav(path):
    """Read a mono WAV file.

    Returns ``(sample_rate, samples)`` with samples as float64; 16-bit PCM
    is scaled to [-1, 1).  Multichannel files and other sample formats are
    rejected.
    """
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(
            f"{path}: unsupported sample format {data.dtype}; "
            "use 16-bit PCM or 32-bit float"
        )
    return int(rate), samples


def load_signal(path, expected_rate):
    """Read a mono WAV whose rate must match ``expected_rate`` exactly."""
    rate, samples = read_wav(path)
    if rate != int(expected_rate):
        raise ValueError(
            f"{path}: sample rate {rate} Hz does not match the configured "
            f"{int(expected_rate)} Hz (resampling is not supported)"
        )
    return samples


def write_wav(path, sample_rate, samples, fmt="float32"):
    """Write a mono WAV file as 32-bit float (default) or 16-bit PCM."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    if fmt == "float32":
        wavfile.write(path, int(sample_rate), samples.astype(np.float32))
    elif fmt == "pcm16":
        peak = np.max(np.abs(samples)) if samples.size else 0.0
        if peak >= 32767.0 / 32768.0:
            samples = samples * (32766.0 / 32768.0) / peak
        q = np.clip(np.round(samples * 32768.0), -32768, 32767)
        wavfile.write(path, int(sample_rate), q.astype(np.int16))
    else:
        raise ValueError(f"unsupported format {fmt!r}")
