"""Steered-response power localization with phase-transform weighting.

The functional at a candidate point accumulates, over all microphone
pairs and frames, the phase-normalized cross spectra steered by the
pair delay the point would produce.  The grid search runs a coarse pass
over the whole room and re-evaluates fine grids around the strongest
coarse points.

Pair convention: the cross spectrum of pair ``(i, j)`` with ``i > j`` is
built as ``Y_i * conj(Y_j)`` and steered by
``tau_ij(p) = (|p - m_i| - |p - m_j|) / speed_of_sound``.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_SPEED_OF_SOUND = 343.0

_POINT_CHUNK = 65536


@dataclass(frozen=True)
class SrpGridConfig:
    room_dims: tuple
    coarse_step: float = 0.10
    fine_step: float = 0.01
    refine_count: int = 3
    fine_halfwidth: float = 0.10

    def __post_init__(self):
        dims = tuple(float(d) for d in self.room_dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError("room_dims must be three positive lengths")
        object.__setattr__(self, "room_dims", dims)
        if not (0 < self.fine_step <= self.coarse_step <= min(dims)):
            raise ValueError("need 0 < fine_step <= coarse_step <= min(room_dims)")
        if self.refine_count < 1:
            raise ValueError("refine_count must be >= 1")
        if self.fine_halfwidth <= 0:
            raise ValueError("fine_halfwidth must be positive")


@dataclass
class SrpResult:
    position: np.ndarray
    score: float
    coarse_argmax_list: list  # [(position, score), ...] strongest first


def _inclusive_axis(limit, step, start=0.0):
    n = int(math.floor((limit - start) / step + 1e-9)) + 1
    return start + np.arange(n) * step


def _grid_points(axes):
    """Cartesian product of axis vectors, rows in lexicographic order."""
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.column_stack((gx.ravel(), gy.ravel(), gz.ravel()))


def _check_pairs(cross_spectra, n_mics):
    seen = {}
    for cs in cross_spectra:
        if cs.pair is None:
            raise ValueError("cross spectra must carry their (i, j) pair")
        i, j = cs.pair
        if not (0 <= j < i < n_mics):
            raise ValueError(f"bad pair {cs.pair}: need 0 <= j < i < {n_mics}")
        seen[(i, j)] = cs
    expected = {(i, j) for i in range(n_mics) for j in range(i)}
    missing = expected - set(seen)
    if missing:
        raise ValueError(f"missing microphone pairs: {sorted(missing)}")
    return [seen[p] for p in sorted(seen)]


def _folded_coefficients(cs):
    """Frame-summed spectrum with the conjugate-symmetric fold applied.

    Returns c such that the pair functional is Re(sum_k c[k] * z**k) with
    z = exp(2j pi tau_samples / dft_len).
    """
    c = cs.values.sum(axis=1).astype(complex)
    c[1:-1] *= 2.0
    return c


def _pair_scores(points, mic_positions, entries, sample_rate, dft_len, nu):
    """Summed steered response at each point (exact frequency-domain sum)."""
    mics = np.asarray(mic_positions, dtype=float)
    scores = np.zeros(len(points))
    for lo in range(0, len(points), _POINT_CHUNK):
        pts = points[lo : lo + _POINT_CHUNK]
        dists = np.linalg.norm(pts[:, None, :] - mics.T[None, :, :], axis=2)
        for (i, j), coeff in entries:
            tau_samples = (dists[:, i] - dists[:, j]) * sample_rate / nu
            z = np.exp((2j * np.pi / dft_len) * tau_samples)
            acc = np.full(z.shape, coeff[-1], dtype=complex)
            for k in range(coeff.size - 2, -1, -1):
                acc *= z
                acc += coeff[k]
            scores[lo : lo + len(pts)] += acc.real
    return scores


def srp_functional(point, cross_spectra, mic_positions, speed_of_sound=DEFAULT_SPEED_OF_SOUND):
    """Steered-response score of a single point, summed over frames.

    The frequency sum runs over the full conjugate-symmetric spectrum; the
    result is real up to rounding, which is asserted.
    """
    mics = np.asarray(mic_positions, dtype=float)
    ordered = _check_pairs(cross_spectra, mics.shape[1])
    point = np.asarray(point, dtype=float)
    fs = ordered[0].sample_rate
    k = ordered[0].dft_len
    dists = np.linalg.norm(mics - point[:, None], axis=0)

    # signed bins -K/2 .. K/2 with the self-conjugate Nyquist bin split in
    # half, i.e. the conjugate-symmetric reading of the K-bin sum
    freqs = np.arange(-(k // 2), k // 2 + 1)
    weights = np.ones(k + 1)
    weights[0] = weights[-1] = 0.5

    total = 0.0 + 0.0j
    mag = 0.0
    for cs in ordered:
        i, j = cs.pair
        psi = cs.values.sum(axis=1)
        full = np.concatenate((np.conj(psi[::-1]), psi[1:]))
        tau_samples = (dists[i] - dists[j]) * fs / speed_of_sound
        steer = np.exp(2j * np.pi * freqs * tau_samples / k)
        total += np.sum(weights * full * steer)
        mag += np.sum(np.abs(full))
    if abs(total.imag) > 1e-9 * max(mag, 1.0):
        raise AssertionError(
            f"imaginary residual {total.imag:.3e} exceeds tolerance"
        )
    return float(total.real)


def srp_localize(cross_spectra, mic_positions, grid, speed_of_sound=DEFAULT_SPEED_OF_SOUND):
    """Coarse-to-fine grid maximization of the steered response.

    The coarse pass covers the whole room inclusively; fine grids are
    evaluated in cubes (clipped to the room) around the ``refine_count``
    strongest coarse points, and the best fine-pass point wins.  Score
    ties resolve to the lexicographically smallest coordinates.
    """
    mics = np.asarray(mic_positions, dtype=float)
    ordered = _check_pairs(cross_spectra, mics.shape[1])
    fs = ordered[0].sample_rate
    k = ordered[0].dft_len
    for cs in ordered:
        if cs.sample_rate != fs or cs.dft_len != k:
            raise ValueError("cross spectra carry inconsistent STFT settings")
    entries = [(cs.pair, _folded_coefficients(cs)) for cs in ordered]

    coarse_axes = [_inclusive_axis(d, grid.coarse_step) for d in grid.room_dims]
    coarse_pts = _grid_points(coarse_axes)
    coarse_scores = _pair_scores(coarse_pts, mics, entries, fs, k, speed_of_sound)
    top = np.argsort(-coarse_scores, kind="stable")[: grid.refine_count]
    coarse_list = [(coarse_pts[t].copy(), float(coarse_scores[t])) for t in top]

    # fine regions live on the global fine lattice (integer indices), so
    # overlapping cubes dedupe exactly and ties stay reproducible
    fine_blocks = []
    for center, _ in coarse_list:
        axes = []
        for c, dim in zip(center, grid.room_dims):
            lo = max(0, math.ceil((c - grid.fine_halfwidth) / grid.fine_step - 1e-9))
            hi = min(
                math.floor(dim / grid.fine_step + 1e-9),
                math.floor((c + grid.fine_halfwidth) / grid.fine_step + 1e-9),
            )
            axes.append(np.arange(lo, hi + 1))
        fine_blocks.append(_grid_points(axes))
    fine_idx = np.unique(np.vstack(fine_blocks).astype(np.int64), axis=0)
    fine_pts = fine_idx * grid.fine_step
    fine_scores = _pair_scores(fine_pts, mics, entries, fs, k, speed_of_sound)

    best = np.flatnonzero(fine_scores == fine_scores.max())[0]  # rows sorted
    logger.info(
        "coarse pass %d points, fine pass %d points, best score %.3f",
        len(coarse_pts),
        len(fine_pts),
        fine_scores[best],
    )
    return SrpResult(
        position=fine_pts[best].copy(),
        score=float(fine_scores[best]),
        coarse_argmax_list=coarse_list,
    )
