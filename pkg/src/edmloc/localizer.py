"""Source localization by scanning the source-to-reference distance.

Given the known microphone geometry and per-pair delay estimates relative
to the reference microphone, every candidate reference distance ``alpha``
yields a full set of source-to-microphone distances, hence an augmented
distance matrix and its Gram matrix.  A true 3D geometry gives a Gram
matrix of rank at most 3, so the summed magnitude of all eigenvalues past
the third measures how far the candidate is from being embeddable; the
scan minimizes that cost, optionally jointly over multiple delay
candidates per pair.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry

logger = logging.getLogger(__name__)

DEFAULT_SPEED_OF_SOUND = 343.0
# diagonal of the default 6 x 6 x 2.4 m room
DEFAULT_ALPHA_MAX = math.sqrt(6.0**2 + 6.0**2 + 2.4**2)


class InfeasibleDelaysError(ValueError):
    """No candidate distance is consistent with the supplied delays."""


@dataclass(frozen=True)
class AlphaSearchConfig:
    """Grid search settings for the source-to-reference distance.

    ``strategy`` selects the literal exhaustive scan or a coarse-to-fine
    refinement (coarse pass at ``coarse_resolution``, then the exact fine
    grid around the best ``refine_top`` coarse points).  The refinement
    evaluates the same fine lattice and is validated against the
    exhaustive scan in the test suite.
    """

    resolution: float = 0.001
    alpha_max: float = DEFAULT_ALPHA_MAX
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    strategy: str = "exhaustive"
    coarse_resolution: float = 0.010
    refine_top: int = 3

    def __post_init__(self):
        if self.resolution <= 0 or self.alpha_max <= 0:
            raise ValueError("resolution and alpha_max must be positive")
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        if self.strategy not in ("exhaustive", "coarse-fine"):
            raise ValueError("strategy must be 'exhaustive' or 'coarse-fine'")
        if self.strategy == "coarse-fine" and self.coarse_resolution < self.resolution:
            raise ValueError("coarse_resolution must be >= resolution")
        if self.refine_top < 1:
            raise ValueError("refine_top must be >= 1")

    def grid(self):
        """The fine alpha lattice {0, resolution, ..., <= alpha_max}."""
        n = int(math.floor(self.alpha_max / self.resolution + 1e-9)) + 1
        return np.arange(n) * self.resolution


@dataclass
class LocalizationResult:
    source_position: np.ndarray
    alpha_hat: float
    chosen_combination: tuple
    cost_min: float
    mic_alignment_rms: float
    combinations_evaluated: int
    alpha_at_boundary: bool
    cost_curve: Optional[tuple] = field(default=None, repr=False)


def distance_vector(alpha, tdoas, speed_of_sound=DEFAULT_SPEED_OF_SOUND):
    """Source-to-microphone distances implied by ``alpha`` and the delays.

    ``d[0] = alpha`` for the reference microphone and
    ``d[m] = alpha + c * tdoas[m-1]`` for the others.  Returns ``None``
    (the infeasible marker) if any entry would be negative.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    tdoas = np.asarray(tdoas, dtype=float)
    d = np.concatenate(([alpha], alpha + speed_of_sound * tdoas))
    if np.any(d < 0):
        return None
    return d


class _CostEvaluator:
    """Caches the per-geometry constants of the rank cost scan.

    The Gram matrix of the augmented distance matrix has an identically
    zero reference row/column, so its spectrum is the spectrum of the
    deflated M x M block (all non-reference points) plus one structural
    zero.  The deflated block is affine-quadratic in alpha, which lets the
    whole alpha grid be assembled by broadcasting and eigen-decomposed in
    one batched Jacobi pass.
    """

    def __init__(self, mic_positions, speed_of_sound):
        self.mics = np.asarray(mic_positions, dtype=float)
        if self.mics.ndim != 2 or self.mics.shape[0] != 3:
            raise ValueError("mic_positions must be a (3, M) array")
        self.m = self.mics.shape[1]
        if self.m < 4:
            raise ValueError("need at least 4 microphones")
        self.nu = float(speed_of_sound)
        d2 = geometry.pairwise_squared_distances(self.mics)
        self.ref_d2 = d2[0, 1:]  # squared distances reference -> other mics
        self.mic_gram = 0.5 * (
            self.ref_d2[:, None] + self.ref_d2[None, :] - d2[1:, 1:]
        )

    def min_feasible_alpha(self, tdoas):
        return max(0.0, float(-self.nu * np.min(tdoas))) if len(tdoas) else 0.0

    def costs(self, alphas, tdoas):
        """Rank cost at each alpha; +inf where the distances go negative."""
        alphas = np.asarray(alphas, dtype=float)
        tdoas = np.asarray(tdoas, dtype=float)
        nt = self.nu * tdoas
        feasible = (alphas >= 0.0) & np.all(
            alphas[:, None] + nt[None, :] >= 0.0, axis=1
        )
        costs = np.full(alphas.size, np.inf)
        if not np.any(feasible):
            return costs

        a = alphas[feasible]
        n = self.m  # deflated size: M-1 mics + source
        gram = np.empty((a.size, n, n))
        gram[:, : n - 1, : n - 1] = self.mic_gram
        col = 0.5 * (self.ref_d2 - nt**2)[None, :] - a[:, None] * nt[None, :]
        gram[:, : n - 1, n - 1] = col
        gram[:, n - 1, : n - 1] = col
        gram[:, n - 1, n - 1] = a**2
        vals = geometry.batch_symmetric_eigenvalues(gram)
        # restore the structural zero of the full spectrum before ranking
        full = np.concatenate((vals, np.zeros((a.size, 1))), axis=1)
        full[:, ::-1].sort(axis=1)
        costs[feasible] = np.sum(np.abs(full[:, 3:]), axis=1)
        return costs

    def gram_at(self, alpha, tdoas):
        d = distance_vector(alpha, tdoas, self.nu)
        if d is None:
            raise InfeasibleDelaysError(f"alpha={alpha} gives a negative distance")
        edm = geometry.build_edm(self.mics, d)
        return geometry.edm_to_gram(edm, 0)


def rank3_cost(alpha, tdoas, mic_positions, speed_of_sound=DEFAULT_SPEED_OF_SOUND):
    """Summed magnitude of all Gram eigenvalues past the third at one alpha.

    Zero (to rounding) exactly when the delays and ``alpha`` describe a
    point set embeddable in 3D; +inf if ``alpha`` is infeasible.
    """
    ev = _CostEvaluator(mic_positions, speed_of_sound)
    return float(ev.costs(np.array([float(alpha)]), tdoas)[0])


def _search(evaluator, tdoas, cfg, return_curve=False):
    """Grid argmin of the rank cost; ties resolved toward smaller alpha."""
    grid = cfg.grid()
    tdoas = np.asarray(tdoas, dtype=float)
    alpha_lo = evaluator.min_feasible_alpha(tdoas)
    first = int(np.searchsorted(grid, alpha_lo - 1e-12))
    if first >= grid.size:
        raise InfeasibleDelaysError(
            "all alpha grid points are infeasible for the supplied delays"
        )

    if cfg.strategy == "exhaustive":
        idx = np.arange(first, grid.size)
    else:
        stride = max(1, int(round(cfg.coarse_resolution / cfg.resolution)))
        coarse = np.arange(first, grid.size, stride)
        coarse_costs = evaluator.costs(grid[coarse], tdoas)
        order = np.lexsort((grid[coarse], coarse_costs))[: cfg.refine_top]
        windows = [
            np.arange(max(first, coarse[k] - stride), min(grid.size, coarse[k] + stride + 1))
            for k in order
        ]
        idx = np.unique(np.concatenate([coarse] + windows))

    costs = evaluator.costs(grid[idx], tdoas)
    best = int(np.argmin(costs))  # first minimum = smallest alpha
    if not np.isfinite(costs[best]):
        raise InfeasibleDelaysError(
            "all alpha grid points are infeasible for the supplied delays"
        )
    curve = (grid[idx], costs) if return_curve else None
    return float(grid[idx][best]), float(costs[best]), curve


def minimize_alpha(tdoas, mic_positions, cfg=None, return_curve=False):
    """Scan the alpha grid for the distance with the smallest rank cost.

    Returns ``(alpha_hat, cost)``, or ``(alpha_hat, cost, (alphas, costs))``
    when ``return_curve`` is set.
    """
    cfg = cfg or AlphaSearchConfig()
    ev = _CostEvaluator(mic_positions, cfg.speed_of_sound)
    alpha_hat, cost, curve = _search(ev, tdoas, cfg, return_curve)
    if return_curve:
        return alpha_hat, cost, curve
    return alpha_hat, cost


def _warn_if_coplanar(mic_positions):
    mics = np.asarray(mic_positions, dtype=float)
    centered = mics - mics.mean(axis=1, keepdims=True)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[2] <= 1e-9 * max(sv[0], 1e-30):
        logger.warning(
            "microphone array is (nearly) coplanar; the source position is "
            "ambiguous up to reflection through the array plane"
        )


def localize(candidate_sets, mic_positions, cfg=None, return_cost_curve=False):
    """Joint search over delay-candidate combinations and the distance grid.

    Parameters
    ----------
    candidate_sets : sequence
        One delay candidate set per non-reference microphone, ordered by
        microphone index.  Each needs a ``delays`` array in seconds (the
        ``TdoaCandidateSet`` produced by the DSP front end, or anything
        duck-typed alike).
    mic_positions : (3, M) array
    cfg : AlphaSearchConfig, optional

    Returns
    -------
    LocalizationResult
        With the aligned source estimate, the winning distance and
        candidate combination, and diagnostics.  The minimum cost is not
        guaranteed to vanish for estimated (noisy) delays.
    """
    cfg = cfg or AlphaSearchConfig()
    mics = np.asarray(mic_positions, dtype=float)
    ev = _CostEvaluator(mics, cfg.speed_of_sound)
    if len(candidate_sets) != ev.m - 1:
        raise ValueError(
            f"expected {ev.m - 1} candidate sets, got {len(candidate_sets)}"
        )
    delay_lists = [np.asarray(cs.delays, dtype=float) for cs in candidate_sets]
    if any(d.size == 0 for d in delay_lists):
        raise ValueError("every candidate set must be nonempty")
    _warn_if_coplanar(mics)

    best = None  # (cost, combination, alpha)
    n_evaluated = 0
    for combo in itertools.product(*(range(d.size) for d in delay_lists)):
        n_evaluated += 1
        tdoas = np.array([d[c] for d, c in zip(delay_lists, combo)])
        try:
            alpha_hat, cost, _ = _search(ev, tdoas, cfg)
        except InfeasibleDelaysError:
            continue
        if best is None or cost < best[0]:
            best = (cost, combo, alpha_hat)
    if best is None:
        raise InfeasibleDelaysError("every candidate combination is infeasible")
    cost_min, combo, alpha_hat = best
    logger.info(
        "evaluated %d candidate combination(s); best cost %.3e at alpha %.4f",
        n_evaluated,
        cost_min,
        alpha_hat,
    )

    tdoas = np.array([d[c] for d, c in zip(delay_lists, combo)])
    gram = ev.gram_at(alpha_hat, tdoas)
    eig = geometry.symmetric_eigendecompose(gram)
    relative = geometry.reconstruct_relative_positions(eig, on_negative="zero")
    aligned, rms = geometry.procrustes_align(relative, mics)

    curve = None
    if return_cost_curve:
        _, _, curve = _search(ev, tdoas, cfg, return_curve=True)

    grid = cfg.grid()
    boundary = alpha_hat <= grid[0] + 1e-12 or alpha_hat >= grid[-1] - 1e-12
    return LocalizationResult(
        source_position=aligned[:, ev.m].copy(),
        alpha_hat=alpha_hat,
        chosen_combination=combo,
        cost_min=cost_min,
        mic_alignment_rms=rms,
        combinations_evaluated=n_evaluated,
        alpha_at_boundary=boundary,
        cost_curve=curve,
    )
