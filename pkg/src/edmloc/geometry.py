"""Geometry kernel: squared-distance matrices, Gram transforms, and alignment.

Conventions used throughout the package:

* point sets are ``(3, N)`` arrays, one column per point, meters;
* the augmented distance matrix for M microphones plus one source is
  ``(M+1, M+1)`` and holds *squared* distances, with the source last;
* microphone 0 (the first column) is the reference and is mapped to the
  origin by the Gram transform.
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# Eigenvalues of a noisy Gram matrix may dip slightly negative; anything in
# [-NEG_EIG_TOL_FACTOR * max(1, lambda_1), 0) is treated as zero.
NEG_EIG_TOL_FACTOR = 1e-8

_SYMMETRY_RTOL = 1e-12


class ConvergenceError(RuntimeError):
    """Jacobi sweeps did not reduce the off-diagonal mass below tolerance."""


class DegenerateGeometryError(ValueError):
    """The input geometry does not determine the requested result."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Full spectrum of a symmetric matrix, eigenvalues descending by signed value.

    ``eigenvectors[:, i]`` is the unit eigenvector for ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def pairwise_squared_distances(points):
    """Squared Euclidean distances between all columns of a (3, N) array."""
    points = np.asarray(points, dtype=float)
    diff = points[:, :, None] - points[:, None, :]
    return np.einsum("kij,kij->ij", diff, diff)


def build_edm(mic_positions, source_distances):
    """Assemble the augmented squared-distance matrix for mics plus one source.

    Parameters
    ----------
    mic_positions : (3, M) array
        Known microphone coordinates in meters, M >= 4.
    source_distances : (M,) array
        Distances from the source to each microphone, meters.

    Returns
    -------
    (M+1, M+1) array of squared distances.  The top-left block holds the
    inter-microphone entries, source distances fill the last row/column.
    """
    mic_positions = np.asarray(mic_positions, dtype=float)
    d = np.asarray(source_distances, dtype=float)
    if mic_positions.ndim != 2 or mic_positions.shape[0] != 3:
        raise ValueError("mic_positions must be a (3, M) array")
    m = mic_positions.shape[1]
    if m < 4:
        raise ValueError(f"need at least 4 microphones, got {m}")
    if d.shape != (m,):
        raise ValueError(f"source_distances has shape {d.shape}, expected ({m},)")
    if not np.all(np.isfinite(mic_positions)) or not np.all(np.isfinite(d)):
        raise ValueError("positions and distances must be finite")
    if np.any(d < 0):
        raise ValueError("source distances must be nonnegative")

    edm = np.zeros((m + 1, m + 1))
    edm[:m, :m] = pairwise_squared_distances(mic_positions)
    edm[:m, m] = d**2
    edm[m, :m] = d**2
    return edm


def edm_to_gram(edm, reference_index=0):
    """Center a squared-distance matrix into a Gram matrix.

    Computes ``-0.5 * (I - 1 e^T) E (I - e 1^T)`` where ``e`` is the unit
    vector of the reference point, so the reference is placed at the origin.
    The row and column of the reference are identically zero.
    """
    edm = np.asarray(edm, dtype=float)
    if edm.ndim != 2 or edm.shape[0] != edm.shape[1]:
        raise ValueError("edm must be square")
    n = edm.shape[0]
    if not 0 <= reference_index < n:
        raise ValueError("reference_index out of range")

    center = np.eye(n)
    center[:, reference_index] -= 1.0  # rows of (I - 1 e^T)
    gram = -0.5 * center @ edm @ center.T
    gram = 0.5 * (gram + gram.T)
    # exact zeros by construction; enforce against rounding
    gram[reference_index, :] = 0.0
    gram[:, reference_index] = 0.0
    return gram


def _rotation_params(app, aqq, apq):
    """Jacobi rotation (c, s) annihilating the (p, q) entry.

    Works elementwise on arrays; entries with ``apq == 0`` get the identity
    rotation.
    """
    apq_safe = np.where(apq == 0.0, 1.0, apq)
    theta = (aqq - app) / (2.0 * apq_safe)
    t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(theta == 0.0, 1.0, t)
    t = np.where(apq == 0.0, 0.0, t)
    c = 1.0 / np.sqrt(t * t + 1.0)
    return c, t * c


def _offdiag_norm(a):
    """Frobenius norm of the off-diagonal part, batched over leading axes."""
    off = a - a * np.eye(a.shape[-1])
    return np.sqrt(np.sum(off * off, axis=(-2, -1)))


def symmetric_eigendecompose(g, max_sweeps=50):
    """Eigen-decompose a small dense symmetric matrix by cyclic Jacobi rotations.

    Deterministic and accurate for the matrix sizes this package uses
    (up to a few tens).  Eigenvalues are returned in descending signed order
    with matching eigenvector columns.

    Raises
    ------
    ValueError
        If the input is not square or not symmetric to 1e-12 relative.
    ConvergenceError
        If the off-diagonal mass has not vanished after ``max_sweeps``.
    """
    a = np.array(g, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    scale = max(1.0, float(np.linalg.norm(a)))
    if np.max(np.abs(a - a.T)) > _SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)

    tol = 1e-14 * scale
    converged = n == 1
    for _ in range(max_sweeps):
        if _offdiag_norm(a) <= tol:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                c, s = _rotation_params(a[p, p], a[q, q], apq)
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if not converged and _offdiag_norm(a) > tol:
        raise ConvergenceError(
            f"Jacobi iteration did not converge in {max_sweeps} sweeps"
        )

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    return EigenDecomposition(vals[order], v[:, order])


def batch_symmetric_eigenvalues(mats, max_sweeps=50):
    """Eigenvalues of a stack of small symmetric matrices, descending per matrix.

    Same cyclic Jacobi scheme as :func:`symmetric_eigendecompose`, applied
    to a ``(B, n, n)`` stack with the rotations vectorized over the batch.
    Only eigenvalues are accumulated.
    """
    a = np.array(mats, dtype=float)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError("expected a (B, n, n) stack")
    b, n, _ = a.shape
    if b == 0:
        return np.empty((0, n))
    a = 0.5 * (a + a.transpose(0, 2, 1))
    scale = np.maximum(1.0, np.linalg.norm(a, axis=(1, 2)))

    tol = 1e-14 * scale
    converged = n == 1
    for _ in range(max_sweeps):
        if np.all(_offdiag_norm(a) <= tol):
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                c, s = _rotation_params(a[:, p, p], a[:, q, q], apq)
                c = c[:, None]
                s = s[:, None]
                rp, rq = a[:, p, :].copy(), a[:, q, :].copy()
                a[:, p, :] = c * rp - s * rq
                a[:, q, :] = s * rp + c * rq
                cp, cq = a[:, :, p].copy(), a[:, :, q].copy()
                a[:, :, p] = c * cp - s * cq
                a[:, :, q] = s * cp + c * cq
    if not converged and np.any(_offdiag_norm(a) > tol):
        raise ConvergenceError(
            f"batched Jacobi iteration did not converge in {max_sweeps} sweeps"
        )

    vals = np.diagonal(a, axis1=1, axis2=2).copy()
    vals[:, ::-1].sort(axis=1)  # descending in place
    return vals


def reconstruct_relative_positions(eig, on_negative="raise"):
    """Rebuild 3D coordinates (up to rigid motion) from a Gram eigensystem.

    Takes the three largest eigenvalues (signed order), clamps slightly
    negative ones to zero, and scales the matching eigenvectors by the
    square roots.  The reference point comes out at the origin.

    Parameters
    ----------
    eig : EigenDecomposition
    on_negative : {"raise", "zero"}
        What to do when one of the top three eigenvalues is more negative
        than the clamp tolerance: reject the input, or zero the coordinate
        (degenerate fallback used by the localizer).

    Returns
    -------
    (3, n) array of relative coordinates.
    """
    vals = np.asarray(eig.eigenvalues, dtype=float)
    vecs = np.asarray(eig.eigenvectors, dtype=float)
    if vals.size < 3:
        raise ValueError("need at least three eigenvalues")
    if on_negative not in ("raise", "zero"):
        raise ValueError("on_negative must be 'raise' or 'zero'")

    top = vals[:3].copy()
    neg_tol = NEG_EIG_TOL_FACTOR * max(1.0, float(vals[0]))
    bad = top < -neg_tol
    if np.any(bad):
        if on_negative == "raise":
            raise DegenerateGeometryError(
                f"top eigenvalues {top.tolist()} are not consistent with a "
                "3D point set"
            )
        logger.warning(
            "zero-filling %d negative eigenvalue(s) during reconstruction: %s",
            int(bad.sum()),
            top[bad].tolist(),
        )
    top = np.clip(top, 0.0, None)
    return np.sqrt(top)[:, None] * vecs[:, :3].T


def procrustes_align(relative, known_mics):
    """Map relative coordinates onto known microphone positions.

    Finds the orthogonal transform Q (rotation or rotation+reflection) and
    translation t that minimize the summed squared distance between the
    transformed relative microphone columns and ``known_mics``, then applies
    (Q, t) to *all* columns of ``relative`` (microphones plus any trailing
    source column).

    Returns
    -------
    aligned : (3, N) array
    rms : float
        Root-mean-square alignment residual over the microphone columns.
    """
    relative = np.asarray(relative, dtype=float)
    known = np.asarray(known_mics, dtype=float)
    if relative.ndim != 2 or relative.shape[0] != 3:
        raise ValueError("relative must be a (3, N) array")
    if known.ndim != 2 or known.shape[0] != 3:
        raise ValueError("known_mics must be a (3, M) array")
    m = known.shape[1]
    if relative.shape[1] < m:
        raise ValueError("relative must contain at least the microphone columns")
    if m < 3:
        raise DegenerateGeometryError("alignment needs at least 3 microphones")

    rel_mics = relative[:, :m]
    rel_centroid = rel_mics.mean(axis=1, keepdims=True)
    known_centroid = known.mean(axis=1, keepdims=True)
    a = rel_mics - rel_centroid
    b = known - known_centroid

    sv = np.linalg.svd(b, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1e-30):
        raise DegenerateGeometryError(
            "microphone positions are collinear; alignment is underdetermined"
        )

    u, _, vt = np.linalg.svd(a @ b.T)
    q = vt.T @ u.T  # full orthogonal group: reflections allowed
    t = known_centroid - q @ rel_centroid
    aligned = q @ relative + t
    rms = float(np.sqrt(np.mean(np.sum((aligned[:, :m] - known) ** 2, axis=0))))
    return aligned, rms
