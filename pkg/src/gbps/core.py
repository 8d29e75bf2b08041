"""Simplex geometry and the linear ensemble algebra.

Points on the probability simplex are plain 1-D ``numpy`` float arrays. The
``as_*`` helpers validate (and lightly repair) user input so the rest of the
package can assume well-formed arrays.
"""

import numpy as np

from .errors import DimensionError, SimplexError, ValidationError

SIMPLEX_TOL = 1e-9


def as_simplex(values, name="weights"):
    """Validate ``values`` as a point on the simplex and return a float array.

    Entries must be non-negative. A sum that misses 1 by at most
    ``SIMPLEX_TOL`` is renormalized; larger deviations raise.
    """
    v = np.array(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise SimplexError(f"{name}: empty vector")
    if not np.all(np.isfinite(v)):
        raise SimplexError(f"{name}: non-finite entry")
    if np.any(v < 0):
        raise SimplexError(f"{name}: negative entry {v.min():g}")
    total = v.sum()
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise SimplexError(f"{name}: entries sum to {total:.12g}, not 1")
    if total != 1.0:
        v = v / total
    return v


def as_loss_vector(values, name="losses"):
    z = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(z)):
        raise ValidationError(f"{name}: non-finite entry")
    return z


def as_policy_matrix(rows, name="policies"):
    """Validate a (J, K) matrix whose rows are expert policies."""
    w = np.array(rows, dtype=float)
    if w.ndim == 1:
        w = w[None, :]
    if w.ndim != 2 or w.shape[0] == 0:
        raise SimplexError(f"{name}: expected a non-empty 2-D array, got shape {w.shape}")
    return np.vstack([as_simplex(row, f"{name}[{j}]") for j, row in enumerate(w)])


def ensemble_policy(theta, policies):
    """Mix expert policies with ensemble weights: ``pi(a) = sum_j theta_j w_j(a)``.

    Parameters
    ----------
    theta : array-like, shape (J,)
        Ensemble weights on the simplex.
    policies : array-like, shape (J, K)
        One policy per row.

    Returns
    -------
    numpy.ndarray, shape (K,)
        The ensemble policy, renormalized to absorb rounding.
    """
    theta = as_simplex(theta, "theta")
    w = as_policy_matrix(policies)
    if theta.size != w.shape[0]:
        raise DimensionError("theta vs policy rows", w.shape[0], theta.size)
    pi = theta @ w
    return pi / pi.sum()


def ensemble_loss(theta, z):
    """Loss of the ensemble policy, the inner product ``<theta, z>``."""
    theta = as_simplex(theta, "theta")
    z = as_loss_vector(z, "z")
    if theta.size != z.size:
        raise DimensionError("theta vs losses", theta.size, z.size)
    return float(theta @ z)


def project_rows(v):
    """Euclidean projection of every row of ``v`` onto the simplex.

    Sort-and-threshold algorithm, O(n log n) per row.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[1] == 0:
        raise ValidationError(f"expected a (rows, n) array with n >= 1, got shape {v.shape}")
    n = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, n + 1)
    cond = u - css / k > 0
    # the first entry always satisfies the condition, so rho >= 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(v.shape[0]), rho] / (rho + 1)
    out = np.maximum(v - tau[:, None], 0.0)
    return out / out.sum(axis=1, keepdims=True)


def project_to_simplex(v):
    """Euclidean projection of a vector onto the simplex.

    Feasible inputs (non-negative, summing to 1 within tolerance) are
    returned unchanged apart from renormalization.
    """
    x = np.array(v, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValidationError("cannot project an empty vector")
    if not np.all(np.isfinite(x)):
        raise ValidationError("cannot project a vector with non-finite entries")
    if np.all(x >= 0) and abs(x.sum() - 1.0) <= SIMPLEX_TOL:
        return x / x.sum()
    return project_rows(x[None, :])[0]


def sample_dirichlet(alpha, rng):
    """One Dirichlet(alpha) draw using the caller's ``numpy`` Generator."""
    a = np.array(alpha, dtype=float).reshape(-1)
    if a.size == 0 or not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValidationError(f"Dirichlet concentration must be positive, got {a}")
    return rng.dirichlet(a)
