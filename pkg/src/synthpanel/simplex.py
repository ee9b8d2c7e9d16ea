"""Weights on the probability simplex and constrained least squares over it.

The estimators in this package repeatedly solve

    minimize  || A w - b ||^2   subject to  w >= 0,  sum(w) = 1,

a small quadratic program whose feasible set is the unit simplex. The solver
below uses accelerated projected gradient descent with the sort-based
Euclidean simplex projection, followed by an active-set refinement that
solves the KKT system on the support. It is deterministic: no randomness,
fixed uniform initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Tolerances shared by every weight vector in the package.
NEGATIVE_WEIGHT_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative weights summing to one.

    Entries in [-1e-12, 0) are clamped to zero on construction; anything more
    negative, or a sum further than 1e-9 from one, is rejected.
    """

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size == 0:
            raise ValidationError("weight vector must have at least one entry")
        if np.min(values) < -NEGATIVE_WEIGHT_TOL:
            raise ValidationError(
                f"negative weight {np.min(values):.3e} below tolerance "
                f"{-NEGATIVE_WEIGHT_TOL:.0e}"
            )
        values = np.maximum(values, 0.0)
        total = float(values.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOL:.0e}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def __getitem__(self, index):
        return self.values[index]

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))

    def as_mapping(self, labels) -> dict:
        """Pair weights with labels, e.g. donor unit ids."""
        if len(labels) != len(self):
            raise ValidationError("label count does not match weight count")
        return {label: float(w) for label, w in zip(labels, self.values)}


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort-based algorithm)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - cssv / ind > 0
    rho = ind[cond][-1]
    theta = cssv[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


def _objective(A: np.ndarray, b: np.ndarray, w: np.ndarray) -> float:
    r = A @ w - b
    return float(r @ r)


def _kkt_solve(AtA: np.ndarray, Atb: np.ndarray, support: np.ndarray) -> np.ndarray | None:
    """Solve min ||A_S w - b||^2 s.t. sum(w) = 1 on the given support.

    Returns the support-sized solution, or None if the KKT system is too
    ill-conditioned to trust.
    """
    k = int(support.sum())
    H = 2.0 * AtA[np.ix_(support, support)]
    g = 2.0 * Atb[support]
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = H
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    rhs = np.concatenate([g, [1.0]])
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        return None
    return sol[:k]


def _polish(A: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Active-set refinement: exact KKT solve on the support of ``w``.

    Never returns a point with a worse objective than ``w``.
    """
    m = w.size
    AtA = A.T @ A
    Atb = A.T @ b
    f_in = _objective(A, b, w)
    support = w > 1e-10
    if not support.any():
        support[int(np.argmax(w))] = True
    for _ in range(2 * m + 5):
        ws = _kkt_solve(AtA, Atb, support)
        if ws is None:
            return w
        if np.min(ws) < -1e-10:
            # Drop the most negative coordinate and re-solve.
            idx = np.where(support)[0]
            support[idx[int(np.argmin(ws))]] = False
            if not support.any():
                return w
            continue
        candidate = np.zeros(m)
        candidate[support] = np.maximum(ws, 0.0)
        candidate /= candidate.sum()
        # Check stationarity of the excluded coordinates: gradient must not
        # point inward anywhere off the support.
        grad = 2.0 * (AtA @ candidate - Atb)
        nu = float(np.min(grad[support]))
        off = ~support
        if off.any():
            viol = grad[off] - nu
            if np.min(viol) < -1e-9 * max(1.0, abs(nu)):
                joff = np.where(off)[0]
                support[joff[int(np.argmin(viol))]] = True
                continue
        if _objective(A, b, candidate) <= f_in + 1e-13 * max(1.0, f_in):
            return candidate
        return w
    return w


def minimize_simplex_qp(
    A: np.ndarray,
    b: np.ndarray,
    *,
    w0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Minimize ``||A w - b||^2`` over the unit simplex.

    Parameters
    ----------
    A : ndarray, shape (rows, m)
        Design matrix; ridge terms can be appended as extra rows.
    b : ndarray, shape (rows,)
        Target vector.
    w0 : ndarray, optional
        Starting point; defaults to uniform weights (the deterministic
        tie-break when the optimum is not unique).
    tol : float
        Stop when the objective decreases by less than this between
        iterations.
    max_iter : int
        Iteration cap for the accelerated projected-gradient phase.

    Returns
    -------
    ndarray
        Weights on the simplex. The objective at the result is never above
        the objective at any simplex vertex.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != b.size:
        raise ValidationError("A must be 2-d with one row per entry of b")
    m = A.shape[1]
    if m == 0:
        raise ValidationError("need at least one column to weight")
    if m == 1:
        return np.ones(1)

    start = project_to_simplex(np.full(m, 1.0 / m) if w0 is None else np.asarray(w0, dtype=float))
    AtA = A.T @ A
    lipschitz = 2.0 * float(np.linalg.norm(AtA, 2))
    if lipschitz <= 0.0 or not np.isfinite(lipschitz):
        return start  # constant objective: keep the deterministic start

    def gap_at(w: np.ndarray) -> float:
        # The linearization (Frank-Wolfe) gap bounds the objective change
        # still available, so it is a sound convergence test even on flat
        # objectives.
        g = 2.0 * (A.T @ (A @ w - b))
        return float(g @ w - np.min(g))

    def converged(w: np.ndarray) -> bool:
        return gap_at(w) <= tol * max(1.0, _objective(A, b, w))

    def fista_chunk(w: np.ndarray, iters: int) -> np.ndarray:
        step = 1.0 / lipschitz
        y = w.copy()
        t = 1.0
        f_prev = _objective(A, b, w)
        best_w, best_f = w, f_prev
        for _ in range(iters):
            grad = 2.0 * (A.T @ (A @ y - b))
            w_next = project_to_simplex(y - step * grad)
            f_next = _objective(A, b, w_next)
            if f_next > f_prev:  # restart momentum on non-monotone step
                y = w.copy()
                t = 1.0
                grad = 2.0 * (A.T @ (A @ y - b))
                w_next = project_to_simplex(y - step * grad)
                f_next = _objective(A, b, w_next)
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = w_next + ((t - 1.0) / t_next) * (w_next - w)
            w, t = w_next, t_next
            if f_next < best_f:
                best_w, best_f = w_next, f_next
            if converged(w_next):
                return w_next
            f_prev = f_next
        return best_w

    def descend(w: np.ndarray) -> np.ndarray:
        # Alternate short accelerated-gradient runs with exact active-set
        # refinement; the refinement usually lands on the optimum once the
        # support has settled, so most solves finish in a few rounds.
        chunk = 60
        best = w
        for _ in range(max(1, int(np.ceil(max_iter / chunk)))):
            best = fista_chunk(best, chunk)
            polished = _polish(A, b, best)
            if converged(polished):
                return polished
            if _objective(A, b, polished) <= _objective(A, b, best):
                best = polished
        return _polish(A, b, best)

    w = descend(start)
    # Guarantee the vertex-domination invariant: if some vertex still beats
    # the iterate, restart from it once.
    vertex_obj = np.sum(A * A, axis=0) - 2.0 * (A.T @ b) + float(b @ b)
    j = int(np.argmin(vertex_obj))
    if vertex_obj[j] < _objective(A, b, w):
        e = np.zeros(m)
        e[j] = 1.0
        w_alt = descend(e)
        if _objective(A, b, w_alt) < _objective(A, b, w):
            w = w_alt
    return w
