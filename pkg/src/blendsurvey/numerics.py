"""Small linear-algebra helpers shared by the fitting routines."""

import numpy as np
from scipy.linalg import qr

from .errors import RankDeficient

RANK_TOL = 1e-10


def check_rank(X: np.ndarray, tol: float = RANK_TOL) -> None:
    """Raise RankDeficient when a pivoted QR shows a negligible pivot."""
    if X.shape[1] == 0:
        return
    if X.shape[0] < X.shape[1]:
        raise RankDeficient(f"{X.shape[0]} rows for {X.shape[1]} columns")
    r = qr(X, mode="r", pivoting=True, check_finite=False)[0]
    d = np.abs(np.diag(r))
    if d[0] == 0 or d[-1] <= tol * d[0]:
        raise RankDeficient(
            f"design matrix is rank deficient (pivot ratio {d[-1] / max(d[0], 1e-300):.2e})"
        )
