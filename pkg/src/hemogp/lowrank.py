"""Low-rank spatiotemporal covariance learned from ensemble snapshots.

The empirical second-moment kernel over the space-time grid is
K(p, q) = (1/s) * sum_l u_l(p) u_l(q) = Phi Lambda Phi^T after a thin SVD
U = Phi Sigma Y^T of the (N x s) snapshot matrix, with Lambda = Sigma^2 / s.
The ensemble mean is deliberately not subtracted: the kernel is a
second-moment operator and the GP prior mean is zero.

Off-grid evaluation interpolates the basis columns bilinearly in (x, t);
queries outside the space-time domain raise DomainError (a slack of
1e-9 * extent absorbs float roundoff at the edges, nothing more).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, InvariantError


@dataclass(frozen=True)
class SpaceTimePoint:
    vessel: int
    x: float
    t: float


@dataclass
class LowRankKernel:
    lam: np.ndarray          # (r,) kernel eigenvalues sigma_i^2 / s
    sigma: np.ndarray        # (r,) singular values of U
    phi: np.ndarray          # (N, r) orthonormal basis columns
    vessel_ids: list
    x_grids: list
    t_grid: np.ndarray
    period: float
    n_samples: int
    energy_threshold: float  # None when a fixed rank was requested
    captured_energy: float
    Y: np.ndarray = None     # (s, r) right singular vectors, optional
    spectrum: np.ndarray = None   # full singular-value list, in-memory only

    def __post_init__(self):
        counts = np.array([len(xg) for xg in self.x_grids], dtype=np.int64)
        self._counts = counts
        self._offsets = np.concatenate(([0], np.cumsum(counts[:-1])))
        self._slot = {vid: i for i, vid in enumerate(self.vessel_ids)}
        if self.phi.shape != (int(counts.sum()) * self.m, self.rank):
            raise InvariantError(
                f"basis shape {self.phi.shape} does not match grids"
            )

    @property
    def rank(self):
        return len(self.lam)

    @property
    def m(self):
        return len(self.t_grid)

    @property
    def n_rows(self):
        return self.phi.shape[0]

    def grid_row(self, vessel, node, tindex):
        """Row of phi for grid node `node` of a vessel at snapshot `tindex`."""
        slot = self._slot[vessel]
        return (int(self._offsets[slot]) + node) * self.m + tindex


def points_to_arrays(points):
    """Normalize a point list / array triple into (vessel, x, t) arrays."""
    if isinstance(points, tuple) and len(points) == 3:
        v, x, t = points
        return (np.asarray(v, dtype=np.int64), np.asarray(x, dtype=float),
                np.asarray(t, dtype=float))
    pts = list(points)
    v = np.array([p.vessel for p in pts], dtype=np.int64)
    x = np.array([p.x for p in pts], dtype=float)
    t = np.array([p.t for p in pts], dtype=float)
    return v, x, t


def build_kernel(snap, energy_threshold=0.99, rank=None, keep_right_vectors=False):
    """Factor a snapshot matrix into a LowRankKernel.

    The rank is the smallest r whose cumulative squared-singular-value energy
    reaches energy_threshold, unless a fixed rank is given. The Gram matrix
    (1/s) U U^T is never formed; everything runs through the thin SVD.
    """
    snap.validate()
    U = snap.U
    s = U.shape[1]
    phi, sig, vt = np.linalg.svd(U, full_matrices=False)
    # drop numerically-zero modes so the basis stays well defined
    s_eff = int(np.count_nonzero(sig > sig[0] * 1e-14)) if sig[0] > 0.0 else 0
    if s_eff == 0:
        raise ConfigError("snapshot matrix is identically zero; nothing to factor")
    if rank is not None:
        if not 1 <= rank <= s_eff:
            raise ConfigError(
                f"requested rank {rank} outside [1, {s_eff}] "
                f"(number of nonzero modes)"
            )
        r = int(rank)
        thr = None
    else:
        if not 0.0 < energy_threshold <= 1.0:
            raise ConfigError(
                f"energy threshold must lie in (0, 1], got {energy_threshold}"
            )
        energy = sig**2
        cum = np.cumsum(energy) / energy.sum()
        r = int(np.searchsorted(cum, energy_threshold, side="left")) + 1
        r = min(r, s_eff)
        thr = float(energy_threshold)
    captured = float((sig[:r] ** 2).sum() / (sig**2).sum())
    return LowRankKernel(
        lam=sig[:r] ** 2 / s,
        sigma=sig[:r].copy(),
        phi=np.ascontiguousarray(phi[:, :r]),
        Y=np.ascontiguousarray(vt[:r].T) if keep_right_vectors else None,
        vessel_ids=list(snap.vessel_ids),
        x_grids=[np.asarray(xg, dtype=float) for xg in snap.x_grids],
        t_grid=np.asarray(snap.t_grid, dtype=float),
        period=snap.period,
        n_samples=s,
        energy_threshold=thr,
        captured_energy=captured,
        spectrum=sig.copy(),
    )


def eval_basis(kernel, points):
    """Interpolate the basis columns at arbitrary space-time points.

    Returns B with shape (n_points, r): B[i] = phi_hat(p_i). Grid points
    reproduce rows of phi exactly.
    """
    v, x, t = points_to_arrays(points)
    n = len(v)
    B = np.empty((n, kernel.rank))
    tg = kernel.t_grid
    m = kernel.m
    t_max = tg[-1]
    et = 1e-9 * max(kernel.period, 1e-30)
    bad_t = (t < tg[0] - et) | (t > t_max + et)
    if np.any(bad_t):
        i = int(np.argmax(bad_t))
        raise DomainError(
            f"query t = {t[i]:g} s outside the kernel time window "
            f"[0, {t_max:g}] (vessel {v[i]}, x = {x[i]:g})"
        )
    t = np.clip(t, tg[0], t_max)
    it = np.clip(np.searchsorted(tg, t, side="right") - 1, 0, m - 2)
    wt = (t - tg[it]) / (tg[it + 1] - tg[it])

    for vid in np.unique(v):
        if int(vid) not in kernel._slot:
            i = int(np.argmax(v == vid))
            raise DomainError(
                f"query vessel {vid} is not covered by the kernel "
                f"(x = {x[i]:g}, t = {t[i]:g})"
            )
        slot = kernel._slot[int(vid)]
        xg = kernel.x_grids[slot]
        L = xg[-1]
        sel = np.nonzero(v == vid)[0]
        xs = x[sel]
        ex = 1e-9 * max(L, 1e-30)
        bad_x = (xs < xg[0] - ex) | (xs > L + ex)
        if np.any(bad_x):
            i = sel[int(np.argmax(bad_x))]
            raise DomainError(
                f"query x = {x[i]:g} m outside vessel {vid} (length {L:g} m, "
                f"t = {t[i]:g})"
            )
        xs = np.clip(xs, xg[0], L)
        jx = np.clip(np.searchsorted(xg, xs, side="right") - 1, 0, len(xg) - 2)
        wx = (xs - xg[jx]) / (xg[jx + 1] - xg[jx])
        base = (int(kernel._offsets[slot]) + jx) * m + it[sel]
        wts = wt[sel]
        B[sel] = (
            kernel.phi[base] * ((1 - wx) * (1 - wts))[:, None]
            + kernel.phi[base + m] * (wx * (1 - wts))[:, None]
            + kernel.phi[base + 1] * ((1 - wx) * wts)[:, None]
            + kernel.phi[base + m + 1] * (wx * wts)[:, None]
        )
    return B


def eval_kernel(kernel, points_a, points_b=None):
    """Covariance block K(A, B) = B_a Lambda B_b^T (B defaults to A)."""
    Ba = eval_basis(kernel, points_a)
    Bb = Ba if points_b is None else eval_basis(kernel, points_b)
    return (Ba * kernel.lam) @ Bb.T


def save_kernel(kernel, path):
    from .container import save_kernel as _save

    _save(kernel, path)


def load_kernel(path):
    from .container import load_kernel as _load

    return _load(path)
