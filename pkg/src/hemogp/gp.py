"""GP regression on the low-rank ensemble kernel.

Prior: zero mean, covariance K = Phi Lambda Phi^T (second-moment kernel; the
ensemble mean is part of the prior spread, so it is never subtracted).
Posterior at query points Q given measurements (X, y):
  mu    = K(Q, X) (G + s2 I)^{-1} y
  cov   = K(Q, Q) - K(Q, X) (G + s2 I)^{-1} K(X, Q),  G = K(X, X)
Every product runs through the rank-r basis, so nothing larger than
(n_obs x n_obs) is ever factored.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, FileFormatError, InvariantError
from .lowrank import eval_basis, points_to_arrays

MEASUREMENT_HEADER = ["vessel_id", "x", "t", "u"]
QUERY_HEADER = ["vessel_id", "x", "t"]
POSTERIOR_HEADER = ["vessel_id", "x", "t", "mean", "std"]


@dataclass
class MeasurementSet:
    vessel: np.ndarray     # (n,) int
    x: np.ndarray          # (n,) float
    t: np.ndarray
    u: np.ndarray
    u_clean: np.ndarray = None   # noiseless values when synthetically generated

    def __post_init__(self):
        n = len(self.u)
        if not (len(self.vessel) == len(self.x) == len(self.t) == n and n > 0):
            raise ConfigError("measurement arrays must be nonempty and equal length")
        if not np.all(np.isfinite(self.u)):
            raise ConfigError("measurement values must be finite")

    def __len__(self):
        return len(self.u)

    @property
    def points(self):
        return (self.vessel, self.x, self.t)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(MEASUREMENT_HEADER)
            for v, x, t, u in zip(self.vessel, self.x, self.t, self.u):
                w.writerow([int(v), repr(float(x)), repr(float(t)), repr(float(u))])

    @classmethod
    def from_csv(cls, path):
        rows = _read_csv(path, MEASUREMENT_HEADER)
        return cls(
            vessel=rows[:, 0].astype(np.int64), x=rows[:, 1], t=rows[:, 2],
            u=rows[:, 3],
        )


def _read_csv(path, header):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        got = next(rd, None)
        if got != header:
            raise FileFormatError(
                f"{path}: expected header {','.join(header)}, got "
                f"{','.join(got) if got else 'empty file'}"
            )
        out = []
        for row in rd:
            if not row:
                continue
            if len(row) != len(header):
                raise FileFormatError(f"{path}: bad row {row!r}")
            try:
                out.append([float(v) for v in row])
            except ValueError:
                raise FileFormatError(f"{path}: non-numeric row {row!r}")
    if not out:
        raise FileFormatError(f"{path}: no data rows")
    return np.array(out)


def read_queries(path):
    rows = _read_csv(path, QUERY_HEADER)
    return rows[:, 0].astype(np.int64), rows[:, 1], rows[:, 2]


@dataclass
class PosteriorField:
    vessel: np.ndarray
    x: np.ndarray
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    noise_variance: float
    weights: np.ndarray          # (r,) basis weights: mu(p) = phi_hat(p) . weights
    coeffs: np.ndarray = None    # (s,) snapshot combination, when Y was kept

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(POSTERIOR_HEADER)
            for v, x, t, mu, sd in zip(self.vessel, self.x, self.t, self.mean,
                                       self.std):
                w.writerow([
                    int(v), repr(float(x)), repr(float(t)),
                    repr(float(mu)), repr(float(sd)),
                ])


def gram(kernel, mset):
    """Covariance of the measurement points, G = B Lambda B^T (n x n)."""
    B = eval_basis(kernel, mset.points)
    G = (B * kernel.lam) @ B.T
    return 0.5 * (G + G.T)


def _nlml_terms(kernel, mset):
    G = gram(kernel, mset)
    d, Q = np.linalg.eigh(G)
    d = np.maximum(d, 0.0)
    y = Q.T @ mset.u
    return d, y


def _nlml(d, y, s2):
    q = d + s2
    return 0.5 * float(np.sum(y * y / q) + np.sum(np.log(q)) + len(d) * math.log(2 * math.pi))


def fit_noise(kernel, mset, grid_size=60):
    """Estimate the measurement noise variance by maximizing the marginal
    likelihood over sigma_n^2 alone (log grid scan plus golden-section polish
    on the bracketing interval). Returns the variance. Noiseless data pins
    the estimate at the lower end of the search range."""
    d, y = _nlml_terms(kernel, mset)
    v = float(np.var(mset.u))
    if v <= 0.0:
        v = max(float(np.mean(mset.u**2)), 1e-30)
    grid = v * np.logspace(-12.0, 2.0, grid_size)
    vals = [_nlml(d, y, s2) for s2 in grid]
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_size - 1)]
    # golden-section in log space
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - gr * (b - a)
    e = a + gr * (b - a)
    fc = _nlml(d, y, math.exp(c))
    fe = _nlml(d, y, math.exp(e))
    for _ in range(90):
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - gr * (b - a)
            fc = _nlml(d, y, math.exp(c))
        else:
            a, c, fc = c, e, fe
            e = a + gr * (b - a)
            fe = _nlml(d, y, math.exp(e))
    return math.exp(0.5 * (a + b))


def predict(kernel, mset, noise_variance, queries):
    """GP posterior mean and pointwise std at the query points.

    noise_variance 0 gets a jitter floor of 1e-10 * trace(G)/n for a stable
    factorization. Posterior variances in [-1e-10 * prior, 0) are clipped to
    zero; anything more negative raises InvariantError.
    """
    if noise_variance < 0.0:
        raise ConfigError(f"noise variance must be nonnegative, got {noise_variance}")
    qv, qx, qt = points_to_arrays(queries)
    B = eval_basis(kernel, mset.points)
    G = (B * kernel.lam) @ B.T
    G = 0.5 * (G + G.T)
    n = len(mset)
    s2 = noise_variance
    if s2 == 0.0:
        s2 = 1e-10 * float(np.trace(G)) / n
    M = G + s2 * np.eye(n)
    try:
        cf = cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InvariantError(f"gram factorization failed: {exc}") from exc
    z = cho_solve(cf, mset.u)
    w = kernel.lam * (B.T @ z)

    Bq = eval_basis(kernel, (qv, qx, qt))
    Kqx = (Bq * kernel.lam) @ B.T
    mean = Bq @ w
    prior = np.maximum((Bq * Bq) @ kernel.lam, 0.0)
    V = cho_solve(cf, Kqx.T)
    var = prior - np.einsum("ij,ji->i", Kqx, V)
    tol = 1e-10 * max(float(prior.max(initial=0.0)), 1e-300)
    if np.any(var < -tol):
        worst = float(var.min())
        raise InvariantError(
            f"posterior variance went negative beyond roundoff ({worst:g}; "
            f"tolerance {-tol:g})"
        )
    var = np.maximum(var, 0.0)

    coeffs = None
    if kernel.Y is not None:
        coeffs = kernel.Y @ (w / kernel.sigma)
    return PosteriorField(
        vessel=qv, x=qx, t=qt, mean=mean, std=np.sqrt(var),
        noise_variance=noise_variance, weights=w, coeffs=coeffs,
    )


def mass_audit(kernel, field, net):
    """Evaluate the posterior mean on the kernel's own grid and report the
    junction flux mismatch Q_parent - sum(Q_children) per junction, using the
    network's nominal reference areas at the vessel ends. The network only
    supplies topology, lengths, and areas, so a kernel built at a different
    grid resolution still audits cleanly."""
    ids = net.vessel_ids
    if list(kernel.vessel_ids) != ids:
        raise ConfigError("kernel vessels do not match the network")
    npts = {}
    for vid, xg in zip(kernel.vessel_ids, kernel.x_grids):
        v = net.vessels[vid]
        if abs(xg[-1] - v.length) > 1e-9 * v.length:
            raise ConfigError(
                f"kernel grid for vessel {vid} spans {xg[-1]:g} m but the "
                f"network vessel is {v.length:g} m long"
            )
        npts[vid] = len(xg)
    mu = (kernel.phi @ field.weights).reshape(-1, kernel.m)
    offsets = {vid: int(o) for vid, o in zip(ids, kernel._offsets)}
    report = {"junctions": {}, "worst_relative": 0.0}
    for jn in net.junctions:
        pv = net.vessels[jn.parent]
        pe = offsets[jn.parent] + npts[jn.parent] - 1
        qp = float(pv.reference_area(pv.length)) * mu[pe]
        qc = np.zeros_like(qp)
        for cid in jn.children:
            cv = net.vessels[cid]
            qc += float(cv.reference_area(0.0)) * mu[offsets[cid]]
        resid = qp - qc
        scale = max(float(np.max(np.abs(qp))), float(np.max(np.abs(qc))), 1e-300)
        rel = float(np.max(np.abs(resid))) / scale
        report["junctions"][jn.parent] = {
            "max_abs_mismatch": float(np.max(np.abs(resid))),
            "flux_scale": scale,
            "relative": rel,
        }
        report["worst_relative"] = max(report["worst_relative"], rel)
    return report


def decompose(field, kernel, snapshots=None):
    """Express the posterior mean as a combination of ensemble members:
    mu(p) = sum_l a_l u_l(p). Requires the kernel's right singular vectors.
    When the snapshot matrix is supplied the identity is verified on the full
    grid and the relative error reported."""
    if kernel.Y is None:
        raise ConfigError(
            "kernel was saved without right singular vectors; rebuild with "
            "keep_right_vectors to decompose posteriors"
        )
    a = kernel.Y @ (field.weights / kernel.sigma)
    report = {"verified": False, "relative_error": None}
    if snapshots is not None:
        U = snapshots.U if hasattr(snapshots, "U") else np.asarray(snapshots)
        if U.shape != (kernel.n_rows, len(a)):
            raise ConfigError(
                f"snapshot matrix shape {U.shape} does not match the kernel "
                f"({kernel.n_rows} rows, {len(a)} samples)"
            )
        lhs = kernel.phi @ field.weights
        rhs = U @ a
        denom = float(np.linalg.norm(lhs))
        err = float(np.linalg.norm(lhs - rhs)) / max(denom, 1e-300)
        report = {"verified": True, "relative_error": err}
    return a, report
