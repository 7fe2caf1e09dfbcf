"""Weighted least-squares fits of antibunching dips.

Both estimators follow the scikit-learn protocol: ``fit(X, y, sample_weight)``
with ``X`` the delays (ps), ``y`` the normalized coincidences and
``sample_weight = 1 / sigma_k**2``. ``fit_dip`` and ``fit_convolved_dip`` wrap
them for normalized ``Histogram`` objects using Poisson weights.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..correlation import Histogram
from ..errors import ConvergenceError, DegenerateDataError
from .models import dip_shape_grad

TAU0_FLOOR = 1.0  # ps, the timestamp resolution


@dataclass(frozen=True)
class FitResult:
    a: float
    tau0: float
    t0: float
    sigma: float
    g2_at_dip: float
    a_err: float
    tau0_err: float
    t0_err: float
    sigma_err: float
    chi2_reduced: float
    n_points: int
    n_free: int
    model: str = "eq1"
    pinned: tuple = ()
    n_iter: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pinned"] = list(self.pinned)
        return d

    def summary(self) -> str:
        return (f"g2_dip={self.g2_at_dip:.4f} ± {self.a_err:.4f} "
                f"tau0={self.tau0:.1f} ps ± {self.tau0_err:.1f}")


def _smooth3(y):
    padded = np.concatenate(([y[0]], y, [y[-1]]))
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def _initial_guess(x, y):
    """t0 at the smoothed minimum, a = 1 - min(y), tau0 = dip half-width at 1 - a/2."""
    s = _smooth3(y)
    k = int(np.argmin(s))
    a0 = float(np.clip(1.0 - np.min(y), 0.0, 1.0))
    level = 1.0 - 0.5 * a0
    left = k
    while left > 0 and s[left - 1] < level:
        left -= 1
    right = k
    while right < len(s) - 1 and s[right + 1] < level:
        right += 1
    dx = float(np.median(np.diff(x))) if len(x) > 1 else 1.0
    hw = max(0.5 * (x[right] - x[left]), 0.5 * dx)
    return a0, hw, float(x[k]), dx


class _DipEstimator(RegressorMixin, BaseEstimator):
    param_names: tuple = ()

    def _model_grad(self, x, p):
        raise NotImplementedError

    def _model(self, x, p):
        return self._model_grad(x, p)[0]

    def _bounds(self, x):
        raise NotImplementedError

    def _grid(self, x, y):
        raise NotImplementedError

    def fit(self, X, y, sample_weight=None):
        x = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise ValueError("X and y differ in length")
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float).reshape(-1)
        ok = np.isfinite(x) & np.isfinite(y) & np.isfinite(w) & (w > 0)
        x, y, w = x[ok], y[ok], w[ok]
        k = len(self.param_names)
        if x.size < 4 * k:
            raise DegenerateDataError(f"need at least {4 * k} points for {k} free parameters, got {x.size}")
        order = np.argsort(x)
        x, y, w = x[order], y[order], w[order]
        lo, hi = self._bounds(x)

        def chi2(p):
            r = y - self._model(x, p)
            return float(np.dot(w, r * r))

        # coarse grid
        grid = self._grid(x, y)
        best = min(grid, key=chi2)
        scale = np.maximum(np.abs(best), 1e-3)
        scale[0] = 1.0

        # simplex refinement in scaled coordinates
        z0 = best / scale
        simplex = [z0] + [z0 + 0.2 * np.eye(k)[i] for i in range(k)]
        res = minimize(lambda z: chi2(np.clip(z * scale, lo, hi)), z0, method="Nelder-Mead",
                       options={"initial_simplex": np.array(simplex), "xatol": 1e-7, "fatol": 1e-10,
                                "maxiter": 400 * k, "maxfev": 800 * k})
        p = np.clip(res.x * scale, lo, hi)

        p, pinned, n_iter = self._gauss_newton(x, y, w, p, lo, hi, chi2)
        _, J = self._model_grad(x, p)
        errs = _standard_errors(J * np.sqrt(w)[:, None], pinned)
        c2 = chi2(p)

        self.params_ = p.astype(float)
        self.stderr_ = errs.astype(float)
        self.pinned_ = tuple(n for n, m in zip(self.param_names, pinned) if m)
        self.chi2_ = c2
        self.chi2_reduced_ = c2 / max(x.size - k, 1)
        self.n_points_ = int(x.size)
        self.n_iter_ = n_iter
        return self

    def _gauss_newton(self, x, y, w, p, lo, hi, chi2):
        """Levenberg-damped Gauss-Newton with an active set for bound parameters."""
        sw = np.sqrt(w)
        lam = 1e-3
        c = chi2(p)
        pinned = np.zeros(p.size, bool)
        for it in range(1, self.max_iter + 1):
            m, J = self._model_grad(x, p)
            Jw = J * sw[:, None]
            rw = (y - m) * sw
            g = Jw.T @ rw
            pinned = ((p <= lo) & (g <= 0)) | ((p >= hi) & (g >= 0))
            free = ~pinned
            if not free.any():
                return p, pinned, it
            A = Jw[:, free].T @ Jw[:, free]
            b = g[free]
            while True:
                D = A + lam * np.diag(np.maximum(np.diag(A), 1e-300))
                try:
                    step = np.linalg.solve(D, b)
                except np.linalg.LinAlgError:
                    step = np.linalg.lstsq(D, b, rcond=None)[0]
                p_new = p.copy()
                p_new[free] = np.clip(p[free] + step, lo[free], hi[free])
                c_new = chi2(p_new)
                if c_new <= c:
                    break
                lam *= 10.0
                if lam > 1e10:
                    return p, pinned, it
            moved = np.max(np.abs(p_new - p) / np.maximum(np.abs(p), 1.0))
            gain = c - c_new
            p, c = p_new, c_new
            lam = max(lam / 10.0, 1e-12)
            if gain <= self.tol * max(c, 1e-300) and moved < 1e-7:
                return p, pinned, it
        raise ConvergenceError(f"Gauss-Newton polish did not converge in {self.max_iter} iterations")

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self._model(np.asarray(X, dtype=float).reshape(-1), self.params_)


def _standard_errors(Jw, pinned):
    A = Jw.T @ Jw
    k = A.shape[0]
    errs = np.full(k, np.inf)
    diag = np.diag(A)
    usable = ~pinned & (diag > 1e-300 * max(diag.max(), 1.0))
    if usable.any():
        sub = A[np.ix_(usable, usable)]
        try:
            cov = np.linalg.inv(sub)
        except np.linalg.LinAlgError:
            cov = np.linalg.pinv(sub)
        errs[usable] = np.sqrt(np.maximum(np.diag(cov), 0.0))
    # a parameter held at its bound: report its marginal curvature width
    for i in np.flatnonzero(pinned):
        if diag[i] > 0:
            errs[i] = 1.0 / math.sqrt(diag[i])
    return errs


class DipModel(_DipEstimator):
    """``1 - a exp(-|tau - t0| / tau0)`` with free (a, tau0, t0)."""

    param_names = ("a", "tau0", "t0")

    def __init__(self, max_iter=200, tol=1e-10):
        self.max_iter = max_iter
        self.tol = tol

    def _model_grad(self, x, p):
        a, tau0, t0 = p
        f, d_tau0, d_u = dip_shape_grad(x - t0, tau0, 0.0)
        J = np.column_stack((-f, -a * d_tau0, a * d_u))
        return 1.0 - a * f, J

    def _bounds(self, x):
        span = x[-1] - x[0]
        return np.array([0.0, TAU0_FLOOR, x[0]]), np.array([1.0, 10.0 * span, x[-1]])

    def _grid(self, x, y):
        a0, hw, t00, dx = _initial_guess(x, y)
        a_grid = np.unique(np.clip(np.r_[a0 * np.array([0.5, 0.75, 1.0]), 0.25, 0.5, 0.75, 0.9, 1.0], 0, 1))
        tau_grid = max(hw, TAU0_FLOOR) * np.geomspace(0.25, 4.0, 9)
        t0_grid = np.clip(t00 + dx * np.arange(-2, 3), x[0], x[-1])
        return [np.array([a, t, s]) for a in a_grid for t in tau_grid for s in t0_grid]

    @property
    def a_(self):
        return self.params_[0]

    @property
    def tau0_(self):
        return self.params_[1]

    @property
    def t0_(self):
        return self.params_[2]


class ConvolvedDipModel(_DipEstimator):
    """Gaussian-broadened dip with jitter ``sigma`` and delay ``t0`` held fixed."""

    param_names = ("a", "tau0")

    def __init__(self, sigma=213.0, t0=-167.0, max_iter=200, tol=1e-10):
        self.sigma = sigma
        self.t0 = t0
        self.max_iter = max_iter
        self.tol = tol

    def _model_grad(self, x, p):
        a, tau0 = p
        f, d_tau0, _ = dip_shape_grad(x - self.t0, tau0, float(self.sigma))
        return 1.0 - a * f, np.column_stack((-f, -a * d_tau0))

    def _bounds(self, x):
        span = x[-1] - x[0]
        return np.array([0.0, TAU0_FLOOR]), np.array([1.0, 10.0 * span])

    def _grid(self, x, y):
        a0, hw, _, _ = _initial_guess(x, y)
        a_grid = np.unique(np.clip(np.r_[a0 * np.array([0.5, 1.0, 1.5, 2.0]), 0.25, 0.5, 0.75, 1.0], 0, 1))
        tau_grid = max(hw, TAU0_FLOOR) * np.geomspace(0.125, 4.0, 11)
        return [np.array([a, t]) for a in a_grid for t in tau_grid]

    @property
    def a_(self):
        return self.params_[0]

    @property
    def tau0_(self):
        return self.params_[1]


def poisson_weights(h: Histogram) -> np.ndarray:
    """1/sigma_k^2 with sigma_k = sqrt(counts_k) / flat_level; empty bins count as 1."""
    return h.flat_level**2 / np.maximum(h.counts, 1).astype(float)


def _check_normalized(h: Histogram):
    if h.normalized is None or h.flat_level is None:
        raise DegenerateDataError("histogram is not normalized")
    if not h.flat_level > 0:
        raise DegenerateDataError("flat level must be positive")


def fit_dip(h: Histogram, **kwargs) -> FitResult:
    """Fit the un-broadened dip (a, tau0, t0) to a normalized histogram."""
    _check_normalized(h)
    est = DipModel(**kwargs).fit(h.bin_centers, h.normalized, poisson_weights(h))
    a, tau0, t0 = map(float, est.params_)
    ea, etau, et0 = map(float, est.stderr_)
    return FitResult(a=a, tau0=tau0, t0=t0, sigma=0.0, g2_at_dip=1.0 - a, a_err=ea, tau0_err=etau,
                     t0_err=et0, sigma_err=0.0, chi2_reduced=float(est.chi2_reduced_), n_points=est.n_points_,
                     n_free=3, model="eq1", pinned=est.pinned_, n_iter=est.n_iter_)


def fit_convolved_dip(h: Histogram, sigma_fixed, t0_fixed, **kwargs) -> FitResult:
    """Fit (a, tau0) of the jitter-broadened dip with calibrated sigma and t0 held fixed."""
    _check_normalized(h)
    if not sigma_fixed > 0:
        raise ValueError("sigma_fixed must be > 0")
    est = ConvolvedDipModel(sigma=sigma_fixed, t0=t0_fixed, **kwargs)
    est.fit(h.bin_centers, h.normalized, poisson_weights(h))
    a, tau0 = map(float, est.params_)
    ea, etau = map(float, est.stderr_)
    return FitResult(a=a, tau0=tau0, t0=float(t0_fixed), sigma=float(sigma_fixed), g2_at_dip=1.0 - a,
                     a_err=ea, tau0_err=etau, t0_err=0.0, sigma_err=0.0, chi2_reduced=float(est.chi2_reduced_),
                     n_points=est.n_points_, n_free=2, model="eq2", pinned=est.pinned_, n_iter=est.n_iter_)
