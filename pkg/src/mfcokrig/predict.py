"""Closed-form recursive prediction and sequential predictive sampling.

Given fitted range parameters, the predictive distribution of the output at
every fidelity level is available in closed form: level one is exactly
universal kriging with a Student-t predictive, and each higher level adds
the scale-linked lower-level prediction to its mean and propagates both the
lower-level variance and the estimation uncertainty of the trend and scale
coefficients into its variance.

Sampling follows the conditional route: draw the level-one output from its
Student-t, then feed each draw into the next level's conditional Student-t,
whose mean is linear and whose scale is quadratic in the lower draw.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.stats import t as student_t

from .estimate import MATCH_TOL, CokrigingData, FitResult
from .exceptions import DesignRankError, InvalidArgumentError, VarianceUndefinedError
from .gp import gls_fit
from .kernels import RangeParams, cross_corr

# a whitened scale-link column with squared norm below this is collinear
# with the basis, making the scale coefficient unidentifiable
MIN_SCALE_LINK_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class Prediction:
    """Batched predictive moments.

    Column ``t-1`` of each array belongs to fidelity level ``t``.

    Attributes
    ----------
    means : ndarray, shape (m, s)
    variances : ndarray or None, shape (m, s)
        ``None`` when only means were requested.
    dfs : ndarray, shape (s,)
        Student-t degrees of freedom per level.
    at_design : ndarray of bool, shape (m, s)
        Whether each query coincides with a design point of that level.
    """

    means: np.ndarray
    variances: np.ndarray
    dfs: np.ndarray
    at_design: np.ndarray

    @property
    def s(self):
        return self.means.shape[1]


@dataclass(frozen=True, eq=False)
class _LevelState:
    """Prediction-time cache for one level."""

    data: object
    params: RangeParams
    fact: object
    sigma2_pred: float  # S2 / (n - q), the Student-t scale estimate
    gamma: float  # scale link to the level below; 0.0 at level one
    inv_scale_link_quad: float  # {W^T Q_H W}^{-1}; 0.0 at level one
    minv_qq: float  # last diagonal entry of (X^T R^-1 X)^-1


class CokrigingModel:
    """Fitted multifidelity emulator ready for prediction and sampling.

    Construction factorizes each level once at its fitted ranges; every
    subsequent query costs two triangular solves per level.
    """

    def __init__(self, data, fit_result):
        if not isinstance(data, CokrigingData):
            raise InvalidArgumentError("data must be CokrigingData")
        if not isinstance(fit_result, FitResult):
            raise InvalidArgumentError("fit_result must be a FitResult")
        if fit_result.s != data.s:
            raise InvalidArgumentError(
                f"fit has {fit_result.s} levels but data has {data.s}"
            )
        self.data = data
        self.fit_result = fit_result
        self.spec = fit_result.spec
        states = []
        for lv, lf in zip(data.levels, fit_result.levels):
            if lv.basis_fn is None:
                raise InvalidArgumentError(
                    f"level {lv.index} has no basis callable; prediction needs "
                    "a basis evaluable at new points"
                )
            params = RangeParams(lf.phi)
            fact = gls_fit(lv, params, self.spec)
            gamma = 0.0
            inv_quad = 0.0
            if lv.index > 1:
                gamma = float(fact.b_hat[-1])
                inv_quad = 1.0 / self._scale_link_quad(lv, fact)
            q = lv.q
            e_last = np.zeros(q)
            e_last[-1] = 1.0
            minv_qq = float(
                cho_solve((fact.chol_M, True), e_last, check_finite=False)[-1]
            )
            states.append(
                _LevelState(
                    data=lv,
                    params=params,
                    fact=fact,
                    sigma2_pred=fact.S2 / (lv.n - lv.q),
                    gamma=gamma,
                    inv_scale_link_quad=inv_quad,
                    minv_qq=minv_qq,
                )
            )
        self._states = states

    @staticmethod
    def _scale_link_quad(lv, fact):
        """``W^T Q_H W`` with ``Q_H`` the GLS projector of the basis alone:
        the squared norm of the scale-link column after whitening and
        projecting out the basis."""
        p = lv.p
        A_H = fact.white_design[:, :p]
        w = fact.white_design[:, p]
        Mh = A_H.T @ A_H
        try:
            Lh = np.linalg.cholesky(Mh)
        except np.linalg.LinAlgError as exc:
            raise DesignRankError(
                f"level {lv.index} basis is collinear after whitening"
            ) from exc
        coef = solve_triangular(
            Lh.T,
            solve_triangular(Lh, A_H.T @ w, lower=True, check_finite=False),
            lower=False,
            check_finite=False,
        )
        quad = float(w @ w - (A_H.T @ w) @ coef)
        if quad <= MIN_SCALE_LINK_NORM:
            raise DesignRankError(
                f"level {lv.index} lower-level outputs are collinear with the "
                "basis; the scale link is unidentifiable"
            )
        return quad

    @property
    def s(self):
        return self.data.s

    @property
    def dfs(self):
        return np.array([lv.n - lv.q for lv in self.data.levels], dtype=np.intp)

    def _check_queries(self, X0):
        X0 = np.ascontiguousarray(X0, dtype=np.float64)
        if X0.ndim == 1:
            X0 = X0[None, :]
        if X0.ndim != 2 or X0.shape[1] != self.data.dims:
            raise InvalidArgumentError(
                f"queries must be (m, {self.data.dims}), got shape {X0.shape}"
            )
        if not np.all(np.isfinite(X0)):
            raise InvalidArgumentError("queries contain non-finite entries")
        return X0

    def predict(self, X0, mean_only=False):
        """Predictive means and variances at every level for each query row.

        Requires ``n - q > 2`` at every level unless ``mean_only``.
        """
        X0 = self._check_queries(X0)
        m = X0.shape[0]
        s = self.s
        means = np.empty((m, s))
        variances = None if mean_only else np.empty((m, s))
        at_design = np.empty((m, s), dtype=bool)
        y_prev = None
        v_prev = np.zeros(m)
        for t, st in enumerate(self._states):
            lv, fact = st.data, st.fact
            df = lv.n - lv.q
            if not mean_only and df <= 2:
                raise VarianceUndefinedError(
                    f"level {lv.index} has n - q = {df} <= 2; variances are "
                    "undefined (request mean_only for means)"
                )
            C = cross_corr(lv.inputs, X0, st.params, self.spec)
            Sw = solve_triangular(fact.chol_R, C, lower=True, check_finite=False)
            H0 = np.asarray(lv.basis_fn(X0), dtype=np.float64)
            resid_part = Sw.T @ fact.white_resid
            if t == 0:
                mu = H0 @ fact.b_hat + resid_part
                F = H0.T
            else:
                mu = H0 @ fact.b_hat[:-1] + st.gamma * y_prev + resid_part
                F = np.vstack([H0.T, y_prev])
            means[:, t] = mu
            hits = np.fromiter(
                (
                    bool(np.any(np.all(np.abs(lv.inputs - x) <= MATCH_TOL, axis=1)))
                    for x in X0
                ),
                dtype=bool,
                count=m,
            )
            at_design[:, t] = hits
            if not mean_only:
                c_base = (1.0 + self.spec.nugget) - np.einsum("ij,ij->j", Sw, Sw)
                U = F - fact.white_design.T @ Sw
                G = cho_solve((fact.chol_M, True), U, check_finite=False)
                quad = np.einsum("ij,ij->j", U, G)
                c_star = c_base + quad + v_prev * st.inv_scale_link_quad
                np.maximum(c_star, 0.0, out=c_star)
                v = st.gamma**2 * v_prev + (df / (df - 2.0)) * st.sigma2_pred * c_star
                variances[:, t] = v
                v_prev = v
            y_prev = mu
        return Prediction(
            means=means, variances=variances, dfs=self.dfs, at_design=at_design
        )

    def _point_pieces(self, st, x0):
        """Per-query scalars at one level: whitened cross-correlation
        pieces shared by sampling and exact intervals."""
        lv, fact = st.data, st.fact
        C = cross_corr(lv.inputs, x0[None, :], st.params, self.spec)
        sw = solve_triangular(fact.chol_R, C[:, 0], lower=True, check_finite=False)
        h0 = np.asarray(lv.basis_fn(x0[None, :]), dtype=np.float64)[0]
        resid_part = float(sw @ fact.white_resid)
        c_base = (1.0 + self.spec.nugget) - float(sw @ sw)
        return sw, h0, resid_part, c_base

    def sample_predictive(self, x0, n_draws, seed=0):
        """Draws from the joint predictive distribution at one point.

        Returns an ``(n_draws, s)`` matrix whose column ``t-1`` holds level
        ``t``.  Level one is sampled from its Student-t; each later level is
        sampled conditionally on the previous level's draw, whose value
        shifts the mean linearly and widens the scale quadratically.
        Deterministic given ``seed``.
        """
        x0 = self._check_queries(x0)
        if x0.shape[0] != 1:
            raise InvalidArgumentError("sampling takes a single query point")
        x0 = x0[0]
        n_draws = int(n_draws)
        if n_draws < 1:
            raise InvalidArgumentError("n_draws must be >= 1")
        rng = np.random.default_rng(seed)
        draws = np.empty((n_draws, self.s))
        y_prev = None
        for t, st in enumerate(self._states):
            lv, fact = st.data, st.fact
            df = lv.n - lv.q
            sw, h0, resid_part, c_base = self._point_pieces(st, x0)
            if t == 0:
                u0 = h0 - fact.white_design.T @ sw
                g0 = cho_solve((fact.chol_M, True), u0, check_finite=False)
                c_star = max(c_base + float(u0 @ g0), 0.0)
                mu = float(h0 @ fact.b_hat) + resid_part
                scale = np.sqrt(st.sigma2_pred * c_star)
                level_draws = mu + scale * rng.standard_t(df, size=n_draws)
            else:
                f0 = np.concatenate([h0, [0.0]])
                u0 = f0 - fact.white_design.T @ sw
                g0 = cho_solve((fact.chol_M, True), u0, check_finite=False)
                # conditional scale is quadratic in the lower-level draw
                c0 = c_base + float(u0 @ g0)
                c1 = 2.0 * float(g0[-1])
                c2 = st.minv_qq
                mu = float(h0 @ fact.b_hat[:-1]) + resid_part + st.gamma * y_prev
                c_star = np.maximum(c0 + c1 * y_prev + c2 * y_prev**2, 0.0)
                scale = np.sqrt(st.sigma2_pred * c_star)
                level_draws = mu + scale * rng.standard_t(df, size=n_draws)
            draws[:, t] = level_draws
            y_prev = level_draws
        return draws

    def credible_interval(self, x0, level, prob=0.95, n_draws=4000, seed=0):
        """Equal-tail predictive interval at one point and level.

        Level one uses exact Student-t quantiles; higher levels use
        empirical quantiles of ``n_draws`` sequential draws.
        """
        if not 0.0 < prob < 1.0:
            raise InvalidArgumentError(f"prob must lie in (0, 1), got {prob}")
        if not 1 <= level <= self.s:
            raise InvalidArgumentError(
                f"level must lie in [1, {self.s}], got {level}"
            )
        lo_q, hi_q = 0.5 * (1.0 - prob), 0.5 * (1.0 + prob)
        if level == 1:
            st = self._states[0]
            lv, fact = st.data, st.fact
            df = lv.n - lv.q
            x0 = self._check_queries(x0)[0]
            sw, h0, resid_part, c_base = self._point_pieces(st, x0)
            u0 = h0 - fact.white_design.T @ sw
            g0 = cho_solve((fact.chol_M, True), u0, check_finite=False)
            c_star = max(c_base + float(u0 @ g0), 0.0)
            mu = float(h0 @ fact.b_hat) + resid_part
            scale = np.sqrt(st.sigma2_pred * c_star)
            return (
                mu + scale * float(student_t.ppf(lo_q, df)),
                mu + scale * float(student_t.ppf(hi_q, df)),
            )
        draws = self.sample_predictive(x0, n_draws, seed=seed)[:, level - 1]
        lo, hi = np.quantile(draws, [lo_q, hi_q])
        return float(lo), float(hi)


def build_model(data, fit_result):
    """Convenience constructor pairing validated data with its fit."""
    return CokrigingModel(data, fit_result)
