"""Objective and robust prior densities for the range parameters.

All evaluators return log densities up to additive constants, per fidelity
level, in phi-space.  The reparameterization Jacobian used by the optimizer
lives in the estimation module, not here.

Supported kinds:

* ``reference``: independent reference prior, ``|I_R(phi)|^{1/2}`` built
  from the profile Fisher information with the trend projected out;
* ``jeffreys1`` / ``jeffreys2``: independent Jeffreys priors; the second
  multiplies in ``|X^T R^{-1} X|^{1/2}`` and pairs with a variance-prior
  exponent of ``1 + q/2``;
* ``jointly_robust``: proper prior on inverse ranges with polynomial and
  exponential penalties;
* ``flat`` and ``inverse_range``: improper diagnostics.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky as _cholesky

from .exceptions import (
    DesignRankError,
    InvalidArgumentError,
    PriorEvaluationError,
    SingularCorrelationError,
)
from .kernels import corr_matrix_with_derivs

REFERENCE = "reference"
JEFFREYS1 = "jeffreys1"
JEFFREYS2 = "jeffreys2"
JOINTLY_ROBUST = "jointly_robust"
FLAT = "flat"
INVERSE_RANGE = "inverse_range"
PRIOR_KINDS = (REFERENCE, JEFFREYS1, JEFFREYS2, JOINTLY_ROBUST, FLAT, INVERSE_RANGE)


@dataclass(frozen=True)
class PriorSpec:
    """Prior selection plus the hyperparameters of the jointly robust kind.

    Parameters
    ----------
    kind : str
        One of ``PRIOR_KINDS``.
    jr_a0 : float, optional
        Polynomial-penalty exponent; must exceed ``-(d+1)``.  Defaults to
        ``0.5 - d`` at evaluation time when left unset.
    jr_b0 : float
        Exponential-penalty rate, ``> 0``.
    jr_C : array_like, optional
        Per-dimension scale constants.  Defaults to
        ``n^{-1/d} |max(x_k) - min(x_k)|`` of the level being evaluated.
    """

    kind: str
    jr_a0: float = None
    jr_b0: float = 1.0
    jr_C: object = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise InvalidArgumentError(
                f"unknown prior kind {self.kind!r}; expected one of {PRIOR_KINDS}"
            )
        if self.jr_b0 is not None and not self.jr_b0 > 0.0:
            raise InvalidArgumentError(f"jr_b0 must be > 0, got {self.jr_b0}")
        if self.jr_C is not None:
            C = np.asarray(self.jr_C, dtype=np.float64).ravel()
            if not np.all(np.isfinite(C)) or np.any(C <= 0.0):
                raise InvalidArgumentError("jr_C entries must be finite and > 0")
            object.__setattr__(self, "jr_C", C)

    def a_t(self, q_t):
        """Variance-prior exponent paired with this kind."""
        if self.kind == JEFFREYS2:
            return 1.0 + 0.5 * q_t
        return 1.0

    def to_dict(self):
        return {
            "kind": self.kind,
            "jr_a0": self.jr_a0,
            "jr_b0": self.jr_b0,
            "jr_C": None if self.jr_C is None else list(map(float, self.jr_C)),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            kind=payload["kind"],
            jr_a0=payload.get("jr_a0"),
            jr_b0=payload.get("jr_b0", 1.0),
            jr_C=payload.get("jr_C"),
        )


def _whitened_pieces(data, params, spec):
    """Correlation inverse, derivative stack, and trend projector."""
    R, dR = corr_matrix_with_derivs(data.inputs, params, spec)
    try:
        L = _cholesky(R, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularCorrelationError(params.phi, level=data.index) from exc
    n = data.n
    Rinv = cho_solve((L, True), np.eye(n), check_finite=False)
    X = data.design
    B = Rinv @ X
    M = X.T @ B
    try:
        Lm = _cholesky(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DesignRankError(
            f"level {data.index} design is numerically collinear after whitening"
        ) from exc
    logdet_M = 2.0 * float(np.sum(np.log(np.diag(Lm))))
    # Q = R^{-1} - R^{-1} X M^{-1} X^T R^{-1}
    Q = Rinv - B @ cho_solve((Lm, True), B.T, check_finite=False)
    Q = 0.5 * (Q + Q.T)
    return Rinv, dR, Q, logdet_M


def _trace_form_matrix(corner, W):
    """Fisher-style matrix: given the (1,1) entry and the stack of trace
    operands, fill [corner, tr(W_k); tr(W_k), tr(W_k W_j)] and symmetrize."""
    d = W.shape[0]
    info = np.empty((d + 1, d + 1))
    info[0, 0] = corner
    info[0, 1:] = np.einsum("kii->k", W)
    info[1:, 0] = info[0, 1:]
    info[1:, 1:] = np.einsum("kab,jba->kj", W, W)
    return 0.5 * (info + info.T)


def fisher_info_reference(data, params, spec):
    """Profile Fisher information of (variance, ranges) at one level.

    The trend is projected out: with ``Q`` the GLS projector and
    ``W_k = dR_k Q``, the matrix has corner ``n - q``, first row/column
    ``tr(W_k)``, and body ``tr(W_k W_j)``.
    """
    _, dR, Q, _ = _whitened_pieces(data, params, spec)
    W = dR @ Q
    return _trace_form_matrix(data.n - data.q, W)


def fisher_info_jeffreys(data, params, spec):
    """Fisher information of (variance, ranges) with the trend held fixed:
    corner ``n``, operands ``U_k = dR_k R^{-1}``."""
    Rinv, dR, _, _ = _whitened_pieces(data, params, spec)
    U = dR @ Rinv
    return _trace_form_matrix(data.n, U)


def _half_logdet_psd(info, params, what):
    sym = 0.5 * (info + info.T)
    try:
        L = _cholesky(sym, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise PriorEvaluationError(
            f"{what} information matrix is not positive definite", phi=params.phi
        ) from exc
    return float(np.sum(np.log(np.diag(L))))


def log_reference_prior(data, params, spec):
    """Log reference prior at one level: ``1/2 log det I_R``."""
    info = fisher_info_reference(data, params, spec)
    return _half_logdet_psd(info, params, "reference-prior")


def log_jeffreys_prior(data, params, spec, variant="j1"):
    """Log Jeffreys prior at one level.

    ``variant="j1"`` gives ``1/2 log det I_J``; ``variant="j2"`` adds
    ``1/2 log|X^T R^{-1} X|`` and must be paired with the matching
    variance-prior exponent ``1 + q/2``.
    """
    if variant not in ("j1", "j2"):
        raise InvalidArgumentError(f"variant must be 'j1' or 'j2', got {variant!r}")
    Rinv, dR, _, logdet_M = _whitened_pieces(data, params, spec)
    U = dR @ Rinv
    info = _trace_form_matrix(data.n, U)
    value = _half_logdet_psd(info, params, "Jeffreys-prior")
    if variant == "j2":
        value += 0.5 * logdet_M
    return value


def jr_defaults(n_obs, input_ranges):
    """Default jointly robust hyperparameters for a level with ``n_obs``
    runs and per-dimension input ranges: ``a0 = 0.5 - d``, ``b0 = 1``,
    ``C_k = n^{-1/d} |range_k|``."""
    ranges = np.asarray(input_ranges, dtype=np.float64).ravel()
    d = ranges.size
    if np.any(ranges <= 0.0):
        raise InvalidArgumentError(
            "jointly robust defaults need strictly positive input ranges; "
            "a dimension of the design is constant"
        )
    C = float(n_obs) ** (-1.0 / d) * ranges
    return 0.5 - d, 1.0, C


def log_jr_prior(params, prior, n_obs=None, input_ranges=None):
    """Log jointly robust prior on the inverse ranges ``B_k = 1/phi_k``:

        a0 * log(sum C_k B_k) - b0 * sum(C_k B_k),

    up to the normalizing constant.  Hyperparameters left unset on the
    PriorSpec are filled from ``n_obs`` and ``input_ranges``.
    """
    d = params.dims
    if prior.jr_C is not None:
        C = prior.jr_C
        a0_default = 0.5 - d
    else:
        if n_obs is None or input_ranges is None:
            raise InvalidArgumentError(
                "jr_C is unset; provide n_obs and input_ranges for the defaults"
            )
        a0_default, _, C = jr_defaults(n_obs, input_ranges)
    if C.size != d:
        raise InvalidArgumentError(
            f"jr_C has {C.size} entries but there are {d} range parameters"
        )
    a0 = prior.jr_a0 if prior.jr_a0 is not None else a0_default
    if not a0 > -(d + 1):
        raise InvalidArgumentError(f"jr_a0 must exceed -(d+1) = {-(d + 1)}, got {a0}")
    b0 = prior.jr_b0
    total = float(C @ (1.0 / params.phi))
    if not math.isfinite(total) or total <= 0.0:
        raise PriorEvaluationError(
            "jointly robust penalty sum is not finite and positive", phi=params.phi
        )
    return a0 * math.log(total) - b0 * total


def log_prior(data, params, spec, prior):
    """Dispatch the per-level log prior density for the configured kind."""
    if prior.kind == FLAT:
        return 0.0
    if prior.kind == INVERSE_RANGE:
        return -float(np.sum(np.log(params.phi)))
    if prior.kind == REFERENCE:
        return log_reference_prior(data, params, spec)
    if prior.kind == JEFFREYS1:
        return log_jeffreys_prior(data, params, spec, variant="j1")
    if prior.kind == JEFFREYS2:
        return log_jeffreys_prior(data, params, spec, variant="j2")
    inputs = data.inputs
    ranges = inputs.max(axis=0) - inputs.min(axis=0)
    return log_jr_prior(params, prior, n_obs=data.n, input_ranges=ranges)
