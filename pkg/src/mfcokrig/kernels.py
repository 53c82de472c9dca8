"""Product-form correlation functions and their range-parameter derivatives.

Two families are supported:

* power-exponential, ``r(h) = exp(-(h/phi)^alpha)`` with ``0 < alpha < 2``;
* Matern with half-integer smoothness ``nu in {1/2, 3/2, 5/2}``, evaluated
  through the closed forms in ``u = sqrt(2 nu) h / phi``.

Correlation over d-dimensional inputs is the product of the per-dimension
functions, each with its own range parameter ``phi_k``.  Derivative matrices
with respect to ``phi_k`` are computed analytically via the ratio
``(dr/dphi) / r``, which stays finite wherever ``r > 0``.

Matrix assembly has two interchangeable implementations: a numba-compiled
path and a vectorized numpy path.  The active one is chosen at import time
by the ``MFCOKRIG_NUMBA`` environment variable (see ``_backend``); both are
importable for testing and benchmarking.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import USE_NUMBA, njit
from .exceptions import InvalidArgumentError

POWER_EXPONENTIAL = "power_exponential"
MATERN = "matern"
_FAMILIES = (POWER_EXPONENTIAL, MATERN)
_MATERN_SHAPES = (0.5, 1.5, 2.5)
MAX_NUGGET = 1e-4
DEFAULT_NUGGET = 1e-10

# integer family codes for the compiled kernels
_CODE_POWEXP = 0
_CODE_MATERN = 1


@dataclass(frozen=True)
class KernelSpec:
    """Configuration of a product-form correlation family.

    Parameters
    ----------
    family : str
        ``"power_exponential"`` or ``"matern"``.
    shape : float, optional
        Roughness ``alpha`` in ``(0, 2)`` for power-exponential (default
        1.9), or smoothness ``nu`` in ``{0.5, 1.5, 2.5}`` for Matern
        (default 2.5).  Fixed by configuration, never estimated.
    dims : int
        Input dimension ``d``.
    nugget : float
        Diagonal jitter added to correlation matrices, in ``[0, 1e-4]``.
    """

    family: str
    shape: float = None
    dims: int = 1
    nugget: float = DEFAULT_NUGGET

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidArgumentError(
                f"unknown kernel family {self.family!r}; expected one of {_FAMILIES}"
            )
        if self.shape is None:
            object.__setattr__(
                self, "shape", 1.9 if self.family == POWER_EXPONENTIAL else 2.5
            )
        shape = float(self.shape)
        object.__setattr__(self, "shape", shape)
        if not math.isfinite(shape):
            raise InvalidArgumentError("kernel shape must be finite")
        if self.family == POWER_EXPONENTIAL:
            if not 0.0 < shape < 2.0:
                raise InvalidArgumentError(
                    f"power-exponential roughness must lie in (0, 2), got {shape}"
                )
        else:
            if shape not in _MATERN_SHAPES:
                raise InvalidArgumentError(
                    f"Matern smoothness must be one of {_MATERN_SHAPES}, got {shape}"
                )
        if not isinstance(self.dims, (int, np.integer)) or self.dims < 1:
            raise InvalidArgumentError(f"dims must be a positive integer, got {self.dims}")
        object.__setattr__(self, "dims", int(self.dims))
        nugget = float(self.nugget)
        object.__setattr__(self, "nugget", nugget)
        if not (0.0 <= nugget <= MAX_NUGGET):
            raise InvalidArgumentError(
                f"nugget must lie in [0, {MAX_NUGGET}], got {nugget}"
            )

    @property
    def family_code(self):
        """Integer family tag consumed by the compiled kernels."""
        return _CODE_POWEXP if self.family == POWER_EXPONENTIAL else _CODE_MATERN

    def to_dict(self):
        return {
            "family": self.family,
            "shape": self.shape,
            "dims": self.dims,
            "nugget": self.nugget,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            family=payload["family"],
            shape=payload["shape"],
            dims=payload["dims"],
            nugget=payload["nugget"],
        )


@dataclass(frozen=True, eq=False)
class RangeParams:
    """Per-dimension range parameters ``phi`` with the log-inverse view.

    ``xi_k = log(1 / phi_k)`` is the parameterization the optimizer works
    in; ``phi`` and ``xi`` are exact bijections of one another.
    """

    phi: np.ndarray = field()

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=np.float64)).copy()
        if phi.ndim != 1:
            raise InvalidArgumentError("phi must be a 1-d vector")
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0.0):
            raise InvalidArgumentError(f"all range parameters must be finite and > 0, got {phi}")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def xi(self):
        """Log inverse ranges, ``-log(phi)``."""
        return -np.log(self.phi)

    @classmethod
    def from_xi(cls, xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        if not np.all(np.isfinite(xi)):
            raise InvalidArgumentError("xi must be finite")
        return cls(np.exp(-xi))

    @property
    def dims(self):
        return self.phi.shape[0]


def _check_design(X, dims):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError(f"design must be 2-d, got shape {X.shape}")
    if X.shape[1] != dims:
        raise InvalidArgumentError(
            f"design has {X.shape[1]} columns but the kernel expects {dims}"
        )
    if X.shape[0] < 1:
        raise InvalidArgumentError("design must contain at least one row")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("design contains non-finite entries")
    return X


def _check_params(params, spec):
    if params.dims != spec.dims:
        raise InvalidArgumentError(
            f"params have {params.dims} ranges but the kernel expects {spec.dims}"
        )
    return params.phi


# ---------------------------------------------------------------------------
# scalar building blocks (shared by the compiled path)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _corr1d_scalar(h, phi, family, shape):
    if h == 0.0:
        return 1.0
    if family == 0:
        return math.exp(-((h / phi) ** shape))
    u = math.sqrt(2.0 * shape) * h / phi
    if shape == 0.5:
        return math.exp(-u)
    if shape == 1.5:
        return (1.0 + u) * math.exp(-u)
    return (1.0 + u + u * u / 3.0) * math.exp(-u)


@njit(cache=True)
def _dcorr_ratio_scalar(h, phi, family, shape):
    # (dr/dphi) / r; evaluated only where r > 0, hence never overflows
    if h == 0.0:
        return 0.0
    if family == 0:
        return shape * h ** shape / phi ** (shape + 1.0)
    u = math.sqrt(2.0 * shape) * h / phi
    if shape == 0.5:
        return h / (phi * phi)
    if shape == 1.5:
        return u * u / (phi * (1.0 + u))
    return u * u * (1.0 + u) / (3.0 * phi * (1.0 + u + u * u / 3.0))


# ---------------------------------------------------------------------------
# compiled matrix kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _corr_matrix_nb(X, phi, family, shape, nugget):
    n, d = X.shape
    R = np.empty((n, n))
    for i in range(n):
        R[i, i] = 1.0 + nugget
        for j in range(i + 1, n):
            rho = 1.0
            for k in range(d):
                h = abs(X[i, k] - X[j, k])
                rho *= _corr1d_scalar(h, phi[k], family, shape)
            R[i, j] = rho
            R[j, i] = rho
    return R


@njit(cache=True)
def _cross_corr_nb(X1, X2, phi, family, shape):
    n1, d = X1.shape
    n2 = X2.shape[0]
    C = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            rho = 1.0
            for k in range(d):
                h = abs(X1[i, k] - X2[j, k])
                rho *= _corr1d_scalar(h, phi[k], family, shape)
            C[i, j] = rho
    return C


@njit(cache=True)
def _corr_matrix_with_derivs_nb(X, phi, family, shape, nugget):
    n, d = X.shape
    R = np.empty((n, n))
    dR = np.zeros((d, n, n))
    for i in range(n):
        R[i, i] = 1.0 + nugget
        for j in range(i + 1, n):
            rho = 1.0
            for k in range(d):
                h = abs(X[i, k] - X[j, k])
                rho *= _corr1d_scalar(h, phi[k], family, shape)
            R[i, j] = rho
            R[j, i] = rho
            # underflowed correlations contribute exactly zero derivative
            if rho != 0.0:
                for k in range(d):
                    h = abs(X[i, k] - X[j, k])
                    g = rho * _dcorr_ratio_scalar(h, phi[k], family, shape)
                    dR[k, i, j] = g
                    dR[k, j, i] = g
    return R, dR


# ---------------------------------------------------------------------------
# vectorized numpy kernels
# ---------------------------------------------------------------------------


def _corr1d_np(h, phi, family, shape):
    h = np.asarray(h, dtype=np.float64)
    if family == _CODE_POWEXP:
        return np.exp(-((h / phi) ** shape))
    u = math.sqrt(2.0 * shape) * (h / phi)
    if shape == 0.5:
        return np.exp(-u)
    if shape == 1.5:
        return (1.0 + u) * np.exp(-u)
    return (1.0 + u + u * u / 3.0) * np.exp(-u)


def _dcorr_ratio_np(h, phi, family, shape):
    h = np.asarray(h, dtype=np.float64)
    if family == _CODE_POWEXP:
        return shape * h ** shape / phi ** (shape + 1.0)
    u = math.sqrt(2.0 * shape) * (h / phi)
    if shape == 0.5:
        return h / (phi * phi)
    if shape == 1.5:
        return u * u / (phi * (1.0 + u))
    return u * u * (1.0 + u) / (3.0 * phi * (1.0 + u + u * u / 3.0))


def _corr_matrix_np(X, phi, family, shape, nugget):
    n, d = X.shape
    R = np.ones((n, n))
    for k in range(d):
        H = np.abs(X[:, None, k] - X[None, :, k])
        R *= _corr1d_np(H, phi[k], family, shape)
    R[np.diag_indices(n)] = 1.0 + nugget
    return R


def _cross_corr_np(X1, X2, phi, family, shape):
    C = np.ones((X1.shape[0], X2.shape[0]))
    for k in range(X1.shape[1]):
        H = np.abs(X1[:, None, k] - X2[None, :, k])
        C *= _corr1d_np(H, phi[k], family, shape)
    return C


def _corr_matrix_with_derivs_np(X, phi, family, shape, nugget):
    n, d = X.shape
    R0 = np.ones((n, n))
    H = np.abs(X[:, None, :] - X[None, :, :])
    for k in range(d):
        R0 *= _corr1d_np(H[:, :, k], phi[k], family, shape)
    dR = np.empty((d, n, n))
    # the ratio can overflow where the correlation underflowed to zero;
    # those entries have exactly zero derivative
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(d):
            g = R0 * _dcorr_ratio_np(H[:, :, k], phi[k], family, shape)
            dR[k] = np.where(R0 == 0.0, 0.0, g)
    R = R0.copy()
    R[np.diag_indices(n)] = 1.0 + nugget
    return R, dR


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def corr1d(h, phi, spec):
    """One-dimensional correlation ``r(h)`` for distance ``h`` and range ``phi``.

    Parameters
    ----------
    h : float or array_like
        Nonnegative distances.
    phi : float
        Positive range parameter.
    spec : KernelSpec
        Family and shape; ``dims`` and ``nugget`` are ignored here.

    Returns
    -------
    float or ndarray
        Correlation values in ``(0, 1]``, with ``r(0) = 1``.
    """
    h_arr = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h_arr)) or np.any(h_arr < 0.0):
        raise InvalidArgumentError("distances must be finite and >= 0")
    if not math.isfinite(phi) or phi <= 0.0:
        raise InvalidArgumentError(f"range parameter must be finite and > 0, got {phi}")
    out = _corr1d_np(h_arr, float(phi), spec.family_code, spec.shape)
    if np.isscalar(h) or h_arr.ndim == 0:
        return float(out)
    return out


def corr_matrix(X, params, spec):
    """Correlation matrix of a design, with the spec's nugget on the diagonal.

    ``R[i, j]`` is the product over dimensions of the 1-d correlations of
    coordinate distances; the diagonal is ``1 + nugget``.
    """
    X = _check_design(X, spec.dims)
    phi = _check_params(params, spec)
    fn = _corr_matrix_nb if USE_NUMBA else _corr_matrix_np
    return fn(X, phi, spec.family_code, spec.shape, spec.nugget)


def cross_corr(X1, X2, params, spec):
    """Cross-correlation matrix between two designs (no nugget)."""
    X1 = _check_design(X1, spec.dims)
    X2 = _check_design(X2, spec.dims)
    phi = _check_params(params, spec)
    fn = _cross_corr_nb if USE_NUMBA else _cross_corr_np
    return fn(X1, X2, phi, spec.family_code, spec.shape)


def corr_matrix_with_derivs(X, params, spec):
    """Correlation matrix together with all range-parameter derivatives.

    Returns
    -------
    R : ndarray, shape (n, n)
        Correlation matrix including the nugget.
    dR : ndarray, shape (d, n, n)
        ``dR[k] = dR/dphi_k``; symmetric with zero diagonal (the nugget is
        constant in ``phi``).
    """
    X = _check_design(X, spec.dims)
    phi = _check_params(params, spec)
    fn = _corr_matrix_with_derivs_nb if USE_NUMBA else _corr_matrix_with_derivs_np
    return fn(X, phi, spec.family_code, spec.shape, spec.nugget)


def corr_matrix_deriv(X, params, spec, k):
    """Derivative of the correlation matrix with respect to ``phi_k``.

    ``k`` is a zero-based dimension index.
    """
    if not isinstance(k, (int, np.integer)) or not 0 <= k < spec.dims:
        raise InvalidArgumentError(
            f"dimension index must satisfy 0 <= k < {spec.dims}, got {k}"
        )
    return corr_matrix_with_derivs(X, params, spec)[1][int(k)]
