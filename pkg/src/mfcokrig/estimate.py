"""Empirical-Bayes range estimation over nested multifidelity data.

``assemble`` validates hierarchical nesting and builds the per-level
regression structures; ``fit`` maximizes, independently per level, either
the integrated posterior of the log-inverse ranges (``method="posterior"``)
or the concentrated restricted likelihood baseline (``method="plugin"``),
via multi-start Nelder-Mead.

The optimizer works in ``xi = log(1/phi)``.  For the posterior method the
maximized objective includes the Jacobian term ``sum(log phi) = -sum(xi)``,
so the maximized object is the posterior density of ``xi`` itself; this
convention is recorded on the FitResult.  The plugin baseline is a
likelihood, not a density, so no Jacobian enters there.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateDataError,
    DesignRankError,
    DuplicateRowError,
    EstimationError,
    InvalidArgumentError,
    NestingError,
    PriorEvaluationError,
    SingularCorrelationError,
)
from .gp import (
    MIN_S2,
    LevelData,
    constant_basis,
    gls_fit,
    integrated_log_likelihood,
    location_scale_estimates,
)
from .kernels import RangeParams
from .priors import log_prior

# objective sentinel marking infeasible range parameters; anything at or
# below the threshold is treated as a failed evaluation
SENTINEL = -1e300
SENTINEL_THRESHOLD = -1e299

# coordinates closer than this are the same design point
MATCH_TOL = 1e-12

POSTERIOR = "posterior"
PLUGIN = "plugin"
_METHODS = (POSTERIOR, PLUGIN)

XI_PARAMETERIZATION = "log_inverse_range_density"


@dataclass(frozen=True)
class OptimOptions:
    """Multi-start Nelder-Mead configuration.

    ``max_evals`` of ``None`` means ``500 * (d + 1)`` per start.  The first
    start is always ``xi = 0``; the remaining ``n_starts - 1`` are drawn
    uniformly from ``[start_low, start_high]^d`` with a stream seeded by
    ``(seed, level, start)`` so runs are reproducible and levels
    independent.
    """

    seed: int = 0
    n_starts: int = 8
    tol: float = 1e-8
    max_evals: int = None
    start_low: float = -3.0
    start_high: float = 3.0
    initial_step: float = 0.5

    def __post_init__(self):
        if self.n_starts < 1:
            raise InvalidArgumentError("n_starts must be >= 1")
        if self.max_evals is not None and self.max_evals < 1:
            raise InvalidArgumentError("max_evals must be >= 1 when given")
        if not self.start_low < self.start_high:
            raise InvalidArgumentError("start_low must be < start_high")

    def to_dict(self):
        return {
            "seed": self.seed,
            "n_starts": self.n_starts,
            "tol": self.tol,
            "max_evals": self.max_evals,
            "start_low": self.start_low,
            "start_high": self.start_high,
            "initial_step": self.initial_step,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


@dataclass(frozen=True, eq=False)
class CokrigingData:
    """Validated multi-level training data, ordered low to high fidelity."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise InvalidArgumentError("need at least one fidelity level")
        d = levels[0].dims
        for lv in levels:
            if lv.dims != d:
                raise InvalidArgumentError(
                    "all levels must share one input dimension; "
                    f"level {lv.index} has d={lv.dims}, expected {d}"
                )
        object.__setattr__(self, "levels", levels)

    @property
    def s(self):
        return len(self.levels)

    @property
    def dims(self):
        return self.levels[0].dims


def match_rows(child, parent, tol=MATCH_TOL):
    """Match each row of ``child`` to a row of ``parent`` within ``tol``
    per coordinate.  Returns the parent indices, or raises with the first
    unmatched row index."""
    child = np.asarray(child, dtype=np.float64)
    parent = np.asarray(parent, dtype=np.float64)
    idx = np.empty(child.shape[0], dtype=np.intp)
    for i in range(child.shape[0]):
        hits = np.nonzero(np.all(np.abs(parent - child[i]) <= tol, axis=1))[0]
        if hits.size == 0:
            raise NestingError(
                f"row {i} of the child design has no match in the parent design"
            )
        idx[i] = hits[0]
    return idx


def _check_no_duplicates(X, level_index):
    n = X.shape[0]
    for i in range(n):
        dup = np.nonzero(np.all(np.abs(X[i + 1 :] - X[i]) <= MATCH_TOL, axis=1))[0]
        if dup.size:
            raise DuplicateRowError(
                f"level {level_index} design rows {i} and {i + 1 + dup[0]} coincide"
            )


def _resolve_basis(basis, s):
    """Normalize the basis argument to one callable per level."""
    if basis == "constant" or basis is None:
        return [constant_basis] * s
    if callable(basis):
        return [basis] * s
    fns = list(basis)
    if len(fns) != s:
        raise InvalidArgumentError(
            f"got {len(fns)} basis callables for {s} levels"
        )
    for fn in fns:
        if not callable(fn):
            raise InvalidArgumentError("basis entries must be callables")
    return fns


def assemble(raw_levels, basis="constant"):
    """Build CokrigingData from per-level ``(inputs, outputs)`` pairs.

    Levels are ordered lowest to highest fidelity.  Designs must be
    hierarchically nested: every input of level ``t`` must appear in level
    ``t-1`` (within 1e-12 per coordinate).  The matched lower-level outputs
    become the scale-link regression column of level ``t``.

    Parameters
    ----------
    raw_levels : sequence of (inputs, outputs)
        One pair per level.
    basis : "constant", callable, or sequence of callables
        Regression basis; the default is a single intercept column.
    """
    raw = list(raw_levels)
    if not raw:
        raise InvalidArgumentError("need at least one fidelity level")
    fns = _resolve_basis(basis, len(raw))
    levels = []
    prev_inputs = None
    prev_outputs = None
    for t, (inputs, outputs) in enumerate(raw, start=1):
        inputs = np.ascontiguousarray(inputs, dtype=np.float64)
        outputs = np.asarray(outputs, dtype=np.float64).ravel()
        if inputs.ndim != 2:
            raise InvalidArgumentError(f"level {t} inputs must be a 2-d matrix")
        _check_no_duplicates(inputs, t)
        lower = None
        if t > 1:
            try:
                idx = match_rows(inputs, prev_inputs)
            except NestingError as exc:
                raise NestingError(
                    f"designs are not nested: level {t} is not a subset of "
                    f"level {t - 1} ({exc})"
                ) from exc
            lower = prev_outputs[idx]
        H = np.asarray(fns[t - 1](inputs), dtype=np.float64)
        levels.append(
            LevelData(
                index=t,
                inputs=inputs,
                outputs=outputs,
                basis=H,
                lower_output=lower,
                basis_fn=fns[t - 1],
            )
        )
        prev_inputs = inputs
        prev_outputs = outputs
    return CokrigingData(levels=tuple(levels))


def objective(data_t, xi, spec, prior):
    """Posterior log density of the log-inverse ranges at one level.

    Integrated log-likelihood plus log prior plus the reparameterization
    Jacobian ``sum(log phi) = -sum(xi)``.  Returns a large negative
    sentinel instead of raising when the correlation matrix is singular,
    the data degenerate, or the prior unevaluable, so the optimizer
    retreats rather than crashing.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if not np.all(np.isfinite(xi)):
        raise InvalidArgumentError("xi must be finite")
    # overflow to inf marks an infeasible point, handled by the sentinel
    with np.errstate(over="ignore"):
        phi = np.exp(-xi)
    if not np.all(np.isfinite(phi)) or np.any(phi <= 0.0):
        return SENTINEL
    params = RangeParams(phi)
    try:
        fact = gls_fit(data_t, params, spec)
        value = integrated_log_likelihood(
            data_t, params, spec, prior.a_t(data_t.q), fact=fact
        )
        value += log_prior(data_t, params, spec, prior)
    except (
        SingularCorrelationError,
        DegenerateDataError,
        PriorEvaluationError,
        DesignRankError,
    ):
        return SENTINEL
    value -= float(np.sum(xi))
    if not math.isfinite(value):
        return SENTINEL
    return value


def concentrated_restricted_likelihood(data_t, params, spec):
    """Plug-in baseline criterion: ``-1/2 log|R| - ((n-q)/2) log S2``.

    Unlike the integrated likelihood, this omits the whitened-design
    determinant; it is the classical profile criterion whose maximizer is
    plugged in without a prior.
    """
    fact = gls_fit(data_t, params, spec)
    if fact.S2 < MIN_S2:
        raise DegenerateDataError(
            f"level {data_t.index} outputs are interpolated exactly; the "
            "restricted likelihood is undefined"
        )
    return -0.5 * fact.logdet_R - 0.5 * (data_t.n - data_t.q) * math.log(fact.S2)


def _plugin_objective(data_t, xi, spec):
    """xi-space wrapper of the plug-in criterion with sentinel retreat.

    No Jacobian term: the maximized object is a likelihood, not a density.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if not np.all(np.isfinite(xi)):
        raise InvalidArgumentError("xi must be finite")
    with np.errstate(over="ignore"):
        phi = np.exp(-xi)
    if not np.all(np.isfinite(phi)) or np.any(phi <= 0.0):
        return SENTINEL
    try:
        value = concentrated_restricted_likelihood(data_t, RangeParams(phi), spec)
    except (SingularCorrelationError, DegenerateDataError, DesignRankError):
        return SENTINEL
    if not math.isfinite(value):
        return SENTINEL
    return value


@dataclass(frozen=True, eq=False)
class LevelFit:
    """Estimation outcome at one level."""

    level: int
    phi: np.ndarray
    xi: np.ndarray
    objective_value: float
    b_hat: np.ndarray
    sigma2_hat: float
    S2: float
    converged: bool
    n_evals: int
    best_start: int
    n_failed_starts: int
    start_values: tuple

    @property
    def gamma(self):
        """Scale-link coefficient to the lower level; None at level one."""
        if self.level == 1:
            return None
        return float(self.b_hat[-1])

    def to_dict(self):
        return {
            "level": self.level,
            "phi": [float(v) for v in self.phi],
            "xi": [float(v) for v in self.xi],
            "objective_value": self.objective_value,
            "b_hat": [float(v) for v in self.b_hat],
            "sigma2_hat": self.sigma2_hat,
            "S2": self.S2,
            "converged": self.converged,
            "n_evals": self.n_evals,
            "best_start": self.best_start,
            "n_failed_starts": self.n_failed_starts,
            "start_values": [float(v) for v in self.start_values],
        }


@dataclass(frozen=True, eq=False)
class FitResult:
    """Per-level estimates plus the configuration that produced them."""

    levels: tuple
    method: str
    prior: object
    spec: object
    opts: OptimOptions
    parameterization: str = XI_PARAMETERIZATION

    @property
    def s(self):
        return len(self.levels)

    def level(self, t):
        """LevelFit for one-based level ``t``."""
        return self.levels[t - 1]


def fit_level(data_t, spec, prior, opts=None, method=POSTERIOR):
    """Estimate the range parameters of one level by multi-start simplex
    maximization in xi-space.  Deterministic given ``opts.seed``."""
    from .optim import nelder_mead_max

    if method not in _METHODS:
        raise InvalidArgumentError(f"method must be one of {_METHODS}, got {method!r}")
    if opts is None:
        opts = OptimOptions()
    if data_t.n - data_t.q < 2:
        raise InvalidArgumentError(
            f"level {data_t.index} needs n - q >= 2 to estimate ranges, "
            f"got n={data_t.n}, q={data_t.q}"
        )
    d = data_t.dims
    max_evals = opts.max_evals if opts.max_evals is not None else 500 * (d + 1)

    if method == POSTERIOR:
        def func(xi):
            return objective(data_t, xi, spec, prior)
    else:
        def func(xi):
            return _plugin_objective(data_t, xi, spec)

    best = None
    best_start = -1
    total_evals = 0
    n_failed = 0
    start_values = []
    for j in range(opts.n_starts):
        if j == 0:
            x0 = np.zeros(d)
        else:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=opts.seed, spawn_key=(data_t.index, j))
            )
            x0 = rng.uniform(opts.start_low, opts.start_high, size=d)
        res = nelder_mead_max(
            func,
            x0,
            initial_step=opts.initial_step,
            tol=opts.tol,
            max_evals=max_evals,
        )
        total_evals += res.n_evals
        start_values.append(res.fun)
        if res.fun <= SENTINEL_THRESHOLD:
            n_failed += 1
            continue
        if best is None or res.fun > best.fun:
            best = res
            best_start = j
    if best is None:
        raise EstimationError(
            f"all {opts.n_starts} optimizer starts failed at level "
            f"{data_t.index} (singular correlation or degenerate data throughout)"
        )
    xi_hat = best.x
    params = RangeParams.from_xi(xi_hat)
    fact = gls_fit(data_t, params, spec)
    b_hat, sigma2_hat = location_scale_estimates(fact, data_t)
    return LevelFit(
        level=data_t.index,
        phi=params.phi,
        xi=xi_hat.copy(),
        objective_value=best.fun,
        b_hat=b_hat,
        sigma2_hat=sigma2_hat,
        S2=fact.S2,
        converged=best.converged,
        n_evals=total_evals,
        best_start=best_start,
        n_failed_starts=n_failed,
        start_values=tuple(start_values),
    )


def fit(data, spec, prior, opts=None, method=POSTERIOR):
    """Estimate range parameters independently at every level.

    Levels never see data from above; level ``t`` reads level ``t-1`` only
    through the matched lower-output column fixed at assembly.
    """
    if opts is None:
        opts = OptimOptions()
    fits = []
    failures = []
    for lv in data.levels:
        try:
            fits.append(fit_level(lv, spec, prior, opts, method=method))
        except EstimationError as exc:
            failures.append((lv.index, str(exc)))
    if failures:
        detail = "; ".join(f"level {ix}: {msg}" for ix, msg in failures)
        raise EstimationError(f"estimation failed at {len(failures)} level(s): {detail}")
    return FitResult(
        levels=tuple(fits), method=method, prior=prior, spec=spec, opts=opts
    )
