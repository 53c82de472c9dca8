"""Model persistence and CSV interchange.

Models are stored as versioned JSON documents that embed the training data
(inputs, outputs per level), the kernel and prior configuration, and the
per-level estimates, so a loaded file is sufficient to rebuild the
predictor exactly.  Floats are written with shortest round-trip formatting;
documents are key-sorted with no timestamps, so identical runs produce
byte-identical files.

CSV conventions: one file per level with header ``x1,...,xd,y``; values
round-trip at full double precision.
"""

import csv
import hashlib
import json

import numpy as np

from .estimate import (
    CokrigingData,
    FitResult,
    LevelFit,
    OptimOptions,
    assemble,
)
from .exceptions import ConfigError, InvalidArgumentError
from .kernels import KernelSpec
from .priors import PriorSpec

MODEL_SCHEMA_VERSION = 1


def _fingerprint(inputs, outputs):
    """Stable digest of one level's training arrays."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(inputs, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(outputs, dtype="<f8").tobytes())
    return h.hexdigest()


def model_document(data, fit_result):
    """Serializable dictionary capturing data, configuration, and fit."""
    levels = []
    for lv, lf in zip(data.levels, fit_result.levels):
        levels.append(
            {
                "inputs": [[float(v) for v in row] for row in lv.inputs],
                "outputs": [float(v) for v in lv.outputs],
                "fingerprint": _fingerprint(lv.inputs, lv.outputs),
                "fit": lf.to_dict(),
            }
        )
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kernel": fit_result.spec.to_dict(),
        "prior": fit_result.prior.to_dict(),
        "method": fit_result.method,
        "parameterization": fit_result.parameterization,
        "optimizer": fit_result.opts.to_dict(),
        "basis": "constant",
        "levels": levels,
    }


def dump_json(payload, path):
    """Write a canonical JSON document: sorted keys, two-space indent,
    trailing newline, shortest round-trip floats."""
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")


def save_model(path, data, fit_result):
    """Persist a fitted model; only the constant basis is serializable."""
    for lv in data.levels:
        if lv.basis.shape[1] != 1 or not np.all(lv.basis == 1.0):
            raise InvalidArgumentError(
                "only constant-basis models can be persisted to JSON"
            )
    dump_json(model_document(data, fit_result), path)


def load_model(path):
    """Rebuild ``(CokrigingData, FitResult)`` from a model document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model file is not valid JSON: {path} ({exc})") from exc
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported model schema version {version!r}; "
            f"this build reads version {MODEL_SCHEMA_VERSION}"
        )
    spec = KernelSpec.from_dict(doc["kernel"])
    prior = PriorSpec.from_dict(doc["prior"])
    opts = OptimOptions.from_dict(doc["optimizer"])
    raw_levels = []
    for entry in doc["levels"]:
        inputs = np.asarray(entry["inputs"], dtype=np.float64)
        outputs = np.asarray(entry["outputs"], dtype=np.float64)
        if entry.get("fingerprint") != _fingerprint(inputs, outputs):
            raise ConfigError(f"model file {path} fails its data fingerprint check")
        raw_levels.append((inputs, outputs))
    data = assemble(raw_levels, basis=doc.get("basis", "constant"))
    fits = []
    for entry in doc["levels"]:
        f = entry["fit"]
        fits.append(
            LevelFit(
                level=f["level"],
                phi=np.asarray(f["phi"], dtype=np.float64),
                xi=np.asarray(f["xi"], dtype=np.float64),
                objective_value=f["objective_value"],
                b_hat=np.asarray(f["b_hat"], dtype=np.float64),
                sigma2_hat=f["sigma2_hat"],
                S2=f["S2"],
                converged=f["converged"],
                n_evals=f["n_evals"],
                best_start=f["best_start"],
                n_failed_starts=f["n_failed_starts"],
                start_values=tuple(f["start_values"]),
            )
        )
    fit_result = FitResult(
        levels=tuple(fits),
        method=doc["method"],
        prior=prior,
        spec=spec,
        opts=opts,
        parameterization=doc["parameterization"],
    )
    return data, fit_result


def _format(value):
    return repr(float(value))


def load_level_csv(path):
    """Read one level's ``x1..xd,y`` file into (inputs, outputs)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ConfigError(f"{path} is empty; expected a header row")
            rows = [row for row in reader if row]
    except FileNotFoundError as exc:
        raise ConfigError(f"data file not found: {path}") from exc
    header = [h.strip() for h in header]
    if len(header) < 2 or header[-1] != "y":
        raise ConfigError(
            f"{path}: header must be x1,...,xd,y, got {','.join(header)}"
        )
    d = len(header) - 1
    expected = [f"x{k + 1}" for k in range(d)]
    if header[:-1] != expected:
        raise ConfigError(
            f"{path}: header must be {','.join(expected + ['y'])}, "
            f"got {','.join(header)}"
        )
    if not rows:
        raise ConfigError(f"{path} contains a header but no data rows")
    try:
        values = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric cell ({exc})") from exc
    if values.shape[1] != d + 1:
        raise ConfigError(f"{path}: rows must have {d + 1} columns")
    return values[:, :d], values[:, d]


def write_level_csv(path, inputs, outputs):
    inputs = np.asarray(inputs, dtype=np.float64)
    outputs = np.asarray(outputs, dtype=np.float64)
    d = inputs.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{k + 1}" for k in range(d)] + ["y"])
        for row, y in zip(inputs, outputs):
            writer.writerow([_format(v) for v in row] + [_format(y)])


def write_predictions_csv(path, X0, prediction, intervals):
    """Prediction table: one row per (query, level) with mean, variance,
    and the 95% interval bounds."""
    X0 = np.asarray(X0, dtype=np.float64)
    d = X0.shape[1]
    header = [f"x{k + 1}" for k in range(d)] + [
        "level",
        "mean",
        "variance",
        "lo95",
        "hi95",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(X0.shape[0]):
            for t in range(prediction.s):
                lo, hi = intervals[i][t]
                writer.writerow(
                    [_format(v) for v in X0[i]]
                    + [
                        str(t + 1),
                        _format(prediction.means[i, t]),
                        _format(prediction.variances[i, t]),
                        _format(lo),
                        _format(hi),
                    ]
                )


def write_draws_csv(path, draws):
    """Sample table: one row per draw, one ``level{t}`` column per level."""
    draws = np.asarray(draws, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"level{t + 1}" for t in range(draws.shape[1])])
        for row in draws:
            writer.writerow([_format(v) for v in row])


def write_tailprobe_csv(path, phi_grid, loglik, logprior, logpost):
    """Diagnostic table along an isotropic range ray; empty grid gives a
    header-only file."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["phi", "log_likelihood", "log_prior", "log_posterior"])
        for g, ll, lp, lpost in zip(phi_grid, loglik, logprior, logpost):
            writer.writerow([_format(g), _format(ll), _format(lp), _format(lpost)])


def write_replicates_csv(path, report):
    """Per-replicate benchmark table."""
    columns = ["replicate", "rmspe", "cvg95", "alci95", "failed", "reason"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rep in report.replicates:
            writer.writerow(
                [
                    str(rep["replicate"]),
                    _format(rep["rmspe"]),
                    _format(rep["cvg95"]),
                    _format(rep["alci95"]),
                    str(rep["failed"]),
                    rep["reason"],
                ]
            )
