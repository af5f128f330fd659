"""Rational-exponential per-hop delay model, path aggregation and fitting.

The per-hop model is::

    y(x) = (sum_i a_i z_i) / (1 + sum_j b_j z_j + c) * exp(d * z_e)

where ``z = (x - mean) / std`` is the feature vector after the stored scaler and
``z_e`` is the feature selected by ``exp_feature_index``. Callers always pass
raw-unit features; the scaler travels with the coefficients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import least_squares

from .core import FeatureVector, PathDescriptor

log = logging.getLogger(__name__)

EPS_DEN = 1e-6
N_FEATURES = 3
PENALTY_WEIGHT = 1e9
_MAX_EXP = 700.0


class SingularityError(ArithmeticError):
    """Model denominator fell below the positivity floor at some input."""

    def __init__(self, x: Any, denominator: float, hop: Optional[int] = None):
        self.x = x
        self.denominator = denominator
        self.hop = hop
        where = f" at hop {hop}" if hop is not None else ""
        super().__init__(f"denominator {denominator!r} < {EPS_DEN}{where} for x={x}")


class PredictionOverflowError(ArithmeticError):
    def __init__(self, x: Any, hop: Optional[int] = None):
        self.x = x
        self.hop = hop
        where = f" at hop {hop}" if hop is not None else ""
        super().__init__(f"non-finite prediction{where} for x={x}")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class Scaler:
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if len(self.mean) != N_FEATURES or len(self.std) != N_FEATURES:
            raise ValueError("scaler needs 3 means and 3 stds")
        if any(not s > 0 or not math.isfinite(s) for s in self.std):
            raise ValueError(f"scaler std must be positive and finite (got {self.std})")


@dataclass(frozen=True)
class ModelCoefficients:
    a: tuple[float, float, float]
    b: tuple[float, float, float]
    c: float
    d: float
    exp_feature_index: int = 1
    scaler: Scaler = field(default_factory=Scaler)

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "d", float(self.d))
        if len(self.a) != N_FEATURES or len(self.b) != N_FEATURES:
            raise ValueError("a and b must each have exactly 3 entries")
        if self.exp_feature_index not in (0, 1, 2):
            raise ValueError(f"exp_feature_index must be 0, 1 or 2 (got {self.exp_feature_index})")
        values = (*self.a, *self.b, self.c, self.d)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("coefficients must be finite")

    def to_dict(self) -> dict[str, Any]:
        return {
            "a": list(self.a),
            "b": list(self.b),
            "c": self.c,
            "d": self.d,
            "exp_feature_index": self.exp_feature_index,
            "scaler": {"mean": list(self.scaler.mean), "std": list(self.scaler.std)},
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ModelCoefficients":
        scaler = doc.get("scaler") or {}
        return cls(
            a=tuple(doc["a"]),
            b=tuple(doc["b"]),
            c=doc["c"],
            d=doc["d"],
            exp_feature_index=int(doc["exp_feature_index"]),
            scaler=Scaler(
                mean=tuple(scaler.get("mean", (0.0, 0.0, 0.0))),
                std=tuple(scaler.get("std", (1.0, 1.0, 1.0))),
            ),
        )

    def params(self) -> np.ndarray:
        return np.array([*self.a, *self.b, self.c, self.d])

    @classmethod
    def from_params(cls, p: Sequence[float], exp_feature_index: int, scaler: Scaler):
        return cls(tuple(p[0:3]), tuple(p[3:6]), p[6], p[7], exp_feature_index, scaler)


@dataclass(frozen=True)
class FitReport:
    coefficients: ModelCoefficients
    training_rmse: float
    holdout_rmse: float
    r_squared: float
    iterations: int
    converged: bool
    starts: int = 0
    diagnostics: tuple[str, ...] = ()

    def summary(self) -> str:
        return (
            f"converged={self.converged} iterations={self.iterations} "
            f"training_rmse={self.training_rmse:.6g}ms holdout_rmse={self.holdout_rmse:.6g}ms "
            f"r_squared={self.r_squared:.6f}"
        )


def _raw(x: Union[FeatureVector, Sequence[float]]) -> tuple[float, float, float]:
    if isinstance(x, FeatureVector):
        return x.as_tuple()
    return (float(x[0]), float(x[1]), float(x[2]))


def denominator(coeffs: ModelCoefficients, x: Union[FeatureVector, Sequence[float]]) -> float:
    x0, x1, x2 = _raw(x)
    m, s = coeffs.scaler.mean, coeffs.scaler.std
    z0, z1, z2 = (x0 - m[0]) / s[0], (x1 - m[1]) / s[1], (x2 - m[2]) / s[2]
    b = coeffs.b
    return 1.0 + (b[0] * z0 + b[1] * z1 + b[2] * z2) + coeffs.c


def predict_hop(coeffs: ModelCoefficients, x: Union[FeatureVector, Sequence[float]]) -> float:
    """Predicted latency (ms) of a single hop with raw-unit features ``x``."""
    x0, x1, x2 = _raw(x)
    m, s = coeffs.scaler.mean, coeffs.scaler.std
    z = ((x0 - m[0]) / s[0], (x1 - m[1]) / s[1], (x2 - m[2]) / s[2])
    a, b = coeffs.a, coeffs.b
    den = 1.0 + (b[0] * z[0] + b[1] * z[1] + b[2] * z[2]) + coeffs.c
    if not den >= EPS_DEN:
        raise SingularityError(x, den)
    num = a[0] * z[0] + a[1] * z[1] + a[2] * z[2]
    try:
        y = (num / den) * math.exp(coeffs.d * z[coeffs.exp_feature_index])
    except OverflowError:
        raise PredictionOverflowError(x) from None
    if not math.isfinite(y):
        raise PredictionOverflowError(x)
    return y


def predict_end_to_end(coeffs: ModelCoefficients, path: Union[PathDescriptor, Sequence]) -> float:
    """Sum of per-hop predictions along ``path``, left to right."""
    hops = path.hops if isinstance(path, PathDescriptor) else path
    total = 0.0
    for k, hop in enumerate(hops):
        try:
            total += predict_hop(coeffs, hop)
        except SingularityError as e:
            raise SingularityError(e.x, e.denominator, hop=k) from None
        except PredictionOverflowError as e:
            raise PredictionOverflowError(e.x, hop=k) from None
    return total


# -- fitting -----------------------------------------------------------------


@dataclass(frozen=True)
class FitOptions:
    holdout_fraction: float = 0.2
    starts: int = 16
    seed: int = 0
    exp_feature_index: int = 1
    ftol: float = 1e-10
    max_iterations: int = 500
    min_samples: int = 50


class _PathProblem:
    """Residuals and Jacobian for path-summed targets in scaled feature space.

    Hops of every sample are stacked into one (H, 3) array and ``owner`` maps
    each hop row to its sample. The penalty block holds one residual per hop.
    """

    def __init__(self, z: np.ndarray, owner: np.ndarray, y: np.ndarray, e: int):
        self.z = z
        self.owner = owner
        self.y = y
        self.e = e
        self.n = len(y)
        self.sqrt_pen = math.sqrt(PENALTY_WEIGHT)

    def _parts(self, p: np.ndarray):
        a, b, c, d = p[0:3], p[3:6], p[6], p[7]
        num = self.z @ a
        den = 1.0 + self.z @ b + c
        den_safe = np.maximum(den, EPS_DEN)
        expo = np.exp(np.minimum(d * self.z[:, self.e], _MAX_EXP))
        return num, den, den_safe, expo

    def hop_predictions(self, p: np.ndarray) -> np.ndarray:
        num, _, den_safe, expo = self._parts(p)
        return num / den_safe * expo

    def predict(self, p: np.ndarray) -> np.ndarray:
        return np.bincount(self.owner, weights=self.hop_predictions(p), minlength=self.n)

    def residuals(self, p: np.ndarray) -> np.ndarray:
        num, den, den_safe, expo = self._parts(p)
        yhat = np.bincount(self.owner, weights=num / den_safe * expo, minlength=self.n)
        penalty = self.sqrt_pen * np.maximum(0.0, EPS_DEN - den)
        return np.concatenate([yhat - self.y, penalty])

    def jacobian(self, p: np.ndarray) -> np.ndarray:
        num, den, den_safe, expo = self._parts(p)
        z = self.z
        hop = np.empty((len(z), 8))
        q = expo / den_safe
        hop[:, 0:3] = z * q[:, None]
        g = -num * expo / den_safe**2
        # derivative of den_safe is zero where clipped
        g = np.where(den >= EPS_DEN, g, 0.0)
        hop[:, 3:6] = z * g[:, None]
        hop[:, 6] = g
        hop[:, 7] = num * q * z[:, self.e]
        jac_fit = np.zeros((self.n, 8))
        for col in range(8):
            jac_fit[:, col] = np.bincount(self.owner, weights=hop[:, col], minlength=self.n)
        active = den < EPS_DEN
        jac_pen = np.zeros((len(z), 8))
        jac_pen[:, 3:6] = np.where(active[:, None], -self.sqrt_pen * z, 0.0)
        jac_pen[:, 6] = np.where(active, -self.sqrt_pen, 0.0)
        return np.vstack([jac_fit, jac_pen])

    def min_denominator(self, p: np.ndarray) -> float:
        return float(np.min(1.0 + self.z @ p[3:6] + p[6]))


def _stack(samples: Sequence[Sequence[Sequence[float]]]) -> tuple[np.ndarray, np.ndarray]:
    rows: list[tuple[float, float, float]] = []
    owner: list[int] = []
    for i, hops in enumerate(samples):
        if len(hops) == 0:
            raise ValueError(f"sample {i} has no hops")
        for hop in hops:
            rows.append(_raw(hop))
            owner.append(i)
    return np.asarray(rows, dtype=float), np.asarray(owner, dtype=np.intp)


def _fit_scaler(x: np.ndarray) -> Scaler:
    # Scale-only: centering would remove the numerator's implicit intercept.
    std = x.std(axis=0)
    std = np.where(std > 0, std, np.where(np.abs(x).max(axis=0) > 0, np.abs(x).max(axis=0), 1.0))
    return Scaler(mean=(0.0, 0.0, 0.0), std=tuple(float(v) for v in std))


def _starting_points(prob: _PathProblem, rng: np.random.Generator, count: int) -> list[np.ndarray]:
    summed = np.zeros((prob.n, N_FEATURES))
    for k in range(N_FEATURES):
        summed[:, k] = np.bincount(prob.owner, weights=prob.z[:, k], minlength=prob.n)
    a0, *_ = np.linalg.lstsq(summed, prob.y, rcond=None)
    first = np.concatenate([a0, np.zeros(5)])
    starts = [first]
    zmax = np.abs(prob.z).max(axis=0)
    for _ in range(count - 1):
        p = first.copy()
        p[0:3] = a0 * rng.uniform(0.5, 1.5, size=3)
        # keep starting denominators comfortably positive over the data
        p[3:6] = rng.uniform(-0.3, 0.3, size=3) / (zmax * N_FEATURES)
        p[6] = rng.uniform(-0.5, 0.5)
        p[7] = rng.normal(0.0, 0.5) / zmax[prob.e]
        starts.append(p)
    return starts


def fit(
    training: Sequence[tuple[FeatureVector, float]],
    options: Optional[FitOptions] = None,
) -> FitReport:
    """Fit the per-hop model to (features, observed ms) pairs."""
    return fit_paths([((x,), y) for x, y in training], options)


def fit_paths(
    training: Sequence[tuple[Sequence[FeatureVector], float]],
    options: Optional[FitOptions] = None,
) -> FitReport:
    """Fit the per-hop model to end-to-end observations over multi-hop paths.

    Each sample is ``(hops, observed_ms)``; the model's prediction for a sample
    is the sum of per-hop predictions, so single-hop samples reduce to the
    plain per-hop fit.
    """
    opts = options or FitOptions()
    if len(training) < opts.min_samples:
        raise InsufficientDataError(
            f"insufficient training data: {len(training)} samples, need >= {opts.min_samples}"
        )
    ys = np.array([float(y) for _, y in training])
    if not np.all(ys > 0) or not np.all(np.isfinite(ys)):
        raise ValueError("observed latencies must be finite and > 0")

    rng = np.random.default_rng(opts.seed)
    order = rng.permutation(len(training))
    n_hold = int(round(len(training) * opts.holdout_fraction))
    hold_idx = np.sort(order[:n_hold])
    train_idx = np.sort(order[n_hold:])

    hops = [training[i][0] for i in range(len(training))]
    x_all, owner_all = _stack(hops)
    scaler = _fit_scaler(x_all[np.isin(owner_all, train_idx)])

    def problem(idx: np.ndarray) -> _PathProblem:
        x, owner = _stack([hops[i] for i in idx])
        z = (x - np.array(scaler.mean)) / np.array(scaler.std)
        return _PathProblem(z, owner, ys[idx], opts.exp_feature_index)

    train = problem(train_idx)
    best: Optional[tuple[float, int, Any]] = None
    diagnostics: list[str] = []
    total_iters = 0
    for k, p0 in enumerate(_starting_points(train, rng, opts.starts)):
        try:
            res = least_squares(
                train.residuals,
                p0,
                jac=train.jacobian,
                method="lm",
                ftol=opts.ftol,
                xtol=1e-15,
                gtol=1e-15,
                max_nfev=opts.max_iterations,
            )
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as e:
            diagnostics.append(f"start {k}: {e}")
            continue
        total_iters += int(res.nfev)
        if not np.all(np.isfinite(res.x)):
            diagnostics.append(f"start {k}: non-finite parameters")
            continue
        if train.min_denominator(res.x) < EPS_DEN:
            diagnostics.append(f"start {k}: denominator below floor")
            continue
        sse = float(np.sum((train.predict(res.x) - train.y) ** 2))
        if not math.isfinite(sse):
            diagnostics.append(f"start {k}: non-finite objective")
            continue
        # strict < keeps the lowest start index on ties
        if best is None or sse < best[0]:
            best = (sse, k, res)

    if best is None:
        log.warning("all %d starts failed; returning linear initialisation", opts.starts)
        p = _starting_points(train, np.random.default_rng(opts.seed), 1)[0]
        converged = False
    else:
        res = best[2]
        p = res.x
        converged = bool(res.status > 0)

    coeffs = ModelCoefficients.from_params(p, opts.exp_feature_index, scaler)
    training_rmse = _rmse(train.predict(p), train.y)
    if n_hold > 0:
        hold = problem(hold_idx)
        if hold.min_denominator(p) < EPS_DEN:
            diagnostics.append("holdout denominator below floor")
        pred = hold.predict(p)
        holdout_rmse = _rmse(pred, hold.y)
        r2 = r_squared(pred, hold.y)
    else:
        holdout_rmse = training_rmse
        r2 = r_squared(train.predict(p), train.y)
    return FitReport(
        coefficients=coeffs,
        training_rmse=training_rmse,
        holdout_rmse=holdout_rmse,
        r_squared=r2,
        iterations=total_iters,
        converged=converged,
        starts=opts.starts,
        diagnostics=tuple(diagnostics),
    )


def _rmse(pred: np.ndarray, y: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def r_squared(pred: Iterable[float], y: Iterable[float]) -> float:
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        # constant target: only an (essentially) exact fit explains it
        return 1.0 if ss_res <= 1e-18 * float(np.sum(y**2)) else 0.0
    return 1.0 - ss_res / ss_tot
