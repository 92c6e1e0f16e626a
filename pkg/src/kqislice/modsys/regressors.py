"""Linear, stepwise, least-squares SVM and Gaussian process regressors.

All of them work on standardized features; see ``models.fit`` for the scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg


class FitError(RuntimeError):
    """A regressor could not be trained on the given data."""


def _design(z: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((z.shape[0], 1)), z])


def _least_squares(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares on design matrix ``a`` (first column = intercept).

    An SVD solve rather than the normal equations, so exact affine data is
    recovered to rounding and collinear columns do not make the fit fail.
    """
    w, *_ = np.linalg.lstsq(a, y, rcond=None)
    if not np.all(np.isfinite(w)):
        raise FitError("least-squares solve produced non-finite coefficients")
    return w


@dataclass
class LinearModel:
    intercept: float
    coef: np.ndarray

    @classmethod
    def fit(cls, z: np.ndarray, y: np.ndarray) -> "LinearModel":
        w = _least_squares(_design(z), y)
        return cls(float(w[0]), w[1:])

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self.intercept + z @ self.coef

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "coef": self.coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(float(d["intercept"]), np.asarray(d["coef"], dtype=float))


def aic(rss: float, n: int, n_params: int) -> float:
    """Gaussian AIC up to an additive constant."""
    return n * math.log(max(rss / n, 1e-300)) + 2 * n_params


@dataclass
class StepwiseModel:
    """OLS on the columns chosen by forward selection under AIC."""

    selected: list[int]
    intercept: float
    coef: np.ndarray  # one entry per selected column
    n_features: int

    @classmethod
    def fit(cls, z: np.ndarray, y: np.ndarray) -> "StepwiseModel":
        n, d = z.shape

        def score(cols: list[int]) -> tuple[float, np.ndarray]:
            a = _design(z[:, cols])
            w = _least_squares(a, y)
            rss = float(np.sum((y - a @ w) ** 2))
            return aic(rss, n, len(cols) + 1), w

        selected: list[int] = []
        best_aic, best_w = score(selected)
        while len(selected) < d:
            trials = [(score(selected + [j]), j) for j in range(d) if j not in selected]
            (cand_aic, cand_w), j = min(trials, key=lambda t: (t[0][0], t[1]))
            if cand_aic >= best_aic:
                break
            selected.append(j)
            best_aic, best_w = cand_aic, cand_w
        return cls(selected, float(best_w[0]), best_w[1:], d)

    def predict(self, z: np.ndarray) -> np.ndarray:
        if not self.selected:
            return np.full(z.shape[0], self.intercept)
        return self.intercept + z[:, self.selected] @ self.coef

    def to_dict(self) -> dict:
        return {
            "selected": list(self.selected),
            "intercept": self.intercept,
            "coef": self.coef.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepwiseModel":
        return cls(
            [int(j) for j in d["selected"]],
            float(d["intercept"]),
            np.asarray(d["coef"], dtype=float),
            int(d["n_features"]),
        )


def sq_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def median_pairwise_distance(z: np.ndarray) -> float:
    n = z.shape[0]
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, k=1)
    dist = np.sqrt(sq_distances(z, z)[iu])
    med = float(np.median(dist))
    return med if med > 0 else 1.0


def gaussian_kernel(a: np.ndarray, b: np.ndarray, width: float) -> np.ndarray:
    return np.exp(-sq_distances(a, b) / (2.0 * width * width))


def polynomial_kernel(a: np.ndarray, b: np.ndarray, degree: int) -> np.ndarray:
    # Inner product normalised by the dimension keeps cubic values tame.
    return (1.0 + (a @ b.T) / a.shape[1]) ** degree


@dataclass
class KernelMachine:
    """Least-squares SVM regression.

    Solves the bordered system ``[[0, 1'], [1, K + I/C]] [b; a] = [0; y]`` and
    predicts ``sum_i a_i k(x_i, x) + b``.
    """

    kernel: str  # "gaussian" or "poly"
    support: np.ndarray
    dual: np.ndarray
    bias: float
    width: float = 1.0
    degree: int = 2

    def gram(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kernel == "gaussian":
            return gaussian_kernel(a, b, self.width)
        return polynomial_kernel(a, b, self.degree)

    @classmethod
    def fit(
        cls,
        z: np.ndarray,
        y: np.ndarray,
        kernel: str,
        c: float = 10.0,
        width: float | None = None,
        degree: int = 2,
    ) -> "KernelMachine":
        if kernel not in ("gaussian", "poly"):
            raise ValueError(f"unknown kernel {kernel!r}")
        if c <= 0:
            raise ValueError("regularization C must be positive")
        if width is None:
            width = median_pairwise_distance(z)
        model = cls(kernel, z.copy(), np.empty(0), 0.0, float(width), int(degree))
        n = z.shape[0]
        system = np.zeros((n + 1, n + 1))
        system[0, 1:] = 1.0
        system[1:, 0] = 1.0
        system[1:, 1:] = model.gram(z, z) + np.eye(n) / c
        rhs = np.concatenate([[0.0], y])
        try:
            sol = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"LS-SVM system is singular: {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise FitError("LS-SVM system produced non-finite coefficients")
        model.bias = float(sol[0])
        model.dual = sol[1:]
        return model

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self.gram(z, self.support) @ self.dual + self.bias

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "support": self.support.tolist(),
            "dual": self.dual.tolist(),
            "bias": self.bias,
            "width": self.width,
            "degree": self.degree,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelMachine":
        return cls(
            d["kernel"],
            np.asarray(d["support"], dtype=float),
            np.asarray(d["dual"], dtype=float),
            float(d["bias"]),
            float(d["width"]),
            int(d["degree"]),
        )


_REFINE_STEPS = 5


@dataclass
class GaussianProcess:
    """Zero-mean GP with a squared-exponential kernel on standardized targets."""

    support: np.ndarray
    weights: np.ndarray  # (K + noise I)^-1 y, in standardized target units
    length_scale: float
    signal_variance: float
    y_mean: float
    y_scale: float

    @classmethod
    def fit(
        cls,
        z: np.ndarray,
        y: np.ndarray,
        length_scale: float = 1.0,
        signal_variance: float = 1.0,
        noise_variance: float = 1e-2,
    ) -> "GaussianProcess":
        if length_scale <= 0 or signal_variance <= 0 or noise_variance < 0:
            raise ValueError("GP hyperparameters must be positive (noise may be zero)")
        y_mean = float(np.mean(y))
        y_scale = float(np.std(y)) or 1.0
        ys = (y - y_mean) / y_scale
        n = z.shape[0]
        cov = signal_variance * gaussian_kernel(z, z, length_scale) + noise_variance * np.eye(n)
        # Escalating jitter only when the plain factorization fails.
        for jitter in (0.0, 1e-12, 1e-10, 1e-8):
            try:
                factor = linalg.cho_factor(cov + jitter * np.eye(n), lower=True)
                break
            except linalg.LinAlgError:
                continue
        else:
            raise FitError("GP covariance is not positive definite even with jitter")
        weights = linalg.cho_solve(factor, ys)
        if jitter > 0:
            # Refine against the unjittered covariance so the jitter does not bias the fit.
            for _ in range(_REFINE_STEPS):
                weights = weights + linalg.cho_solve(factor, ys - cov @ weights)
        return cls(z.copy(), weights, float(length_scale), float(signal_variance), y_mean, y_scale)

    def predict(self, z: np.ndarray) -> np.ndarray:
        k = self.signal_variance * gaussian_kernel(z, self.support, self.length_scale)
        return self.y_mean + self.y_scale * (k @ self.weights)

    def to_dict(self) -> dict:
        return {
            "support": self.support.tolist(),
            "weights": self.weights.tolist(),
            "length_scale": self.length_scale,
            "signal_variance": self.signal_variance,
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianProcess":
        return cls(
            np.asarray(d["support"], dtype=float),
            np.asarray(d["weights"], dtype=float),
            float(d["length_scale"]),
            float(d["signal_variance"]),
            float(d["y_mean"]),
            float(d["y_scale"]),
        )
