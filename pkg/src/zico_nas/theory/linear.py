"""One-step gradient descent on linear regression and its loss bounds.

For unit-norm inputs and squared loss, the loss after the accumulated step
``a_hat = a - eta * sum_i g(x_i)`` satisfies

    loss_after <= G/2 - (eta/2) M^2 (2 - eta*M) sum_j mu_j^2

where ``G`` is the total squared per-sample gradient and ``mu_j`` the
per-coordinate gradient mean. At ``eta = 1/M`` this equals
``(M/2) sum_j sigma_j^2``. The variant with ``(2 - eta)`` in place of
``(2 - eta*M)`` is also reported; it is only valid when ``M = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datasets import Dataset, l2_normalize, synth_clusters
from ..errors import ValidationError
from ..seeding import derive_seed, rng_for

UNIT_TOL = 1e-12


@dataclass
class LinearTrial:
    a: np.ndarray
    a_hat: np.ndarray
    eta: float
    grads: np.ndarray  # (M, d): row i is g(x_i)
    G: float
    mu: np.ndarray
    sigma: np.ndarray
    loss_before: float
    loss_after: float
    bound_mean: float
    bound_mean_typeset: float
    bound_variance: float  # NaN unless eta == 1/M
    seed: int = 0

    @property
    def M(self) -> int:
        return self.grads.shape[0]

    @property
    def sum_mu2(self) -> float:
        return float((self.mu ** 2).sum())

    @property
    def sum_sigma2(self) -> float:
        return float((self.sigma ** 2).sum())

    def holds(self, bound: float, slack: float = 1e-9) -> bool:
        return bool(self.loss_after <= bound + slack * abs(bound))

    def row(self) -> dict:
        return {
            "seed": self.seed, "M": self.M, "d": self.a.size, "eta": self.eta,
            "G": self.G, "sum_mu2": self.sum_mu2, "sum_sigma2": self.sum_sigma2,
            "loss_before": self.loss_before, "loss_after": self.loss_after,
            "bound_mean": self.bound_mean, "bound_mean_typeset": self.bound_mean_typeset,
            "bound_variance": self.bound_variance,
            "mean_bound_holds": self.holds(self.bound_mean),
            "variance_bound_holds": self.holds(self.bound_variance) if np.isfinite(self.bound_variance) else "",
        }


def _squared_loss(X, y, a) -> float:
    r = X @ a - y
    return float(0.5 * (r @ r))


def run_linear_trial(ds: Dataset, a_init, eta: float, seed: int = 0,
                     allow_single_sample: bool = False) -> LinearTrial:
    """One accumulated gradient step from ``a_init`` with both bounds evaluated.

    ``allow_single_sample`` relaxes M > 1 for hand-checkable one-sample cases.
    """
    X, y = ds.samples, np.asarray(ds.labels, dtype=np.float64)
    M = X.shape[0]
    if M < 2 and not (allow_single_sample and M == 1):
        raise ValidationError(f"need M > 1 samples, got {M}")
    if not ds.normalized or np.any(np.abs(np.linalg.norm(X, axis=1) - 1.0) > UNIT_TOL):
        raise ValidationError("linear trials need an L2-normalized dataset")
    if not 0 < eta < 2:
        raise ValidationError(f"learning rate must lie in (0, 2), got {eta}")
    a = np.asarray(a_init, dtype=np.float64)
    if a.shape != (X.shape[1],):
        raise ValidationError(f"a has shape {a.shape}, expected ({X.shape[1]},)")

    residual = X @ a - y
    grads = residual[:, None] * X
    G = float((grads ** 2).sum())
    mu = grads.mean(axis=0)
    sigma = grads.std(axis=0)
    a_hat = a - eta * grads.sum(axis=0)
    s_mu2 = float((mu ** 2).sum())
    bound_mean = G / 2 - (eta / 2) * M ** 2 * (2 - eta * M) * s_mu2
    typeset = G / 2 - (eta / 2) * M ** 2 * (2 - eta) * s_mu2
    bound_var = (M / 2) * float((sigma ** 2).sum()) if eta == 1.0 / M else float("nan")
    return LinearTrial(a, a_hat, float(eta), grads, G, mu, sigma,
                       _squared_loss(X, y, a), _squared_loss(X, y, a_hat),
                       bound_mean, typeset, bound_var, seed)


def regression_set(M: int, d: int, seed: int, classes: int = 10, spread: float = 1.0) -> Dataset:
    """Normalized cluster data with labels scaled into [0, 1]."""
    per = -(-M // classes)
    ds = synth_clusters(classes, per, d, spread, seed).subset(np.arange(M))
    return l2_normalize(ds).regression_labels()


def random_sweep(n_trials: int, seed: int, eta="uniform", max_M: int = 64, max_d: int = 64) -> list:
    """Trials over random sizes, data, initial weights and learning rates.

    ``eta`` is ``"uniform"`` for eta ~ U(0, 2), ``"1/M"``, or a number.
    """
    trials = []
    for k in range(n_trials):
        rng = rng_for(seed, "linear-sweep", k)
        M = int(rng.integers(2, max_M + 1))
        d = int(rng.integers(1, max_d + 1))
        ds = regression_set(M, d, derive_seed(seed, "data", k))
        a = rng.normal(size=d) * rng.uniform(0.1, 3.0)
        if eta == "uniform":
            lr = float(rng.uniform(0.0, 2.0))
            while lr == 0.0:
                lr = float(rng.uniform(0.0, 2.0))
        elif eta == "1/M":
            lr = 1.0 / M
        else:
            lr = float(eta)
        trials.append(run_linear_trial(ds, a, lr, seed=k))
    return trials


def trend_population(n_trials: int, seed: int, M: int = 32, d: int = 64, eta="1/M") -> list:
    """Trials on one dataset whose initial residual vectors have unit norm.

    With unit-norm inputs the total squared gradient G equals the squared
    residual norm, so every trial here has G = 1 and trials differ only in
    how that gradient mass splits between mean and spread across samples.
    Needs ``M <= d`` so that any residual is reachable.
    """
    if M > d:
        raise ValidationError(f"need M <= d for a reachable residual, got M={M}, d={d}")
    ds = regression_set(M, d, derive_seed(seed, "trend-data"))
    X, y = ds.samples, ds.labels
    pinv = np.linalg.pinv(X)
    lr = 1.0 / M if eta == "1/M" else float(eta)
    trials = []
    for k in range(n_trials):
        u = rng_for(seed, "trend", k).normal(size=M)
        u /= np.linalg.norm(u)
        trials.append(run_linear_trial(ds, pinv @ (y + u), lr, seed=k))
    return trials
