"""Two-layer ReLU regression with a frozen output layer.

``h(x) = (1/sqrt(m)) sum_r s_r relu(w_r . x)`` with ``s_r`` in {-1, +1}; only
``W`` is trained. Gradients are written out by hand here (the network is
tiny and runs thousands of times); tests check them against the autodiff
engine.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..datasets import Dataset
from ..errors import NumericError, PreconditionError, ValidationError
from ..seeding import derive_seed, rng_for
from .chi2 import chi2_inv_cdf
from .gram import gram_matrix


def relu_forward(X, W, s) -> np.ndarray:
    return np.maximum(X @ W.T, 0.0) @ s / math.sqrt(W.shape[0])


def relu_loss(X, y, W, s) -> float:
    r = relu_forward(X, W, s) - y
    return float(0.5 * (r @ r))


def relu_grad(X, y, W, s) -> np.ndarray:
    """dL/dW for the summed squared loss; the ReLU derivative at 0 is 0."""
    pre = X @ W.T
    r = np.maximum(pre, 0.0) @ s / math.sqrt(W.shape[0]) - y
    return ((r[:, None] * (pre > 0)).T @ X) * s[:, None] / math.sqrt(W.shape[0])


@dataclass
class ReluTrial:
    W0: np.ndarray
    W: np.ndarray
    s: np.ndarray
    eta: float
    batch_size: int
    grads: np.ndarray  # (t, m, d), gradient used at each step
    step_losses: np.ndarray  # full training loss before step 1 and after every step
    train_loss: float
    test_loss: float
    train_loss_init: float
    test_loss_init: float
    history: list = field(default_factory=list)  # W(0), W(1), ... when recorded
    seed: int = 0

    @property
    def m(self) -> int:
        return self.W0.shape[0]

    @property
    def t(self) -> int:
        return self.grads.shape[0]

    @property
    def sigma_grad(self) -> float:
        """Pooled std: sqrt of the mean over weights of the across-step variance.

        A single step has no across-step spread; the RMS of its entries is
        then used, which is the zero-mean Gaussian estimate of sigma.
        """
        if self.t == 0:
            return 0.0
        if self.t == 1:
            return float(np.sqrt(np.mean(self.grads[0] ** 2)))
        return float(np.sqrt(self.grads.var(axis=0).mean()))

    def row(self) -> dict:
        return {
            "seed": self.seed, "m": self.m, "eta": self.eta, "batch_size": self.batch_size,
            "t": self.t, "sigma_grad": self.sigma_grad,
            "train_loss_init": self.train_loss_init, "train_loss": self.train_loss,
            "test_loss_init": self.test_loss_init, "test_loss": self.test_loss,
        }


def run_relu_epoch(train: Dataset, test: Optional[Dataset], m: int, eta: float, batch_size: int,
                   seed: int, record_history: bool = False) -> ReluTrial:
    """One epoch of minibatch gradient descent on the first layer."""
    if m < 1:
        raise ValidationError(f"need m >= 1 hidden units, got {m}")
    if eta < 0:
        raise ValidationError(f"learning rate must be >= 0, got {eta}")
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    X, y = train.samples, np.asarray(train.labels, dtype=np.float64)
    rng = rng_for(seed, "relu-init")
    W = rng.normal(size=(m, X.shape[1]))
    s = rng.choice(np.array([-1.0, 1.0]), size=m)
    W0 = W.copy()
    order = rng_for(seed, "relu-order").permutation(X.shape[0])
    grads, losses, history = [], [relu_loss(X, y, W, s)], [W0.copy()] if record_history else []
    for start in range(0, X.shape[0], batch_size):
        idx = order[start:start + batch_size]
        g = relu_grad(X[idx], y[idx], W, s)
        W = W - eta * g
        grads.append(g)
        losses.append(relu_loss(X, y, W, s))
        if record_history:
            history.append(W.copy())
    if not np.all(np.isfinite(W)) or not np.all(np.isfinite(losses)):
        raise NumericError(f"non-finite weights or loss in ReLU trial (seed {seed})")
    if test is not None:
        Xt, yt = test.samples, np.asarray(test.labels, dtype=np.float64)
        test_init, test_final = relu_loss(Xt, yt, W0, s), relu_loss(Xt, yt, W, s)
    else:
        test_init = test_final = float("nan")
    return ReluTrial(W0, W, s, float(eta), batch_size, np.array(grads), np.array(losses),
                     losses[-1], test_final, losses[0], test_init, history, seed)


@dataclass(frozen=True)
class BoundParams:
    delta: float
    epsilon: float
    d: int

    def __post_init__(self):
        if not (0 < self.delta < 1 and 0 < self.epsilon < 1):
            raise ValidationError(f"delta and epsilon must lie in (0, 1), got {self.delta}, {self.epsilon}")
        if self.d < 1:
            raise ValidationError(f"d must be >= 1, got {self.d}")

    @property
    def phi_value(self) -> float:
        """Chi-squared(d) quantile at probability 1 - epsilon."""
        return chi2_inv_cdf(1.0 - self.epsilon, self.d)

    @property
    def probability_floor(self) -> float:
        return (1.0 - self.delta) * (1.0 - self.epsilon)

    def C(self, eta: float, t: int, sigma: float) -> float:
        return eta * t * sigma * math.sqrt(self.phi_value)

    def perturbation(self, M: int, eta: float, t: int, sigma: float) -> float:
        return 2 * math.sqrt(2) * M ** 2 * eta * t * sigma * math.sqrt(self.phi_value) / (math.sqrt(math.pi) * self.delta)

    def eta_threshold(self, lambda0: float, M: int, t: int, sigma: float) -> float:
        denom = 2 * M ** 2 * math.sqrt(2) * self.phi_value * t * sigma
        return math.inf if denom == 0 else lambda0 * math.sqrt(math.pi) * self.delta / denom


@dataclass
class GramBoundReport:
    displacement: float
    C: float
    lambda_min_0: float
    lambda_min_t: float
    lambda_max_0: float
    lambda_max_t: float
    perturbation: float
    eta: float
    eta_threshold: float

    @property
    def displacement_ok(self) -> bool:
        return self.displacement <= self.C

    @property
    def lambda_min_ok(self) -> bool:
        return self.lambda_min_t >= self.lambda_min_0 - self.perturbation

    @property
    def lambda_max_ok(self) -> bool:
        return self.lambda_max_t <= self.lambda_max_0 + self.perturbation

    def row(self) -> dict:
        return {
            "displacement": self.displacement, "C": self.C,
            "lambda_min_0": self.lambda_min_0, "lambda_min_t": self.lambda_min_t,
            "lambda_max_0": self.lambda_max_0, "lambda_max_t": self.lambda_max_t,
            "perturbation": self.perturbation, "eta": self.eta, "eta_threshold": self.eta_threshold,
            "displacement_ok": self.displacement_ok, "lambda_min_ok": self.lambda_min_ok,
            "lambda_max_ok": self.lambda_max_ok,
        }


def gram_bounds(X, W0, Wt, eta: float, t: int, sigma: float, params: BoundParams,
                lambda0: Optional[float] = None) -> GramBoundReport:
    """Check weight displacement and both eigenvalue bounds between W(0) and W(t).

    ``lambda0`` defaults to lambda_min(H(0)).
    """
    M = X.shape[0]
    H0 = gram_matrix(X, W0)
    Ht = H0 if t == 0 else gram_matrix(X, Wt)
    lam0 = H0.lambda_min if lambda0 is None else lambda0
    threshold = params.eta_threshold(lam0, M, t, sigma)
    if t > 0 and not eta < threshold:
        raise PreconditionError(f"learning rate {eta:.6g} is not below the threshold {threshold:.6g}")
    disp = float(np.linalg.norm(np.asarray(Wt) - np.asarray(W0), axis=1).max())
    return GramBoundReport(disp, params.C(eta, t, sigma), H0.lambda_min, Ht.lambda_min,
                           H0.lambda_max, Ht.lambda_max, params.perturbation(M, eta, t, sigma),
                           eta, threshold)


def check_gram_bounds(trial: ReluTrial, train: Dataset, params: BoundParams) -> GramBoundReport:
    return gram_bounds(train.samples, trial.W0, trial.W, trial.eta, trial.t, trial.sigma_grad, params)


def run_gram_trial(train: Dataset, m: int, params: BoundParams, seed: int,
                   batch_size: int = 1, eta_fraction: float = 0.5) -> tuple:
    """Pick eta as a fraction of the threshold, train one epoch, check the bounds.

    The threshold needs sigma before training, so a pilot estimate from the
    batch gradients at W(0) sets eta; the bounds are then checked with the
    sigma measured along the actual run.
    """
    pilot = run_relu_epoch(train, None, m, 0.0, batch_size, seed)
    lam0 = gram_matrix(train.samples, pilot.W0).lambda_min
    eta = eta_fraction * params.eta_threshold(lam0, train.M, pilot.t, pilot.sigma_grad)
    trial = run_relu_epoch(train, None, m, eta, batch_size, seed)
    return trial, check_gram_bounds(trial, train, params)


@dataclass
class DecayReport:
    steps: int
    step_decay_holds: int
    composed_holds: int

    @property
    def step_decay_fraction(self) -> float:
        return self.step_decay_holds / self.steps if self.steps else 1.0

    @property
    def composed_fraction(self) -> float:
        return self.composed_holds / self.steps if self.steps else 1.0


def check_step_decay(trial: ReluTrial, train: Dataset, params: BoundParams) -> DecayReport:
    """Per step: L(t) <= exp(-lambda_min(H(t))) L(t-1), and the same with the
    lower bound on lambda_min substituted. Informative only at desk widths."""
    if len(trial.history) != trial.t + 1:
        raise ValidationError("trial was run without record_history")
    X = train.samples
    M = X.shape[0]
    lam_init = gram_matrix(X, trial.W0).lambda_min
    per_step = composed = 0
    for step in range(1, trial.t + 1):
        prev, cur = trial.step_losses[step - 1], trial.step_losses[step]
        lam = gram_matrix(X, trial.history[step]).lambda_min
        per_step += cur <= math.exp(-lam) * prev
        pert = params.perturbation(M, trial.eta, step, trial.sigma_grad)
        composed += cur <= math.exp(-lam_init) * math.exp(pert) * prev
    return DecayReport(trial.t, per_step, composed)


def export_rows(rows: list, path) -> None:
    """Write trial rows (dicts with equal keys) as CSV."""
    rows = list(rows)
    try:
        with open(path, "w", newline="") as fh:
            if not rows:
                return
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def trend_population(n_trials: int, seed: int, eta: float = 0.01, batch_size: int = 64,
                     n_train: int = 1024, n_test: int = 512, d: int = 64,
                     widths: tuple = (16, 128)) -> list:
    """ReLU trials with hidden width drawn uniformly from ``widths``, one epoch each."""
    from .linear import regression_set

    ds = regression_set(n_train + n_test, d, derive_seed(seed, "relu-data"))
    train, test = ds.split(n_train)
    trials = []
    for k in range(n_trials):
        m = int(rng_for(seed, "relu-width", k).integers(widths[0], widths[1] + 1))
        trials.append(run_relu_epoch(train, test, m, eta, batch_size, derive_seed(seed, "relu-trial", k)))
    return trials


def gram_suite(n_trials: int, seed: int, M: int = 16, m: int = 64, d: int = 64,
               delta: float = 0.1, epsilon: float = 0.1, batch_size: int = 1) -> list:
    """Independent (dataset, init) draws, each checked against the Gram bounds."""
    from .linear import regression_set

    params = BoundParams(delta, epsilon, d)
    reports = []
    for k in range(n_trials):
        train = regression_set(M, d, derive_seed(seed, "gram-data", k))
        reports.append(run_gram_trial(train, m, params, derive_seed(seed, "gram-trial", k), batch_size)[1])
    return reports
