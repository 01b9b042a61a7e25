"""Adversarial training against availability attacks.

The inner problem is solved exactly per sample and per batch: both
forecast extremes over feasible masks are computed, and the mask whose
squared error against the target is largest (resp. smallest) defines the
adversarial max (resp. min) term. Gradients then flow through the frozen
masks, which is exact for a maximum over a finite set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackSpec, batch_attack, forecast_extremes
from .dataset import N_FLEX, Dataset, ImputationVector, make_imputation
from .metrics import mape
from .network import (
    Plnn,
    TrainConfig,
    forward_batch,
    grad_params,
    mse_loss,
    run_training_loop,
)


@dataclass
class AdvTrainConfig:
    base: TrainConfig = field(default_factory=TrainConfig)
    budget: int = 6
    imputation: str = "zero"  # "zero" | "mean"
    max_weight: float = 1.0
    min_weight: float = 1.0
    inner_solver: str = "bruteforce"  # "bruteforce" | "milp"
    # "squared_error": the max/min terms pick, among the two forecast
    # extremes, the mask extremizing the squared error (exact for the max).
    # "forecast": the terms are tied to the forecast-max / forecast-min
    # attack masks directly.
    inner_objective: str = "squared_error"
    workers: int = 1  # used by the milp inner solver only

    def __post_init__(self):
        if self.max_weight < 0 or self.min_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if not 0 <= self.budget <= 6:
            raise ValueError("budget must be in [0, 6]")
        if self.inner_solver not in ("bruteforce", "milp"):
            raise ValueError(f"unknown inner solver {self.inner_solver!r}")
        if self.inner_objective not in ("squared_error", "forecast"):
            raise ValueError(f"unknown inner objective {self.inner_objective!r}")


@dataclass
class AdversarialLoss:
    clean: float
    adv_max: float
    adv_min: float
    masks_max: np.ndarray  # (batch, 6)
    masks_min: np.ndarray


def _inner_extremes(model, X, imputation, cfg):
    """Forecast extremes per sample under the configured inner solver."""
    if cfg.inner_solver == "bruteforce":
        return forecast_extremes(model, X, imputation, cfg.budget)
    ds = Dataset(X=X, Y=np.ones(len(X)))
    common = dict(budget=cfg.budget, imputation=imputation.mode, engine="milp")
    hi = batch_attack(
        model, ds, AttackSpec(kind="availability", mode="max", **common),
        imputation=imputation, workers=cfg.workers,
    )
    lo = batch_attack(
        model, ds, AttackSpec(kind="availability", mode="min", **common),
        imputation=imputation, workers=cfg.workers,
    )
    for b in (hi, lo):
        if b.summary.failures:
            idx, err = b.summary.failures[0]
            raise RuntimeError(f"inner MILP failed on sample {idx}: {err}")
    f_hi = np.array([r.adversarial_forecast for r in hi.results])
    f_lo = np.array([r.adversarial_forecast for r in lo.results])
    m_hi = np.array([r.mask for r in hi.results])
    m_lo = np.array([r.mask for r in lo.results])
    return f_lo, f_hi, m_lo, m_hi


def adversarial_loss(
    model: Plnn, X, Y, imputation: ImputationVector, cfg: AdvTrainConfig
) -> AdversarialLoss:
    """Clean loss plus the exact per-sample worst- and best-case mask losses.

    The squared error is convex in the forecast, so its maximum over
    masks is attained at one of the two forecast extremes; the same two
    candidates define the minimizing selection.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    clean = mse_loss(model, X, Y)
    f_lo, f_hi, m_lo, m_hi = _inner_extremes(model, X, imputation, cfg)
    sq_hi = (Y - f_hi) ** 2
    sq_lo = (Y - f_lo) ** 2
    if cfg.inner_objective == "forecast":
        return AdversarialLoss(
            clean=clean,
            adv_max=float(np.mean(sq_hi)),
            adv_min=float(np.mean(sq_lo)),
            masks_max=m_hi,
            masks_min=m_lo,
        )
    masks_max = np.where((sq_hi >= sq_lo)[:, None], m_hi, m_lo)
    masks_min = np.where((sq_hi <= sq_lo)[:, None], m_hi, m_lo)
    return AdversarialLoss(
        clean=clean,
        adv_max=float(np.mean(np.maximum(sq_hi, sq_lo))),
        adv_min=float(np.mean(np.minimum(sq_hi, sq_lo))),
        masks_max=masks_max,
        masks_min=masks_min,
    )


def danskin_grad(
    model: Plnn,
    X,
    Y,
    masks_max: np.ndarray,
    masks_min: np.ndarray,
    imputation: ImputationVector,
    cfg: AdvTrainConfig,
):
    """Gradient of clean + w_max * adv_max + w_min * adv_min at frozen masks."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    dW, db = grad_params(model, X, Y)
    for weight, masks in ((cfg.max_weight, masks_max), (cfg.min_weight, masks_min)):
        if weight == 0.0:
            continue
        Z = _impute_rows(X, masks, imputation)
        aW, ab = grad_params(model, Z, Y)
        for g, a in zip(dW + db, aW + ab):
            g += weight * a
    return dW, db


def _impute_rows(X, masks, imputation):
    """Row i of X imputed by row i of masks."""
    Z = X.copy()
    c = imputation.values[:N_FLEX]
    Z[:, :N_FLEX] = masks * X[:, :N_FLEX] + (1 - masks) * c
    return Z


def advtrain(model: Plnn, train_ds: Dataset, test_ds: Dataset, cfg: AdvTrainConfig):
    """Adam training on the combined clean/max/min loss.

    With both adversarial weights at zero the run reduces exactly to
    clean training: the inner solver is skipped and the snapshot rule
    falls back to plain test MAPE, so trajectories match bit for bit.
    """
    imputation = make_imputation(train_ds, cfg.imputation)
    adversarial = cfg.max_weight > 0.0 or cfg.min_weight > 0.0

    if adversarial:

        def grad_fn(m, Xb, Yb):
            loss = adversarial_loss(m, Xb, Yb, imputation, cfg)
            grads = danskin_grad(m, Xb, Yb, loss.masks_max, loss.masks_min, imputation, cfg)
            total = loss.clean + cfg.max_weight * loss.adv_max + cfg.min_weight * loss.adv_min
            return grads, {
                "loss": total,
                "clean_loss": loss.clean,
                "adv_max_loss": loss.adv_max,
                "adv_min_loss": loss.adv_min,
            }

        def eval_fn(m):
            clean = forward_batch(m, test_ds.X)
            test_mape = mape(clean, test_ds.Y)
            f_lo, f_hi, _, _ = forecast_extremes(m, test_ds.X, imputation, cfg.budget)
            med_max = float(np.median(np.abs((f_hi - clean) / clean * 100.0)))
            med_min = float(np.median(np.abs((f_lo - clean) / clean * 100.0)))
            return {
                "test_mape": test_mape,
                "test_median_abs_mpe_max": med_max,
                "test_median_abs_mpe_min": med_min,
                "score": test_mape + 0.5 * (med_max + med_min),
            }

    else:

        def grad_fn(m, Xb, Yb):
            return grad_params(m, Xb, Yb), {
                "loss": mse_loss(m, Xb, Yb),
                "clean_loss": mse_loss(m, Xb, Yb),
                "adv_max_loss": float("nan"),
                "adv_min_loss": float("nan"),
            }

        def eval_fn(m):
            test_mape = mape(forward_batch(m, test_ds.X), test_ds.Y)
            return {
                "test_mape": test_mape,
                "test_median_abs_mpe_max": float("nan"),
                "test_median_abs_mpe_min": float("nan"),
                "score": test_mape,
            }

    return run_training_loop(model, train_ds, cfg.base, grad_fn, eval_fn)
