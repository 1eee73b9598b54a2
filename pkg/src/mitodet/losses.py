"""Multi-objective detection loss with analytic gradients.

Classification log loss, smooth L1 box regression gated by the
ground-truth label, mask binary cross entropy, and a central-difference
gradient checker. Losses operate on probabilities (post-activation),
clamped to (eps, 1 - eps) so every value stays finite and nonnegative.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteLoss

DEFAULT_EPS = 1e-12
GRAD_CHECK_STEP = 1e-6
GRAD_CHECK_TOLERANCE = 1e-5


def cls_log_loss(p, label, eps=DEFAULT_EPS):
    """Log loss of a predicted probability against a binary label.

    Returns (value, d/dp); the gradient is zero where the clamp is
    active. Accepts scalars or arrays elementwise.
    """
    p = np.asarray(p, dtype=np.float64)
    label = np.asarray(label)
    raw = np.where(label == 1, p, 1.0 - p)
    q = np.clip(raw, eps, 1.0 - eps)
    value = -np.log(q)
    dq = np.where((raw > eps) & (raw < 1.0 - eps), -1.0 / q, 0.0)
    grad = np.where(label == 1, dq, -dq)
    return value, grad


def smooth_l1(d):
    """Piecewise quadratic/linear regression loss.

    0.5 d^2 for |d| < 1, |d| - 0.5 otherwise; both branches and their
    derivatives agree at |d| = 1. Returns (value, d/dd) elementwise.
    """
    d = np.asarray(d, dtype=np.float64)
    quad = np.abs(d) < 1.0
    value = np.where(quad, 0.5 * d * d, np.abs(d) - 0.5)
    grad = np.where(quad, d, np.sign(d))
    return value, grad


@dataclass(frozen=True)
class ClsRegBatch:
    """Per-anchor inputs to the classification + regression loss.

    Delta rows for negative anchors are ignored (gated by the
    ground-truth label, so only positive anchors contribute regression).
    """

    probs: np.ndarray          # (N,) predicted mitosis probability
    labels: np.ndarray         # (N,) ground-truth {0, 1}
    pred_deltas: np.ndarray    # (N, 4)
    target_deltas: np.ndarray  # (N, 4)
    n_cls: int                 # mini-batch normalizer
    n_reg: int                 # anchor-location normalizer
    lam: float = 1.0           # classification/regression trade-off

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        pred = np.asarray(self.pred_deltas, dtype=np.float64).reshape(-1, 4)
        target = np.asarray(self.target_deltas, dtype=np.float64).reshape(-1, 4)
        n = probs.shape[0]
        if not (labels.shape[0] == pred.shape[0] == target.shape[0] == n):
            raise ValueError("batch arrays must share the anchor dimension")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        if self.n_cls < 1 or self.n_reg < 1:
            raise ValueError("normalizers must be >= 1")
        if self.lam <= 0.0:
            raise ValueError("lambda must be positive")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "pred_deltas", pred)
        object.__setattr__(self, "target_deltas", target)


def cls_reg_loss(batch, eps=DEFAULT_EPS):
    """Classification + gated regression loss over an anchor batch.

    value = (1/n_cls) sum_k logloss(p_k, label_k)
          + (lam/n_reg) sum_k label_k * sum_4 smooth_l1(pred_k - target_k)

    Returns (value, grad wrt probs, grad wrt pred_deltas).
    """
    cls_vals, cls_grads = cls_log_loss(batch.probs, batch.labels, eps)
    e_cls = cls_vals.sum() / batch.n_cls

    gate = batch.labels.astype(np.float64)[:, None]
    reg_vals, reg_grads = smooth_l1(batch.pred_deltas - batch.target_deltas)
    reg_scale = batch.lam / batch.n_reg
    e_reg = reg_scale * (gate * reg_vals).sum()

    return (float(e_cls + e_reg),
            cls_grads / batch.n_cls,
            reg_scale * gate * reg_grads)


def mask_bce_loss(predicted, target, eps=DEFAULT_EPS):
    """Mean binary cross entropy over a mask grid.

    value = -(1/(W*H)) sum [t ln p + (1 - t) ln(1 - p)] with p clamped
    to (eps, 1 - eps). Returns (value, gradient grid wrt predictions).
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape or predicted.size == 0:
        raise ValueError("predicted and target grids must share a nonempty shape")
    if not np.all((target == 0.0) | (target == 1.0)):
        raise ValueError("target grid must be binary")
    p = np.clip(predicted, eps, 1.0 - eps)
    value = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)).mean()
    inside = (predicted > eps) & (predicted < 1.0 - eps)
    grad = np.where(inside,
                    -(target / p - (1.0 - target) / (1.0 - p)) / p.size,
                    0.0)
    return float(value), grad


@dataclass(frozen=True)
class LossBreakdown:
    """Component losses and their sum."""

    e_cls: float
    e_reg: float
    e_mask: float
    total: float


def total_loss(e_cls, e_reg, e_mask):
    """Sum the three loss components, preserving the breakdown."""
    for name, value in (("e_cls", e_cls), ("e_reg", e_reg), ("e_mask", e_mask)):
        if value < 0.0 or not np.isfinite(value):
            raise ValueError(f"{name} must be finite and nonnegative, got {value}")
    return LossBreakdown(float(e_cls), float(e_reg), float(e_mask),
                         float(e_cls) + float(e_reg) + float(e_mask))


def grad_check(fn, x, step=GRAD_CHECK_STEP):
    """Compare fn's analytic gradient at x against central differences.

    fn maps a 1-D array to (value, gradient). Returns the max over
    coordinates of |analytic - numeric| / max(|analytic|, |numeric|,
    1e-8). Evaluation points must stay clear of non-smooth loci
    (smooth-L1 kinks, probability clamps).
    """
    x = np.asarray(x, dtype=np.float64)
    value, grad = fn(x)
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteLoss("loss or gradient is non-finite at the base point")
    worst = 0.0
    for i in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward[i] += step
        backward[i] -= step
        f_plus, _ = fn(forward)
        f_minus, _ = fn(backward)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteLoss(f"loss non-finite at perturbed coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * step)
        denom = max(abs(grad[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(grad[i] - numeric) / denom)
    return worst


def _smooth_l1_case(rng):
    # both branches, |d| kept clear of the kink at 1
    d = np.where(rng.random(4) < 0.5,
                 rng.uniform(0.05, 0.9, size=4),
                 rng.uniform(1.1, 3.0, size=4))
    d *= rng.choice([-1.0, 1.0], size=4)
    return d, lambda v: _sum_wrap(smooth_l1, v)


def _sum_wrap(op, v):
    value, grad = op(v)
    return float(np.sum(value)), np.asarray(grad)


def _cls_log_case(rng):
    p = rng.uniform(0.05, 0.95, size=4)
    labels = rng.integers(0, 2, size=4)
    return p, lambda v: _sum_wrap(lambda q: cls_log_loss(q, labels), v)


def _cls_reg_case(rng):
    n = int(rng.integers(2, 6))
    labels = rng.integers(0, 2, size=n)
    labels[0] = 1  # at least one positive so the regression term is live
    probs = rng.uniform(0.05, 0.95, size=n)
    target = rng.uniform(-2.0, 2.0, size=(n, 4))
    diff = np.where(rng.random((n, 4)) < 0.5,
                    rng.uniform(0.05, 0.8, size=(n, 4)),
                    rng.uniform(1.2, 2.5, size=(n, 4)))
    pred = target + diff * rng.choice([-1.0, 1.0], size=(n, 4))
    n_cls = int(rng.integers(1, 2 * n + 1))
    n_reg = int(rng.integers(1, 2 * n + 1))
    lam = float(rng.uniform(0.5, 2.0))

    def fn(v):
        batch = ClsRegBatch(v[:n], labels, v[n:].reshape(n, 4), target,
                            n_cls=n_cls, n_reg=n_reg, lam=lam)
        value, grad_p, grad_d = cls_reg_loss(batch)
        return value, np.concatenate([grad_p, grad_d.reshape(-1)])

    return np.concatenate([probs, pred.reshape(-1)]), fn


def _mask_bce_case(rng):
    shape = (int(rng.integers(2, 6)), int(rng.integers(2, 6)))
    target = rng.integers(0, 2, size=shape).astype(np.float64)
    pred = rng.uniform(0.05, 0.95, size=shape)

    def fn(v):
        value, grad = mask_bce_loss(v.reshape(shape), target)
        return value, grad.reshape(-1)

    return pred.reshape(-1), fn


def run_loss_verification(trials=1000, seed=0, step=GRAD_CHECK_STEP,
                          tolerance=GRAD_CHECK_TOLERANCE):
    """Finite-difference verification of every loss op's gradient.

    Runs `trials` random evaluation points per op (points kept away from
    non-smooth loci) and reports the worst relative error. Returns a
    list of {op, trials, max_rel_err, pass} dicts.
    """
    cases = [("smooth_l1", _smooth_l1_case),
             ("cls_log_loss", _cls_log_case),
             ("cls_reg_loss", _cls_reg_case),
             ("mask_bce_loss", _mask_bce_case)]
    report = []
    for name, make_case in cases:
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            x, fn = make_case(rng)
            worst = max(worst, grad_check(fn, x, step=step))
        report.append({"op": name, "trials": trials,
                       "max_rel_err": worst, "pass": bool(worst <= tolerance)})
    return report
