"""Losses, Adam, the step learning-rate schedule and the per-load training loop."""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import autodiff as ad
from . import network
from .errors import ConfigError, EmptyBatch, EmptyDataset, NonFiniteLoss, ShapeMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 75
    epochs_per_load: int = 1000
    lr0: float = 1e-3
    lr_step: int = 300
    lr_gamma: float = 0.8
    alpha: Union[float, str] = "auto"
    seed: int = 0
    load_order: tuple = (0.0, 2.0, 4.0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    jet: str = "exact"
    jet_h: float = 1.0 / (125 * 4)
    torque_scale: Optional[float] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", "training.batch_size")
        if self.epochs_per_load < 1:
            raise ConfigError("must be >= 1", "training.epochs_per_load")
        if not 0 < self.lr_gamma <= 1:
            raise ConfigError("must lie in (0, 1]", "training.lr_gamma")
        if not self.lr0 > 0:
            raise ConfigError("must be > 0", "training.lr0")
        if self.lr_step < 1:
            raise ConfigError("must be >= 1", "training.lr_step")
        if self.alpha != "auto" and not (isinstance(self.alpha, (int, float)) and self.alpha >= 0):
            raise ConfigError("must be a nonnegative number or 'auto'", "training.alpha")
        if self.jet not in ("exact", "stencil"):
            raise ConfigError("must be 'exact' or 'stencil'", "training.jet")


@dataclass
class LossBreakdown:
    L_q: float
    L_tau: float
    alpha_used: float
    J_total: float


@dataclass
class Samples:
    """Flattened training rows: network inputs, targets and physics data."""

    X: np.ndarray          # (N, 5): 4 EMG channels + normalized time
    q: np.ndarray          # (N, 2): normalized target angles
    tau: np.ndarray        # (N, 2): benchmark torque, N*m
    duration: np.ndarray   # (N,): trial duration, s (time normalization)
    load: np.ndarray       # (N,): hand load, kg

    def __len__(self):
        return len(self.X)

    def take(self, idx):
        return Samples(self.X[idx], self.q[idx], self.tau[idx], self.duration[idx], self.load[idx])

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return Samples(np.zeros((0, 5)), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0))
        return Samples(*(np.concatenate([getattr(p, f) for p in parts])
                         for f in ("X", "q", "tau", "duration", "load")))


def samples_from_trials(trials, norm):
    parts = []
    for tr in trials:
        if tr.tau is None:
            raise ConfigError("trials need benchmark torques (tau columns)")
        n = len(tr)
        X = np.column_stack([tr.emg, tr.normalized_time()])
        parts.append(Samples(norm.normalize_inputs(X), norm.normalize(tr.q), tr.tau,
                             np.full(n, tr.duration), np.full(n, float(tr.load_kg))))
    return Samples.concat(parts)


# --- losses ----------------------------------------------------------------

def physics_residual(model, q, qd, qdd, tau_ref):
    """Equation-of-motion residual M(q) qdd + C(q, qd) qd + G(q) - tau, per joint.

    Works on arrays and traced values; returns ``(f_shoulder, f_elbow)``
    columns of shape (N,).
    """
    p = model.packed()
    m1, lc1, i1, l1, m2, lc2, i2, g = p
    a = i1 + m1 * lc1 * lc1 + i2 + m2 * (l1 * l1 + lc2 * lc2)
    b = m2 * l1 * lc2
    d = i2 + m2 * lc2 * lc2
    q1, q2 = ad.column(q, 0), ad.column(q, 1)
    v1, v2 = ad.column(qd, 0), ad.column(qd, 1)
    a1, a2 = ad.column(qdd, 0), ad.column(qdd, 1)
    tau_ref = np.asarray(tau_ref, dtype=float)
    c2 = ad.cos(q2)
    h = b * ad.sin(q2)
    g2 = (m2 * lc2 * g) * ad.sin(q1 + q2)
    m11 = a + 2.0 * b * c2
    m12 = d + b * c2
    f1 = (m11 * a1 + m12 * a2 - h * (2.0 * v1 * v2 + ad.square(v2))
          + ((m1 * lc1 + m2 * l1) * g) * ad.sin(q1) + g2 - tau_ref[:, 0])
    f2 = m12 * a1 + d * a2 + h * ad.square(v1) + g2 - tau_ref[:, 1]
    return f1, f2


def physical_jet(jet, norm, duration):
    """Map a normalized-output, normalized-time jet to radians and seconds."""
    y, dy, ddy = jet
    scale = np.asarray(norm.angle_scale)
    T = np.asarray(duration, dtype=float)[:, None]
    return norm.denormalize(y), dy * (scale / T), ddy * (scale / (T * T))


def data_loss(params, batch, y=None):
    """Mean over samples of the squared L2 error in normalized angle space."""
    if len(batch) == 0:
        raise EmptyBatch("data_loss needs at least one sample")
    if y is None:
        y = network.forward(params, batch.X)
    return ad.mean(ad.sum(ad.square(y - batch.q), axis=1))


def physics_loss(params, batch, model, norm, torque_scale, jet=None, method="exact", h=1.0 / 500):
    """Mean squared residual norm, residuals divided by ``torque_scale``."""
    if len(batch) == 0:
        raise EmptyBatch("physics_loss needs at least one sample")
    if jet is None:
        jet = network.time_jet(params, batch.X, method, h)
    q, qd, qdd = physical_jet(jet, norm, batch.duration)
    total = None
    for load in np.unique(batch.load):
        mask = batch.load == load
        if mask.all():
            f1, f2 = physics_residual(model.with_load(load), q, qd, qdd, batch.tau)
        else:
            idx = np.flatnonzero(mask)
            f1, f2 = physics_residual(model.with_load(load), ad.take_rows(q, idx),
                                      ad.take_rows(qd, idx), ad.take_rows(qdd, idx), batch.tau[idx])
        inv = 1.0 / torque_scale
        part = ad.sum(ad.square(f1 * inv) + ad.square(f2 * inv))
        total = part if total is None else total + part
    return total * (1.0 / len(batch))


def total_loss(params, batch, model, norm, alpha, torque_scale, method="exact", h=1.0 / 500):
    """``(J, LossBreakdown)`` with ``J = L_q + alpha * L_tau``.

    For ``alpha == 0`` the physics term is evaluated untraced so the gradient
    is exactly the data-loss gradient.
    """
    if alpha == 0:
        lq = data_loss(params, batch)
        untraced = _untraced(params)
        ltau = physics_loss(untraced, batch, model, norm, torque_scale, method=method, h=h)
        return lq, LossBreakdown(float(ad.value_of(lq)), float(ltau), 0.0, float(ad.value_of(lq)))
    jet = network.time_jet(params, batch.X, method, h)
    lq = data_loss(params, batch, y=jet[0])
    ltau = physics_loss(params, batch, model, norm, torque_scale, jet=jet)
    J = lq + alpha * ltau
    return J, LossBreakdown(float(ad.value_of(lq)), float(ad.value_of(ltau)), float(alpha),
                            float(ad.value_of(J)))


def _untraced(params):
    ts = params.tensors()
    if ts and isinstance(ts[0], ad.Var):
        return params.with_tensors([t.value for t in ts])
    return params


def auto_alpha(params, batch, model, norm, torque_scale, method="exact", h=1.0 / 500):
    """Ratio L_q / L_tau on ``batch`` so both terms start equal."""
    lq = float(data_loss(params, batch))
    ltau = float(physics_loss(params, batch, model, norm, torque_scale, method=method, h=h))
    if ltau == 0.0:
        return 1.0
    return lq / ltau


# --- optimizer -------------------------------------------------------------

def lr_at(cfg, epoch):
    """Step decay within a load block: ``lr0 * gamma ** (epoch // step)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * cfg.lr_gamma ** (epoch // cfg.lr_step)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state, params, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns ``(new_state, new_params)``.

    ``params`` may be a flat array or ``MlpParams``; the result has the same type.
    """
    flat = params.flat if isinstance(params, network.MlpParams) else np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != flat.shape or state.m.shape != flat.shape:
        raise ShapeMismatch(f"gradient {grad.shape}, params {flat.shape}, state {state.m.shape}")
    step = state.step + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** step)
    v_hat = v / (1 - beta2 ** step)
    new = flat - lr * m_hat / (np.sqrt(v_hat) + eps)
    new_state = OptimizerState(m, v, step)
    if isinstance(params, network.MlpParams):
        return new_state, network.MlpParams.from_flat(params.arch, new)
    return new_state, new


# --- training loop ---------------------------------------------------------

LOG_COLUMNS = ("epoch", "load", "lr", "L_q", "L_tau", "alpha", "J", "val_J", "jet")


@dataclass
class EpochRecord:
    epoch: int
    load: float
    lr: float
    L_q: float
    L_tau: float
    alpha: float
    J: float
    val_J: float
    jet: str

    def row(self):
        return [getattr(self, c) for c in LOG_COLUMNS]


@dataclass
class TrainResult:
    params: network.MlpParams
    best_params: network.MlpParams
    best_epoch: int
    norm: network.NormSpec
    history: list = field(default_factory=list)

    @property
    def loss_history(self):
        return np.array([r.J for r in self.history])

    @property
    def val_history(self):
        return np.array([r.val_J for r in self.history])


def norm_from_runs(runs, load=None):
    """Angle normalization from the min/max of the heaviest-load runs."""
    loads = runs.loads()
    if not loads:
        raise EmptyDataset("no runs to build normalization from")
    ref = max(loads) if load is None else load
    q = np.vstack([t.q for t in runs.trials(ref)])
    return network.NormSpec.from_angles(q)


def evaluate_loss(params, samples, model, norm, alpha, torque_scale, mode, method, h):
    if len(samples) == 0:
        return math.nan
    lq = float(data_loss(params, samples))
    if mode == "ann" or alpha == 0:
        return lq
    ltau = float(physics_loss(params, samples, model, norm, torque_scale, method=method, h=h))
    return lq + alpha * ltau


def train(train_set, model, cfg=TrainConfig(), mode="pinn", val_set=None, norm=None,
          arch=network.Architecture(), init_params=None, on_epoch=None):
    """Sequential per-load mini-batch Adam training.

    For each load in ``cfg.load_order`` the optimizer and learning-rate
    schedule restart and ``epochs_per_load`` epochs run on that load's
    training rows only, shuffled each epoch. ``mode="ann"`` minimizes the data
    loss alone; ``mode="pinn"`` adds ``alpha * L_tau``. The best-validation
    parameters (same-mode loss on the whole validation set) are kept.
    """
    if mode not in ("pinn", "ann"):
        raise ConfigError(f"unknown mode {mode!r}", "mode")
    if norm is None:
        norm = norm_from_runs(train_set)
    rng = np.random.default_rng(cfg.seed)
    params = init_params.copy() if init_params is not None else network.init(arch, cfg.seed)
    val = samples_from_trials(val_set.trials(), norm) if val_set is not None else None

    blocks = []
    for load in cfg.load_order:
        s = samples_from_trials(train_set.trials(load), norm)
        if len(s) == 0:
            raise EmptyDataset(f"no training rows for load {load:g} kg")
        blocks.append((float(load), s))
    if not blocks:
        raise EmptyDataset("empty load order")

    log.info("training mode=%s jet=%s params=%d", mode, cfg.jet, arch.n_params)
    history = []
    best = (math.inf, params, -1)
    epoch_global = 0
    for load, samples in blocks:
        bmodel = model.with_load(load)
        scale = cfg.torque_scale or bmodel.characteristic_torque()
        state = OptimizerState.zeros(arch.n_params)
        alpha = None
        n = len(samples)
        for epoch in range(cfg.epochs_per_load):
            lr = lr_at(cfg, epoch)
            perm = rng.permutation(n)
            sums = np.zeros(3)
            for start in range(0, n, cfg.batch_size):
                batch = samples.take(perm[start:start + cfg.batch_size])
                if alpha is None:
                    if mode == "ann":
                        alpha = 0.0
                    elif cfg.alpha == "auto":
                        alpha = auto_alpha(params, batch, model, norm, scale, cfg.jet, cfg.jet_h)
                    else:
                        alpha = float(cfg.alpha)
                    log.info("load %g kg: alpha=%.6g torque_scale=%.6g", load, alpha, scale)

                def objective(p):
                    return total_loss(p, batch, model, norm, alpha, scale, cfg.jet, cfg.jet_h)

                try:
                    _, g, parts = ad.value_and_grad(objective, params, has_aux=True)
                except NonFiniteLoss as e:
                    raise NonFiniteLoss(str(e), epoch=epoch_global) from None
                state, params = adam_step(state, params, g, lr, cfg.beta1, cfg.beta2, cfg.eps)
                w = len(batch)
                sums += w * np.array([parts.L_q, parts.L_tau, parts.J_total])
            lq, ltau, J = sums / n
            if not np.isfinite(J):
                raise NonFiniteLoss("epoch loss is not finite", epoch=epoch_global)
            val_J = (evaluate_loss(params, val, model, norm, alpha, scale, mode, cfg.jet, cfg.jet_h)
                     if val is not None else math.nan)
            rec = EpochRecord(epoch_global, load, lr, lq, ltau, alpha, J, val_J, cfg.jet)
            history.append(rec)
            if val is not None and val_J < best[0]:
                best = (val_J, params, epoch_global)
            if on_epoch is not None:
                on_epoch(rec)
            epoch_global += 1
    if best[2] < 0:
        best = (math.nan, params, epoch_global - 1)
    return TrainResult(params, best[1], best[2], norm, history)
