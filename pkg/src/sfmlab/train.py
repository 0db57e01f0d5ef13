"""Joint training of the velocity and score nets.

Loss = L_v + lam * L_s where both terms are mean squared residuals averaged
over the batch and the coordinates.  Conditions are replaced by the null id
with probability ``p_c`` so one net serves both guidance branches.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, TrainingError
from .interpolant import InterpolantConfig, interpolate, score_target
from .nets import FieldNet, MlpConfig, forward_tensor, sample_mask
from .numkit import Adam, RngStream, Tape, Tensor


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 1.0
    p_c: float = 0.1
    batch_size: int = 256
    epochs: int = 200
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("train.lambda must be >= 0")
        if not 0 <= self.p_c <= 1:
            raise ConfigError("train.p_c must lie in [0, 1]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("train.batch_size and train.epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("train.learning_rate must be > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass
class LossRecord:
    epoch: int
    velocity_loss: float
    score_loss: float


@dataclass
class BatchLoss:
    velocity_loss: float
    score_loss: float
    velocity_grad: np.ndarray | None = None
    score_grad: np.ndarray | None = None
    masked: np.ndarray | None = None  # which rows had their condition nulled


@dataclass
class TrainResult:
    velocity: FieldNet
    score: FieldNet
    history: list[LossRecord] = field(default_factory=list)
    mask_rate: float = 0.0  # observed fraction of nulled conditions


def _mse_and_grad(net: FieldNet, x, t, c, mask, target, need_grad: bool):
    params = [Tensor(p, requires_grad=need_grad) for p in net.params]
    with Tape() as tape:
        out = forward_tensor(params, net.config, x, t, c, mask)
        loss = (out - Tensor(target)).square().mean()
        if need_grad:
            tape.backward(loss)
    if not need_grad:
        return float(loss.data), None
    grad = np.concatenate([(p.grad if p.grad is not None else np.zeros_like(p.data)).ravel() for p in params])
    return float(loss.data), grad


def loss_batch(vnet: FieldNet, snet: FieldNet, x0, x1, c, rng: RngStream, icfg: InterpolantConfig,
               tcfg: TrainConfig, grads: bool = True, score_grad: bool | None = None) -> BatchLoss:
    """Both losses (and optionally flat gradients) on one paired batch.

    Velocity times are uniform on [0, 1]; score times are uniform on
    [t_min, 1 - t_min].  Each term draws its own t, z and dropout masks.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    n = x0.shape[0]
    if n == 0:
        raise ConfigError("empty batch")
    if x1.shape != x0.shape:
        raise ConfigError("x0 and x1 batches differ in shape")
    d = x0.shape[1]
    c = np.broadcast_to(np.asarray(c), (n,))
    null = vnet.config.null_id
    masked = rng.split("cond").bernoulli(tcfg.p_c, n)
    cu = np.where(masked, null, c)
    if score_grad is None:
        score_grad = grads and tcfg.lam > 0

    rv = rng.split("velocity")
    tv = rv.uniform(n)
    xt = interpolate(x0, x1, tv, rv.gauss((n, d)), icfg)
    vmask = sample_mask(rv.split("dropout"), vnet.config, batch=n)
    lv, gv = _mse_and_grad(vnet, xt, tv, cu, vmask, x1 - x0, grads)

    rs = rng.split("score")
    ts = icfg.t_min + (1 - 2 * icfg.t_min) * rs.uniform(n)
    z = rs.gauss((n, d))
    xs = interpolate(x0, x1, ts, z, icfg)
    smask = sample_mask(rs.split("dropout"), snet.config, batch=n)
    ls, gs = _mse_and_grad(snet, xs, ts, cu, smask, score_target(z, ts, icfg), score_grad)
    return BatchLoss(lv, ls, gv, gs, masked)


def write_loss_csv(path, history: list[LossRecord]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "velocity_loss", "score_loss"])
        for r in history:
            w.writerow([r.epoch, repr(r.velocity_loss), repr(r.score_loss)])


def fit(data, tcfg: TrainConfig, vcfg: MlpConfig, scfg: MlpConfig | None = None,
        icfg: InterpolantConfig | None = None, rng: RngStream | None = None,
        loss_csv=None, log=None) -> TrainResult:
    """Train both nets with Adam on ``data`` (anything with x0, x1, c arrays).

    ``rng`` defaults to the "train" stream of ``tcfg.seed``.  With lam = 0 the
    score net keeps its initial weights.
    """
    icfg = icfg or InterpolantConfig()
    scfg = scfg or vcfg
    x0 = np.atleast_2d(np.asarray(data.x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(data.x1, dtype=float))
    c = np.asarray(data.c)
    n = x0.shape[0]
    if n == 0:
        raise ConfigError("training dataset is empty")
    if x1.shape != x0.shape or c.shape != (n,):
        raise ConfigError("x0, x1 and c must have matching lengths")
    if x0.shape[1] != vcfg.input_dim:
        raise ConfigError(f"data has dim {x0.shape[1]}, velocity net expects {vcfg.input_dim}")
    rng = rng if rng is not None else RngStream(tcfg.seed).split("train")

    vnet = FieldNet.init(vcfg, "velocity", rng.split("init_velocity"))
    snet = FieldNet.init(scfg, "score", rng.split("init_score"))
    theta, phi = vnet.weights, snet.weights
    adam_kw = dict(lr=tcfg.learning_rate, beta1=tcfg.beta1, beta2=tcfg.beta2, eps=tcfg.eps)
    opt_v, opt_s = Adam(theta.size, **adam_kw), Adam(phi.size, **adam_kw)
    train_score = tcfg.lam > 0

    history: list[LossRecord] = []
    n_masked = n_seen = 0
    for epoch in range(tcfg.epochs):
        er = rng.split(("epoch", epoch))
        order = er.split("perm").permutation(n)
        sum_v = sum_s = 0.0
        for b, start in enumerate(range(0, n, tcfg.batch_size)):
            idx = order[start : start + tcfg.batch_size]
            res = loss_batch(vnet, snet, x0[idx], x1[idx], c[idx], er.split(("batch", b)), icfg, tcfg,
                             score_grad=train_score)
            if not (np.isfinite(res.velocity_loss) and np.isfinite(res.score_loss)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b} "
                    f"(learning_rate={tcfg.learning_rate}); try a smaller learning rate"
                )
            theta = opt_v.step(theta, res.velocity_grad)
            vnet = vnet.with_weights(theta)
            if train_score:
                phi = opt_s.step(phi, tcfg.lam * res.score_grad)
                snet = snet.with_weights(phi)
            sum_v += res.velocity_loss * idx.size
            sum_s += res.score_loss * idx.size
            n_masked += int(res.masked.sum())
            n_seen += idx.size
        rec = LossRecord(epoch, sum_v / n, sum_s / n)
        history.append(rec)
        if log is not None:
            log(rec)
    if loss_csv is not None:
        write_loss_csv(loss_csv, history)
    return TrainResult(vnet, snet, history, n_masked / n_seen)
