"""MLP velocity and score fields with Fourier time features, condition
embeddings and (inverted) dropout on hidden layers."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .numkit import RngStream, Tape, Tensor, concat

KINDS = ("velocity", "score")
# embeddings start near zero so unseen conditions behave like the null condition
EMBED_INIT_STD = 0.01


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_widths: tuple[int, ...] = (64, 64)
    time_embed_dim: int = 4
    condition_count: int = 2
    dropout_rate: float = 0.1
    cond_embed_dim: int = 8
    # optional fixed descriptor per condition id (rows x features); the last
    # row is the null condition and should be all zeros.  None means one-hot
    # rows with a zero null row, i.e. a plain lookup table.
    condition_features: tuple[tuple[float, ...], ...] | None = None
    activation: str = "silu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.condition_features is not None:
            object.__setattr__(
                self, "condition_features", tuple(tuple(float(v) for v in row) for row in self.condition_features)
            )
            if len(self.condition_features) != self.condition_count:
                raise ConfigError("condition_features needs one row per condition id")
        if not self.hidden_widths:
            raise ConfigError("hidden_widths must be nonempty")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.condition_count < 1:
            raise ConfigError("condition_count counts the null condition, so it is >= 1")
        if self.activation not in ("silu", "tanh", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def null_id(self) -> int:
        return self.condition_count - 1

    def feature_table(self) -> np.ndarray:
        if self.condition_features is None:
            return np.eye(self.condition_count)[:, : self.condition_count - 1]
        return np.asarray(self.condition_features, dtype=float)

    def layer_shapes(self) -> list[tuple[int, ...]]:
        n_in = self.input_dim + 1 + 2 * self.time_embed_dim + self.cond_embed_dim
        shapes = [(self.feature_table().shape[1], self.cond_embed_dim)]
        for w in self.hidden_widths:
            shapes += [(n_in, w), (w,)]
            n_in = w
        shapes += [(n_in, self.input_dim), (self.input_dim,)]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.layer_shapes())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        if self.condition_features is not None:
            d["condition_features"] = [list(r) for r in self.condition_features]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpConfig":
        d = dict(d)
        if d.get("condition_features") is not None:
            d["condition_features"] = tuple(tuple(r) for r in d["condition_features"])
        d["hidden_widths"] = tuple(d.get("hidden_widths", (64, 64)))
        return cls(**d)


@dataclass
class DropoutMask:
    masks: list[np.ndarray]
    keep_scale: float

    def scaled(self) -> list[np.ndarray]:
        return [m * self.keep_scale for m in self.masks]


@dataclass
class FieldNet:
    config: MlpConfig
    kind: str
    params: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        shapes = self.config.layer_shapes()
        if [p.shape for p in self.params] != shapes:
            raise ConfigError("parameter shapes do not match config")

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def with_weights(self, flat: np.ndarray) -> "FieldNet":
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.config.n_params:
            raise ConfigError(f"expected {self.config.n_params} weights, got {flat.size}")
        out, i = [], 0
        for s in self.config.layer_shapes():
            n = int(np.prod(s))
            out.append(flat[i : i + n].reshape(s).copy())
            i += n
        return FieldNet(self.config, self.kind, out)

    @classmethod
    def init(cls, config: MlpConfig, kind: str, rng: RngStream) -> "FieldNet":
        shapes = config.layer_shapes()
        params = [EMBED_INIT_STD * rng.gauss(shapes[0]) if min(shapes[0]) > 0 else np.zeros(shapes[0])]
        for s in shapes[1:]:
            if len(s) == 1:
                params.append(np.zeros(s))
            else:
                params.append(rng.gauss(s) / np.sqrt(s[0]))
        return cls(config, kind, params)

    @classmethod
    def zeros(cls, config: MlpConfig, kind: str) -> "FieldNet":
        return cls(config, kind, [np.zeros(s) for s in config.layer_shapes()])


def time_features(t, n: int, n_freq: int) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    k = np.arange(1, n_freq + 1) * np.pi
    arg = t[:, None] * k[None, :]
    return np.concatenate([t[:, None], np.sin(arg), np.cos(arg)], axis=1)


def _condition_rows(c, n: int, config: MlpConfig) -> np.ndarray:
    c = np.broadcast_to(np.asarray(c), (n,))
    if not np.issubdtype(c.dtype, np.integer):
        if np.any(c != np.round(c)):
            raise ConfigError("condition ids must be integers")
        c = c.astype(np.int64)
    if np.any(c < 0) or np.any(c >= config.condition_count):
        raise ConfigError(f"unknown condition id in {np.unique(c)}; valid range [0, {config.condition_count})")
    return config.feature_table()[c]


_ACT = {"silu": Tensor.silu, "tanh": Tensor.tanh, "relu": Tensor.relu}


def forward_tensor(params: list[Tensor], config: MlpConfig, x, t, c, mask: DropoutMask | None = None) -> Tensor:
    """Differentiable forward; records on the active tape if params require grad."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    act = _ACT[config.activation]
    emb = Tensor(_condition_rows(c, n, config)) @ params[0]
    h = concat([Tensor(x), Tensor(time_features(t, n, config.time_embed_dim)), emb], axis=1)
    scaled = mask.scaled() if mask is not None else None
    n_hidden = len(config.hidden_widths)
    for i in range(n_hidden):
        w, b = params[1 + 2 * i], params[2 + 2 * i]
        h = act(h @ w + b)
        if scaled is not None:
            h = h * scaled[i]
    return h @ params[-2] + params[-1]


def forward(net: FieldNet, x, t, c, mask: DropoutMask | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != net.config.input_dim:
        raise ConfigError(f"input has dim {xb.shape[1]}, net expects {net.config.input_dim}")
    out = forward_tensor([Tensor(p) for p in net.params], net.config, xb, t, c, mask).data
    return out[0] if single else out


def guided_velocity(net: FieldNet, x, t, c, alpha: float, mask: DropoutMask | None = None) -> np.ndarray:
    """alpha * v(x,t,c) + (1-alpha) * v(x,t,null); one mask serves both branches."""
    if alpha < 1:
        raise ConfigError(f"guidance alpha must be >= 1, got {alpha}")
    if np.any(np.asarray(c) == net.config.null_id):
        raise ConfigError("guided_velocity needs a non-null condition")
    cond = forward(net, x, t, c, mask)
    if alpha == 1:
        return cond
    uncond = forward(net, x, t, net.config.null_id, mask)
    return alpha * cond + (1 - alpha) * uncond


def sample_mask(rng: RngStream, config: MlpConfig, batch: int | None = None) -> DropoutMask:
    """Bernoulli keep masks per hidden unit; ``batch`` gives per-row masks."""
    rate = config.dropout_rate
    if rate == 0:
        shape = (lambda w: (w,)) if batch is None else (lambda w: (batch, w))
        return DropoutMask([np.ones(shape(w)) for w in config.hidden_widths], 1.0)
    masks = []
    for w in config.hidden_widths:
        shape = (w,) if batch is None else (batch, w)
        masks.append((rng.uniform(shape) >= rate).astype(float))
    return DropoutMask(masks, 1.0 / (1.0 - rate))


def param_grad(net: FieldNet, x, t, c, mask, upstream: np.ndarray) -> np.ndarray:
    """Flat gradient of sum(forward * upstream) w.r.t. the net weights."""
    params = [Tensor(p, requires_grad=True) for p in net.params]
    with Tape() as tape:
        out = forward_tensor(params, net.config, np.atleast_2d(x), t, c, mask)
        loss = (out * Tensor(np.atleast_2d(upstream))).sum()
        tape.backward(loss)
    return np.concatenate([(p.grad if p.grad is not None else np.zeros_like(p.data)).ravel() for p in params])


# ---------------------------------------------------------------- checkpoints

MAGIC = b"SFMCKPT\x00"
FORMAT_VERSION = 1


def save_checkpoint(path, velocity: FieldNet, score: FieldNet, config: dict | None = None,
                    metadata: dict | None = None) -> Path:
    """Binary checkpoint plus a JSON sidecar (``<path>.json``) with metadata.

    Layout: magic(8) | u32 version | u32 header length | header JSON |
    theta float64 LE | phi float64 LE.
    """
    path = Path(path)
    header = {
        "velocity": velocity.config.to_dict(),
        "score": score.config.to_dict(),
        "n_theta": velocity.config.n_params,
        "n_phi": score.config.n_params,
        "config": config or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(hbytes)))
        f.write(hbytes)
        f.write(velocity.weights.astype("<f8").tobytes())
        f.write(score.weights.astype("<f8").tobytes())
    if metadata is not None:
        sidecar = path.with_name(path.name + ".json")
        sidecar.write_text(json.dumps(metadata, sort_keys=True, indent=2))
    return path


def load_checkpoint(path) -> tuple[FieldNet, FieldNet, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path} is not a checkpoint file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[16 : 16 + hlen])
    body = np.frombuffer(raw[16 + hlen :], dtype="<f8").astype(float)
    n_theta, n_phi = header["n_theta"], header["n_phi"]
    if body.size != n_theta + n_phi:
        raise ConfigError("checkpoint body is truncated")
    vcfg = MlpConfig.from_dict(header["velocity"])
    scfg = MlpConfig.from_dict(header["score"])
    vnet = FieldNet.zeros(vcfg, "velocity").with_weights(body[:n_theta])
    snet = FieldNet.zeros(scfg, "score").with_weights(body[n_theta:])
    return vnet, snet, header["config"]
