"""Feed-forward network mapping (EMG x4, time) to normalized (shoulder, elbow)."""
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ShapeMismatch

CHECKPOINT_FORMAT = "emgpinn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 5
    hidden_layers: int = 4
    hidden_width: int = 75
    output_dim: int = 2
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"
    time_index: int = -1

    def __post_init__(self):
        for name in ("input_dim", "hidden_layers", "hidden_width", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_activation != "tanh" or self.output_activation != "sigmoid":
            raise ValueError("only tanh hidden / sigmoid output activations are supported")

    @property
    def widths(self):
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]

    @property
    def shapes(self):
        """Tensor shapes in canonical order: per layer, weight then bias."""
        w = self.widths
        out = []
        for n_in, n_out in zip(w[:-1], w[1:]):
            out += [(n_out, n_in), (n_out,)]
        return out

    @property
    def n_params(self):
        return int(sum(np.prod(s) for s in self.shapes))


class MlpParams:
    """Weights and biases; ``tensors`` alternate W1, b1, W2, b2, ...

    Array-backed instances keep a flat vector in canonical order (layer-major,
    weight before bias, row-major) with the tensors as views into it. Traced
    instances built by ``with_tensors`` hold ``autodiff.Var`` leaves instead.
    """

    def __init__(self, arch, tensors, flat=None):
        self.arch = arch
        self._tensors = list(tensors)
        self._flat = flat
        if len(self._tensors) != len(arch.shapes):
            raise ShapeMismatch(f"expected {len(arch.shapes)} tensors, got {len(self._tensors)}")
        for t, s in zip(self._tensors, arch.shapes):
            if tuple(t.shape) != s:
                raise ShapeMismatch(f"tensor shape {tuple(t.shape)} does not match {s}")

    @classmethod
    def from_flat(cls, arch, flat):
        flat = np.array(flat, dtype=float).reshape(-1)
        if flat.size != arch.n_params:
            raise ShapeMismatch(f"expected {arch.n_params} parameters, got {flat.size}")
        tensors, i = [], 0
        for s in arch.shapes:
            n = int(np.prod(s))
            tensors.append(flat[i:i + n].reshape(s))
            i += n
        return cls(arch, tensors, flat)

    @property
    def flat(self):
        if self._flat is None:
            self._flat = np.concatenate([np.asarray(t, dtype=float).reshape(-1) for t in self._tensors])
        return self._flat

    @property
    def layers(self):
        t = self._tensors
        return [(t[i], t[i + 1]) for i in range(0, len(t), 2)]

    def tensors(self):
        return list(self._tensors)

    def with_tensors(self, tensors):
        return MlpParams(self.arch, tensors)

    def copy(self):
        return MlpParams.from_flat(self.arch, self.flat.copy())


def init(arch, seed):
    """Glorot-uniform weights and zero biases, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(arch.n_params)
    params = MlpParams.from_flat(arch, flat)
    for w, _ in params.layers:
        n_out, n_in = w.shape
        limit = np.sqrt(6.0 / (n_in + n_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return params


def _check_input(params, x):
    if np.shape(x)[-1] != params.arch.input_dim:
        raise ShapeMismatch(f"input has {np.shape(x)[-1]} features, expected {params.arch.input_dim}")


def forward(params, x):
    """Network output in (0, 1)^J for inputs ``x`` of shape (n_in,) or (B, n_in)."""
    _check_input(params, x)
    single = np.ndim(x) == 1
    a = np.atleast_2d(x)
    layers = params.layers
    for w, b in layers[:-1]:
        a = ad.tanh(a @ w.T + b)
    w, b = layers[-1]
    y = ad.sigmoid(a @ w.T + b)
    return y[0] if single and not isinstance(y, ad.Var) else y


def time_jet(params, x, method="exact", h=1.0 / (125 * 4)):
    """Output and its first/second derivative w.r.t. the time input.

    ``x`` has shape (B, n_in); the EMG features are held fixed. ``method`` is
    ``"exact"`` (second-order Taylor propagation through the layers) or
    ``"stencil"`` (central differences with step ``h`` in the time input).
    """
    _check_input(params, x)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if method == "stencil":
        ti = params.arch.time_index

        def at(t):
            xs = x.copy()
            xs[:, ti] = t
            return forward(params, xs)

        return ad.stencil_jet(at, x[:, params.arch.time_index], h)
    if method != "exact":
        raise ValueError(f"unknown jet method {method!r}")

    e_t = np.zeros((1, params.arch.input_dim))
    e_t[0, params.arch.time_index] = 1.0
    layers = params.layers
    w, b = layers[0]
    z, dz, ddz = x @ w.T + b, e_t @ w.T, None
    for w, b in layers[1:]:
        a, da, dda = ad.tanh_jet(z, dz, ddz)
        z, dz, ddz = a @ w.T + b, da @ w.T, dda @ w.T
    return ad.sigmoid_jet(z, dz, ddz)


@dataclass(frozen=True)
class NormSpec:
    """Affine maps for inputs and joint angles (radians <-> (0, 1))."""

    angle_offset: tuple = (0.0, 0.0)
    angle_scale: tuple = (1.0, 1.0)
    input_offset: tuple = (0.0,) * 5
    input_scale: tuple = (1.0,) * 5

    def __post_init__(self):
        for name in ("angle_offset", "angle_scale", "input_offset", "input_scale"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if min(self.angle_scale) <= 0 or min(self.input_scale) <= 0:
            raise ValueError("normalization scales must be > 0")

    @classmethod
    def from_angles(cls, q, **kw):
        """Min/max normalization built from a reference set of angles (N, J)."""
        q = np.asarray(q, dtype=float)
        lo, hi = q.min(axis=0), q.max(axis=0)
        scale = np.where(hi > lo, hi - lo, 1.0)
        return cls(angle_offset=tuple(lo), angle_scale=tuple(scale), **kw)

    def normalize(self, q):
        return (np.asarray(q, dtype=float) - np.asarray(self.angle_offset)) / np.asarray(self.angle_scale)

    def denormalize(self, y):
        """Radians from normalized outputs; works on arrays and traced values."""
        scale = np.asarray(self.angle_scale)
        off = np.asarray(self.angle_offset)
        if isinstance(y, ad.Var):
            return y * scale + off
        return np.asarray(y, dtype=float) * scale + off

    def normalize_inputs(self, x):
        return (np.asarray(x, dtype=float) - np.asarray(self.input_offset)) / np.asarray(self.input_scale)

    def to_dict(self):
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path, params, norm, config=None, meta=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": asdict(params.arch),
        "norm": norm.to_dict(),
        "config_hash": config_hash(config) if config is not None else None,
        "meta": meta or {},
        "params": params.flat.tolist(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1))
    return path


def load_checkpoint(path):
    """Return ``(params, norm, doc)`` from a checkpoint written by ``save_checkpoint``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    arch = Architecture(**doc["architecture"])
    params = MlpParams.from_flat(arch, doc["params"])
    return params, NormSpec.from_dict(doc["norm"]), doc
