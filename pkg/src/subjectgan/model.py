"""Generator, discriminator and classifier networks and their losses.

Feature vectors of width ``k`` are treated as single-channel sequences of
length ``k`` so that every network is built from 1-D convolutions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import container
from .optim import ADAPTIVE_MOMENTS, SGD_MOMENTUM, OptimizerState, ParamSet
from .tensor import (Tensor, as_tensor, batchnorm1d, concat, conv1d, leaky_relu, linear,
                     mse, softmax_cross_entropy, tanh)

REAL_LABEL = 0.9
FAKE_LABEL = -1.0


@dataclass
class SaganConfig:
    """Hyperparameters of the adversarial transfer model and its training loop."""

    lambda_adv: float = 1.0
    lambda_cls: float = 10.0
    batch_size: int = 64
    noise_sigma: float = 0.1
    epochs: int = 200
    seed: int = 0
    d_f: int = 3
    d_base_filters: int = 16
    c_f: int = 32
    g_f: int = 32
    n_blocks: int = 2
    leaky_alpha: float = 0.2
    d_optimizer: str = SGD_MOMENTUM
    d_lr: float = 1e-2
    d_momentum: float = 0.9
    c_optimizer: str = ADAPTIVE_MOMENTS
    c_lr: float = 1e-3
    c_momentum: float = 0.9
    g_optimizer: str = ADAPTIVE_MOMENTS
    g_lr: float = 1e-3
    g_momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    score_n_sub: int = 128
    score_repeats: int = 2

    def __post_init__(self):
        if self.lambda_adv < 0 or self.lambda_cls < 0:
            raise ValueError("lambda_adv and lambda_cls must be non-negative")
        if self.lambda_adv + self.lambda_cls <= 0:
            raise ValueError("lambda_adv + lambda_cls must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch normalization)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        for name in ("d_f", "c_f", "g_f", "n_blocks", "d_base_filters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    def optimizer(self, which: str) -> OptimizerState:
        kind = getattr(self, f"{which}_optimizer")
        return OptimizerState(kind=kind, lr=getattr(self, f"{which}_lr"),
                              momentum=getattr(self, f"{which}_momentum"),
                              beta1=self.beta1, beta2=self.beta2)

    def to_manifest(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_manifest(cls, text: str) -> "SaganConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            values[key] = _coerce(raw.strip(), types[key])
        return cls(**values)


def _coerce(raw: str, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _as_rows(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ValueError(f"expected [batch, features], got shape {x.shape}")
    return x


class _Net:
    """Shared plumbing: parameter registration and batch-norm layers."""

    def __init__(self, rng: np.random.Generator, alpha: float):
        self.params = ParamSet()
        self.rng = rng
        self.alpha = alpha

    def _conv(self, name, c_out, c_in, k=3, scale=1.0):
        self.params.add(f"{name}.weight", scale * _uniform(self.rng, (c_out, c_in, k), c_in * k))
        self.params.add(f"{name}.bias", scale * _uniform(self.rng, (c_out,), c_in * k))

    def _dense(self, name, n_out, n_in):
        self.params.add(f"{name}.weight", _uniform(self.rng, (n_out, n_in), n_in))
        self.params.add(f"{name}.bias", _uniform(self.rng, (n_out,), n_in))

    def _bn(self, name, c):
        self.params.add(f"{name}.gamma", np.ones(c))
        self.params.add(f"{name}.beta", np.zeros(c))
        self.params.add_buffer(f"{name}.running_mean", np.zeros(c))
        self.params.add_buffer(f"{name}.running_var", np.ones(c))

    def _p(self, name) -> Tensor:
        return self.params.params[name]

    def conv(self, name, x, padding="same", stride=1):
        return conv1d(x, self._p(f"{name}.weight"), self._p(f"{name}.bias"), padding, stride)

    def dense(self, name, x):
        return linear(x, self._p(f"{name}.weight"), self._p(f"{name}.bias"))

    def bn(self, name, x, training, update_stats):
        return batchnorm1d(x, self._p(f"{name}.gamma"), self._p(f"{name}.beta"),
                           self.params.buffers[f"{name}.running_mean"],
                           self.params.buffers[f"{name}.running_var"],
                           training=training, update_stats=update_stats)

    def residual_stack(self, h, n_blocks, training, update_stats):
        for i in range(n_blocks):
            r = self.conv(f"block{i}.conv1", h)
            r = leaky_relu(self.bn(f"block{i}.bn1", r, training, update_stats), self.alpha)
            r = self.bn(f"block{i}.bn2", self.conv(f"block{i}.conv2", r), training, update_stats)
            h = h + r
        return h

    def _register_stack(self, n_blocks, width):
        for i in range(n_blocks):
            self._conv(f"block{i}.conv1", width, width)
            self._bn(f"block{i}.bn1", width)
            self._conv(f"block{i}.conv2", width, width)
            self._bn(f"block{i}.bn2", width)

    def __call__(self, x, training: bool = True, update_stats: bool = True) -> Tensor:
        return self.forward(x, training=training, update_stats=update_stats)

    def predict(self, x, batch: int = 512) -> np.ndarray:
        """Inference in eval mode (running statistics), no graph kept."""
        x = np.asarray(x, dtype=np.float64)
        with self.params.frozen():
            outs = [self.forward(x[i:i + batch], training=False).data for i in range(0, len(x), batch)]
        return np.concatenate(outs, axis=0) if outs else np.zeros((0,) + self.output_shape)


class GeneratorNet(_Net):
    """Maps feature vectors to feature vectors of the same width.

    Conv lift to ``g_f`` channels, ``n_blocks`` residual blocks, a
    projection back to one channel, a learned per-coordinate offset and an
    input skip, squashed by tanh.
    """

    def __init__(self, k: int, n_blocks: int = 2, g_f: int = 32, noise_sigma: float = 0.1,
                 alpha: float = 0.2, rng: np.random.Generator | None = None):
        super().__init__(rng if rng is not None else np.random.default_rng(0), alpha)
        self.k, self.n_blocks, self.g_f, self.noise_sigma = k, n_blocks, g_f, noise_sigma
        self.output_shape = (k,)
        self._conv("lift", g_f, 1)
        self._register_stack(n_blocks, g_f)
        self._conv("proj", 1, g_f, scale=0.1)
        self.params.add("offset", np.zeros(k))

    def forward(self, x, training=True, update_stats=True) -> Tensor:
        x = _as_rows(x)
        if x.shape[1] != self.k:
            raise ValueError(f"generator expects {self.k} features, got {x.shape[1]}")
        h = leaky_relu(self.conv("lift", x.reshape(x.shape[0], 1, self.k)), self.alpha)
        h = self.residual_stack(h, self.n_blocks, training, update_stats)
        r = self.conv("proj", h).reshape(x.shape[0], self.k)
        return tanh(x + r + self._p("offset"))

    def sample_noise(self, shape, rng: np.random.Generator) -> np.ndarray:
        if self.noise_sigma == 0:
            return np.zeros(shape)
        return rng.normal(0.0, self.noise_sigma, size=shape)


class DiscriminatorNet(_Net):
    """``d_f`` strided conv layers (batch norm on the first) and a tanh validity head."""

    def __init__(self, k: int, d_f: int = 3, base_filters: int = 16, alpha: float = 0.2,
                 head: str = "dense", rng: np.random.Generator | None = None):
        super().__init__(rng if rng is not None else np.random.default_rng(0), alpha)
        if head not in ("dense", "avgpool"):
            raise ValueError(f"unknown discriminator head {head!r}")
        self.k, self.d_f, self.head = k, d_f, head
        self.output_shape = ()
        c_in, length = 1, k
        for i in range(d_f):
            c_out = base_filters * 2 ** i
            self._conv(f"conv{i}", c_out, c_in)
            if i == 0:
                self._bn("bn0", c_out)
            c_in, length = c_out, (length - 1) // 2 + 1
        self._conv("out", 1, c_in)
        self.final_length = length
        if head == "dense":
            self._dense("head", 1, length)

    def forward(self, x, training=True, update_stats=True) -> Tensor:
        x = _as_rows(x)
        if x.shape[1] != self.k:
            raise ValueError(f"discriminator expects {self.k} features, got {x.shape[1]}")
        h = x.reshape(x.shape[0], 1, self.k)
        for i in range(self.d_f):
            h = self.conv(f"conv{i}", h, padding=1, stride=2)
            if i == 0:
                h = self.bn("bn0", h, training, update_stats)
            h = leaky_relu(h, self.alpha)
        h = self.conv("out", h).reshape(x.shape[0], self.final_length)
        if self.head == "dense":
            v = self.dense("head", h).reshape(x.shape[0])
        else:
            v = h.mean(axis=1)
        return tanh(v)


class ClassifierNet(_Net):
    """Residual conv stack with ``c_f`` filters followed by a dense logit layer."""

    def __init__(self, k: int, n_classes: int = 6, n_blocks: int = 2, c_f: int = 32,
                 alpha: float = 0.2, head: str = "flatten", rng: np.random.Generator | None = None):
        super().__init__(rng if rng is not None else np.random.default_rng(0), alpha)
        if head not in ("flatten", "avgpool"):
            raise ValueError(f"unknown classifier head {head!r}")
        if n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        self.k, self.n_classes, self.n_blocks, self.c_f, self.head = k, n_classes, n_blocks, c_f, head
        self.output_shape = (n_classes,)
        self._conv("lift", c_f, 1)
        self._register_stack(n_blocks, c_f)
        self._dense("head", n_classes, c_f * k if head == "flatten" else c_f)

    def forward(self, x, training=True, update_stats=True) -> Tensor:
        x = _as_rows(x)
        if x.shape[1] != self.k:
            raise ValueError(f"classifier expects {self.k} features, got {x.shape[1]}")
        h = leaky_relu(self.conv("lift", x.reshape(x.shape[0], 1, self.k)), self.alpha)
        h = self.residual_stack(h, self.n_blocks, training, update_stats)
        h = h.reshape(x.shape[0], self.c_f * self.k) if self.head == "flatten" else h.mean(axis=2)
        return self.dense("head", h)


# -- losses --------------------------------------------------------------

def one_hot(labels, n_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim == 2:
        return y.astype(np.float64)
    y = y.astype(np.int64)
    bad = np.flatnonzero((y < 0) | (y >= n_classes))
    if bad.size:
        raise ValueError(f"label {y[bad[0]]} at row {bad[0]} outside vocabulary 0..{n_classes - 1}")
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def discriminator_loss(D: DiscriminatorNet, x_t, x_fake, update_stats: bool = True) -> Tensor:
    """Least-squares validity loss against smoothed targets 0.9 (real) and -1 (fake).

    ``x_fake`` is treated as data: no gradient reaches the generator.
    """
    x_t = np.asarray(x_t.data if isinstance(x_t, Tensor) else x_t, dtype=np.float64)
    x_fake = np.asarray(x_fake.data if isinstance(x_fake, Tensor) else x_fake, dtype=np.float64)
    m = len(x_t)
    if m == 0 or len(x_fake) == 0:
        raise ValueError("discriminator_loss on an empty batch")
    if len(x_fake) != m:
        raise ValueError(f"real and fake batches differ in size: {m} vs {len(x_fake)}")
    v = D(np.concatenate([x_t, x_fake]), update_stats=update_stats)
    return mse(v[:m], np.full(m, REAL_LABEL)) + mse(v[m:], np.full(m, FAKE_LABEL))


def classifier_loss(C: ClassifierNet, x_s, y_s, x_fake, update_stats: bool = True) -> Tensor:
    """Cross-entropy of C on the source batch plus on the generated batch, same labels."""
    x_s = np.asarray(x_s, dtype=np.float64)
    x_fake = np.asarray(x_fake.data if isinstance(x_fake, Tensor) else x_fake, dtype=np.float64)
    y = one_hot(y_s, C.n_classes)
    m = len(x_s)
    logits = C(np.concatenate([x_s, x_fake]), update_stats=update_stats)
    return softmax_cross_entropy(logits[:m], y) + softmax_cross_entropy(logits[m:], y)


def generator_loss(G: GeneratorNet, D: DiscriminatorNet, C: ClassifierNet, x_s, y_s, z,
                   lambda_adv: float, lambda_cls: float, x_t=None) -> tuple[Tensor, Tensor, Tensor]:
    """Weighted adversarial plus classification loss of the generated batch.

    D and C are frozen for the evaluation and their batch-norm running
    statistics are left untouched. When ``x_t`` is given, D and C see the
    same batch composition they were trained on (real/source rows stacked
    with the generated rows); only the generated half enters the loss.

    Returns ``(total, adversarial_term, classification_term)``.
    """
    x_s = np.asarray(x_s, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x_s.shape != z.shape:
        raise ValueError(f"noise shape {z.shape} does not match source batch {x_s.shape}")
    y = one_hot(y_s, C.n_classes)
    m = len(x_s)
    x_fake = G(x_s + z)
    with D.params.frozen(), C.params.frozen():
        if x_t is None:
            v = D(x_fake, update_stats=False)
        else:
            v = D(concat([np.asarray(x_t, dtype=np.float64), x_fake]), update_stats=False)[m:]
        logits = C(concat([x_s, x_fake]), update_stats=False)[m:]
        adv = mse(v, np.full(m, REAL_LABEL))
        cls = softmax_cross_entropy(logits, y)
    return lambda_adv * adv + lambda_cls * cls, adv, cls


def generate(G: GeneratorNet, x_s, z=None, training: bool = False) -> np.ndarray:
    """Forward pass on ``x_s + z`` without recording a graph."""
    x_s = np.asarray(x_s, dtype=np.float64)
    if z is None:
        z = np.zeros_like(x_s)
    z = np.asarray(z, dtype=np.float64)
    if x_s.shape != z.shape:
        raise ValueError(f"noise shape {z.shape} does not match source batch {x_s.shape}")
    with G.params.frozen():
        return G(x_s + z, training=training, update_stats=False).data


class SaganModel:
    """The three networks, their optimizer states and the config that built them."""

    def __init__(self, k: int, n_classes: int, config: SaganConfig | None = None,
                 d_head: str = "dense", c_head: str = "flatten"):
        self.config = config or SaganConfig()
        cfg = self.config
        self.k, self.n_classes = k, n_classes
        self.d_head, self.c_head = d_head, c_head
        rng = np.random.default_rng([cfg.seed, 1])
        self.G = GeneratorNet(k, cfg.n_blocks, cfg.g_f, cfg.noise_sigma, cfg.leaky_alpha, rng=rng)
        self.D = DiscriminatorNet(k, cfg.d_f, cfg.d_base_filters, cfg.leaky_alpha, head=d_head, rng=rng)
        self.C = ClassifierNet(k, n_classes, cfg.n_blocks, cfg.c_f, cfg.leaky_alpha, head=c_head, rng=rng)
        self.opt = {"D": cfg.optimizer("d"), "C": cfg.optimizer("c"), "G": cfg.optimizer("g")}

    @property
    def nets(self) -> dict[str, _Net]:
        return {"G": self.G, "D": self.D, "C": self.C}

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for tag, net in self.nets.items():
            out.update({f"{tag}/{n}": a for n, a in net.params.state_dict().items()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for tag, net in self.nets.items():
            prefix = f"{tag}/"
            net.params.load_state_dict({n[len(prefix):]: a for n, a in state.items() if n.startswith(prefix)})

    def save(self, path, extra: dict[str, np.ndarray] | None = None, meta: dict | None = None) -> None:
        """Write the container and a ``.manifest`` text file beside it."""
        path = Path(path)
        arrays = self.state_dict()
        arrays.update(extra or {})
        info = {"k": self.k, "n_classes": self.n_classes, "d_head": self.d_head, "c_head": self.c_head}
        info.update(meta or {})
        container.save(path, arrays, info)
        manifest = self.config.to_manifest() + "".join(f"# {k}={info[k]}\n" for k in sorted(info))
        container.atomic_write_text(path.with_name(path.name + ".manifest"), manifest)

    @classmethod
    def load(cls, path) -> tuple["SaganModel", dict[str, np.ndarray], dict]:
        path = Path(path)
        arrays, meta = container.load(path)
        config = SaganConfig.from_manifest(path.with_name(path.name + ".manifest").read_text())
        model = cls(int(meta["k"]), int(meta["n_classes"]), config,
                    d_head=meta.get("d_head", "dense"), c_head=meta.get("c_head", "flatten"))
        own = {n: a for n, a in arrays.items() if n[:2] in ("G/", "D/", "C/")}
        model.load_state_dict(own)
        extra = {n: a for n, a in arrays.items() if n not in own}
        return model, extra, meta
