"""Mini-batch adversarial training: discriminator, then classifier, then generator.

Each sub-step updates exactly one network; the other two are frozen and
their parameter digests are verified before and after the update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import container
from .distance import w1_estimate
from .domain import Domain
from .model import (ClassifierNet, SaganConfig, SaganModel, classifier_loss, discriminator_loss,
                    generate, generator_loss, one_hot)
from .optim import optimizer_step
from .tensor import softmax_cross_entropy

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6
LOSS_KEYS = ("d", "c", "g_adv", "g_cls", "g")


class TrainingDiverged(FloatingPointError):
    pass


class FreezeViolation(RuntimeError):
    pass


@dataclass
class TrainState:
    seed: int = 0
    epoch: int = 0
    batch: int = 0
    history: dict[str, list[float]] = field(default_factory=lambda: {k: [] for k in LOSS_KEYS})
    scores: list[float] = field(default_factory=list)  # scores[0] is the untrained generator
    best_score: float = math.inf
    best_epoch: int = 0
    best_checkpoint: dict | None = None
    degraded: bool = False
    diagnostic: str = ""

    @property
    def initial_score(self) -> float:
        return self.scores[0] if self.scores else math.nan

    def record(self, losses: dict[str, float]) -> None:
        for k in LOSS_KEYS:
            self.history[k].append(losses[k])
        self.batch += 1


def _cycled(n: int, total: int, rng: np.random.Generator) -> np.ndarray:
    reps = -(-total // n)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:total]


def make_batches(source: Domain, target: Domain, m: int, seed=0, epoch: int = 0
                 ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """One epoch of ``(x_s, y_s, x_t)`` triples of exactly ``m`` rows each.

    Both domains are shuffled independently; the shorter one is cycled so
    the epoch has ``ceil(max(n_s, n_t) / m)`` batches.
    """
    ns, nt = len(source), len(target)
    if ns == 0 or nt == 0:
        raise ValueError("cannot batch an empty domain")
    if m < 1 or m > max(ns, nt):
        raise ValueError(f"batch size {m} exceeds both domain sizes ({ns}, {nt})")
    if source.labels is None:
        raise ValueError("source domain must be labeled")
    n_batches = -(-max(ns, nt) // m)
    rng = np.random.default_rng([int(seed), 3, int(epoch)])
    si = _cycled(ns, n_batches * m, rng)
    ti = _cycled(nt, n_batches * m, rng)
    for b in range(n_batches):
        s = si[b * m:(b + 1) * m]
        t = ti[b * m:(b + 1) * m]
        yield source.features[s], source.labels[s], target.features[t]


def _check_loss(value: float, step: str, batch_index: int) -> float:
    if not math.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
        raise TrainingDiverged(f"{step} step produced loss {value!r} at batch {batch_index}")
    return value


def _guarded(model: SaganModel, updated: str, fn):
    others = {k: net.params.digest() for k, net in model.nets.items() if k != updated}
    frozen = [net.params for k, net in model.nets.items() if k != updated]
    with frozen[0].frozen(), frozen[1].frozen():
        out = fn()
    for k, before in others.items():
        if model.nets[k].params.digest() != before:
            raise FreezeViolation(f"{k} changed during the {updated} update")
    return out


def train_step(batch, model: SaganModel, config: SaganConfig | None = None,
               rng: np.random.Generator | None = None, batch_index: int = 0) -> dict[str, float]:
    """Update D, then C, then G on one mini-batch. Returns the recorded losses."""
    config = config or model.config
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    x_s, y_s, x_t = batch
    G, D, C = model.G, model.D, model.C
    z = G.sample_noise(x_s.shape, rng)
    # generated batch shared by the D and C steps; G is unchanged between them
    x_fake = generate(G, x_s, z, training=True)

    def d_step():
        D.params.zero_grad()
        loss = discriminator_loss(D, x_t, x_fake)
        _check_loss(loss.item(), "discriminator", batch_index)
        loss.backward()
        optimizer_step(D.params, model.opt["D"])
        return loss.item()

    def c_step():
        C.params.zero_grad()
        loss = classifier_loss(C, x_s, y_s, x_fake)
        _check_loss(loss.item(), "classifier", batch_index)
        loss.backward()
        optimizer_step(C.params, model.opt["C"])
        return loss.item()

    def g_step():
        G.params.zero_grad()
        total, adv, cls = generator_loss(G, D, C, x_s, y_s, z, config.lambda_adv, config.lambda_cls, x_t=x_t)
        _check_loss(total.item(), "generator", batch_index)
        total.backward()
        optimizer_step(G.params, model.opt["G"])
        return total.item(), adv.item(), cls.item()

    d = _guarded(model, "D", d_step)
    c = _guarded(model, "C", c_step)
    g, g_adv, g_cls = _guarded(model, "G", g_step)
    return {"d": d, "c": c, "g_adv": g_adv, "g_cls": g_cls, "g": g}


def selection_score(model: SaganModel, source: Domain, target: Domain, config: SaganConfig) -> float:
    """Estimated W1 between generated source windows and the target windows."""
    fake = generate(model.G, source.features)
    n = min(config.score_n_sub, len(fake), len(target))
    return w1_estimate(fake, target.features, n, config.score_repeats, seed=config.seed)


def fit(source: Domain, target: Domain, config: SaganConfig | None = None,
        model: SaganModel | None = None, n_classes: int | None = None,
        on_epoch: Callable[[TrainState], None] | None = None) -> tuple[ClassifierNet, TrainState]:
    """Train for ``config.epochs`` epochs and return the classifier of the best epoch.

    After every epoch the generator is scored without target labels; the
    epoch with the lowest score is restored at the end. Divergence stops
    training and restores the last good state with ``state.degraded`` set.
    """
    config = config or SaganConfig()
    if source.k != target.k:
        raise ValueError(f"feature dimension mismatch: source {source.k}, target {target.k}")
    if source.labels is None:
        raise ValueError("source domain must be labeled")
    if target.labels is not None:
        raise ValueError("target domain must be unlabeled (use Domain.as_target())")
    if model is None:
        if n_classes is None:
            n_classes = int(source.labels.max()) + 1
        model = SaganModel(source.k, n_classes, config)
    state = TrainState(seed=config.seed)
    state.scores.append(selection_score(model, source, target, config))
    last_good = model.state_dict()
    noise_rng = np.random.default_rng([config.seed, 2])
    m = min(config.batch_size, max(len(source), len(target)))

    for epoch in range(1, config.epochs + 1):
        try:
            for batch in make_batches(source, target, m, config.seed, epoch):
                state.record(train_step(batch, model, config, noise_rng, state.batch))
        except TrainingDiverged as exc:
            logger.warning("training diverged in epoch %d: %s", epoch, exc)
            state.degraded = True
            state.diagnostic = str(exc)
            model.load_state_dict(state.best_checkpoint or last_good)
            return model.C, state
        state.epoch = epoch
        score = selection_score(model, source, target, config)
        state.scores.append(score)
        last_good = model.state_dict()
        if score < state.best_score:
            state.best_score, state.best_epoch = score, epoch
            state.best_checkpoint = last_good
        if on_epoch is not None:
            on_epoch(state)
        logger.debug("epoch %d score %.4f", epoch, score)

    if state.best_checkpoint is not None:
        model.load_state_dict(state.best_checkpoint)
    return model.C, state


def fit_classifier(features, labels, n_classes: int, config: SaganConfig | None = None,
                   epochs: int | None = None) -> ClassifierNet:
    """Plain supervised training of a classifier network (no adaptation)."""
    config = config or SaganConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) < 2:
        raise ValueError("need at least two labeled rows")
    rng = np.random.default_rng([config.seed, 4])
    model = SaganModel(x.shape[1], n_classes, config)
    C, opt = model.C, model.opt["C"]
    m = min(config.batch_size, len(x))
    n_batches = -(-len(x) // m)
    for _ in range(config.epochs if epochs is None else epochs):
        order = _cycled(len(x), n_batches * m, rng)
        for b in range(n_batches):
            idx = order[b * m:(b + 1) * m]
            C.params.zero_grad()
            loss = softmax_cross_entropy(C(x[idx]), one_hot(y[idx], n_classes))
            _check_loss(loss.item(), "classifier", b)
            loss.backward()
            optimizer_step(C.params, opt)
    return C


def write_loss_trace(state: TrainState, path, header: str = "") -> None:
    lines = [f"# {header}\n"] if header else []
    lines.append("batch\t" + "\t".join(LOSS_KEYS) + "\n")
    for i in range(len(state.history["d"])):
        lines.append(f"{i}\t" + "\t".join(f"{state.history[k][i]:.10g}" for k in LOSS_KEYS) + "\n")
    container.atomic_write_text(Path(path), "".join(lines))


def write_scores(state: TrainState, path, header: str = "") -> None:
    lines = [f"# {header}\n"] if header else []
    lines.append("epoch\tselection_score\tbest\n")
    for e, s in enumerate(state.scores):
        lines.append(f"{e}\t{s:.10g}\t{int(e == state.best_epoch and e > 0)}\n")
    container.atomic_write_text(Path(path), "".join(lines))
