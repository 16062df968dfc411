import numpy as np
import pytest

from subjectgan import trainer
from subjectgan.domain import Domain
from subjectgan.model import SaganConfig, SaganModel
from subjectgan.synth import translated_pair
from subjectgan.tensor import Tensor
from subjectgan.trainer import (FreezeViolation, fit, fit_classifier, make_batches, train_step,
                                write_loss_trace, write_scores)

SMALL = dict(g_f=4, c_f=4, d_base_filters=4, d_f=2, n_blocks=1, batch_size=16)


def domains(n_s=128, n_t=128, k=8, seed=0):
    rng = np.random.default_rng(seed)
    src = Domain(rng.uniform(-0.5, 0.5, (n_s, k)), rng.integers(0, 2, n_s), "s", "source")
    tgt = Domain(rng.uniform(-0.5, 0.5, (n_t, k)), None, "t", "target")
    return src, tgt


def test_batch_count_and_sizes():
    src, tgt = domains()
    batches = list(make_batches(src, tgt, 64, seed=0))
    assert len(batches) == 2
    assert all(len(b[0]) == len(b[1]) == len(b[2]) == 64 for b in batches)
    src, tgt = domains(100, 30)
    assert len(list(make_batches(src, tgt, 16, seed=0))) == 7


def test_batches_are_deterministic_and_cover_the_source():
    src, tgt = domains(90, 40)
    a = list(make_batches(src, tgt, 32, seed=5, epoch=2))
    b = list(make_batches(src, tgt, 32, seed=5, epoch=2))
    for x, y in zip(a, b):
        for u, v in zip(x, y):
            np.testing.assert_array_equal(u, v)
    seen = {tuple(row) for batch in a for row in batch[0]}
    assert len(seen) == 90
    seen_t = {tuple(row) for batch in a for row in batch[2]}
    assert len(seen_t) == 40
    c = list(make_batches(src, tgt, 32, seed=5, epoch=3))
    assert not np.array_equal(a[0][0], c[0][0])


def test_batch_size_larger_than_both_domains_rejected():
    src, tgt = domains(10, 10)
    with pytest.raises(ValueError, match="exceeds"):
        list(make_batches(src, tgt, 11))


def test_freeze_contract_holds_over_many_steps():
    src, tgt = domains()
    cfg = SaganConfig(**SMALL)
    model = SaganModel(8, 2, cfg)
    rng = np.random.default_rng(0)
    seen = []
    original = trainer._guarded

    def spy(model_, updated, fn):
        before = {k: n.params.digest() for k, n in model_.nets.items()}
        out = original(model_, updated, fn)
        after = {k: n.params.digest() for k, n in model_.nets.items()}
        seen.append((updated, [k for k in before if before[k] != after[k]]))
        return out

    trainer._guarded = spy
    try:
        for i, batch in enumerate(make_batches(src, tgt, 16, seed=0)):
            train_step(batch, model, cfg, rng, i)
    finally:
        trainer._guarded = original
    assert [u for u, _ in seen[:3]] == ["D", "C", "G"]
    assert all(changed == [updated] for updated, changed in seen)


def test_freeze_violation_is_detected(monkeypatch):
    src, tgt = domains()
    cfg = SaganConfig(**SMALL)
    model = SaganModel(8, 2, cfg)
    real_step = trainer.optimizer_step

    def tampering_step(params, state):
        out = real_step(params, state)
        if params is model.D.params:
            model.G.params.params["offset"].data[0] += 1.0
        return out

    monkeypatch.setattr(trainer, "optimizer_step", tampering_step)
    with pytest.raises(FreezeViolation, match="G changed during the D update"):
        train_step(next(make_batches(src, tgt, 16)), model, cfg)


def test_zero_learning_rates_leave_model_unchanged():
    src, tgt = domains()
    cfg = SaganConfig(**SMALL, d_lr=0.0, c_lr=0.0, g_lr=0.0)
    model = SaganModel(8, 2, cfg)
    params = {k: {n: p.data.copy() for n, p in net.params} for k, net in model.nets.items()}
    losses = train_step(next(make_batches(src, tgt, 16)), model, cfg)
    assert set(losses) == {"d", "c", "g_adv", "g_cls", "g"}
    assert all(np.isfinite(v) for v in losses.values())
    for k, net in model.nets.items():
        for n, p in net.params:
            np.testing.assert_array_equal(p.data, params[k][n])


def test_classifier_loss_falls_on_separable_task():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 256)
    x = np.c_[np.where(y == 1, 0.5, -0.5) + 0.1 * rng.normal(size=256), 0.1 * rng.normal(size=256)]
    src = Domain(x, y, "s", "source")
    tgt = Domain(x + 0.05, None, "t", "target")
    cfg = SaganConfig(**{**SMALL, "batch_size": 32}, epochs=25)
    epochs_seen = []
    _, st = fit(src, tgt, cfg, on_epoch=lambda state: epochs_seen.append(state.epoch))
    assert epochs_seen == list(range(1, 26)) and st.batch == 200
    assert np.mean(st.history["c"][-20:]) < np.mean(st.history["c"][:5])


def test_zero_epochs_returns_initial_classifier():
    src, tgt = domains()
    cfg = SaganConfig(**SMALL, epochs=0)
    init = SaganModel(8, 2, cfg).C.params.digest()
    C, state = fit(src, tgt, cfg)
    assert C.params.digest() == init
    assert state.epoch == 0 and len(state.scores) == 1


def test_training_is_deterministic(tmp_path):
    src, tgt = domains()
    cfg = SaganConfig(**SMALL, epochs=2, seed=4)
    C1, s1 = fit(src, tgt, cfg)
    C2, s2 = fit(src, tgt, cfg)
    assert s1.history == s2.history and s1.scores == s2.scores
    assert C1.params.digest() == C2.params.digest()
    write_loss_trace(s1, tmp_path / "a.tsv", "seed=4")
    write_loss_trace(s2, tmp_path / "b.tsv", "seed=4")
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    write_scores(s1, tmp_path / "s.tsv")
    assert (tmp_path / "s.tsv").read_text().splitlines()[0] == "epoch\tselection_score\tbest"


def test_target_must_be_unlabeled_and_dimensions_match():
    src, tgt = domains()
    with pytest.raises(ValueError, match="unlabeled"):
        fit(src, src, SaganConfig(**SMALL, epochs=0))
    with pytest.raises(ValueError, match="dimension"):
        fit(src, Domain(np.zeros((10, 3)), None, "t", "target"), SaganConfig(**SMALL, epochs=0))


def test_divergence_restores_last_good_state(monkeypatch):
    src, tgt = domains()
    cfg = SaganConfig(**SMALL, epochs=3)
    calls = {"n": 0}
    real = trainer.discriminator_loss

    def flaky(*a, **kw):
        calls["n"] += 1
        loss = real(*a, **kw)
        return loss * Tensor(np.nan) if calls["n"] > 10 else loss

    monkeypatch.setattr(trainer, "discriminator_loss", flaky)
    C, state = fit(src, tgt, cfg)
    assert state.degraded and "discriminator" in state.diagnostic and "batch" in state.diagnostic
    assert state.epoch == 1
    assert np.isfinite(C.predict(src.features)).all()


def test_selection_score_falls_on_translated_subjects():
    d = translated_pair(3.0, k=16, seed=1)
    cfg = SaganConfig(g_f=16, c_f=16, epochs=25, g_lr=1e-3, d_lr=2e-3, seed=1)
    scale = 0.5 / np.abs(np.r_[d["source"].features, d["target"].features]).max()
    src = Domain(d["source"].features * scale, d["source"].labels, "s", "source")
    tgt = Domain(d["target"].features * scale, None, "t", "target")
    _, state = fit(src, tgt, cfg)
    assert state.scores[-1] < state.initial_score
    assert state.best_score <= state.scores[-1]


def test_fit_classifier_learns_separable_labels():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 3, 150)
    x = np.eye(3)[y] @ rng.normal(size=(3, 6)) * 0.5 + 0.05 * rng.normal(size=(150, 6))
    C = fit_classifier(x, y, 3, SaganConfig(**SMALL), epochs=30)
    assert (C.predict(x).argmax(1) == y).mean() > 0.9
