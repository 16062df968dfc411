"""Acceptance checks. Each test prints one ``PASS``/``FAIL`` line for its criterion.

The transfer benchmarks (criteria 5 and 6) train many models and take a few
minutes on one core; everything else runs in seconds.
"""

import hashlib
import json
import math
import os
import time
from itertools import permutations
from pathlib import Path

import numpy as np
import pytest

from subjectgan import trainer
from subjectgan.bench import summarize_transfer, synthetic_transfer
from subjectgan.cli import main
from subjectgan.distance import w1_exact
from subjectgan.gradcheck import check_gradients
from subjectgan.metrics import read_confusion, weighted_f1
from subjectgan.model import (ClassifierNet, DiscriminatorNet, GeneratorNet, SaganConfig, SaganModel,
                              classifier_loss, discriminator_loss)
from subjectgan.optim import optimizer_step, sgd_momentum
from subjectgan.preprocessing import RawRecording, segment, window_geometry
from subjectgan.trainer import make_batches, train_step

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail, elapsed=None):
        timing = f" [{elapsed:.1f}s]" if elapsed is not None else ""
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}{timing}")
        assert ok, f"criterion {number}: {detail}"
    return emit


def test_criterion_1_weighted_f1_of_reference_confusion(verdict):
    t0 = time.perf_counter()
    w = weighted_f1(read_confusion(FIXTURES / "confusion_s1_to_s2.txt"))
    elapsed = time.perf_counter() - t0
    ok = abs(w - 0.718) <= 0.005 and abs(w - 0.73) <= 0.02 and elapsed < 1.0
    verdict(1, ok, f"weighted F1 {w:.5f} (want 0.718 +/- 0.005, within 0.02 of 0.73)", elapsed)


def test_criterion_2_discriminator_fixed_point(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    k = 16
    real = rng.uniform(-0.5, 0.5, (512, k))
    fake = rng.uniform(-0.5, 0.5, (512, k))  # same distribution, independent draw
    D = DiscriminatorNet(k, rng=rng)
    opt = sgd_momentum(1e-2, 0.9)
    for step in range(2000):
        i = rng.choice(512, 64, replace=False)
        j = rng.choice(512, 64, replace=False)
        D.params.zero_grad()
        discriminator_loss(D, real[i], fake[j]).backward()
        optimizer_step(D.params, opt)
    mean = float(D(np.concatenate([real, fake]), update_stats=False).data.mean())
    elapsed = time.perf_counter() - t0
    verdict(2, abs(mean + 0.05) <= 0.10 and elapsed < 60,
            f"mean D output {mean:+.4f} after 2000 steps (want -0.05 +/- 0.10)", elapsed)


def _random_gradient_case(rng):
    """One random network/loss configuration with its parameter list and loss closure."""
    k = int(rng.integers(4, 20))
    m = int(rng.integers(2, 7))
    which = ["G", "D", "C"][int(rng.integers(3))]
    pooled = bool(rng.integers(2))
    nrng = np.random.default_rng(int(rng.integers(1 << 31)))
    x_s = rng.uniform(-0.6, 0.6, (m, k))
    x_t = rng.uniform(-0.6, 0.6, (m, k))
    if which == "G":
        G = GeneratorNet(k, n_blocks=int(rng.integers(1, 3)), g_f=int(rng.integers(2, 6)), rng=nrng)
        w = rng.normal(size=(m, k))
        return which, list(G.params.params.values()), lambda: (G(x_s, update_stats=False) * w).sum()
    if which == "D":
        D = DiscriminatorNet(k, d_f=int(rng.integers(2, 5)), base_filters=int(rng.integers(2, 6)),
                             head="avgpool" if pooled else "dense",
                             rng=nrng)
        return which, list(D.params.params.values()), lambda: discriminator_loss(D, x_t, x_s, update_stats=False)
    n_cls = int(rng.integers(2, 7))
    y = rng.integers(0, n_cls, m)
    C = ClassifierNet(k, n_classes=n_cls, n_blocks=int(rng.integers(1, 3)), c_f=int(rng.integers(2, 6)),
                      head="avgpool" if pooled else "flatten", rng=nrng)
    return which, list(C.params.params.values()), lambda: classifier_loss(C, x_s, y, x_t, update_stats=False)


def test_criterion_3_gradient_suite(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, worst_case = 0.0, None
    for case in range(100):
        which, params, loss = _random_gradient_case(rng)
        err = check_gradients(loss, params, n_probe=8, rng=np.random.default_rng(case))
        if err > worst:
            worst, worst_case = err, (case, which)
    elapsed = time.perf_counter() - t0
    verdict(3, worst < 1e-3 and elapsed < 120,
            f"worst relative gradient error {worst:.2e} over 100 configurations (case {worst_case})", elapsed)


def test_criterion_4_transport_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    perms = {n: np.array(list(permutations(range(n)))) for n in range(1, 9)}
    for _ in range(200):
        n, k = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        a, b = rng.normal(size=(n, k)), rng.normal(size=(n, k)) * rng.uniform(0.5, 3)
        cost = np.sqrt(((a[:, None] - b[None]) ** 2).sum(-1))
        brute = cost[np.arange(n), perms[n]].sum(1).min() / n
        worst = max(worst, abs(w1_exact(a, b)[0] - brute))
    worst_1d = 0.0
    for _ in range(50):
        a, b = rng.normal(size=(40, 1)), rng.exponential(2.0, size=(40, 1))
        closed = np.abs(np.sort(a[:, 0]) - np.sort(b[:, 0])).mean()
        worst_1d = max(worst_1d, abs(w1_exact(a, b)[0] - closed))
    worst_tr = 0.0
    for _ in range(20):
        a, c = rng.normal(size=(30, 5)), rng.normal(size=5) * 4
        worst_tr = max(worst_tr, abs(w1_exact(a, a + c)[0] - np.linalg.norm(c)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and worst_1d <= 1e-9 and worst_tr <= 1e-9 and elapsed < 60
    verdict(4, ok, f"max |exact - brute force| {worst:.1e} (200 sets, n<=8); 1-D closed form {worst_1d:.1e}; "
                   f"translation {worst_tr:.1e}", elapsed)


@pytest.fixture(scope="module")
def large_shift():
    t0 = time.perf_counter()
    outcomes = synthetic_transfer(3.0, range(5))
    return outcomes, time.perf_counter() - t0


@pytest.fixture(scope="module")
def small_shift():
    t0 = time.perf_counter()
    outcomes = synthetic_transfer(1.5, range(5))  # same epoch budget as the large shift
    return outcomes, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_5_transfer_gain(verdict, large_shift):
    outcomes, elapsed = large_shift
    s = summarize_transfer(outcomes)
    ok = (s["sagan"] > s["no_transfer"] and s["recovered"] > 0.3
          and s["supervised"] > s["sagan"] and s["supervised"] > s["no_transfer"] and elapsed < 900)
    verdict(5, ok, f"median weighted F1 no-transfer {s['no_transfer']:.3f}, SA-GAN {s['sagan']:.3f}, "
                   f"supervised {s['supervised']:.3f}; recovered gap {s['recovered']:.2f} (want > 0.3)", elapsed)


@pytest.mark.slow
def test_criterion_6_near_supervised_on_small_shift(verdict, small_shift):
    outcomes, elapsed = small_shift
    best = max(outcomes, key=lambda o: o.ratio)
    verdict(6, best.ratio >= 0.9 and elapsed < 900,
            f"best SA-GAN / supervised ratio {best.ratio:.3f} (seed {best.seed}: {best.sagan:.3f} vs "
            f"{best.supervised:.3f}; want >= 0.9)", elapsed)


@pytest.mark.slow
def test_transfer_ordering_small_vs_large_shift(verdict, small_shift, large_shift):
    small = float(np.median([o.sagan for o in small_shift[0]]))
    large = float(np.median([o.sagan for o in large_shift[0]]))
    verdict("5b", small >= large, f"median SA-GAN weighted F1 small shift {small:.3f} >= large shift {large:.3f}")


def _state_hash(net) -> str:
    h = hashlib.sha256()
    for name, arr in sorted(net.params.state_dict().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def test_criterion_7_freeze_contract(verdict, monkeypatch):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    k = 16
    from subjectgan.domain import Domain
    src = Domain(rng.uniform(-0.5, 0.5, (160, k)), rng.integers(0, 6, 160), "s", "source")
    tgt = Domain(rng.uniform(-0.5, 0.5, (160, k)), None, "t", "target")
    cfg = SaganConfig(g_f=8, c_f=8, batch_size=16)
    model = SaganModel(k, 6, cfg)
    checks, violations = [], []
    original = trainer._guarded

    def instrumented(model_, updated, fn):
        before = {tag: _state_hash(net) for tag, net in model_.nets.items()}
        out = original(model_, updated, fn)
        after = {tag: _state_hash(net) for tag, net in model_.nets.items()}
        for tag in before:
            if tag != updated:
                checks.append(tag)
                if before[tag] != after[tag]:
                    violations.append((updated, tag))
        return out

    monkeypatch.setattr(trainer, "_guarded", instrumented)
    step_rng = np.random.default_rng(0)
    steps = 0
    for epoch in range(5):
        for batch in make_batches(src, tgt, 16, seed=0, epoch=epoch):
            if steps == 50:
                break
            train_step(batch, model, cfg, step_rng, steps)
            steps += 1
    elapsed = time.perf_counter() - t0
    ok = steps == 50 and len(checks) == 50 * 3 * 2 and not violations and elapsed < 60
    verdict(7, ok, f"{steps} steps, {len(checks)} frozen-network checks, {len(violations)} violations", elapsed)


def test_criterion_8_segmentation_arithmetic(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(1000):
        T = int(rng.integers(1, 600))
        window_s = float(rng.uniform(0.1, 6.0))
        overlap = float(rng.uniform(0.0, 0.95))
        rate = 10.0
        W, S = window_geometry(window_s, overlap, rate)
        # brute-force enumeration of window starts
        starts, s = [], 0
        while s + W <= T:
            starts.append(s)
            s += S
        rec = RawRecording(np.zeros((T, 1)), np.zeros(T, dtype=int), np.array([[-1.0, 1.0]]), rate)
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            n = len(segment(rec, window_s, overlap))
        closed = (T - W) // S + 1 if T >= W else 0
        mismatches += not (n == len(starts) == closed)
    geometry = window_geometry(3.0, 0.7, 30.0)
    elapsed = time.perf_counter() - t0
    verdict(8, mismatches == 0 and geometry == (90, 27) and elapsed < 10,
            f"{mismatches} count mismatches over 1000 triples; 3 s/30 Hz/70% -> window {geometry[0]}, "
            f"stride {geometry[1]}", elapsed)


def _pipeline(root: Path) -> bytes:
    root.mkdir(parents=True)
    cfg = root / "run.cfg"
    # a larger selection-score sample keeps epoch selection from chasing noise on this small pair
    cfg.write_text("sample_rate_hz = 10\npca_components = 16\nepochs = 15\nc_f = 8\ng_f = 8\n"
                   "score_n_sub = 256\nscore_repeats = 4\ndistance_n_sub = 64\ndistance_repeats = 2\n")
    raw, data = root / "raw", root / "data"
    assert main(["synth", "--out", str(raw), "--shifts", "0,1", "--segments", "6", "--seed", "5"]) == 0
    assert main(["preprocess", "--in", str(raw), "--channel-spec", str(raw / "channels.spec"),
                 "--label-map", str(raw / "labels.map"), "--out", str(data), "--config", str(cfg)]) == 0
    assert main(["train", "--data", str(data), "--source", "1", "--target", "2", "--config", str(cfg),
                 "--seed", "11", "--out", str(root / "m.ckpt")]) == 0
    assert main(["evaluate", "--checkpoint", str(root / "m.ckpt"), "--data", str(data), "--target", "2",
                 "--config", str(cfg), "--out", str(root / "report.json")]) == 0
    return (root / "report.json").read_bytes()


def test_criterion_9_end_to_end_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    elapsed = time.perf_counter() - t0
    f1 = json.loads(a)["weighted_f1"]
    verdict(9, a == b and elapsed < 1200,
            f"two synth->preprocess->train->evaluate runs give {'identical' if a == b else 'different'} "
            f"reports ({len(a)} bytes, weighted F1 {f1:.4f})", elapsed)


@pytest.mark.skipif(not os.environ.get("SUBJECTGAN_OPPORTUNITY_DIR"),
                    reason="dataset-gated: set SUBJECTGAN_OPPORTUNITY_DIR to the recording directory")
def test_criterion_10_recorded_dataset_matrix(verdict, tmp_path):
    raw = Path(os.environ["SUBJECTGAN_OPPORTUNITY_DIR"])
    t0 = time.perf_counter()
    data, out = tmp_path / "data", tmp_path / "matrix"
    assert main(["preprocess", "--in", str(raw), "--channel-spec", str(raw / "channels.spec"),
                 "--label-map", str(raw / "labels.map"), "--out", str(data)]) == 0
    assert main(["matrix", "--data", str(data), "--modes", "no-transfer,supervised", "--out", str(out)]) == 0
    reports = [json.loads(p.read_text()) for p in out.glob("report_*.json")]
    cells = {}
    for r in reports:
        cells.setdefault((r["source_id"], r["target_id"]), {})[r["mode"]] = r["weighted_f1"]
    drops = [c["supervised"] - c["no-transfer"] for c in cells.values()
             if not any(math.isnan(v) for v in c.values())]
    n_big = sum(d >= 0.15 for d in drops)
    verdict(10, len(cells) == 12 and n_big >= 8,
            f"{len(cells)} cells, {n_big} with a no-transfer drop of at least 15 points",
            time.perf_counter() - t0)
