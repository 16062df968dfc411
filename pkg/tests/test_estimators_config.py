import numpy as np
import pytest
from sklearn.base import clone

from subjectgan import ConvNetClassifier, KNNPCAClassifier, RunConfig, SaganClassifier
from subjectgan.estimators import SCALE_TARGET, fit_feature_scale

SMALL = dict(c_f=4, g_f=4, d_f=2, n_blocks=1, batch_size=16)


def data(n=96, k=8, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, n)
    x = np.eye(3)[y] @ rng.normal(size=(3, k)) * 4 + 0.3 * rng.normal(size=(n, k))
    return x, np.array([10, 20, 30])[y]


def test_params_roundtrip_and_clone():
    est = SaganClassifier(lambda_cls=2.0, epochs=3)
    assert est.get_params()["lambda_cls"] == 2.0
    est.set_params(epochs=5)
    assert clone(est).get_params() == est.get_params()
    assert est._config().epochs == 5
    assert ConvNetClassifier(epochs=1).get_params()["epochs"] == 1
    assert KNNPCAClassifier(n_neighbors=3).get_params() == {"n_neighbors": 3, "n_components": None}


def test_sagan_classifier_fit_predict_transform():
    x, y = data()
    xt = data(seed=1)[0] + 2.0
    est = SaganClassifier(epochs=2, random_state=4, **SMALL).fit(x, y, xt)
    pred = est.predict(x)
    assert set(pred) <= {10, 20, 30} and pred.shape == (96,)
    proba = est.predict_proba(x[:5])
    np.testing.assert_allclose(proba.sum(1), 1.0)
    assert est.transform(x[:4]).shape == (4, 8)
    assert est.scale_ == pytest.approx(fit_feature_scale(x, xt))
    assert np.abs(np.r_[x, xt] * est.scale_).max() == pytest.approx(SCALE_TARGET)
    again = SaganClassifier(epochs=2, random_state=4, **SMALL).fit(x, y, xt)
    np.testing.assert_array_equal(again.predict_proba(x), est.predict_proba(x))
    with pytest.raises(ValueError, match="features"):
        est.fit(x, y, xt[:, :4])


def test_convnet_and_knn_learn_separable_data():
    x, y = data(150)
    conv = ConvNetClassifier(epochs=30, **{k: SMALL[k] for k in ("c_f", "n_blocks", "batch_size")}).fit(x, y)
    assert conv.score(x, y) > 0.9
    assert KNNPCAClassifier(n_neighbors=3).fit(x, y).score(x, y) > 0.95
    with pytest.raises(ValueError):
        KNNPCAClassifier(n_neighbors=1000).fit(x, y)


def test_unfitted_estimator_raises():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        SaganClassifier().predict(np.zeros((1, 3)))


def test_config_parse_defaults_and_digest(tmp_path):
    cfg = RunConfig.parse("# comment\nepochs = 7\nlambda_cls=2.5  # inline\n\n")
    assert cfg.epochs == 7 and cfg.lambda_cls == 2.5 and cfg.window_seconds == 3.0
    same = RunConfig.parse("lambda_cls = 2.50\nepochs=7\n")
    assert cfg.digest() == same.digest()
    assert cfg.digest() != RunConfig().digest()
    assert RunConfig.parse(cfg.canonical()) == cfg
    assert cfg.with_seed(9).seed == 9 and cfg.with_seed(None) == cfg
    assert cfg.sagan().epochs == 7 and not hasattr(cfg.sagan(), "window_seconds")
    p = tmp_path / "run.cfg"
    p.write_text("epochs = 1\nbogus = 3\n")
    with pytest.raises(KeyError, match="run.cfg:2"):
        RunConfig.load(p)
    with pytest.raises(ValueError, match=":1"):
        RunConfig.parse("epochs = many\n")
    with pytest.raises(ValueError, match="overlap"):
        RunConfig(overlap=1.0)
    with pytest.raises(FileNotFoundError):
        RunConfig.load(tmp_path / "missing.cfg")
