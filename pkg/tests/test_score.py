import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from safaudit import rng as rngmod
from safaudit.checkpoint import from_checkpoint, to_checkpoint
from safaudit.errors import ConfigError, TrainingError
from safaudit.score import (EmpiricalOracle, MlpScore, TrainConfig, dsm_loss, oracle_divergence,
                            oracle_score, train_score)
from safaudit.sde import SdeSpec, marginal_params

from conftest import mixture_logpdf


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_single_point_score(ve, rng):
    x0 = np.array([0.3, -0.2])
    o = EmpiricalOracle(x0[None], ve, tau=0.1)
    x = rng.standard_normal(2)
    for t in (0.0, 0.3, 1.0):
        p = marginal_params(ve, t)
        assert np.allclose(oracle_score(o, x, t), (p.mean_scale * x0 - x) / (p.variance + 0.1), rtol=1e-12)


def test_symmetric_pair_zero(ve):
    o = EmpiricalOracle(np.array([[-1.0], [1.0]]), ve)
    assert np.allclose(oracle_score(o, np.zeros(1), 0.4), 0.0, atol=1e-14)


def test_empty_dataset_rejected(ve):
    with pytest.raises(ConfigError):
        EmpiricalOracle(np.zeros((0, 2)), ve)


@pytest.mark.parametrize("kind", ["VE", "SubVP"])
def test_score_matches_fd_gradient(kind, rng):
    sde = SdeSpec(kind=kind)
    data = rng.uniform(-1, 1, (3, 2))
    o = EmpiricalOracle(data, sde)
    p = marginal_params(sde, 0.5)
    for _ in range(5):
        x = p.mean_scale * data[rng.integers(3)] + np.sqrt(p.variance) * rng.standard_normal(2)
        g = fd_grad(lambda y: mixture_logpdf(y, data, p.mean_scale, p.variance)[0], x,
                    h=1e-4 * np.sqrt(p.variance))
        s = oracle_score(o, x, 0.5)
        assert np.linalg.norm(s - g) / np.linalg.norm(g) < 1e-5


def test_divergence_single_point(ve, rng):
    o = EmpiricalOracle(rng.standard_normal((1, 3)), ve, tau=0.2)
    x = rng.standard_normal((4, 3))
    V = marginal_params(ve, 0.6).variance + 0.2
    assert np.allclose(oracle_divergence(o, x, 0.6), -3 / V, rtol=1e-12)


def test_divergence_matches_fd_trace(ve, rng):
    data = rng.uniform(-1, 1, (5, 3))
    o = EmpiricalOracle(data, ve)
    t = 0.3
    V = marginal_params(ve, t).variance
    for _ in range(5):
        x = data[rng.integers(5)] + np.sqrt(V) * rng.standard_normal(3)
        h = 1e-4 * np.sqrt(V)
        tr = sum((o.score(x + h * e, t)[k] - o.score(x - h * e, t)[k]) / (2 * h)
                 for k, e in enumerate(np.eye(3)))
        assert abs(o.divergence(x, t) - tr) / abs(tr) < 1e-4


@settings(max_examples=40, deadline=None)
@given(data=arrays(np.float64, (4, 2), elements=st.floats(-2, 2)),
       x=arrays(np.float64, (2,), elements=st.floats(-5, 5)), t=st.floats(0, 1),
       tau=st.floats(0, 1))
def test_divergence_lower_bound(data, x, t, tau):
    sde = SdeSpec()
    o = EmpiricalOracle(data, sde, tau)
    V = marginal_params(sde, t).variance + tau
    assert o.divergence(x, t) >= -2 / V * (1 + 1e-9)


def test_batch_matches_rows(ve, rng):
    o = EmpiricalOracle(rng.standard_normal((6, 3)), ve)
    x = rng.standard_normal((4, 3))
    t = rng.uniform(0, 1, 4)
    batch = o.score(x, t)
    for i in range(4):
        assert np.allclose(batch[i], o.score(x[i], t[i]), rtol=1e-12)


def test_prior_score_at_t1():
    # relative error is bounded by m(1)|x_i| / |x|, so x is drawn at prior scale
    r = rngmod.stream(0, "prior_score")
    for sde, data in ((SdeSpec(), r.uniform(-0.25, 0.25, (8, 2))),
                      (SdeSpec(kind="SubVP"), r.uniform(0, 1, (8, 2)))):
        o = EmpiricalOracle(data, sde)
        std = np.sqrt(sde.prior_var)
        for _ in range(50):
            x = r.standard_normal(2)
            x *= std * r.uniform(1, 3) / np.linalg.norm(x)
            ref = -x / marginal_params(sde, 1.0).variance
            assert np.linalg.norm(o.score(x, 1.0) - ref) / np.linalg.norm(ref) < 0.01


def test_dsm_loss_zero_for_single_point(ve, rng):
    x0 = np.array([[0.5, -0.5]])
    o = EmpiricalOracle(x0, ve)
    for _ in range(5):
        assert dsm_loss(o, np.repeat(x0, 8, 0), ve, TrainConfig(), rng) < 1e-18


@pytest.mark.parametrize("mode", ["SigmaSquared", "None"])
def test_dsm_loss_nonnegative(mode, ve, rng):
    m = MlpScore.init(2, ve, 16, seed=1)
    assert dsm_loss(m, rng.standard_normal((32, 2)), ve, TrainConfig(lambda_mode=mode), rng) >= 0


def test_oracle_beats_untrained_mlps(ve):
    data = rngmod.stream(0, "mix").uniform(-1, 1, (8, 2))
    o = EmpiricalOracle(data, ve)
    batch = np.repeat(data, 512, axis=0)
    ref = dsm_loss(o, batch, ve, TrainConfig(), rngmod.stream(0, "eval"))
    for seed in range(10):
        m = MlpScore.init(2, ve, 32, seed=seed)
        assert ref <= dsm_loss(m, batch, ve, TrainConfig(), rngmod.stream(0, "eval"))


def _mixture8():
    angles = np.arange(8) * np.pi / 4
    return np.stack([np.cos(angles), np.sin(angles)], 1) * 2


def test_training_reduces_loss_over_seeds(ve):
    data = _mixture8()
    batch = np.repeat(data, 256, axis=0)
    wins = 0
    for seed in range(20):
        init = MlpScore.init(2, ve, 32, seed=seed)
        early = train_score(init, data, ve, TrainConfig(steps=10, seed=seed))
        late = train_score(init, data, ve, TrainConfig(steps=2000, seed=seed))
        e = dsm_loss(early, batch, ve, TrainConfig(), rngmod.stream(seed, "eval"))
        l = dsm_loss(late, batch, ve, TrainConfig(), rngmod.stream(seed, "eval"))
        wins += l < e
    assert wins / 20 >= 0.99


@pytest.mark.parametrize("mode", ["SigmaSquared", "None"])
@pytest.mark.parametrize("kind", ["VE", "SubVP"])
def test_backprop_matches_central_differences(mode, kind, rng):
    sde = SdeSpec(kind=kind)
    m = MlpScore.init(3, sde, 8, seed=2)
    x0 = rng.standard_normal((2, 3))
    t = np.array([0.2, 0.7])
    z = rng.standard_normal((2, 3))
    _, grads = m.loss_and_grad(x0, t, z, mode)
    h = 1e-6
    for name, p in m.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            lp, _ = m.loss_and_grad(x0, t, z, mode)
            p[idx] = old - h
            lm, _ = m.loss_and_grad(x0, t, z, mode)
            p[idx] = old
            fd = (lp - lm) / (2 * h)
            g = grads[name][idx]
            assert abs(g - fd) <= 1e-3 * max(abs(fd), 1e-4), (name, idx, g, fd)


def test_zero_steps_is_noop(ve):
    m = MlpScore.init(2, ve, 8, seed=0)
    out = train_score(m, _mixture8(), ve, TrainConfig(steps=0))
    assert all(np.array_equal(out.params[k], m.params[k]) for k in m.params)


def test_training_is_deterministic(ve):
    m = MlpScore.init(2, ve, 8, seed=0)
    a = train_score(m, _mixture8(), ve, TrainConfig(steps=50, seed=4))
    b = train_score(m, _mixture8(), ve, TrainConfig(steps=50, seed=4))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in m.params)
    assert a.loss_history == b.loss_history and len(a.loss_history) == 50


def test_training_input_untouched(ve):
    m = MlpScore.init(2, ve, 8, seed=0)
    before = copy.deepcopy(m.params)
    train_score(m, _mixture8(), ve, TrainConfig(steps=5))
    assert all(np.array_equal(before[k], m.params[k]) for k in before)


def test_nan_loss_names_step(ve):
    m = MlpScore.init(2, ve, 8, seed=0)
    with pytest.raises(TrainingError, match="step 1"):
        train_score(m, np.array([[np.nan, 0.0], [0.0, 1.0]]), ve, TrainConfig(steps=3, batch=4))


@pytest.mark.parametrize("kw", [dict(steps=-1), dict(batch=0), dict(learn_rate=0), dict(lambda_mode="x")])
def test_invalid_trainconfig(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw).validate()


def test_mlp_output_shape_and_finite(subvp, rng):
    m = MlpScore.init(5, subvp, 16, seed=0)
    s = m.score(rng.standard_normal((7, 5)), rng.uniform(0.001, 1, 7))
    assert s.shape == (7, 5) and np.all(np.isfinite(s))
    assert m.score(np.zeros(5), 0.5).shape == (5,)
    assert m.n_params == sum(p.size for p in m.params.values())


def test_checkpoint_roundtrip(ve, rng):
    import json
    o = EmpiricalOracle(rng.standard_normal((4, 3)), ve, 0.5)
    m = MlpScore.init(3, ve, 8, seed=0)
    x = rng.standard_normal((5, 3))
    for model in (o, m):
        back = from_checkpoint(json.loads(json.dumps(to_checkpoint(model))))
        assert type(back) is type(model)
        assert np.array_equal(back.score(x, 0.4), model.score(x, 0.4))


def test_oracle_checkpoint_hash_checked(ve, rng):
    doc = to_checkpoint(EmpiricalOracle(rng.standard_normal((2, 2)), ve))
    doc["weights"]["data"]["values"][0] += 1.0
    with pytest.raises(ConfigError):
        from_checkpoint(doc)
