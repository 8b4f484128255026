# -*- coding: utf-8 -*-
import numpy as np
import pytest

from core.types import (
    ConfigError,
    Dataset,
    DemoRecord,
    EpsGreedyNoise,
    GaussianNoise,
    RngStream,
    Trajectory,
    as_control,
    noise_from_dict,
)


def _records(iteration, n, T=2):
    return tuple(DemoRecord(0, 0, 0, iteration, tid, t) for tid in range(n) for t in range(T))


def test_rng_children_are_reproducible_and_distinct():
    a = RngStream(5).child('collect', 1).generator().random(4)
    b = RngStream(5).child('collect', 1).generator().random(4)
    c = RngStream(5).child('collect', 2).generator().random(4)
    d = RngStream(6).child('collect', 1).generator().random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_rng_child_order_does_not_matter():
    root = RngStream(0)
    first = root.child('eval', 3).generator().random()
    root.child('eval', 1).generator().random()
    assert root.child('eval', 3).generator().random() == first


def test_config_error_carries_field_path():
    err = ConfigError("unknown algorithm", 'algorithms[2].kind')
    assert err.field_path == 'algorithms[2].kind'
    assert err.reason == "unknown algorithm"
    assert str(err) == "algorithms[2].kind: unknown algorithm"
    assert str(ConfigError("plain")) == "plain"


def test_as_control_canonical_forms():
    assert as_control(np.int64(3)) == 3
    np.testing.assert_array_equal(as_control(2.5), [2.5])
    np.testing.assert_array_equal(as_control([1, 2]), [1.0, 2.0])


def test_trajectory_horizon_and_key():
    tr = Trajectory(states=(0, 1, 2), controls=(3, 3))
    assert tr.horizon == 2
    assert tr.key() == (0, 3, 1, 3, 2)


def test_dataset_merge_keeps_provenance():
    first = Dataset(records=_records(1, 2), env_id='grid', horizon=2, noise_history=(EpsGreedyNoise(0.0),),
                    collection_rewards=(1.0,))
    second = Dataset(records=_records(2, 1), noise_history=(EpsGreedyNoise(0.3),), collection_rewards=(0.5,))
    merged = first.merge(second)
    assert len(merged) == 6
    assert merged.n_trajectories == 3
    assert merged.env_id == 'grid'
    assert [psi.eps for psi in merged.noise_history] == [0.0, 0.3]
    assert merged.collection_rewards == (1.0, 0.5)
    assert merged.trajectory_ids() == [(1, 0), (1, 1), (2, 0)]
    assert len(merged.select([(1, 1)])) == 2


def test_noise_dict_forms():
    psi = noise_from_dict(GaussianNoise(np.diag([1.0, 2.0])).to_dict())
    np.testing.assert_array_equal(psi.sigma, np.diag([1.0, 2.0]))
    assert noise_from_dict({'family': 'eps_greedy', 'eps': 0.25}).eps == 0.25
    with pytest.raises(ConfigError):
        noise_from_dict({'family': 'laplace'})
    with pytest.raises(ConfigError):
        EpsGreedyNoise(1.0)


def test_gaussian_noise_factor_reproduces_sigma():
    sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
    F = GaussianNoise(sigma).factor
    np.testing.assert_allclose(F @ F.T, sigma, atol=1e-12)
    singular = GaussianNoise(np.array([[1.0, 1.0], [1.0, 1.0]])).factor
    np.testing.assert_allclose(singular @ singular.T, np.ones((2, 2)), atol=1e-12)
