"""
初期分布集合のテスト。
"""

import numpy as np
import pytest

from src.master_mfg.core.errors import DistributionError, EnvConfigurationError
from src.master_mfg.envs.exploration import make_exploration
from src.master_mfg.envs.initial import (
    InitialDistributionSet,
    inject_adhoc_team,
    make_initial_set,
    make_protocol_set,
    team_fraction,
)


@pytest.mark.parametrize(
    'kind', ['fixed_points', 'gaussians', 'random_points', 'uniform']
)
def test_members_are_valid_distributions(kind: str) -> None:
    """生成された分布が単体上にあり壁セルに質量がないことのテスト。"""
    env = make_exploration('four_rooms', 7, 7, horizon=1)
    members = make_initial_set(kind, 4, env, seed=3).members  # type: ignore[arg-type]
    blocked = ~env.state_space.admissible_mask()
    assert len(members) == 4
    for label, mu in members:
        assert label.startswith(kind)
        assert mu.sum() == pytest.approx(1.0)
        assert (mu >= 0.0).all()
        assert mu[blocked].sum() == 0.0
        assert not mu.flags.writeable


def test_deterministic_given_seed() -> None:
    """同じシードから同じ集合が生成されることのテスト。"""
    env = make_exploration('one_room', 4, 4, horizon=1)
    first = make_initial_set('gaussians', 3, env, seed=11)
    second = make_initial_set('gaussians', 3, env, seed=11)
    other = make_initial_set('gaussians', 3, env, seed=12)
    for (_, a), (_, b) in zip(first.members, second.members, strict=True):
        np.testing.assert_array_equal(a, b)
    assert any(
        not np.array_equal(a, b)
        for (_, a), (_, b) in zip(first.members, other.members, strict=True)
    )


def test_fixed_points_are_point_masses() -> None:
    """fixed_points が互いに異なる点質量になることのテスト。"""
    env = make_exploration('one_room', 3, 3, horizon=1)
    members = make_initial_set('fixed_points', 5, env, seed=0).members
    supports = {int(np.flatnonzero(mu)[0]) for _, mu in members}
    assert len(supports) == 5
    assert all(mu.max() == 1.0 for _, mu in members)
    with pytest.raises(EnvConfigurationError):
        make_initial_set('fixed_points', 10, env, seed=0)


def test_protocol_sets_are_disjoint_roles() -> None:
    """学習用と評価用の標準集合の構成と役割のテスト。"""
    env = make_exploration('one_room', 5, 5, horizon=1)
    training = make_protocol_set(env, 'training')
    testing = make_protocol_set(env, 'testing')
    assert len(training) == 5
    assert training.role == 'training'
    assert testing.role == 'testing'
    assert [label.rsplit('_', 1)[0] for label in training.labels] == [
        'fixed_points',
        'fixed_points',
        'gaussians',
        'gaussians',
        'random_points',
    ]
    with pytest.raises(ValueError):
        training.merged(testing)


def test_set_validation() -> None:
    """空集合とラベルの重複のテスト。"""
    mu = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        InitialDistributionSet(())
    with pytest.raises(ValueError):
        InitialDistributionSet((('a', mu), ('a', mu)))


def test_invalid_count() -> None:
    """count < 1 のテスト。"""
    env = make_exploration('one_room', 3, 3, horizon=1)
    with pytest.raises(EnvConfigurationError):
        make_initial_set('uniform', 0, env, seed=0)


def test_inject_adhoc_team() -> None:
    """合流後の分布が凸結合になることのテスト。"""
    mu = np.array([1.0, 0.0, 0.0])
    newcomers = np.array([0.0, 0.0, 1.0])
    joined = inject_adhoc_team(mu, newcomers, team_fraction(3, 1))
    np.testing.assert_allclose(joined, [0.75, 0.0, 0.25])
    with pytest.raises(ValueError):
        inject_adhoc_team(mu, newcomers, 1.0)
    with pytest.raises(DistributionError):
        inject_adhoc_team(mu, np.array([0.5, 0.0, 0.0]), 0.5)


def test_team_fraction() -> None:
    """新規エージェントの割合のテスト。"""
    assert team_fraction(400, 100) == 0.2
    with pytest.raises(ValueError):
        team_fraction(10, 0)
