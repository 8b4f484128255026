# -*- coding: utf-8 -*-
import os

import pandas as pd
import pytest
import yaml

from config import CHECKPOINT_METRICS, FINAL_METRICS, ITERATION_METRICS, PRESETS
from core import experiment
from core.experiment import emit_curves, load_config, parse_config, run_experiment, wishart_ablation
from core.learners import RidgeLearner, TabularMajorityLearner
from core.types import ArtifactExistsError, ConfigError

BASE = {
    'experiment': 'tiny',
    'environment': {'kind': 'pointmass', 'horizon': 5},
    'supervisor': {'kind': 'lqr'},
    'learner': {'kind': 'ridge', 'lambda': 1e-6, 'features': [0, 1]},
    'iterations': 1,
    'demos_per_iteration': 1,
    'eval_rollouts': 3,
    'seeds': [0],
    'algorithms': [{'kind': 'bc'}],
}


def _config(**overrides):
    raw = dict(BASE)
    raw.update(overrides)
    return raw


def _write(tmp_path, raw, name='exp.yaml'):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw), encoding='utf-8')
    return str(path)


def test_presets_load():
    for name in PRESETS:
        config = load_config(name)
        assert config.algorithms
    compare = load_config('pointmass-compare')
    assert [a.kind for a in compare.algorithms] == ['bc', 'dart', 'dagger', 'isotropic']
    assert len(compare.seeds) == 20
    assert compare.learner == RidgeLearner(lam=1e-6, features=(1, 2, 3), fit_bias=True)
    assert isinstance(load_config('gridworld-compare').learner, TabularMajorityLearner)


def test_annotated_example_loads():
    config = load_config(os.path.join(os.path.dirname(os.path.dirname(__file__)), 'presets', 'example.yaml'))
    assert [a.name for a in config.algorithms] == ['bc', 'dart', 'dagger', 'isotropic']


def test_unknown_algorithm_names_field():
    with pytest.raises(ConfigError) as err:
        parse_config(_config(algorithms=[{'kind': 'bc'}, {'kind': 'gail'}]))
    assert err.value.field_path == 'algorithms[1].kind'


def test_type_mismatch_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(_config(supervisor={'kind': 'scripted'}))
    assert err.value.field_path == 'supervisor.kind'
    with pytest.raises(ConfigError) as err:
        parse_config(_config(learner={'kind': 'tabular'}))
    assert err.value.field_path == 'learner.kind'


def test_missing_sections_and_seeds():
    raw = _config()
    del raw['environment']
    with pytest.raises(ConfigError) as err:
        parse_config(raw)
    assert err.value.field_path == 'environment'
    with pytest.raises(ConfigError):
        parse_config(_config(seeds=[]))
    with pytest.raises(ConfigError):
        parse_config(_config(seeds=[1, 1]))


def test_duplicate_algorithm_names():
    with pytest.raises(ConfigError):
        parse_config(_config(algorithms=[{'kind': 'bc'}, {'kind': 'bc'}]))
    config = parse_config(_config(algorithms=[{'kind': 'bc'}, {'kind': 'bc', 'name': 'bc-2'}]))
    assert [a.name for a in config.algorithms] == ['bc', 'bc-2']


def test_unknown_preset_or_path():
    with pytest.raises(ConfigError, match='presets'):
        load_config('no-such-preset')


def test_bc_single_checkpoint_block(tmp_path):
    outcome = run_experiment(parse_config(_config()), out_dir=str(tmp_path / 'out'))
    assert outcome['success']
    frame = pd.read_csv(outcome['results_path'])
    assert list(frame.columns) == ['experiment', 'algorithm', 'seed', 'iteration', 'n_demos', 'metric', 'value']
    assert len(frame) == len(ITERATION_METRICS) + len(CHECKPOINT_METRICS) + len(FINAL_METRICS)
    assert set(frame['iteration']) == {1}
    assert os.path.exists(tmp_path / 'out' / 'artifacts' / 'bc_seed0.dataset.jsonl')
    assert os.path.exists(tmp_path / 'out' / 'artifacts' / 'bc_seed0.policy.jsonl')


def test_rerun_is_byte_identical(tmp_path):
    raw = _config(iterations=2, algorithms=[{'kind': 'bc'}, {'kind': 'dart'}, {'kind': 'dagger'}], seeds=[0, 1])
    config = parse_config(raw)
    first = run_experiment(config, out_dir=str(tmp_path / 'a'), jobs=1)
    second = run_experiment(config, out_dir=str(tmp_path / 'b'), jobs=3)
    with open(first['results_path'], 'rb') as f1, open(second['results_path'], 'rb') as f2:
        assert f1.read() == f2.read()


def test_row_order_follows_config(tmp_path):
    raw = _config(algorithms=[{'kind': 'dart'}, {'kind': 'bc'}], seeds=[3, 1])
    outcome = run_experiment(parse_config(raw), out_dir=str(tmp_path / 'out'))
    frame = pd.read_csv(outcome['results_path'])
    blocks = list(dict.fromkeys(zip(frame['algorithm'], frame['seed'])))
    assert blocks == [('dart', 3), ('dart', 1), ('bc', 3), ('bc', 1)]


def test_seed_override(tmp_path):
    outcome = run_experiment(parse_config(_config()), out_dir=str(tmp_path / 'out'), seed_override=[7, 8])
    frame = pd.read_csv(outcome['results_path'])
    assert sorted(set(frame['seed'])) == [7, 8]


def test_existing_artifacts_are_not_overwritten(tmp_path):
    config = parse_config(_config())
    run_experiment(config, out_dir=str(tmp_path / 'out'))
    with pytest.raises(ArtifactExistsError):
        run_experiment(config, out_dir=str(tmp_path / 'out'))


def test_unexpected_worker_error_keeps_partial_results(tmp_path, monkeypatch):
    real = experiment.run_algorithm

    def flaky(env, sup, learner, algo, rng):
        if rng.seed == 1:
            raise ValueError("worker blew up")
        return real(env, sup, learner, algo, rng)

    monkeypatch.setattr(experiment, 'run_algorithm', flaky)
    outcome = run_experiment(parse_config(_config(seeds=[0, 1])), out_dir=str(tmp_path / 'out'))
    assert not outcome['success']
    assert 'worker blew up' in outcome['error']
    frame = pd.read_csv(outcome['results_path'])
    assert set(frame['seed']) == {0}
    assert outcome['rows'] == len(frame)


def test_gridworld_experiment(tmp_path):
    raw = _config(
        environment={'kind': 'gridworld', 'width': 3, 'height': 3, 'goal': [2, 2], 'slip': 0.1, 'horizon': 5},
        supervisor={'kind': 'scripted'},
        learner={'kind': 'tabular'},
        iterations=2,
        algorithms=[{'kind': 'bc'}, {'kind': 'dart'}, {'kind': 'dagger'}],
    )
    outcome = run_experiment(parse_config(raw), out_dir=str(tmp_path / 'out'))
    frame = pd.read_csv(outcome['results_path'])
    assert set(frame['algorithm']) == {'bc', 'dart', 'dagger'}
    assert 'noise_hat' in set(frame['metric'])
    assert outcome['checks'] == []


def _summary(shifts, losses, first_rewards):
    rows = []
    for kind in ('bc', 'dart', 'dagger'):
        for seed, (shift, loss) in enumerate(zip(shifts[kind], losses[kind])):
            rows.append({'kind': kind, 'algorithm': kind, 'seed': seed, 'shift': shift, 'loss_robot': loss,
                         'first_collection_reward': first_rewards[kind]})
    return pd.DataFrame(rows)


def test_comparison_checks_count_paired_wins():
    summary = _summary(
        shifts={'bc': [5.0, 5.0, 5.0, 5.0], 'dart': [1.0, 1.0, 1.0, 9.0], 'dagger': [2.0] * 4},
        losses={'bc': [9.0] * 4, 'dart': [1.1] * 4, 'dagger': [1.0] * 4},
        first_rewards={'bc': -3.0, 'dart': -3.0, 'dagger': -5.0},
    )
    checks = {c['check']: c for c in experiment._comparison_checks(summary)}
    assert checks['DART shift below BC on paired seeds']['passed']
    assert checks['DART shift below BC on paired seeds']['detail'].startswith('3/4 seeds')
    assert checks['DART final robot loss matches DAgger']['passed']
    assert checks['DART iteration-1 collection reward at least DAgger']['passed']


def test_comparison_checks_flag_each_failure():
    summary = _summary(
        shifts={'bc': [5.0, 5.0, 5.0, 5.0], 'dart': [1.0, 1.0, 9.0, 9.0], 'dagger': [2.0] * 4},
        losses={'bc': [9.0] * 4, 'dart': [0.5] * 4, 'dagger': [1.0] * 4},
        first_rewards={'bc': -3.0, 'dart': -6.0, 'dagger': -5.0},
    )
    assert [c['passed'] for c in experiment._comparison_checks(summary)] == [False, False, False]


def test_comparison_checks_need_all_three_kinds():
    summary = _summary(shifts={'bc': [1.0], 'dart': [0.5], 'dagger': [0.5]},
                       losses={'bc': [1.0], 'dart': [1.0], 'dagger': [1.0]},
                       first_rewards={'bc': 0.0, 'dart': 0.0, 'dagger': 0.0})
    assert experiment._comparison_checks(summary[summary['kind'] != 'dagger']) == []


def test_point_mass_run_reports_comparison_checks(tmp_path):
    raw = _config(iterations=2, algorithms=[{'kind': 'bc'}, {'kind': 'dart'}, {'kind': 'dagger'}], seeds=[0, 1])
    outcome = run_experiment(parse_config(raw), out_dir=str(tmp_path / 'out'), save_artifacts=False)
    assert len(outcome['checks']) == 3
    assert run_experiment(parse_config(_config()), out_dir=str(tmp_path / 'bc'))['checks'] == []


def test_curves_single_seed_has_zero_stderr(tmp_path):
    outcome = run_experiment(parse_config(_config(iterations=2)), out_dir=str(tmp_path / 'out'))
    curves = emit_curves(outcome['results_path'], 'n_records')
    assert list(curves.columns) == ['algorithm', 'n_demos', 'mean', 'stderr', 'n_seeds']
    assert (curves['stderr'] == 0).all()
    assert list(curves['mean']) == [5.0, 10.0]
    assert os.path.exists(tmp_path / 'out' / 'curves_n_records.csv')


def test_curves_average_over_seeds(tmp_path):
    outcome = run_experiment(parse_config(_config(seeds=[0, 1, 2])), out_dir=str(tmp_path / 'out'))
    curves = emit_curves(outcome['results_path'], 'n_records')
    assert list(curves['mean']) == [5.0]
    assert list(curves['n_seeds']) == [3]
    assert curves['stderr'][0] == 0.0


def test_curves_unknown_metric_lists_available(tmp_path):
    outcome = run_experiment(parse_config(_config()), out_dir=str(tmp_path / 'out'))
    with pytest.raises(ConfigError, match='shift'):
        emit_curves(outcome['results_path'], 'accuracy')


def test_ablation_requires_continuous_env():
    raw = _config(
        environment={'kind': 'gridworld', 'width': 3, 'height': 3, 'goal': [2, 2], 'horizon': 4},
        supervisor={'kind': 'scripted'},
        learner={'kind': 'tabular'},
        algorithms=[{'kind': 'dart'}],
    )
    with pytest.raises(ConfigError):
        wishart_ablation(parse_config(raw))


@pytest.mark.slow
def test_ablation_runs_every_variant(tmp_path):
    raw = _config(iterations=2, demos_per_iteration=2, algorithms=[{'kind': 'dart'}], seeds=[0, 1])
    outcome = wishart_ablation(parse_config(raw), out_dir=str(tmp_path / 'out'))
    assert outcome['success']
    frame = pd.read_csv(outcome['results_path'])
    assert set(frame['algorithm']) == {'dart', 'bc', 'wishart-low', 'wishart-matched', 'wishart-high'}
    assert {c['check'] for c in outcome['checks']} == {
        'matched trace within DART seed band',
        'high trace degrades collection reward below BC',
    }


@pytest.mark.slow
def test_pointmass_compare_preset_meets_comparison_claims(tmp_path):
    outcome = run_experiment(load_config('pointmass-compare'), out_dir=str(tmp_path / 'out'), jobs=4,
                             save_artifacts=False)
    assert outcome['success']
    assert len(outcome['checks']) == 3
    failed = [f"{c['check']} ({c['detail']})" for c in outcome['checks'] if not c['passed']]
    assert failed == []
