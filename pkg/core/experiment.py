# -*- coding: utf-8 -*-
"""
Experiment Harness

Parses YAML experiment files, fans (algorithm, seed) runs out over a thread
pool, funnels every result row through one writer, and derives curve tables
and the random-covariance ablation from the same machinery.
"""

import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
import yaml
from tqdm import tqdm

from config import (
    ALGORITHM_KINDS,
    CHECKPOINT_METRICS,
    DEFAULT_EVAL_ROLLOUTS,
    FINAL_METRICS,
    ITERATION_METRICS,
    NOISE_METRICS,
    OUTPUT_ROOT,
    PARITY_TOL,
    PRESETS,
    PRESETS_DIR,
    SHIFT_WIN_FRACTION,
    VERBOSE,
    log,
)
from core.algorithms import AlgorithmConfig, run_algorithm, run_fixed_noise
from core.environments import GridWorldEnv, LinearPointMassEnv, make_supervisor
from core.learners import RidgeLearner, TabularMajorityLearner
from core.noise import wishart_random_covariance
from core.types import ArtifactExistsError, ConfigError, GaussianNoise, RngStream
from models import ResultsTable, read_results, save_dataset, save_policy

ALL_METRICS = ITERATION_METRICS + CHECKPOINT_METRICS + NOISE_METRICS + FINAL_METRICS


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A validated experiment file"""
    experiment_id: str
    env: object
    supervisor_kind: str
    learner: object
    algorithms: tuple
    seeds: tuple
    eval_rollouts: int = DEFAULT_EVAL_ROLLOUTS
    output_dir: str = None
    subsample: int = None
    ablation: dict = field(default_factory=dict)

    def supervisor(self):
        return make_supervisor(self.env)


def resolve_config_path(name_or_path):
    """A preset name or a path to a YAML file"""
    if name_or_path in PRESETS:
        return os.path.join(PRESETS_DIR, PRESETS[name_or_path])
    if not os.path.exists(name_or_path):
        raise ConfigError(
            f"no such file or preset {name_or_path!r} (presets: {', '.join(sorted(PRESETS))})"
        )
    return name_or_path


def load_config(name_or_path):
    path = resolve_config_path(name_or_path)
    with open(path, encoding='utf-8') as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    return parse_config(raw)


def _section(raw, name, required=True):
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError("missing section", name)
        return {}
    if not isinstance(value, dict):
        raise ConfigError("must be a mapping", name)
    return value


def _number(section, key, path, default=None, cast=float):
    value = section.get(key, default)
    if value is None:
        raise ConfigError("missing value", f"{path}.{key}")
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", f"{path}.{key}") from None


def _matrix(section, key, path):
    try:
        return np.atleast_2d(np.array(section[key], dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("expected a numeric matrix", f"{path}.{key}") from None


def parse_environment(section):
    kind = section.get('kind')
    horizon = _number(section, 'horizon', 'environment', cast=int)
    if kind == 'pointmass':
        if 'A' in section:
            for key in ('B', 'Q', 'R', 'x0_mean'):
                if key not in section:
                    raise ConfigError("missing value", f"environment.{key}")
            return LinearPointMassEnv(
                A=_matrix(section, 'A', 'environment'),
                B=_matrix(section, 'B', 'environment'),
                Q=_matrix(section, 'Q', 'environment'),
                R=_matrix(section, 'R', 'environment'),
                x0_mean=np.array(section['x0_mean'], dtype=float),
                x0_std=_number(section, 'x0_std', 'environment', 0.0),
                process_noise_std=_number(section, 'process_noise_std', 'environment', 0.0),
                horizon=horizon,
            )
        return LinearPointMassEnv.double_integrator(
            axes=_number(section, 'axes', 'environment', 2, int),
            dt=_number(section, 'dt', 'environment', 0.1),
            process_noise_std=_number(section, 'process_noise_std', 'environment', 0.01),
            horizon=horizon,
            x0_mean=section.get('x0_mean'),
            x0_std=_number(section, 'x0_std', 'environment', 0.5),
            q=_number(section, 'q', 'environment', 1.0),
            r=_number(section, 'r', 'environment', 0.1),
        )
    if kind == 'gridworld':
        goal = section.get('goal')
        if not isinstance(goal, (list, tuple)) or len(goal) != 2:
            raise ConfigError("expected [x, y]", 'environment.goal')
        return GridWorldEnv(
            width=_number(section, 'width', 'environment', cast=int),
            height=_number(section, 'height', 'environment', cast=int),
            goal=tuple(int(g) for g in goal),
            slip=_number(section, 'slip', 'environment', 0.0),
            horizon=horizon,
            start_cells=section.get('start_cells'),
        )
    raise ConfigError(f"unknown environment {kind!r}, expected 'pointmass' or 'gridworld'", 'environment.kind')


def parse_learner(section, env):
    kind = section.get('kind')
    if kind == 'ridge':
        if env.is_discrete:
            raise ConfigError("ridge learner needs a continuous environment", 'learner.kind')
        features = section.get('features')
        if features is not None and any(not 0 <= int(i) < env.d_x for i in features):
            raise ConfigError(f"feature indices must lie in 0..{env.d_x - 1}", 'learner.features')
        return RidgeLearner(
            lam=_number(section, 'lambda', 'learner', 0.0),
            features=None if features is None else tuple(int(i) for i in features),
            fit_bias=bool(section.get('fit_bias', True)),
        )
    if kind == 'tabular':
        if not env.is_discrete:
            raise ConfigError("tabular learner needs a gridworld environment", 'learner.kind')
        return TabularMajorityLearner(default_action=_number(section, 'default_action', 'learner', 0, int))
    raise ConfigError(f"unknown learner {kind!r}, expected 'ridge' or 'tabular'", 'learner.kind')


def parse_algorithm(entry, index, defaults, env):
    path = f"algorithms[{index}]"
    if not isinstance(entry, dict):
        raise ConfigError("must be a mapping", path)
    kind = entry.get('kind')
    if kind not in ALGORITHM_KINDS:
        raise ConfigError(f"unknown algorithm {kind!r}, expected one of {', '.join(ALGORITHM_KINDS)}",
                          f"{path}.kind")
    if kind == 'isotropic' and env.is_discrete:
        raise ConfigError("isotropic noise needs a continuous environment", f"{path}.kind")
    alpha = entry.get('alpha', {}) or {}
    if not isinstance(alpha, dict):
        raise ConfigError("expected {mode, value}", f"{path}.alpha")
    retrain = entry.get('retrain', 'every')
    try:
        return AlgorithmConfig(
            kind=kind,
            name=entry.get('name', kind),
            iterations=_number(entry, 'iterations', path, defaults.get('iterations'), int),
            demos_per_iteration=entry.get('demos_per_iteration', defaults.get('demos_per_iteration', 1)),
            alpha_mode=alpha.get('mode', 'current'),
            alpha_value=float(alpha.get('value', 1.0)),
            beta=_number(entry, 'beta', path, defaults.get('beta', 0.5)),
            initial_noise=_number(entry, 'initial_noise', path, 0.0),
            isotropic_scale=_number(entry, 'scale', path, 1.0),
            retrain=None if retrain == 'every' else tuple(retrain),
            warm_start=bool(entry.get('warm_start', True)),
            force_zero_noise=bool(entry.get('force_zero_noise', False)),
            checkpoints=entry.get('checkpoints', defaults.get('checkpoints')),
            subsample=defaults.get('subsample'),
            eval_rollouts=defaults.get('eval_rollouts', DEFAULT_EVAL_ROLLOUTS),
        )
    except ConfigError as e:
        raise ConfigError(e.reason, f"{path}.{e.field_path}" if e.field_path else path) from None
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), path) from None


def parse_seeds(value):
    if isinstance(value, dict):
        count = int(value.get('count', 1))
        start = int(value.get('start', 0))
        seeds = tuple(range(start, start + count))
    elif isinstance(value, (list, tuple)):
        seeds = tuple(int(s) for s in value)
    elif isinstance(value, int):
        seeds = (value,)
    else:
        raise ConfigError("expected a list of seeds or {count, start}", 'seeds')
    if not seeds:
        raise ConfigError("need at least one seed", 'seeds')
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be unique", 'seeds')
    return seeds


def parse_config(raw):
    """Validate a parsed experiment mapping"""
    env = parse_environment(_section(raw, 'environment'))

    sup_kind = _section(raw, 'supervisor').get('kind')
    expected = 'scripted' if env.is_discrete else 'lqr'
    if sup_kind != expected:
        raise ConfigError(f"{'gridworld' if env.is_discrete else 'pointmass'} environments use "
                          f"the {expected!r} supervisor, got {sup_kind!r}", 'supervisor.kind')

    learner = parse_learner(_section(raw, 'learner'), env)

    eval_rollouts = raw.get('eval_rollouts', DEFAULT_EVAL_ROLLOUTS)
    if not isinstance(eval_rollouts, int) or eval_rollouts < 1:
        raise ConfigError("must be a positive integer", 'eval_rollouts')
    subsample = raw.get('subsample')
    if subsample is not None and (not isinstance(subsample, int) or subsample < 1):
        raise ConfigError("must be a positive integer", 'subsample')

    defaults = {
        'iterations': raw.get('iterations'),
        'demos_per_iteration': raw.get('demos_per_iteration', 1),
        'beta': raw.get('beta', 0.5),
        'checkpoints': raw.get('checkpoints'),
        'subsample': subsample,
        'eval_rollouts': eval_rollouts,
    }
    entries = raw.get('algorithms')
    if not isinstance(entries, list) or not entries:
        raise ConfigError("need a non-empty list", 'algorithms')
    algorithms = tuple(parse_algorithm(e, i, defaults, env) for i, e in enumerate(entries))
    names = [a.name for a in algorithms]
    if len(set(names)) != len(names):
        raise ConfigError(f"algorithm names must be unique, got {names}", 'algorithms')

    ablation = raw.get('ablation') or {}
    if not isinstance(ablation, dict):
        raise ConfigError("must be a mapping", 'ablation')

    return ExperimentConfig(
        experiment_id=str(raw.get('experiment', 'experiment')),
        env=env,
        supervisor_kind=sup_kind,
        learner=learner,
        algorithms=algorithms,
        seeds=parse_seeds(raw.get('seeds', [0])),
        eval_rollouts=eval_rollouts,
        output_dir=raw.get('output_dir'),
        subsample=subsample,
        ablation=ablation,
    )


def _output_dir(config, out_dir):
    return out_dir or config.output_dir or os.path.join(OUTPUT_ROOT, config.experiment_id)


def _run_jobs(config, jobs, runner, desc):
    """
    Run runner(job) for every job with a thread pool. Returns (results by job
    index, first failure or None); completed results survive a failure.
    """
    results = {}
    failure = None
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        futures = {executor.submit(runner, job): i for i, job in enumerate(config)}
        for future in tqdm(as_completed(futures), total=len(futures), desc=desc, disable=not VERBOSE):
            i = futures[future]
            try:
                results[i] = future.result()
            except Exception as e:
                failure = failure or e
                log('experiment', f"job {i} failed: {e}", force=True)
    return results, failure


def run_experiment(config, out_dir=None, jobs=1, seed_override=None, save_artifacts=True):
    """
    Run every (algorithm, seed) pair, write results.csv plus per-run dataset
    and policy artifacts. Returns {'success', 'results_path', 'rows', 'checks',
    'error'}; checks is empty unless bc, dart and dagger all ran on
    the point mass.
    """
    if seed_override:
        config = replace(config, seeds=parse_seeds(list(seed_override)))
    out = _output_dir(config, out_dir)
    sup = config.supervisor()
    plan = [(a, seed) for a in config.algorithms for seed in config.seeds]
    log('experiment', f"{config.experiment_id}: {len(config.algorithms)} algorithms x "
                      f"{len(config.seeds)} seeds -> {out}")

    def runner(job):
        algo, seed = job
        return run_algorithm(config.env, sup, config.learner, algo, RngStream(seed))

    results, failure = _run_jobs(plan, jobs, runner, config.experiment_id)

    table = ResultsTable()
    summary = []
    for i, (algo, seed) in enumerate(plan):
        if i not in results:
            continue
        policy, trace = results[i]
        table.append(trace.rows(config.experiment_id))
        if trace.records and trace.records[-1].evaluation is not None:
            summary.append({
                'kind': algo.kind,
                'algorithm': algo.name,
                'seed': seed,
                'shift': trace.final('shift'),
                'loss_robot': trace.final('loss_robot'),
                'first_collection_reward': trace.records[0].collection_reward,
            })
        if save_artifacts:
            stem = os.path.join(out, 'artifacts', f"{algo.name}_seed{seed}")
            save_dataset(trace.dataset, stem + '.dataset.jsonl')
            save_policy(policy, stem + '.policy.jsonl', meta={'algorithm': algo.name, 'seed': seed})

    results_path = os.path.join(out, 'results.csv')
    table.write(results_path)
    log('experiment', f"wrote {len(table)} rows to {results_path}")
    checks = _comparison_checks(pd.DataFrame(summary)) if summary and not config.env.is_discrete else []
    for check in checks:
        log('experiment', f"{check['check']}: {'holds' if check['passed'] else 'does not hold'} "
                          f"({check['detail']})", force=True)
    return {
        'success': failure is None,
        'results_path': results_path,
        'rows': len(table),
        'checks': checks,
        'error': None if failure is None else str(failure),
    }


def emit_curves(results_path, metric, out_path=None):
    """
    Mean and standard error over seeds of one metric, per algorithm and
    number of demonstrations. Writes curves_<metric>.csv beside the results.
    """
    frame = read_results(results_path)
    available = sorted(frame['metric'].unique())
    if metric not in available:
        raise ConfigError(f"unknown metric {metric!r}; available: {', '.join(available)}", 'metric')
    subset = frame[frame['metric'] == metric]
    order = list(dict.fromkeys(subset['algorithm']))
    grouped = subset.groupby(['algorithm', 'n_demos'], sort=False)['value']
    curves = grouped.agg(mean='mean', std='std', n_seeds='count').reset_index()
    curves['stderr'] = (curves['std'] / np.sqrt(curves['n_seeds'])).fillna(0.0)
    curves['algorithm'] = pd.Categorical(curves['algorithm'], categories=order, ordered=True)
    curves = curves.sort_values(['algorithm', 'n_demos'])[['algorithm', 'n_demos', 'mean', 'stderr', 'n_seeds']]
    curves['algorithm'] = curves['algorithm'].astype(str)

    if out_path is None:
        out_path = os.path.join(os.path.dirname(results_path), f"curves_{metric}.csv")
    if os.path.exists(out_path):
        raise ArtifactExistsError(f"{out_path} already exists")
    curves.to_csv(out_path, index=False, lineterminator='\n', float_format='%.17g')
    return curves.reset_index(drop=True)


def wishart_ablation(config, out_dir=None, jobs=1, seed_override=None):
    """
    Per seed: run DART, take tr of its final covariance as the matched trace,
    then inject fixed Wishart covariances at low / matched / high traces, and
    compare final shift and collection reward with DART and BC.
    """
    if config.env.is_discrete:
        raise ConfigError("the covariance ablation needs a continuous environment", 'environment.kind')
    if seed_override:
        config = replace(config, seeds=parse_seeds(list(seed_override)))
    dart = next((a for a in config.algorithms if a.kind == 'dart'), None)
    if dart is None:
        raise ConfigError("the ablation needs a 'dart' entry to match", 'algorithms')
    low = float(config.ablation.get('low_factor', 0.01))
    high = float(config.ablation.get('high_factor', 100.0))
    bc = replace(dart, kind='bc', name='bc', force_zero_noise=False)
    fixed = replace(dart, kind='isotropic', force_zero_noise=False)
    sup = config.supervisor()
    env = config.env

    def runner(seed):
        rng = RngStream(seed)
        _, dart_trace = run_algorithm(env, sup, config.learner, replace(dart, name='dart'), rng)
        _, bc_trace = run_algorithm(env, sup, config.learner, bc, rng)
        traces = [dart_trace, bc_trace]
        matched = dart_trace.records[-1].noise_level
        for label, factor in (('low', low), ('matched', 1.0), ('high', high)):
            target = matched * factor
            if target > 0:
                sigma = wishart_random_covariance(env.d_u, target, rng.child('wishart', label))
            else:
                sigma = np.zeros((env.d_u, env.d_u))
            _, trace = run_fixed_noise(env, sup, config.learner, replace(fixed, name=f"wishart-{label}"),
                                       rng, GaussianNoise(sigma))
            traces.append(trace)
        return traces

    results, failure = _run_jobs(list(config.seeds), jobs, runner, 'ablation')
    table = ResultsTable()
    summary = []
    for i, seed in enumerate(config.seeds):
        for trace in results.get(i, []):
            table.append(trace.rows(f"{config.experiment_id}-ablation"))
            summary.append({
                'algorithm': trace.algorithm,
                'seed': seed,
                'shift': trace.final('shift'),
                'collection_reward': float(np.mean([r.collection_reward for r in trace.records])),
            })

    out = os.path.join(_output_dir(config, out_dir), 'ablation')
    results_path = os.path.join(out, 'results.csv')
    table.write(results_path)
    checks = _ablation_checks(pd.DataFrame(summary)) if summary else []
    for check in checks:
        log('ablation', f"{check['check']}: {'holds' if check['passed'] else 'does not hold'} "
                        f"({check['detail']})", force=True)
    return {
        'success': failure is None,
        'results_path': results_path,
        'rows': len(table),
        'checks': checks,
        'error': None if failure is None else str(failure),
    }


def _ablation_checks(summary):
    """Directional claims: matched trace ~ DART, 100x trace hurts collection"""
    by_algo = summary.groupby('algorithm')
    shift = by_algo['shift'].agg(['mean', 'std'])
    reward = by_algo['collection_reward'].mean()
    band = shift.loc['dart', 'std'] if not np.isnan(shift.loc['dart', 'std']) else 0.0
    gap = abs(shift.loc['wishart-matched', 'mean'] - shift.loc['dart', 'mean'])
    return [
        {
            'check': 'matched trace within DART seed band',
            'passed': bool(gap <= band),
            'detail': f"|mean shift gap| {gap:.4g} vs DART std {band:.4g}",
        },
        {
            'check': 'high trace degrades collection reward below BC',
            'passed': bool(reward['wishart-high'] < reward['bc']),
            'detail': f"{reward['wishart-high']:.4g} vs BC {reward['bc']:.4g}",
        },
    ]


def _comparison_checks(summary):
    """
    Paired claims over seeds, using the first bc / dart / dagger entry: DART's
    final shift beats BC's on most seeds, DART's final robot loss matches
    DAgger's, and DART collects at least as much reward at iteration 1.
    """
    names = {}
    for kind, name in zip(summary['kind'], summary['algorithm']):
        names.setdefault(kind, name)
    if not {'bc', 'dart', 'dagger'} <= names.keys():
        return []
    per_algo = {kind: summary[summary['algorithm'] == names[kind]].set_index('seed')
                for kind in ('bc', 'dart', 'dagger')}
    bc, dart, dagger = per_algo['bc'], per_algo['dart'], per_algo['dagger']

    paired = dart.index.intersection(bc.index)
    wins = int((dart.loc[paired, 'shift'] < bc.loc[paired, 'shift']).sum())
    needed = int(np.ceil(SHIFT_WIN_FRACTION * len(paired)))
    ratio = dart['loss_robot'].mean() / dagger['loss_robot'].mean()
    first_dart = dart['first_collection_reward'].mean()
    first_dagger = dagger['first_collection_reward'].mean()
    return [
        {
            'check': 'DART shift below BC on paired seeds',
            'passed': bool(len(paired) > 0 and wins >= needed),
            'detail': f"{wins}/{len(paired)} seeds, need {needed}",
        },
        {
            'check': 'DART final robot loss matches DAgger',
            'passed': bool(abs(ratio - 1.0) <= PARITY_TOL),
            'detail': f"mean ratio {ratio:.4g}, band {PARITY_TOL:g}",
        },
        {
            'check': 'DART iteration-1 collection reward at least DAgger',
            'passed': bool(first_dart >= first_dagger),
            'detail': f"{first_dart:.4g} vs DAgger {first_dagger:.4g}",
        },
    ]
