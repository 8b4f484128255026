# -*- coding: utf-8 -*-
"""
Persistence for Experiment Artifacts
Datasets and policies as line-delimited JSON (one header line, one record per
line); results as a long-format CSV table. Nothing here overwrites a file
that already exists.
"""

import json
import os

import numpy as np
import pandas as pd

from core.types import (
    ArtifactExistsError,
    ConfigError,
    Dataset,
    DemoRecord,
    LinearPolicy,
    TabularPolicy,
    noise_from_dict,
)

RESULT_COLUMNS = ['experiment', 'algorithm', 'seed', 'iteration', 'n_demos', 'metric', 'value']


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _restore(v):
    return np.asarray(v, dtype=float) if isinstance(v, list) else v


def _open_new(path):
    """Open a fresh file for writing; refuse to touch an existing one"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    try:
        return open(path, 'x', encoding='utf-8', newline='')
    except FileExistsError:
        raise ArtifactExistsError(f"{path} already exists; choose another --out-dir") from None


def save_dataset(dataset, path):
    """Header line (env id, T, seed, noise history) then one record per line"""
    with _open_new(path) as f:
        header = {
            'type': 'dataset',
            'env_id': dataset.env_id,
            'T': dataset.horizon,
            'seed': dataset.seed,
            'noise_history': [psi.to_dict() for psi in dataset.noise_history],
            'collection_rewards': list(dataset.collection_rewards),
        }
        f.write(json.dumps(header, sort_keys=True) + '\n')
        for r in dataset.records:
            row = {
                'iteration': r.iteration,
                'trajectory_id': r.trajectory_id,
                't': r.t,
                'state': _plain(r.state),
                'label': _plain(r.label),
                'executed': _plain(r.executed),
            }
            f.write(json.dumps(row, sort_keys=True) + '\n')


def load_dataset(path):
    with open(path, encoding='utf-8') as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get('type') != 'dataset':
        raise ConfigError(f"{path} is not a dataset file")
    header = lines[0]
    records = tuple(
        DemoRecord(
            state=_restore(row['state']),
            label=_restore(row['label']),
            executed=_restore(row['executed']),
            iteration=row['iteration'],
            trajectory_id=row['trajectory_id'],
            t=row['t'],
        )
        for row in lines[1:]
    )
    return Dataset(
        records=records,
        env_id=header['env_id'],
        horizon=header['T'],
        seed=header['seed'],
        noise_history=tuple(noise_from_dict(d) for d in header['noise_history']),
        collection_rewards=tuple(header.get('collection_rewards', ())),
    )


def save_policy(policy, path, meta=None):
    with _open_new(path) as f:
        header = {'type': 'policy', 'meta': meta or {}}
        if isinstance(policy, LinearPolicy):
            header['class'] = 'linear'
            header['features'] = None if policy.features is None else list(policy.features)
            f.write(json.dumps(header, sort_keys=True) + '\n')
            for i, row in enumerate(policy.W):
                f.write(json.dumps({'row': i, 'W': row.tolist(), 'b': float(policy.b[i])}) + '\n')
        elif isinstance(policy, TabularPolicy):
            header['class'] = 'tabular'
            header['default_action'] = policy.default_action
            f.write(json.dumps(header, sort_keys=True) + '\n')
            for state in sorted(policy.table):
                f.write(json.dumps({'state': state, 'action': policy.table[state]}) + '\n')
        else:
            raise ConfigError(f"cannot serialize policy {policy!r}")


def load_policy(path):
    with open(path, encoding='utf-8') as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get('type') != 'policy':
        raise ConfigError(f"{path} is not a policy file")
    header = lines[0]
    if header['class'] == 'linear':
        features = header.get('features')
        return LinearPolicy(
            W=np.array([row['W'] for row in lines[1:]], dtype=float),
            b=np.array([row['b'] for row in lines[1:]], dtype=float),
            features=None if features is None else tuple(features),
        )
    return TabularPolicy(
        table={row['state']: row['action'] for row in lines[1:]},
        default_action=header['default_action'],
    )


class ResultsTable:
    """Append-only long-format rows; one (algorithm, seed, iteration, metric) each"""

    def __init__(self):
        self.rows = []
        self._keys = set()

    def append(self, rows):
        for row in rows:
            key = (row['experiment'], row['algorithm'], row['seed'], row['iteration'], row['metric'])
            if key in self._keys:
                raise ConfigError(f"duplicate result row {key}; algorithm names must be unique")
            self._keys.add(key)
            self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=RESULT_COLUMNS)

    def write(self, path):
        """UTF-8, header row, '.' decimals, rows in insertion order"""
        with _open_new(path) as f:
            self.to_frame().to_csv(f, index=False, lineterminator='\n', float_format='%.17g')


def read_results(path):
    return pd.read_csv(path)
