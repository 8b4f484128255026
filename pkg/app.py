# -*- coding: utf-8 -*-
"""
DART Imitation-Learning Harness

Subcommands:
  run <config>               run every (algorithm, seed) pair of an experiment
  oracle                     fixed-seed estimator and bound checks
  curves <results> <metric>  mean / stderr over seeds per n_demos
  ablation <config>          random-covariance ablation against DART

<config> is a YAML file or a preset name (pointmass-compare, pointmass-smoke,
gridworld-compare).
"""

import argparse
import os
import sys

# Load environment variables from .env file before config reads them
from dotenv import load_dotenv
load_dotenv()

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import DEFAULT_JOBS, log
from core import DartError
from core.experiment import emit_curves, load_config, run_experiment, wishart_ablation
from core.oracle import run_oracle_suite


def _seeds(text):
    try:
        return [int(s) for s in text.split(',') if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--out-dir', default=None, help='output directory (default: $DART_OUTPUT_ROOT/<experiment>)')
        p.add_argument('--jobs', type=int, default=DEFAULT_JOBS, help='worker threads')
        p.add_argument('--seed-override', type=_seeds, default=None, help='comma-separated seeds, e.g. 0,1,2')

    run = sub.add_parser('run', help='run an experiment')
    run.add_argument('config')
    common(run)

    oracle = sub.add_parser('oracle', help='run the oracle suite')
    oracle.add_argument('--seed', type=int, default=0)
    oracle.add_argument('--jobs', type=int, default=DEFAULT_JOBS)

    curves = sub.add_parser('curves', help='aggregate a metric into curve data')
    curves.add_argument('results')
    curves.add_argument('metric')
    curves.add_argument('--out', default=None, help='output CSV (default: curves_<metric>.csv beside results)')

    ablation = sub.add_parser('ablation', help='random-covariance ablation')
    ablation.add_argument('config')
    common(ablation)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == 'run':
            outcome = run_experiment(load_config(args.config), args.out_dir, args.jobs, args.seed_override)
            print(f"[app] {outcome['rows']} rows -> {outcome['results_path']}")
            if not outcome['success']:
                print(f"[app] error: {outcome['error']} (partial results written)")
                return 1
            return 0

        if args.command == 'oracle':
            report = run_oracle_suite(seed=args.seed, jobs=args.jobs)
            print(report.to_string(index=False))
            failed = report[~report['passed']]
            if len(failed):
                print(f"[app] {len(failed)} oracle check(s) failed: {', '.join(failed['check'])}")
                return 1
            return 0

        if args.command == 'curves':
            curves = emit_curves(args.results, args.metric, args.out)
            print(curves.to_string(index=False))
            return 0

        if args.command == 'ablation':
            outcome = wishart_ablation(load_config(args.config), args.out_dir, args.jobs, args.seed_override)
            print(f"[app] {outcome['rows']} rows -> {outcome['results_path']}")
            if not outcome['success']:
                print(f"[app] error: {outcome['error']} (partial results written)")
                return 1
            return 0
    except DartError as e:
        print(f"[app] error: {e}")
        return 2
    log('app', f"unknown command {args.command!r}", force=True)
    return 2


if __name__ == '__main__':
    sys.exit(main())
