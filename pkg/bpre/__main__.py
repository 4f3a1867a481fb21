#!/usr/bin/env python

# Copyright 2024 The bpre Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import os
import math
import sys
import json
import logging
import argparse

import numpy as np

import bpre
from bpre.misc import Status, bonferroni_band, ext_str, parse_grid, parse_int_list
from bpre.simulate import MAX_RELATIVE_ERROR

log = logging.getLogger('bpre')

SIMULATE_COLUMNS = ('method', 'n', 'k', 'theta', 'p_hat', 'std_err', 'n_samples', 'seed', 'error_bound', 'rate')
VERIFY_COLUMNS = ('name', 'status', 'margin', 'detail')
DEFAULT_BETAS = (1.5, 2.0, 5.0)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2
EXIT_SKIPPED = 3


########################################################################################################################
# Helper Functions
########################################################################################################################
def load_model(file_path: str):
    """
    Load model file and return ModelFile object

    :param file_path: The path to model file
    """
    if file_path is None:
        raise ValueError("Model file required, use --model FILE")
    if not os.path.exists(file_path):
        raise ValueError("File doesnt exist: {}".format(file_path))
    return bpre.load_model(file_path)


def pick_beta(beta, model):
    """ Command line beta, else the tail exponent of the model file """
    if beta is None and model is not None and model.tail is not None:
        beta = model.tail.beta
    if beta is None:
        raise ValueError("Tail exponent required, use --beta B or a 'tail' block in the model file")
    if not beta > 1:
        raise ValueError("Tail exponent must satisfy beta > 1, got {}".format(beta))
    return float(beta)


def theta_values(theta, grid, env, points: int = 200):
    """ Single theta, A:B:STEP grid, or by default a uniform grid over [0, ess sup X + 2] """
    if theta is not None:
        values = np.array([theta])
    elif grid is not None:
        values = parse_grid(grid)
    else:
        values = np.linspace(0.0, max(env.x_max, 0.0) + 2.0, points)
    if values.size == 0:
        raise ValueError("Empty theta grid")
    if np.any(values < 0):
        raise ValueError("Theta values must be nonnegative")
    if np.any(np.diff(values) <= 0):
        raise ValueError("Theta grid must be strictly increasing")
    return values


def n_values(n, n_list):
    values = parse_int_list(n_list) if n_list is not None else [n]
    if not values or any(v < 1 for v in values):
        raise ValueError("Generation counts must be positive: {}".format(values))
    return values


def save_json(file_path: str, data: dict):
    with open(file_path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


########################################################################################################################
# Commands Functions
########################################################################################################################
def analyze(model_file: str, beta, theta, grid, out_dir: str):
    """
    The implementation of analyze command.

    :param model_file: Model File Path
    :param beta: Tail exponent
    :param theta: Single level
    :param grid: Theta grid A:B:STEP
    :param out_dir: Path to output directory
    """
    model = load_model(model_file)
    beta = pick_beta(beta, model)
    env = model.env
    thetas = theta_values(theta, grid, env)

    profile = bpre.rate_profile(env, beta)
    rates = bpre.lambda_rate(env, thetas)
    chis = bpre.chi(env, thetas)
    piecewise = bpre.psi_piecewise(env, beta, thetas)
    rows = []
    for i, th in enumerate(thetas):
        rows.append({
            'theta': repr(float(th)),
            'lambda': ext_str(rates[i]),
            'chi': ext_str(chis[i]),
            'psi_direct': ext_str(bpre.psi_direct(env, beta, th)),
            'psi_piecewise': ext_str(piecewise[i]),
        })

    os.makedirs(out_dir, exist_ok=True)
    bpre.write_csv(os.path.join(out_dir, 'rates.csv'), bpre.RATE_COLUMNS, rows)
    save_json(os.path.join(out_dir, 'summary.json'), profile.summary())

    print(" gamma = {:.10g}, theta* = {:.10g}, theta-dagger = {:.10g}, regime: {}".format(
        profile.gamma, profile.theta_star, profile.theta_dagger, profile.regime.value))
    print(" Rates saved into: {}".format(out_dir))


def simulate(model_file: str, beta, theta, n, n_list, replicates, seed, cap, threads, method, out_dir):
    """
    The implementation of simulate command.

    :param model_file: Model File Path
    :param beta: Tail exponent, required with theta
    :param theta: Level of the tail event Z_n >= e^(theta n), survival when None
    :param n: Generation count
    :param n_list: Comma separated generation counts
    :param replicates: Runs per estimate
    :param seed: Root seed
    :param cap: Population cap
    :param threads: Worker threads
    :param method: Estimator, 'auto' and 'tilted' tilt towards the optimal strategy at a level
    :param out_dir: Path to output directory
    """
    model = load_model(model_file)
    env = model.env
    ns = n_values(n, n_list)
    if replicates < 1:
        raise ValueError("Replicates must be at least 1, got {}".format(replicates))

    if theta is None:
        points = bpre.survival_rate_scan(env, ns, replicates, seed, method, cap, threads)
    elif method in ('auto', 'tilted'):
        points = bpre.empirical_rate_curve(env, pick_beta(beta, model), theta, ns, replicates, seed, cap, threads)
    else:
        points = bpre.level_rate_scan(env, theta, ns, replicates, seed, method, cap, threads)

    rows = []
    for point in points:
        row = point.estimate.row(theta)
        row['rate'] = ext_str(point.rate)
        rows.append(row)
        print(" n = {:4d}: p = {:.6g} +- {:.3g} ({}), rate = {}".format(
            point.n, point.estimate.p_hat, point.estimate.std_err, point.estimate.method.value, row['rate']))

    os.makedirs(out_dir, exist_ok=True)
    bpre.write_csv(os.path.join(out_dir, 'simulate.csv'), SIMULATE_COLUMNS, rows)
    print(" Estimates saved into: {}".format(out_dir))


def verify(model_file, betas, n, replicates, seed, threads, points, smoke, out_dir):
    """
    The implementation of verify command.

    :param model_file: Model File Path, bundled environments when None
    :param betas: Tail exponents
    :param n: Generations of the exact oracle
    :param replicates: Monte Carlo runs per estimate
    :param seed: Root seed
    :param threads: Worker threads
    :param points: Size of the theta grid
    :param smoke: Run the empirical convergence smoke check
    :param out_dir: Path to output directory
    :return: Exit code
    """
    if model_file is None:
        bundled = bpre.bundled_environments()
        heavy = bundled.pop('heavy_supercritical')
        cases = [(name, env, None) for name, env in bundled.items()]
    else:
        model = load_model(model_file)
        heavy = None
        cases = [(os.path.splitext(os.path.basename(model_file))[0], model.env, model.tail)]
        if betas is None and model.tail is not None:
            betas = [model.tail.beta]
    betas = list(betas) if betas else list(DEFAULT_BETAS)
    if any(not b > 1 for b in betas):
        raise ValueError("Tail exponents must satisfy beta > 1: {}".format(betas))

    # naive survival, naive moderate and tilted deep comparisons per case share one familywise budget
    band = bonferroni_band(3 * len(cases))
    log.info("statistical checks use a %.3g sigma band", band)
    checks = []
    for name, env, tail in cases:
        tag = name + ' '
        grid = np.linspace(0.0, max(env.x_max, 0.0) + 2.0, points)
        for beta in betas:
            checks += bpre.characterization_checks(env, beta, grid, tag)
        checks += bpre.beta_checks(env, betas, grid, tag)
        checks.append(bpre.Check.from_margin(tag + "drift(tilt)=theta'", tilt_margin(env)))
        checks += bpre.triangle_checks(env, n, replicates, seed, threads, tag=tag, band=band)
        if tail is not None:
            result = bpre.verify_tail_assumption(env, tail, 1000)
            checks.append(bpre.Check(tag + "tail assumption", Status.PASS if result.holds else Status.FAIL,
                                     detail="minimal d {:.6g}, violation {}".format(result.minimal_d,
                                                                                    result.violation)))
        log.info("verified %s", name)

    if model_file is None:
        checks += survival_scan_checks(bpre.bundled_environments()['galton_watson'], replicates, seed, threads)
        if smoke:
            checks += smoke_checks(heavy, replicates, seed, threads)

    rows = [{'name': c.name, 'status': c.status.value, 'margin': '' if math.isnan(c.margin) else ext_str(c.margin),
             'detail': c.detail} for c in checks]
    os.makedirs(out_dir, exist_ok=True)
    bpre.write_csv(os.path.join(out_dir, 'verify.csv'), VERIFY_COLUMNS, rows)

    failed = [c for c in checks if c.status is Status.FAIL]
    skipped = [c for c in checks if c.status is Status.SKIPPED]
    for c in failed:
        print(" FAIL: {} (margin {:.3g}) {}".format(c.name, c.margin, c.detail))
    print(" {} checks: {} passed, {} failed, {} skipped".format(
        len(checks), len(checks) - len(failed) - len(skipped), len(failed), len(skipped)))
    print(" Report saved into: {}".format(out_dir))
    if failed:
        return EXIT_FAILED
    return EXIT_SKIPPED if skipped and len(skipped) == len(checks) else EXIT_OK


def tilt_margin(env, count: int = 20) -> float:
    """ Worst 1e-8 - |drift(tilt(env, lam_theta')) - theta'| over targets inside (E[X], ess sup X) """
    lo, hi = bpre.drift(env), env.x_max
    if hi - lo <= 0:
        return 0.0
    targets = lo + (hi - lo) * np.arange(1, count + 1) / (count + 1)
    lams = bpre.tilt_parameter(env, targets)
    return min(1e-8 - abs(bpre.drift(bpre.tilt(env, lam)) - th) for lam, th in zip(lams, targets))


def survival_scan_checks(env, replicates, seed, threads) -> list:
    """ Survival decay of the pure death-or-one law, exact at n <= 4 and by Monte Carlo at n = 15 """
    gamma = bpre.gamma(env)
    exact = bpre.survival_rate_scan(env, [1, 2, 3, 4], replicates, seed, 'exact')
    checks = [bpre.Check.from_margin("galton_watson survival rate exact",
                                     1e-12 - max(abs(p.rate - gamma) for p in exact))]
    mc = bpre.survival_rate_scan(env, [15], replicates, seed, 'naive', threads=threads)[0]
    checks.append(bpre.Check.from_margin("galton_watson survival rate n=15", 0.2 * gamma - abs(mc.rate - gamma),
                                         "rate {:.6g}".format(mc.rate)))
    return checks


def smoke_checks(env, replicates, seed, threads, band: float = 2.0) -> list:
    """
    Empirical rates at n = 10, 20, 40 with theta 0.1 above the drift: the n = 40 rate within 25% of the
    direct rate from an estimate with a relative error of at most 0.3, and gaps |rate - psi| nonincreasing
    in n up to band standard errors of the rates

    :param env: Heavy-tailed supercritical environment
    :param replicates: Runs per generation count
    :param seed: Root seed
    :param threads: Worker threads
    :param band: Allowed gap increase in standard errors
    """
    beta = 2.5
    theta = bpre.drift(env) + 0.1
    psi = bpre.psi_direct(env, beta, theta)
    curve = bpre.empirical_rate_curve(env, beta, theta, [10, 20, 40], replicates, seed, threads=threads)
    gaps = [abs(p.rate - psi) for p in curve]
    # delta method: se(-(1/n) log p) = se(p) / (n p)
    spread = [p.estimate.relative_error / p.n for p in curve]
    detail = "psi={:.6g} rates={} rel_se={}".format(psi, ', '.join('{:.6g}'.format(p.rate) for p in curve),
                                                     ', '.join('{:.3g}'.format(p.estimate.relative_error)
                                                               for p in curve))
    last = curve[-1].estimate
    if last.relative_error > MAX_RELATIVE_ERROR:
        smoke = bpre.Check("heavy_supercritical smoke n=40", Status.FAIL, -math.inf, "too few hits, " + detail)
    else:
        smoke = bpre.Check.from_margin("heavy_supercritical smoke n=40", 0.25 * psi - gaps[-1], detail)
    margin = min(gaps[i] + band * math.hypot(spread[i], spread[i + 1]) - gaps[i + 1] for i in range(len(gaps) - 1))
    return [smoke, bpre.Check.from_margin("heavy_supercritical smoke gaps nonincreasing", margin, detail)]


def path(model_file, beta, theta, resolution, out_dir):
    """
    The implementation of path command.

    :param model_file: Model File Path
    :param beta: Tail exponent
    :param theta: Level
    :param resolution: Number of t samples
    :param out_dir: Path to output directory
    """
    model = load_model(model_file)
    beta = pick_beta(beta, model)
    if theta is None or theta < 0:
        raise ValueError("A nonnegative level is required, use --theta X")
    profile = bpre.path_profile(model.env, beta, theta, resolution)

    os.makedirs(out_dir, exist_ok=True)
    bpre.write_csv(os.path.join(out_dir, 'path.csv'), bpre.PATH_COLUMNS,
                   [{'t': repr(t), 'f': repr(f)} for t, f in profile.samples])
    save_json(os.path.join(out_dir, 'strategy.json'), profile.strategy.to_dict())

    print(" Strategy: {} (t = {:.6g}, s = {:.6g}, psi = {:.10g})".format(
        profile.strategy.regime.value, profile.strategy.t_theta, profile.strategy.s_theta, profile.strategy.value))
    print(" Path saved into: {}".format(out_dir))


def phase(model_file, beta, out_dir):
    """
    The implementation of phase command.

    :param model_file: Model File Path
    :param beta: Tail exponent
    :param out_dir: Path to output directory
    """
    model = load_model(model_file)
    report = bpre.phase_report(model.env, pick_beta(beta, model))

    os.makedirs(out_dir, exist_ok=True)
    save_json(os.path.join(out_dir, 'phase.json'), report.to_dict())

    for lo, hi, regime in report.intervals:
        print(" [{:.6g}, {:.6g}]: {}".format(lo, hi, regime))
    print(" {}".format(report.summary))
    print(" Phase report saved into: {}".format(out_dir))


def plot(in_dir, out_dir):
    """
    The implementation of plot command.

    :param in_dir: Directory with rates.csv and/or path.csv
    :param out_dir: Path to output directory
    """
    sources = [(name, os.path.join(in_dir, name + '.csv')) for name in ('rates', 'path')]
    sources = [(name, file) for name, file in sources if os.path.exists(file)]
    if not sources:
        raise ValueError("Neither rates.csv nor path.csv in {}".format(in_dir))

    os.makedirs(out_dir, exist_ok=True)
    for name, file in sources:
        svg = os.path.join(out_dir, name + '.svg')
        if name == 'rates':
            bpre.plot_rates(file, svg)
        else:
            bpre.plot_path(file, svg)
        print(" Plot saved as: {}".format(svg))


########################################################################################################################
# Main
########################################################################################################################
def main():
    # cli interface
    parser = argparse.ArgumentParser(
        prog="pybpre",
        description="Upper large deviations of branching processes in random environment")
    parser.add_argument('-v', '--version', action='version', version=bpre.__version__)
    parser.add_argument('-d', '--debug', action='store_true', help='Debug log output')
    subparsers = parser.add_subparsers(dest='command')

    def common(sub, model=True):
        if model:
            sub.add_argument('--model', dest='model', type=str, help='Path to model file (*.yaml)')
        sub.add_argument('--out', dest='out_dir', type=str, default='bpre_out', help='Output directory')

    # analyze command
    analyze_parser = subparsers.add_parser('analyze', help='Tabulate Lambda, chi and psi over theta')
    common(analyze_parser)
    analyze_parser.add_argument('--beta', dest='beta', type=float, help='Tail exponent')
    group = analyze_parser.add_mutually_exclusive_group()
    group.add_argument('--theta', dest='theta', type=float, help='Single level')
    group.add_argument('--theta-grid', dest='grid', type=str, help='Theta grid A:B:STEP')

    # simulate command
    simulate_parser = subparsers.add_parser('simulate', help='Estimate survival or tail probabilities')
    common(simulate_parser)
    simulate_parser.add_argument('--beta', dest='beta', type=float, help='Tail exponent')
    simulate_parser.add_argument('--theta', dest='theta', type=float, help='Level, survival when omitted')
    group = simulate_parser.add_mutually_exclusive_group()
    group.add_argument('--n', dest='n', type=int, default=10, help='Generation count')
    group.add_argument('--n-list', dest='n_list', type=str, help='Comma separated generation counts')
    simulate_parser.add_argument('--replicates', dest='replicates', type=int, default=100000, help='Runs')
    simulate_parser.add_argument('--seed', dest='seed', type=int, default=0, help='Root seed')
    simulate_parser.add_argument('--cap', dest='cap', type=int, default=bpre.DEFAULT_CAP, help='Population cap')
    simulate_parser.add_argument('--threads', dest='threads', type=int, default=1, help='Worker threads')
    simulate_parser.add_argument('--method', dest='method', type=str, default='auto',
                                 choices=['auto', 'exact', 'naive', 'tilted'], help='Estimator')

    # verify command
    verify_parser = subparsers.add_parser('verify', help='Run the verification suite')
    common(verify_parser)
    verify_parser.add_argument('--beta', dest='beta', type=float, action='append', help='Tail exponent(s)')
    verify_parser.add_argument('--n', dest='n', type=int, default=4, help='Generations of the exact oracle')
    verify_parser.add_argument('--replicates', dest='replicates', type=int, default=200000, help='Runs')
    verify_parser.add_argument('--seed', dest='seed', type=int, default=0, help='Root seed')
    verify_parser.add_argument('--threads', dest='threads', type=int, default=1, help='Worker threads')
    verify_parser.add_argument('--points', dest='points', type=int, default=200, help='Theta grid size')
    verify_parser.add_argument('--smoke', dest='smoke', action='store_true', help='Empirical convergence smoke')

    # path command
    path_parser = subparsers.add_parser('path', help='Optimal strategy and predicted path profile')
    common(path_parser)
    path_parser.add_argument('--beta', dest='beta', type=float, help='Tail exponent')
    path_parser.add_argument('--theta', dest='theta', type=float, help='Level')
    path_parser.add_argument('--resolution', dest='resolution', type=int, default=101, help='Number of t samples')

    # phase command
    phase_parser = subparsers.add_parser('phase', help='Phase transitions of psi in theta')
    common(phase_parser)
    phase_parser.add_argument('--beta', dest='beta', type=float, help='Tail exponent')

    # plot command
    plot_parser = subparsers.add_parser('plot', help='Render rates.csv and path.csv as SVG')
    common(plot_parser, model=False)
    plot_parser.add_argument('--in', dest='in_dir', type=str, help='Input directory, default the output one')

    args = parser.parse_args()
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')

    code = EXIT_OK
    try:
        if args.command == 'analyze':
            analyze(args.model, args.beta, args.theta, args.grid, args.out_dir)

        elif args.command == 'simulate':
            simulate(args.model, args.beta, args.theta, args.n, args.n_list, args.replicates, args.seed,
                     args.cap, args.threads, args.method, args.out_dir)

        elif args.command == 'verify':
            if args.replicates < 1 or args.points < 2 or args.threads < 1:
                raise ValueError("Invalid replicates, points or threads")
            code = verify(args.model, args.beta, args.n, args.replicates, args.seed, args.threads, args.points,
                          args.smoke, args.out_dir)

        elif args.command == 'path':
            path(args.model, args.beta, args.theta, args.resolution, args.out_dir)

        elif args.command == 'phase':
            phase(args.model, args.beta, args.out_dir)

        elif args.command == 'plot':
            plot(args.in_dir if args.in_dir else args.out_dir, args.out_dir)

        else:
            parser.print_help()

    except bpre.GuardError as e:
        print("[pybpre] Guard !")
        print(str(e), file=sys.stderr)
        sys.exit(EXIT_SKIPPED)

    except Exception as e:
        print("[pybpre] Execution Error !")
        print(str(e) if str(e) else "Unknown Error", file=sys.stderr)
        sys.exit(EXIT_INVALID)

    sys.exit(code)


if __name__ == '__main__':
    main()
