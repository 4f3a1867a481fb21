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

import csv
import logging
import os

import numpy as np

log = logging.getLogger(__name__)

RATE_COLUMNS = ('theta', 'lambda', 'chi', 'psi_direct', 'psi_piecewise')
PATH_COLUMNS = ('t', 'f')


########################################################################################################################
# Tables
########################################################################################################################

def write_csv(file_path: str, columns, rows) -> None:
    """
    Write rows (dicts) as CSV with a fixed column order

    :param file_path: Output file
    :param columns: Column names
    :param rows: Iterable of dicts
    """
    with open(file_path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_table(file_path: str, columns) -> dict:
    """
    Read numeric CSV columns, 'inf' entries become +inf

    :param file_path: Input file
    :param columns: Required column names
    """
    if not os.path.exists(file_path):
        raise ValueError("Missing input file: {}".format(file_path))
    with open(file_path, 'r', newline='') as f:
        reader = csv.DictReader(f)
        missing = set(columns) - set(reader.fieldnames or ())
        if missing:
            raise ValueError("{} lacks columns: {}".format(file_path, ', '.join(sorted(missing))))
        rows = list(reader)
    if not rows:
        raise ValueError("No rows in {}".format(file_path))
    return {name: np.array([float(row[name]) for row in rows]) for name in columns}


########################################################################################################################
# Figures
########################################################################################################################

def _pyplot():
    # headless backend, fixed ids and no timestamps so equal tables give equal files
    import matplotlib
    matplotlib.use('Agg')
    matplotlib.rcParams['svg.hashsalt'] = 'bpre'
    matplotlib.rcParams['svg.fonttype'] = 'none'
    import matplotlib.pyplot as plt
    return plt


def _save(plt, fig, file_path: str) -> None:
    fig.savefig(file_path, format='svg', metadata={'Date': None})
    plt.close(fig)
    log.debug("figure saved as %s", file_path)


def plot_rates(csv_path: str, svg_path: str) -> None:
    """
    Render Lambda, chi and psi from a rate table

    :param csv_path: Rate table written by analyze
    :param svg_path: Output SVG
    """
    table = read_table(csv_path, RATE_COLUMNS)
    theta = table['theta']
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, label, style in (('lambda', 'Lambda', '-'), ('chi', 'chi', '--'), ('psi_direct', 'psi', '-')):
        values = np.where(np.isfinite(table[name]), table[name], np.nan)
        ax.plot(theta, values, style, label=label)
    ax.set_xlabel('theta')
    ax.set_ylabel('rate')
    if theta.size > 1:
        ax.set_xlim(theta.min(), theta.max())
    ax.legend(loc='upper left')
    ax.grid(True, linewidth=0.3)
    _save(plt, fig, svg_path)


def plot_path(csv_path: str, svg_path: str) -> None:
    """
    Render the predicted path profile, a repeated t is drawn as a jump marker

    :param csv_path: Path table written by path
    :param svg_path: Output SVG
    """
    table = read_table(csv_path, PATH_COLUMNS)
    t, f = table['t'], table['f']
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, f, '-', label='f(t)')
    jumps = np.flatnonzero((np.diff(t) == 0) & (np.diff(f) != 0))
    for i in jumps:
        ax.vlines(t[i], f[i], f[i + 1], colors='C3', linestyles='dotted')
        ax.plot([t[i + 1]], [f[i + 1]], 'o', color='C3')
    ax.set_xlabel('t')
    ax.set_ylabel('log Z / n')
    ax.set_xlim(0.0, 1.0)
    ax.grid(True, linewidth=0.3)
    _save(plt, fig, svg_path)
