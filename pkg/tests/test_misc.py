import math
import os

import numpy as np
import pytest

import bpre
from bpre.misc import bonferroni_band, ext_str, golden_section, parse_grid, parse_int_list


def test_golden_section():
    assert golden_section(lambda x: (x - 0.3) ** 2, 0.0, 1.0) == pytest.approx(0.3, abs=1e-8)
    # boundary minimum is returned exactly
    assert golden_section(lambda x: x, 0.0, 1.0) == 0.0
    assert golden_section(lambda x: -x, 0.0, 1.0) == 1.0
    assert golden_section(lambda x: math.inf if x > 0.5 else 1 - x, 0.0, 1.0) == pytest.approx(0.5, abs=1e-8)


def test_check():
    assert bpre.Check.from_margin('a', 0.0).passed
    assert bpre.Check.from_margin('a', -1e-3).status is bpre.Status.FAIL
    skipped = bpre.Check.skipped('b', 'guard')
    assert skipped.status is bpre.Status.SKIPPED
    assert math.isnan(skipped.margin)


def test_bonferroni_band():
    assert bonferroni_band(1) == pytest.approx(2.5758, abs=1e-4)
    assert bonferroni_band(12) == pytest.approx(3.34, abs=0.01)
    assert bonferroni_band(12, family=0.05) < bonferroni_band(12)
    bands = [bonferroni_band(count) for count in (1, 3, 12, 100)]
    assert bands == sorted(bands)
    for count, family in ((0, 0.01), (3, 0.0), (3, 1.0)):
        with pytest.raises(ValueError):
            bonferroni_band(count, family)


def test_parse_grid():
    assert parse_grid('0:1:0.25') == pytest.approx(np.array([0.0, 0.25, 0.5, 0.75, 1.0]))
    assert parse_grid('0.5:0.5:1').size == 1
    for text in ('0:1', '1:0:0.1', '0:1:0', 'a:b:c'):
        with pytest.raises(ValueError):
            parse_grid(text)


def test_parse_int_list():
    assert parse_int_list('10,20, 40,') == [10, 20, 40]


def test_ext_str():
    assert ext_str(math.inf) == 'inf'
    assert ext_str(0.5) == '0.5'


def test_tables(temp_dir):
    file_path = os.path.join(temp_dir, 'table.csv')
    bpre.write_csv(file_path, ('t', 'f'), [{'t': '0.0', 'f': '1.5'}, {'t': '1.0', 'f': 'inf'}])
    with open(file_path) as f:
        assert f.read() == 't,f\n0.0,1.5\n1.0,inf\n'

    table = bpre.read_table(file_path, bpre.PATH_COLUMNS)
    assert list(table['t']) == [0.0, 1.0]
    assert math.isinf(table['f'][1])

    with pytest.raises(ValueError):
        bpre.read_table(file_path, bpre.RATE_COLUMNS)
    with pytest.raises(ValueError):
        bpre.read_table(os.path.join(temp_dir, 'missing.csv'), bpre.PATH_COLUMNS)

    bpre.write_csv(file_path, ('t', 'f'), [])
    with pytest.raises(ValueError):
        bpre.read_table(file_path, bpre.PATH_COLUMNS)
