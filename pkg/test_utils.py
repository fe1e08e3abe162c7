"""
Tests cho utils và results_display
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from beable_models import builtin_beltrametti_bugajski, builtin_sawtooth_local, builtin_scully
from causality_audit import CausalityAuditor, SettingsGrid, check_outcome_independence
from quantum_core import singlet
from results_display import ResultsDisplay
from utils import (atomic_write_text, convert_numpy_to_list, format_number,
                   generate_angle_range, grid_points_for_step, parse_angle,
                   parse_angle_fraction, parse_angle_list, results_to_json_text,
                   table_to_csv_text)

SMALL_GRID = SettingsGrid.from_step('1/2 pi')


class TestAngleParsing:

    @pytest.mark.parametrize("text, expected", [
        ('1/4 pi', math.pi / 4), ('-pi', -math.pi), ('3pi', 3 * math.pi),
        ('pi/2', math.pi / 2), ('0.5', 0.5), (' 1/18 pi ', math.pi / 18)
    ])
    def test_parse_angle(self, text, expected):
        assert parse_angle(text) == pytest.approx(expected, abs=1e-15)

    def test_fraction_is_exact(self):
        assert parse_angle_fraction('3/4 pi') == pytest.approx(0.75)
        assert parse_angle_fraction('0.25') is None

    @pytest.mark.parametrize("text", ['abc', '1/0 pi', ''])
    def test_invalid_angle(self, text):
        with pytest.raises(ValueError):
            parse_angle(text)

    def test_angle_list(self):
        assert parse_angle_list('0,1/2 pi,1/4 pi,3/4 pi', expected=4)[3] == \
            pytest.approx(3 * math.pi / 4)
        with pytest.raises(ValueError):
            parse_angle_list('0,1', expected=4)


class TestGrids:

    def test_grid_points(self):
        assert grid_points_for_step(math.pi / 18) == 36
        assert grid_points_for_step(2 * math.pi) == 1
        for step in (0.0, -1.0, 0.5):
            with pytest.raises(ValueError):
                grid_points_for_step(step)

    def test_generate_angle_range(self):
        angles = generate_angle_range(4)
        assert np.allclose(angles, [0, math.pi / 2, math.pi, 3 * math.pi / 2])


class TestExport:

    def test_format_number(self):
        assert format_number(0.123456, 3) == '0.123'
        assert format_number(float('nan')) == 'N/A'

    def test_convert_numpy(self):
        converted = convert_numpy_to_list({'a': np.arange(2), 'b': np.float64(0.5),
                                           1: (np.int64(3),)})
        assert converted == {'a': [0, 1], 'b': 0.5, '1': [3]}

    def test_json_text_is_deterministic(self):
        first = results_to_json_text({'b': 1, 'a': np.array([1.0])}, seed=4)
        second = results_to_json_text({'a': np.array([1.0]), 'b': 1}, seed=4)
        assert first == second
        data = json.loads(first)
        assert data['metadata']['seed'] == 4
        assert 'timestamp' not in data['metadata']

    def test_atomic_write_csv(self, tmp_path):
        path = tmp_path / 'nested' / 'table.csv'
        atomic_write_text(str(path), table_to_csv_text(pd.DataFrame({'x': [0.1, 0.2]})))
        assert path.read_text(encoding='utf-8').splitlines() == ['x', '0.1', '0.2']
        assert not list(path.parent.glob('.table.csv.*'))


class TestResultsDisplay:

    def test_summary_table(self):
        matrix = CausalityAuditor(SMALL_GRID).audit_matrix(
            [builtin_scully(), builtin_sawtooth_local()], singlet())
        table = ResultsDisplay().create_summary_table(matrix)
        assert table['model'].tolist() == ['scully', 'sawtooth']
        assert table.loc[0, 'measurement-independence'] == 'violated'

    def test_witness_table(self):
        report = check_outcome_independence(builtin_beltrametti_bugajski(), singlet(), SMALL_GRID)
        table = ResultsDisplay().create_witness_table(report)
        assert len(table) == len(report.witnesses)
        assert {'phi1', 'phi2', 'deviation', 'note'} <= set(table.columns)

    def test_audit_summary_text(self):
        reports = CausalityAuditor(SMALL_GRID).audit(builtin_scully(), singlet())
        text = ResultsDisplay().format_audit_summary(reports)
        assert text.startswith("Audit of model 'scully'")
        assert 'measurement-independence' in text
        assert ResultsDisplay().format_audit_summary([]) == "No audit results"
