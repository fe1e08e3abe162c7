"""
Tests cho module inequalities
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beable_models import (BeableAtom, BeableDensity, BeableModel, builtin_beltrametti_bugajski,
                           builtin_sawtooth_local, builtin_scully)
from causality_audit import random_local_model
from inequalities import (ChshAnalyzer, ChshSpec, FineJoint, IneligibleModelError,
                          chsh_bound_property, chsh_from_correlations, chsh_model,
                          chsh_model_batch, chsh_quantum, correlation_tensor,
                          deterministic_chsh_values, fine_joint_from_model,
                          fine_marginal_check, fine_target_from_model, model_chsh_sweep,
                          optimize_chsh_quantum, pairwise_tables_from_model,
                          pairwise_tables_quantum, quantum_impossibility_witness,
                          random_chsh_specs, same_party_table_from_model, tsirelson_sweep)
from quantum_core import product_z, singlet

TSIRELSON = 2 * math.sqrt(2)
angles = st.floats(min_value=0.0, max_value=2 * math.pi, allow_nan=False)


def _constant_half_model():
    def density(s1, s2, psi):
        return BeableDensity.from_atoms([BeableAtom(1.0)])

    def half(density, s, psi, outcome):
        return np.full(len(density), 0.5)

    return BeableModel.factorized('constant-half', density, half, half)


class TestChshValues:

    def test_quantum_optimum(self):
        s = chsh_quantum(singlet(), ChshSpec.optimal())
        assert s == pytest.approx(-TSIRELSON, abs=1e-12)

    def test_scully_reproduces_quantum(self):
        s = chsh_model(builtin_scully(), singlet(), ChshSpec.optimal())
        assert s == pytest.approx(-TSIRELSON, abs=1e-9)

    def test_sawtooth_saturates_local_bound(self):
        s = chsh_model(builtin_sawtooth_local(), singlet(), ChshSpec.optimal())
        assert abs(s) == pytest.approx(2.0, abs=1e-9)

    def test_equal_settings_frame(self):
        spec = ChshSpec.from_angles(0.0, 0.0, 0.0, 0.0)
        assert abs(chsh_quantum(singlet(), spec)) == pytest.approx(2.0, abs=1e-12)

    @given(angles, angles, angles, angles)
    def test_product_state_is_local(self, a, a_prime, b, b_prime):
        spec = ChshSpec.from_angles(a, a_prime, b, b_prime)
        assert abs(chsh_quantum(product_z(+1, +1), spec)) <= 2.0 + 1e-12

    def test_chsh_from_correlations(self):
        assert chsh_from_correlations({'A1B1': 1, 'A1B2': -1, 'A2B1': 1, 'A2B2': 1}) == 4.0

    def test_analyzer_rows(self):
        rows = ChshAnalyzer(singlet()).compare([builtin_scully(), builtin_sawtooth_local()])
        assert [row['model'] for row in rows] == ['quantum', 'scully', 'sawtooth']
        assert rows[0]['a_prime'] == pytest.approx(math.pi / 2)


class TestDeterministicStrategies:

    def test_sixteen_strategies_bounded_by_two(self):
        rows = deterministic_chsh_values()
        assert len(rows) == 16
        assert max(abs(row['S']) for row in rows) == 2
        assert {abs(row['S']) for row in rows} == {2}

    def test_uninformative_atom_gives_zero(self):
        fj = fine_joint_from_model(_constant_half_model(), singlet(), ChshSpec.optimal())
        assert np.allclose(fj.table, 1 / 16)
        assert fj.chsh() == pytest.approx(0.0, abs=1e-15)

    def test_random_fine_tables(self, monkeypatch):
        calls = []
        original = FineJoint.chsh

        def counting_chsh(fj):
            calls.append(fj.table.shape)
            return original(fj)

        monkeypatch.setattr(FineJoint, 'chsh', counting_chsh)
        result = chsh_bound_property(samples=10000, seed=0)
        assert result['holds']
        assert result['violations'] == 0
        assert result['max_abs_s'] <= 2.0 + 1e-9
        assert len(calls) == 10000
        assert set(calls) == {(2, 2, 2, 2)}

    def test_deterministic_tables_reach_two(self):
        result = chsh_bound_property(samples=10000, seed=1, deterministic=True)
        assert result['holds']
        assert result['deterministic']
        assert result['max_abs_s'] == pytest.approx(2.0, abs=1e-12)


class TestFineJoint:

    def test_sawtooth_joint(self):
        spec = ChshSpec.optimal()
        model = builtin_sawtooth_local()
        fj = fine_joint_from_model(model, singlet(), spec)
        assert fj.table.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.min(fj.table) >= 0.0
        check = fine_marginal_check(fj, pairwise_tables_from_model(model, singlet(), spec))
        assert check['holds']
        assert check['max_deviation'] <= 1e-9
        assert abs(fj.chsh()) <= 2.0 + 1e-9

    def test_same_side_marginal(self):
        spec = ChshSpec.optimal()
        fj = fine_joint_from_model(builtin_sawtooth_local(), singlet(), spec)
        a1a2 = fj.pair_table('A1A2')
        assert a1a2.shape == (2, 2)
        assert a1a2.sum() == pytest.approx(1.0)
        # a = 0, a' = π/2: A1 = A2 on half of the λ circle
        assert a1a2[0, 0] + a1a2[1, 1] == pytest.approx(0.5, abs=1e-12)
        target = same_party_table_from_model(builtin_sawtooth_local(), singlet(), spec)
        assert np.allclose(target, a1a2, atol=1e-12)

    def test_same_side_marginal_is_checked(self):
        spec = ChshSpec.optimal()
        model = builtin_sawtooth_local()
        fj = fine_joint_from_model(model, singlet(), spec)
        target = fine_target_from_model(model, singlet(), spec)
        assert set(target) == {'A1B1', 'A1B2', 'A2B1', 'A2B2', 'A1A2'}
        assert fine_marginal_check(fj, target)['holds']

        target['A1A2'] = np.array([[0.5, 0.0], [0.0, 0.5]])
        check = fine_marginal_check(fj, target)
        assert not check['holds']
        assert check['pairs']['A1A2']['total_variation'] == pytest.approx(0.5, abs=1e-12)
        assert check['pairs']['A1B1']['total_variation'] <= 1e-12

    def test_to_frame_layout(self):
        fj = fine_joint_from_model(_constant_half_model(), singlet(), ChshSpec.optimal())
        frame = fj.to_frame()
        assert list(frame.columns) == ['A1', 'A2', 'B1', 'B2', 'probability']
        assert len(frame) == 16
        assert frame.iloc[0][['A1', 'A2', 'B1', 'B2']].tolist() == [1, 1, 1, 1]
        assert frame.iloc[-1][['A1', 'A2', 'B1', 'B2']].tolist() == [-1, -1, -1, -1]

    def test_scully_is_ineligible(self):
        with pytest.raises(IneligibleModelError, match="measurement independence violated"):
            fine_joint_from_model(builtin_scully(), singlet(), ChshSpec.optimal())

    def test_joint_kernel_is_ineligible(self):
        with pytest.raises(IneligibleModelError, match="joint kernel is not factorized"):
            fine_joint_from_model(builtin_beltrametti_bugajski(), singlet(), ChshSpec.optimal())

    @pytest.mark.parametrize("table", [
        np.full((2, 2, 2), 1 / 8),
        np.full((2, 2, 2, 2), 1 / 8),
        np.concatenate([np.full(15, 0.1), [-0.5]]).reshape(2, 2, 2, 2),
    ])
    def test_invalid_tables_rejected(self, table):
        with pytest.raises(ValueError):
            FineJoint(table, ChshSpec.optimal())

    def test_unknown_pair_key(self):
        fj = FineJoint(np.full((2, 2, 2, 2), 1 / 16), ChshSpec.optimal())
        with pytest.raises(ValueError):
            fj.pair_table('B1B2')


class TestQuantumWitness:

    def test_sawtooth_cannot_match_quantum(self):
        fj = fine_joint_from_model(builtin_sawtooth_local(), singlet(), ChshSpec.optimal())
        witness = quantum_impossibility_witness(fj, singlet())
        assert witness['impossible']
        assert witness['certified']
        assert witness['certificate_bound'] == pytest.approx((TSIRELSON - 2) / 8)
        assert witness['max_deviation'] > 0.07
        assert witness['max_deviation'] >= witness['certificate_bound']

    def test_fine_report(self):
        fj, report = ChshAnalyzer(singlet()).fine_report(builtin_sawtooth_local())
        assert report['model'] == 'sawtooth'
        assert report['chsh'] == pytest.approx(fj.chsh())
        assert report['marginal_check']['holds']
        assert 'A1A2' in report['marginal_check']['pairs']
        assert report['quantum_witness']['certified']

    def test_quantum_target_tables(self):
        tables = pairwise_tables_quantum(singlet(), ChshSpec.optimal())
        assert set(tables) == {'A1B1', 'A1B2', 'A2B1', 'A2B2'}
        for table in tables.values():
            assert table.sum() == pytest.approx(1.0, abs=1e-12)

    def test_empty_target_rejected(self):
        fj = FineJoint(np.full((2, 2, 2, 2), 1 / 16), ChshSpec.optimal())
        with pytest.raises(ValueError):
            fine_marginal_check(fj, {})


class TestTsirelson:

    def test_correlation_tensor_of_singlet(self):
        assert np.allclose(correlation_tensor(singlet()), -np.eye(3), atol=1e-12)

    def test_random_specs_shape(self):
        specs = random_chsh_specs(5, seed=1)
        assert specs.shape == (5, 4)
        assert np.array_equal(specs, random_chsh_specs(5, seed=1))

    def test_sweep_respects_bound(self):
        result = tsirelson_sweep(singlet(), n=100000, seed=0)
        assert not result['exceeds_tsirelson']
        assert result['max_abs_s'] <= TSIRELSON + 1e-9
        assert result['max_abs_s'] > 2.0

    @settings(max_examples=50)
    @given(angles, angles, angles, angles)
    def test_sweep_values_match_oracle(self, a, a_prime, b, b_prime):
        spec = ChshSpec.from_angles(a, a_prime, b, b_prime)
        assert abs(chsh_quantum(singlet(), spec)) <= TSIRELSON + 1e-9

    def test_optimizer_reaches_tsirelson(self):
        result = optimize_chsh_quantum(singlet(), seed=0)
        assert result['abs_s'] == pytest.approx(TSIRELSON, abs=1e-6)
        assert result['abs_s'] <= TSIRELSON + 1e-9
        assert len(result['angles']) == 4


class TestLocalModelSweeps:

    def test_sawtooth_sweep(self):
        result = model_chsh_sweep(builtin_sawtooth_local(), singlet(), n=10000, seed=0)
        assert result['samples'] == 10000
        assert result['vectorized']
        assert result['within_local_bound']
        assert result['max_abs_s'] <= 2.0 + 1e-9

    def test_random_local_models(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for index in range(100):
            result = model_chsh_sweep(random_local_model(rng), singlet(), n=10000, seed=index)
            assert result['vectorized']
            worst = max(worst, result['max_abs_s'])
        assert worst <= 2.0 + 1e-9

    @pytest.mark.parametrize("factory", [builtin_sawtooth_local, random_local_model])
    def test_batch_matches_single_spec(self, factory):
        model = factory(np.random.default_rng(5)) if factory is random_local_model else factory()
        angles = random_chsh_specs(20, seed=2)
        batch = chsh_model_batch(model, singlet(), angles)
        single = [chsh_model(model, singlet(), ChshSpec.from_angles(*row)) for row in angles]
        assert np.allclose(batch, single, atol=1e-12)

    def test_batch_rejects_setting_dependent_density(self):
        with pytest.raises(IneligibleModelError):
            chsh_model_batch(builtin_scully(), singlet(), random_chsh_specs(3))

    def test_sweep_falls_back_per_spec(self):
        result = model_chsh_sweep(builtin_scully(), singlet(), n=50, seed=0)
        assert not result['vectorized']
        assert result['max_abs_s'] <= TSIRELSON + 1e-9
