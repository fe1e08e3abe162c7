"""
Tests cho module beable_models
"""

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from beable_models import (AngleExpr, BeableAtom, BeableDensity, BeableKernels, BeableModel,
                           MalformedModelError, ModelRegistry, UnknownModelError,
                           builtin_argaman_dilorenzo, builtin_beltrametti_bugajski,
                           builtin_sawtooth_local, builtin_scully, conditional_means,
                           load_model_file, model_correlation, model_joint, model_joint_table,
                           parse_angle_expr)
from quantum_core import OUTCOMES, Setting, born_joint, joint_table, singlet
from utils import generate_angle_range

GRID_36 = generate_angle_range(36)


def _s(phi):
    return Setting.from_angle(phi)


class TestAtomsAndDensities:

    def test_atom_angles_wrapped(self):
        atom = BeableAtom(0.5, -math.pi / 2, 5 * math.pi)
        assert atom.theta1 == pytest.approx(3 * math.pi / 2)
        assert atom.theta2 == pytest.approx(math.pi)

    def test_negative_weight_rejected(self):
        with pytest.raises(MalformedModelError):
            BeableAtom(-0.1)

    def test_uniform_grid_mass(self):
        grid = BeableDensity.uniform_grid(720)
        assert len(grid) == 720
        assert grid.kind == 'grid'
        assert abs(grid.total_mass - 1) <= 1e-12
        assert grid.lam[0] == pytest.approx(math.pi / 720)

    def test_mass_checked_on_build(self):
        def density(s1, s2, psi):
            return BeableDensity.from_atoms([BeableAtom(0.5), BeableAtom(0.4)])

        model = BeableModel.factorized('broken-mass', density, BeableKernels.cosine_response_1,
                                       BeableKernels.cosine_response_2)
        with pytest.raises(MalformedModelError):
            model_joint(model, _s(0), _s(0), singlet(), 1, 1)

    def test_factorized_needs_party_kernels(self):
        with pytest.raises(MalformedModelError):
            BeableModel('x', lambda s1, s2, psi: None, BeableKernels.born, 'factorized')


class TestBuiltinDensities:

    @pytest.mark.parametrize("factory", [builtin_beltrametti_bugajski, builtin_scully,
                                         builtin_argaman_dilorenzo, builtin_sawtooth_local])
    def test_total_mass_on_grid(self, factory):
        model = factory()
        psi = singlet()
        for phi1 in GRID_36:
            for phi2 in GRID_36:
                assert abs(model.build_density(_s(phi1), _s(phi2), psi).total_mass - 1) <= 1e-12

    def test_beltrametti_bugajski_single_atom(self):
        psi = singlet()
        density = builtin_beltrametti_bugajski().build_density(_s(0.3), _s(1.1), psi)
        assert len(density) == 1
        assert density.weights[0] == 1.0
        assert density.atoms[0].state == psi

    def test_argaman_dilorenzo_collapses_at_equal_settings(self):
        density = builtin_argaman_dilorenzo().build_density(_s(0.7), _s(0.7), singlet())
        assert len(density) == 4
        values = {(round(a.theta1, 9), round(a.theta2, 9)) for a in density.atoms}
        assert len(values) == 2

    def test_sawtooth_density_is_setting_free(self):
        model = builtin_sawtooth_local()
        first = model.build_density(_s(0), _s(1), singlet())
        second = model.build_density(_s(2), _s(3), singlet())
        assert first is second


class TestKernels:

    def test_scully_kernel_plug_in(self):
        model = builtin_scully()
        phi = 0.4
        density = BeableDensity.from_atoms([BeableAtom(0.5, phi, phi + math.pi),
                                            BeableAtom(0.5, phi + math.pi, phi)])
        plus = model.kernel1(density, _s(phi), singlet(), OUTCOMES[0])
        assert plus[0] == pytest.approx(1.0, abs=1e-15)
        assert plus[1] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("factory", [builtin_scully, builtin_argaman_dilorenzo,
                                         builtin_sawtooth_local,
                                         lambda: builtin_scully(printed_sign=True)])
    def test_factorized_product_identity(self, factory):
        model = factory()
        psi = singlet()
        for phi1 in GRID_36[::3]:
            for phi2 in GRID_36[::3]:
                s1, s2 = _s(phi1), _s(phi2)
                density = model.build_density(s1, s2, psi)
                table = model.kernel_table(density, s1, s2, psi)
                product = np.einsum('ia,ib->iab', model.party_table(density, s1, psi, 1),
                                    model.party_table(density, s2, psi, 2))
                assert np.max(np.abs(table - product)) <= 1e-12
                assert np.max(np.abs(table.sum(axis=(1, 2)) - 1)) <= 1e-12

    def test_born_kernel_normalized(self):
        model = builtin_beltrametti_bugajski()
        density = model.build_density(_s(0), _s(0), singlet())
        table = model.kernel_table(density, _s(0), _s(0), singlet())
        assert table[0].sum() == pytest.approx(1.0, abs=1e-12)
        assert table[0, 0, 0] <= 1e-12


class TestModelJoint:

    def test_beltrametti_bugajski_equals_born(self):
        model = builtin_beltrametti_bugajski()
        psi = singlet()
        for phi1 in GRID_36[::2]:
            for phi2 in GRID_36[::2]:
                assert np.array_equal(model_joint_table(model, _s(phi1), _s(phi2), psi),
                                      joint_table(psi, _s(phi1), _s(phi2)))

    def test_scully_examples(self):
        psi = singlet()
        model = builtin_scully()
        assert model_joint(model, _s(1.0), _s(1.0), psi, 1, 1) <= 1e-12
        assert model_joint(model, _s(0), _s(math.pi / 3), psi, 1, 1) == pytest.approx(
            1 / 8, abs=1e-12)

    @pytest.mark.parametrize("factory", [builtin_scully, builtin_argaman_dilorenzo])
    def test_reproduces_oracle_on_grid(self, factory):
        model = factory()
        psi = singlet()
        for phi1 in GRID_36:
            for phi2 in GRID_36:
                s1, s2 = _s(phi1), _s(phi2)
                table = model_joint_table(model, s1, s2, psi)
                assert np.max(np.abs(table - joint_table(psi, s1, s2))) <= 1e-12

    def test_printed_sign_variant(self):
        psi = singlet()
        model = builtin_scully(printed_sign=True)
        for a in (1, -1):
            for b in (1, -1):
                p = model_joint(model, _s(0), _s(math.pi / 3), psi, a, b)
                assert p == pytest.approx((1 + a * b * math.cos(math.pi / 3)) / 4, abs=1e-12)
        assert model_correlation(model, _s(0.2), _s(0.2), psi) == pytest.approx(1.0)

    @pytest.mark.parametrize("delta, expected", [
        (0.0, -1.0), (math.pi / 2, 0.0), (math.pi / 4, -0.5), (math.pi, 1.0)
    ])
    def test_sawtooth_correlation(self, delta, expected):
        e = model_correlation(builtin_sawtooth_local(), _s(0), _s(delta), singlet())
        assert e == pytest.approx(expected, abs=1e-12)

    def test_invalid_outcome(self):
        with pytest.raises(ValueError):
            model_joint(builtin_scully(), _s(0), _s(0), singlet(), 2, 1)


class TestConditionalMeans:

    def test_scully_pinned_atom(self):
        phi = 0.9
        means = conditional_means(builtin_scully(), BeableAtom(0.5, phi, phi + math.pi),
                                  _s(phi), _s(phi), singlet())
        assert means.a_bar == pytest.approx(1.0)
        assert means.b_bar == pytest.approx(-1.0)
        assert means.a_bar * means.b_bar == pytest.approx(-1.0)

    def test_synthetic_quarter_turn_atom(self):
        phi = 0.9
        means = conditional_means(builtin_scully(), BeableAtom(1.0, phi + math.pi / 2, 0.0),
                                  _s(phi), _s(0.0), singlet())
        assert means.a_bar == pytest.approx(0.0, abs=1e-15)

    def test_joint_kernel_means_from_marginals(self):
        psi = singlet()
        means = conditional_means(builtin_beltrametti_bugajski(), BeableAtom(1.0, state=psi),
                                  _s(0.3), _s(1.3), psi)
        assert means.a_bar == pytest.approx(0.0, abs=1e-12)
        assert means.bounded

    def test_means_always_bounded(self):
        rng = np.random.default_rng(0)
        model = builtin_scully()
        for _ in range(200):
            t1, t2, phi1, phi2 = rng.uniform(0, 2 * math.pi, size=4)
            means = conditional_means(model, BeableAtom(1.0, t1, t2), _s(phi1), _s(phi2),
                                      singlet())
            assert means.bounded


class TestAngleExpressions:

    @pytest.mark.parametrize("text, expected", [
        ("phi1", AngleExpr(phi1=Fraction(1))),
        ("phi1 + pi", AngleExpr(phi1=Fraction(1), pi=Fraction(1))),
        ("-1/2 phi2 + 3/4 pi", AngleExpr(phi2=Fraction(-1, 2), pi=Fraction(3, 4))),
        ("phi2 - pi", AngleExpr(phi2=Fraction(1), pi=Fraction(-1))),
        ("2*lambda", AngleExpr(lam=Fraction(2))),
        ("0.25", AngleExpr(const=Fraction(1, 4))),
    ])
    def test_parse(self, text, expected):
        assert parse_angle_expr(text) == expected

    def test_numeric_literal(self):
        assert parse_angle_expr(0) == AngleExpr()

    @pytest.mark.parametrize("text", ["", "phi3", "phi1 phi2", "1/0 pi", "phi1 +", "pi ^ 2"])
    def test_malformed(self, text):
        with pytest.raises(MalformedModelError):
            parse_angle_expr(text)

    def test_evaluate(self):
        expr = parse_angle_expr("phi1 - 1/2 phi2 + pi")
        assert expr.evaluate(0.4, 1.0) == pytest.approx(0.4 - 0.5 + math.pi)


class TestModelFiles:

    def _write(self, tmp_path, definition):
        path = tmp_path / 'model.json'
        path.write_text(json.dumps(definition), encoding='utf-8')
        return str(path)

    def test_scully_from_file_matches_builtin(self, tmp_path):
        path = self._write(tmp_path, {
            'name': 'scully-file',
            'kernel_form': 'factorized',
            'kernel': 'cosine-response',
            'atoms': [
                {'weight': '1/2', 'theta1': 'phi1', 'theta2': 'phi1 + pi'},
                {'weight': '1/2', 'theta1': 'phi1 + pi', 'theta2': 'phi1'}
            ],
            'expected': {'measurement-independence': 'violated'}
        })
        model = load_model_file(path)
        psi = singlet()
        assert model.name == 'scully-file'
        assert model.expected == {'measurement-independence': 'violated'}
        for phi1 in GRID_36[::4]:
            for phi2 in GRID_36[::4]:
                s1, s2 = _s(phi1), _s(phi2)
                assert np.max(np.abs(model_joint_table(model, s1, s2, psi)
                                     - model_joint_table(builtin_scully(), s1, s2, psi))) <= 1e-12

    def test_grid_model_from_file(self, tmp_path):
        path = self._write(tmp_path, {
            'name': 'sign-grid',
            'kernel_form': 'factorized',
            'kernel': 'sign-response',
            'grid_cells': 720,
            'theta1': 'lambda',
            'theta2': 'lambda + pi'
        })
        model = load_model_file(path)
        e = model_correlation(model, _s(0), _s(math.pi / 4), singlet())
        assert e == pytest.approx(-0.5, abs=1e-12)

    def test_born_model_from_file(self, tmp_path):
        path = self._write(tmp_path, {'name': 'ontic', 'kernel_form': 'joint', 'kernel': 'born',
                                      'atoms': [{'weight': 1}]})
        model = load_model_file(path)
        psi = singlet()
        assert model_joint(model, _s(0), _s(1), psi, 1, -1) == pytest.approx(
            born_joint(psi, _s(0), _s(1), 1, -1))

    @pytest.mark.parametrize("definition", [
        {'name': 'x', 'kernel_form': 'factorized', 'kernel': 'born', 'atoms': [{'weight': 1}]},
        {'name': 'x', 'kernel_form': 'factorized', 'kernel': 'cosine-response',
         'atoms': [{'weight': '1/2'}]},
        {'name': 'x', 'kernel_form': 'factorized', 'kernel': 'telepathy',
         'atoms': [{'weight': 1}]},
        {'name': 'x', 'kernel_form': 'factorized', 'kernel': 'cosine-response'},
        {'kernel_form': 'factorized', 'kernel': 'cosine-response', 'atoms': [{'weight': 1}]},
        {'name': 'x', 'kernel_form': 'factorized', 'kernel': 'cosine-response',
         'atoms': [{'weight': 1, 'theta1': 'lambda'}]},
    ])
    def test_malformed_definitions(self, tmp_path, definition):
        with pytest.raises(MalformedModelError):
            load_model_file(self._write(tmp_path, definition))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{not json', encoding='utf-8')
        with pytest.raises(MalformedModelError):
            load_model_file(str(path))


class TestRegistry:

    def test_available_models(self):
        names = ModelRegistry().get_available_models()
        assert {'beltrametti-bugajski', 'scully', 'scully-printed-sign', 'argaman-dilorenzo',
                'sawtooth'} <= set(names)

    def test_resolve_case_insensitive(self):
        assert ModelRegistry().resolve('Scully').name == 'scully'

    def test_unknown_model(self):
        with pytest.raises(UnknownModelError):
            ModelRegistry().resolve('no-such-model')

    def test_add_model(self):
        registry = ModelRegistry()
        registry.add_model('my-scully', builtin_scully)
        assert registry.resolve('my-scully').name == 'scully'
        with pytest.raises(ValueError):
            registry.add_model('bad', 42)
