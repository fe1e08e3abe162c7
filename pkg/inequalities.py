"""
Module bất đẳng thức CHSH và phân bố kết hợp bốn biến kiểu Fine

S = E(a,b) - E(a,b') + E(a',b) + E(a',b'). Mô hình có nhân factorized và mật độ
không phụ thuộc setting cho một bảng P(A1, A2, B1, B2) mà các biên cặp tái tạo
thống kê của mô hình, nên |S| ≤ 2.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np
import pandas as pd
import scipy.optimize as opt

from beable_models import BeableModel, model_joint_table
from causality_audit import density_distance
from config import CHSH_SETTINGS, TOLERANCE_SETTINGS
from quantum_core import (OUTCOMES, PAULI, Outcome, Setting, SettingBatch, TwoQubitState,
                          expectation, joint_table)

logger = logging.getLogger(__name__)

PAIR_KEYS = ('A1B1', 'A1B2', 'A2B1', 'A2B2')
_SIGNS = np.array([[1.0, -1.0], [-1.0, 1.0]])


class IneligibleModelError(ValueError):
    """Mô hình không thuộc phạm vi dựng bảng kết hợp bốn biến"""


@dataclass(frozen=True)
class ChshSpec:
    """Bốn setting của khung CHSH: (a, a') cho Alice, (b, b') cho Bob"""
    a: Setting
    a_prime: Setting
    b: Setting
    b_prime: Setting

    @classmethod
    def from_angles(cls, a: float, a_prime: float, b: float, b_prime: float) -> 'ChshSpec':
        return cls(Setting.from_angle(a), Setting.from_angle(a_prime),
                   Setting.from_angle(b), Setting.from_angle(b_prime))

    @classmethod
    def optimal(cls) -> 'ChshSpec':
        """Setting tối ưu cho singlet: (0, π/2, π/4, 3π/4)"""
        return cls.from_angles(*CHSH_SETTINGS['optimal_spec'])

    @property
    def angles(self) -> Tuple[float, float, float, float]:
        return (self.a.plane_angle, self.a_prime.plane_angle,
                self.b.plane_angle, self.b_prime.plane_angle)

    def pair_settings(self) -> Dict[str, Tuple[Setting, Setting]]:
        return {
            'A1B1': (self.a, self.b),
            'A1B2': (self.a, self.b_prime),
            'A2B1': (self.a_prime, self.b),
            'A2B2': (self.a_prime, self.b_prime),
        }


def chsh_from_correlations(correlations: Mapping[str, float]) -> float:
    """S = E(A1B1) - E(A1B2) + E(A2B1) + E(A2B2)"""
    return float(correlations['A1B1'] - correlations['A1B2']
                 + correlations['A2B1'] + correlations['A2B2'])


def _table_correlation(table: np.ndarray) -> float:
    return float(np.sum(_SIGNS * table))


def pairwise_tables_from_model(model: BeableModel, psi: TwoQubitState,
                               spec: ChshSpec) -> Dict[str, np.ndarray]:
    """Bảng 2x2 P(A_i, B_j) của mô hình cho bốn cặp setting"""
    return {key: model_joint_table(model, s1, s2, psi)
            for key, (s1, s2) in spec.pair_settings().items()}


def pairwise_tables_quantum(psi: TwoQubitState, spec: ChshSpec) -> Dict[str, np.ndarray]:
    """Bảng 2x2 P(A_i, B_j) theo quy tắc Born cho bốn cặp setting"""
    return {key: joint_table(psi, s1, s2) for key, (s1, s2) in spec.pair_settings().items()}


def chsh_model(model: BeableModel, psi: TwoQubitState, spec: ChshSpec) -> float:
    """
    Giá trị CHSH từ tương quan của mô hình

    Args:
        model: Mô hình beable
        psi: Trạng thái
        spec: Bốn setting

    Returns:
        float: S
    """
    tables = pairwise_tables_from_model(model, psi, spec)
    return chsh_from_correlations({k: _table_correlation(t) for k, t in tables.items()})


def chsh_quantum(psi: TwoQubitState, spec: ChshSpec) -> float:
    """Giá trị CHSH từ oracle Born"""
    tables = pairwise_tables_quantum(psi, spec)
    return chsh_from_correlations({k: _table_correlation(t) for k, t in tables.items()})


@dataclass(frozen=True)
class FineJoint:
    """Bảng P(A1, A2, B1, B2), chỉ số theo Outcome.index (0 là +1, 1 là -1)"""
    table: np.ndarray
    spec: ChshSpec

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.shape != (2, 2, 2, 2):
            raise ValueError(f"Bảng kết hợp cần kích thước (2,2,2,2), nhận được {table.shape}")
        if np.min(table) < -TOLERANCE_SETTINGS['exact']:
            raise ValueError(f"Bảng kết hợp có phần tử âm: {np.min(table)!r}")
        total = float(table.sum())
        if abs(total - 1.0) > TOLERANCE_SETTINGS['exact']:
            raise ValueError(f"Bảng kết hợp không chuẩn hóa: tổng = {total!r}")
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    def pair_table(self, key: str) -> np.ndarray:
        """
        Biên hai biến từ bảng bốn biến

        Args:
            key: 'A1B1', 'A1B2', 'A2B1', 'A2B2' hoặc 'A1A2'

        Returns:
            np.ndarray: Bảng 2x2
        """
        axes = {'A1B1': (1, 3), 'A1B2': (1, 2), 'A2B1': (0, 3), 'A2B2': (0, 2),
                'A1A2': (2, 3)}
        if key not in axes:
            raise ValueError(f"Cặp biến không hợp lệ: {key!r}")
        return self.table.sum(axis=axes[key])

    def pair_tables(self) -> Dict[str, np.ndarray]:
        return {key: self.pair_table(key) for key in PAIR_KEYS + ('A1A2',)}

    def chsh(self) -> float:
        return chsh_from_correlations({k: _table_correlation(self.pair_table(k))
                                       for k in PAIR_KEYS})

    def to_frame(self) -> pd.DataFrame:
        """16 dòng (A1, A2, B1, B2, probability), thứ tự + trước -"""
        rows = []
        for a1, a2, b1, b2 in itertools.product(OUTCOMES, repeat=4):
            rows.append({'A1': int(a1), 'A2': int(a2), 'B1': int(b1), 'B2': int(b2),
                         'probability': float(self.table[a1.index, a2.index,
                                                         b1.index, b2.index])})
        return pd.DataFrame(rows, columns=['A1', 'A2', 'B1', 'B2', 'probability'])


def fine_joint_from_model(model: BeableModel, psi: TwoQubitState, spec: ChshSpec) -> FineJoint:
    """
    Dựng P(A1,A2,B1,B2) = Σ_ω ρ(ω) P(A1|ω) P(A2|ω) P(B1|ω) P(B2|ω)

    Mô hình phải có nhân factorized và mật độ giống nhau trên bốn cặp
    {a, a'} × {b, b'}.

    Args:
        model: Mô hình beable
        psi: Trạng thái
        spec: Bốn setting

    Returns:
        FineJoint: Bảng 16 phần tử
    """
    if not model.is_factorized:
        raise IneligibleModelError(f"Model '{model.name}': joint kernel is not factorized")

    densities = [model.build_density(s1, s2, psi) for s1, s2 in spec.pair_settings().values()]
    reference = densities[0]
    for density in densities[1:]:
        try:
            distance = density_distance(density, reference)
        except ValueError:
            distance = float('inf')
        if distance > TOLERANCE_SETTINGS['exact']:
            raise IneligibleModelError(
                f"Model '{model.name}': measurement independence violated "
                f"(density distance {distance:.6g} across CHSH settings)")

    a1 = model.party_table(reference, spec.a, psi, party=1)
    a2 = model.party_table(reference, spec.a_prime, psi, party=1)
    b1 = model.party_table(reference, spec.b, psi, party=2)
    b2 = model.party_table(reference, spec.b_prime, psi, party=2)
    table = np.einsum('w,wi,wj,wk,wl->ijkl', reference.weights, a1, a2, b1, b2)
    logger.info("Built four-variable joint for model '%s' (%d atoms)", model.name, len(reference))
    return FineJoint(table, spec)


def same_party_table_from_model(model: BeableModel, psi: TwoQubitState,
                                spec: ChshSpec) -> np.ndarray:
    """
    Biên cùng phía P(A1, A2) = Σ_ω ρ(ω) P(A1|ω, a) P(A2|ω, a') của mô hình factorized

    Mật độ lấy tại cặp (a', b), khác cặp (a, b) mà bảng bốn biến dùng làm gốc.
    """
    if not model.is_factorized:
        raise IneligibleModelError(f"Model '{model.name}': joint kernel is not factorized")
    density = model.build_density(spec.a_prime, spec.b, psi)
    a1 = model.party_table(density, spec.a, psi, party=1)
    a2 = model.party_table(density, spec.a_prime, psi, party=1)
    return np.einsum('w,wi,wj->ij', density.weights, a1, a2)


def fine_target_from_model(model: BeableModel, psi: TwoQubitState,
                           spec: ChshSpec) -> Dict[str, np.ndarray]:
    """Bốn bảng cặp A_iB_j cùng biên P(A1, A2) của mô hình"""
    target = pairwise_tables_from_model(model, psi, spec)
    target['A1A2'] = same_party_table_from_model(model, psi, spec)
    return target


def fine_marginal_check(fj: FineJoint, target: Mapping[str, np.ndarray],
                        tolerance: float = None) -> Dict:
    """
    So sánh các biên cặp của bảng bốn biến với bảng mục tiêu

    Độ lệch mỗi cặp là khoảng cách biến phân toàn phần ½ Σ |p - q|.

    Args:
        fj: Bảng bốn biến
        target: Bảng 2x2 theo khóa 'A1B1', ..., tùy chọn 'A1A2'
        tolerance: Ngưỡng

    Returns:
        Dict: Độ lệch từng cặp, max_deviation, max_entry_deviation, holds
    """
    tolerance = TOLERANCE_SETTINGS['trig'] if tolerance is None else tolerance
    pairs = {}
    for key in PAIR_KEYS + ('A1A2',):
        if key not in target:
            continue
        difference = np.abs(fj.pair_table(key) - np.asarray(target[key], dtype=float))
        pairs[key] = {'total_variation': float(0.5 * difference.sum()),
                      'max_entry_deviation': float(difference.max())}
    if not pairs:
        raise ValueError("Bảng mục tiêu không chứa cặp biến nào")

    max_deviation = max(p['total_variation'] for p in pairs.values())
    return {
        'pairs': pairs,
        'max_deviation': max_deviation,
        'max_entry_deviation': max(p['max_entry_deviation'] for p in pairs.values()),
        'tolerance': tolerance,
        'holds': max_deviation <= tolerance
    }


def quantum_impossibility_witness(fj: FineJoint, psi: TwoQubitState) -> Dict:
    """
    Đối chiếu bảng bốn biến với bảng Born tại cùng bốn setting

    Mọi bảng dạng Fine có |S| ≤ 2, và |S_a - S_b| ≤ 8·max TV, nên độ lệch
    biên cặp của bất kỳ bảng nào so với mục tiêu lượng tử ít nhất bằng
    (|S_quantum| - 2)/8.

    Returns:
        Dict: S hai phía, cận chứng nhận và độ lệch thực tế
    """
    check = fine_marginal_check(fj, pairwise_tables_quantum(psi, fj.spec))
    s_quantum = chsh_quantum(psi, fj.spec)
    bound = max(abs(s_quantum) - 2.0, 0.0) / 8.0
    return {
        's_fine': fj.chsh(),
        's_quantum': s_quantum,
        'certificate_bound': bound,
        'max_deviation': check['max_deviation'],
        'max_entry_deviation': check['max_entry_deviation'],
        'pairs': check['pairs'],
        'impossible': bound > TOLERANCE_SETTINGS['trig'],
        'certified': bound > TOLERANCE_SETTINGS['trig']
        and check['max_deviation'] >= bound - TOLERANCE_SETTINGS['trig']
    }


def deterministic_chsh_values() -> List[Dict]:
    """16 chiến lược tất định (A1, A2, B1, B2) ∈ {±1}⁴ và giá trị S của chúng"""
    rows = []
    for a1, a2, b1, b2 in itertools.product((1, -1), repeat=4):
        s = a1 * b1 - a1 * b2 + a2 * b1 + a2 * b2
        rows.append({'A1': a1, 'A2': a2, 'B1': b1, 'B2': b2, 'S': s})
    return rows


def chsh_bound_property(samples: int = None, seed: int = 0, max_atoms: int = None,
                        deterministic: bool = False) -> Dict:
    """
    Sinh ngẫu nhiên các bảng dạng Fine và kiểm tra |S| ≤ 2

    Mỗi mẫu: 1..max_atoms atom trọng số Dirichlet, xác suất đáp ứng P(+) cho
    A1, A2, B1, B2 đều trên [0, 1] (hoặc thuộc {0, 1} khi deterministic).
    Bảng dựng bằng cùng phép einsum với fine_joint_from_model, S lấy từ các
    biên cặp của bảng.

    Args:
        samples: Số mẫu
        seed: Seed
        max_atoms: Số atom tối đa mỗi mẫu
        deterministic: Đáp ứng tất định

    Returns:
        Dict: max_abs_s, số vi phạm, holds
    """
    samples = samples or CHSH_SETTINGS['fine_samples']
    max_atoms = max_atoms or CHSH_SETTINGS['max_atoms_random_table']
    rng = np.random.default_rng(seed)
    spec = ChshSpec.optimal()
    bound = 2.0 + TOLERANCE_SETTINGS['trig']
    max_abs_s = 0.0
    violations = 0

    for _ in range(samples):
        n_atoms = int(rng.integers(1, max_atoms + 1))
        weights = rng.dirichlet(np.ones(n_atoms))
        if deterministic:
            p_plus = rng.integers(0, 2, size=(n_atoms, 4)).astype(float)
        else:
            p_plus = rng.random((n_atoms, 4))
        responses = np.stack([p_plus, 1.0 - p_plus], axis=-1)
        table = np.einsum('w,wi,wj,wk,wl->ijkl', weights, *responses.transpose(1, 0, 2))
        s = FineJoint(table, spec).chsh()
        max_abs_s = max(max_abs_s, abs(s))
        violations += int(abs(s) > bound)

    logger.info("CHSH bound property: %d samples, max |S| = %.9f", samples, max_abs_s)
    return {
        'samples': samples,
        'seed': seed,
        'deterministic': deterministic,
        'max_abs_s': max_abs_s,
        'violations': violations,
        'holds': violations == 0
    }


def correlation_tensor(psi: TwoQubitState) -> np.ndarray:
    """Tensor tương quan T_ij = <ψ|σ_i⊗σ_j|ψ>, i, j ∈ {x, y, z}"""
    axes = ('x', 'y', 'z')
    return np.array([[expectation(psi, np.kron(PAULI[i], PAULI[j])) for j in axes]
                     for i in axes])


def _planar_chsh(tensor: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """S cho từng hàng góc (a, a', b, b'), dùng n̂ = (sin φ, 0, cos φ)"""
    def vectors(phi):
        return np.stack([np.sin(phi), np.zeros_like(phi), np.cos(phi)], axis=-1)

    a, a_prime, b, b_prime = (vectors(angles[:, k]) for k in range(4))

    def e(u, v):
        return np.einsum('ni,ij,nj->n', u, tensor, v)

    return e(a, b) - e(a, b_prime) + e(a_prime, b) + e(a_prime, b_prime)


def random_chsh_specs(n: int, seed: int = 0) -> np.ndarray:
    """
    Sinh n bộ góc CHSH ngẫu nhiên đều trên [0, 2π)

    Returns:
        np.ndarray: Mảng (n, 4) theo thứ tự (a, a', b, b')
    """
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 2 * math.pi, size=(n, 4))


def tsirelson_sweep(psi: TwoQubitState, n: int = None, seed: int = 0) -> Dict:
    """
    Quét ngẫu nhiên các bộ setting và tìm |S| lớn nhất của oracle

    Args:
        psi: Trạng thái
        n: Số bộ setting
        seed: Seed

    Returns:
        Dict: max_abs_s, bộ góc tệ nhất, exceeds_tsirelson
    """
    n = n or CHSH_SETTINGS['tsirelson_specs']
    angles = random_chsh_specs(n, seed)
    values = np.abs(_planar_chsh(correlation_tensor(psi), angles))
    worst = int(np.argmax(values))
    tsirelson = 2 * math.sqrt(2)
    return {
        'samples': n,
        'seed': seed,
        'max_abs_s': float(values[worst]),
        'worst_angles': angles[worst].tolist(),
        'tsirelson_bound': tsirelson,
        'exceeds_tsirelson': bool(values[worst] > tsirelson + TOLERANCE_SETTINGS['trig'])
    }


def _batch_party_means(model: BeableModel, density, angles: np.ndarray, psi: TwoQubitState,
                       party: int) -> np.ndarray:
    """Ā(ω, φ) = P(+) - P(-) cho từng góc và từng atom, mảng (số góc, số atom)"""
    kernel = model.kernel1 if party == 1 else model.kernel2
    batch = SettingBatch(angles)
    shape = (len(batch), len(density))
    plus = np.broadcast_to(kernel(density, batch, psi, Outcome.PLUS), shape)
    minus = np.broadcast_to(kernel(density, batch, psi, Outcome.MINUS), shape)
    return plus - minus


def chsh_model_batch(model: BeableModel, psi: TwoQubitState, angles: np.ndarray) -> np.ndarray:
    """
    S của mô hình factorized có mật độ không phụ thuộc setting, cho mỗi hàng góc

    Args:
        model: Mô hình với setting_free
        psi: Trạng thái
        angles: Mảng (n, 4) theo thứ tự (a, a', b, b')

    Returns:
        np.ndarray: n giá trị S
    """
    if not (model.is_factorized and model.setting_free):
        raise IneligibleModelError(
            f"Model '{model.name}': batch CHSH needs a factorized setting-free model")
    angles = np.asarray(angles, dtype=float).reshape(-1, 4)
    first = ChshSpec.from_angles(*angles[0])
    density = model.build_density(first.a, first.b, psi)
    other = model.build_density(first.a_prime, first.b_prime, psi)
    if density_distance(density, other) > TOLERANCE_SETTINGS['exact']:
        raise IneligibleModelError(f"Model '{model.name}': density depends on the settings")

    def e(u, v):
        return np.einsum('w,nw,nw->n', density.weights, u, v)

    values = np.empty(len(angles))
    chunk = CHSH_SETTINGS['batch_size']
    for start in range(0, len(angles), chunk):
        rows = angles[start:start + chunk]
        a, a_prime = (_batch_party_means(model, density, rows[:, k], psi, 1) for k in (0, 1))
        b, b_prime = (_batch_party_means(model, density, rows[:, k], psi, 2) for k in (2, 3))
        values[start:start + len(rows)] = (e(a, b) - e(a, b_prime)
                                           + e(a_prime, b) + e(a_prime, b_prime))
    return values


def model_chsh_sweep(model: BeableModel, psi: TwoQubitState, n: int = None,
                     seed: int = 0) -> Dict:
    """
    Quét ngẫu nhiên |S| của một mô hình trên n bộ setting

    Mô hình factorized có setting_free được tính theo lô; các mô hình khác tính
    từng bộ setting qua chsh_model.
    """
    n = n or CHSH_SETTINGS['random_specs']
    angles = random_chsh_specs(n, seed)
    vectorized = model.is_factorized and model.setting_free
    if vectorized:
        values = np.abs(chsh_model_batch(model, psi, angles))
    else:
        values = np.array([abs(chsh_model(model, psi, ChshSpec.from_angles(*row)))
                           for row in angles])
    worst = int(np.argmax(values))
    return {
        'samples': n,
        'seed': seed,
        'vectorized': vectorized,
        'max_abs_s': float(values[worst]),
        'worst_angles': angles[worst].tolist(),
        'within_local_bound': bool(values[worst] <= 2.0 + TOLERANCE_SETTINGS['trig'])
    }


def optimize_chsh_quantum(psi: TwoQubitState, seed: int = 0, restarts: int = None) -> Dict:
    """
    Tối ưu hóa |S| của oracle theo bốn góc phẳng

    Args:
        psi: Trạng thái
        seed: Seed cho các điểm khởi tạo
        restarts: Số lần khởi động lại

    Returns:
        Dict: Góc tối ưu, S tại đó (tính lại bằng oracle), trạng thái hội tụ
    """
    restarts = restarts or CHSH_SETTINGS['optimizer_restarts']
    tensor = correlation_tensor(psi)
    rng = np.random.default_rng(seed)

    def objective_function(params):
        return -abs(float(_planar_chsh(tensor, params.reshape(1, 4))[0]))

    best = None
    for _ in range(restarts):
        initial_guess = rng.uniform(0.0, 2 * math.pi, size=4)
        result = opt.minimize(objective_function, initial_guess, method='L-BFGS-B',
                              bounds=[(0.0, 2 * math.pi)] * 4)
        if best is None or result.fun < best.fun:
            best = result

    spec = ChshSpec.from_angles(*best.x)
    s_value = chsh_quantum(psi, spec)
    logger.info("CHSH optimization: |S| = %.12f after %d restarts", abs(s_value), restarts)
    return {
        'angles': list(spec.angles),
        's_value': s_value,
        'abs_s': abs(s_value),
        'optimization_success': bool(best.success),
        'restarts': restarts,
        'seed': seed
    }


class ChshAnalyzer:
    """Class gom các phân tích CHSH cho một trạng thái"""

    def __init__(self, psi: TwoQubitState, spec: ChshSpec = None):
        self.psi = psi
        self.spec = spec or ChshSpec.optimal()

    def compare(self, models: List[BeableModel]) -> List[Dict]:
        """
        Giá trị S của oracle và từng mô hình tại cùng bộ setting

        Returns:
            List[Dict]: Dòng (model, a, a_prime, b, b_prime, S)
        """
        a, a_prime, b, b_prime = self.spec.angles
        rows = [{'model': 'quantum', 'a': a, 'a_prime': a_prime, 'b': b, 'b_prime': b_prime,
                 'S': chsh_quantum(self.psi, self.spec)}]
        for model in models:
            rows.append({'model': model.name, 'a': a, 'a_prime': a_prime, 'b': b,
                         'b_prime': b_prime, 'S': chsh_model(model, self.psi, self.spec)})
        return rows

    def fine_report(self, model: BeableModel) -> Tuple[FineJoint, Dict]:
        """Bảng bốn biến của mô hình kèm kiểm tra biên và chứng nhận bất khả"""
        fj = fine_joint_from_model(model, self.psi, self.spec)
        target = fine_target_from_model(model, self.psi, self.spec)
        return fj, {
            'model': model.name,
            'spec': list(self.spec.angles),
            'chsh': fj.chsh(),
            'marginal_check': fine_marginal_check(fj, target),
            'quantum_witness': quantum_impossibility_witness(fj, self.psi)
        }
