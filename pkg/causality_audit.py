"""
Module kiểm toán các điều kiện nhân quả địa phương của Bell trên mô hình beable

Mỗi hàm kiểm tra quét một lưới setting phẳng và trả về AuditReport gồm kết luận,
độ lệch lớn nhất và tối đa `max_witnesses` bằng chứng tệ nhất.
"""

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from beable_models import (BeableAtom, BeableDensity, BeableKernels, BeableModel,
                           MalformedModelError, model_joint_table)
from config import GRID_SETTINGS, TOLERANCE_SETTINGS
from quantum_core import TWO_PI, Setting, TwoQubitState, joint_table, singlet
from utils import generate_angle_range, grid_points_for_step, parse_angle

logger = logging.getLogger(__name__)

HOLDS = 'holds'
VIOLATED = 'violated'
NOT_APPLICABLE = 'not-applicable'

OUTCOME_INDEPENDENCE = 'outcome-independence'
PARAMETER_INDEPENDENCE = 'parameter-independence'
MEASUREMENT_INDEPENDENCE = 'measurement-independence'
EPR_SUPPORT = 'epr-support'
DETERMINISM = 'determinism-on-support'
STATE_FACTORIZATION = 'state-factorization'
BOUNDED_MEANS = 'bounded-means'
ORACLE_AGREEMENT = 'oracle-agreement'
NONSIGNALING = 'nonsignaling'

LOCAL_CAUSALITY = (OUTCOME_INDEPENDENCE, PARAMETER_INDEPENDENCE, MEASUREMENT_INDEPENDENCE)

_DEFAULT_TOLERANCE = {
    OUTCOME_INDEPENDENCE: 'trig',
    PARAMETER_INDEPENDENCE: 'trig',
    MEASUREMENT_INDEPENDENCE: 'exact',
    EPR_SUPPORT: 'trig',
    DETERMINISM: 'determinism',
    STATE_FACTORIZATION: 'exact',
    BOUNDED_MEANS: 'exact',
    ORACLE_AGREEMENT: 'exact',
    NONSIGNALING: 'exact',
}


def default_tolerance(condition: str) -> float:
    return TOLERANCE_SETTINGS[_DEFAULT_TOLERANCE[condition]]


@dataclass(frozen=True)
class SettingsGrid:
    """Lưới góc phẳng đều dùng chung cho hai bên"""
    angles: Tuple[float, ...]
    label: str = ''

    @classmethod
    def from_step(cls, step=None) -> 'SettingsGrid':
        """
        Tạo lưới từ bước góc (radian hoặc literal `p/q pi`)

        Args:
            step: Bước góc, phải chia hết 2π

        Returns:
            SettingsGrid: Lưới k·step, k = 0..n-1
        """
        step = GRID_SETTINGS['grid_step'] if step is None else step
        radians = parse_angle(step) if isinstance(step, str) else float(step)
        points = grid_points_for_step(radians)
        label = f"planar angles k*2pi/{points}, k=0..{points - 1}"
        return cls(tuple(generate_angle_range(points).tolist()), label)

    @classmethod
    def from_angles(cls, angles: Sequence[float], label: str = None) -> 'SettingsGrid':
        angles = tuple(float(a) for a in angles)
        if not angles:
            raise ValueError("Lưới setting rỗng")
        return cls(angles, label or f"planar angles {', '.join(f'{a:.6g}' for a in angles)}")

    @property
    def settings(self) -> List[Setting]:
        return [Setting.from_angle(phi) for phi in self.angles]

    def pairs(self) -> Iterator[Tuple[Setting, Setting]]:
        settings = self.settings
        return itertools.product(settings, settings)

    def equal_pairs(self) -> Iterator[Tuple[Setting, Setting]]:
        return ((s, s) for s in self.settings)

    def describe(self, equal_settings_only: bool = False) -> str:
        n = len(self.angles)
        if equal_settings_only:
            return f"{self.label}; {n} equal-setting points n1 = n2"
        return f"{self.label}; {n}x{n} setting pairs"


@dataclass(frozen=True)
class Witness:
    """Bằng chứng vi phạm tại một điểm lưới"""
    settings: Mapping[str, float]
    atom_index: Optional[int]
    outcomes: Tuple[Optional[int], Optional[int]]
    lhs: float
    rhs: float
    deviation: float
    note: str = ''

    def to_dict(self) -> Dict:
        return {
            'settings': {k: float(v) for k, v in self.settings.items()},
            'atom_index': self.atom_index,
            'outcomes': list(self.outcomes),
            'lhs': float(self.lhs),
            'rhs': float(self.rhs),
            'deviation': float(self.deviation),
            'note': self.note
        }


@dataclass
class AuditReport:
    """Kết quả kiểm tra một điều kiện: kết luận kèm bằng chứng"""
    condition: str
    verdict: str
    max_deviation: float
    tolerance: float
    grid_spec: str
    model_name: str = ''
    witnesses: List[Witness] = field(default_factory=list)
    details: Dict = field(default_factory=dict)
    seed: Optional[int] = None

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_dict(self) -> Dict:
        deviation = None if math.isnan(self.max_deviation) else float(self.max_deviation)
        return {
            'condition': self.condition,
            'verdict': self.verdict,
            'max_deviation': deviation,
            'tolerance': self.tolerance,
            'witnesses': [w.to_dict() for w in self.witnesses],
            'grid_spec': self.grid_spec,
            'model_name': self.model_name,
            'seed': self.seed,
            'details': self.details
        }


class _WitnessCollector:
    """Theo dõi độ lệch lớn nhất và giữ lại các bằng chứng tệ nhất"""

    def __init__(self, tolerance: float, limit: int = None):
        self.tolerance = tolerance
        self.limit = limit or GRID_SETTINGS['max_witnesses']
        self.max_deviation = 0.0
        self._heap = []
        self._counter = itertools.count()

    def add(self, deviation: float, witness_factory):
        deviation = float(deviation)
        if deviation > self.max_deviation:
            self.max_deviation = deviation
        if deviation <= self.tolerance:
            return
        entry = (deviation, -next(self._counter))
        if len(self._heap) < self.limit:
            heapq.heappush(self._heap, (entry, witness_factory()))
        elif entry > self._heap[0][0]:
            heapq.heapreplace(self._heap, (entry, witness_factory()))

    def report(self, condition: str, grid_spec: str, model_name: str,
               details: Dict = None) -> AuditReport:
        verdict = HOLDS if self.max_deviation <= self.tolerance else VIOLATED
        witnesses = [w for _, w in sorted(self._heap, key=lambda item: item[0], reverse=True)]
        report = AuditReport(condition, verdict, self.max_deviation, self.tolerance,
                             grid_spec, model_name, witnesses if verdict == VIOLATED else [],
                             details or {})
        _log_report(report)
        return report


def _log_report(report: AuditReport):
    logger.info("%s [%s]: %s (max deviation %.3e)", report.condition, report.model_name,
                report.verdict, report.max_deviation)
    for witness in report.witnesses:
        logger.debug("  witness %s", witness.to_dict())


def _not_applicable(condition: str, tolerance: float, grid_spec: str, model_name: str,
                    diagnostic: str) -> AuditReport:
    report = AuditReport(condition, NOT_APPLICABLE, float('nan'), tolerance, grid_spec,
                         model_name, [], {'diagnostic': diagnostic})
    _log_report(report)
    return report


def _pair(s1: Setting, s2: Setting) -> Dict[str, float]:
    return {'phi1': s1.plane_angle, 'phi2': s2.plane_angle}


def _party_probabilities(model: BeableModel, density: BeableDensity, s1: Setting,
                         s2: Setting, psi: TwoQubitState) -> Tuple[np.ndarray, np.ndarray]:
    """Xác suất cục bộ theo atom của hai bên, mỗi mảng (số atom, 2)"""
    if model.is_factorized:
        return (model.party_table(density, s1, psi, party=1),
                model.party_table(density, s2, psi, party=2))
    table = model.kernel_table(density, s1, s2, psi)
    return table.sum(axis=2), table.sum(axis=1)


def _conditionals(table: np.ndarray, party: int,
                  threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Biên của một bên và xác suất có điều kiện theo kết quả bên kia

    Returns:
        Tuple: (biên (n, 2), điều kiện (n, kết quả bên kia, kết quả bên này)),
        NaN khi xác suất bên kia dưới ngưỡng
    """
    if party == 1:
        own, remote = table.sum(axis=2), table.sum(axis=1)
        ratio = table.transpose(0, 2, 1)
    else:
        own, remote = table.sum(axis=1), table.sum(axis=2)
        ratio = table
    with np.errstate(divide='ignore', invalid='ignore'):
        conditional = np.where(remote[:, :, None] > threshold,
                               ratio / remote[:, :, None], np.nan)
    return own, conditional


def _validate_kernel(model: BeableModel, table: np.ndarray, support: np.ndarray):
    error = float(np.max(np.abs(table[support].sum(axis=(1, 2)) - 1.0))) if len(support) else 0.0
    if error > TOLERANCE_SETTINGS['exact']:
        raise MalformedModelError(
            f"Mô hình '{model.name}': nhân không chuẩn hóa, sai lệch {error:.3e}")


# ---------------------------------------------------------------------------
# Ba điều kiện nhân quả địa phương
# ---------------------------------------------------------------------------

def check_outcome_independence(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                               tolerance: float = None) -> AuditReport:
    """
    Kiểm tra P(α | β, ω, n̂1, n̂2) = P1(α | ω, n̂1) trên mọi atom của support

    Nhân factorized thỏa mãn theo cấu trúc (độ lệch đúng bằng 0); nhân joint
    được điều kiện hóa theo β khi P(β) vượt ngưỡng, các điểm còn lại bị bỏ qua.

    Args:
        model: Mô hình beable
        psi: Trạng thái
        grid: Lưới setting
        tolerance: Ngưỡng (mặc định theo cấu hình)

    Returns:
        AuditReport: Kết quả kiểm tra
    """
    tolerance = default_tolerance(OUTCOME_INDEPENDENCE) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)
    threshold = TOLERANCE_SETTINGS['conditioning']
    skipped = 0

    for s1, s2 in grid.pairs():
        density = model.build_density(s1, s2, psi)
        support = density.support()
        table = model.kernel_table(density, s1, s2, psi)
        _validate_kernel(model, table, support)
        if model.is_factorized:
            continue

        marginal, conditional = _conditionals(table[support], party=1, threshold=threshold)
        skipped += int(np.sum(np.isnan(conditional[:, :, 0])))
        deviation = np.abs(conditional - marginal[:, None, :])
        if np.all(np.isnan(deviation)):
            continue
        k, b, a = np.unravel_index(np.nanargmax(deviation), deviation.shape)
        collector.add(deviation[k, b, a], lambda: Witness(
            _pair(s1, s2), int(support[k]), (1 - 2 * int(a), 1 - 2 * int(b)),
            float(conditional[k, b, a]), float(marginal[k, a]), float(deviation[k, b, a]),
            'P(a|b,w,n1,n2) vs P1(a|w,n1)'))

    details = {'kernel_form': model.kernel_form, 'skipped_conditionings': skipped}
    if model.is_factorized:
        details['structural'] = True
    return collector.report(OUTCOME_INDEPENDENCE, grid.describe(), model.name, details)


def _angle_distance(x: float, y: float) -> float:
    d = abs(x - y) % TWO_PI
    return min(d, TWO_PI - d)


def _atoms_agree(first: BeableAtom, second: BeableAtom, tolerance: float) -> bool:
    if _angle_distance(first.theta1, second.theta1) > tolerance:
        return False
    if _angle_distance(first.theta2, second.theta2) > tolerance:
        return False
    if (first.lam is None) != (second.lam is None):
        return False
    if first.lam is not None and abs(first.lam - second.lam) > tolerance:
        return False
    if (first.state is None) != (second.state is None):
        return False
    if first.state is not None and not np.allclose(first.state.amplitudes,
                                                   second.state.amplitudes, atol=tolerance):
        return False
    return True


def match_atoms(density: BeableDensity, reference: BeableDensity,
                tolerance: float = None) -> np.ndarray:
    """
    Ghép atom của `density` với atom cùng giá trị trong `reference`

    Ưu tiên ghép theo vị trí (slot) của bộ dựng; nếu giá trị lệch thì tìm atom
    cùng cụm giá trị (xem `_atom_clusters`).

    Returns:
        np.ndarray: Chỉ số atom tương ứng trong reference, -1 nếu không ghép được
    """
    tolerance = TOLERANCE_SETTINGS['angle_match'] if tolerance is None else tolerance
    matches = np.full(len(density), -1, dtype=int)
    clusters = None
    for index, atom in enumerate(density.atoms):
        if index < len(reference) and _atoms_agree(atom, reference.atoms[index], tolerance):
            matches[index] = index
            continue
        if clusters is None:
            labels, reference_labels, _ = _atom_clusters(density, reference, tolerance)
            clusters = {}
            for position, label in enumerate(reference_labels):
                clusters.setdefault(int(label), position)
        matches[index] = clusters.get(int(labels[index]), -1)
    return matches


def check_parameter_independence(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                                 tolerance: float = None) -> AuditReport:
    """
    Kiểm tra P(β | ω, n̂1, n̂2) không phụ thuộc n̂1 (và đối xứng cho Alice)

    Với nhân joint, cả biên P(β|ω,…) lẫn xác suất có điều kiện P(β|α,ω,…) được
    so sánh giữa các biến thể của setting bên kia, atom được ghép theo giá trị.

    Args:
        model: Mô hình beable
        psi: Trạng thái
        grid: Lưới setting
        tolerance: Ngưỡng

    Returns:
        AuditReport: Kết quả kiểm tra
    """
    tolerance = default_tolerance(PARAMETER_INDEPENDENCE) if tolerance is None else tolerance
    grid_spec = grid.describe()

    if model.is_factorized:
        # kernel2 không nhận n̂1, kernel1 không nhận n̂2
        collector = _WitnessCollector(tolerance)
        return collector.report(PARAMETER_INDEPENDENCE, grid_spec, model.name,
                                {'kernel_form': model.kernel_form, 'structural': True})

    collector = _WitnessCollector(tolerance)
    threshold = TOLERANCE_SETTINGS['conditioning']
    settings = grid.settings
    matched = 0
    unmatched = 0

    for party in (2, 1):
        for fixed in settings:
            reference = None
            for varied in settings:
                s1, s2 = (varied, fixed) if party == 2 else (fixed, varied)
                density = model.build_density(s1, s2, psi)
                table = model.kernel_table(density, s1, s2, psi)
                marginal, conditional = _conditionals(table, party, threshold)
                if reference is None:
                    reference = (s1, s2, density, marginal, conditional)
                    continue

                r1, r2, r_density, r_marginal, r_conditional = reference
                matches = match_atoms(density, r_density)
                support = density.support()
                support = support[matches[support] >= 0]
                support = support[r_density.weights[matches[support]] >=
                                  TOLERANCE_SETTINGS['support_weight']]
                unmatched += len(density.support()) - len(support)
                if not len(support):
                    continue
                matched += len(support)
                partners = matches[support]

                marginal_dev = np.abs(marginal[support] - r_marginal[partners])
                k, o = np.unravel_index(np.argmax(marginal_dev), marginal_dev.shape)
                own = 1 - 2 * int(o)
                collector.add(marginal_dev[k, o], lambda: Witness(
                    {**_pair(s1, s2), 'reference_phi1': r1.plane_angle,
                     'reference_phi2': r2.plane_angle},
                    int(support[k]), (None, own) if party == 2 else (own, None),
                    float(marginal[support[k], o]), float(r_marginal[partners[k], o]),
                    float(marginal_dev[k, o]),
                    'P2(b|w,n1,n2) across n1' if party == 2 else 'P1(a|w,n1,n2) across n2'))

                conditional_dev = np.abs(conditional[support] - r_conditional[partners])
                if np.all(np.isnan(conditional_dev)):
                    continue
                k, r, o = np.unravel_index(np.nanargmax(conditional_dev), conditional_dev.shape)
                remote, own = 1 - 2 * int(r), 1 - 2 * int(o)
                collector.add(conditional_dev[k, r, o], lambda: Witness(
                    {**_pair(s1, s2), 'reference_phi1': r1.plane_angle,
                     'reference_phi2': r2.plane_angle},
                    int(support[k]), (remote, own) if party == 2 else (own, remote),
                    float(conditional[support[k], r, o]), float(r_conditional[partners[k], r, o]),
                    float(conditional_dev[k, r, o]),
                    'P2(b|a,w,n1,n2) across n1' if party == 2 else 'P1(a|b,w,n1,n2) across n2'))

    if matched == 0 and len(settings) > 1:
        return _not_applicable(PARAMETER_INDEPENDENCE, tolerance, grid_spec, model.name,
                               "no atom could be matched across variations of the remote setting")
    return collector.report(PARAMETER_INDEPENDENCE, grid_spec, model.name,
                            {'kernel_form': model.kernel_form, 'matched_atoms': matched,
                             'unmatched_atoms': unmatched})


def _atom_clusters(first: BeableDensity, second: BeableDensity,
                   tolerance: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Gom atom của hai mật độ thành cụm giá trị trùng nhau trong tolerance

    Hai atom cùng cụm khi có chuỗi atom nối chúng, mỗi bước lệch không quá
    tolerance (góc modulo 2π), nên giá trị sát biên làm tròn vẫn ghép được.

    Returns:
        Tuple: Nhãn cụm của atom `first`, nhãn cụm của atom `second`, số cụm
    """
    atoms = first.atoms + second.atoms
    points = np.mod(np.column_stack([np.concatenate([first.theta1, second.theta1]),
                                     np.concatenate([first.theta2, second.theta2])]), TWO_PI)
    points[points >= TWO_PI] = 0.0
    pairs = cKDTree(points, boxsize=TWO_PI).query_pairs(tolerance, p=np.inf,
                                                         output_type='ndarray')
    i, j = pairs[:, 0], pairs[:, 1]

    lam = np.concatenate([first.lam, second.lam])
    with np.errstate(invalid='ignore'):
        keep = (np.isnan(lam[i]) & np.isnan(lam[j])) | (np.abs(lam[i] - lam[j]) <= tolerance)

    has_state = np.array([atom.state is not None for atom in atoms])
    keep &= has_state[i] == has_state[j]
    if has_state.any():
        amplitudes = np.zeros((len(atoms), 4), dtype=complex)
        for index in np.flatnonzero(has_state):
            amplitudes[index] = atoms[index].state.amplitudes
        keep &= np.max(np.abs(amplitudes[i] - amplitudes[j]), axis=1) <= tolerance

    n = len(atoms)
    graph = csr_matrix((np.ones(int(keep.sum())), (i[keep], j[keep])), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    return labels[:len(first)], labels[len(first):], count


def _cluster_masses(first: BeableDensity, second: BeableDensity,
                    tolerance: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nhãn cụm của `first` và khối lượng mỗi cụm theo từng mật độ"""
    labels_first, labels_second, count = _atom_clusters(first, second, tolerance)
    mass_first = np.bincount(labels_first, weights=first.weights, minlength=count)
    mass_second = np.bincount(labels_second, weights=second.weights, minlength=count)
    return labels_first, mass_first, mass_second


def _densities_identical(first: BeableDensity, second: BeableDensity) -> bool:
    if first is second:
        return True
    return (len(first) == len(second)
            and np.array_equal(first.weights, second.weights)
            and np.array_equal(first.theta1, second.theta1)
            and np.array_equal(first.theta2, second.theta2)
            and np.array_equal(first.lam, second.lam, equal_nan=True)
            and all(a.state == b.state for a, b in zip(first.atoms, second.atoms)))


def density_distance(first: BeableDensity, second: BeableDensity,
                     tolerance: float = None) -> float:
    """
    Khoảng cách biến phân toàn phần giữa hai mật độ cùng dạng

    Returns:
        float: ½ Σ |w - w'| theo cụm giá trị atom
    """
    if _densities_identical(first, second):
        return 0.0
    if first.kind != second.kind:
        raise ValueError(f"Không so sánh được mật độ '{first.kind}' với '{second.kind}'")
    tolerance = TOLERANCE_SETTINGS['angle_match'] if tolerance is None else tolerance
    _, mass_first, mass_second = _cluster_masses(first, second, tolerance)
    return float(0.5 * np.abs(mass_first - mass_second).sum())


def check_measurement_independence(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                                   tolerance: float = None) -> AuditReport:
    """
    Kiểm tra ρ(ω | n̂1, n̂2, ψ) = ρ(ω | ψ): mật độ như nhau trên mọi cặp setting

    Độ lệch là khoảng cách biến phân toàn phần giữa các phân bố trọng số theo
    giá trị atom (góc so khớp modulo 2π). Mật độ lưới và mật độ atom chỉ được
    so sánh với mật độ cùng dạng.

    Args:
        model: Mô hình beable
        psi: Trạng thái
        grid: Lưới setting
        tolerance: Ngưỡng

    Returns:
        AuditReport: Kết quả kiểm tra
    """
    tolerance = default_tolerance(MEASUREMENT_INDEPENDENCE) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)
    resolution = TOLERANCE_SETTINGS['angle_match']
    reference = None
    reference_pair = None
    skipped = 0

    for s1, s2 in grid.pairs():
        density = model.build_density(s1, s2, psi)
        if reference is None:
            reference, reference_pair = density, (s1, s2)
            continue
        if density.kind != reference.kind:
            skipped += 1
            continue
        if _densities_identical(density, reference):
            collector.add(0.0, lambda: None)
            continue

        labels, mass, reference_mass = _cluster_masses(density, reference, resolution)
        differences = mass - reference_mass
        distance = float(0.5 * np.abs(differences).sum())
        worst = int(np.argmax(np.abs(differences)))
        hits = np.flatnonzero(labels == worst)
        atom_index = int(hits[0]) if hits.size else None

        collector.add(distance, lambda: Witness(
            {**_pair(s1, s2), 'reference_phi1': reference_pair[0].plane_angle,
             'reference_phi2': reference_pair[1].plane_angle},
            atom_index, (None, None), float(mass[worst]), float(reference_mass[worst]),
            distance, 'total variation between densities'))

    details = {'density_kind': reference.kind if reference else None,
               'skipped_mixed_representations': skipped,
               'quantified_over': 'finite settings grid'}
    return collector.report(MEASUREMENT_INDEPENDENCE, grid.describe(), model.name, details)


# ---------------------------------------------------------------------------
# Ràng buộc EPR và tính tất định suy ra
# ---------------------------------------------------------------------------

def check_epr_support_constraints(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                                  tolerance: float = None) -> AuditReport:
    """
    Kiểm tra P1(α | ω, n̂) P2(α | ω, n̂) = 0 trên support, với n̂1 = n̂2 = n̂

    Nhân joint được kiểm tra qua P(α, α | ω, n̂, n̂).

    Args:
        model: Mô hình beable
        psi: Trạng thái
        grid: Lưới setting (chỉ dùng các điểm bằng nhau)
        tolerance: Ngưỡng

    Returns:
        AuditReport: Kết quả kiểm tra
    """
    tolerance = default_tolerance(EPR_SUPPORT) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)

    for s1, s2 in grid.equal_pairs():
        density = model.build_density(s1, s2, psi)
        support = density.support()
        if model.is_factorized:
            p1, p2 = _party_probabilities(model, density, s1, s2, psi)
            same = p1[support] * p2[support]
            lhs = 'P1(a|w,n)P2(a|w,n)'
        else:
            table = model.kernel_table(density, s1, s2, psi)[support]
            same = np.stack([table[:, 0, 0], table[:, 1, 1]], axis=1)
            lhs = 'P(a,a|w,n,n)'
        k, o = np.unravel_index(np.argmax(same), same.shape)
        outcome = 1 - 2 * int(o)
        collector.add(same[k, o], lambda: Witness(
            _pair(s1, s2), int(support[k]), (outcome, outcome), float(same[k, o]), 0.0,
            float(same[k, o]), lhs))

    return collector.report(EPR_SUPPORT, grid.describe(equal_settings_only=True), model.name,
                            {'kernel_form': model.kernel_form})


def check_determinism_on_support(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                                 equal_settings_only: bool = True,
                                 tolerance: float = None) -> AuditReport:
    """
    Kiểm tra xác suất kết quả cục bộ của mỗi atom trên support ∈ {0, 1}

    Args:
        model: Mô hình beable
        psi: Trạng thái
        grid: Lưới setting
        equal_settings_only: Chỉ xét n̂1 = n̂2
        tolerance: Ngưỡng

    Returns:
        AuditReport: Kết quả, details chứa độ lệch riêng của từng bên
    """
    tolerance = default_tolerance(DETERMINISM) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)
    per_party = {'alice': {'max_deviation': 0.0, 'violating_atoms': set()},
                 'bob': {'max_deviation': 0.0, 'violating_atoms': set()}}
    pairs = grid.equal_pairs() if equal_settings_only else grid.pairs()

    for s1, s2 in pairs:
        density = model.build_density(s1, s2, psi)
        support = density.support()
        for party, probabilities in zip(('alice', 'bob'),
                                        _party_probabilities(model, density, s1, s2, psi)):
            # min(p, 1 - p) với p = P(+); giống hệt cho kết quả -
            plus = probabilities[support, 0]
            deviation = np.minimum(plus, 1.0 - plus)
            summary = per_party[party]
            summary['max_deviation'] = max(summary['max_deviation'], float(deviation.max()))
            summary['violating_atoms'].update(int(i) for i in support[deviation > tolerance])
            k = int(np.argmax(deviation))
            outcomes = (1, None) if party == 'alice' else (None, 1)
            collector.add(deviation[k], lambda: Witness(
                _pair(s1, s2), int(support[k]), outcomes, float(plus[k]),
                float(round(plus[k])), float(deviation[k]), f"{party}: P(+|w) not in {{0, 1}}"))

    details = {party: {'max_deviation': summary['max_deviation'],
                       'verdict': HOLDS if summary['max_deviation'] <= tolerance else VIOLATED,
                       'violating_atoms': sorted(summary['violating_atoms'])}
               for party, summary in per_party.items()}
    details['equal_settings_only'] = equal_settings_only
    return collector.report(DETERMINISM, grid.describe(equal_settings_only), model.name, details)


def check_state_factorization(psi: TwoQubitState, grid: SettingsGrid,
                              tolerance: float = None) -> AuditReport:
    """
    So sánh xác suất Born với tích các biên của chính nó

    Returns:
        AuditReport: Vi phạm với trạng thái vướng víu như singlet
    """
    tolerance = default_tolerance(STATE_FACTORIZATION) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)

    for s1, s2 in grid.pairs():
        table = joint_table(psi, s1, s2)
        product = np.outer(table.sum(axis=1), table.sum(axis=0))
        deviation = np.abs(table - product)
        a, b = np.unravel_index(np.argmax(deviation), deviation.shape)
        collector.add(deviation[a, b], lambda: Witness(
            _pair(s1, s2), None, (1 - 2 * int(a), 1 - 2 * int(b)), float(table[a, b]),
            float(product[a, b]), float(deviation[a, b]), 'P(a,b) vs P(a)P(b)'))

    return collector.report(STATE_FACTORIZATION, grid.describe(), 'born-oracle')


# ---------------------------------------------------------------------------
# Các kiểm tra bổ sung
# ---------------------------------------------------------------------------

def check_bounded_means(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                        tolerance: float = None) -> AuditReport:
    """Kiểm tra |Ā| ≤ 1 và |B̄| ≤ 1 cho mọi atom của support"""
    tolerance = default_tolerance(BOUNDED_MEANS) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)

    for s1, s2 in grid.pairs():
        density = model.build_density(s1, s2, psi)
        support = density.support()
        p1, p2 = _party_probabilities(model, density, s1, s2, psi)
        means = np.stack([p1[support, 0] - p1[support, 1],
                          p2[support, 0] - p2[support, 1]], axis=1)
        excess = np.maximum(np.abs(means) - 1.0, 0.0)
        k, party = np.unravel_index(np.argmax(excess), excess.shape)
        collector.add(excess[k, party], lambda: Witness(
            _pair(s1, s2), int(support[k]), (None, None), float(abs(means[k, party])), 1.0,
            float(excess[k, party]), 'A_bar' if party == 0 else 'B_bar'))

    return collector.report(BOUNDED_MEANS, grid.describe(), model.name)


def check_oracle_agreement(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                           tolerance: float = None) -> AuditReport:
    """
    So sánh xác suất kết hợp của mô hình với oracle Born

    details ghi thêm độ lệch so với dạng (1 - ab cos Δ)/4 và dạng in
    (1 + ab cos Δ)/4 để đối chiếu dấu.

    Returns:
        AuditReport: Kết quả kiểm tra
    """
    tolerance = default_tolerance(ORACLE_AGREEMENT) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)
    signs = np.array([[1.0, -1.0], [-1.0, 1.0]])
    derived_deviation = 0.0
    printed_deviation = 0.0

    for s1, s2 in grid.pairs():
        model_table = model_joint_table(model, s1, s2, psi)
        oracle_table = joint_table(psi, s1, s2)
        deviation = np.abs(model_table - oracle_table)
        a, b = np.unravel_index(np.argmax(deviation), deviation.shape)
        collector.add(deviation[a, b], lambda: Witness(
            _pair(s1, s2), None, (1 - 2 * int(a), 1 - 2 * int(b)), float(model_table[a, b]),
            float(oracle_table[a, b]), float(deviation[a, b]), 'model_joint vs born_joint'))

        cos_delta = math.cos(s1.plane_angle - s2.plane_angle)
        derived = (1 - signs * cos_delta) / 4
        printed = (1 + signs * cos_delta) / 4
        derived_deviation = max(derived_deviation, float(np.max(np.abs(model_table - derived))))
        printed_deviation = max(printed_deviation, float(np.max(np.abs(model_table - printed))))

    if derived_deviation <= tolerance:
        note = (f"model joint matches (1 - ab cos d)/4; the printed (1 + ab cos d)/4 form "
                f"deviates by {printed_deviation:.6g}")
    elif printed_deviation <= tolerance:
        note = "model joint matches the printed (1 + ab cos d)/4 form, not the singlet oracle"
    else:
        note = "model joint matches neither cosine form"
    details = {'derived_sign_deviation': derived_deviation,
               'printed_sign_deviation': printed_deviation,
               'note': note}
    return collector.report(ORACLE_AGREEMENT, grid.describe(), model.name, details)


def check_nonsignaling_model(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
                             tolerance: float = None) -> AuditReport:
    """
    Kiểm tra biên quan sát được của mỗi bên không phụ thuộc setting bên kia

    Returns:
        AuditReport: Kết quả kiểm tra
    """
    tolerance = default_tolerance(NONSIGNALING) if tolerance is None else tolerance
    collector = _WitnessCollector(tolerance)
    settings = grid.settings
    n = len(settings)
    tables = np.empty((n, n, 2, 2))
    for i, s1 in enumerate(settings):
        for j, s2 in enumerate(settings):
            tables[i, j] = model_joint_table(model, s1, s2, psi)

    alice = tables.sum(axis=3)  # [i, j, a]
    bob = tables.sum(axis=2)    # [i, j, b]
    for i in range(n):
        spread = alice[i].max(axis=0) - alice[i].min(axis=0)
        o = int(np.argmax(spread))
        hi, lo = int(np.argmax(alice[i, :, o])), int(np.argmin(alice[i, :, o]))
        collector.add(spread[o], lambda: Witness(
            {'phi1': settings[i].plane_angle, 'phi2': settings[hi].plane_angle,
             'phi2_prime': settings[lo].plane_angle}, None, (1 - 2 * o, None),
            float(alice[i, hi, o]), float(alice[i, lo, o]), float(spread[o]),
            "Alice marginal across phi2"))
    for j in range(n):
        spread = bob[:, j].max(axis=0) - bob[:, j].min(axis=0)
        o = int(np.argmax(spread))
        hi, lo = int(np.argmax(bob[:, j, o])), int(np.argmin(bob[:, j, o]))
        collector.add(spread[o], lambda: Witness(
            {'phi1': settings[hi].plane_angle, 'phi1_prime': settings[lo].plane_angle,
             'phi2': settings[j].plane_angle}, None, (None, 1 - 2 * o),
            float(bob[hi, j, o]), float(bob[lo, j, o]), float(spread[o]),
            "Bob marginal across phi1"))

    return collector.report(NONSIGNALING, grid.describe(), model.name)


def full_audit(model: BeableModel, psi: TwoQubitState, grid: SettingsGrid,
               tolerance: float = None) -> List[AuditReport]:
    """
    Chạy toàn bộ các kiểm tra cho một mô hình

    Args:
        model: Mô hình beable
        psi: Trạng thái
        grid: Lưới setting
        tolerance: Ngưỡng chung ghi đè mặc định của từng điều kiện

    Returns:
        List[AuditReport]: Một report cho mỗi điều kiện
    """
    logger.info("Running full audit of model '%s' over %s", model.name, grid.describe())
    reports = [
        check_outcome_independence(model, psi, grid, tolerance),
        check_parameter_independence(model, psi, grid, tolerance),
        check_measurement_independence(model, psi, grid, tolerance),
        check_epr_support_constraints(model, psi, grid, tolerance),
        check_determinism_on_support(model, psi, grid, True, tolerance),
        check_bounded_means(model, psi, grid, tolerance),
        check_oracle_agreement(model, psi, grid, tolerance),
        check_nonsignaling_model(model, psi, grid, tolerance),
    ]
    return reports


def verdict_map(reports: Sequence[AuditReport]) -> Dict[str, str]:
    return {report.condition: report.verdict for report in reports}


class CausalityAuditor:
    """Class chạy kiểm toán và so sánh với kết luận kỳ vọng của mô hình"""

    def __init__(self, grid: SettingsGrid = None, tolerance: float = None):
        self.grid = grid or SettingsGrid.from_step()
        self.tolerance = tolerance

    def audit(self, model: BeableModel, psi: TwoQubitState) -> List[AuditReport]:
        return full_audit(model, psi, self.grid, self.tolerance)

    def expected_mismatches(self, model: BeableModel,
                            reports: Sequence[AuditReport]) -> Dict[str, Dict[str, str]]:
        """
        So sánh kết luận thực tế với bảng kỳ vọng của mô hình

        Returns:
            Dict: condition → {'expected', 'actual'} cho các điều kiện không khớp
        """
        actual = verdict_map(reports)
        mismatches = {}
        for condition, expected in model.expected.items():
            if actual.get(condition) != expected:
                mismatches[condition] = {'expected': expected,
                                         'actual': actual.get(condition, 'missing')}
        if mismatches:
            logger.warning("Model '%s' disagrees with expected verdicts: %s",
                           model.name, mismatches)
        return mismatches

    def audit_many(self, models: Sequence[BeableModel],
                   psi: TwoQubitState) -> Dict[str, List[AuditReport]]:
        return {model.name: self.audit(model, psi) for model in models}

    def audit_matrix(self, models: Sequence[BeableModel], psi: TwoQubitState,
                     conditions: Sequence[str] = None,
                     reports: Mapping[str, List[AuditReport]] = None) -> Dict[str, Dict[str, str]]:
        """
        Bảng mô hình × điều kiện → kết luận

        Args:
            models: Các mô hình
            psi: Trạng thái
            conditions: Các cột điều kiện
            reports: Kết quả audit_many đã có (tùy chọn)
        """
        conditions = conditions or LOCAL_CAUSALITY + (ORACLE_AGREEMENT,)
        reports = reports or self.audit_many(models, psi)
        matrix = {}
        for model in models:
            verdicts = verdict_map(reports[model.name])
            matrix[model.name] = {c: verdicts.get(c, NOT_APPLICABLE) for c in conditions}
        return matrix


# ---------------------------------------------------------------------------
# Mô hình factorized ngẫu nhiên cho kiểm tra tính chất
# ---------------------------------------------------------------------------

def random_factorized_model(rng: np.random.Generator, name: str = 'random-factorized',
                            max_atoms: int = 4) -> BeableModel:
    """
    Sinh mô hình factorized đáp ứng cosin với atom ghim vào setting

    Mỗi atom: θ_ghim = φ_i + k·π/12, bên kia θ = θ_ghim + π (+ lệch ngẫu nhiên);
    trọng số Dirichlet với sàn 0.05.

    Args:
        rng: Bộ sinh số ngẫu nhiên numpy
        name: Tên mô hình
        max_atoms: Số atom tối đa

    Returns:
        BeableModel: Mô hình factorized
    """
    n_atoms = int(rng.integers(1, max_atoms + 1))
    floor = 0.05
    weights = floor + (1.0 - floor * n_atoms) * rng.dirichlet(np.ones(n_atoms))
    anchors = rng.integers(1, 3, size=n_atoms)
    aligned = rng.random(n_atoms) < 0.8
    offsets = np.where(aligned, rng.choice([0, 12], size=n_atoms),
                       rng.integers(0, 24, size=n_atoms)) * math.pi / 12
    extras = np.where(rng.random(n_atoms) < 0.7, 0,
                      rng.integers(1, 24, size=n_atoms)) * math.pi / 12
    recipe = list(zip(weights.tolist(), anchors.tolist(), offsets.tolist(), extras.tolist()))

    def density(s1, s2, psi):
        atoms = []
        for weight, anchor, offset, extra in recipe:
            pinned = (s1 if anchor == 1 else s2).plane_angle + offset
            atoms.append(BeableAtom(weight, pinned, pinned + math.pi + extra))
        return BeableDensity.from_atoms(atoms)

    return BeableModel.factorized(name, density, BeableKernels.cosine_response_1,
                                  BeableKernels.cosine_response_2,
                                  description='Random pinned cosine-response model')


def random_local_model(rng: np.random.Generator, name: str = 'random-local',
                       max_atoms: int = 8) -> BeableModel:
    """
    Sinh mô hình factorized có mật độ không phụ thuộc setting

    Góc ẩn là bội hữu tỉ k·π/12; nhân ngẫu nhiên giữa đáp ứng cosin và đáp ứng dấu.

    Returns:
        BeableModel: Mô hình thỏa OI, PI và MI theo cấu trúc
    """
    n_atoms = int(rng.integers(1, max_atoms + 1))
    weights = rng.dirichlet(np.ones(n_atoms))
    thetas = rng.integers(0, 24, size=(n_atoms, 2)) * math.pi / 12
    atoms = tuple(BeableAtom(w, t1, t2)
                  for w, (t1, t2) in zip(weights.tolist(), thetas.tolist()))
    fixed = BeableDensity.from_atoms(atoms)

    def density(s1, s2, psi):
        return fixed

    if rng.random() < 0.5:
        kernels = (BeableKernels.cosine_response_1, BeableKernels.cosine_response_2)
    else:
        kernels = (BeableKernels.sign_response_1, BeableKernels.sign_response_2)
    return BeableModel.factorized(name, density, *kernels, setting_free=True,
                                  description='Random setting-independent model')


def epr_determinism_property(count: int = 100, seed: int = 0, grid: SettingsGrid = None,
                             max_attempts: int = None) -> Dict:
    """
    Sinh các mô hình factorized thỏa ràng buộc EPR và kiểm tra tính tất định

    Args:
        count: Số mô hình cần thu được
        seed: Seed của bộ sinh
        grid: Lưới setting
        max_attempts: Số lần sinh tối đa

    Returns:
        Dict: Thống kê và danh sách mô hình vi phạm (kỳ vọng rỗng)
    """
    grid = grid or SettingsGrid.from_step()
    rng = np.random.default_rng(seed)
    max_attempts = max_attempts or count * 50
    psi = singlet()

    attempts, accepted = 0, 0
    failures = []
    worst = 0.0
    while accepted < count and attempts < max_attempts:
        model = random_factorized_model(rng, name=f'random-{seed}-{attempts}')
        attempts += 1
        if not check_epr_support_constraints(model, psi, grid).holds:
            continue
        accepted += 1
        report = check_determinism_on_support(model, psi, grid, equal_settings_only=True)
        worst = max(worst, report.max_deviation)
        if not report.holds:
            failures.append(model.name)

    logger.info("EPR determinism property: %d/%d accepted models, %d failures",
                accepted, attempts, len(failures))
    return {
        'seed': seed,
        'attempts': attempts,
        'accepted': accepted,
        'failures': failures,
        'max_determinism_deviation': worst,
        'holds': accepted >= count and not failures
    }
