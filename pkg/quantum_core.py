"""
Module đại số tuyến tính hai qubit và oracle quy tắc Born cho thí nghiệm singlet

Thứ tự cơ sở cố định: (+ +, + -, - +, - -), tức chỉ số = 2*i + j với
i, j = 0 cho kết quả +1 và 1 cho kết quả -1.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from config import TOLERANCE_SETTINGS

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {'x': SIGMA_X, 'y': SIGMA_Y, 'z': SIGMA_Z}

# Alias cho ma trận 4x4 phức (hoặc nhân tử 2x2)
ComplexMatrix4 = np.ndarray


class Outcome(IntEnum):
    """Kết quả đo spin dọc theo trục phân tích"""
    PLUS = 1
    MINUS = -1

    @property
    def index(self) -> int:
        return 0 if self is Outcome.PLUS else 1


OUTCOMES = (Outcome.PLUS, Outcome.MINUS)


def as_outcome(value) -> Outcome:
    """
    Chuyển giá trị sang Outcome, chỉ chấp nhận +1 hoặc -1

    Args:
        value: Giá trị kết quả

    Returns:
        Outcome: Kết quả hợp lệ
    """
    try:
        return Outcome(int(value))
    except (ValueError, TypeError):
        raise ValueError(f"Kết quả đo phải là +1 hoặc -1, nhận được: {value!r}")


def wrap_angle(angle: float) -> float:
    """Đưa góc về khoảng [0, 2π)"""
    wrapped = math.fmod(angle, TWO_PI)
    if wrapped < 0:
        wrapped += TWO_PI
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


@dataclass(frozen=True)
class Setting:
    """
    Hướng của bộ phân tích spin: véc-tơ đơn vị 3D, có thể kèm góc trong mặt phẳng x-z

    Góc φ được đo từ trục ẑ trong mặt phẳng x-z: n̂ = (sin φ, 0, cos φ).
    """
    unit_vector: Tuple[float, float, float]
    angle: Optional[float] = None

    def __post_init__(self):
        vector = tuple(float(c) for c in self.unit_vector)
        if len(vector) != 3:
            raise ValueError("Véc-tơ hướng phải có 3 thành phần")
        norm = math.sqrt(sum(c * c for c in vector))
        if abs(norm - 1.0) > TOLERANCE_SETTINGS['exact']:
            raise ValueError(f"Véc-tơ hướng không đơn vị: |n| = {norm!r}")
        object.__setattr__(self, 'unit_vector', vector)
        if self.angle is not None:
            object.__setattr__(self, 'angle', wrap_angle(float(self.angle)))

    @classmethod
    def from_angle(cls, phi: float) -> 'Setting':
        """Tạo setting từ góc phẳng φ (radian) trong mặt phẳng x-z"""
        phi = wrap_angle(float(phi))
        return cls((math.sin(phi), 0.0, math.cos(phi)), phi)

    @classmethod
    def from_vector(cls, vector: Sequence[float], normalize: bool = False) -> 'Setting':
        """Tạo setting từ véc-tơ 3D (tùy chọn chuẩn hóa)"""
        vector = np.asarray(vector, dtype=float)
        if normalize:
            norm = np.linalg.norm(vector)
            if norm == 0:
                raise ValueError("Không thể chuẩn hóa véc-tơ không")
            vector = vector / norm
        return cls(tuple(vector.tolist()))

    @property
    def plane_angle(self) -> float:
        """
        Góc φ trong mặt phẳng x-z

        Returns:
            float: Góc trong [0, 2π)
        """
        if self.angle is not None:
            return self.angle
        x, y, z = self.unit_vector
        if abs(y) > TOLERANCE_SETTINGS['exact']:
            raise ValueError(f"Setting nằm ngoài mặt phẳng x-z: {self.unit_vector}")
        return wrap_angle(math.atan2(x, z))

    def dot(self, other: 'Setting') -> float:
        return float(np.dot(self.unit_vector, other.unit_vector))


@dataclass(frozen=True)
class SettingBatch:
    """
    Nhiều setting phẳng cùng lúc

    plane_angle là cột (n, 1) nên nhân cục bộ viết theo numpy trả về mảng
    (n, số atom) thay vì (số atom,).
    """
    angles: np.ndarray

    def __post_init__(self):
        angles = np.mod(np.asarray(self.angles, dtype=float).reshape(-1), TWO_PI)
        angles.setflags(write=False)
        object.__setattr__(self, 'angles', angles)

    def __len__(self) -> int:
        return len(self.angles)

    @property
    def plane_angle(self) -> np.ndarray:
        return self.angles[:, None]


@dataclass(frozen=True)
class TwoQubitState:
    """Trạng thái thuần hai qubit, 4 biên độ phức theo thứ tự (+ +, + -, - +, - -)"""
    amplitudes: np.ndarray = field(compare=False)

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amplitudes.shape != (4,):
            raise ValueError("Trạng thái hai qubit cần đúng 4 biên độ")
        norm_sq = float(np.vdot(amplitudes, amplitudes).real)
        if abs(norm_sq - 1.0) > TOLERANCE_SETTINGS['exact']:
            raise ValueError(f"Trạng thái chưa chuẩn hóa: ||ψ||² = {norm_sq!r}")
        amplitudes.setflags(write=False)
        object.__setattr__(self, 'amplitudes', amplitudes)

    @classmethod
    def normalized(cls, amplitudes: Sequence[complex]) -> 'TwoQubitState':
        vector = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ValueError("Không thể chuẩn hóa véc-tơ không")
        return cls(vector / norm)

    def amplitude(self, a, b) -> complex:
        """Biên độ tại cặp kết quả (α, β) trong cơ sở z"""
        return complex(self.amplitudes[2 * as_outcome(a).index + as_outcome(b).index])

    def as_matrix(self) -> np.ndarray:
        """Ma trận 2x2 Ψ[i, j] với i là qubit 1, j là qubit 2"""
        return self.amplitudes.reshape(2, 2)

    def with_global_phase(self, gamma: float) -> 'TwoQubitState':
        return TwoQubitState(np.exp(1j * gamma) * self.amplitudes)

    def __eq__(self, other):
        if not isinstance(other, TwoQubitState):
            return NotImplemented
        return np.array_equal(self.amplitudes, other.amplitudes)

    def __hash__(self):
        return hash(self.amplitudes.tobytes())


def singlet() -> TwoQubitState:
    """
    Trạng thái singlet (|+-> - |-+>)/√2

    Returns:
        TwoQubitState: Biên độ (0, 1/√2, -1/√2, 0)
    """
    s = 1.0 / math.sqrt(2.0)
    return TwoQubitState(np.array([0.0, s, -s, 0.0], dtype=complex))


def spin_up(vector: Sequence[float]) -> np.ndarray:
    """Véc-tơ riêng trị +1 của σ·n̂ (một qubit)"""
    x, y, z = (float(c) for c in vector)
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x)
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)], dtype=complex)


def product_state(first: Sequence[complex], second: Sequence[complex]) -> TwoQubitState:
    """Trạng thái tích |u>|v> (mỗi nhân tử được chuẩn hóa)"""
    return TwoQubitState.normalized(np.kron(np.asarray(first, dtype=complex),
                                            np.asarray(second, dtype=complex)))


def product_z(a, b) -> TwoQubitState:
    """Trạng thái tích của hai trạng thái riêng σ_z, ví dụ |+z>|-z>"""
    kets = {Outcome.PLUS: [1, 0], Outcome.MINUS: [0, 1]}
    return product_state(kets[as_outcome(a)], kets[as_outcome(b)])


def pauli_along(s: Setting) -> np.ndarray:
    """
    Toán tử spin σ_n = n·σ cho một hạt

    Args:
        s: Hướng phân tích

    Returns:
        np.ndarray: Ma trận Hermitian 2x2, vết 0, trị riêng ±1
    """
    nx, ny, nz = s.unit_vector
    return nx * SIGMA_X + ny * SIGMA_Y + nz * SIGMA_Z


def local_operator(single: np.ndarray, party: int) -> np.ndarray:
    """Nâng toán tử 2x2 lên 4x4: party=1 → O⊗I, party=2 → I⊗O"""
    if party == 1:
        return np.kron(single, IDENTITY2)
    if party == 2:
        return np.kron(IDENTITY2, single)
    raise ValueError(f"party phải là 1 hoặc 2, nhận được: {party}")


def is_hermitian(matrix: np.ndarray, tolerance: float = None) -> bool:
    tolerance = TOLERANCE_SETTINGS['exact'] if tolerance is None else tolerance
    return bool(np.max(np.abs(matrix - matrix.conj().T)) <= tolerance)


def is_unitary(matrix: np.ndarray, tolerance: float = None) -> bool:
    tolerance = TOLERANCE_SETTINGS['exact'] if tolerance is None else tolerance
    identity = np.eye(matrix.shape[0])
    return bool(np.max(np.abs(matrix.conj().T @ matrix - identity)) <= tolerance)


def _projector(s: Setting, outcome: Outcome) -> np.ndarray:
    return 0.5 * (IDENTITY2 + int(outcome) * pauli_along(s))


def joint_table(psi: TwoQubitState, s1: Setting, s2: Setting) -> np.ndarray:
    """
    Bảng xác suất Born cho cả bốn cặp kết quả

    Args:
        psi: Trạng thái hai qubit
        s1: Hướng phân tích của Alice
        s2: Hướng phân tích của Bob

    Returns:
        np.ndarray: Mảng 2x2, phần tử [i, j] ứng với (α, β) theo chỉ số Outcome
    """
    psi_matrix = psi.as_matrix()
    table = np.empty((2, 2))
    for a in OUTCOMES:
        left = _projector(s1, a) @ psi_matrix
        for b in OUTCOMES:
            # <ψ|A⊗B|ψ> = Tr(Ψ† A Ψ B^T)
            value = np.sum(psi_matrix.conj() * (left @ _projector(s2, b).T)).real
            table[a.index, b.index] = value
    return np.clip(table, 0.0, 1.0)


def born_joint(psi: TwoQubitState, s1: Setting, s2: Setting, a, b) -> float:
    """
    Xác suất Born P(α,β | n̂1, n̂2, ψ) = |<α_n1, β_n2|ψ>|²

    Args:
        psi: Trạng thái hai qubit
        s1, s2: Hướng phân tích
        a, b: Kết quả ±1

    Returns:
        float: Xác suất trong [0, 1]
    """
    a, b = as_outcome(a), as_outcome(b)
    return float(joint_table(psi, s1, s2)[a.index, b.index])


def correlation(psi: TwoQubitState, s1: Setting, s2: Setting) -> float:
    """Tương quan E = Σ αβ P(α,β)"""
    table = joint_table(psi, s1, s2)
    return float(table[0, 0] - table[0, 1] - table[1, 0] + table[1, 1])


def marginal(psi: TwoQubitState, s1: Setting, s2: Setting, party: int) -> np.ndarray:
    """Phân bố biên của một bên: [P(+), P(-)]"""
    table = joint_table(psi, s1, s2)
    return table.sum(axis=1) if party == 1 else table.sum(axis=0)


def expectation(psi: TwoQubitState, operator: np.ndarray) -> float:
    """Giá trị trung bình <ψ|O|ψ> (phần thực)"""
    return float(np.vdot(psi.amplitudes, operator @ psi.amplitudes).real)


def check_anticorrelation_operator(psi: TwoQubitState) -> Dict[str, float]:
    """
    Kiểm tra đồng nhất thức (σ_k⊗I + I⊗σ_k)|ψ> = 0 với k = x, y, z

    Args:
        psi: Trạng thái hai qubit

    Returns:
        Dict[str, float]: Chuẩn của phần dư theo từng trục
    """
    residuals = {}
    for axis, sigma in PAULI.items():
        total_spin = local_operator(sigma, 1) + local_operator(sigma, 2)
        residuals[axis] = float(np.linalg.norm(total_spin @ psi.amplitudes))
    logger.debug("Anticorrelation residuals: %s", residuals)
    return residuals


def commutator(operator_a: np.ndarray, operator_b: np.ndarray) -> np.ndarray:
    """Giao hoán tử [O_A, O_B] = O_A·O_B - O_B·O_A"""
    return operator_a @ operator_b - operator_b @ operator_a


def local_unitary_kick(psi: TwoQubitState, operator_b: np.ndarray, dt: float) -> TwoQubitState:
    """
    Tiến hóa |ψ(t+δt)> = exp(-i δt O_B)|ψ(t)>

    Với O_B² = I dùng đồng nhất thức chính xác cos(δt)·I - i sin(δt)·O_B;
    trường hợp Hermitian tổng quát dùng phân tích trị riêng.

    Args:
        psi: Trạng thái ban đầu
        operator_b: Toán tử Hermitian 4x4
        dt: Bước thời gian

    Returns:
        TwoQubitState: Trạng thái sau cú hích
    """
    operator_b = np.asarray(operator_b, dtype=complex)
    if operator_b.shape != (4, 4):
        raise ValueError("O_B phải là ma trận 4x4")
    if not is_hermitian(operator_b):
        raise ValueError("O_B không Hermitian, không sinh tiến hóa unita")

    identity = np.eye(4, dtype=complex)
    if np.max(np.abs(operator_b @ operator_b - identity)) <= TOLERANCE_SETTINGS['exact']:
        unitary = math.cos(dt) * identity - 1j * math.sin(dt) * operator_b
    else:
        eigenvalues, eigenvectors = np.linalg.eigh(operator_b)
        unitary = eigenvectors @ np.diag(np.exp(-1j * dt * eigenvalues)) @ eigenvectors.conj().T

    evolved = unitary @ psi.amplitudes
    # Chuẩn hóa lại để loại sai số làm tròn
    return TwoQubitState(evolved / np.linalg.norm(evolved))


def check_local_commutativity(psi: TwoQubitState, operator_a: np.ndarray,
                              operator_b: np.ndarray, dt: float) -> Dict:
    """
    So sánh <O_A> trước và sau cú hích cục bộ của Bob

    Returns:
        Dict: commutator_norm, expectation_before, expectation_after, deviation
    """
    before = expectation(psi, operator_a)
    after = expectation(local_unitary_kick(psi, operator_b, dt), operator_a)
    return {
        'commutator_norm': float(np.linalg.norm(commutator(operator_a, operator_b))),
        'expectation_before': before,
        'expectation_after': after,
        'deviation': abs(after - before)
    }


def check_nonsignaling_quantum(psi: TwoQubitState, s1: Setting, s2: Setting,
                               s2_prime: Setting) -> Dict:
    """
    Kiểm tra biên của Alice không phụ thuộc setting của Bob

    Args:
        psi: Trạng thái hai qubit
        s1: Setting của Alice
        s2, s2_prime: Hai setting khác nhau của Bob

    Returns:
        Dict: Biên hai phía và độ lệch lớn nhất theo α
    """
    first = marginal(psi, s1, s2, party=1)
    second = marginal(psi, s1, s2_prime, party=1)
    deviation = float(np.max(np.abs(first - second)))
    return {
        'marginal': first.tolist(),
        'marginal_prime': second.tolist(),
        'max_deviation': deviation
    }


def nonsignaling_sweep(psi: TwoQubitState, angles: Iterable[float]) -> Dict:
    """
    Quét mọi bộ ba (φ1, φ2, φ2') trên lưới góc, cho cả hai phía

    Returns:
        Dict: Số điểm, độ lệch lớn nhất tổng và của từng phía
    """
    settings = [Setting.from_angle(phi) for phi in angles]
    alice_marginals = np.array([[marginal(psi, s1, s2, party=1) for s2 in settings]
                                for s1 in settings])
    bob_marginals = np.array([[marginal(psi, s1, s2, party=2) for s2 in settings]
                              for s1 in settings])
    # Biên của Alice theo s2 và của Bob theo s1: lấy chênh lệch lớn nhất trên trục còn lại
    alice_spread = alice_marginals.max(axis=1) - alice_marginals.min(axis=1)
    bob_spread = bob_marginals.max(axis=0) - bob_marginals.min(axis=0)
    worst = float(max(alice_spread.max(), bob_spread.max()))
    logger.info("Nonsignaling sweep over %d angles: max deviation %.3e", len(settings), worst)
    return {
        'points': len(settings),
        'max_deviation': worst,
        'alice_max_deviation': float(alice_spread.max()),
        'bob_max_deviation': float(bob_spread.max())
    }
