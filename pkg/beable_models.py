"""
Module các mô hình beable: mật độ ρ(ω | n̂1, n̂2, ψ) và nhân xác suất kết quả

Mật độ delta được biểu diễn bằng danh sách atom có trọng số; mật độ liên tục
bằng lưới cầu phương đều trên λ ∈ [0, 2π). Mọi nhân (kernel) được vector hóa
theo atom: nhận cả mật độ và trả về mảng xác suất, mỗi phần tử ứng với một atom.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import GRID_SETTINGS, MODEL_SETTINGS, TOLERANCE_SETTINGS
from quantum_core import (OUTCOMES, Outcome, Setting, TwoQubitState, as_outcome,
                          joint_table, wrap_angle)

logger = logging.getLogger(__name__)

FACTORIZED = 'factorized'
JOINT = 'joint'
KERNEL_FORMS = (FACTORIZED, JOINT)


class MalformedModelError(ValueError):
    """Mô hình không hợp lệ: khối lượng mật độ ≠ 1, nhân không chuẩn hóa, file sai"""


class UnknownModelError(ValueError):
    """Không tìm thấy mô hình theo tên hoặc đường dẫn"""


@dataclass(frozen=True)
class BeableAtom:
    """Một điểm có trọng số của hỗn hợp delta: ω = (λ, θ1, θ2, |θ>)"""
    weight: float
    theta1: float = 0.0
    theta2: float = 0.0
    lam: Optional[float] = None
    state: Optional[TwoQubitState] = None

    def __post_init__(self):
        if not self.weight >= 0:
            raise MalformedModelError(f"Trọng số atom âm: {self.weight!r}")
        object.__setattr__(self, 'weight', float(self.weight))
        object.__setattr__(self, 'theta1', wrap_angle(float(self.theta1)))
        object.__setattr__(self, 'theta2', wrap_angle(float(self.theta2)))
        if self.lam is not None:
            object.__setattr__(self, 'lam', float(self.lam))


@dataclass(frozen=True)
class BeableDensity:
    """Mật độ beable: danh sách atom (hỗn hợp delta) hoặc lưới cầu phương"""
    atoms: Tuple[BeableAtom, ...]
    kind: str = 'atoms'

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise MalformedModelError("Mật độ beable rỗng")
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'weights', np.array([a.weight for a in atoms]))
        object.__setattr__(self, 'theta1', np.array([a.theta1 for a in atoms]))
        object.__setattr__(self, 'theta2', np.array([a.theta2 for a in atoms]))
        object.__setattr__(self, 'lam', np.array([np.nan if a.lam is None else a.lam
                                                  for a in atoms]))

    @classmethod
    def from_atoms(cls, atoms: Sequence[BeableAtom]) -> 'BeableDensity':
        return cls(tuple(atoms), 'atoms')

    @classmethod
    def uniform_grid(cls, cells: int = None) -> 'BeableDensity':
        """
        Lưới cầu phương đều trên λ ∈ [0, 2π), tâm ô (k + 1/2)·2π/N

        Args:
            cells: Số ô N

        Returns:
            BeableDensity: Mật độ dạng lưới, mỗi ô trọng số 1/N
        """
        cells = cells or GRID_SETTINGS['quadrature_cells']
        if cells < 1:
            raise MalformedModelError(f"Số ô lưới phải dương: {cells}")
        atoms = []
        for k in range(cells):
            lam = (k + 0.5) * 2 * math.pi / cells
            atoms.append(BeableAtom(1.0 / cells, lam, lam + math.pi, lam))
        return cls(tuple(atoms), 'grid')

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def support(self, threshold: float = None) -> np.ndarray:
        """Chỉ số các atom có trọng số ≥ ngưỡng support"""
        threshold = TOLERANCE_SETTINGS['support_weight'] if threshold is None else threshold
        return np.flatnonzero(self.weights >= threshold)

    def state_for(self, index: int, psi: TwoQubitState) -> TwoQubitState:
        state = self.atoms[index].state
        return psi if state is None else state


@dataclass(frozen=True)
class ConditionalMeans:
    """Giá trị trung bình điều kiện cục bộ Ā, B̄ của một atom"""
    a_bar: float
    b_bar: float

    @property
    def bounded(self) -> bool:
        limit = 1.0 + TOLERANCE_SETTINGS['exact']
        return abs(self.a_bar) <= limit and abs(self.b_bar) <= limit


DensityBuilder = Callable[[Setting, Setting, TwoQubitState], BeableDensity]
JointKernel = Callable[[BeableDensity, Setting, Setting, TwoQubitState, Outcome, Outcome], np.ndarray]
PartyKernel = Callable[[BeableDensity, Setting, TwoQubitState, Outcome], np.ndarray]


@dataclass(frozen=True)
class BeableModel:
    """
    Mô hình beable: bộ dựng mật độ và nhân xác suất kết quả

    Mô hình factorized cung cấp thêm kernel1, kernel2 với kernel = kernel1·kernel2.
    setting_free đánh dấu mật độ dựng ra như nhau với mọi cặp setting.
    """
    name: str
    density_builder: DensityBuilder
    kernel: JointKernel
    kernel_form: str = JOINT
    kernel1: Optional[PartyKernel] = None
    kernel2: Optional[PartyKernel] = None
    description: str = ''
    expected: Mapping[str, str] = field(default_factory=dict, compare=False)
    setting_free: bool = False

    def __post_init__(self):
        if self.kernel_form not in KERNEL_FORMS:
            raise MalformedModelError(f"kernel_form không hỗ trợ: {self.kernel_form!r}")
        if self.kernel_form == FACTORIZED and (self.kernel1 is None or self.kernel2 is None):
            raise MalformedModelError(f"Mô hình factorized '{self.name}' thiếu kernel1/kernel2")

    @classmethod
    def factorized(cls, name: str, density_builder: DensityBuilder, kernel1: PartyKernel,
                   kernel2: PartyKernel, **kwargs) -> 'BeableModel':
        """Tạo mô hình factorized với kernel = kernel1·kernel2"""
        def kernel(density, s1, s2, psi, a, b):
            return kernel1(density, s1, psi, a) * kernel2(density, s2, psi, b)

        return cls(name, density_builder, kernel, FACTORIZED, kernel1, kernel2, **kwargs)

    @classmethod
    def joint(cls, name: str, density_builder: DensityBuilder, kernel: JointKernel,
              **kwargs) -> 'BeableModel':
        return cls(name, density_builder, kernel, JOINT, **kwargs)

    @property
    def is_factorized(self) -> bool:
        return self.kernel_form == FACTORIZED

    def build_density(self, s1: Setting, s2: Setting, psi: TwoQubitState) -> BeableDensity:
        """
        Dựng mật độ và kiểm tra tổng khối lượng = 1

        Returns:
            BeableDensity: Mật độ hợp lệ
        """
        density = self.density_builder(s1, s2, psi)
        mass = density.total_mass
        if abs(mass - 1.0) > TOLERANCE_SETTINGS['exact']:
            raise MalformedModelError(
                f"Mô hình '{self.name}': tổng khối lượng mật độ = {mass!r} ≠ 1")
        return density

    def kernel_table(self, density: BeableDensity, s1: Setting, s2: Setting,
                     psi: TwoQubitState) -> np.ndarray:
        """
        Nhân xác suất cho mọi atom và cặp kết quả

        Returns:
            np.ndarray: Mảng (số atom, 2, 2)
        """
        table = np.empty((len(density), 2, 2))
        for a in OUTCOMES:
            for b in OUTCOMES:
                table[:, a.index, b.index] = self.kernel(density, s1, s2, psi, a, b)
        return table

    def party_table(self, density: BeableDensity, s: Setting, psi: TwoQubitState,
                    party: int) -> np.ndarray:
        """
        Nhân cục bộ P_i(kết quả | ω, n̂_i) của mô hình factorized

        Returns:
            np.ndarray: Mảng (số atom, 2)
        """
        if not self.is_factorized:
            raise MalformedModelError(f"Mô hình '{self.name}' không có nhân cục bộ")
        kernel = self.kernel1 if party == 1 else self.kernel2
        return np.stack([kernel(density, s, psi, o) for o in OUTCOMES], axis=1)


# ---------------------------------------------------------------------------
# Các phép toán trên mô hình
# ---------------------------------------------------------------------------

def model_joint_table(model: BeableModel, s1: Setting, s2: Setting,
                      psi: TwoQubitState) -> np.ndarray:
    """
    P(α,β | n̂1, n̂2, ψ) = Σ_ω ρ(ω) P(α,β | ω, ...) cho cả bốn cặp

    Returns:
        np.ndarray: Bảng 2x2
    """
    density = model.build_density(s1, s2, psi)
    table = model.kernel_table(density, s1, s2, psi)
    return np.einsum('i,iab->ab', density.weights, table)


def model_joint(model: BeableModel, s1: Setting, s2: Setting, psi: TwoQubitState,
                a, b) -> float:
    """
    Xác suất kết hợp của mô hình, tích phân nhân theo mật độ

    Args:
        model: Mô hình beable
        s1, s2: Hướng phân tích
        psi: Trạng thái
        a, b: Kết quả ±1

    Returns:
        float: Xác suất trong [0, 1]
    """
    a, b = as_outcome(a), as_outcome(b)
    return float(model_joint_table(model, s1, s2, psi)[a.index, b.index])


def model_correlation(model: BeableModel, s1: Setting, s2: Setting,
                      psi: TwoQubitState) -> float:
    """Tương quan E = Σ αβ P(α,β) của mô hình"""
    table = model_joint_table(model, s1, s2, psi)
    return float(table[0, 0] - table[0, 1] - table[1, 0] + table[1, 1])


def conditional_means(model: BeableModel, atom: BeableAtom, s1: Setting, s2: Setting,
                      psi: TwoQubitState) -> ConditionalMeans:
    """
    Trung bình điều kiện cục bộ Ā = Σ α P1(α|ω, n̂1), B̄ = Σ β P2(β|ω, n̂2)

    Với nhân joint, P1 và P2 là các biên của nhân.

    Args:
        model: Mô hình beable
        atom: Beable ω
        s1, s2: Hướng phân tích
        psi: Trạng thái

    Returns:
        ConditionalMeans: (a_bar, b_bar)
    """
    density = BeableDensity.from_atoms([atom])
    if model.is_factorized:
        p1 = model.party_table(density, s1, psi, party=1)[0]
        p2 = model.party_table(density, s2, psi, party=2)[0]
    else:
        table = model.kernel_table(density, s1, s2, psi)[0]
        p1, p2 = table.sum(axis=1), table.sum(axis=0)
    return ConditionalMeans(float(p1[0] - p1[1]), float(p2[0] - p2[1]))


# ---------------------------------------------------------------------------
# Nhân dựng sẵn
# ---------------------------------------------------------------------------

class BeableKernels:
    """Class chứa các nhân xác suất dùng chung"""

    @staticmethod
    def cosine_response_1(density: BeableDensity, s1: Setting, psi: TwoQubitState,
                          a: Outcome) -> np.ndarray:
        """P1(α | θ1, φ1) = (1 + α cos(φ1 - θ1))/2"""
        return 0.5 * (1 + int(a) * np.cos(s1.plane_angle - density.theta1))

    @staticmethod
    def cosine_response_2(density: BeableDensity, s2: Setting, psi: TwoQubitState,
                          b: Outcome) -> np.ndarray:
        """P2(β | θ2, φ2) = (1 + β cos(φ2 - θ2))/2"""
        return 0.5 * (1 + int(b) * np.cos(s2.plane_angle - density.theta2))

    @staticmethod
    def sign_response_1(density: BeableDensity, s1: Setting, psi: TwoQubitState,
                        a: Outcome) -> np.ndarray:
        """Đáp ứng tất định sign(cos(φ1 - θ1)), sign(0) = +1"""
        sign = np.where(np.cos(s1.plane_angle - density.theta1) >= 0, 1, -1)
        return (sign == int(a)).astype(float)

    @staticmethod
    def sign_response_2(density: BeableDensity, s2: Setting, psi: TwoQubitState,
                        b: Outcome) -> np.ndarray:
        sign = np.where(np.cos(s2.plane_angle - density.theta2) >= 0, 1, -1)
        return (sign == int(b)).astype(float)

    @staticmethod
    def sawtooth_1(density: BeableDensity, s1: Setting, psi: TwoQubitState,
                   a: Outcome) -> np.ndarray:
        """Alice: 1 nếu sign(cos(φ1 - λ)) = α"""
        sign = np.where(np.cos(s1.plane_angle - density.lam) >= 0, 1, -1)
        return (sign == int(a)).astype(float)

    @staticmethod
    def sawtooth_2(density: BeableDensity, s2: Setting, psi: TwoQubitState,
                   b: Outcome) -> np.ndarray:
        """Bob: 1 nếu -sign(cos(φ2 - λ)) = β"""
        sign = np.where(np.cos(s2.plane_angle - density.lam) >= 0, 1, -1)
        return (-sign == int(b)).astype(float)

    @staticmethod
    def born(density: BeableDensity, s1: Setting, s2: Setting, psi: TwoQubitState,
             a: Outcome, b: Outcome) -> np.ndarray:
        """Nhân Born trên trạng thái gắn với từng atom"""
        values = np.empty(len(density))
        tables = {}
        for i in range(len(density)):
            state = density.state_for(i, psi)
            if state not in tables:
                tables[state] = joint_table(state, s1, s2)
            values[i] = tables[state][a.index, b.index]
        return values


class BeableModels:
    """Class chứa các mô hình beable dựng sẵn"""

    @staticmethod
    def beltrametti_bugajski() -> BeableModel:
        """
        Biểu diễn ontic: ρ = δ(|θ> - |ψ>), một atom trọng số 1 mang nhãn ψ

        Returns:
            BeableModel: Mô hình nhân joint (Born trên trạng thái gắn nhãn)
        """
        def density(s1, s2, psi):
            return BeableDensity.from_atoms([BeableAtom(1.0, state=psi)])

        return BeableModel.joint('beltrametti-bugajski', density, BeableKernels.born,
                                 description=MODEL_SETTINGS['beltrametti-bugajski']['description'],
                                 expected=MODEL_SETTINGS['beltrametti-bugajski']['expected'])

    @staticmethod
    def scully(printed_sign: bool = False) -> BeableModel:
        """
        Mô hình Scully: ρ = ½ δ(θ2-θ1-π)[δ(θ1-φ1) + δ(θ1-φ1-π)]

        Args:
            printed_sign: Bỏ dịch π giữa θ1 và θ2, cho dạng (1 + αβ cos Δ)/4

        Returns:
            BeableModel: Mô hình factorized với đáp ứng cosin
        """
        shift = 0.0 if printed_sign else math.pi

        def density(s1, s2, psi):
            phi1 = s1.plane_angle
            return BeableDensity.from_atoms([
                BeableAtom(0.5, phi1, phi1 + shift),
                BeableAtom(0.5, phi1 + math.pi, phi1 + math.pi + shift),
            ])

        key = 'scully-printed-sign' if printed_sign else 'scully'
        return BeableModel.factorized(key, density, BeableKernels.cosine_response_1,
                                      BeableKernels.cosine_response_2,
                                      description=MODEL_SETTINGS[key]['description'],
                                      expected=MODEL_SETTINGS[key]['expected'])

    @staticmethod
    def argaman_dilorenzo() -> BeableModel:
        """
        Mật độ đối xứng bốn delta, trọng số ¼, θ2 = θ1 + π,
        θ1 lần lượt ghim tại φ1, φ1+π, φ2-π, φ2
        """
        def density(s1, s2, psi):
            phi1, phi2 = s1.plane_angle, s2.plane_angle
            pins = (phi1, phi1 + math.pi, phi2 - math.pi, phi2)
            return BeableDensity.from_atoms([BeableAtom(0.25, t, t + math.pi) for t in pins])

        return BeableModel.factorized('argaman-dilorenzo', density,
                                      BeableKernels.cosine_response_1,
                                      BeableKernels.cosine_response_2,
                                      description=MODEL_SETTINGS['argaman-dilorenzo']['description'],
                                      expected=MODEL_SETTINGS['argaman-dilorenzo']['expected'])

    @staticmethod
    def sawtooth_local(cells: int = None) -> BeableModel:
        """
        Mô hình địa phương tất định: λ đều trên [0, 2π), không phụ thuộc setting

        Args:
            cells: Số ô lưới cầu phương

        Returns:
            BeableModel: Mô hình factorized với tương quan răng cưa -1 + 2Δ/π
        """
        grid = BeableDensity.uniform_grid(cells)

        def density(s1, s2, psi):
            return grid

        return BeableModel.factorized('sawtooth', density, BeableKernels.sawtooth_1,
                                      BeableKernels.sawtooth_2,
                                      description=MODEL_SETTINGS['sawtooth']['description'],
                                      expected=MODEL_SETTINGS['sawtooth']['expected'],
                                      setting_free=True)


def builtin_beltrametti_bugajski() -> BeableModel:
    return BeableModels.beltrametti_bugajski()


def builtin_scully(printed_sign: bool = False) -> BeableModel:
    return BeableModels.scully(printed_sign)


def builtin_argaman_dilorenzo() -> BeableModel:
    return BeableModels.argaman_dilorenzo()


def builtin_sawtooth_local(cells: int = None) -> BeableModel:
    return BeableModels.sawtooth_local(cells)


# ---------------------------------------------------------------------------
# File định nghĩa mô hình (xem MODEL_FORMAT.md)
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r'\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/]))')
_SYMBOLS = ('phi1', 'phi2', 'pi', 'lambda')


@dataclass(frozen=True)
class AngleExpr:
    """Biểu thức góc c0 + c1·φ1 + c2·φ2 + k·π + cλ·λ với hệ số hữu tỉ"""
    const: Fraction = Fraction(0)
    phi1: Fraction = Fraction(0)
    phi2: Fraction = Fraction(0)
    pi: Fraction = Fraction(0)
    lam: Fraction = Fraction(0)

    def evaluate(self, phi1: float, phi2: float, lam: float = 0.0) -> float:
        return (float(self.const) + float(self.phi1) * phi1 + float(self.phi2) * phi2
                + float(self.pi) * math.pi + float(self.lam) * lam)

    @property
    def uses_lambda(self) -> bool:
        return self.lam != 0

    @property
    def uses_settings(self) -> bool:
        return self.phi1 != 0 or self.phi2 != 0


def _tokenize(text: str) -> List[Tuple[str, str]]:
    tokens, position = [], 0
    text = text.rstrip()
    while position < len(text):
        match = _TOKEN.match(text, position)
        if match is None or match.end() == position:
            raise MalformedModelError(f"Ký tự không hợp lệ trong biểu thức góc: {text!r}")
        kind = match.lastgroup
        tokens.append((kind, match.group(kind)))
        position = match.end()
    return tokens


def parse_angle_expr(text) -> AngleExpr:
    """
    Đọc biểu thức góc theo ngữ pháp trong MODEL_FORMAT.md

    Args:
        text: Chuỗi như "phi1 + pi", "-1/2 phi2 + 3/4 pi", hoặc một số

    Returns:
        AngleExpr: Biểu thức với hệ số hữu tỉ chính xác
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return AngleExpr(const=Fraction(str(text)))
    if not isinstance(text, str) or not text.strip():
        raise MalformedModelError(f"Biểu thức góc rỗng hoặc sai kiểu: {text!r}")

    tokens = _tokenize(text)
    coefficients = {'const': Fraction(0), 'phi1': Fraction(0), 'phi2': Fraction(0),
                    'pi': Fraction(0), 'lambda': Fraction(0)}
    position = 0
    first = True
    while position < len(tokens):
        sign = 1
        kind, value = tokens[position]
        if kind == 'op' and value in '+-':
            sign = -1 if value == '-' else 1
            position += 1
        elif not first:
            raise MalformedModelError(f"Thiếu toán tử '+'/'-' trong: {text!r}")
        first = False

        coefficient = None
        if position < len(tokens) and tokens[position][0] == 'num':
            coefficient = Fraction(tokens[position][1])
            position += 1
            if position + 1 < len(tokens) and tokens[position] == ('op', '/') \
                    and tokens[position + 1][0] == 'num':
                denominator = Fraction(tokens[position + 1][1])
                if denominator == 0:
                    raise MalformedModelError(f"Chia cho 0 trong: {text!r}")
                coefficient /= denominator
                position += 2
            if position < len(tokens) and tokens[position] == ('op', '*'):
                position += 1

        symbol = None
        if position < len(tokens) and tokens[position][0] == 'name':
            symbol = tokens[position][1]
            if symbol not in _SYMBOLS:
                raise MalformedModelError(f"Ký hiệu không hỗ trợ '{symbol}' trong: {text!r}")
            position += 1

        if coefficient is None and symbol is None:
            raise MalformedModelError(f"Thiếu số hạng trong: {text!r}")
        coefficients[symbol or 'const'] += sign * (coefficient if coefficient is not None else 1)

    return AngleExpr(coefficients['const'], coefficients['phi1'], coefficients['phi2'],
                     coefficients['pi'], coefficients['lambda'])


def _parse_weight(value) -> Fraction:
    try:
        weight = Fraction(str(value).replace(' ', ''))
    except (ValueError, ZeroDivisionError):
        raise MalformedModelError(f"Trọng số không hợp lệ: {value!r}")
    if weight < 0:
        raise MalformedModelError(f"Trọng số âm: {value!r}")
    return weight


_PRESETS = {
    'cosine-response': (FACTORIZED, BeableKernels.cosine_response_1, BeableKernels.cosine_response_2),
    'sign-response': (FACTORIZED, BeableKernels.sign_response_1, BeableKernels.sign_response_2),
    'born': (JOINT, BeableKernels.born, None),
}


def model_from_definition(definition: Dict) -> BeableModel:
    """
    Dựng mô hình từ định nghĩa dạng dict (nội dung file JSON)

    Args:
        definition: Dict với name, kernel_form, kernel, atoms | grid_cells, expected

    Returns:
        BeableModel: Mô hình đã dựng
    """
    if not isinstance(definition, dict):
        raise MalformedModelError("Định nghĩa mô hình phải là một object JSON")
    for required in ('name', 'kernel_form', 'kernel'):
        if required not in definition:
            raise MalformedModelError(f"Thiếu trường bắt buộc: {required}")

    name = str(definition['name'])
    kernel_form = definition['kernel_form']
    preset = definition['kernel']
    if preset not in _PRESETS:
        raise MalformedModelError(f"Kernel preset không hỗ trợ: {preset!r}")
    preset_form, first, second = _PRESETS[preset]
    if kernel_form != preset_form:
        raise MalformedModelError(
            f"Kernel '{preset}' cần kernel_form = {preset_form}, nhận được {kernel_form!r}")

    has_atoms, has_grid = 'atoms' in definition, 'grid_cells' in definition
    if has_atoms == has_grid:
        raise MalformedModelError("Cần đúng một trong hai trường: atoms hoặc grid_cells")

    if has_grid:
        cells = definition['grid_cells']
        if not isinstance(cells, int) or cells < 1:
            raise MalformedModelError(f"grid_cells phải là số nguyên dương: {cells!r}")
        entries = [{'weight': Fraction(1, cells),
                    'theta1': definition.get('theta1', 'lambda'),
                    'theta2': definition.get('theta2', 'lambda + pi')}]
    else:
        entries = definition['atoms']
        if not isinstance(entries, list) or not entries:
            raise MalformedModelError("atoms phải là danh sách khác rỗng")

    parsed = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise MalformedModelError(f"Atom phải là object: {entry!r}")
        parsed.append((_parse_weight(entry.get('weight', 0)),
                       parse_angle_expr(entry.get('theta1', 0)),
                       parse_angle_expr(entry.get('theta2', 0))))

    if has_atoms:
        mass = sum(weight for weight, _, _ in parsed)
        if abs(float(mass) - 1.0) > TOLERANCE_SETTINGS['exact']:
            raise MalformedModelError(f"Mô hình '{name}': tổng trọng số = {mass} ≠ 1")
        if any(t1.uses_lambda or t2.uses_lambda for _, t1, t2 in parsed):
            raise MalformedModelError("Ký hiệu lambda chỉ dùng được với grid_cells")

    def density(s1, s2, psi):
        phi1 = s1.plane_angle if preset != 'born' else 0.0
        phi2 = s2.plane_angle if preset != 'born' else 0.0
        state = psi if preset == 'born' else None
        if has_grid:
            weight, t1, t2 = parsed[0]
            atoms = []
            for k in range(cells):
                lam = (k + 0.5) * 2 * math.pi / cells
                atoms.append(BeableAtom(float(weight), t1.evaluate(phi1, phi2, lam),
                                        t2.evaluate(phi1, phi2, lam), lam, state))
            return BeableDensity(tuple(atoms), 'grid')
        return BeableDensity.from_atoms([
            BeableAtom(float(weight), t1.evaluate(phi1, phi2), t2.evaluate(phi1, phi2),
                       state=state)
            for weight, t1, t2 in parsed
        ])

    expected = definition.get('expected', {})
    if not isinstance(expected, dict):
        raise MalformedModelError("expected phải là object condition → verdict")

    description = str(definition.get('description', f"Loaded model ({preset})"))
    if kernel_form == JOINT:
        return BeableModel.joint(name, density, first, description=description, expected=expected)
    setting_free = not any(t1.uses_settings or t2.uses_settings for _, t1, t2 in parsed)
    return BeableModel.factorized(name, density, first, second, description=description,
                                  expected=expected, setting_free=setting_free)


def load_model_file(path: str) -> BeableModel:
    """
    Đọc file định nghĩa mô hình JSON

    Args:
        path: Đường dẫn file

    Returns:
        BeableModel: Mô hình đã dựng
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            definition = json.load(f)
    except OSError as e:
        raise UnknownModelError(f"Không đọc được file mô hình {path}: {e}")
    except ValueError as e:
        raise MalformedModelError(f"File mô hình {path} không phải JSON hợp lệ: {e}")
    model = model_from_definition(definition)
    logger.info("Loaded model '%s' from %s", model.name, path)
    return model


class ModelRegistry:
    """Class quản lý các mô hình có sẵn và mô hình người dùng"""

    def __init__(self):
        self.model_factories: Dict[str, Callable[[], BeableModel]] = {
            'beltrametti-bugajski': BeableModels.beltrametti_bugajski,
            'scully': BeableModels.scully,
            'scully-printed-sign': lambda: BeableModels.scully(printed_sign=True),
            'argaman-dilorenzo': BeableModels.argaman_dilorenzo,
            'sawtooth': BeableModels.sawtooth_local,
        }

    def resolve(self, name_or_path: str) -> BeableModel:
        """
        Tìm mô hình theo tên dựng sẵn hoặc đường dẫn file

        Args:
            name_or_path: Tên mô hình hoặc đường dẫn file JSON

        Returns:
            BeableModel: Mô hình
        """
        key = str(name_or_path).strip()
        if key.lower() in self.model_factories:
            return self.model_factories[key.lower()]()
        if Path(key).is_file():
            return load_model_file(key)
        raise UnknownModelError(
            f"Không tìm thấy mô hình: {name_or_path!r}. "
            f"Có sẵn: {', '.join(self.get_available_models())}")

    def add_model(self, name: str, factory: Callable[[], BeableModel]):
        """
        Thêm mô hình mới

        Args:
            name: Tên mô hình
            factory: Hàm không tham số trả về BeableModel
        """
        if not callable(factory):
            raise ValueError(f"Factory cho mô hình {name} phải là callable")
        self.model_factories[name.lower()] = factory
        logger.info("Registered model: %s", name)

    def get_available_models(self) -> List[str]:
        """Lấy danh sách các mô hình có sẵn"""
        return list(self.model_factories.keys())
