"""
Các hàm tiện ích cho ứng dụng kiểm toán beable
"""

import json
import logging
import math
import os
import re
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config import APP_NAME, APP_VERSION, EXPORT_SETTINGS, LOGGING_SETTINGS, TOLERANCE_SETTINGS

_PI_LITERAL = re.compile(
    r'^\s*(?P<sign>[+-])?\s*(?P<num>\d+)?\s*(?:/\s*(?P<den>\d+))?\s*\*?\s*pi\s*$'
    r'|^\s*(?P<sign2>[+-])?\s*pi\s*/\s*(?P<den2>\d+)\s*$',
    re.IGNORECASE
)


def parse_angle_fraction(text: str) -> Optional[Fraction]:
    """
    Đọc literal dạng `p/q pi` và trả về hệ số hữu tỉ của π

    Args:
        text: Chuỗi như "1/4 pi", "-pi", "3pi", "pi/2"

    Returns:
        Optional[Fraction]: Hệ số của π, None nếu không phải literal π
    """
    match = _PI_LITERAL.match(text)
    if match is None:
        return None
    if match.group('den2') is not None:
        sign = -1 if match.group('sign2') == '-' else 1
        return Fraction(sign, int(match.group('den2')))
    numerator = int(match.group('num')) if match.group('num') else 1
    denominator = int(match.group('den')) if match.group('den') else 1
    if denominator == 0:
        raise ValueError(f"Mẫu số bằng 0 trong góc: {text!r}")
    sign = -1 if match.group('sign') == '-' else 1
    return Fraction(sign * numerator, denominator)


def parse_angle(text: str) -> float:
    """
    Đọc góc (radian) dạng số thập phân hoặc literal `p/q pi`

    Args:
        text: Chuỗi góc

    Returns:
        float: Góc tính bằng radian
    """
    text = str(text).strip()
    coefficient = parse_angle_fraction(text)
    if coefficient is not None:
        return float(coefficient) * math.pi
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"Không đọc được góc: {text!r}")


def parse_angle_list(text: str, expected: int = None) -> List[float]:
    """Đọc danh sách góc phân tách bởi dấu phẩy"""
    angles = [parse_angle(part) for part in str(text).split(',') if part.strip()]
    if expected is not None and len(angles) != expected:
        raise ValueError(f"Cần {expected} góc, nhận được {len(angles)}: {text!r}")
    return angles


def grid_points_for_step(step: float) -> int:
    """
    Số điểm lưới khi bước góc chia hết 2π

    Args:
        step: Bước góc (radian)

    Returns:
        int: Số điểm n với n·step = 2π
    """
    if step <= 0:
        raise ValueError(f"Bước lưới phải dương: {step}")
    points = int(round(2 * math.pi / step))
    if points < 1 or abs(points * step - 2 * math.pi) > TOLERANCE_SETTINGS['exact']:
        raise ValueError(f"Bước lưới {step!r} không chia hết 2π")
    return points


def generate_angle_range(points: int) -> np.ndarray:
    """
    Tạo lưới góc đều k·2π/n, k = 0..n-1

    Args:
        points: Số điểm

    Returns:
        np.ndarray: Mảng góc
    """
    return np.array([2 * math.pi * k / points for k in range(points)])


def format_number(value: float, decimal_places: int = 12) -> str:
    """
    Format số với số chữ số có nghĩa xác định

    Args:
        value: Giá trị số
        decimal_places: Số chữ số

    Returns:
        str: Chuỗi đã format
    """
    if value is None or np.isnan(value) or np.isinf(value):
        return "N/A"
    return f"{value:.{decimal_places}g}"


def create_directory(path: str) -> bool:
    """
    Tạo thư mục nếu chưa tồn tại

    Args:
        path: Đường dẫn thư mục

    Returns:
        bool: True nếu tạo thành công hoặc đã tồn tại
    """
    if not path:
        return True
    try:
        Path(path).mkdir(parents=True, exist_ok=True)
        return True
    except OSError as e:
        logging.error(f"Error creating directory {path}: {e}")
        return False


def atomic_write_text(filename: str, text: str) -> None:
    """
    Ghi file một lần, nguyên tử (file tạm + rename)

    Args:
        filename: Đường dẫn đích
        text: Nội dung
    """
    target = Path(filename)
    create_directory(str(target.parent))
    fd, tmp_path = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent or '.'))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, target)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def convert_numpy_to_list(obj: Any) -> Any:
    """
    Chuyển đổi numpy arrays thành lists để serialize JSON

    Args:
        obj: Object cần chuyển đổi

    Returns:
        Any: Object đã chuyển đổi
    """
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, dict):
        return {str(key): convert_numpy_to_list(value) for key, value in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_to_list(item) for item in obj]
    else:
        return obj


def table_to_csv_text(df: pd.DataFrame) -> str:
    """DataFrame → chuỗi CSV với format số cố định"""
    return df.to_csv(index=False, sep=EXPORT_SETTINGS['csv_separator'],
                     float_format=EXPORT_SETTINGS['float_format'], lineterminator='\n')


def results_to_json_text(results: Dict, seed: int = None) -> str:
    """Kết quả → chuỗi JSON tất định (không có timestamp)"""
    json_results = convert_numpy_to_list(results)
    json_results['metadata'] = {
        'application': APP_NAME,
        'version': APP_VERSION,
        'seed': seed
    }
    return json.dumps(json_results, indent=EXPORT_SETTINGS['json_indent'],
                      ensure_ascii=False, sort_keys=True) + '\n'


def setup_logger(name: str, log_file: str = None, level: str = None) -> logging.Logger:
    """
    Thiết lập logger

    Args:
        name: Tên logger
        log_file: File log (optional)
        level: Mức log

    Returns:
        logging.Logger: Logger object
    """
    level = level or LOGGING_SETTINGS['level']
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper()))

    # Clear existing handlers
    logger.handlers.clear()

    # Console handler (stderr, giữ stdout sạch)
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(LOGGING_SETTINGS['format']))
    logger.addHandler(console_handler)

    # File handler (if specified)
    log_file = log_file or LOGGING_SETTINGS['log_file']
    if log_file:
        create_directory(os.path.dirname(log_file))
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
        )
        file_handler.setFormatter(file_formatter)
        logger.addHandler(file_handler)

    return logger
