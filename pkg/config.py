"""
File cấu hình cho ứng dụng kiểm toán mô hình beable (Bell/EPR)
"""

import math

# Application settings
APP_NAME = "Beable Locality Auditor"
APP_VERSION = "1.0.0"

# Tolerances
TOLERANCE_SETTINGS = {
    'exact': 1e-12,          # đồng nhất thức suy được bằng số học chính xác
    'trig': 1e-9,            # khi có triệt tiêu lượng giác tích lũy
    'determinism': 1e-9,     # xác suất điều kiện ∈ {0, 1}
    'support_weight': 1e-12, # atom có trọng số nhỏ hơn bị loại khỏi support
    'angle_match': 1e-9,     # so khớp góc modulo 2π
    'conditioning': 1e-12    # bỏ qua điều kiện trên β có xác suất 0
}

# Settings grid
GRID_SETTINGS = {
    'grid_step': '1/18 pi',
    'quadrature_cells': 720,
    'max_witnesses': 10
}

# CHSH settings
CHSH_SETTINGS = {
    'optimal_spec': (0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4),
    'random_specs': 10000,
    'tsirelson_specs': 100000,
    'fine_samples': 10000,
    'optimizer_restarts': 8,
    'max_atoms_random_table': 8,
    'batch_size': 1000       # số bộ setting mỗi lô khi quét theo lô
}

# Built-in models and the audit matrix each is expected to reproduce
MODEL_SETTINGS = {
    'beltrametti-bugajski': {
        'description': 'Ontic representation: point mass on the quantum state',
        'expected': {
            'outcome-independence': 'violated',
            'parameter-independence': 'violated',
            'measurement-independence': 'holds',
            'oracle-agreement': 'holds'
        }
    },
    'scully': {
        'description': 'Angular delta density pinned to the first analyzer',
        'expected': {
            'outcome-independence': 'holds',
            'parameter-independence': 'holds',
            'measurement-independence': 'violated',
            'oracle-agreement': 'holds'
        }
    },
    'scully-printed-sign': {
        'description': 'Scully density without the pi shift: (1 + ab cos d)/4',
        'expected': {
            'outcome-independence': 'holds',
            'parameter-independence': 'holds',
            'measurement-independence': 'violated',
            'oracle-agreement': 'violated'
        }
    },
    'argaman-dilorenzo': {
        'description': 'Symmetric four-delta density pinned to both analyzers',
        'expected': {
            'outcome-independence': 'holds',
            'parameter-independence': 'holds',
            'measurement-independence': 'violated',
            'oracle-agreement': 'holds'
        }
    },
    'sawtooth': {
        'description': 'Local deterministic sign responses on a uniform lambda grid',
        'expected': {
            'outcome-independence': 'holds',
            'parameter-independence': 'holds',
            'measurement-independence': 'holds',
            'oracle-agreement': 'violated'
        }
    }
}

# Export settings
EXPORT_SETTINGS = {
    'csv_separator': ',',
    'float_format': '%.12g',
    'json_indent': 2
}

# Logging settings
LOGGING_SETTINGS = {
    'level': 'WARNING',
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'log_file': None
}

# Command-line defaults
CLI_DEFAULTS = {
    'seed': 0,
    'format': 'csv',
    'grid_step': GRID_SETTINGS['grid_step'],
    'spec': '0,1/2 pi,1/4 pi,3/4 pi'
}

