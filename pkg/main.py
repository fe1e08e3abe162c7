"""
File chính: giao diện dòng lệnh của Beable Locality Auditor

Các lệnh: audit, correlate, chsh, fine, quantum.
"""

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

from beable_models import MalformedModelError, ModelRegistry, UnknownModelError
from causality_audit import CausalityAuditor, SettingsGrid
from config import APP_NAME, APP_VERSION, CLI_DEFAULTS, LOGGING_SETTINGS
from inequalities import ChshAnalyzer, ChshSpec, IneligibleModelError, optimize_chsh_quantum
from quantum_core import singlet
from results_display import ResultsDisplay
from utils import (atomic_write_text, grid_points_for_step, parse_angle, parse_angle_list,
                   results_to_json_text, setup_logger, table_to_csv_text)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INVALID = 2


def check_dependencies() -> bool:
    """Kiểm tra các dependencies cần thiết"""
    required_modules = ['numpy', 'scipy', 'pandas']
    missing_modules = []

    for module in required_modules:
        try:
            __import__(module)
        except ImportError:
            missing_modules.append(module)

    if missing_modules:
        print(f"Missing required modules: {', '.join(missing_modules)}\n"
              "Please install them using: pip install -r requirements.txt", file=sys.stderr)
        return False

    return True


@dataclass(frozen=True)
class RunConfig:
    """Cấu hình một lần chạy CLI"""
    command: str
    model: Optional[str]
    grid_step: float
    grid_step_text: str
    tolerance: Optional[float]
    output_path: Optional[str]
    output_format: str
    seed: int
    spec: Tuple[float, float, float, float]
    optimize: bool = False
    summary: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        """
        Tạo cấu hình từ tham số dòng lệnh và kiểm tra tính hợp lệ

        Args:
            args: Kết quả argparse

        Returns:
            RunConfig: Cấu hình hợp lệ
        """
        model = getattr(args, 'model_flag', None) or getattr(args, 'model', None)
        grid_step = parse_angle(args.grid_step)
        grid_points_for_step(grid_step)
        if args.tolerance is not None and args.tolerance <= 0:
            raise ValueError(f"Tolerance phải dương: {args.tolerance}")
        spec = tuple(parse_angle_list(getattr(args, 'spec', None) or CLI_DEFAULTS['spec'],
                                      expected=4))
        return cls(args.command, model, grid_step, args.grid_step, args.tolerance, args.out,
                   args.format, args.seed, spec, getattr(args, 'optimize', False),
                   getattr(args, 'summary', False))

    @property
    def grid(self) -> SettingsGrid:
        return SettingsGrid.from_step(self.grid_step_text)

    def parameters(self) -> dict:
        return {'command': self.command, 'model': self.model, 'grid_step': self.grid_step_text,
                'tolerance': self.tolerance, 'format': self.output_format,
                'spec': list(self.spec)}


def _emit(config: RunConfig, text: str, path: Optional[str] = None):
    path = path or config.output_path
    if path:
        atomic_write_text(path, text)
        logger.info("Wrote %s", path)
    else:
        sys.stdout.write(text)


def _resolve_model(config: RunConfig):
    if not config.model:
        raise UnknownModelError("Cần chỉ định mô hình (tên dựng sẵn hoặc file JSON)")
    return ModelRegistry().resolve(config.model)


def cmd_audit(config: RunConfig) -> int:
    """
    Chạy toàn bộ kiểm toán và so sánh với kết luận kỳ vọng

    Returns:
        int: 0 nếu khớp, 1 nếu không khớp
    """
    if config.summary:
        return cmd_audit_summary(config)
    model = _resolve_model(config)
    auditor = CausalityAuditor(config.grid, config.tolerance)
    reports = auditor.audit(model, singlet())
    for report in reports:
        report.seed = config.seed
    mismatches = auditor.expected_mismatches(model, reports)
    display = ResultsDisplay()
    logger.info("\n%s", display.format_audit_summary(reports))
    for report in reports:
        if report.witnesses:
            logger.debug("Witnesses for %s:\n%s", report.condition,
                         display.create_witness_table(report).to_string(index=False))

    if config.output_format == 'json':
        text = results_to_json_text({
            'model_name': model.name,
            'parameters': config.parameters(),
            'reports': [report.to_dict() for report in reports],
            'expected': dict(model.expected),
            'mismatches': mismatches
        }, config.seed)
    else:
        text = table_to_csv_text(display.create_audit_table(reports))
    _emit(config, text)
    return EXIT_MISMATCH if mismatches else EXIT_OK


def cmd_audit_summary(config: RunConfig) -> int:
    """
    Bảng tổng kết mô hình × điều kiện cho một mô hình hoặc mọi mô hình dựng sẵn

    Returns:
        int: 0 nếu mọi mô hình khớp kết luận kỳ vọng, 1 nếu không
    """
    registry = ModelRegistry()
    names = [config.model] if config.model else registry.get_available_models()
    models = [registry.resolve(name) for name in names]
    psi = singlet()
    auditor = CausalityAuditor(config.grid, config.tolerance)
    reports = auditor.audit_many(models, psi)
    table = ResultsDisplay().create_summary_table(auditor.audit_matrix(models, psi,
                                                                       reports=reports))
    mismatches = {}
    for model in models:
        found = auditor.expected_mismatches(model, reports[model.name])
        if found:
            mismatches[model.name] = found

    if config.output_format == 'json':
        text = results_to_json_text({'parameters': config.parameters(),
                                     'rows': table.to_dict(orient='records'),
                                     'mismatches': mismatches}, config.seed)
    else:
        text = table_to_csv_text(table)
    _emit(config, text)
    return EXIT_MISMATCH if mismatches else EXIT_OK


def cmd_correlate(config: RunConfig) -> int:
    """Xuất bảng E(Δ) của mô hình và oracle"""
    model = _resolve_model(config)
    table = ResultsDisplay().create_correlation_table(model, singlet(), config.grid)
    if config.output_format == 'json':
        text = results_to_json_text({'model_name': model.name,
                                     'parameters': config.parameters(),
                                     'rows': table.to_dict(orient='records')}, config.seed)
    else:
        text = table_to_csv_text(table)
    _emit(config, text)
    return EXIT_OK


def cmd_chsh(config: RunConfig) -> int:
    """Giá trị CHSH của oracle và mô hình tại bộ setting đã chọn"""
    model = _resolve_model(config)
    psi = singlet()
    analyzer = ChshAnalyzer(psi, ChshSpec.from_angles(*config.spec))
    rows = analyzer.compare([model])
    if config.optimize:
        optimum = optimize_chsh_quantum(psi, seed=config.seed)
        a, a_prime, b, b_prime = optimum['angles']
        rows.append({'model': 'quantum-optimized', 'a': a, 'a_prime': a_prime, 'b': b,
                     'b_prime': b_prime, 'S': optimum['s_value']})
    if config.output_format == 'json':
        text = results_to_json_text({'parameters': config.parameters(), 'rows': rows},
                                    config.seed)
    else:
        text = table_to_csv_text(ResultsDisplay().create_chsh_table(rows))
    _emit(config, text)
    return EXIT_OK


def cmd_fine(config: RunConfig) -> int:
    """
    Dựng bảng bốn biến của mô hình và kiểm tra biên

    Returns:
        int: 0 nếu thành công, 1 nếu mô hình không đủ điều kiện
    """
    model = _resolve_model(config)
    analyzer = ChshAnalyzer(singlet(), ChshSpec.from_angles(*config.spec))
    try:
        fj, report = analyzer.fine_report(model)
    except IneligibleModelError as e:
        print(f"Ineligible model: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    if config.tolerance is not None:
        report['marginal_check']['holds'] = (report['marginal_check']['max_deviation']
                                             <= config.tolerance)
        report['marginal_check']['tolerance'] = config.tolerance

    if config.output_format == 'json':
        _emit(config, results_to_json_text({'parameters': config.parameters(),
                                            'table': fj.to_frame().to_dict(orient='records'),
                                            **report}, config.seed))
        return EXIT_OK

    _emit(config, table_to_csv_text(fj.to_frame()))
    if config.output_path:
        target = Path(config.output_path)
        marginals_path = target.with_name(f"{target.stem}_marginals.json")
        _emit(config, results_to_json_text({'parameters': config.parameters(), **report},
                                           config.seed), str(marginals_path))
    witness = report['quantum_witness']
    logger.info("Fine marginals max deviation %.3e; quantum target deviation %.6f "
                "(certificate bound %.6f)", report['marginal_check']['max_deviation'],
                witness['max_deviation'], witness['certificate_bound'])
    return EXIT_OK


def cmd_quantum(config: RunConfig) -> int:
    """Xuất bảng oracle Born cho singlet trên lưới"""
    table = ResultsDisplay().create_quantum_table(singlet(), config.grid)
    if config.output_format == 'json':
        text = results_to_json_text({'parameters': config.parameters(),
                                     'rows': table.to_dict(orient='records')}, config.seed)
    else:
        text = table_to_csv_text(table)
    _emit(config, text)
    return EXIT_OK


COMMANDS = {
    'audit': cmd_audit,
    'correlate': cmd_correlate,
    'chsh': cmd_chsh,
    'fine': cmd_fine,
    'quantum': cmd_quantum,
}


def build_parser() -> argparse.ArgumentParser:
    """Tạo parser cho các lệnh con"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--grid-step', default=CLI_DEFAULTS['grid_step'],
                        help="angle step of the settings grid, radians or 'p/q pi' "
                             "(default: %(default)s)")
    common.add_argument('--tolerance', type=float, default=None,
                        help='override the per-condition tolerance')
    common.add_argument('--seed', type=int, default=CLI_DEFAULTS['seed'],
                        help='random seed recorded in reports (default: %(default)s)')
    common.add_argument('--out', default=None, help='output file (default: stdout)')
    common.add_argument('--format', choices=('csv', 'json'), default=CLI_DEFAULTS['format'],
                        help='output format (default: %(default)s)')
    common.add_argument('--log-level', default=LOGGING_SETTINGS['level'],
                        choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'),
                        help='log level for stderr (default: %(default)s)')

    with_model = argparse.ArgumentParser(add_help=False)
    with_model.add_argument('model', nargs='?', default=None,
                            help='built-in model name or path to a model JSON file')
    with_model.add_argument('--model', dest='model_flag', default=None,
                            help='same as the positional model argument')

    with_spec = argparse.ArgumentParser(add_help=False)
    with_spec.add_argument('--spec', default=CLI_DEFAULTS['spec'],
                           help="CHSH settings a,a',b,b' (default: %(default)s)")

    parser = argparse.ArgumentParser(
        prog='main.py', description=f"{APP_NAME} {APP_VERSION}: audit beable models of the "
                                    "singlet experiment against local causality")
    subparsers = parser.add_subparsers(dest='command', required=True)
    audit = subparsers.add_parser('audit', parents=[common, with_model],
                                  help='run every causality check on a model')
    audit.add_argument('--summary', action='store_true',
                       help='write the model x condition verdict table; without a model, '
                            'cover every built-in model')
    subparsers.add_parser('correlate', parents=[common, with_model],
                          help='correlation E(delta) of model and oracle')
    chsh = subparsers.add_parser('chsh', parents=[common, with_model, with_spec],
                                 help='CHSH value of model and oracle')
    chsh.add_argument('--optimize', action='store_true',
                      help='add a row with the numerically optimized quantum settings')
    subparsers.add_parser('fine', parents=[common, with_model, with_spec],
                          help='four-variable joint table of a local model')
    subparsers.add_parser('quantum', parents=[common],
                          help='Born-rule oracle tables for the singlet')
    return parser


def main(argv: List[str] = None) -> int:
    """Hàm chính: parse tham số, chạy lệnh, trả về exit status"""
    parser = build_parser()
    args = parser.parse_args(argv)
    # Cấu hình root logger, các module log dưới tên riêng
    setup_logger('', level=args.log_level)

    if not check_dependencies():
        return EXIT_INVALID

    try:
        config = RunConfig.from_args(args)
        return COMMANDS[config.command](config)
    except (UnknownModelError, MalformedModelError) as e:
        print(f"Model error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as e:
        print(f"Invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
