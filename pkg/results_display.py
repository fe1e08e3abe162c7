"""
Module dựng bảng kết quả (pandas DataFrame) cho báo cáo kiểm toán và CLI
"""

import itertools
from typing import Dict, List, Sequence

import pandas as pd

from beable_models import BeableModel, model_correlation
from causality_audit import AuditReport, SettingsGrid
from quantum_core import OUTCOMES, Setting, TwoQubitState, correlation, joint_table
from utils import format_number


class ResultsDisplay:
    """Class dựng các bảng kết quả để hiển thị và xuất file"""

    def create_audit_table(self, reports: Sequence[AuditReport]) -> pd.DataFrame:
        """
        Bảng một dòng cho mỗi điều kiện đã kiểm tra

        Args:
            reports: Danh sách AuditReport của một mô hình

        Returns:
            pd.DataFrame: condition, verdict, max_deviation, tolerance, witnesses, grid_spec
        """
        rows = []
        for report in reports:
            rows.append({
                'model': report.model_name,
                'condition': report.condition,
                'verdict': report.verdict,
                'max_deviation': report.max_deviation,
                'tolerance': report.tolerance,
                'witnesses': len(report.witnesses),
                'grid_spec': report.grid_spec
            })
        return pd.DataFrame(rows, columns=['model', 'condition', 'verdict', 'max_deviation',
                                           'tolerance', 'witnesses', 'grid_spec'])

    def create_summary_table(self, matrix: Dict[str, Dict[str, str]]) -> pd.DataFrame:
        """
        Bảng tổng kết mô hình × điều kiện → kết luận

        Args:
            matrix: {model: {condition: verdict}}

        Returns:
            pd.DataFrame: Một dòng cho mỗi mô hình, cột đầu là tên mô hình
        """
        rows = [{'model': model, **verdicts} for model, verdicts in matrix.items()]
        df = pd.DataFrame(rows)
        return df.fillna('not-applicable')

    def create_witness_table(self, report: AuditReport) -> pd.DataFrame:
        rows = []
        for witness in report.witnesses:
            rows.append({
                'condition': report.condition,
                **{k: float(v) for k, v in witness.settings.items()},
                'atom_index': witness.atom_index,
                'a': witness.outcomes[0],
                'b': witness.outcomes[1],
                'lhs': witness.lhs,
                'rhs': witness.rhs,
                'deviation': witness.deviation,
                'note': witness.note
            })
        return pd.DataFrame(rows)

    def create_correlation_table(self, model: BeableModel, psi: TwoQubitState,
                                 grid: SettingsGrid) -> pd.DataFrame:
        """
        Tương quan của mô hình và oracle theo độ lệch góc Δ, với φ1 = 0, φ2 = Δ

        Returns:
            pd.DataFrame: delta_radians, E_model, E_quantum, abs_difference
        """
        s1 = Setting.from_angle(0.0)
        rows = []
        for delta in grid.angles:
            s2 = Setting.from_angle(delta)
            e_model = model_correlation(model, s1, s2, psi)
            e_quantum = correlation(psi, s1, s2)
            rows.append({
                'delta_radians': delta,
                'E_model': e_model,
                'E_quantum': e_quantum,
                'abs_difference': abs(e_model - e_quantum)
            })
        return pd.DataFrame(rows, columns=['delta_radians', 'E_model', 'E_quantum',
                                           'abs_difference'])

    def create_chsh_table(self, rows: List[Dict]) -> pd.DataFrame:
        return pd.DataFrame(rows, columns=['model', 'a', 'a_prime', 'b', 'b_prime', 'S'])

    def create_quantum_table(self, psi: TwoQubitState, grid: SettingsGrid) -> pd.DataFrame:
        """
        Bảng oracle Born trên toàn lưới

        Returns:
            pd.DataFrame: phi1, phi2, a, b, probability
        """
        rows = []
        settings = grid.settings
        for s1, s2 in itertools.product(settings, settings):
            table = joint_table(psi, s1, s2)
            for a, b in itertools.product(OUTCOMES, OUTCOMES):
                rows.append({'phi1': s1.plane_angle, 'phi2': s2.plane_angle,
                             'a': int(a), 'b': int(b),
                             'probability': float(table[a.index, b.index])})
        return pd.DataFrame(rows, columns=['phi1', 'phi2', 'a', 'b', 'probability'])

    def format_audit_summary(self, reports: Sequence[AuditReport]) -> str:
        """Tóm tắt dạng text cho log và màn hình"""
        if not reports:
            return "No audit results"
        lines = [f"Audit of model '{reports[0].model_name}'",
                 f"Grid: {reports[0].grid_spec}"]
        width = max(len(r.condition) for r in reports)
        for report in reports:
            deviation = format_number(report.max_deviation, 4)
            lines.append(f"  {report.condition:<{width}}  {report.verdict:<15} {deviation}")
            note = report.details.get('note')
            if note:
                lines.append(f"  {'':<{width}}  {note}")
        return "\n".join(lines)
