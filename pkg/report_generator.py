"""
CSV reports for simulation results and figure tables.

Event and summary files start with a ``# <schema>`` line naming their
versioned schema; read them back with ``pd.read_csv(path, comment="#")``.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Iterable, List, Optional, Union

import pandas as pd

from config import (
    CSV_TIME_FORMAT,
    CSV_VALUE_FORMAT,
    EVENTS_SCHEMA_VERSION,
    OUTPUT_EVENTS_REPORT,
    OUTPUT_LADDER_REPORT,
    OUTPUT_SUMMARY_REPORT,
    SUMMARY_SCHEMA_VERSION,
)
from exceptions import ReportGenerationError
from figure_tables import FIGURE_SCHEMAS, lifetime_ladder_table
from mesh_sim import CATEGORIES, LadderRow, SimResult

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ["time_s", "node", "kind", "coulombs"]
SUMMARY_COLUMNS = (["node", "role", "x_m", "y_m", "lifetime_s", "initial_c", "final_c"]
                   + [f"{c}_c" for c in CATEGORIES])


def figure_table_to_csv(table: pd.DataFrame, key: str) -> str:
    """CSV text of a FigureTable, checked against its schema."""
    expected = FIGURE_SCHEMAS.get(key)
    if expected is None or list(table.columns) != expected:
        raise ReportGenerationError(f"table does not match the '{key}' schema", report_type=key)
    return table.to_csv(index=False, float_format=CSV_VALUE_FORMAT, lineterminator="\n")


class ReportGenerator:
    """Writes SimResult and FigureTable CSVs into one output directory."""

    def __init__(self, output_dir: Union[str, Path] = ".") -> None:
        self.output_dir = Path(output_dir)

    def events_frame(self, result: SimResult) -> pd.DataFrame:
        return pd.DataFrame([tuple(e) for e in result.events], columns=EVENT_COLUMNS)

    def summary_frame(self, result: SimResult) -> pd.DataFrame:
        rows = []
        for node in result.nodes:
            rows.append([node.node_id, node.role, node.position[0], node.position[1], node.death_time,
                         node.initial_charge, node.final_charge] + [node.ledger[c] for c in CATEGORIES])
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def save_events_report(self, result: SimResult) -> str:
        return self._save_csv_with_fallback(self.events_frame(result), OUTPUT_EVENTS_REPORT,
                                            "events report", EVENTS_SCHEMA_VERSION, CSV_TIME_FORMAT)

    def save_summary_report(self, result: SimResult) -> str:
        return self._save_csv_with_fallback(self.summary_frame(result), OUTPUT_SUMMARY_REPORT,
                                            "summary report", SUMMARY_SCHEMA_VERSION, CSV_TIME_FORMAT)

    def save_figure_table(self, table: pd.DataFrame, key: str, filename: Optional[str] = None) -> str:
        if list(table.columns) != FIGURE_SCHEMAS.get(key):
            raise ReportGenerationError(f"table does not match the '{key}' schema", report_type=key)
        return self._save_csv_with_fallback(table, filename or f"{key}.csv", f"{key} table")

    def save_ladder_report(self, rows: Iterable[LadderRow]) -> str:
        return self.save_figure_table(lifetime_ladder_table(rows), "lifetime_ladder", OUTPUT_LADDER_REPORT)

    def save_all(self, result: SimResult) -> List[str]:
        return [self.save_events_report(result), self.save_summary_report(result)]

    def _save_csv_with_fallback(self, df: pd.DataFrame, filename: str, description: str,
                                schema: Optional[str] = None, float_format: str = CSV_VALUE_FORMAT) -> str:
        """
        Write ``df`` under the output directory. If the file is locked, write a
        timestamped sibling instead.
        """
        text = df.to_csv(index=False, float_format=float_format, lineterminator="\n")
        if schema:
            text = f"# {schema}\n{text}"
        target = self.output_dir / filename
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
            try:
                target.write_text(text, encoding="utf-8")
                logger.info(f"{description.capitalize()} saved to '{target}'")
                return str(target)
            except PermissionError:
                stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
                fallback = target.with_name(f"{target.stem}_{stamp}{target.suffix}")
                fallback.write_text(text, encoding="utf-8")
                logger.warning(f"'{target}' was locked; {description} saved to '{fallback}'")
                return str(fallback)
        except OSError as e:
            raise ReportGenerationError(f"could not write {description}: {e}", report_type=description,
                                        output_file=str(target), original_error=e)
