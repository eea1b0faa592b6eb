"""
Persistance en fichiers plats : tables CSV et résumé JSON des exécutions
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from schemas import ComparisonReport
from simulator import Ensemble

logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================

# 17 chiffres significatifs, notation scientifique
NUMBER_FORMAT = ".16e"


def format_number(value: float) -> str:
    return format(float(value), NUMBER_FORMAT)


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_number(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([_cell(v) for v in row])
            count += 1
    logger.info("%s : %d ligne(s)", path, count)
    return path


def read_matrix_csv(path: Path) -> np.ndarray:
    """Matrice dense, une ligne CSV par ligne de matrice, sans en-tête"""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        rows = [[float(x) for x in row] for row in csv.reader(handle) if row]
    return np.array(rows, dtype=float) if rows else np.zeros((0, 0))


def write_snapshots(path: Path, ensemble: Ensemble) -> Path:
    """
    Une ligne par (réplique, instant) : replica, time, count, positions
    (positions séparées par des espaces, triées, au format NUMBER_FORMAT).
    """
    def rows():
        for r in range(ensemble.replicas):
            for t in ensemble.times:
                x = ensemble.snapshots[t][r]
                yield r, t, int(x.size), " ".join(format_number(v) for v in x)

    return write_csv(path, ["replica", "time", "count", "positions"], rows())


def report_rows(results: Dict[str, List[ComparisonReport]]):
    for suite, reports in results.items():
        for r in reports:
            stderr = r.estimate.stderr if r.estimate is not None else ""
            tolerance = r.tolerance if r.tolerance is not None else ""
            yield suite, r.name, r.predicted, r.value, stderr, tolerance, r.z_score, r.threshold, r.passed


REPORT_HEADER = ["suite", "name", "predicted", "value", "stderr", "tolerance", "z_score", "threshold", "pass"]


def write_reports(path: Path, results: Dict[str, List[ComparisonReport]]) -> Path:
    return write_csv(path, REPORT_HEADER, report_rows(results))


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_summary(path: Path, payload: Dict[str, Any]) -> Path:
    """Résumé JSON ; les valeurs non finies (z infini) sont écrites null"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(_json_safe(payload), handle, indent=2, ensure_ascii=False, allow_nan=False, default=str)
        handle.write("\n")
    return path


def dump_reports(results: Dict[str, List[ComparisonReport]]) -> Dict[str, List[Dict[str, Any]]]:
    return {suite: [r.model_dump(mode="json", by_alias=True) for r in reports] for suite, reports in results.items()}
