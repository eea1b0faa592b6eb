"""
Point d'entrée en ligne de commande - tables de noyaux, intensités,
simulation et suites de validation.

Codes de sortie : 0 succès, 2 configuration invalide, 3 validation échouée.
"""

import argparse
import json
import logging
import re
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from intensities import (
    ConfigurationError,
    face_reduction_residual,
    heat_residual,
    mixed_spin_intensity,
    multi_time_intensity,
    two_time_epsilon_scaling,
)
from kernels import KernelDomainError, extended_block
from output import dump_reports, read_matrix_csv, write_csv, write_reports, write_snapshots, write_summary
from schemas import (
    Configuration,
    Convention,
    ComparisonReport,
    ExperimentConfig,
    SpaceTimePoint,
    SuiteKind,
    TaskKind,
)
from simulator import simulate_ensemble
from skewalg import SkewMatrixError, determinant, pfaffian
from stats import bonferroni_threshold, check_tolerance
from suites import (
    FACE_TOL,
    HEAT_TOL,
    SuiteContext,
    richardson_report,
    run_epsilon,
    run_face,
    run_heat,
    run_suites,
)

logger = logging.getLogger("pfaffbm")

VERSION = "1.0.0"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 3

Results = Dict[str, List[ComparisonReport]]


# ==================== CONFIGURATION LOADING ====================

def _line_of(text: str, key: str) -> Optional[int]:
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def _set(data: Dict[str, Any], path: Sequence[str], value: Any) -> None:
    node = data
    for key in path[:-1]:
        node = node.setdefault(key, {})
    node[path[-1]] = value


OVERRIDES = [
    ("seed", ("simulation", "seed")),
    ("dt", ("simulation", "dt")),
    ("model", ("simulation", "model")),
    ("replicas", ("replicas",)),
    ("workers", ("workers",)),
    ("convention", ("convention",)),
    ("out", ("output",)),
    ("suite", ("suites",)),
    ("t", ("kernel", "t")),
    ("s", ("kernel", "s")),
    ("grid", ("kernel", "grid")),
    ("h", ("heat", "h")),
    ("gap", ("epsilon", "gap")),
    ("matrix", ("matrix",)),
]


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Lit la configuration JSON (facultative), applique les options de la ligne
    de commande puis valide le tout. Lève ConfigurationError avec un message
    nommant le champ fautif et sa ligne quand elle est connue.
    """
    text = ""
    data: Dict[str, Any] = {}
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{args.config}:{e.lineno}:{e.colno} : JSON invalide ({e.msg})") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"{args.config} : un objet JSON est attendu")
    data["task"] = args.task
    for attr, path in OVERRIDES:
        value = getattr(args, attr, None)
        if value is not None:
            _set(data, path, value)
    lam = getattr(args, "lam", None)
    if lam is not None:
        sim = data.setdefault("simulation", {})
        sim["intensity" if "intensity" in sim else "lambda"] = lam
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        lines = []
        for err in e.errors():
            field = ".".join(str(p) for p in err["loc"])
            keys = [p for p in err["loc"] if isinstance(p, str)]
            line = _line_of(text, keys[-1]) if keys and text else None
            where = f"{args.config}:{line} : " if line else ""
            lines.append(f"{where}champ '{field}' : {err['msg']}")
        raise ConfigurationError("\n".join(lines)) from None


def parse_grid(spec: str) -> np.ndarray:
    """'a:b:pas' -> a, a + pas, ..., b (bornes incluses)"""
    try:
        a, b, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise ConfigurationError(f"grille invalide '{spec}' (format attendu a:b:pas)") from None
    if step <= 0 or b < a:
        raise ConfigurationError(f"grille invalide '{spec}'")
    count = int(round((b - a) / step))
    return a + step * np.arange(count + 1)


# ==================== TASKS ====================

def task_pfaffian(config: ExperimentConfig, out: Path) -> Results:
    if not config.matrix:
        raise ConfigurationError("champ 'matrix' : chemin du fichier CSV requis")
    a = read_matrix_csv(Path(config.matrix))
    pf, det = pfaffian(a), determinant(a)
    print(f"Pf = {pf:.16e}")
    write_csv(out / "pfaffian.csv", ["dimension", "pfaffian", "determinant"], [(a.shape[0], pf, det)])
    return {}


def task_kernel_table(config: ExperimentConfig, out: Path) -> Results:
    spec = config.kernel
    model = config.simulation.model
    rows = []
    for z in parse_grid(spec.grid):
        block = extended_block(SpaceTimePoint(t=spec.t, z=0.0), SpaceTimePoint(t=spec.s, z=float(z)),
                               model, config.convention)
        rows.append((float(z), block[0, 0], block[0, 1], block[1, 0], block[1, 1]))
    write_csv(out / "kernel_table.csv", ["z", "K11", "K12", "K21", "K22"], rows)
    return {}


def _configuration(config: ExperimentConfig) -> Configuration:
    return Configuration(points=tuple(config.points), spins=config.spins, model=config.simulation.model,
                         allow_faces=config.task == TaskKind.FACE_CHECK)


def task_intensity(config: ExperimentConfig, out: Path) -> Results:
    cfg = _configuration(config)
    rows = []
    for convention in (Convention.RESOLVED, Convention.LITERAL):
        if cfg.spins is None:
            result = multi_time_intensity(cfg.points, cfg.model, convention)
        else:
            result = mixed_spin_intensity(cfg, convention)
        rows.append((cfg.model.value, convention.value, cfg.m, cfg.n, result.dimension, result.value))
        print(f"{convention.value:>8} : {result.value:.16e}")
    write_csv(out / "intensity.csv", ["model", "convention", "m", "n", "dimension", "value"], rows)
    return {}


def task_simulate(config: ExperimentConfig, out: Path) -> Results:
    ensemble = simulate_ensemble(config.simulation, config.replicas, config.workers)
    write_snapshots(out / "snapshots.csv", ensemble)
    return {}


def task_validate(config: ExperimentConfig, out: Path) -> Results:
    return run_suites(SuiteContext(config), config.suites)


def task_heat_check(config: ExperimentConfig, out: Path) -> Results:
    if config.spins is None:
        return {SuiteKind.HEAT.value: run_heat(SuiteContext(config))}
    cfg = _configuration(config)
    h, h_t = config.heat.h, config.heat.h_t
    coarse = heat_residual(cfg, h, h_t, config.convention)
    fine = heat_residual(cfg, h / 2, None if h_t is None else h_t / 2, config.convention)
    return {SuiteKind.HEAT.value: [
        check_tolerance(f"résidu chaleur h={h:g}", 0.0, coarse, HEAT_TOL),
        richardson_report("ordre de l'équation de la chaleur", coarse, fine),
    ]}


def task_face_check(config: ExperimentConfig, out: Path, face: Optional[int]) -> Results:
    if config.spins is None:
        return {SuiteKind.FACE.value: run_face(SuiteContext(config))}
    cfg = _configuration(config)
    ys = cfg.spins.ys
    if face is None:
        face = next((i for i in range(1, len(ys)) if ys[i] == ys[i - 1]), None)
        if face is None:
            raise ConfigurationError("champ 'spins.ys' : aucune paire de spins coïncidente")
    residual = face_reduction_residual(cfg, face, convention=config.convention)
    return {SuiteKind.FACE.value: [check_tolerance(f"réduction sur la face i={face}", 0.0, residual, FACE_TOL)]}


def task_epsilon_scaling(config: ExperimentConfig, out: Path) -> Results:
    spec = config.epsilon
    rows = []
    for eps in spec.widths:
        q = two_time_epsilon_scaling(spec.s, spec.s + spec.gap, spec.z, eps, convention=config.convention)
        rows.append((eps, q.value, q.error, q.nodes, q.converged))
    write_csv(out / "epsilon_scaling.csv", ["eps", "value", "error", "nodes", "converged"], rows)
    return {SuiteKind.EPSILON.value: run_epsilon(SuiteContext(config))}


# ==================== ENTRY POINT ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfaffbm", description="Processus de Pfaffien des ABM/CBM")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration JSON (voir config.example.json)")
    common.add_argument("--seed", type=int)
    common.add_argument("--replicas", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="dossier de sortie")
    common.add_argument("--model", choices=["ABM", "CBM"])
    common.add_argument("--convention", choices=[c.value for c in Convention])
    common.add_argument("--dt", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("-v", "--verbose", action="count", default=0)

    sub = parser.add_subparsers(dest="task", required=True)
    p = sub.add_parser(TaskKind.PFAFFIAN.value, parents=[common], help="Pfaffien d'une matrice CSV")
    p.add_argument("matrix", nargs="?")
    p = sub.add_parser(TaskKind.KERNEL_TABLE.value, parents=[common], help="table du noyau étendu")
    p.add_argument("--t", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--grid")
    sub.add_parser(TaskKind.INTENSITY.value, parents=[common], help="intensité / corrélation prédite")
    sub.add_parser(TaskKind.SIMULATE.value, parents=[common], help="instantanés Monte Carlo")
    p = sub.add_parser(TaskKind.VALIDATE.value, parents=[common], help="suites de validation")
    p.add_argument("--suite", action="append", choices=[k.value for k in SuiteKind])
    p = sub.add_parser(TaskKind.HEAT_CHECK.value, parents=[common], help="résidus de l'équation de la chaleur")
    p.add_argument("--h", type=float)
    p = sub.add_parser(TaskKind.FACE_CHECK.value, parents=[common], help="réduction sur les faces")
    p.add_argument("--face", type=int)
    p = sub.add_parser(TaskKind.EPSILON_SCALING.value, parents=[common], help="échelle en epsilon")
    p.add_argument("--gap", type=float)
    return parser


TASKS = {
    TaskKind.PFAFFIAN: task_pfaffian,
    TaskKind.KERNEL_TABLE: task_kernel_table,
    TaskKind.INTENSITY: task_intensity,
    TaskKind.SIMULATE: task_simulate,
    TaskKind.VALIDATE: task_validate,
    TaskKind.HEAT_CHECK: task_heat_check,
    TaskKind.EPSILON_SCALING: task_epsilon_scaling,
}


def run(config: ExperimentConfig, face: Optional[int] = None) -> Tuple[int, Results]:
    out = Path(config.output)
    started = time.perf_counter()
    logger.info("tâche %s, sortie %s", config.task.value, out)
    if config.task == TaskKind.FACE_CHECK:
        results = task_face_check(config, out, face)
    else:
        results = TASKS[config.task](config, out)
    elapsed = time.perf_counter() - started

    reports = [r for rs in results.values() for r in rs]
    passed = all(r.passed for r in reports)
    if results:
        write_reports(out / "reports.csv", results)
    write_summary(out / "summary.json", {
        "version": VERSION,
        "task": config.task.value,
        "runtime_seconds": round(elapsed, 3),
        "passed": passed,
        "comparisons": len(reports),
        "bonferroni_threshold": bonferroni_threshold(len(reports), config.threshold),
        "config": config.model_dump(mode="json", by_alias=True),
        "reports": dump_reports(results),
    })
    for r in reports:
        mark = "✓" if r.passed else "✗"
        print(f"{mark} {r.name} : valeur {r.value:.6g}, attendu {r.predicted:.6g}, z = {r.z_score:.3g}")
    if reports:
        print(f"{'✓' if passed else '✗'} {sum(r.passed for r in reports)}/{len(reports)} contrôle(s) réussi(s)")
    return (EXIT_OK if passed else EXIT_FAILED), results


# options dont la valeur peut commencer par '-' (grilles a:b:pas négatives)
ATTACHED_VALUE_OPTIONS = ("--grid",)


def attach_option_values(argv: Sequence[str]) -> List[str]:
    """'--grid -3:3:0.1' -> '--grid=-3:3:0.1' ; argparse lirait sinon la valeur comme une option"""
    args = list(argv)
    joined: List[str] = []
    i = 0
    while i < len(args):
        if args[i] in ATTACHED_VALUE_OPTIONS and i + 1 < len(args):
            joined.append(f"{args[i]}={args[i + 1]}")
            i += 2
        else:
            joined.append(args[i])
            i += 1
    return joined


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(attach_option_values(sys.argv[1:] if argv is None else argv))
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
    except (ConfigurationError, OSError) as e:
        print(f"✗ Configuration invalide :\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, _ = run(config, getattr(args, "face", None))
    except (ConfigurationError, KernelDomainError, SkewMatrixError, ValidationError) as e:
        print(f"✗ Erreur : {e}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
