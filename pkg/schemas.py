"""
Schémas Pydantic - points espace-temps, configurations, simulation et rapports
"""

import math
import os
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Graine par défaut, surchargée par la variable d'environnement PFAFFBM_SEED
DEFAULT_SEED = 20240601
SEED_ENV_VAR = "PFAFFBM_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    return int(raw)


# ==================== ENUMS ====================

class ModelKind(str, Enum):
    ABM = "ABM"
    CBM = "CBM"


class Convention(str, Enum):
    """
    RESOLVED : convention validée par Monte Carlo (terme de transition -g, préfacteur 2^m)
    LITERAL  : formules telles qu'imprimées (terme -2g, préfacteur (-2)^m)
    """
    RESOLVED = "resolved"
    LITERAL = "literal"


class TaskKind(str, Enum):
    PFAFFIAN = "pfaffian"
    KERNEL_TABLE = "kernel-table"
    INTENSITY = "intensity"
    SIMULATE = "simulate"
    VALIDATE = "validate"
    HEAT_CHECK = "heat-check"
    FACE_CHECK = "face-check"
    EPSILON_SCALING = "epsilon-scaling"


class SuiteKind(str, Enum):
    PFAFFIAN = "pfaffian"
    CONVOLUTION = "convolution"
    DENSITY = "density"
    PAIR = "pair"
    TWO_TIME = "two-time"
    SPIN = "spin"
    EMPTY_INTERVAL = "empty-interval"
    THINNING = "thinning"
    HEAT = "heat"
    FACE = "face"
    EPSILON = "epsilon"
    MOMENTS = "moments"
    ROBUSTNESS = "robustness"


# ==================== SPACE-TIME SCHEMAS ====================

class SpaceTimePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float = Field(gt=0)
    z: float

    @field_validator("t", "z")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("coordonnée non finie")
        return value


class SpinSet(BaseModel):
    """Positions de spin (t, y_1 <= ... <= y_2m) à un temps commun"""
    model_config = ConfigDict(frozen=True)

    t: float = Field(gt=0)
    ys: Tuple[float, ...] = ()

    @field_validator("ys")
    @classmethod
    def _even_sorted(cls, ys: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(ys) % 2 != 0:
            raise ValueError(f"nombre de spins impair ({len(ys)})")
        if any(b < a for a, b in zip(ys, ys[1:])):
            raise ValueError("positions de spin non triées")
        return ys

    @property
    def m(self) -> int:
        return len(self.ys) // 2


class Configuration(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: Tuple[SpaceTimePoint, ...] = ()
    spins: Optional[SpinSet] = None
    model: ModelKind = ModelKind.ABM
    allow_faces: bool = False

    @model_validator(mode="after")
    def _check_cell(self) -> "Configuration":
        if self.spins is None:
            return self
        if self.model != ModelKind.ABM:
            raise ValueError("les corrélations de spin ne sont définies que pour ABM")
        for p in self.points:
            if p.t > self.spins.t:
                raise ValueError(f"point d'intensité au temps {p.t} postérieur au temps des spins {self.spins.t}")
        ys = self.spins.ys
        if not self.allow_faces and any(b <= a for a, b in zip(ys, ys[1:])):
            raise ValueError("positions de spin non strictement croissantes (face de la cellule)")
        return self

    @property
    def m(self) -> int:
        return 0 if self.spins is None else self.spins.m

    @property
    def n(self) -> int:
        return len(self.points)


class IntensityValue(BaseModel):
    value: float
    dimension: int
    convention: Convention = Convention.RESOLVED

    @field_validator("value")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("intensité non finie")
        return value


class QuadratureValue(BaseModel):
    value: float
    error: float
    nodes: int
    converged: bool


# ==================== SIMULATION SCHEMAS ====================

class SimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    model: ModelKind = ModelKind.ABM
    intensity: float = Field(default=100.0, ge=0, alias="lambda")
    half_width: float = Field(default=20.0, gt=0)
    margin: Optional[float] = Field(default=None, gt=0)
    dt: float = Field(default=1e-4, gt=0)
    snapshot_times: List[float] = Field(default_factory=lambda: [0.5, 1.0])
    seed: int = Field(default_factory=default_seed, ge=0, lt=2**64)
    batch_size: int = Field(default=256, ge=1)

    @field_validator("snapshot_times")
    @classmethod
    def _increasing(cls, times: List[float]) -> List[float]:
        if not times:
            raise ValueError("au moins un instant d'observation est requis")
        if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("instants d'observation non strictement croissants et positifs")
        return times

    @model_validator(mode="after")
    def _check_entrance(self) -> "SimConfig":
        t_min = self.snapshot_times[0]
        if t_min < 10 * self.dt:
            raise ValueError(f"snapshot_times[0]={t_min} < 10*dt={10 * self.dt}")
        # lambda = 0 : système vide, accepté
        if self.intensity > 0 and self.intensity * math.sqrt(t_min) < 10:
            raise ValueError(
                f"loi d'entrée mal approchée : lambda*sqrt(t_min)={self.intensity * math.sqrt(t_min):.3g} < 10"
            )
        return self

    @property
    def effective_margin(self) -> float:
        if self.margin is not None:
            return self.margin
        return 8.0 * math.sqrt(self.snapshot_times[-1])

    @property
    def window(self) -> float:
        """Demi-largeur du domaine simulé L + M"""
        return self.half_width + self.effective_margin


class BinSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    centers: Tuple[Tuple[float, float], ...]
    width: float = Field(gt=0)

    @model_validator(mode="after")
    def _distinct(self) -> "BinSpec":
        if not self.centers:
            raise ValueError("aucune fenêtre")
        for i, (ti, zi) in enumerate(self.centers):
            for tj, zj in self.centers[i + 1:]:
                if ti == tj and abs(zi - zj) < self.width:
                    raise ValueError(f"fenêtres de même temps superposées en t={ti} ({zi}, {zj})")
        return self

    @property
    def times(self) -> List[float]:
        return sorted({t for t, _ in self.centers})


class IntensityEstimate(BaseModel):
    value: float
    stderr: float = Field(ge=0)
    replicas: int = Field(ge=2)
    bins: Optional[BinSpec] = None
    scale: float = 1.0
    # sommes brutes (non normalisées) pour la fusion d'ensembles
    sum_x: float = 0.0
    sum_x2: float = 0.0


class ComparisonReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    name: str
    predicted: float
    value: float
    estimate: Optional[IntensityEstimate] = None
    tolerance: Optional[float] = None
    z_score: float
    threshold: float = 3.0
    passed: bool = Field(alias="pass")


# ==================== EXPERIMENT SCHEMAS ====================

class KernelTableSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t: float = Field(default=1.0, gt=0)
    s: float = Field(default=0.5, gt=0)
    grid: str = "-3:3:0.1"


class EpsilonSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    s: float = Field(default=1.0, gt=0)
    gap: float = Field(default=1e-6, gt=0)
    z: float = 0.0
    widths: List[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025])


class HeatSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    h: float = Field(default=1e-2, gt=0)
    # None : h/10
    h_t: Optional[float] = Field(default=None, gt=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task: TaskKind
    suites: List[SuiteKind] = Field(default_factory=list)
    simulation: SimConfig = Field(default_factory=SimConfig)
    replicas: int = Field(default=20000, ge=2)
    workers: int = Field(default=1, ge=1)
    threshold: float = Field(default=3.0, gt=0)
    convention: Convention = Convention.RESOLVED
    bin_width: float = Field(default=0.1, gt=0)
    points: List[SpaceTimePoint] = Field(default_factory=list)
    spins: Optional[SpinSet] = None
    kernel: KernelTableSpec = Field(default_factory=KernelTableSpec)
    epsilon: EpsilonSpec = Field(default_factory=EpsilonSpec)
    heat: HeatSpec = Field(default_factory=HeatSpec)
    matrix: Optional[str] = None
    output: str = "results"
