from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

from rest_framework.exceptions import ValidationError

import numpy as np

from apps.metrics.domain import MetricsRecord
from apps.optim.domain import HybridCoeffs

if TYPE_CHECKING:
    from apps.curriculum.domain import StageSpec
    from apps.optim.domain import OptimConfig
    from apps.policy.domain import PolicyParams
    from apps.rewards.domain import RewardConfig
    from apps.world.domain import WorldConfig

# Columnas del CSV de métricas (esquema congelado)
LOG_COLUMNS: tuple[str, ...] = (
    "step",
    "stage",
    "alpha_t",
    "gamma_t",
    "reward_mean",
    "reward_std",
    "entropy",
    "five_acc",
    "two_acc",
    "macro_f1",
    "weighted_f1",
    "pair_acc",
    "ndcg3",
    "longtail_checkpoint_acc",
)

LEDGER_COLUMNS: tuple[str, ...] = (
    "step",
    "stage",
    "alpha_t",
    "gamma_t",
    "grpo_loss",
    "sft_loss",
    "reward_mean",
    "reward_std",
)


class Mode(str, Enum):
    MODE_BALANCED = "mode_balanced"
    PURE_GRPO = "pure_grpo"
    GRPO_UNIFORM = "grpo_uniform"
    SFT_ONLY = "sft_only"


class Sampling(str, Enum):
    CURRICULUM = "curriculum"
    RANDOM = "random"


class RunStatus(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    ABORTED = "aborted"


PURE_RL_COEFFS = HybridCoeffs(1.0, 0.0)
PURE_SFT_COEFFS = HybridCoeffs(0.0, 1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Protocolo completo de entrenamiento.

    Attributes:
        world, reward, optim: Sub-configuraciones validadas
        stages: Etapas del currículo con sus pasos
        mode: mode_balanced, pure_grpo, grpo_uniform o sft_only
        sampling: curriculum o random
        seed: Semilla raíz de la ejecución
        output_dir: Directorio de salida por defecto
        train_size: Instancias de entrenamiento objetivo
        holdout_fraction: Fracción de queries reservada para evaluación
        batch_size: Instancias por lote RL
        sft_batch_size: Trayectorias expertas por lote SFT
        eval_interval: Pasos entre evaluaciones
        sft_warmup_steps: Pasos SFT previos a las etapas (checkpoint de partida)
        static_binning: Clasificar por dificultad una sola vez en lugar de en cada etapa
        deterministic: Ejecución reproducible bit a bit
        n_difficulty_samples: Muestras por instancia de la estimación Acc@n
    """

    world: WorldConfig
    reward: RewardConfig
    optim: OptimConfig
    stages: tuple[StageSpec, ...]
    mode: Mode = Mode.MODE_BALANCED
    sampling: Sampling = Sampling.CURRICULUM
    seed: int = 0
    output_dir: str = "runs/default"
    train_size: int = 10_000
    holdout_fraction: float = 0.2
    batch_size: int = 64
    sft_batch_size: int = 64
    eval_interval: int = 100
    sft_warmup_steps: int = 0
    static_binning: bool = False
    deterministic: bool = True
    n_difficulty_samples: int = 8

    @property
    def total_steps(self) -> int:
        return sum(stage.steps for stage in self.stages)

    @property
    def uses_rl(self) -> bool:
        return self.mode is not Mode.SFT_ONLY

    def coeffs_for(self, stage: StageSpec) -> HybridCoeffs:
        """(α_t, γ_t) activos en la etapa según el modo."""
        if self.mode is Mode.MODE_BALANCED:
            return stage.coeffs
        if self.mode is Mode.SFT_ONLY:
            return PURE_SFT_COEFFS
        return PURE_RL_COEFFS

    def as_dict(self) -> dict[str, Any]:
        """Forma JSON canónica (la que se hashea en el manifiesto)."""
        return {
            "world": self.world.as_dict(),
            "reward": self.reward.as_dict(),
            "optim": self.optim.as_dict(),
            "stages": [
                {
                    "stage": s.stage,
                    "mix": list(s.mix),
                    "coeffs": {"alpha_t": s.coeffs.alpha_t, "gamma_t": s.coeffs.gamma_t},
                    "steps": s.steps,
                }
                for s in self.stages
            ],
            "mode": self.mode.value,
            "sampling": self.sampling.value,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "train_size": self.train_size,
            "holdout_fraction": self.holdout_fraction,
            "batch_size": self.batch_size,
            "sft_batch_size": self.sft_batch_size,
            "eval_interval": self.eval_interval,
            "sft_warmup_steps": self.sft_warmup_steps,
            "static_binning": self.static_binning,
            "deterministic": self.deterministic,
            "n_difficulty_samples": self.n_difficulty_samples,
        }


@dataclass(frozen=True)
class RunManifest:
    """Todo lo necesario para reproducir una ejecución (sin valores de reloj)."""

    config_hash: str
    code_version: str
    seed: int
    mode: Mode
    sampling: Sampling
    deterministic: bool
    rollout_entropy: int
    config: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["mode"] = self.mode.value
        data["sampling"] = self.sampling.value
        return data


@dataclass(frozen=True)
class LogRow:
    """Fila de evaluación: contexto de etapa más el MetricsRecord."""

    stage: int
    alpha_t: float
    gamma_t: float
    metrics: MetricsRecord

    @property
    def step(self) -> int:
        return self.metrics.step

    def as_row(self) -> dict[str, float | int]:
        data = {"stage": self.stage, "alpha_t": self.alpha_t, "gamma_t": self.gamma_t, **self.metrics.as_dict()}
        return {column: data[column] for column in LOG_COLUMNS}


@dataclass(frozen=True)
class LedgerEntry:
    """Coeficientes y pérdidas de un paso de entrenamiento."""

    step: int
    stage: int
    alpha_t: float
    gamma_t: float
    grpo_loss: float | None
    sft_loss: float | None
    reward_mean: float | None
    reward_std: float | None

    def as_row(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class RunLog:
    """
    Registro append-only de una ejecución.

    Attributes:
        manifest: Manifiesto de reproducción
        rows: Filas de evaluación con pasos estrictamente crecientes
        ledger: Una entrada por paso de entrenamiento
    """

    manifest: RunManifest
    rows: list[LogRow] = field(default_factory=list)
    ledger: list[LedgerEntry] = field(default_factory=list)

    def append_row(self, row: LogRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise ValidationError({"step": f"Paso {row.step} no posterior a {self.rows[-1].step}"})
        self.rows.append(row)

    def append_entry(self, entry: LedgerEntry) -> None:
        if self.ledger and entry.step <= self.ledger[-1].step:
            raise ValidationError({"step": f"Paso {entry.step} no posterior a {self.ledger[-1].step}"})
        self.ledger.append(entry)

    @property
    def final(self) -> LogRow:
        if not self.rows:
            raise ValidationError({"rows": "El registro no tiene filas"})
        return self.rows[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([row.as_row()[name] for row in self.rows], dtype=np.float64)


@dataclass(frozen=True)
class TrainingOutcome:
    log: RunLog
    params: PolicyParams
    checkpoints: tuple[str, ...] = ()


@dataclass(frozen=True)
class DistillConfig:
    """
    Destilación teacher → student sobre el slot de decisión.

    Attributes:
        steps: Pasos de Adam
        learning_rate: Tasa de aprendizaje
        batch_size: Instancias por lote (0 = lote completo)
        student_dim: D' del student; None o >= D da el control de igual capacidad
        all_slots: Destilar los 7 slots en lugar de solo el de decisión
        seed: Semilla de la proyección, la inicialización y los lotes
        init_scale: Escala de la inicialización aleatoria del student
        temperature: Temperatura de las distribuciones suaves
    """

    steps: int = 500
    learning_rate: float = 0.05
    batch_size: int = 0
    student_dim: int | None = 4
    all_slots: bool = False
    seed: int = 0
    init_scale: float = 0.01
    temperature: float = 1.0


@dataclass(frozen=True)
class DistillReport:
    teacher_five_acc: float
    student_five_acc: float
    student_dim: int
    steps: int
    final_loss: float

    @property
    def gap_points(self) -> float:
        """Diferencia teacher − student en puntos porcentuales."""
        return 100.0 * (self.teacher_five_acc - self.student_five_acc)

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["gap_points"] = self.gap_points
        return data


@dataclass(frozen=True)
class AblationSummaryRow:
    """Resumen final de un miembro de la ablación más la sonda de eficiencia."""

    label: str
    mode: Mode
    sampling: Sampling
    final: dict[str, float | int]
    efficiency_step: int | None
    efficiency_ratio: float | None

    def as_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "mode": self.mode.value,
            "sampling": self.sampling.value,
            **self.final,
            "efficiency_step": self.efficiency_step,
            "efficiency_ratio": self.efficiency_ratio,
        }


@dataclass(frozen=True)
class AblationResult:
    logs: dict[str, RunLog]
    summary: tuple[AblationSummaryRow, ...]
