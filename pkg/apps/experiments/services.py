from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import TYPE_CHECKING, Any

import django
from django.conf import settings
from rest_framework.exceptions import ValidationError

import numpy as np
import pandas as pd

from apps.curriculum.services import bin_dataset_service, random_batches_service, stage_batches_service
from apps.experiments.domain import (
    LEDGER_COLUMNS,
    LOG_COLUMNS,
    PURE_SFT_COEFFS,
    AblationResult,
    AblationSummaryRow,
    DistillConfig,
    DistillReport,
    ExperimentConfig,
    LedgerEntry,
    LogRow,
    Mode,
    RunLog,
    RunManifest,
    RunStatus,
    Sampling,
    TrainingOutcome,
)
from apps.experiments.repositories import (
    create_run_repository,
    finish_run_repository,
    save_metrics_rows_repository,
)
from apps.experiments.serializers import (
    DistillConfigSerializer,
    ExperimentConfigSerializer,
    LogRowSerializer,
    RunManifestSerializer,
)
from apps.grammar.domain import NUM_SLOTS, SlotIndex
from apps.metrics.services import evaluate_policy_service, five_acc_service, predict_records_service
from apps.optim.domain import ExpertBatch
from apps.optim.exceptions import NumericAbortError
from apps.optim.optimizers import AdamOptimizer, build_optimizer
from apps.optim.services import hybrid_step_service, rollout_groups_service
from apps.policy.domain import Capacity, PolicyParams
from apps.policy.services import (
    backprop_logit_grads,
    init_params_service,
    save_params_service,
    slot_log_probs_batch,
    slot_probs_batch,
)
from apps.rewards.domain import WeightMask
from apps.rewards.services import weight_mask_service
from apps.world.services import expert_slot_tokens_batch, gen_dataset_service, split_dataset_service

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from apps.curriculum.domain import BinnedInstances, StageSpec, TrainingBatch
    from apps.experiments.models import ExperimentRun
    from apps.optim.domain import HybridCoeffs
    from apps.optim.optimizers import Optimizer
    from apps.world.domain import Dataset

logger = logging.getLogger(__name__)

# Substreams de default_rng([seed, stream]) por propósito
BINNING_STREAM = 1
BATCH_STREAM = 2
ROLLOUT_STREAM = 3
SFT_STREAM = 4
EVAL_STREAM = 5
DISTILL_STREAM = 6

# Umbral de la sonda de eficiencia respecto al mejor reward_mean de pure_grpo
EFFICIENCY_FRACTION = 0.95


# ============================================================================
# Configuración
# ============================================================================


def build_experiment_config_service(data: dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Valida y construye un ExperimentConfig.

    Raises:
        ValidationError: Con los errores anidados bajo la clave de cada sub-config
    """
    serializer = ExperimentConfigSerializer(data=data or {})
    serializer.is_valid(raise_exception=True)
    return serializer.to_domain()


def load_experiment_config_service(path: Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Lee un config JSON y aplica overrides de primer nivel.

    Raises:
        ValidationError: Si el fichero no es JSON válido o el config es inválido
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError({"config": f"No se pudo leer {path}: {exc}"}) from exc
    if not isinstance(data, dict):
        raise ValidationError({"config": "Se esperaba un objeto JSON"})
    return build_experiment_config_service({**data, **(overrides or {})})


def build_distill_config_service(data: dict[str, Any] | None = None) -> DistillConfig:
    serializer = DistillConfigSerializer(data=data or {})
    serializer.is_valid(raise_exception=True)
    return serializer.to_domain()


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 del JSON canónico (claves ordenadas) del config."""
    canonical = json.dumps(cfg.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(cfg: ExperimentConfig, rollout_entropy: int = 0) -> RunManifest:
    return RunManifest(
        config_hash=config_hash(cfg),
        code_version=str(settings.AFRL["CODE_VERSION"]),
        seed=cfg.seed,
        mode=cfg.mode,
        sampling=cfg.sampling,
        deterministic=cfg.deterministic,
        rollout_entropy=rollout_entropy,
        config=cfg.as_dict(),
    )


# ============================================================================
# Entrenamiento
# ============================================================================


def prepare_datasets_service(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """
    Genera el mundo y lo separa en (train, holdout) por query.

    Se generan ceil(train_size / (1 − holdout)) instancias; el holdout queda
    congelado y nunca participa en la clasificación por dificultad.
    """
    total = math.ceil(cfg.train_size / (1.0 - cfg.holdout_fraction))
    return split_dataset_service(gen_dataset_service(total, cfg.world), cfg.holdout_fraction)


def _rollout_rng(cfg: ExperimentConfig) -> tuple[np.random.Generator, int]:
    if cfg.deterministic:
        return np.random.default_rng([cfg.seed, ROLLOUT_STREAM]), 0
    entropy = int(np.random.SeedSequence().entropy)
    return np.random.default_rng([entropy, ROLLOUT_STREAM]), entropy


def _weight_mask(cfg: ExperimentConfig) -> WeightMask:
    if cfg.mode is Mode.GRPO_UNIFORM:
        return WeightMask(weights=(1.0,) * NUM_SLOTS)
    return weight_mask_service(cfg.reward)


def _expert_batch(cfg: ExperimentConfig, train: Dataset, rng: np.random.Generator) -> ExpertBatch:
    """Lote SFT uniforme sobre train, con el experto ambiguo de π_data."""
    positions = rng.integers(len(train), size=cfg.sft_batch_size)
    world = cfg.world
    tokens = expert_slot_tokens_batch(train, positions, rng, world.label_noise, world.checkpoint_noise)
    return ExpertBatch(features=train.features[positions], tokens=tokens)


def _stage_batches(
    cfg: ExperimentConfig,
    stage: StageSpec,
    bins: BinnedInstances | None,
    train: Dataset,
    rng: np.random.Generator,
) -> Iterator[np.ndarray]:
    """Posiciones de los lotes RL de una etapa según el modo de muestreo."""
    if bins is not None and bins.training_positions.size == 0:
        logger.warning("all curriculum bins empty stage=%d, sampling uniformly from train", stage.stage)
        bins = None
    if bins is None:
        for _ in range(stage.steps):
            yield rng.integers(len(train), size=cfg.batch_size)
        return
    batches: Iterator[TrainingBatch]
    if cfg.sampling is Sampling.RANDOM:
        batches = random_batches_service(bins, cfg.batch_size, rng, stage.coeffs, stage.steps, stage.stage)
    else:
        batches = stage_batches_service(stage, bins, cfg.batch_size, rng, stage.steps)
    for batch in batches:
        yield batch.positions


def _train_step(
    cfg: ExperimentConfig,
    params: PolicyParams,
    positions: np.ndarray,
    coeffs: HybridCoeffs,
    train: Dataset,
    rngs: dict[str, np.random.Generator],
    mask: WeightMask,
    optimizer: Optimizer,
) -> tuple[PolicyParams, float | None, float | None, np.ndarray | None]:
    rl_batch = None
    if coeffs.alpha_t > 0:
        rl_batch = rollout_groups_service(
            params, train.features[positions], train.labels[positions], rngs["rollout"], cfg.reward, cfg.optim
        )
    sft_batch = _expert_batch(cfg, train, rngs["sft"]) if coeffs.gamma_t > 0 else None
    outcome = hybrid_step_service(params, params, rl_batch, sft_batch, coeffs, mask, cfg.optim, optimizer)
    rewards = None if rl_batch is None else rl_batch.rewards
    return outcome.params, outcome.grpo_loss, outcome.sft_loss, rewards


def _evaluate(
    cfg: ExperimentConfig,
    params: PolicyParams,
    holdout: Dataset,
    step: int,
    stage: StageSpec | None,
) -> LogRow:
    coeffs = PURE_SFT_COEFFS if stage is None else cfg.coeffs_for(stage)
    metrics = evaluate_policy_service(
        params,
        holdout,
        cfg.reward,
        np.random.default_rng([cfg.seed, EVAL_STREAM, step]),
        step=step,
        temperature=cfg.optim.temperature,
    )
    logger.info(
        "eval step=%d stage=%d reward_mean=%.4f entropy=%.4f five_acc=%.4f",
        step,
        0 if stage is None else stage.stage,
        metrics.reward_mean,
        metrics.entropy,
        metrics.five_acc,
    )
    return LogRow(
        stage=0 if stage is None else stage.stage,
        alpha_t=coeffs.alpha_t,
        gamma_t=coeffs.gamma_t,
        metrics=metrics,
    )


def run_training_service(
    cfg: ExperimentConfig,
    datasets: tuple[Dataset, Dataset] | None = None,
    output_dir: Path | None = None,
    init: PolicyParams | None = None,
) -> TrainingOutcome:
    """
    Ejecuta el protocolo completo: calentamiento SFT opcional y las etapas en orden.

    Por paso: lote RL según el muestreo, G rollouts por instancia puntuados con
    las recompensas con gates, ventajas de grupo con la máscara de pesos, lote
    SFT experto y un paso híbrido con los coeficientes de la etapa. Evalúa el
    holdout en el paso 0, cada `eval_interval` pasos y en el último paso.

    Args:
        cfg: Config validado
        datasets: (train, holdout) ya generados; por defecto se generan desde cfg.world
        output_dir: Si se da, escribe manifiesto, logs, ledger y checkpoints
        init: Parámetros de partida (por defecto política uniforme)

    Returns:
        TrainingOutcome con el RunLog y los parámetros finales

    Raises:
        NumericAbortError: Con `checkpoint_path` apuntando al último estado válido
    """
    train, holdout = datasets or prepare_datasets_service(cfg)
    rollout_rng, entropy = _rollout_rng(cfg)
    rngs = {
        "binning": np.random.default_rng([cfg.seed, BINNING_STREAM]),
        "batches": np.random.default_rng([cfg.seed, BATCH_STREAM]),
        "rollout": rollout_rng,
        "sft": np.random.default_rng([cfg.seed, SFT_STREAM]),
    }
    log = RunLog(manifest=build_manifest(cfg, entropy))
    mask = _weight_mask(cfg)
    optimizer = build_optimizer(cfg.optim)
    params = init or init_params_service(cfg.world.feature_dim, Capacity.TEACHER, seed=cfg.seed)
    checkpoints: list[str] = []
    logger.info(
        "training start mode=%s sampling=%s seed=%d total_steps=%d hash=%s",
        cfg.mode.value,
        cfg.sampling.value,
        cfg.seed,
        cfg.total_steps,
        log.manifest.config_hash[:12],
    )

    step = 0
    try:
        for _ in range(cfg.sft_warmup_steps):
            sft_batch = _expert_batch(cfg, train, rngs["sft"])
            outcome = hybrid_step_service(params, params, None, sft_batch, PURE_SFT_COEFFS, mask, cfg.optim, optimizer)
            params = outcome.params
        if cfg.sft_warmup_steps:
            logger.info("sft warmup done steps=%d", cfg.sft_warmup_steps)
            # El optimizador de las etapas arranca sin momentos
            optimizer = build_optimizer(cfg.optim)
        log.append_row(_evaluate(cfg, params, holdout, 0, None))

        bins = None
        for stage in cfg.stages:
            coeffs = cfg.coeffs_for(stage)
            if cfg.uses_rl and (bins is None or not cfg.static_binning):
                bins = bin_dataset_service(
                    params, train, rngs["binning"], cfg.n_difficulty_samples, cfg.optim.temperature
                )
            logger.info(
                "stage start stage=%d steps=%d alpha_t=%.2f gamma_t=%.2f",
                stage.stage,
                stage.steps,
                coeffs.alpha_t,
                coeffs.gamma_t,
            )
            for positions in _stage_batches(cfg, stage, bins, train, rngs["batches"]):
                step += 1
                params, grpo_loss, sft_loss, rewards = _train_step(
                    cfg, params, positions, coeffs, train, rngs, mask, optimizer
                )
                log.append_entry(
                    LedgerEntry(
                        step=step,
                        stage=stage.stage,
                        alpha_t=coeffs.alpha_t,
                        gamma_t=coeffs.gamma_t,
                        grpo_loss=grpo_loss,
                        sft_loss=sft_loss,
                        reward_mean=None if rewards is None else float(rewards.mean()),
                        reward_std=None if rewards is None else float(rewards.std()),
                    )
                )
                logger.debug("step=%d stage=%d grpo_loss=%s sft_loss=%s", step, stage.stage, grpo_loss, sft_loss)
                if step % cfg.eval_interval == 0 or step == cfg.total_steps:
                    log.append_row(_evaluate(cfg, params, holdout, step, stage))
            if output_dir is not None:
                path = save_params_service(params, Path(output_dir) / "checkpoints" / f"stage_{stage.stage}.json")
                checkpoints.append(str(path))
    except NumericAbortError as exc:
        logger.error("training aborted step=%d diagnostic=%s", step + 1, exc.diagnostic)
        exc.partial = log
        if output_dir is not None:
            last_good = save_params_service(params, Path(output_dir) / "checkpoints" / "last_good.json")
            exc.checkpoint_path = str(last_good)
            write_run_outputs_service(log, Path(output_dir))
        raise

    if output_dir is not None:
        checkpoints.append(str(save_params_service(params, Path(output_dir) / "params.json")))
        write_run_outputs_service(log, Path(output_dir))
    logger.info("training done steps=%d rows=%d", step, len(log.rows))
    return TrainingOutcome(log=log, params=params, checkpoints=tuple(checkpoints))


# ============================================================================
# Ablación
# ============================================================================


def _comparable(cfg: ExperimentConfig) -> dict[str, Any]:
    data = cfg.as_dict()
    for key in ("mode", "sampling", "output_dir"):
        data.pop(key)
    return data


def ablation_labels(cfgs: Sequence[ExperimentConfig]) -> list[str]:
    """Etiqueta `<mode>_<sampling>` por miembro; las repetidas llevan sufijo de posición."""
    labels = []
    for index, cfg in enumerate(cfgs):
        label = f"{cfg.mode.value}_{cfg.sampling.value}"
        labels.append(f"{label}_{index}" if label in labels else label)
    return labels


def _init_worker() -> None:
    django.setup()


def _run_member(cfg: ExperimentConfig, datasets: tuple[Dataset, Dataset], output_dir: Path | None) -> RunLog:
    return run_training_service(cfg, datasets, output_dir).log


def efficiency_probe(logs: dict[str, RunLog], modes: dict[str, Mode]) -> dict[str, tuple[int | None, float | None]]:
    """
    Primer paso en que reward_mean alcanza el 95% del mejor reward_mean de pure_grpo.

    Returns:
        Por etiqueta, (paso, paso / paso de pure_grpo); (None, None) si no hay
        miembro pure_grpo o el umbral no se alcanza
    """
    reference = next((label for label, mode in modes.items() if mode is Mode.PURE_GRPO), None)
    if reference is None:
        return dict.fromkeys(logs, (None, None))
    threshold = EFFICIENCY_FRACTION * float(np.nanmax(logs[reference].column("reward_mean")))

    def first_crossing(log: RunLog) -> int | None:
        hits = np.flatnonzero(log.column("reward_mean") >= threshold)
        return log.rows[int(hits[0])].step if hits.size else None

    reference_step = first_crossing(logs[reference])
    result = {}
    for label, log in logs.items():
        crossing = first_crossing(log)
        ratio = crossing / reference_step if crossing is not None and reference_step else None
        result[label] = (crossing, ratio)
    return result


def wide_log_frame(logs: dict[str, RunLog]) -> pd.DataFrame:
    """Trayectorias lado a lado: una fila por paso y columnas `<etiqueta>:<métrica>`."""
    frames = [
        pd.DataFrame([row.as_row() for row in log.rows], columns=list(LOG_COLUMNS))
        .set_index("step")
        .add_prefix(f"{label}:")
        for label, log in logs.items()
    ]
    return pd.concat(frames, axis=1).sort_index().reset_index()


def run_ablation_service(
    cfgs: Sequence[ExperimentConfig],
    workers: int = 1,
    output_dir: Path | None = None,
) -> AblationResult:
    """
    Ejecuta la matriz de ablación sobre un mundo compartido.

    Los miembros solo pueden diferir en `mode` y `sampling`; el dataset se genera
    una vez y con `workers > 1` cada ejecución corre en su propio proceso.

    Raises:
        ValidationError: Si hay menos de 2 configs o difieren en algo más que mode/sampling
    """
    if len(cfgs) < 2:
        raise ValidationError({"configs": "Una ablación necesita al menos 2 configs"})
    base = _comparable(cfgs[0])
    for index, cfg in enumerate(cfgs[1:], start=1):
        if cfg.world != cfgs[0].world:
            raise ValidationError({"world": f"El config {index} usa otro mundo"})
        if _comparable(cfg) != base:
            raise ValidationError({"configs": f"El config {index} difiere en algo más que mode/sampling"})

    labels = ablation_labels(cfgs)
    datasets = prepare_datasets_service(cfgs[0])
    member_dirs = [None if output_dir is None else Path(output_dir) / label for label in labels]
    logger.info("ablation start members=%s workers=%d", ",".join(labels), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
            futures = [
                pool.submit(_run_member, cfg, datasets, member_dir)
                for cfg, member_dir in zip(cfgs, member_dirs, strict=True)
            ]
            logs = dict(zip(labels, (future.result() for future in futures), strict=True))
    else:
        logs = {
            label: _run_member(cfg, datasets, member_dir)
            for label, cfg, member_dir in zip(labels, cfgs, member_dirs, strict=True)
        }

    probe = efficiency_probe(logs, {label: cfg.mode for label, cfg in zip(labels, cfgs, strict=True)})
    summary = tuple(
        AblationSummaryRow(
            label=label,
            mode=cfg.mode,
            sampling=cfg.sampling,
            final=logs[label].final.as_row(),
            efficiency_step=probe[label][0],
            efficiency_ratio=probe[label][1],
        )
        for label, cfg in zip(labels, cfgs, strict=True)
    )
    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        wide_log_frame(logs).to_csv(Path(output_dir) / "ablation.csv", index=False)
        pd.DataFrame([row.as_dict() for row in summary]).to_csv(Path(output_dir) / "summary.csv", index=False)
    return AblationResult(logs=logs, summary=summary)


# ============================================================================
# Destilación
# ============================================================================


def build_student(teacher: PolicyParams, cfg: DistillConfig) -> PolicyParams:
    """
    Student inicial: proyección aleatoria D' < D o, para el control, la identidad.
    """
    feature_dim = teacher.feature_dim
    if cfg.student_dim is not None and cfg.student_dim < feature_dim:
        return init_params_service(feature_dim, Capacity.STUDENT, cfg.student_dim, cfg.seed, cfg.init_scale)
    base = init_params_service(feature_dim, Capacity.TEACHER, seed=cfg.seed, init_scale=cfg.init_scale)
    return PolicyParams(
        weights=base.weights, biases=base.biases, capacity=Capacity.STUDENT, projection=np.eye(feature_dim)
    )


def distill_loss_and_grad(
    student: PolicyParams,
    features: np.ndarray,
    targets: Sequence[np.ndarray],
    slots: Sequence[int],
    temperature: float = 1.0,
) -> tuple[float, np.ndarray]:
    """
    Entropía cruzada media −Σ p_T·log p_S sobre los slots dados y su gradiente plano.

    Por slot, ∂L/∂logits = (p_S − p_T) / (B·|slots|·T).
    """
    log_probs = slot_log_probs_batch(student, features, temperature)
    scale = features.shape[0] * len(slots) * temperature
    loss = 0.0
    logit_grads = [np.zeros_like(lp) for lp in log_probs]
    for slot in slots:
        loss -= float(np.sum(targets[slot] * log_probs[slot]))
        logit_grads[slot] = (np.exp(log_probs[slot]) - targets[slot]) / scale
    grad = backprop_logit_grads(student, features, logit_grads).flatten()
    return loss / (features.shape[0] * len(slots)), grad


def run_distill_service(
    teacher: PolicyParams,
    train: Dataset,
    holdout: Dataset,
    cfg: DistillConfig,
) -> tuple[PolicyParams, DistillReport]:
    """
    Destila el teacher en un student por entropía cruzada a sus distribuciones suaves.

    Por defecto solo el slot de decisión; con `all_slots` los 7.

    Returns:
        Tupla (student, DistillReport con la 5-ACC de ambos en el holdout)

    Raises:
        NumericAbortError: Si la pérdida o el gradiente dejan de ser finitos
    """
    student = build_student(teacher, cfg)
    slots = tuple(range(NUM_SLOTS)) if cfg.all_slots else (SlotIndex.DECISION,)
    targets = slot_probs_batch(teacher, train.features, cfg.temperature)
    optimizer = AdamOptimizer(cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, DISTILL_STREAM])
    loss = float("nan")
    for step in range(cfg.steps):
        if cfg.batch_size and cfg.batch_size < len(train):
            positions = rng.integers(len(train), size=cfg.batch_size)
        else:
            positions = np.arange(len(train))
        loss, grad = distill_loss_and_grad(
            student, train.features[positions], [t[positions] for t in targets], slots, cfg.temperature
        )
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            logger.error("distill abort step=%d loss=%s", step, loss)
            raise NumericAbortError(f"Pérdida de destilación no finita en el paso {step}")
        student = student.with_flat(optimizer.step(student.flatten(), grad))
    if cfg.steps == 0:
        loss, _ = distill_loss_and_grad(student, train.features, targets, slots, cfg.temperature)

    report = DistillReport(
        teacher_five_acc=five_acc_service(predict_records_service(teacher, holdout)),
        student_five_acc=five_acc_service(predict_records_service(student, holdout)),
        student_dim=student.input_dim,
        steps=cfg.steps,
        final_loss=float(loss),
    )
    logger.info(
        "distill done student_dim=%d teacher=%.4f student=%.4f gap=%.2f",
        report.student_dim,
        report.teacher_five_acc,
        report.student_five_acc,
        report.gap_points,
    )
    return student, report


# ============================================================================
# Export / import
# ============================================================================


def _nullable(row: dict[str, Any]) -> dict[str, Any]:
    return {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in row.items()}


def export_run_log_service(log: RunLog, path: Path, fmt: str = "csv") -> Path:
    """
    Exporta las filas del RunLog.

    `csv`: cabecera LOG_COLUMNS y una fila por evaluación (NaN como celda vacía).
    `jsonl`: el manifiesto en la primera línea y una fila por línea (NaN como null).

    Raises:
        ValidationError: Si el formato no es csv ni jsonl
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        pd.DataFrame([row.as_row() for row in log.rows], columns=list(LOG_COLUMNS)).to_csv(path, index=False)
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as handle:
            handle.write(json.dumps(log.manifest.as_dict(), sort_keys=True) + "\n")
            for row in log.rows:
                handle.write(json.dumps(_nullable(row.as_row())) + "\n")
    else:
        raise ValidationError({"format": f"Formato no soportado: {fmt}"})
    return path


def _parse_row(record: dict[str, Any]) -> LogRow:
    serializer = LogRowSerializer(data=_nullable(record))
    serializer.is_valid(raise_exception=True)
    return serializer.to_domain()


def read_log_csv_service(path: Path) -> list[LogRow]:
    """
    Lee un log CSV exportado.

    Raises:
        ValidationError: Si la cabecera no coincide con LOG_COLUMNS o una fila es inválida
    """
    frame = pd.read_csv(path, float_precision="round_trip")
    if tuple(frame.columns) != LOG_COLUMNS:
        raise ValidationError({"columns": f"Cabecera inesperada: {','.join(frame.columns)}"})
    return [_parse_row(record) for record in frame.to_dict(orient="records")]


def read_run_log_jsonl_service(path: Path) -> RunLog:
    """
    Lee un RunLog exportado en JSONL (manifiesto y filas).

    Raises:
        ValidationError: Si falta el manifiesto o alguna línea es inválida
    """
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise ValidationError({"path": f"{path} está vacío"})
    manifest = RunManifestSerializer(data=json.loads(lines[0]))
    manifest.is_valid(raise_exception=True)
    log = RunLog(manifest=manifest.to_domain())
    for line in lines[1:]:
        log.append_row(_parse_row(json.loads(line)))
    return log


def write_run_outputs_service(log: RunLog, output_dir: Path) -> dict[str, Path]:
    """Escribe manifest.json, log.csv, log.jsonl y ledger.csv en `output_dir`."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = output_dir / "manifest.json"
    manifest_path.write_text(json.dumps(log.manifest.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ledger_path = output_dir / "ledger.csv"
    pd.DataFrame([entry.as_row() for entry in log.ledger], columns=list(LEDGER_COLUMNS)).to_csv(
        ledger_path, index=False
    )
    paths = {
        "manifest": manifest_path,
        "csv": export_run_log_service(log, output_dir / "log.csv", "csv"),
        "jsonl": export_run_log_service(log, output_dir / "log.jsonl", "jsonl"),
        "ledger": ledger_path,
    }
    logger.info("run outputs written dir=%s rows=%d", output_dir, len(log.rows))
    return paths


# ============================================================================
# Persistencia
# ============================================================================


def persist_run_log_service(
    label: str,
    log: RunLog,
    status: RunStatus = RunStatus.COMPLETED,
    output_dir: str = "",
    diagnostic: str | None = None,
) -> ExperimentRun:
    """
    Guarda una ejecución y sus filas de métricas en la base de datos.

    Args:
        label: Nombre de la ejecución
        log: RunLog (completo o parcial si la ejecución abortó)
        status: Estado final
        output_dir: Directorio de artefactos
        diagnostic: Diagnóstico de un aborto numérico

    Returns:
        ExperimentRun persistido
    """
    run = create_run_repository(label, log.manifest, output_dir)
    save_metrics_rows_repository(run, log.rows)
    final_step = log.ledger[-1].step if log.ledger else 0
    run = finish_run_repository(run, status, final_step, diagnostic)
    logger.info("run persisted id=%d label=%s status=%s rows=%d", run.id, label, status.value, len(log.rows))
    return run
