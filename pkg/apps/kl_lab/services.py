from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from rest_framework.exceptions import ValidationError

import numpy as np
from scipy.special import entr, expit, logit, rel_entr, softmax, xlogy

from apps.kl_lab.domain import (
    SIGMA_MIN,
    SIGMA_SPAN,
    BumpParams,
    Categorical,
    Direction,
    FitResult,
    FitTracePoint,
    GibbsSpec,
    KlLabReport,
)
from apps.optim.exceptions import NumericAbortError
from apps.optim.optimizers import AdamOptimizer

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

logger = logging.getLogger(__name__)

GRID_SIZE = 50
MODE_CENTRES = (10.0, 40.0)
MODE_WIDTH = 3.0
# Cada región de modo cubre ±3 anchos alrededor del centro
REGION_HALF_WIDTH = 3 * MODE_WIDTH
INITIAL_SIGMA = 5.0
TRACE_INTERVAL = 100


def _probs(dist: Categorical | np.ndarray) -> np.ndarray:
    return dist.probs if isinstance(dist, Categorical) else np.asarray(dist, dtype=np.float64)


def forward_kl_service(p: Categorical | np.ndarray, q: Categorical | np.ndarray) -> float:
    """
    D_KL(p‖q) = Σ p_i ln(p_i / q_i) con 0·ln 0 = 0.

    Devuelve +inf si el soporte de p no está contenido en el de q.
    """
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValidationError({"q": "Las distribuciones deben tener el mismo tamaño"})
    return float(rel_entr(p, q).sum())


def reverse_kl_service(q: Categorical | np.ndarray, p: Categorical | np.ndarray) -> float:
    """D_KL(q‖p): la KL inversa con la política q como primer argumento."""
    return forward_kl_service(q, p)


def entropy(p: Categorical | np.ndarray) -> float:
    """Entropía de Shannon en nats."""
    return float(entr(_probs(p)).sum())


def gibbs_policy_service(spec: GibbsSpec) -> Categorical:
    """π*(x) = exp(R(x)/η) / Z, con desplazamiento por el máximo."""
    return Categorical(probs=softmax(spec.rewards / spec.temperature))


def verify_sft_identity_service(p: Categorical | np.ndarray, q: Categorical | np.ndarray) -> float:
    """
    Residuo de D_KL(p‖q) = −H(p) + L_SFT, con L_SFT = −Σ p ln q.

    Raises:
        ValidationError: Si q no tiene soporte completo
    """
    p, q = _probs(p), _probs(q)
    if np.any(q <= 0.0):
        raise ValidationError({"q": "q debe tener soporte completo"})
    cross_entropy = -float(xlogy(p, q).sum())
    return forward_kl_service(p, q) - (cross_entropy - entropy(p))


def verify_rl_identity_service(q: Categorical | np.ndarray, spec: GibbsSpec) -> float:
    """Residuo de D_KL(q‖π*) = −H(q) − E_q[R]/η + ln Z."""
    q = _probs(q)
    lhs = reverse_kl_service(q, gibbs_policy_service(spec))
    rhs = -entropy(q) - float(q @ spec.rewards) / spec.temperature + spec.log_partition
    return lhs - rhs


def grid(size: int = GRID_SIZE) -> np.ndarray:
    return np.arange(size, dtype=np.float64)


def bump_distribution(mu: float, sigma: float, size: int = GRID_SIZE) -> Categorical:
    """Pico gaussiano discretizado sobre la rejilla 0..size-1."""
    return Categorical(probs=softmax(-((grid(size) - mu) ** 2) / (2.0 * sigma**2)))


def bimodal_target(
    centres: Sequence[float] = MODE_CENTRES,
    width: float = MODE_WIDTH,
    weights: Sequence[float] = (0.5, 0.5),
    size: int = GRID_SIZE,
) -> Categorical:
    """Mezcla de picos discretizados (por defecto en 10 y 40, anchura 3, pesos 0.5/0.5)."""
    mixture = sum(w * bump_distribution(c, width, size).probs for c, w in zip(centres, weights, strict=True))
    return Categorical.from_weights(mixture)


def mode_masses(
    dist: Categorical,
    centres: Sequence[float] = MODE_CENTRES,
    half_width: float = REGION_HALF_WIDTH,
) -> tuple[float, ...]:
    """Masa de `dist` en cada región [c − half_width, c + half_width]."""
    x = grid(len(dist))
    return tuple(float(dist.probs[np.abs(x - c) <= half_width].sum()) for c in centres)


def _loss_and_grad(
    params: BumpParams,
    target: np.ndarray,
    log_target: np.ndarray,
    direction: Direction,
) -> tuple[float, np.ndarray]:
    # Gradiente analítico a través de los logits u_i = −(x_i − μ)² / (2σ²)
    x = grid(target.size)
    sigma = params.sigma
    diff = x - params.mu
    q = softmax(-(diff**2) / (2.0 * sigma**2))
    log_q = np.log(np.maximum(q, np.finfo(np.float64).tiny))
    if direction is Direction.FORWARD:
        loss = float(rel_entr(target, q).sum())
        d_logits = q - target
    else:
        loss = float(np.sum(q * (log_q - log_target)))
        d_logits = q * (log_q - log_target - loss)
    d_sigma_d_rho = SIGMA_SPAN * expit(params.rho) * (1.0 - expit(params.rho))
    grad_mu = float(np.sum(d_logits * diff / sigma**2))
    grad_rho = float(np.sum(d_logits * diff**2 / sigma**3)) * d_sigma_d_rho
    return loss, np.array([grad_mu, grad_rho])


def initial_params(seed: int, size: int = GRID_SIZE) -> BumpParams:
    """Punto inicial descentrado: μ = centro ± U(2, 8), σ = 5."""
    rng = np.random.default_rng([seed, 1])
    offset = rng.uniform(2.0, 8.0) * (1.0 if rng.random() < 0.5 else -1.0)
    centre = (size - 1) / 2.0
    rho = float(logit((INITIAL_SIGMA - SIGMA_MIN) / SIGMA_SPAN))
    return BumpParams(mu=centre + offset, rho=rho)


def fit_divergence_service(
    target: Categorical,
    direction: Direction | str,
    steps: int = 2000,
    lr: float = 0.1,
    seed: int = 0,
    init: BumpParams | None = None,
    centres: Sequence[float] = MODE_CENTRES,
) -> FitResult:
    """
    Ajusta la familia de un solo pico a `target` minimizando la divergencia elegida.

    Args:
        target: Distribución objetivo (soporte completo)
        direction: forward minimiza KL(p‖q) (cubre modos), reverse KL(q‖p) (busca modos)
        steps: Pasos de Adam
        lr: Tasa de aprendizaje
        seed: Semilla del punto inicial
        init: Punto inicial explícito (opcional)
        centres: Centros de las regiones de modo del informe

    Returns:
        FitResult con parámetros, divergencia final, masas por modo y traza

    Raises:
        ValidationError: Si el objetivo no tiene soporte completo
        NumericAbortError: Si la divergencia deja de ser finita
    """
    direction = Direction(direction)
    probs = target.probs
    if np.any(probs <= 0.0):
        raise ValidationError({"target": "El objetivo debe tener soporte completo"})
    log_target = np.log(probs)
    params = init or initial_params(seed, probs.size)
    optimizer = AdamOptimizer(lr)
    trace = []
    loss = float("nan")
    for step in range(steps + 1):
        loss, grad = _loss_and_grad(params, probs, log_target, direction)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            logger.error("kl fit diverged direction=%s seed=%d step=%d", direction.value, seed, step)
            raise NumericAbortError(f"Divergencia no finita en el paso {step}")
        if step % TRACE_INTERVAL == 0 or step == steps:
            trace.append(FitTracePoint(step=step, loss=loss, mu=params.mu, sigma=params.sigma))
        if step == steps:
            break
        theta = optimizer.step(np.array([params.mu, params.rho]), grad)
        params = BumpParams(mu=float(theta[0]), rho=float(theta[1]))

    fitted = bump_distribution(params.mu, params.sigma, probs.size)
    result = FitResult(
        direction=direction,
        seed=seed,
        params=params,
        loss=loss,
        mode_masses=mode_masses(fitted, centres),
        trace=tuple(trace),
    )
    logger.info(
        "kl fit direction=%s seed=%d mu=%.3f sigma=%.3f masses=%s",
        direction.value,
        seed,
        params.mu,
        params.sigma,
        [round(m, 4) for m in result.mode_masses],
    )
    return result


def _random_simplex(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.dirichlet(np.ones(size))


def identity_residuals(n_pairs: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Residuos máximos |·| de las identidades SFT y RL sobre pares aleatorios."""
    rng = np.random.default_rng([seed, 2])
    sft_max = rl_max = 0.0
    for _ in range(n_pairs):
        size = int(rng.integers(2, 21))
        p, q = _random_simplex(rng, size), _random_simplex(rng, size)
        spec = GibbsSpec(rewards=rng.normal(size=size), temperature=float(rng.uniform(0.1, 5.0)))
        sft_max = max(sft_max, abs(verify_sft_identity_service(p, q)))
        rl_max = max(rl_max, abs(verify_rl_identity_service(q, spec)))
    return sft_max, rl_max


def gibbs_minimizer_holds(n_trials: int = 200, seed: int = 0) -> bool:
    """π* es el minimizador único: toda perturbación q ≠ π* tiene D_KL(q‖π*) > 0."""
    rng = np.random.default_rng([seed, 3])
    for _ in range(n_trials):
        size = int(rng.integers(2, 21))
        spec = GibbsSpec(rewards=rng.normal(size=size), temperature=float(rng.uniform(0.1, 5.0)))
        optimum = gibbs_policy_service(spec).probs
        perturbed = Categorical.from_weights(optimum * np.exp(0.1 * rng.normal(size=size)))
        if reverse_kl_service(perturbed, optimum) <= 0.0:
            return False
    return True


def run_kl_lab_service(
    seeds: Iterable[int] = range(10),
    n_pairs: int = 1000,
    steps: int = 2000,
    lr: float = 0.1,
) -> KlLabReport:
    """
    Ejecuta la batería completa: identidades, minimizador de Gibbs y ajustes bimodales.

    Returns:
        KlLabReport con los residuos máximos y una fila de masas por ajuste
    """
    sft_max, rl_max = identity_residuals(n_pairs)
    target = bimodal_target()
    fits = []
    for seed in seeds:
        for direction in Direction:
            fits.append(fit_divergence_service(target, direction, steps=steps, lr=lr, seed=seed))
    forward = [f for f in fits if f.direction is Direction.FORWARD]
    reverse = [f for f in fits if f.direction is Direction.REVERSE]
    return KlLabReport(
        sft_residual_max=sft_max,
        rl_residual_max=rl_max,
        gibbs_minimizer_holds=gibbs_minimizer_holds(),
        mode_covering_holds=all(f.minor_mode_mass >= 0.2 for f in forward),
        mode_seeking_holds=all(f.minor_mode_mass < 0.05 for f in reverse),
        fits=tuple(fits),
    )


def fit_trace_rows(fits: Iterable[FitResult]) -> list[dict[str, float | int | str]]:
    """Filas planas (direction, seed, step, loss, mu, sigma) para el CSV de trazas."""
    return [
        {
            "direction": fit.direction.value,
            "seed": fit.seed,
            "step": point.step,
            "loss": point.loss,
            "mu": point.mu,
            "sigma": point.sigma,
        }
        for fit in fits
        for point in fit.trace
    ]
