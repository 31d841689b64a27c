"""
Точные асимптотики блуждания: дрейф ν (ЗБЧ) и матрица диффузии Σ (ЦПТ).

Обратная (I - P)^{-1} из формулы для Σ вырождена (1 - собственное значение P),
поэтому везде используется фундаментальная матрица Z = (I - P + Π)^{-1}:
на π-центрированных векторах она совпадает с суммой ряда сумм P^n.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from config import config
from environment import Environment
from errors import InconsistencyError, SingularMatrixError
from induced_chain import InducedChain, build_induced_chain

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
PSD_TOLERANCE = 1e-10
CENTERING_TOLERANCE = 1e-10
FUNDAMENTAL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class AsymptoticSummary:
    nu: np.ndarray  # Дрейф, единиц решётки за шаг
    sigma: np.ndarray  # d x d
    Z: np.ndarray  # |T| x |T|
    aperiodic_warning: bool
    chain: InducedChain

    @property
    def period(self) -> int:
        return self.chain.period

    @property
    def ballistic(self) -> bool:
        return bool(np.any(self.nu != 0))


def _site_means(env: Environment) -> np.ndarray:
    return np.array([env.laws[site].mean() for site in env.site_list])


def drift(env: Environment, chain: InducedChain) -> np.ndarray:
    """
    ν = сумма_x π(x) сумма_y p_x(y) y = сумма_{x,y} π(x) P_xy μ_xy.

    Возвращается первая форма; расхождение со второй - внутренняя ошибка.
    """
    first = chain.pi @ _site_means(env)
    second = np.einsum("x,xy,xyk->k", chain.pi, chain.P, chain.mu)
    gap = float(np.max(np.abs(first - second)))
    if gap > config.IDENTITY_TOLERANCE * env.step_scale:
        raise InconsistencyError(
            f"Две формы дрейфа расходятся на {gap:.3e}",
            {"first": first.tolist(), "second": second.tolist()},
        )
    return first


def fundamental_matrix(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """
    Z = (I - P + Π)^{-1}, где каждая строка Π равна π.

    Returns:
        Матрица Z с Z(I - P + Π) = I
    """
    n = P.shape[0]
    A = np.eye(n) - P + np.outer(np.ones(n), pi)
    try:
        Z = lu_solve(lu_factor(A), np.eye(n))
    except (LinAlgError, ValueError) as e:
        raise SingularMatrixError(f"Матрица I - P + Π вырождена: {e}")
    if not np.all(np.isfinite(Z)):
        raise SingularMatrixError("Матрица I - P + Π вырождена")
    residual = float(np.max(np.abs(Z @ A - np.eye(n))))
    if residual > FUNDAMENTAL_TOLERANCE:
        raise SingularMatrixError(f"Невязка фундаментальной матрицы {residual:.3e}", {"residual": residual})
    return Z


def _jump_covariance(env: Environment, chain: InducedChain, nu: np.ndarray) -> np.ndarray:
    """Первое слагаемое: сумма_x π(x) сумма_y p_x(y) (y - ν)(y - ν)^T."""
    d = env.dims.d
    total = np.zeros((d, d))
    for weight, site in zip(chain.pi, env.site_list):
        law = env.laws[site]
        centered = law.step_array().astype(float) - nu
        total += weight * (centered * law.prob_array()[:, None]).T @ centered
    return total


def _centered_flows(env: Environment, chain: InducedChain, nu: np.ndarray):
    """
    Левый и правый множители поправки:
    a(y) = сумма_x π(x) P_xy (μ_xy - ν), h(z) = сумма_w P_zw (μ_zw - ν).
    """
    possible = (chain.P > 0)[:, :, None]
    centered = np.where(possible, chain.mu - nu, 0.0)
    a = np.einsum("x,xy,xyk->yk", chain.pi, chain.P, centered)
    h = np.einsum("zw,zwk->zk", chain.P, centered)
    return a, h


def _symmetrize(S: np.ndarray) -> np.ndarray:
    return (S + S.T) / 2.0


def diffusion_matrix(
    env: Environment, chain: InducedChain, nu: np.ndarray, Z: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Матрица диффузии по дискретной формуле Грина - Кубо.

    Σ = ковариация скачка относительно ν + 2 a^T Z h; подстановка Z вместо (I - P)^{-1}
    законна, так как π·h = 0. Результат симметризуется.
    """
    if Z is None:
        Z = fundamental_matrix(chain.P, chain.pi)
    a, h = _centered_flows(env, chain, nu)
    centering = float(np.max(np.abs(chain.pi @ h)))
    if centering > CENTERING_TOLERANCE * env.step_scale:
        raise InconsistencyError(f"Правый множитель не центрирован: |π·h| = {centering:.3e}")
    sigma = _jump_covariance(env, chain, nu) + 2.0 * a.T @ Z @ h
    return _symmetrize(sigma)


def green_kubo_truncated(
    env: Environment, chain: InducedChain, nu: np.ndarray, N: int, cesaro: Optional[bool] = None
) -> np.ndarray:
    """
    Частичная сумма ряда автоковариаций стационарной цепи - независимый оракул
    для diffusion_matrix.

    Args:
        N: Число членов ряда (N=0 - только ковариация одного скачка)
        cesaro: Усреднение частичных сумм по Чезаро; по умолчанию включается для
            периодических цепей, где ряд не сходится

    Returns:
        Матрица d x d
    """
    if cesaro is None:
        cesaro = not chain.aperiodic
    a, h = _centered_flows(env, chain, nu)
    d = env.dims.d
    partial = np.zeros((d, d))
    running = np.zeros((d, d))
    vector = h.copy()  # P^{n-1} h
    for n in range(1, N + 1):
        partial = partial + a.T @ vector
        running += partial
        vector = chain.P @ vector
    series = running / N if (cesaro and N > 0) else partial
    return _symmetrize(_jump_covariance(env, chain, nu) + 2.0 * series)


def asymptotic_direction(nu: np.ndarray) -> Optional[np.ndarray]:
    """ν / |ν| или None в небаллистическом случае."""
    norm = float(np.linalg.norm(nu))
    if norm == 0.0:
        return None
    return nu / norm


def analyze(env: Environment) -> AsymptoticSummary:
    """
    Полный анализ среды: цепь, ν, Z, Σ.

    Returns:
        AsymptoticSummary
    """
    chain = build_induced_chain(env)
    nu = drift(env, chain)
    logger.info(f"Дрейф ν = {nu}")
    Z = fundamental_matrix(chain.P, chain.pi)
    sigma = diffusion_matrix(env, chain, nu, Z)
    min_eig = float(np.min(np.linalg.eigvalsh(sigma)))
    if min_eig < -PSD_TOLERANCE * env.step_scale ** 2:
        raise InconsistencyError(
            f"Σ не положительно полуопределена: λ_min = {min_eig:.3e}", {"min_eigenvalue": min_eig}
        )
    logger.info(f"Матрица диффузии Σ = {sigma.tolist()}")
    if not chain.aperiodic:
        logger.warning(
            f"Период цепи {chain.period} > 1: формулы применяются к неприводимой цепи, "
            f"проверьте результат моделированием"
        )
    return AsymptoticSummary(nu=nu, sigma=sigma, Z=Z, aperiodic_warning=not chain.aperiodic, chain=chain)
