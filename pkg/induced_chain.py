"""
Индуцированная цепь Маркова ξ_n на торе T.
Матрица переходов P, стационарное распределение π, условные средние скачков μ,
неприводимость и период.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from config import config
from environment import Environment, TorusDims, canonical_site
from errors import InconsistencyError, NotIrreducibleError, SingularMatrixError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InducedChain:
    """Неизменяемый набор объектов индуцированной цепи."""

    dims: TorusDims
    P: np.ndarray  # |T| x |T|, стохастическая по строкам
    pi: np.ndarray  # |T|
    mu: np.ndarray  # |T| x |T| x d, ноль там, где P_xy = 0
    irreducible: bool
    period: int

    @property
    def size(self) -> int:
        return self.P.shape[0]

    @property
    def aperiodic(self) -> bool:
        return self.period == 1


def _landing_indices(env: Environment, site) -> np.ndarray:
    """Индексы точек тора, куда ведёт каждый шаг закона в точке site."""
    law = env.laws[site]
    return np.array(
        [env.dims.index(canonical_site([c + w for c, w in zip(site, step)], env.dims)) for step in law.steps],
        dtype=np.int64,
    )


def build_transition_matrix(env: Environment) -> np.ndarray:
    """
    P_xy = сумма p_x(w) по шагам w, для которых x + w ~ y.

    Returns:
        Матрица |T| x |T|, стохастическая по строкам
    """
    n = env.dims.size
    P = np.zeros((n, n))
    for i, site in enumerate(env.site_list):
        # np.add.at суммирует шаги, попадающие в один класс
        np.add.at(P[i], _landing_indices(env, site), env.laws[site].prob_array())
    return P


def jump_means(env: Environment) -> np.ndarray:
    """
    Условные средние скачков μ_xy = (сумма z p_x(z) по z ~ y) / (сумма p_x(z) по z ~ y).

    Returns:
        Массив |T| x |T| x d; μ_xy = 0, если переход x -> y невозможен
    """
    n, d = env.dims.size, env.dims.d
    weight = np.zeros((n, n))
    moment = np.zeros((n, n, d))
    for i, site in enumerate(env.site_list):
        law = env.laws[site]
        landing = _landing_indices(env, site)
        probs = law.prob_array()
        np.add.at(weight[i], landing, probs)
        np.add.at(moment[i], landing, probs[:, None] * law.step_array())
    mu = np.zeros_like(moment)
    possible = weight > 0
    mu[possible] = moment[possible] / weight[possible][:, None]
    return mu


def irreducibility_and_period(P: np.ndarray) -> Dict:
    """
    Неприводимость (одна сильно связная компонента графа положительных элементов)
    и период (НОД разностей уровней BFS по всем рёбрам).

    Returns:
        {"irreducible": bool, "period": int}
    """
    adjacency = P > 0
    n_components, _ = connected_components(csr_matrix(adjacency), directed=True, connection="strong")
    irreducible = n_components == 1

    # BFS от состояния 0; period = НОД(level[u] + 1 - level[v]) по рёбрам u -> v
    n = P.shape[0]
    level = np.full(n, -1, dtype=np.int64)
    level[0] = 0
    queue = deque([0])
    period = 0
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
            else:
                period = math.gcd(period, int(abs(level[u] + 1 - level[v])))
    # Дерево BFS без обратных рёбер возможно только у приводимой цепи
    period = period if period > 0 else 1
    return {"irreducible": irreducible, "period": period}


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """
    Стационарное распределение: (P^T - I)π = 0 с условием нормировки,
    плотное LU-разложение с частичным выбором ведущего элемента.

    Args:
        P: Неприводимая стохастическая матрица

    Returns:
        Вектор π > 0 с суммой 1
    """
    structure = irreducibility_and_period(P)
    if not structure["irreducible"]:
        raise NotIrreducibleError("Индуцированная цепь приводима, стационарное распределение не единственно")

    n = P.shape[0]
    A = P.T - np.eye(n)
    # Ранг P^T - I равен n-1: последнюю строку заменяем условием нормировки
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = lu_solve(lu_factor(A, check_finite=True), b)
    except (LinAlgError, ValueError) as e:
        raise SingularMatrixError(f"Не удалось решить систему для π: {e}")
    if not np.all(np.isfinite(pi)):
        raise SingularMatrixError("Система для π вырождена")

    residual = np.max(np.abs(pi @ P - pi))
    logger.debug(f"Стационарное распределение: невязка {residual:.3e}")
    if residual > config.IDENTITY_TOLERANCE or np.min(pi) < -config.IDENTITY_TOLERANCE:
        raise InconsistencyError(
            f"Невязка ||πP - π|| = {residual:.3e} превышает допуск", {"residual": float(residual)}
        )
    return pi


def total_expectation_defect(env: Environment, chain: InducedChain) -> float:
    """max_x |сумма_y P_xy μ_xy - сумма_w w p_x(w)|."""
    conditional = np.einsum("xy,xyk->xk", chain.P, chain.mu)
    direct = np.array([env.laws[site].mean() for site in env.site_list])
    return float(np.max(np.abs(conditional - direct)))


def build_induced_chain(env: Environment) -> InducedChain:
    """
    Строит P, π, μ и структуру цепи.

    Returns:
        InducedChain
    """
    logger.info(f"Построение индуцированной цепи на торе {env.dims.dims} ({env.dims.size} состояний)")
    P = build_transition_matrix(env)
    structure = irreducibility_and_period(P)
    if not structure["irreducible"]:
        raise NotIrreducibleError(
            "Индуцированная цепь приводима", {"dims": env.dims.to_list()}
        )
    chain = InducedChain(
        dims=env.dims,
        P=P,
        pi=stationary_distribution(P),
        mu=jump_means(env),
        irreducible=True,
        period=structure["period"],
    )
    defect = total_expectation_defect(env, chain)
    if defect > config.IDENTITY_TOLERANCE * env.step_scale:
        raise InconsistencyError(
            f"Нарушено разложение полного среднего: {defect:.3e}", {"defect": defect}
        )
    if not chain.aperiodic:
        logger.warning(f"Индуцированная цепь периодична (период {chain.period})")
    return chain
