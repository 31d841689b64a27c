"""
Обратимость среды ближайших соседей (критерий Колмогорова на элементарных циклах),
потенциал u, средний отрицательный градиент g и рациональная аппроксимация
направления g для эксперимента с уровнями.
"""

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from config import config
from environment import Environment, TorusDims, format_site, iter_unit_vectors
from errors import (
    LineDependenceError,
    NonPositiveProbabilityError,
    NotNearestNeighbourError,
    NotReversibleError,
    ParameterDomainError,
    PathDependenceError,
    ScalingOverflowError,
    ZeroGradientError,
)

logger = logging.getLogger(__name__)

INT64_LIMIT = 2 ** 62


@dataclass
class PotentialField:
    reversible: bool
    max_cycle_defect: float
    u: Dict[Tuple[int, ...], float]  # Точки замкнутой ячейки 0..M_i
    g: np.ndarray

    def to_dict(self) -> Dict:
        return {
            "reversible": self.reversible,
            "max_cycle_defect": self.max_cycle_defect,
            "g": self.g.tolist(),
            "u_table": [{"point": list(x), "u": value} for x, value in sorted(self.u.items())],
        }


@dataclass
class DirectionApproximation:
    g_rational: Tuple[Fraction, ...]
    g1: Tuple[int, ...]
    angle_error: float  # радианы

    def to_dict(self) -> Dict:
        return {
            "g_rational": [f"{q.numerator}/{q.denominator}" for q in self.g_rational],
            "g1": list(self.g1),
            "angle_error": self.angle_error,
        }


def _log_p(env: Environment, x: Sequence[int], step: Sequence[int]) -> float:
    return math.log(env.prob(x, step))


def _shift(x: Sequence[int], e: Sequence[int], sign: int = 1) -> Tuple[int, ...]:
    return tuple(c + sign * ei for c, ei in zip(x, e))


def _require_nearest_neighbour(env: Environment):
    if not env.nearest_neighbour:
        raise NotNearestNeighbourError("Среда не является средой ближайших соседей")
    if not env.strictly_positive:
        raise NonPositiveProbabilityError("Вероятности единичных шагов должны быть строго положительны")


def check_reversible(env: Environment) -> Dict:
    """
    Критерий Колмогорова на единичных плакетах x -> x+e_i -> x+e_i+e_j -> x+e_j -> x.

    Возвратные 2-циклы сбалансированы тривиально и пропускаются. По периодичности
    достаточно плакетов с основанием в каждой точке тора.

    Returns:
        {"reversible": bool, "max_cycle_defect": float}
    """
    _require_nearest_neighbour(env)
    units = list(iter_unit_vectors(env.dims.d))
    worst = 0.0
    for x in env.site_list:
        for (i, ei), (j, ej) in itertools.combinations(units, 2):
            xi = _shift(x, ei)
            xj = _shift(x, ej)
            xij = _shift(xi, ej)
            neg_i = _shift((0,) * len(x), ei, -1)
            neg_j = _shift((0,) * len(x), ej, -1)
            forward = _log_p(env, x, ei) + _log_p(env, xi, ej) + _log_p(env, xij, neg_i) + _log_p(env, xj, neg_j)
            backward = _log_p(env, x, ej) + _log_p(env, xj, ei) + _log_p(env, xij, neg_j) + _log_p(env, xi, neg_i)
            defect = abs(forward - backward)
            if defect > worst:
                worst = defect
                logger.debug(f"Плакет в {format_site(x)} по осям ({i}, {j}): дефект {defect:.3e}")
    reversible = worst <= config.CYCLE_TOLERANCE
    logger.info(f"Проверка обратимости: {'обратима' if reversible else 'необратима'}, макс. дефект {worst:.3e}")
    return {"reversible": reversible, "max_cycle_defect": worst}


def _require_reversible(env: Environment) -> float:
    verdict = check_reversible(env)
    if not verdict["reversible"]:
        raise NotReversibleError(
            f"Среда необратима: дефект цикла {verdict['max_cycle_defect']:.3e}",
            {"max_cycle_defect": verdict["max_cycle_defect"]},
        )
    return verdict["max_cycle_defect"]


def _increment(env: Environment, x: Sequence[int], e: Sequence[int]) -> float:
    """u(x) - u(x+e) = log(p_x(e) / p_{x+e}(-e))."""
    return _log_p(env, x, e) - _log_p(env, _shift(x, e), tuple(-c for c in e))


def average_negative_gradient(env: Environment) -> np.ndarray:
    """
    g_i = (1/M_i) log прод_{k<M_i} p_{k e_i}(e_i) / p_{(k+1) e_i}(-e_i) вдоль оси через начало.

    Та же величина вдоль каждой параллельной прямой x + R e_i, x из T, обязана совпадать;
    расхождение означает, что проверка обратимости что-то пропустила.
    """
    _require_reversible(env)
    dims = env.dims.dims
    g = np.zeros(env.dims.d)
    for i, e in iter_unit_vectors(env.dims.d):

        def line_value(base):
            total = math.fsum(_increment(env, _shift(base, e, k), e) for k in range(dims[i]))
            return total / dims[i]

        g[i] = line_value((0,) * env.dims.d)
        for x in env.site_list:
            if x[i] != 0:
                continue
            value = line_value(x)
            if abs(value - g[i]) > config.PATH_TOLERANCE:
                raise LineDependenceError(
                    f"Ось {i}: прямая через {format_site(x)} даёт {value!r} вместо {g[i]!r}",
                    {"axis": i, "base": list(x)},
                )
    return g


def potential(env: Environment) -> PotentialField:
    """
    Потенциал на замкнутой ячейке {0..M_1} x ... x {0..M_d}: u(0) = 0, приращения
    суммируются по остовному дереву BFS, на остальных рёбрах независимость от пути
    проверяется повторно.

    Returns:
        PotentialField
    """
    defect = _require_reversible(env)
    d = env.dims.d
    dims = env.dims.dims
    origin = (0,) * d
    units = [e for _, e in iter_unit_vectors(d)]

    def inside(x):
        return all(0 <= c <= m for c, m in zip(x, dims))

    u: Dict[Tuple[int, ...], float] = {origin: 0.0}
    queue = deque([origin])
    while queue:
        x = queue.popleft()
        for e in units:
            for sign in (1, -1):
                y = _shift(x, e, sign)
                if not inside(y) or y in u:
                    continue
                if sign == 1:
                    u[y] = u[x] - _increment(env, x, e)
                else:
                    u[y] = u[x] + _increment(env, y, e)
                queue.append(y)

    worst = 0.0
    for x in u:
        for e in units:
            y = _shift(x, e)
            if y in u:
                worst = max(worst, abs(u[x] - u[y] - _increment(env, x, e)))
    if worst > config.PATH_TOLERANCE:
        raise PathDependenceError(f"Потенциал зависит от пути: {worst:.3e}", {"defect": worst})

    g = average_negative_gradient(env)
    logger.info(f"Потенциал построен в {len(u)} точках, g = {g}")
    return PotentialField(reversible=True, max_cycle_defect=defect, u=u, g=g)


def potential_table(field: PotentialField) -> pd.DataFrame:
    """Таблица значений u по точкам замкнутой ячейки."""
    rows = [{**{f"x{i + 1}": c for i, c in enumerate(x)}, "u": value} for x, value in sorted(field.u.items())]
    return pd.DataFrame(rows)


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Угол между векторами в радианах; устойчив около 0 и π."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ua = a / np.linalg.norm(a)
    ub = b / np.linalg.norm(b)
    return float(2.0 * math.atan2(np.linalg.norm(ua - ub), np.linalg.norm(ua + ub)))


def approximate_appropriate_direction(g: Sequence[float], max_denominator: int, dims: TorusDims) -> DirectionApproximation:
    """
    Рациональное направление, близкое к g, с кратным в подрешётке M.

    g нормируется на единичную sup-норму; каждая координата приближается дробью
    со знаменателем <= max_denominator (подходящие дроби цепной дроби).
    g1 - наименьшее целое кратное, лежащее в M.

    Returns:
        DirectionApproximation
    """
    g = np.asarray(g, dtype=float)
    if max_denominator < 1:
        raise ParameterDomainError("max_denominator должен быть >= 1")
    if len(g) != dims.d:
        raise ParameterDomainError(f"Длина g {len(g)} не совпадает с d = {dims.d}")
    scale = float(np.max(np.abs(g)))
    if scale == 0.0:
        raise ZeroGradientError("Нулевой градиент не задаёт направления")

    direction = g / scale
    g_rational = tuple(Fraction(float(c)).limit_denominator(max_denominator) for c in direction)

    common = math.lcm(*(q.denominator for q in g_rational))
    integer = [int(q * common) for q in g_rational]
    multiplier = math.lcm(*(m // math.gcd(n, m) for n, m in zip(integer, dims.dims)))
    g1 = tuple(n * multiplier for n in integer)
    if any(abs(c) > INT64_LIMIT for c in g1):
        raise ScalingOverflowError(
            f"Переполнение при масштабировании g1 = {g1}; уменьшите max_denominator",
            {"max_denominator": max_denominator},
        )

    angle = angle_between(g, np.array([float(q) for q in g_rational]))
    logger.info(f"Направление g ~ {[str(q) for q in g_rational]}, g1 = {g1}, ошибка угла {angle:.3e} рад")
    return DirectionApproximation(g_rational=g_rational, g1=g1, angle_error=angle)


def cell_corners(dims: TorusDims) -> List[Tuple[int, ...]]:
    """Вершины замкнутой ячейки (координаты 0 или M_i)."""
    return list(itertools.product(*((0, m) for m in dims.dims)))
