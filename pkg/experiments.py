"""
Эксперименты над теоремой о градиенте потенциала: проверка знака <g, ν>,
семейство с углом, близким к прямому, и набор случайных обратимых сред.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from asymptotics import analyze
from config import config
from environment import Environment, TorusDims, make_counterexample, make_tilted_conductance
from reversibility import angle_between, average_negative_gradient, check_reversible
from simulator import RngStream

logger = logging.getLogger(__name__)


@dataclass
class TheoremCheck:
    g: np.ndarray
    nu: np.ndarray
    inner: float
    angle_deg: Optional[float]
    vacuous: bool  # g = 0: утверждение теоремы пусто

    @property
    def holds(self) -> bool:
        """Решение принимается только по знаку скалярного произведения."""
        return self.vacuous or self.inner > 0

    def to_dict(self) -> Dict:
        return {
            "g": self.g.tolist(),
            "nu": self.nu.tolist(),
            "inner": self.inner,
            "angle_deg": self.angle_deg,
            "vacuous": self.vacuous,
            "holds": self.holds,
        }


def theorem_check(env: Environment) -> TheoremCheck:
    """
    Вычисляет g и ν, скалярное произведение и угол в градусах.
    g считается нулевым, если все его координаты не превосходят допуска пути.
    """
    g = average_negative_gradient(env)
    nu = analyze(env).nu
    inner = float(np.dot(g, nu))
    vacuous = bool(np.max(np.abs(g)) <= config.PATH_TOLERANCE)
    angle = None
    if not vacuous and np.any(nu != 0):
        angle = math.degrees(angle_between(g, nu))
    if vacuous:
        logger.info("Градиент нулевой: утверждение теоремы пусто")
    else:
        logger.info(f"<g, ν> = {inner:.6g}, угол {angle} градусов")
    return TheoremCheck(g=g, nu=nu, inner=inner, angle_deg=angle, vacuous=vacuous)


def counterexample_sweep(K: float, eps_values: Sequence[float]) -> pd.DataFrame:
    """
    Семейство make_counterexample(K, ε) по ε: угол между g и ν стремится
    к arctan-пределу, близкому к 90 градусам при больших K.
    """
    rows = []
    for eps in eps_values:
        check = theorem_check(make_counterexample(K, eps))
        rows.append(
            {
                "eps": eps,
                "g1": check.g[0],
                "g2": check.g[1],
                "nu1": check.nu[0],
                "nu2": check.nu[1],
                "inner": check.inner,
                "angle_deg": check.angle_deg,
            }
        )
    return pd.DataFrame(rows)


def random_tilted_environment(
    rng: np.random.Generator,
    d: int = 2,
    max_M: int = 4,
    weight_range: Tuple[float, float] = (0.2, 5.0),
    h_norm_range: Tuple[float, float] = (0.05, 1.0),
) -> Tuple[Environment, np.ndarray]:
    """Случайная обратимая среда из проводимостей и её вектор наклона h."""
    dims = TorusDims(tuple(int(m) for m in rng.integers(1, max_M + 1, size=d)))
    s = rng.uniform(*weight_range, size=(d,) + dims.dims)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    h = direction * rng.uniform(*h_norm_range)
    return make_tilted_conductance(dims, s, h), h


def tilted_property_suite(draws: int, seed: int, d: int = 2, max_M: int = 4) -> pd.DataFrame:
    """
    Для каждой случайной среды: дефект циклов, |g - 2h|, <g, ν>.

    Returns:
        DataFrame по одной строке на среду
    """
    rng = RngStream(seed, 0).generator()
    rows = []
    for draw in range(draws):
        env, h = random_tilted_environment(rng, d=d, max_M=max_M)
        verdict = check_reversible(env)
        check = theorem_check(env)
        rows.append(
            {
                "draw": draw,
                "dims": "x".join(str(m) for m in env.dims.dims),
                "max_cycle_defect": verdict["max_cycle_defect"],
                "g_error": float(np.max(np.abs(check.g - 2.0 * h))),
                "inner": check.inner,
                "angle_deg": check.angle_deg,
                "holds": check.holds,
            }
        )
    table = pd.DataFrame(rows)
    logger.info(f"Набор наклонённых сред: {int(table['holds'].sum())}/{draws} с <g, ν> > 0")
    return table
