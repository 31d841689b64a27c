"""
Модуль периодических сред на Z^d.
Описание тора, законов скачков, разбор и сериализация файла среды, генераторы сред.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import config
from errors import (
    DimensionMismatchError,
    DuplicateSiteError,
    EnvironmentSchemaError,
    EnvironmentSyntaxError,
    FileAccessError,
    MissingSiteError,
    NonPositiveProbabilityError,
    ParameterDomainError,
    ProbabilitySumError,
)

logger = logging.getLogger(__name__)

Site = Tuple[int, ...]
Step = Tuple[int, ...]


def format_site(site: Sequence[int]) -> str:
    """(1) для d=1, (0, 2) для d=2 - без висячей запятой кортежа."""
    return "(" + ", ".join(str(int(c)) for c in site) + ")"


@dataclass(frozen=True)
class TorusDims:
    """Размеры тора T = Z^d / M."""

    dims: Tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(m) for m in self.dims)
        if len(dims) < 1:
            raise ParameterDomainError("Размерность d должна быть не меньше 1")
        if any(m < 1 for m in dims):
            raise ParameterDomainError(f"Все M_i должны быть >= 1, получено {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def sites(self) -> List[Site]:
        """Все точки тора в лексикографическом порядке."""
        return list(itertools.product(*(range(m) for m in self.dims)))

    def index(self, site: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(c) for c in site), self.dims))

    def to_list(self) -> List[int]:
        return list(self.dims)


def canonical_site(x: Sequence[int], dims: TorusDims) -> Site:
    """
    Представитель класса эквивалентности x по подрешётке M.

    Args:
        x: Целочисленный вектор длины d
        dims: Размеры тора

    Returns:
        (x_1 mod M_1, ..., x_d mod M_d) с координатами в [0, M_i)
    """
    if len(x) != dims.d:
        raise DimensionMismatchError(
            f"Длина вектора {len(x)} не совпадает с размерностью тора {dims.d}",
            {"expected": dims.d, "actual": len(x)},
        )
    # % в Python даёт неотрицательный остаток для положительного модуля
    return tuple(int(c) % m for c, m in zip(x, dims.dims))


@dataclass(frozen=True)
class JumpLaw:
    """Конечный закон скачка: шаги в лексикографическом порядке и их вероятности."""

    steps: Tuple[Step, ...]
    probs: Tuple[float, ...]
    # Исходная рациональная запись "p/q" для точной сериализации
    labels: Tuple[Optional[str], ...] = ()

    @classmethod
    def from_mapping(cls, entries: Mapping[Step, float], labels: Optional[Mapping[Step, str]] = None) -> "JumpLaw":
        labels = labels or {}
        ordered = sorted((tuple(int(c) for c in step), p) for step, p in entries.items())
        return cls(
            steps=tuple(step for step, _ in ordered),
            probs=tuple(float(p) for _, p in ordered),
            labels=tuple(labels.get(step) for step, _ in ordered),
        )

    def __post_init__(self):
        if not self.labels:
            object.__setattr__(self, "labels", (None,) * len(self.steps))
        if not self.steps:
            raise EnvironmentSchemaError("Закон скачка должен иметь непустой носитель")
        if len(set(self.steps)) != len(self.steps):
            raise EnvironmentSchemaError(f"Повторяющиеся шаги в законе: {self.steps}")

    @property
    def total(self) -> float:
        return math.fsum(self.probs)

    def as_dict(self) -> Dict[Step, float]:
        return dict(zip(self.steps, self.probs))

    def step_array(self) -> np.ndarray:
        return np.array(self.steps, dtype=np.int64)

    def prob_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=float)

    def mean(self) -> np.ndarray:
        """Средний скачок: сумма y p(y)."""
        return self.prob_array() @ self.step_array().astype(float)

    def covariance(self) -> np.ndarray:
        """Ковариационная матрица одного скачка."""
        steps = self.step_array().astype(float)
        centered = steps - self.mean()
        return (centered * self.prob_array()[:, None]).T @ centered


@dataclass(frozen=True)
class Environment:
    """Периодическая среда: по одному закону скачка на каждую точку тора."""

    dims: TorusDims
    laws: Dict[Site, JumpLaw] = field(compare=True)
    tolerance: float = config.PROB_TOLERANCE

    def __post_init__(self):
        d = self.dims.d
        expected = set(self.dims.sites())
        for site, law in self.laws.items():
            if site not in expected:
                raise EnvironmentSchemaError(
                    f"Точка {format_site(site)} вне тора {self.dims.dims}",
                    {"site": list(site)},
                )
            for step, p in zip(law.steps, law.probs):
                if len(step) != d:
                    raise DimensionMismatchError(
                        f"Шаг {step} в точке {format_site(site)} имеет неверную размерность",
                        {"site": list(site), "step": list(step)},
                    )
                if not p > 0:
                    raise NonPositiveProbabilityError(
                        f"Неположительная вероятность {p} шага {step} в точке {format_site(site)}",
                        {"site": list(site), "step": list(step)},
                    )
            if abs(law.total - 1.0) > self.tolerance:
                raise ProbabilitySumError(
                    f"Сумма вероятностей в точке {format_site(site)} равна {law.total!r}",
                    {"site": list(site), "sum": law.total},
                )
        for site in self.dims.sites():
            if site not in self.laws:
                raise MissingSiteError(f"missing site {format_site(site)}", {"site": list(site)})

    def law_at(self, x: Sequence[int]) -> JumpLaw:
        """Закон в произвольной точке Z^d через периодическое продолжение."""
        return self.laws[canonical_site(x, self.dims)]

    def prob(self, x: Sequence[int], step: Sequence[int]) -> float:
        return self.law_at(x).as_dict().get(tuple(step), 0.0)

    @cached_property
    def site_list(self) -> List[Site]:
        return self.dims.sites()

    @cached_property
    def unit_steps(self) -> List[Step]:
        return [e for _, _, e in iter_signed_unit_vectors(self.dims.d)]

    @property
    def nearest_neighbour(self) -> bool:
        """Носитель каждого закона - ровно 2d единичных векторов."""
        units = set(self.unit_steps)
        return all(set(law.steps) == units for law in self.laws.values())

    @cached_property
    def step_scale(self) -> float:
        """max(1, max |y_i|) по носителям; масштаб допусков для тождеств со скачками."""
        return float(max(1, max(int(np.max(np.abs(law.step_array()))) for law in self.laws.values())))

    @property
    def strictly_positive(self) -> bool:
        """Все вероятности единичных шагов положительны (условие теоремы)."""
        return all(
            law.as_dict().get(e, 0.0) > 0 for law in self.laws.values() for e in self.unit_steps
        )


@dataclass
class ValidationReport:
    """Результат проверки среды. Не бросает исключений."""

    dims: List[int]
    sum_defects: Dict[str, float]
    finite_support: bool
    nearest_neighbour: bool
    strictly_positive: bool
    irreducible: bool
    period: int
    max_support: int

    @property
    def valid(self) -> bool:
        return (
            self.finite_support
            and self.irreducible
            and all(v <= config.PROB_TOLERANCE for v in self.sum_defects.values())
        )

    def to_dict(self) -> Dict:
        return {
            "dims": self.dims,
            "valid": self.valid,
            "sum_defects": self.sum_defects,
            "finite_support": self.finite_support,
            "nearest_neighbour": self.nearest_neighbour,
            "strictly_positive": self.strictly_positive,
            "irreducible": self.irreducible,
            "period": self.period,
            "max_support": self.max_support,
        }


# ----------------------------------------------------------------------------
# Разбор и сериализация
# ----------------------------------------------------------------------------

def _parse_int_vector(value, d: Optional[int], where: str) -> Tuple[int, ...]:
    if not isinstance(value, list) or any(isinstance(c, bool) or not isinstance(c, int) for c in value):
        raise EnvironmentSchemaError(f"{where}: ожидается список целых чисел, получено {value!r}", {"path": where})
    if d is not None and len(value) != d:
        raise DimensionMismatchError(
            f"{where}: длина {len(value)} вместо {d}", {"path": where, "expected": d, "actual": len(value)}
        )
    return tuple(value)


def _parse_probability(value, where: str) -> Tuple[float, Optional[str]]:
    """Число или строка "p/q". Рациональная строка переводится точно, затем в float."""
    if isinstance(value, bool):
        raise EnvironmentSchemaError(f"{where}: логическое значение вместо вероятности", {"path": where})
    if isinstance(value, (int, float)):
        try:
            return float(value), None
        except OverflowError:
            raise EnvironmentSchemaError(f"{where}: число вне диапазона float", {"path": where})
    if isinstance(value, str):
        try:
            exact = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise EnvironmentSchemaError(f"{where}: некорректная рациональная запись {value!r}", {"path": where})
        return float(exact), value.strip()
    raise EnvironmentSchemaError(f"{where}: вероятность должна быть числом или строкой 'p/q'", {"path": where})


def parse_environment(text: str, renormalize: bool = False, tolerance: Optional[float] = None) -> Environment:
    """
    Разбирает текст файла среды (JSON).

    Args:
        text: Содержимое файла
        renormalize: Делить каждый закон на его сумму вместо ошибки суммы
        tolerance: Допуск суммы вероятностей (по умолчанию из config)

    Returns:
        Проверенная среда Environment
    """
    tolerance = config.PROB_TOLERANCE if tolerance is None else tolerance
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise EnvironmentSyntaxError(f"Синтаксическая ошибка: {e.msg}", e.lineno, e.colno)

    if not isinstance(doc, dict):
        raise EnvironmentSchemaError("Документ среды должен быть объектом")
    extra = set(doc) - {"dims", "sites"}
    if extra or "dims" not in doc or "sites" not in doc:
        raise EnvironmentSchemaError(
            f"Ожидаются ровно поля dims и sites, получено {sorted(doc)}", {"fields": sorted(doc)}
        )

    dims = TorusDims(_parse_int_vector(doc["dims"], None, "dims"))
    d = dims.d
    if not isinstance(doc["sites"], list):
        raise EnvironmentSchemaError("sites должен быть списком", {"path": "sites"})

    laws: Dict[Site, JumpLaw] = {}
    for n, entry in enumerate(doc["sites"]):
        where = f"sites[{n}]"
        if not isinstance(entry, dict) or set(entry) != {"coord", "jumps"}:
            raise EnvironmentSchemaError(f"{where}: ожидаются ровно поля coord и jumps", {"path": where})
        coord = _parse_int_vector(entry["coord"], d, f"{where}.coord")
        if any(not 0 <= c < m for c, m in zip(coord, dims.dims)):
            raise EnvironmentSchemaError(
                f"{where}.coord: точка {format_site(coord)} вне 0 <= c_i < M_i", {"path": where}
            )
        if coord in laws:
            raise DuplicateSiteError(f"duplicate site {format_site(coord)}", {"site": list(coord)})
        if not isinstance(entry["jumps"], list) or not entry["jumps"]:
            raise EnvironmentSchemaError(f"{where}.jumps: нужен непустой список", {"path": where})

        probs: Dict[Step, float] = {}
        labels: Dict[Step, str] = {}
        for m, jump in enumerate(entry["jumps"]):
            jwhere = f"{where}.jumps[{m}]"
            if not isinstance(jump, dict) or set(jump) != {"step", "prob"}:
                raise EnvironmentSchemaError(f"{jwhere}: ожидаются ровно поля step и prob", {"path": jwhere})
            step = _parse_int_vector(jump["step"], d, f"{jwhere}.step")
            if step in probs:
                raise EnvironmentSchemaError(f"{jwhere}: шаг {step} повторяется", {"path": jwhere})
            p, label = _parse_probability(jump["prob"], f"{jwhere}.prob")
            if not p > 0:
                raise NonPositiveProbabilityError(
                    f"Неположительная вероятность {p} шага {step} в точке {format_site(coord)}",
                    {"site": list(coord), "step": list(step)},
                )
            probs[step] = p
            if label is not None:
                labels[step] = label

        total = math.fsum(probs.values())
        if abs(total - 1.0) > tolerance:
            if not renormalize:
                raise ProbabilitySumError(
                    f"Сумма вероятностей в точке {format_site(coord)} равна {total!r}",
                    {"site": list(coord), "sum": total},
                )
            logger.warning(f"Точка {format_site(coord)}: сумма {total!r}, закон перенормирован")
            probs = {step: p / total for step, p in probs.items()}
            labels = {}
        laws[coord] = JumpLaw.from_mapping(probs, labels)

    for site in dims.sites():
        if site not in laws:
            raise MissingSiteError(f"missing site {format_site(site)}", {"site": list(site)})

    env = Environment(dims, laws, tolerance=tolerance)
    logger.debug(f"Среда разобрана: dims={dims.dims}, точек {dims.size}")
    return env


PROB_DIGITS = 17


def _format_prob(p: float, label: Optional[str]) -> str:
    if label is not None:
        return json.dumps(label)
    return format(p, f".{PROB_DIGITS}g")


def serialize_environment(env: Environment) -> str:
    """
    Текст файла среды: точки и шаги в лексикографическом порядке, по строке на точку.
    Вероятности - 17 значащих цифр (float восстанавливается точно),
    рациональные входы - исходной строкой "p/q".
    """
    rows = []
    for site in env.site_list:
        law = env.laws[site]
        jumps = ", ".join(
            f'{{"step": {json.dumps(list(step))}, "prob": {_format_prob(p, label)}}}'
            for step, p, label in zip(law.steps, law.probs, law.labels)
        )
        rows.append(f'    {{"coord": {json.dumps(list(site))}, "jumps": [{jumps}]}}')
    return (
        "{\n"
        f'  "dims": {json.dumps(env.dims.to_list())},\n'
        '  "sites": [\n' + ",\n".join(rows) + "\n  ]\n}\n"
    )


def load_environment(path: str, renormalize: bool = False, tolerance: Optional[float] = None) -> Environment:
    logger.info(f"Загружаем среду из {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise FileAccessError(f"Не удалось прочитать {path}: {e.strerror or e}", {"path": path})
    return parse_environment(text, renormalize=renormalize, tolerance=tolerance)


def save_environment(env: Environment, path: str):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(serialize_environment(env))
            f.write("\n")
    except OSError as e:
        raise FileAccessError(f"Не удалось записать {path}: {e.strerror or e}", {"path": path})
    logger.info(f"Среда записана в {path}")


def validate(env: Environment) -> ValidationReport:
    """
    Проверяет гипотезы предложений о ЗБЧ/ЦПТ и теоремы о градиенте.

    Returns:
        ValidationReport (ничего не бросает)
    """
    # Локальный импорт: induced_chain сам зависит от этого модуля
    from induced_chain import build_transition_matrix, irreducibility_and_period

    defects = {format_site(site): abs(env.laws[site].total - 1.0) for site in env.site_list}
    structure = irreducibility_and_period(build_transition_matrix(env))
    return ValidationReport(
        dims=env.dims.to_list(),
        sum_defects=defects,
        finite_support=True,
        nearest_neighbour=env.nearest_neighbour,
        strictly_positive=env.strictly_positive,
        irreducible=structure["irreducible"],
        period=structure["period"],
        max_support=max(len(law.steps) for law in env.laws.values()),
    )


# ----------------------------------------------------------------------------
# Генераторы сред
# ----------------------------------------------------------------------------

def make_homogeneous(law: Mapping[Step, float], d: Optional[int] = None) -> Environment:
    """Среда с одним законом во всех точках, dims = (1, ..., 1)."""
    d = d if d is not None else len(next(iter(law)))
    dims = TorusDims((1,) * d)
    return Environment(dims, {dims.sites()[0]: JumpLaw.from_mapping(law)})


def make_simple_random_walk(d: int = 2) -> Environment:
    """Простое симметричное блуждание: p(±e_i) = 1/(2d)."""
    law = {e: 1.0 / (2 * d) for _, _, e in iter_signed_unit_vectors(d)}
    return make_homogeneous(law, d)


def make_one_dimensional(probs_plus: Sequence[float]) -> Environment:
    """Одномерная среда ближайших соседей: p_x(+1) = a_x, p_x(-1) = 1 - a_x."""
    dims = TorusDims((len(probs_plus),))
    laws = {}
    for x, a in enumerate(probs_plus):
        entries = {}
        if a > 0:
            entries[(1,)] = float(a)
        if a < 1:
            entries[(-1,)] = 1.0 - float(a)
        laws[(x,)] = JumpLaw.from_mapping(entries)
    return Environment(dims, laws)


def make_counterexample(K: float, eps: float) -> Environment:
    """
    Семейство, где угол между g и ν сколь угодно близок к прямому.

    p(e_1) = Kε, p(-e_1) = ε, p(e_2) = 2/3 (1-(K+1)ε), p(-e_2) = 1/3 (1-(K+1)ε).
    """
    if not K > 1 or not eps > 0 or not (K + 1) * eps < 1:
        raise ParameterDomainError(
            f"Нужно K > 1, ε > 0, (K+1)ε < 1; получено K={K}, ε={eps}", {"K": K, "eps": eps}
        )
    rest = 1.0 - (K + 1) * eps
    return make_homogeneous(
        {
            (1, 0): K * eps,
            (-1, 0): eps,
            (0, 1): 2.0 * rest / 3.0,
            (0, -1): rest / 3.0,
        }
    )


def make_tilted_conductance(dims: TorusDims, s: np.ndarray, h: Sequence[float]) -> Environment:
    """
    Обратимая среда ближайших соседей из проводимостей.

    c(x, x+e) = s(x, x+e) exp(<h,x> + <h,x+e>), p_x(e) = c(x, x+e) / сумма по e'.
    Множитель exp(2<h,x>) сокращается, поэтому законы считаются в периодической
    форме s(x, x+e) exp(<h,e>) без переполнения.

    Args:
        dims: Размеры тора
        s: Массив формы (d, M_1, ..., M_d); s[i][x] - вес ребра {x, x+e_i}
        h: Вектор наклона длины d

    Returns:
        Среда со средним отрицательным градиентом 2h
    """
    d = dims.d
    s = np.asarray(s, dtype=float)
    h = np.asarray(h, dtype=float)
    if s.shape != (d,) + dims.dims:
        raise DimensionMismatchError(
            f"Форма весов {s.shape} вместо {(d,) + dims.dims}", {"shape": list(s.shape)}
        )
    if h.shape != (d,) or not np.all(np.isfinite(h)):
        raise ParameterDomainError(f"h должен быть конечным вектором длины {d}")
    if not np.all(s > 0):
        raise NonPositiveProbabilityError("Веса рёбер должны быть положительными")

    laws = {}
    for x in dims.sites():
        weights = {}
        for i, sign, e in iter_signed_unit_vectors(d):
            # Ребро {x, x-e_i} принадлежит классу точки x - e_i
            base = x if sign == 1 else canonical_site([c - ei for c, ei in zip(x, e)], dims)
            weights[e] = s[(i,) + tuple(base)] * math.exp(sign * h[i])
        total = math.fsum(weights.values())
        laws[x] = JumpLaw.from_mapping({e: w / total for e, w in weights.items()})
    return Environment(dims, laws)


def make_random_environment(
    dims: TorusDims,
    rng: np.random.Generator,
    radius: int = 1,
    lazy: bool = False,
    extra_prob: float = 0.5,
) -> Environment:
    """
    Случайная допустимая среда с носителями в кубе [-radius, radius]^d.

    Все ±e_i всегда в носителе, поэтому индуцированная цепь неприводима;
    lazy=True добавляет нулевой шаг (цепь апериодична).
    """
    d = dims.d
    cube = list(itertools.product(range(-radius, radius + 1), repeat=d))
    units = {e for _, _, e in iter_signed_unit_vectors(d)}
    laws = {}
    for x in dims.sites():
        support = set(units)
        if lazy:
            support.add((0,) * d)
        for step in cube:
            if step not in support and rng.random() < extra_prob:
                support.add(step)
        support = sorted(support)
        weights = rng.dirichlet(np.ones(len(support)))
        # Отсекаем исчезающе малые веса, чтобы все вероятности были строго положительны
        weights = np.maximum(weights, 1e-6)
        weights = weights / weights.sum()
        laws[x] = JumpLaw.from_mapping(dict(zip(support, weights)))
    return Environment(dims, laws)


def translate_environment(env: Environment, shift: Sequence[int]) -> Environment:
    """Сдвиг среды на вектор решётки: p'_x = p_{x+shift}."""
    laws = {
        x: env.law_at([c + s for c, s in zip(x, shift)])
        for x in env.site_list
    }
    return Environment(env.dims, laws, tolerance=env.tolerance)


def reflect_environment(env: Environment) -> Environment:
    """Отражение решётки: p'_x(y) = p_{-x}(-y), так что блуждание в новой среде равно -X по закону."""
    laws = {}
    for x in env.site_list:
        law = env.law_at([-c for c in x])
        laws[x] = JumpLaw.from_mapping({tuple(-c for c in step): p for step, p in zip(law.steps, law.probs)})
    return Environment(env.dims, laws, tolerance=env.tolerance)


def iter_signed_unit_vectors(d: int) -> Iterable[Tuple[int, int, Step]]:
    """Тройки (ось i, знак, ±e_i) в порядке +e_1, -e_1, +e_2, ..."""
    for i in range(d):
        for sign in (1, -1):
            e = [0] * d
            e[i] = sign
            yield i, sign, tuple(e)


def iter_unit_vectors(d: int) -> Iterable[Tuple[int, Step]]:
    """Пары (ось i, e_i)."""
    for i, sign, e in iter_signed_unit_vectors(d):
        if sign == 1:
            yield i, e
