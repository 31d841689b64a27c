"""
Монте-Карло движок для периодического блуждания.

Прямое и двухэтапное (сначала цепь ξ, затем скачки) моделирование, эмпирические
ЗБЧ/ЦПТ, вероятности пересечения уровней и точный оракул разорения игрока в d=1.

Каждая реплика получает собственный поток RngStream(seed, replica); реплики
моделируются векторно и при желании по процессам, результат собирается по
индексу реплики, поэтому он не зависит ни от разбиения на блоки, ни от числа
процессов.
"""

import concurrent.futures as cf
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.linalg import solve
from scipy.special import logsumexp

from config import config
from environment import Environment, canonical_site
from errors import (
    CensoredError,
    NonPositiveProbabilityError,
    NotNearestNeighbourError,
    ParameterDomainError,
    ZeroGradientError,
)

logger = logging.getLogger(__name__)

GENERATOR_NAME = "numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=(stream_id,))"


@dataclass(frozen=True)
class RngStream:
    """Воспроизводимый независимый поток: (seed, stream_id) -> PCG64."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, label: int) -> int:
    """Производный 64-битный seed для независимой серии потоков."""
    state = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(label), 0xD1CE)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass
class TrajectoryStats:
    """Оценки Монте-Карло с ошибками и параметрами воспроизведения."""

    n_steps: int
    replicas: int
    seed: int
    nu_hat: np.ndarray
    nu_stderr: np.ndarray
    sigma_hat: np.ndarray
    extra: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    censored: int = 0
    sampler: str = "direct"
    generator_name: str = GENERATOR_NAME
    finals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.replicas if self.replicas else 0.0

    def z_scores(self, nu: Sequence[float]) -> np.ndarray:
        """(ν̂ - ν) / stderr по координатам."""
        nu = np.asarray(nu, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.nu_hat - nu) / self.nu_stderr
        return np.where(self.nu_stderr == 0, np.where(self.nu_hat == nu, 0.0, np.inf), z)

    def to_dict(self) -> Dict:
        return {
            "n_steps": self.n_steps,
            "replicas": self.replicas,
            "seed": self.seed,
            "sampler": self.sampler,
            "generator_name": self.generator_name,
            "nu_hat": self.nu_hat.tolist(),
            "nu_stderr": self.nu_stderr.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "extra": {name: {"estimate": v, "stderr": se} for name, (v, se) in self.extra.items()},
            "censored_count": self.censored,
            "censored_fraction": self.censored_fraction,
        }


# ----------------------------------------------------------------------------
# Таблицы для обратной функции распределения
# ----------------------------------------------------------------------------

class SamplingTables:
    """
    Кумулятивные таблицы по точкам тора в лексикографическом порядке носителя.
    Пустые ячейки выравнивания имеют cdf = 1 и никогда не выбираются.
    """

    def __init__(self, env: Environment, two_stage: bool = False):
        self.dims = env.dims
        self.d = env.dims.d
        n = env.dims.size
        kmax = max(len(law.steps) for law in env.laws.values())
        self.cdf = np.ones((n, kmax))
        self.steps = np.zeros((n, kmax, self.d), dtype=np.int64)
        self.next_site = np.tile(np.arange(n)[:, None], (1, kmax))
        for i, site in enumerate(env.site_list):
            law = env.laws[site]
            k = len(law.steps)
            cdf = np.cumsum(law.prob_array())
            cdf[-1] = 1.0
            self.cdf[i, :k] = cdf
            self.steps[i, :k] = law.step_array()
            self.next_site[i, :k] = [
                env.dims.index(canonical_site([c + w for c, w in zip(site, step)], env.dims))
                for step in law.steps
            ]

        self.two_stage = two_stage
        if two_stage:
            self._build_two_stage(env, kmax)

    def _build_two_stage(self, env: Environment, kmax: int):
        """
        Двухэтапная схема. Для каждой точки: различные классы попадания по
        возрастанию индекса (слоты) с вероятностями строки P и условные законы
        скачка при паре (ξ_{n-1}, ξ_n). Таблицы размера n x kmax (x kmax).
        """
        n = self.dims.size
        self.chain_next = np.tile(np.arange(n)[:, None], (1, kmax))
        weights = np.zeros((n, kmax))
        self.cond_cdf = np.ones((n, kmax, kmax))
        for i, site in enumerate(env.site_list):
            probs = env.laws[site].prob_array()
            k = len(probs)
            targets = self.next_site[i, :k]
            for slot, j in enumerate(np.unique(targets)):
                mask = targets == j
                self.chain_next[i, slot] = j
                weights[i, slot] = probs[mask].sum()
                self.cond_cdf[i, slot, :k] = _cumulative_rows((probs * mask)[None, :])[0]
        self.chain_cdf = _cumulative_rows(weights)

    def origin_index(self, start: Sequence[int]) -> int:
        return self.dims.index(canonical_site(start, self.dims))

    def draw(self, site: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Индекс шага: наименьший k с u < cdf[site, k]."""
        return (self.cdf[site] <= u[:, None]).sum(axis=1)


def _cumulative_rows(weights: np.ndarray) -> np.ndarray:
    """
    Нормированные кумулятивные суммы по строкам; начиная с последнего
    положительного элемента значение ровно 1, так что нулевые веса не выбираются.
    """
    totals = weights.sum(axis=1, keepdims=True)
    cdf = np.cumsum(weights / totals, axis=1)
    for row, w in zip(cdf, weights):
        last = np.flatnonzero(w > 0)[-1]
        row[last:] = 1.0
    return cdf


def _chunk_length(remaining: int, replicas: int) -> int:
    return max(1, min(config.CHUNK_STEPS, remaining, config.CHUNK_CELLS // max(replicas, 1)))


def _walk_direct(tables: SamplingTables, streams: Sequence[RngStream], n: int, record_path: bool = False):
    """Прямое моделирование: шаг из закона в canonical_site(X_k)."""
    gens = [s.generator() for s in streams]
    R = len(gens)
    pos = np.zeros((R, tables.d), dtype=np.int64)
    site = np.zeros(R, dtype=np.int64)
    path = [pos.copy()] if record_path else None
    done = 0
    while done < n:
        c = _chunk_length(n - done, R)
        U = np.stack([g.random(c) for g in gens], axis=1)
        for t in range(c):
            idx = tables.draw(site, U[t])
            pos += tables.steps[site, idx]
            site = tables.next_site[site, idx]
            if record_path:
                path.append(pos.copy())
        done += c
    return pos, (np.stack(path, axis=1) if record_path else None)


def _walk_two_stage(tables: SamplingTables, streams: Sequence[RngStream], n: int) -> np.ndarray:
    """
    Двухэтапное моделирование: траектория ξ по P, затем скачки независимо
    из условного закона при паре (ξ_{t-1}, ξ_t).
    """
    gens = [s.generator() for s in streams]
    R = len(gens)
    pos = np.zeros((R, tables.d), dtype=np.int64)
    site = np.zeros(R, dtype=np.int64)
    done = 0
    while done < n:
        c = _chunk_length(n - done, 2 * R * tables.cdf.shape[1])
        U = np.stack([g.random((c, 2)) for g in gens], axis=1)  # (c, R, 2)
        xi = np.empty((c + 1, R), dtype=np.int64)
        slots = np.empty((c, R), dtype=np.int64)
        xi[0] = site
        for t in range(c):
            slots[t] = (tables.chain_cdf[xi[t]] <= U[t, :, 0][:, None]).sum(axis=1)
            xi[t + 1] = tables.chain_next[xi[t], slots[t]]
        cond = tables.cond_cdf[xi[:-1], slots]  # (c, R, kmax)
        idx = (cond <= U[:, :, 1][..., None]).sum(axis=-1)
        pos += tables.steps[xi[:-1], idx].sum(axis=0)
        site = xi[-1]
        done += c
    return pos


def sample_trajectory(env: Environment, n: int, rng: RngStream, return_path: bool = False):
    """
    Прямое моделирование одной траектории, X_0 = 0.

    Returns:
        X_n (массив длины d) или (X_n, путь формы (n+1, d)) при return_path
    """
    if n < 0:
        raise ParameterDomainError("n должно быть >= 0")
    pos, path = _walk_direct(SamplingTables(env), [rng], n, record_path=return_path)
    if return_path:
        return pos[0], path[0]
    return pos[0]


def sample_two_stage(env: Environment, n: int, rng: RngStream) -> np.ndarray:
    """Двухэтапное моделирование одной траектории; закон X_n тот же, что у прямого."""
    if n < 0:
        raise ParameterDomainError("n должно быть >= 0")
    return _walk_two_stage(SamplingTables(env, two_stage=True), [rng], n)[0]


# ----------------------------------------------------------------------------
# Параллельный запуск реплик
# ----------------------------------------------------------------------------

def _final_positions_block(env: Environment, n: int, seed: int, replica_ids: List[int], sampler: str) -> np.ndarray:
    tables = SamplingTables(env, two_stage=(sampler == "two_stage"))
    streams = [RngStream(seed, r) for r in replica_ids]
    if sampler == "two_stage":
        return _walk_two_stage(tables, streams, n)
    return _walk_direct(tables, streams, n)[0]


def _blocks(replicas: int, workers: int) -> List[List[int]]:
    workers = max(1, min(workers, replicas))
    bounds = np.linspace(0, replicas, workers + 1).astype(int)
    return [list(range(bounds[i], bounds[i + 1])) for i in range(workers)]


def _run_blocks(func, env: Environment, workers: int, blocks: List[List[int]], *args) -> List:
    """Выполняет func по блокам реплик; результаты в порядке блоков."""
    if workers <= 1 or len(blocks) == 1:
        return [func(env, *args, block) for block in blocks]
    with cf.ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(func, env, *args, block) for block in blocks]
        return [f.result() for f in futures]


def _direct_block(env, n, seed, sampler, replica_ids):
    return _final_positions_block(env, n, seed, replica_ids, sampler)


def final_positions(
    env: Environment, n: int, replicas: int, seed: int, workers: Optional[int] = None, sampler: str = "direct"
) -> np.ndarray:
    """
    X_n для реплик 0..replicas-1 (строка r - реплика r).
    """
    if sampler not in ("direct", "two_stage"):
        raise ParameterDomainError(f"Неизвестный способ моделирования: {sampler}")
    workers = config.WORKERS if workers is None else workers
    blocks = _blocks(replicas, workers)
    logger.info(f"Моделирование {replicas} реплик по {n} шагов ({sampler}, процессов: {len(blocks)})")
    parts = _run_blocks(_direct_block, env, workers, blocks, n, seed, sampler)
    return np.concatenate(parts, axis=0)


def estimate_drift(
    env: Environment,
    n: int,
    replicas: int,
    seed: int,
    workers: Optional[int] = None,
    sampler: str = "direct",
) -> TrajectoryStats:
    """
    ν̂ = среднее X_n / n по репликам, ошибка = выборочное стандартное отклонение / sqrt(реплик).
    """
    if n < 1 or replicas < 2:
        raise ParameterDomainError("Нужно n >= 1 и replicas >= 2")
    X = final_positions(env, n, replicas, seed, workers, sampler)
    ratios = X / n
    nu_hat = ratios.mean(axis=0)
    nu_stderr = ratios.std(axis=0, ddof=1) / math.sqrt(replicas)
    sigma_hat = np.atleast_2d(np.cov(X / math.sqrt(n), rowvar=False, ddof=1))
    logger.info(f"ν̂ = {nu_hat}, stderr = {nu_stderr}")
    return TrajectoryStats(
        n_steps=n,
        replicas=replicas,
        seed=seed,
        nu_hat=nu_hat,
        nu_stderr=nu_stderr,
        sigma_hat=sigma_hat,
        sampler=sampler,
        finals=X,
    )


def estimate_covariance(
    env: Environment,
    n: int,
    replicas: int,
    seed: int,
    nu: Sequence[float],
    workers: Optional[int] = None,
    sampler: str = "direct",
) -> TrajectoryStats:
    """
    Σ̂ - выборочная ковариация (X_n - nν) / sqrt(n) по репликам.
    Разумно при n >= 10^3 и replicas >= 100.
    """
    if n < 1 or replicas < 2:
        raise ParameterDomainError("Нужно n >= 1 и replicas >= 2")
    if n < 1000 or replicas < 100:
        logger.warning(f"Малый объём для ЦПТ: n={n}, реплик {replicas} (рекомендуется n >= 1000, реплик >= 100)")
    nu = np.asarray(nu, dtype=float)
    X = final_positions(env, n, replicas, seed, workers, sampler)
    scaled = (X - n * nu) / math.sqrt(n)
    sigma_hat = np.atleast_2d(np.cov(scaled, rowvar=False, ddof=1))
    sigma_hat = (sigma_hat + sigma_hat.T) / 2.0
    ratios = X / n
    return TrajectoryStats(
        n_steps=n,
        replicas=replicas,
        seed=seed,
        nu_hat=ratios.mean(axis=0),
        nu_stderr=ratios.std(axis=0, ddof=1) / math.sqrt(replicas),
        sigma_hat=sigma_hat,
        sampler=sampler,
        finals=X,
    )


# ----------------------------------------------------------------------------
# Первое пересечение уровней
# ----------------------------------------------------------------------------

def _first_passage_block(
    env: Environment,
    g1: Tuple[int, ...],
    start: Tuple[int, ...],
    lower: int,
    upper: int,
    max_steps: int,
    seed: int,
    replica_ids: List[int],
) -> np.ndarray:
    """
    Для каждой реплики: 1 - уровень <= lower достигнут первым, 0 - уровень >= upper,
    -1 - цензурирована по max_steps. Случайные числа берутся только для активных реплик,
    каждая реплика расходует свой поток последовательно.
    """
    tables = SamplingTables(env)
    step_level = tables.steps @ np.asarray(g1, dtype=np.int64)  # (n_sites, kmax)
    gens = [RngStream(seed, r).generator() for r in replica_ids]
    R = len(gens)
    level = np.full(R, int(np.dot(start, g1)), dtype=np.int64)
    site = np.full(R, tables.origin_index(start), dtype=np.int64)
    outcome = np.full(R, -1, dtype=np.int8)
    elapsed = 0
    while elapsed < max_steps:
        active = np.flatnonzero(outcome == -1)
        if active.size == 0:
            break
        c = _chunk_length(max_steps - elapsed, active.size)
        U = np.stack([gens[r].random(c) for r in active], axis=1)
        lv = level[active]
        st = site[active]
        alive = np.ones(active.size, dtype=bool)
        res = np.full(active.size, -1, dtype=np.int8)
        for t in range(c):
            idx = tables.draw(st, U[t])
            lv = np.where(alive, lv + step_level[st, idx], lv)
            st = np.where(alive, tables.next_site[st, idx], st)
            low = alive & (lv <= lower)
            up = alive & (lv >= upper)
            res[low] = 1
            res[up] = 0
            alive &= ~(low | up)
            if not alive.any():
                break
        level[active] = lv
        site[active] = st
        outcome[active] = res
        elapsed += c
    return outcome


def _passage_outcomes(
    env: Environment,
    g1: Sequence[int],
    start: Sequence[int],
    lower: int,
    upper: int,
    replicas: int,
    seed: int,
    max_steps: int,
    workers: Optional[int],
) -> np.ndarray:
    workers = config.WORKERS if workers is None else workers
    blocks = _blocks(replicas, workers)
    parts = _run_blocks(
        _first_passage_block, env, workers, blocks, tuple(int(c) for c in g1), tuple(int(c) for c in start),
        int(lower), int(upper), int(max_steps), int(seed),
    )
    return np.concatenate(parts)


def _binomial(outcome: np.ndarray) -> Tuple[float, float, int]:
    finished = outcome[outcome >= 0]
    censored = int(np.sum(outcome < 0))
    if finished.size == 0:
        raise CensoredError(
            "Все реплики цензурированы: увеличьте max_steps", {"censored": censored}
        )
    p = float(finished.mean())
    se = math.sqrt(p * (1.0 - p) / finished.size)
    return p, se, censored


def hitting_probability(
    env: Environment,
    g1: Sequence[int],
    k: int,
    replicas: int,
    seed: int,
    max_steps: Optional[int] = None,
    workers: Optional[int] = None,
) -> TrajectoryStats:
    """
    Оценка P(τ_{-k} < τ_k) для уровневого функционала s(x) = <x, g1>.

    τ_+ - первый момент с s(X_n) >= k<g1,g1>, τ_- - первый момент с s(X_n) <= -k<g1,g1>
    (пересечение полупространств вместо попадания в L_{±k}). Реплики, не вышедшие за
    max_steps шагов, исключаются из оценки и считаются отдельно.

    Returns:
        TrajectoryStats с extra["hitting_frequency"] и числом цензурированных
    """
    g1 = tuple(int(c) for c in g1)
    if not any(g1):
        raise ZeroGradientError("g1 не должен быть нулевым")
    if len(g1) != env.dims.d:
        raise ParameterDomainError(f"Длина g1 {len(g1)} не совпадает с d = {env.dims.d}")
    if k < 1:
        raise ParameterDomainError("k должно быть >= 1")
    max_steps = config.MAX_STEPS if max_steps is None else max_steps
    threshold = k * sum(c * c for c in g1)
    outcome = _passage_outcomes(
        env, g1, (0,) * env.dims.d, -threshold, threshold, replicas, seed, max_steps, workers
    )
    p, se, censored = _binomial(outcome)
    logger.info(f"P(τ_-k < τ_k) ≈ {p:.4f} ± {se:.4f} (k={k}, g1={g1})")
    d = env.dims.d
    stats = TrajectoryStats(
        n_steps=max_steps,
        replicas=replicas,
        seed=seed,
        nu_hat=np.full(d, np.nan),
        nu_stderr=np.full(d, np.nan),
        sigma_hat=np.full((d, d), np.nan),
        extra={"hitting_frequency": (p, se)},
        censored=censored,
        sampler="first_passage",
    )
    if censored:
        logger.warning(
            f"Цензурировано {censored} из {replicas} реплик ({stats.censored_fraction:.2%}, max_steps={max_steps})"
        )
    return stats


def hitting_sweep(
    env: Environment,
    g1: Sequence[int],
    ks: Sequence[int],
    replicas: int,
    seed: int,
    max_steps: Optional[int] = None,
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """hitting_probability по нескольким k; для баллистической обратимой среды убывает по k."""
    rows = []
    for k in ks:
        result = hitting_probability(env, g1, k, replicas, derive_seed(seed, k), max_steps, workers)
        p, se = result.extra["hitting_frequency"]
        rows.append({"k": k, "estimate": p, "stderr": se, "censored": result.censored})
    return pd.DataFrame(rows)


# ----------------------------------------------------------------------------
# Разорение игрока в d = 1
# ----------------------------------------------------------------------------

def _one_dimensional_probs(env: Environment, x: int) -> Tuple[float, float]:
    law = env.law_at((x,)).as_dict()
    return law[(1,)], law[(-1,)]


def _require_birth_death(env: Environment, K: int, start: int):
    if env.dims.d != 1 or not env.nearest_neighbour:
        raise NotNearestNeighbourError("Нужна одномерная среда ближайших соседей")
    if not env.strictly_positive:
        raise NonPositiveProbabilityError("Нужно p_x(±1) > 0")
    if K < 1 or not -K < start < K:
        raise ParameterDomainError(f"Нужно K >= 1 и -K < start < K; получено K={K}, start={start}")


def exit_probability_1d_exact(env1d: Environment, K: int, start: int) -> float:
    """
    Вероятность выйти из (-K, K) через +K: обобщённое разорение игрока.

    С ρ_x = p_x(-1) / p_x(+1):
    [сумма_{j=-K}^{start-1} прод_{i=-K+1}^{j} ρ_i] / [сумма_{j=-K}^{K-1} прод_{i=-K+1}^{j} ρ_i],
    произведения накапливаются в логарифмах.
    """
    _require_birth_death(env1d, K, start)
    log_rho = {}
    for i in range(-K + 1, K):
        plus, minus = _one_dimensional_probs(env1d, i)
        log_rho[i] = math.log(minus) - math.log(plus)
    # log_products[j + K] = log прод_{i=-K+1}^{j} ρ_i, пустое произведение = 1
    log_products = [0.0]
    for j in range(-K + 1, K):
        log_products.append(log_products[-1] + log_rho[j])
    numerator = logsumexp(log_products[: start + K])
    denominator = logsumexp(log_products)
    return float(math.exp(numerator - denominator))


def exit_probability_absorbing(env1d: Environment, K: int, start: int) -> float:
    """
    Оракул: прямое решение линейной системы поглощающей цепи на -K+1..K-1,
    h(x) = p_x(+1) h(x+1) + p_x(-1) h(x-1), h(K) = 1, h(-K) = 0.
    """
    _require_birth_death(env1d, K, start)
    states = list(range(-K + 1, K))
    n = len(states)
    A = np.eye(n)
    b = np.zeros(n)
    for row, x in enumerate(states):
        plus, minus = _one_dimensional_probs(env1d, x)
        if x + 1 == K:
            b[row] += plus
        else:
            A[row, row + 1] -= plus
        if x - 1 != -K:
            A[row, row - 1] -= minus
    h = solve(A, b)
    return float(h[start + K - 1])


def simulate_exit_1d(
    env1d: Environment,
    K: int,
    start: int,
    replicas: int,
    seed: int,
    max_steps: Optional[int] = None,
    workers: Optional[int] = None,
) -> Tuple[float, float, int]:
    """
    Монте-Карло оценка вероятности выйти через +K.

    Returns:
        (оценка, stderr, число цензурированных)
    """
    _require_birth_death(env1d, K, start)
    max_steps = config.MAX_STEPS if max_steps is None else max_steps
    outcome = _passage_outcomes(env1d, (1,), (start,), -K, K, replicas, seed, max_steps, workers)
    p_lower, se, censored = _binomial(outcome)
    return 1.0 - p_lower, se, censored


# ----------------------------------------------------------------------------
# Эквивалентность двух схем моделирования
# ----------------------------------------------------------------------------

def _as_labels(X: np.ndarray) -> List[Tuple[int, ...]]:
    return [tuple(int(c) for c in row) for row in X]


def chi_square_equivalence(
    env: Environment, n: int, replicas: int, seed: int, workers: Optional[int] = None, min_count: int = 10
) -> Dict:
    """
    Двухвыборочный критерий хи-квадрат для законов X_n прямой и двухэтапной схем.
    Редкие значения (суммарно меньше min_count) объединяются в одну ячейку.

    Returns:
        {"statistic", "dof", "p_value", "categories"}
    """
    direct = Counter(_as_labels(final_positions(env, n, replicas, derive_seed(seed, 1), workers, "direct")))
    staged = Counter(_as_labels(final_positions(env, n, replicas, derive_seed(seed, 2), workers, "two_stage")))
    keys = sorted(set(direct) | set(staged))
    table = []
    rare = [0, 0]
    for key in keys:
        a, b = direct.get(key, 0), staged.get(key, 0)
        if a + b < min_count:
            rare[0] += a
            rare[1] += b
        else:
            table.append([a, b])
    if sum(rare) > 0:
        table.append(rare)
    if len(table) < 2:
        return {"statistic": 0.0, "dof": 0, "p_value": 1.0, "categories": len(table)}
    statistic, p_value, dof, _ = stats.chi2_contingency(np.array(table).T)
    logger.info(f"Хи-квадрат: {statistic:.3f}, степеней свободы {dof}, p = {p_value:.4f}")
    return {"statistic": float(statistic), "dof": int(dof), "p_value": float(p_value), "categories": len(table)}
