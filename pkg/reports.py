"""
Форматирование результатов: структурированный документ (JSON) и текст для человека.
"""

import json
import math
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

RULER = "=" * 60


def jsonable(value):
    """Приводит numpy-типы, дроби и NaN к JSON-совместимому виду."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, pd.DataFrame):
        return jsonable(value.to_dict(orient="records"))
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    return value


def structured_document(config: Dict, result: Dict, warnings: List[str], generator: Optional[str] = None) -> str:
    """Один документ на запуск; порядок ключей фиксирован, float через repr."""
    doc = {"config": config}
    if generator is not None:
        doc["generator"] = generator
    doc["result"] = result
    doc["warnings"] = warnings
    return json.dumps(jsonable(doc), indent=2, ensure_ascii=False)


def error_document(error: Dict) -> str:
    return json.dumps({"error": jsonable(error)}, indent=2, ensure_ascii=False)


def _vector(values) -> str:
    return "(" + ", ".join(f"{float(v):.10g}" for v in values) + ")"


def _matrix(rows, indent: str = "  ") -> List[str]:
    return [indent + "[" + ", ".join(f"{float(v):.10g}" for v in row) + "]" for row in rows]


def _header(title: str) -> List[str]:
    return [RULER, title, RULER]


def format_validation(report: Dict) -> str:
    lines = _header("ПРОВЕРКА СРЕДЫ")
    lines.append(f"Тор:                 {tuple(report['dims'])}")
    lines.append(f"Корректна:           {'да' if report['valid'] else 'нет'}")
    lines.append(f"Ближайшие соседи:    {'да' if report['nearest_neighbour'] else 'нет'}")
    lines.append(f"Строго положительна: {'да' if report['strictly_positive'] else 'нет'}")
    lines.append(f"Неприводима:         {'да' if report['irreducible'] else 'нет'}")
    lines.append(f"Период цепи:         {report['period']}")
    lines.append(f"Макс. носитель:      {report['max_support']}")
    worst = max(report["sum_defects"].items(), key=lambda kv: kv[1])
    lines.append(f"Худший дефект суммы: {worst[1]:.3e} в точке {worst[0]}")
    lines.append(RULER)
    return "\n".join(lines)


def format_analysis(result: Dict) -> str:
    lines = _header("АСИМПТОТИКА БЛУЖДАНИЯ")
    lines.append(f"Дрейф ν:   {_vector(result['nu'])}")
    lines.append("Диффузия Σ:")
    lines.extend(_matrix(result["sigma"]))
    lines.append(f"Период индуцированной цепи: {result['period']}")
    lines.append(f"Стационарное π: {_vector(result['pi'])}")
    if result.get("P") is not None:
        lines.append("Матрица переходов P:")
        lines.extend(_matrix(result["P"]))
    if result.get("direction") is not None:
        lines.append(f"Асимптотическое направление: {_vector(result['direction'])}")
    if "ballistic" in result:
        lines.append(f"Баллистический режим: {'да' if result['ballistic'] else 'нет (ν = 0)'}")
    lines.append(RULER)
    return "\n".join(lines)


def format_potential(result: Dict, table: Optional[pd.DataFrame] = None) -> str:
    lines = _header("ОБРАТИМОСТЬ И ПОТЕНЦИАЛ")
    lines.append(f"Обратима:             {'да' if result['reversible'] else 'нет'}")
    lines.append(f"Макс. дефект цикла:   {result['max_cycle_defect']:.3e}")
    if result.get("g") is not None:
        lines.append(f"Средний отриц. градиент g: {_vector(result['g'])}")
    if table is not None:
        lines.append("")
        lines.append("Потенциал u на замкнутой ячейке:")
        lines.append(table.to_string(index=False))
    if result.get("corners"):
        lines.append("Вершины ячейки:")
    for row in result.get("corners", []):
        lines.append(f"u{tuple(row['point'])} = {row['u']:.12g}")
    lines.append(RULER)
    return "\n".join(lines)


def format_simulation(result: Dict) -> str:
    drift = result["drift"]
    lines = _header("МОДЕЛИРОВАНИЕ")
    lines.append(f"Шагов: {drift['n_steps']}, реплик: {drift['replicas']}, seed: {drift['seed']}")
    lines.append(f"Схема: {drift['sampler']}")
    lines.append(f"ν̂:        {_vector(drift['nu_hat'])}")
    lines.append(f"stderr:    {_vector(drift['nu_stderr'])}")
    if result.get("nu") is not None:
        lines.append(f"ν точное:  {_vector(result['nu'])}")
    covariance = result.get("covariance")
    if covariance is not None:
        lines.append("Σ̂:")
        lines.extend(_matrix(covariance["sigma_hat"]))
        lines.append("Σ точная:")
        lines.extend(_matrix(result["sigma"]))
    lines.append(RULER)
    return "\n".join(lines)


def format_hitting(result: Dict) -> str:
    lines = _header("ПЕРЕСЕЧЕНИЕ УРОВНЕЙ")
    lines.append(f"g:  {_vector(result['g'])}")
    approx = result["direction"]
    lines.append(f"Рациональное направление: ({', '.join(approx['g_rational'])}), g1 = {tuple(approx['g1'])}")
    lines.append(f"Ошибка угла: {approx['angle_error']:.3e} рад")
    estimate = result["stats"]["extra"]["hitting_frequency"]
    lines.append(f"k = {result['k']}")
    lines.append(f"P(τ_-k < τ_k) ≈ {estimate['estimate']:.5f} ± {estimate['stderr']:.5f}")
    stats = result["stats"]
    lines.append(
        f"Цензурировано: {stats['censored_count']} из {stats['replicas']} ({stats['censored_fraction']:.2%})"
    )
    lines.append(RULER)
    return "\n".join(lines)


def format_gamble(result: Dict) -> str:
    lines = _header("РАЗОРЕНИЕ ИГРОКА (d = 1)")
    lines.append(f"Интервал: [-{result['K']}, {result['K']}], старт: {result['start']}")
    lines.append(f"P(выход через +K), точно:         {result['exact']:.12f}")
    lines.append(f"P(выход через +K), линейная сист.: {result['absorbing']:.12f}")
    mc = result["monte_carlo"]
    lines.append(f"P(выход через +K), Монте-Карло:   {mc['estimate']:.5f} ± {mc['stderr']:.5f}")
    lines.append(f"Отклонение: {mc['z']:+.2f} стандартных ошибок")
    lines.append(RULER)
    return "\n".join(lines)


def format_theorem(result: Dict) -> str:
    lines = _header("ПРОВЕРКА ТЕОРЕМЫ О ГРАДИЕНТЕ")
    lines.append(f"g: {_vector(result['g'])}")
    lines.append(f"ν: {_vector(result['nu'])}")
    if result["vacuous"]:
        lines.append("gradient zero; theorem vacuous")
    else:
        lines.append(f"<g, ν> = {result['inner']:.10g}")
        if result["angle_deg"] is not None:
            lines.append(f"Угол между g и ν: {result['angle_deg']:.6f} градусов")
        lines.append(f"Утверждение выполняется: {'да' if result['holds'] else 'НЕТ'}")
    lines.append(RULER)
    return "\n".join(lines)


def format_table(title: str, table: pd.DataFrame) -> str:
    lines = _header(title)
    lines.append(table.to_string(index=False))
    lines.append(RULER)
    return "\n".join(lines)
