#!/usr/bin/env python3
"""
Анализатор блужданий в периодической среде: точные асимптотики, обратимость,
теорема о градиенте потенциала и проверка моделированием.
"""

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from asymptotics import analyze, asymptotic_direction
from config import config
from environment import Environment, load_environment, make_counterexample, save_environment, validate
from errors import UsageError, WalkError
from experiments import counterexample_sweep, theorem_check, tilted_property_suite
from reports import (
    error_document,
    format_analysis,
    format_gamble,
    format_hitting,
    format_potential,
    format_simulation,
    format_table,
    format_theorem,
    format_validation,
    structured_document,
)
from reversibility import (
    approximate_appropriate_direction,
    average_negative_gradient,
    cell_corners,
    check_reversible,
    potential,
    potential_table,
)
from simulator import (
    GENERATOR_NAME,
    estimate_covariance,
    estimate_drift,
    exit_probability_1d_exact,
    exit_probability_absorbing,
    hitting_probability,
    hitting_sweep,
    simulate_exit_1d,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = (
    "validate",
    "analyze",
    "check-reversible",
    "potential",
    "simulate",
    "hitting",
    "gamble",
    "theorem-check",
    "counterexample",
    "sweep",
    "property-suite",
)

SEED_LIMIT = 2 ** 64


@dataclass
class RunConfig:
    """Полная конфигурация запуска; целиком попадает в отчёт."""

    subcommand: str
    env_path: Optional[str] = None
    seed: int = 0
    replicas: int = 200
    steps: int = 10000
    k: int = 5
    max_denominator: int = 20
    output_format: str = "human"
    renormalize: bool = False
    max_steps: int = 10000000
    workers: int = 1
    K: float = 2.0
    eps: List[float] = field(default_factory=lambda: [0.1])
    output: Optional[str] = None
    covariance: bool = False
    two_stage: bool = False
    gamble_K: int = 4
    start: int = 0
    draws: int = 200
    ks: Optional[List[int]] = None
    show_matrix: bool = False


@dataclass
class Outcome:
    result: Dict
    text: str
    exit_code: int = 0
    generator: Optional[str] = None


class WarningCollector(logging.Handler):
    """Собирает предупреждения запуска для поля warnings отчёта."""

    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages: List[str] = []

    def emit(self, record: logging.LogRecord):
        message = record.getMessage()
        if message not in self.messages:
            self.messages.append(message)


def setup_logging(level_name: str, log_file: str = ""):
    """Логи идут в stderr (и в файл, если задан), stdout остаётся для отчёта."""
    level = getattr(logging, level_name.upper(), logging.INFO)
    stream = logging.StreamHandler(sys.stderr)
    stream.setLevel(level)
    handlers = [stream]
    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)
        handlers.append(file_handler)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )
    # Предупреждения нужны сборщику даже при LOG_LEVEL=ERROR
    root = logging.getLogger()
    root.setLevel(min(level, logging.WARNING))


class CliParser(argparse.ArgumentParser):
    """Ошибки разбора аргументов превращаются в UsageError с кодом E_USAGE."""

    def error(self, message):
        raise UsageError(f"Некорректные аргументы: {message}", {"usage": self.format_usage().strip()})


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(description="Блуждание в периодической среде: асимптотики и моделирование")
    parser.add_argument("subcommand", help=f"Что сделать: {', '.join(SUBCOMMANDS)}")
    parser.add_argument("--env", dest="env_path", help="Файл среды (JSON)")
    parser.add_argument("--seed", type=int, default=config.SEED, help="Seed всех случайных потоков")
    parser.add_argument("--replicas", type=int, default=config.REPLICAS, help="Число реплик")
    parser.add_argument("--steps", type=int, default=config.STEPS, help="Шагов в траектории")
    parser.add_argument("--k", type=int, default=config.HITTING_K, help="Номер уровня для hitting")
    parser.add_argument("--ks", type=int, nargs="+", help="Несколько уровней для hitting")
    parser.add_argument("--max-denominator", type=int, default=config.MAX_DENOMINATOR, help="Предел знаменателя")
    parser.add_argument(
        "--format", dest="output_format", choices=("human", "structured"), default=config.OUTPUT_FORMAT
    )
    parser.add_argument("--renormalize", action="store_true", help="Нормировать законы вместо ошибки")
    parser.add_argument("--max-steps", type=int, default=config.MAX_STEPS, help="Цензурирование по шагам")
    parser.add_argument("--workers", type=int, default=config.WORKERS, help="Процессов для реплик")
    parser.add_argument("--K", type=float, default=2.0, help="Параметр K семейства с почти прямым углом")
    parser.add_argument("--eps", type=float, nargs="+", default=[0.1], help="Параметр(ы) ε того же семейства")
    parser.add_argument("--output", help="Куда записать построенную среду")
    parser.add_argument("--covariance", action="store_true", help="simulate: оценить и Σ")
    parser.add_argument("--two-stage", action="store_true", help="simulate: двухэтапная схема")
    parser.add_argument("--gamble-K", type=int, default=4, help="gamble: полуширина интервала")
    parser.add_argument("--start", type=int, default=0, help="gamble: начальная точка")
    parser.add_argument("--draws", type=int, default=200, help="property-suite: число сред")
    parser.add_argument("--show-matrix", action="store_true", help="analyze: вывести P")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="DEBUG, INFO, WARNING, ERROR")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        subcommand=args.subcommand,
        env_path=args.env_path,
        seed=args.seed,
        replicas=args.replicas,
        steps=args.steps,
        k=args.k,
        max_denominator=args.max_denominator,
        output_format=args.output_format,
        renormalize=args.renormalize,
        max_steps=args.max_steps,
        workers=args.workers,
        K=args.K,
        eps=list(args.eps),
        output=args.output,
        covariance=args.covariance,
        two_stage=args.two_stage,
        gamble_K=args.gamble_K,
        start=args.start,
        draws=args.draws,
        ks=args.ks,
        show_matrix=args.show_matrix,
    )


def _load(cfg: RunConfig) -> Environment:
    if not cfg.env_path:
        raise UsageError(f"Для {cfg.subcommand} нужен --env")
    return load_environment(cfg.env_path, renormalize=cfg.renormalize)


def _sampler(cfg: RunConfig) -> str:
    return "two_stage" if cfg.two_stage else "direct"


# ----------------------------------------------------------------------------
# Подкоманды
# ----------------------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> Outcome:
    result = validate(_load(cfg)).to_dict()
    return Outcome(result=result, text=format_validation(result))


def cmd_analyze(cfg: RunConfig) -> Outcome:
    summary = analyze(_load(cfg))
    direction = asymptotic_direction(summary.nu)
    result = {
        "nu": summary.nu,
        "sigma": summary.sigma,
        "period": summary.period,
        "pi": summary.chain.pi,
        "direction": direction,
        "ballistic": summary.ballistic,
    }
    if cfg.show_matrix:
        result["P"] = summary.chain.P
    return Outcome(result=result, text=format_analysis(result))


def cmd_check_reversible(cfg: RunConfig) -> Outcome:
    env = _load(cfg)
    verdict = check_reversible(env)
    result = dict(verdict)
    result["g"] = average_negative_gradient(env) if verdict["reversible"] else None
    return Outcome(result=result, text=format_potential(result))


def cmd_potential(cfg: RunConfig) -> Outcome:
    env = _load(cfg)
    field_ = potential(env)
    result = field_.to_dict()
    result["corners"] = [{"point": corner, "u": field_.u[corner]} for corner in cell_corners(env.dims)]
    return Outcome(result=result, text=format_potential(result, potential_table(field_)))


def cmd_simulate(cfg: RunConfig) -> Outcome:
    env = _load(cfg)
    summary = analyze(env)
    stats = estimate_drift(env, cfg.steps, cfg.replicas, cfg.seed, cfg.workers, _sampler(cfg))
    result = {
        "nu": summary.nu,
        "drift": stats.to_dict(),
        "z_scores": stats.z_scores(summary.nu),
    }
    if cfg.covariance:
        cov = estimate_covariance(env, cfg.steps, cfg.replicas, cfg.seed, summary.nu, cfg.workers, _sampler(cfg))
        result["covariance"] = cov.to_dict()
        result["sigma"] = summary.sigma
    return Outcome(result=result, text=format_simulation(result), generator=GENERATOR_NAME)


def cmd_hitting(cfg: RunConfig) -> Outcome:
    env = _load(cfg)
    g = average_negative_gradient(env)
    approx = approximate_appropriate_direction(g, cfg.max_denominator, env.dims)
    stats = hitting_probability(env, approx.g1, cfg.k, cfg.replicas, cfg.seed, cfg.max_steps, cfg.workers)
    result = {"g": g, "direction": approx.to_dict(), "k": cfg.k, "stats": stats.to_dict()}
    text = format_hitting(result)
    if cfg.ks:
        table = hitting_sweep(env, approx.g1, cfg.ks, cfg.replicas, cfg.seed, cfg.max_steps, cfg.workers)
        result["sweep"] = table
        text += "\n" + format_table("ЗАВИСИМОСТЬ ОТ k", table)
    return Outcome(result=result, text=text, generator=GENERATOR_NAME)


def cmd_gamble(cfg: RunConfig) -> Outcome:
    env = _load(cfg)
    K, start = cfg.gamble_K, cfg.start
    exact = exit_probability_1d_exact(env, K, start)
    absorbing = exit_probability_absorbing(env, K, start)
    estimate, stderr, censored = simulate_exit_1d(env, K, start, cfg.replicas, cfg.seed, cfg.max_steps, cfg.workers)
    if stderr > 0:
        z = (estimate - exact) / stderr
    else:
        z = 0.0 if estimate == exact else float("inf")
    result = {
        "K": K,
        "start": start,
        "exact": exact,
        "absorbing": absorbing,
        "monte_carlo": {"estimate": estimate, "stderr": stderr, "censored_count": censored, "z": z},
    }
    return Outcome(result=result, text=format_gamble(result), generator=GENERATOR_NAME)


def cmd_theorem_check(cfg: RunConfig) -> Outcome:
    check = theorem_check(_load(cfg))
    result = check.to_dict()
    return Outcome(result=result, text=format_theorem(result), exit_code=0 if check.holds else 1)


def cmd_counterexample(cfg: RunConfig) -> Outcome:
    if not cfg.output:
        raise UsageError("Для counterexample нужен --output")
    if len(cfg.eps) != 1:
        raise UsageError("counterexample принимает одно значение --eps; для нескольких используйте sweep")
    env = make_counterexample(cfg.K, cfg.eps[0])
    save_environment(env, cfg.output)
    check = theorem_check(env)
    result = {"K": cfg.K, "eps": cfg.eps[0], "output": cfg.output, **check.to_dict()}
    text = format_theorem(result) + f"\nСреда записана в {cfg.output}"
    return Outcome(result=result, text=text, exit_code=0 if check.holds else 1)


def cmd_sweep(cfg: RunConfig) -> Outcome:
    table = counterexample_sweep(cfg.K, cfg.eps)
    result = {"K": cfg.K, "table": table}
    return Outcome(result=result, text=format_table(f"УГОЛ МЕЖДУ g И ν, K = {cfg.K:g}", table))


def cmd_property_suite(cfg: RunConfig) -> Outcome:
    table = tilted_property_suite(cfg.draws, cfg.seed)
    all_hold = bool(table["holds"].all())
    result = {"draws": cfg.draws, "all_hold": all_hold, "table": table}
    return Outcome(
        result=result,
        text=format_table("НАКЛОНЁННЫЕ СРЕДЫ ПРОВОДИМОСТЕЙ", table),
        exit_code=0 if all_hold else 1,
        generator=GENERATOR_NAME,
    )


HANDLERS: Dict[str, Callable[[RunConfig], Outcome]] = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "check-reversible": cmd_check_reversible,
    "potential": cmd_potential,
    "simulate": cmd_simulate,
    "hitting": cmd_hitting,
    "gamble": cmd_gamble,
    "theorem-check": cmd_theorem_check,
    "counterexample": cmd_counterexample,
    "sweep": cmd_sweep,
    "property-suite": cmd_property_suite,
}


def _check_config(cfg: RunConfig):
    if cfg.subcommand not in HANDLERS:
        raise UsageError(f"Неизвестная подкоманда: {cfg.subcommand}")
    if not 0 <= cfg.seed < SEED_LIMIT:
        raise UsageError(f"seed должен быть 64-битным беззнаковым числом: {cfg.seed}")
    if cfg.workers < 1:
        raise UsageError("--workers должно быть >= 1")


def _render_error(error: Dict, output_format: str) -> str:
    if output_format == "structured":
        return error_document(error)
    return f"Ошибка [{error['code']}]: {error['message']}"


def _requested_format(argv: Sequence[str]) -> str:
    """Формат вывода из сырых аргументов, когда разбор не удался."""
    for i, arg in enumerate(argv):
        if arg.startswith("--format="):
            return arg.split("=", 1)[1]
        if arg == "--format" and i + 1 < len(argv):
            return argv[i + 1]
    return config.OUTPUT_FORMAT


def run(cfg: RunConfig) -> Tuple[int, str]:
    """
    Выполняет одну подкоманду.

    Returns:
        (код выхода, отчёт для stdout)
    """
    collector = WarningCollector()
    root = logging.getLogger()
    root.addHandler(collector)
    try:
        try:
            _check_config(cfg)
            logger.info(f"Подкоманда {cfg.subcommand}, seed {cfg.seed}")
            outcome = HANDLERS[cfg.subcommand](cfg)
        except WalkError as e:
            logger.error(f"[{e.code}] {e.message}")
            return 2, _render_error(e.to_dict(), cfg.output_format)
        except Exception as e:
            logger.error(f"Непредвиденная ошибка: {e}", exc_info=True)
            error = {"code": "E_INTERNAL", "message": str(e), "details": {"type": type(e).__name__}}
            return 3, _render_error(error, cfg.output_format)
    finally:
        root.removeHandler(collector)

    if cfg.output_format == "structured":
        text = structured_document(asdict(cfg), outcome.result, collector.messages, outcome.generator)
    else:
        lines = [outcome.text]
        lines.extend(f"Предупреждение: {message}" for message in collector.messages)
        text = "\n".join(lines)
    return outcome.exit_code, text


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(_render_error(e.to_dict(), _requested_format(argv)))
        print(e.details["usage"], file=sys.stderr)
        return 2
    setup_logging(args.log_level, config.LOG_FILE)
    code, text = run(config_from_args(args))
    print(text)
    return code


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Остановлено пользователем")
        sys.exit(130)
