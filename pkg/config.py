import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    # Допуски проверок
    PROB_TOLERANCE = float(os.getenv("RWPE_PROB_TOLERANCE", "1e-9"))  # Сумма вероятностей закона
    CYCLE_TOLERANCE = float(os.getenv("RWPE_CYCLE_TOLERANCE", "1e-9"))  # Лог-дефект плакета
    PATH_TOLERANCE = float(os.getenv("RWPE_PATH_TOLERANCE", "1e-9"))  # Независимость потенциала от пути
    IDENTITY_TOLERANCE = float(os.getenv("RWPE_IDENTITY_TOLERANCE", "1e-12"))  # Две формы дрейфа, πP=π

    # Монте-Карло
    SEED = int(os.getenv("RWPE_SEED", "0"))
    REPLICAS = int(os.getenv("RWPE_REPLICAS", "200"))
    STEPS = int(os.getenv("RWPE_STEPS", "10000"))
    MAX_STEPS = int(os.getenv("RWPE_MAX_STEPS", "10000000"))  # Цензурирование в задаче достижения уровня
    HITTING_K = int(os.getenv("RWPE_HITTING_K", "5"))
    MAX_DENOMINATOR = int(os.getenv("RWPE_MAX_DENOMINATOR", "20"))
    WORKERS = int(os.getenv("RWPE_WORKERS", "1"))  # Процессы для параллельных реплик
    CHUNK_STEPS = int(os.getenv("RWPE_CHUNK_STEPS", "4096"))  # Шагов на один блок равномерных чисел
    CHUNK_CELLS = int(os.getenv("RWPE_CHUNK_CELLS", "4194304"))  # Предел шаги*реплики в блоке

    # Вывод
    OUTPUT_FORMAT = os.getenv("RWPE_OUTPUT_FORMAT", "human").lower()  # human | structured
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()  # DEBUG, INFO, WARNING, ERROR
    LOG_FILE = os.getenv("LOG_FILE", "")  # Пусто - только консоль


config = Config()
