# beamsema/config.py
from dotenv import load_dotenv
import os

load_dotenv()


class Settings:
    DATA_DIR: str = os.getenv("BEAMSEMA_DATA_DIR", "data")
    REPORTS_DIR: str = os.getenv("BEAMSEMA_REPORTS_DIR", "reports")
    LOG_FILE: str = os.getenv("BEAMSEMA_LOG_FILE", "")
    LOG_LEVEL: str = os.getenv("BEAMSEMA_LOG_LEVEL", "INFO")
    INFER_REPEATS = 5


settings = Settings()


def resolve_threads(flag: int | None = None) -> int:
    """
    Limite de workers: flag da CLI > BEAMSEMA_THREADS > 1.
    Lido em tempo de chamada (não no import) para respeitar o ambiente atual.
    """
    if flag is not None:
        return max(1, int(flag))
    raw = (os.getenv("BEAMSEMA_THREADS") or "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def reports_dir() -> str:
    return os.getenv("BEAMSEMA_REPORTS_DIR", settings.REPORTS_DIR)
