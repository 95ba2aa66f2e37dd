from typing import Optional, Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    STRIDE: int = 4
    TOP_K: int = 500
    SCORE_THRESH: float = 0.1
    ALPHA_THRESH: float = 0.5
    MIN_OVERLAP: float = 0.7
    RBB_IOU_THRESH: float = 0.95
    NMS_IOU: float = 0.1
    EVAL_IOU: float = 0.5
    PATCH: int = 600
    OVERLAP: int = 100
    SCALES: Tuple[float, ...] = (0.5, 1.0)
    THREADS: Optional[int] = None
    LOG_LEVEL: str = "INFO"
    HOST: str = "127.0.0.1"
    PORT: int = 8000
    DEBUG: bool = False

    model_config = SettingsConfigDict(env_file=".env", env_prefix="BBAV_", extra="ignore")

    @property
    def n_jobs(self) -> int:
        return self.THREADS if self.THREADS else 1


settings = Settings()
