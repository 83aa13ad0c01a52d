"""
Configuration settings for the EventNLOS toolkit
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings"""

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_STREAM: str = "stderr"
    DEBUG: bool = False

    # Artifacts
    OUT_DIR: str = "out"

    # Reproducibility / throughput
    DEFAULT_SEED: int = 0
    WORKERS: int = 1

    # Dataset generation
    DEFAULT_PROFILE: str = "desk"

    class Config:
        env_file = ".env"
        case_sensitive = True


# Global settings instance
settings = Settings()
