from pydantic_settings import BaseSettings, SettingsConfigDict

from dpn import __version__


class Settings(BaseSettings):
    """Process-wide settings read from the environment (DPN_*) and `.env`."""

    model_config = SettingsConfigDict(
        env_prefix="DPN_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    app_name: str = "DPN-S2S"
    app_version: str = __version__
    log_level: str = "INFO"

    runs_dir: str = "./runs"
    run_slow: bool = False


settings = Settings()
