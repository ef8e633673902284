from typing import Optional

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="FIELD_RECON_", env_file=".env", env_file_encoding="utf-8"
    )

    log_level: str = "INFO"
    log_file: Optional[str] = None

    default_seed: int = 0
    output_dir: str = "generated"

    debug: bool = False


settings = Settings()
