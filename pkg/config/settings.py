import os
from typing import Literal, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# 加载 .env 文件
load_dotenv()

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))


class Settings(BaseSettings):
    # 从 .env 文件和 SYMDYN_ 前缀的环境变量加载运行时配置
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding='utf-8',
        env_prefix="SYMDYN_",
        case_sensitive=False,
        extra='ignore'
    )

    # Parallelism cap for batch commands and Monte-Carlo trials (SYMDYN_THREADS)
    threads: int = Field(default=1, ge=1)

    # Logging
    log_dir: str = os.path.join(PROJECT_ROOT, 'logs')
    log_level: str = 'INFO'

    # Run ledger
    record_runs: bool = True
    ledger_url: Optional[str] = None

    # 使用 computed_field 构建的数据库 URL
    @computed_field
    @property
    def database_url(self) -> str:
        if self.ledger_url:
            return self.ledger_url
        return f"sqlite:///{os.path.join(self.log_dir, 'runs.db')}"


class PipelineConfig(BaseModel):
    """Analysis parameters. Serialized verbatim into every output for provenance."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    # Symbolization
    alphabet_size: int = Field(default=3, ge=2)
    normalize_first: bool = True
    mep_on_downsampled: bool = True
    max_lag: Optional[int] = Field(default=None, ge=1)

    # Depth estimation
    epsilon: float = Field(default=0.05, gt=0.0, lt=1.0)
    d_max: int = Field(default=8, ge=1)
    depth_floor: int = Field(default=1, ge=1)

    # Estimation and reduction
    prior_weight: float = Field(default=1.0, ge=0.0)
    weighting: Literal['stationary', 'empirical'] = 'stationary'
    criterion: Literal['aic', 'bic', 'bound'] = 'bic'
    n_min: Optional[int] = Field(default=None, ge=1)
    n_max: Optional[int] = Field(default=None, ge=1)
    bound_threshold: float = Field(default=0.1, ge=0.0)

    # Distortion analysis
    seed: int = Field(default=0, ge=0)
    bound_length: int = Field(default=1000, ge=2)
    simulate_length: int = Field(default=1000, ge=2)
    trials: int = Field(default=100, ge=1)

    # Anomaly metrics
    one_sided_discrepancy: bool = False
    metric_clusters: int = Field(default=4, ge=1)

    # Input parsing
    input_format: Literal['csv', 'float32', 'float64'] = 'csv'
    column: int = Field(default=0, ge=0)
    skip_header: bool = False

    @model_validator(mode='after')
    def check_ranges(self) -> 'PipelineConfig':
        if self.depth_floor > self.d_max:
            raise ValueError(f"depth_floor ({self.depth_floor}) must not exceed d_max ({self.d_max}).")
        if self.n_min is not None and self.n_max is not None and self.n_min > self.n_max:
            raise ValueError(f"n_min ({self.n_min}) must not exceed n_max ({self.n_max}).")
        return self

    @classmethod
    def from_yaml(cls, path: str, **overrides) -> 'PipelineConfig':
        """Loads a config from a YAML mapping; explicit overrides win over file values."""
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"Config file {path} must contain a mapping, got {type(data).__name__}.")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

# 配置加载说明:
# 1. Settings 从环境变量 (SYMDYN_*) 和 .env 文件加载运行时配置
# 2. PipelineConfig 是分析参数, 默认值 < YAML 文件 < 命令行参数
# 3. PipelineConfig 不可变, 会完整写入每个输出文件
