import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Optional

LOG_FILENAME = 'system.log'


def setup_logging(log_dir: Optional[str] = None, console_level: str = 'INFO'):
    """Configures the root logger for the application."""
    if log_dir is None:
        from config.settings import Settings
        log_dir = Settings().log_dir

    # 确保日志目录存在
    os.makedirs(log_dir, exist_ok=True)
    log_file_path = os.path.join(log_dir, LOG_FILENAME)

    log_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # 文件处理器(循环)
    # 当日志达到10MB时进行循环,保留5个备份日志
    file_handler = RotatingFileHandler(
        log_file_path, maxBytes=10*1024*1024, backupCount=5, encoding='utf-8'
    )
    file_handler.setFormatter(log_formatter)
    file_handler.setLevel(logging.INFO)

    # 控制台处理器, 输出到 stderr, 不污染 stdout
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(log_formatter)
    console_handler.setLevel(getattr(logging, console_level.upper(), logging.INFO))

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)

    # 避免多次调用setup_logging时重复添加处理器
    if not root_logger.handlers:
        root_logger.addHandler(file_handler)
        root_logger.addHandler(console_handler)
        root_logger.info(f"Logging configured: writing to {log_file_path}.")
    else:
        file_handler.close()


# 用于在其他模块中获取日志记录器实例的函数
def get_logger(name):
    """Gets a logger instance with the specified name."""
    return logging.getLogger(name)
