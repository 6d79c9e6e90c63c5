import os
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine, make_url
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.pool import NullPool  # 每次操作独立连接, 适合命令行短进程

from config.logging_config import get_logger

logger = get_logger(__name__)

# 声明模型的基类
Base = declarative_base()

engine: Optional[Engine] = None
SessionLocal = None


def configure(database_url: Optional[str] = None) -> Engine:
    """Creates the ledger engine; without a URL the one from Settings is used."""
    global engine, SessionLocal
    if database_url is None:
        from config.settings import Settings  # 延迟导入, 避免循环依赖
        database_url = Settings().database_url
    url = make_url(database_url)
    # SQLite 文件所在目录需要先存在
    if url.get_backend_name() == 'sqlite' and url.database and url.database != ':memory:':
        directory = os.path.dirname(os.path.abspath(url.database))
        os.makedirs(directory, exist_ok=True)
    engine = create_engine(database_url, poolclass=NullPool, echo=False)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    logger.debug(f"Run ledger engine configured for {url.render_as_string(hide_password=True)}.")
    return engine


def get_db():
    """依赖函数以获取数据库会话。"""
    if SessionLocal is None:
        configure()
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def init_db(database_url: Optional[str] = None) -> Engine:
    """通过创建表来初始化数据库。"""
    if database_url is not None or engine is None:
        configure(database_url)
    try:
        # 在调用 create_all 之前导入所有模型, 以注册到 Base 元数据中
        from . import models  # noqa: F401
        Base.metadata.create_all(bind=engine)
        logger.debug("Run ledger tables are present.")
    except Exception as e:
        logger.error(f"Error initializing the run ledger: {e}", exc_info=True)
        raise
    return engine
