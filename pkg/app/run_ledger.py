"""CRUD for the run ledger. Ledger failures are logged and never abort a command."""
from typing import List, Optional

from sqlalchemy.orm import Session

from config.logging_config import get_logger
from .models import database
from .models.models import RunLog

logger = get_logger(__name__)


def create_run_log(
    db: Session,
    command: str,
    sample_id: Optional[str] = None,
    input_sha256: Optional[str] = None,
    output_dir: Optional[str] = None,
    status: str = 'Success',
    error_code: Optional[str] = None,
    message: Optional[str] = None,
) -> Optional[RunLog]:
    """Creates a new run log entry."""
    logger.debug(f"Creating run log for command: {command}, sample: {sample_id}, status: {status}")
    entry = RunLog(
        command=command,
        sample_id=sample_id,
        input_sha256=input_sha256,
        output_dir=output_dir,
        status=status,
        error_code=error_code,
        message=message[:1024] if message else None,
    )
    db.add(entry)
    try:
        db.commit()
        db.refresh(entry)
        logger.debug(f"Run log created successfully (ID: {entry.id}).")
        return entry
    except Exception as e:
        db.rollback()
        logger.error(f"Error creating run log for {command}/{sample_id}: {e}", exc_info=True)
        return None


def get_run_logs(db: Session, command: Optional[str] = None, limit: int = 100, offset: int = 0) -> List[RunLog]:
    """Most recent entries first."""
    logger.debug(f"Querying for run logs (command: {command}, limit: {limit}, offset: {offset}).")
    query = db.query(RunLog)
    if command:
        query = query.filter(RunLog.command == command)
    return query.order_by(RunLog.id.desc()).offset(offset).limit(limit).all()


def record_run(command: str, **fields) -> Optional[RunLog]:
    """Opens a session on the configured ledger and appends one entry."""
    try:
        if database.engine is None:
            database.init_db()
        gen = database.get_db()
        db = next(gen)
        try:
            return create_run_log(db, command, **fields)
        finally:
            gen.close()
    except Exception as e:
        logger.warning(f"Run ledger unavailable, entry for '{command}' not recorded: {e}")
        return None
