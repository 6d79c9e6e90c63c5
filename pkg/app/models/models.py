from sqlalchemy import Column, DateTime, Integer, String
from sqlalchemy.sql import func

from .database import Base


class RunLog(Base):
    __tablename__ = "run_logs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String(32), index=True, nullable=False)  # fit, reduce, simulate, analyze, features
    sample_id = Column(String(512), nullable=True)
    input_sha256 = Column(String(64), nullable=True)
    output_dir = Column(String(1024), nullable=True)
    status = Column(String(50), nullable=False, default='Success')  # Success, Failed
    error_code = Column(String(64), nullable=True)
    message = Column(String(1024), nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    def __repr__(self):
        return f"<RunLog(id={self.id}, command='{self.command}', sample='{self.sample_id}', status='{self.status}')>"
