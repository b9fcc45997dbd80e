from sqlalchemy import Column, Integer, String, DateTime, Float, Text
from sqlalchemy.orm import declarative_base
from datetime import datetime

Base = declarative_base()

class RunLog(Base):
    __tablename__ = "run_logs"
    id           = Column(Integer, primary_key=True, index=True)
    command      = Column(String, index=True, nullable=False)
    config_path  = Column(Text, nullable=True)
    config_hash  = Column(String(64), index=True, nullable=True)
    seed         = Column(String, nullable=True)
    threads      = Column(Integer, default=1)
    exit_code    = Column(Integer, nullable=False)
    error        = Column(Text, nullable=True)
    wall_time    = Column(Float, nullable=False)
    out_dir      = Column(Text, nullable=True)
    timestamp    = Column(DateTime, default=datetime.utcnow)
