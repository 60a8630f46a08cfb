"""
run_model.py — Run Registry ORM Models
---------------------------------------

Tables:
- `eegdm_run`: one row per command invocation (command, seed list, config hash, status,
  output directory, timestamps)
- `eegdm_run_metric`: scalar metrics reported by a run, keyed by scope (for example
  `seed=0`, `subject=S02`, `aggregate`) and metric name

Dependencies:
- SQLAlchemy ORM
"""

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, Text
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func

from db.db import Base


class Run(Base):
    """
    Table: eegdm_run

    Status moves from `running` to `ok`, `invalid` (validation failure, exit code 2)
    or `diverged` (numerical failure, exit code 3).
    """
    __tablename__ = "eegdm_run"

    run_id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(Text, nullable=False)
    seeds = Column(Text)  # comma-separated
    config_hash = Column(Text)
    status = Column(Text, nullable=False, default="running")
    output_dir = Column(Text)
    message = Column(Text)
    created_at = Column(DateTime, server_default=func.now())
    finished_at = Column(DateTime)

    metrics = relationship("RunMetric", back_populates="run", cascade="all, delete-orphan")


class RunMetric(Base):
    """
    Table: eegdm_run_metric
    """
    __tablename__ = "eegdm_run_metric"

    metric_id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("eegdm_run.run_id"), nullable=False, index=True)
    scope = Column(Text, nullable=False)
    name = Column(Text, nullable=False)
    value = Column(Float)

    run = relationship("Run", back_populates="metrics")
