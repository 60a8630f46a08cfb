"""
run_registry.py — Run bookkeeping
----------------------------------

Every command opens a registry row when it starts, attaches its scalar metrics and
closes the row with a final status. Registry failures are logged and never abort the
experiment itself.
"""

import logging
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence

from pydantic import BaseModel
from sqlalchemy import select
from sqlalchemy.exc import SQLAlchemyError

from db.db import SessionLocal, init_db
from db.run_model import Run, RunMetric

logger = logging.getLogger(__name__)

_initialized = False


class RunSummary(BaseModel):
    run_id: int
    command: str
    seeds: List[int]
    config_hash: Optional[str]
    status: str
    output_dir: Optional[str]
    message: Optional[str]
    created_at: Optional[datetime]
    finished_at: Optional[datetime]
    metrics: Dict[str, Dict[str, float]] = {}


def _ensure_tables():
    global _initialized
    if not _initialized:
        init_db()
        _initialized = True


def start_run(command: str, seeds: Sequence[int], config_hash: str, output_dir: str) -> Optional[int]:
    try:
        _ensure_tables()
        with SessionLocal() as session:
            run = Run(
                command=command,
                seeds=",".join(str(s) for s in seeds),
                config_hash=config_hash,
                status="running",
                output_dir=output_dir,
            )
            session.add(run)
            session.commit()
            return run.run_id
    except SQLAlchemyError as e:
        logger.warning("Run registry unavailable: %s", e)
        return None


def record_metrics(run_id: Optional[int], scope: str, metrics: Dict[str, float]):
    if run_id is None:
        return
    try:
        with SessionLocal() as session:
            session.add_all([
                RunMetric(run_id=run_id, scope=scope, name=name, value=float(value))
                for name, value in metrics.items()
                if value is not None
            ])
            session.commit()
    except SQLAlchemyError as e:
        logger.warning("Could not record metrics for run %s: %s", run_id, e)


def finish_run(run_id: Optional[int], status: str, message: Optional[str] = None):
    if run_id is None:
        return
    try:
        with SessionLocal() as session:
            run = session.get(Run, run_id)
            if run is None:
                logger.warning("Run %s not found in registry", run_id)
                return
            run.status = status
            run.message = message
            run.finished_at = datetime.now(timezone.utc)
            session.commit()
    except SQLAlchemyError as e:
        logger.warning("Could not close run %s: %s", run_id, e)


def list_runs(command: Optional[str] = None, limit: int = 50) -> List[RunSummary]:
    _ensure_tables()
    with SessionLocal() as session:
        query = select(Run)
        if command:
            query = query.where(Run.command == command)
        query = query.order_by(Run.run_id.desc()).limit(limit)
        runs = session.scalars(query).all()
        summaries = []
        for run in runs:
            metrics: Dict[str, Dict[str, float]] = {}
            for m in run.metrics:
                metrics.setdefault(m.scope, {})[m.name] = m.value
            summaries.append(RunSummary(
                run_id=run.run_id,
                command=run.command,
                seeds=[int(s) for s in run.seeds.split(",") if s] if run.seeds else [],
                config_hash=run.config_hash,
                status=run.status,
                output_dir=run.output_dir,
                message=run.message,
                created_at=run.created_at,
                finished_at=run.finished_at,
                metrics=metrics,
            ))
        return summaries
