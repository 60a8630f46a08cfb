"""
db.py — Database Engine & Session Setup
----------------------------------------

This module initializes the SQLAlchemy connection for the run registry.

Features:
- Creates database engine using DATABASE_URL from project settings
- Defines `SessionLocal` for transaction management
- Provides `init_db()` to create tables based on ORM models

Dependencies:
- SQLAlchemy for ORM and engine management
- Project settings for environment-based configuration
"""

from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.engine import make_url
from sqlalchemy.orm import declarative_base, sessionmaker

from config.settings import DATABASE_URL

if not DATABASE_URL:
    raise RuntimeError("DATABASE_URL is not set. Check your .env or environment variables.")


# --- ORM Base Class ---
Base = declarative_base()

# --- Database Engine ---
_url = make_url(DATABASE_URL)
if _url.get_backend_name() == "sqlite" and _url.database not in (None, "", ":memory:"):
    Path(_url.database).parent.mkdir(parents=True, exist_ok=True)

engine = create_engine(DATABASE_URL)

# --- Session Factory ---
SessionLocal = sessionmaker(bind=engine)


def init_db():
    """
    Initializes the database by creating all tables defined in ORM models.
    Safe to run multiple times; only creates tables if they don't exist.
    """
    from db import run_model  # noqa: F401  registers the tables on Base

    Base.metadata.create_all(engine)
