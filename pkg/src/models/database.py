import logging
import sqlite3

from sqlalchemy import create_engine, event
from sqlalchemy.engine import Engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import declarative_base, sessionmaker

from src.errors import DatasetIOError

logger = logging.getLogger(__name__)

# Declarative base for the run ledger tables
Base = declarative_base()


@event.listens_for(Engine, "connect")
def set_sqlite_pragma(dbapi_connection, connection_record):
    # Apply only for SQLite
    if isinstance(dbapi_connection, sqlite3.Connection):
        cursor = dbapi_connection.cursor()
        # WAL lets parallel reproduce workers write while others read
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.execute("PRAGMA synchronous=NORMAL")
        cursor.execute("PRAGMA busy_timeout=5000")  # ms
        cursor.close()


def ledger_url(path):
    """SQLite URL for a ledger path; full SQLAlchemy URLs pass through."""
    path = str(path)
    return path if '://' in path else f'sqlite:///{path}'


def init_db(path):
    """Create the ledger tables if needed and return a session factory"""
    # models must be imported so their tables register on Base
    from src.models import run  # noqa: F401

    try:
        engine = create_engine(ledger_url(path), future=True)
        Base.metadata.create_all(engine)
    except SQLAlchemyError as exc:
        raise DatasetIOError(f'cannot open run ledger {path}: {exc}') from exc
    logger.debug('run ledger ready at %s', path)
    return sessionmaker(bind=engine, expire_on_commit=False)
