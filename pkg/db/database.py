from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker

from core.settings import get_settings
from .models import Base, RunLog

DATABASE_URL = get_settings().database_url


def _connect_args(url: str) -> dict:
    return {"check_same_thread": False} if url.startswith("sqlite") else {}


engine = create_engine(DATABASE_URL, connect_args=_connect_args(DATABASE_URL))
SessionLocal = sessionmaker(bind=engine, autoflush=False, autocommit=False)

def init_db():
    Base.metadata.create_all(bind=engine)

# Dependency
def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def save_run(db: Session, **fields) -> RunLog:
    entry = RunLog(**fields)
    db.add(entry)
    db.commit()
    db.refresh(entry)
    return entry
