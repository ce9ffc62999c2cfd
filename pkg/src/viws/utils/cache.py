import json
import logging
import os
from pathlib import Path
from typing import Optional

from peewee import SQL, AutoField, CharField, Model, SqliteDatabase, TextField

# we don't init the database here
db = SqliteDatabase(None)
logger = logging.getLogger(__name__)

CACHE_DB_NAME = ".viws-cache.v1.db"


class _SynthesisRecord(Model):
    id = AutoField()
    video_id = CharField(max_length=128)
    spec_fingerprint = TextField()
    digest = CharField(max_length=64)

    class Meta:
        database = db
        constraints = [
            SQL(
                """
            UNIQUE (
                video_id,
                spec_fingerprint
                )
            ON CONFLICT REPLACE
            """
            )
        ]


class SynthesisCache:
    """Remembers which degraded videos were produced from which spec."""

    @staticmethod
    def _sort_dict_recursively(obj):
        if isinstance(obj, dict):
            return {
                k: SynthesisCache._sort_dict_recursively(obj[k])
                for k in sorted(obj.keys())
            }
        elif isinstance(obj, list):
            return [SynthesisCache._sort_dict_recursively(item) for item in obj]
        return obj

    @classmethod
    def fingerprint(cls, params: dict) -> str:
        return json.dumps(cls._sort_dict_recursively(params))

    # peewee and sqlite are thread-safe, get/set need no locks
    def get(self, video_id: str, params: dict) -> Optional[str]:
        result = _SynthesisRecord.get_or_none(
            video_id=video_id,
            spec_fingerprint=self.fingerprint(params),
        )
        return result.digest if result else None

    def set(self, video_id: str, params: dict, digest: str):
        try:
            _SynthesisRecord.create(
                video_id=video_id,
                spec_fingerprint=self.fingerprint(params),
                digest=digest,
            )
        except Exception as e:
            logger.debug(f"Error setting cache: {e}")


def init_db(out_root: str | Path):
    # The current version does not support database migration, so add the version number to the file name.
    cache_db_path = os.path.join(str(out_root), CACHE_DB_NAME)
    os.makedirs(str(out_root), exist_ok=True)
    if not db.is_closed():
        db.close()
    db.init(
        cache_db_path,
        pragmas={
            "journal_mode": "wal",
            "busy_timeout": 1000,
        },
    )
    db.connect(reuse_if_open=True)
    db.create_tables([_SynthesisRecord], safe=True)


def close_db():
    if not db.is_closed():
        db.close()


def init_test_db():
    import tempfile

    cache_db_path = tempfile.mktemp(suffix=".db")
    test_db = SqliteDatabase(
        cache_db_path,
        pragmas={
            "journal_mode": "wal",
            "busy_timeout": 1000,
        },
    )
    test_db.bind([_SynthesisRecord], bind_refs=False, bind_backrefs=False)
    test_db.connect()
    test_db.create_tables([_SynthesisRecord], safe=True)
    return test_db


def clean_test_db(test_db):
    test_db.drop_tables([_SynthesisRecord])
    test_db.close()
    db_path = test_db.database
    if os.path.exists(db_path):
        os.remove(test_db.database)
    wal_path = db_path + "-wal"
    if os.path.exists(wal_path):
        os.remove(wal_path)
    shm_path = db_path + "-shm"
    if os.path.exists(shm_path):
        os.remove(shm_path)
    # rebind to the process-wide database
    db.bind([_SynthesisRecord], bind_refs=False, bind_backrefs=False)
