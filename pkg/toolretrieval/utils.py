import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def read_jsonl(path):
    """Yield ``(line_number, record)`` for every non-blank line; raises ``ValueError`` with the line number."""
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {number}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ValueError(f"line {number}: expected an object")
            yield number, record


def dumps_canonical(record):
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _file_mode():
    """Mode a plain ``open()`` would give a new file under the current umask."""
    umask = os.umask(0)
    os.umask(umask)
    return 0o666 & ~umask


def write_atomic_bytes(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        # mkstemp creates 0600 files
        os.chmod(tmp, _file_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_atomic(path, text):
    write_atomic_bytes(path, text.encode("utf-8"))


def write_jsonl(path, records):
    write_atomic(path, "".join(dumps_canonical(r) + "\n" for r in records))


def write_json(path, payload):
    write_atomic(path, json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n")


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def seeded_rng(seed):
    return np.random.default_rng(seed)


def seeded_choice(items, seed):
    """Uniform choice from a non-empty sequence, reproducible for a fixed seed."""
    if not items:
        raise ValueError("cannot choose from an empty sequence")
    index = int(seeded_rng(seed).integers(len(items)))
    return items[index]
