"""Fetch MovieLens-100K into the ``user::item::rating::timestamp`` layout.

The ratings file is taken from the ``recbole`` wheel on PyPI, which ships the
full MovieLens-100K interaction table (100,000 ratings, 943 users, 1,682
items) as tab-separated text. Only the package index needs to be reachable.
"""

from __future__ import annotations

import hashlib
import io
import logging
import re
import urllib.parse
import urllib.request
import zipfile
from pathlib import Path

_logger = logging.getLogger(__name__)

WHEEL_PROJECT = "recbole"
WHEEL_VERSION = "1.2.1"
MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"
INDEX = "https://pypi.org/simple/{project}/"
WHEEL_SHA256 = "9c9948202011f37eb0a7c6768129313f00d6403ad221ec940d5e2d5d5f33a407"
ML100K_RATINGS = 100_000


def _wheel_url() -> str:
    index = INDEX.format(project=WHEEL_PROJECT)
    with urllib.request.urlopen(index, timeout=60) as r:
        page = r.read().decode("utf-8")
    name = re.escape(f"{WHEEL_PROJECT}-{WHEEL_VERSION}-py3-none-any.whl")
    match = re.search(rf'href="([^"#]*{name})#sha256=([0-9a-f]+)"', page)
    if match is None:
        raise RuntimeError(f"{WHEEL_PROJECT}=={WHEEL_VERSION} wheel not found at {index}")
    return urllib.parse.urljoin(index, match.group(1))


def convert_inter(text: str) -> str:
    """Turn the tab-separated ``.inter`` table into ``::``-delimited lines."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("user_id"):
        raise ValueError("unexpected ml-100k.inter header")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        user, item, rating, ts = line.split("\t")[:4]
        out.append(f"{user}::{item}::{int(float(rating))}::{int(float(ts))}")
    return "\n".join(out) + "\n"


def fetch_ml100k(dest="data/ml-100k", force: bool = False) -> Path:
    """Download (once) and return the path of ``ratings.dat``."""
    dest = Path(dest)
    target = dest / "ratings.dat"
    if target.exists() and not force:
        return target
    url = _wheel_url()
    _logger.info("downloading %s", url)
    with urllib.request.urlopen(url, timeout=300) as r:
        blob = r.read()
    if hashlib.sha256(blob).hexdigest() != WHEEL_SHA256:
        raise RuntimeError("checksum mismatch for downloaded wheel")
    with zipfile.ZipFile(io.BytesIO(blob)) as z:
        text = z.read(MEMBER).decode("utf-8")
    body = convert_inter(text)
    if body.count("\n") != ML100K_RATINGS:
        raise RuntimeError("unexpected number of ratings in ml-100k")
    dest.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(".tmp")
    tmp.write_text(body, encoding="utf-8")
    tmp.replace(target)
    return target
