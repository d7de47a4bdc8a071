"""
io.py

JSON / CSV 書き出しの小さなヘルパ。出力先ディレクトリは自動で作る。
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import pandas as pd

from sparx_illc.errors import DataFileNotFoundError, DataParseError

logger = logging.getLogger(__name__)


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")
    logger.debug("wrote %s", path)
    return path


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise DataFileNotFoundError(f"ファイルが見つかりません: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataParseError(f"{path} を JSON として読めません: {e.msg}", row=e.lineno) from e


def write_csv(path: Path, frame: pd.DataFrame, append: bool = False) -> Path:
    """append=True のときは既存ファイルに追記し、ヘッダは新規作成時のみ書く。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exists = path.exists()
    frame.to_csv(
        path,
        index=False,
        mode="a" if append else "w",
        header=not (append and exists),
    )
    logger.debug("wrote %d rows to %s", len(frame), path)
    return path


def sidecar_path(model_path: Path, suffix: str) -> Path:
    """m.json → m.<suffix>.json"""
    model_path = Path(model_path)
    return model_path.with_name(f"{model_path.stem}.{suffix}.json")
