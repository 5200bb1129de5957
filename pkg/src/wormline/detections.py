"""Detection JSON interchange: one document per image, listing each worm's
ordered path and endpoint pair. This is the contract between the untangling
stage, mask reconstruction, and evaluation."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import FormatError
from .untangle import WormSkeleton

__all__ = ["worms_to_json", "worms_from_json", "save_detections", "load_detections"]


def worms_to_json(image_name: str, worms) -> dict:
    entries = []
    for i, worm in enumerate(worms):
        skeleton = getattr(worm, "skeleton", worm)
        entries.append(
            {
                "id": i + 1,
                "path": [[int(r), int(c)] for r, c in skeleton.path],
                "endpoints": [
                    [int(skeleton.endpoints[0][0]), int(skeleton.endpoints[0][1])],
                    [int(skeleton.endpoints[1][0]), int(skeleton.endpoints[1][1])],
                ],
            }
        )
    return {"image": image_name, "worms": entries}


def worms_from_json(doc: dict) -> list[WormSkeleton]:
    try:
        out = []
        for entry in doc.get("worms", []):
            path = tuple((int(r), int(c)) for r, c in entry["path"])
            out.append(WormSkeleton(path=path, endpoints=(path[0], path[-1])))
        return out
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed detections document: {exc}") from exc


def save_detections(image_name: str, worms, path: str | Path) -> None:
    Path(path).write_text(json.dumps(worms_to_json(image_name, worms), indent=1))


def load_detections(path: str | Path) -> list[WormSkeleton]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable detections JSON ({exc})") from exc
    return worms_from_json(doc)
