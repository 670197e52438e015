import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class Config:
    path: str
    seed: int = 0


def load(cfg):
    with open(cfg.path) as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    return {r["id"]: r for r in rows}


def summarize(rows):
    total = 0
    for key, row in sorted(rows.items()):
        try:
            total += float(row.get("value", 0))
        except ValueError:
            continue
    return total / max(len(rows), 1)


if __name__ == "__main__":
    cfg = Config(path=str(Path("data") / "rows.jsonl"))
    print(f"mean value: {summarize(load(cfg)):.3f}")
