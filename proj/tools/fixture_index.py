#!/usr/bin/env python3
"""Rewrite tests/fixtures/index.json with the FNV-1a 64 digest of every fixture."""
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"

NOTES = {
    "published_counts.csv": ("published", "published confusion counts with their four scores"),
    "metric_cases.csv": ("hand", "metric values evaluated by hand"),
    "separable_d6.csv": ("generated", "gen-synthetic --classes 3 --dim 6 --separation 0.2 --n 30 --seed 5"),
    "separable_d6.ked": ("generated", "same rows as separable_d6.csv in KED1"),
    "separable_d6_protos.csv": ("generated", "prototypes behind separable_d6.csv"),
    "clusters_f8.csv": ("generated", "gen-synthetic --classes 2 --features 8 --n 200 --seed 1 --spread 6"),
}


def fnv1a64(data: bytes) -> str:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def main() -> None:
    entries = []
    for name, (origin, what) in sorted(NOTES.items()):
        entries.append({
            "file": name,
            "fnv1a64": fnv1a64((ROOT / name).read_bytes()),
            "origin": origin,
            "what": what,
        })
    (ROOT / "index.json").write_text(json.dumps({"fixtures": entries}, indent=2) + "\n")


if __name__ == "__main__":
    main()
