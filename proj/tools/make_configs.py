#!/usr/bin/env python3
"""Regenerate the bundled scenario configs in configs/.

Emits the 96-scenario full grid, the two desk-scale studies, a fast smoke
config and the two simple-setting tables. Deterministic: seeds are fixed
per file, so regenerating never changes shipped results.
"""

from __future__ import annotations

import json
from pathlib import Path

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

VARIANCES = (0.2, 1.0, 5.0)


def write(name: str, payload: dict) -> None:
    path = CONFIG_DIR / name
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def full_grid() -> None:
    seed = 90000
    for cm in ("kmeans", "gmm"):
        for clusters in (3, 4, 5):
            for components in (5, 9):
                for corr in (False, True):
                    for outcome in ("A", "B"):
                        for health in ("linear", "logistic"):
                            seed += 1
                            stem = (
                                f"full_{cm}_c{clusters}_m{components}_"
                                f"u{int(corr)}_{outcome}_"
                                f"{'lin' if health == 'linear' else 'log'}"
                            )
                            write(
                                stem + ".json",
                                {
                                    "id": stem,
                                    "datasets": 1000,
                                    "individuals": 1500,
                                    "components": components,
                                    "clusters": clusters,
                                    "cluster_method": cm,
                                    "correlated_u": corr,
                                    "outcome": outcome,
                                    "health": health,
                                    "gold_days": [7, 28],
                                    "imputations": 300,
                                    "seed": seed,
                                },
                            )


def desk_studies() -> None:
    for cm in ("kmeans", "gmm"):
        stem = f"desk_{cm}_c3_m5_u0_A_lin"
        write(
            stem + ".json",
            {
                "id": stem,
                "datasets": 100,
                "individuals": 500,
                "components": 5,
                "clusters": 3,
                "cluster_method": cm,
                "correlated_u": False,
                "outcome": "A",
                "health": "linear",
                "gold_days": [7, 28],
                "imputations": 300,
                "seed": 4242,
            },
        )


def smoke() -> None:
    write(
        "smoke.json",
        {
            "id": "smoke",
            "datasets": 2,
            "individuals": 150,
            "components": 5,
            "clusters": 2,
            "cluster_method": "kmeans",
            "correlated_u": False,
            "outcome": "A",
            "health": "linear",
            "gold_days": [7],
            "simex": {"zeta": [0.5, 1.0], "replicates": 30},
            "imputations": 30,
            "seed": 7,
        },
    )


def simple_tables() -> None:
    # Table layout: rows are (eH, u) pairs, columns sweep the report-error
    # variance, every variance drawn from {1/5, 1, 5}.
    cells = [
        [eh, eps, u] for eh in VARIANCES for u in VARIANCES for eps in VARIANCES
    ]
    for name, individuals, seed in (("simple_sm1", 200, 11), ("simple_sm2", 1000, 12)):
        write(
            name + ".json",
            {
                "id": name,
                "outcome": "simple",
                "components": 1,
                "datasets": 1000,
                "individuals": individuals,
                "cells": cells,
                "imputations": 300,
                "seed": seed,
            },
        )


def main() -> None:
    CONFIG_DIR.mkdir(parents=True, exist_ok=True)
    full_grid()
    desk_studies()
    smoke()
    simple_tables()


if __name__ == "__main__":
    main()
