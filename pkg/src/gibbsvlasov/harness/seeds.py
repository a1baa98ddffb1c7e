"""Seed derivation.

A master seed fans out into per-stage streams with a counter scheme::

    SeedSequence(master, spawn_key=(stage_code(stage), item))

``stage_code`` is the CRC-32 of the stage name, so adding stages never
shifts existing streams, and ``item`` counts work items (replica blocks,
``(N, beta)`` points, ...) within a stage.  Any stage or item can be
regenerated on its own.
"""
from __future__ import annotations

import zlib

import numpy as np


def stage_code(stage: str) -> int:
    return zlib.crc32(stage.encode("utf-8"))


def stage_seed(master: int, stage: str, item: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(stage_code(stage), int(item)))


def seed_record(master: int, stage: str, items) -> dict:
    """Manifest entry describing the streams used by a stage."""
    return {"master": int(master), "stage": stage, "stage_code": stage_code(stage),
            "items": [int(i) for i in items]}
