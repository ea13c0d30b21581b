"""Parametric sketch kernel, sketch-extrude solids and evaluation metrics."""

import json

from ._core import (
    CadkitError,
    Sketch,
    Solid,
    SolveResult,
    accuracy,
    cf1,
    chamfer,
    pf1,
)
from ._core import run_scripted as _run_scripted

__all__ = [
    "CadkitError",
    "Sketch",
    "Solid",
    "SolveResult",
    "accuracy",
    "cf1",
    "chamfer",
    "pf1",
    "run_scripted",
]

__version__ = "0.1.0"


def run_scripted(fixture, query=None, budget=16):
    """Replay a scripted agent fixture.

    Returns a dict with status, transcript (list of step dicts), sketch and solid.
    """
    status, jsonl, sketch, solid = _run_scripted(str(fixture), query, budget)
    steps = [json.loads(line) for line in jsonl.splitlines() if line]
    return {"status": status, "transcript": steps, "sketch": sketch, "solid": solid}
