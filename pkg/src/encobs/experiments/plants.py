"""Named plants available to experiment configs."""
from __future__ import annotations

import numpy as np

from ..matrix_time import ContinuousRealization
from ..plant import STUDY_PARAMS, DcMotorParams, dc_motor

__all__ = ["PLANTS", "resolve_plant", "UnknownPlant"]


class UnknownPlant(KeyError):
    pass


PLANTS = {
    # inertia as used for the reported study (see plant.STUDY_PARAMS)
    "dc_motor": lambda: dc_motor(STUDY_PARAMS),
    # parameters exactly as printed
    "dc_motor_printed": lambda: dc_motor(DcMotorParams()),
}


def resolve_plant(spec) -> ContinuousRealization:
    """A registered name, or a mapping with matrices A, B, C, K, L."""
    if isinstance(spec, str):
        try:
            return PLANTS[spec]()
        except KeyError:
            raise UnknownPlant(f"unknown plant {spec!r}; known: {', '.join(sorted(PLANTS))}") from None
    if isinstance(spec, dict):
        try:
            mats = {k: np.atleast_2d(np.asarray(spec[k], dtype=float)) for k in "ABCKL"}
        except KeyError as exc:
            raise UnknownPlant(f"custom plant is missing matrix {exc}") from None
        return ContinuousRealization(**mats)
    raise UnknownPlant(f"cannot interpret plant {spec!r}")
