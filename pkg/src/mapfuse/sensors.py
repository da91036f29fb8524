"""Raw sensor sample containers shared across pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geom import GeoCoordinate


class FixQuality(IntEnum):
    NONE = 0
    FLOAT = 1
    RTK_FIXED = 2


@dataclass
class GnssFix:
    stamp: float
    geo: GeoCoordinate
    fix_quality: FixQuality = FixQuality.RTK_FIXED
    num_sv: int = 12
    pdop: float = 1.5

    def __post_init__(self):
        if not (np.isfinite(self.pdop) and self.pdop > 0):
            raise ValueError("pdop must be finite and positive")
        if self.num_sv < 0:
            raise ValueError("num_sv must be non-negative")


@dataclass
class ImuSample:
    stamp: float
    gyro: np.ndarray   # rad/s, body frame
    accel: np.ndarray  # m/s^2, specific force, body frame

    def __post_init__(self):
        self.gyro = np.asarray(self.gyro, dtype=float).reshape(3)
        self.accel = np.asarray(self.accel, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.gyro)) and np.all(np.isfinite(self.accel))):
            raise ValueError("non-finite IMU sample")
