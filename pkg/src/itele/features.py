"""Traffic-profile attributes: idle fraction, mean rate and multi-timescale
coefficient of variation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIMESCALES = (1, 2, 4, 8, 16)
MIN_WINDOWS = 4
ATTRIBUTE_NAMES = ("idle", "mean_rate", "cv1", "cv2", "cv4", "cv8", "cv16")

# 1-based inclusive second ranges over a 128 s profile
SUBPROFILE_WINDOWS = (
    (1, 16), (1, 32), (1, 48), (1, 64),
    (17, 80), (33, 96), (49, 112), (65, 128),
)
PROFILE_SECONDS = 128


class WrongLength(ValueError):
    pass


@dataclass(frozen=True)
class TrafficProfile:
    """Per-second byte counts; bin i covers [start_time + i, start_time + i + 1)."""

    start_time: float
    bins: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=float)
        if b.ndim != 1 or len(b) < 1:
            raise ValueError("profile needs at least one bin")
        if (b < 0).any():
            raise ValueError("profile bins must be non-negative")
        b.setflags(write=False)
        object.__setattr__(self, "bins", b)

    def __len__(self):
        return len(self.bins)

    def window(self, first: int, last: int) -> "TrafficProfile":
        """Sub-profile over 1-based inclusive seconds [first, last]."""
        return TrafficProfile(self.start_time + first - 1, self.bins[first - 1:last])


@dataclass(frozen=True)
class AttributeVector:
    idle: float
    mean_rate: float
    cv1: float | None = None
    cv2: float | None = None
    cv4: float | None = None
    cv8: float | None = None
    cv16: float | None = None

    def as_array(self) -> np.ndarray:
        """Values in ATTRIBUTE_NAMES order, NaN where unavailable."""
        return np.array([np.nan if v is None else v for v in self.values()], dtype=float)

    def values(self) -> tuple:
        return (self.idle, self.mean_rate, self.cv1, self.cv2, self.cv4, self.cv8, self.cv16)

    def available_timescales(self) -> set:
        return {k for k, v in zip(TIMESCALES, self.values()[2:]) if v is not None}


def _bins(profile) -> np.ndarray:
    if isinstance(profile, TrafficProfile):
        return profile.bins
    b = np.asarray(profile, dtype=float)
    if len(b) < 1:
        raise ValueError("profile needs at least one bin")
    return b


def idle_fraction(profile) -> float:
    b = _bins(profile)
    return float(np.count_nonzero(b == 0)) / len(b)


def mean_rate(profile) -> float:
    b = _bins(profile)
    return float(b.sum()) / len(b)


def cv(profile, k: int) -> float | None:
    """sigma_k / mu, where sigma_k is the population standard deviation of
    k-second window rates (trailing remainder dropped) and mu the mean rate of
    the whole profile. None when fewer than 4 windows fit or mu is zero."""
    if k not in TIMESCALES:
        raise ValueError(f"timescale must be one of {TIMESCALES}")
    b = _bins(profile)
    n = len(b) // k
    mu = mean_rate(b)
    if n < MIN_WINDOWS or mu == 0:
        return None
    rates = b[: n * k].reshape(n, k).sum(axis=1) / k
    return float(rates.std() / mu)


def attributes(profile) -> AttributeVector:
    b = _bins(profile)
    return AttributeVector(idle_fraction(b), mean_rate(b), *(cv(b, k) for k in TIMESCALES))


def make_subprofiles(profile: TrafficProfile) -> list:
    if len(profile) != PROFILE_SECONDS:
        raise WrongLength(f"expected {PROFILE_SECONDS} bins, got {len(profile)}")
    return [profile.window(a, b) for a, b in SUBPROFILE_WINDOWS]
