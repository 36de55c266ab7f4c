"""Camera/Wi-Fi ratio at calibration choke points and crowd extrapolation.

At each choke point the ratio ``(count_in + count_out) / unique_devices`` is
computed per interval and smoothed with an exponentially weighted update. The
smoothed ratio scales device counts to people counts in the cluster's other
sensing areas. When the camera is inactive, an hour-of-day profile learned from
earlier days stands in for the live ratio.

The exponentially weighted update is one realisation of an adaptive linear
calibration; ``update_adaptive_ratio`` is the single place to swap it.
"""

from __future__ import annotations

import enum
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .aggregate import IntervalCount
from .errors import InsufficientData, NoRatioAvailable, ZeroWifiCount
from .ingest import CameraTick
from .model import Deployment, Interval, NodeKind

DEFAULT_ALPHA = 0.3


@dataclass(frozen=True)
class CalibrationRatio:
    choke_point_id: str
    interval: Interval
    ratio: float

    def __post_init__(self):
        if self.ratio < 0:
            raise ValueError("ratio must be non-negative")


@dataclass(frozen=True)
class HourProfile:
    profile_ratio: float
    support: int


@dataclass(frozen=True)
class RatioProfile:
    """Learned ratio per hour of day (or per (weekday, hour) when split)."""

    cluster_id: str
    hours: Mapping[object, HourProfile]
    by_weekday: bool = False

    def key_for(self, interval: Interval):
        if self.by_weekday:
            # 1970-01-01 was a Thursday; weekday 0 = Monday
            return ((interval.start // 86400 + 3) % 7, interval.hour_of_day)
        return interval.hour_of_day

    def ratio_for(self, interval: Interval) -> float:
        hp = self.hours.get(self.key_for(interval))
        if hp is None or hp.support < 1:
            raise NoRatioAvailable(f"profile of {self.cluster_id} unusable at {self.key_for(interval)}")
        return hp.profile_ratio

    @property
    def usable(self) -> list:
        return sorted(k for k, v in self.hours.items() if v.support >= 1)


class Method(str, enum.Enum):
    CHOKE_POINT_DIRECT = "ChokePointDirect"
    RATIO_EXTRAPOLATED = "RatioExtrapolated"
    PROFILE_EXTRAPOLATED = "ProfileExtrapolated"
    PRESENCE_COUNT = "PresenceCount"


@dataclass(frozen=True)
class CrowdEstimate:
    area_id: str
    interval: Interval
    people: float
    method: Method

    def __post_init__(self):
        if self.people < 0:
            raise ValueError("people must be non-negative")


def compute_ratio(tick: CameraTick, count: IntervalCount, choke_point_id: str | None = None) -> CalibrationRatio:
    if tick.interval != count.interval:
        raise ValueError("camera tick and Wi-Fi count cover different intervals")
    if count.unique_devices == 0:
        raise ZeroWifiCount(f"no Wi-Fi devices at {count.sensor_id} in {count.interval.start}")
    return CalibrationRatio(
        choke_point_id or tick.camera_id,
        tick.interval,
        (tick.count_in + tick.count_out) / count.unique_devices,
    )


def update_adaptive_ratio(prev: float | None, observed: CalibrationRatio | float, alpha: float = DEFAULT_ALPHA) -> float:
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    obs = observed.ratio if isinstance(observed, CalibrationRatio) else float(observed)
    if prev is None:
        return obs
    return (1 - alpha) * prev + alpha * obs


def learn_profile(ratios: Iterable[CalibrationRatio], cluster_id: str = "", by_weekday: bool = False) -> RatioProfile:
    """Median ratio per hour of day over all supplied days.

    Hours with no defined ratio are left out of the profile (unusable).
    """
    cells: dict[object, list[float]] = defaultdict(list)
    days: dict[object, set[int]] = defaultdict(set)
    probe = RatioProfile(cluster_id, {}, by_weekday)
    n = 0
    for r in ratios:
        k = probe.key_for(r.interval)
        cells[k].append(r.ratio)
        days[k].add(r.interval.start // 86400)
        n += 1
    if n == 0:
        raise InsufficientData("no defined ratios to learn a profile from")
    hours = {k: HourProfile(statistics.median(v), len(days[k])) for k, v in sorted(cells.items())}
    return RatioProfile(cluster_id, hours, by_weekday)


def estimate_crowd(
    count: IntervalCount,
    ratio: float | None = None,
    profile: RatioProfile | None = None,
    area_id: str | None = None,
) -> CrowdEstimate:
    """Scale a device count to people with the live ratio, else the profile."""
    if ratio is not None:
        r, method = ratio, Method.RATIO_EXTRAPOLATED
    elif profile is not None:
        r, method = profile.ratio_for(count.interval), Method.PROFILE_EXTRAPOLATED
    else:
        raise NoRatioAvailable(f"no ratio for {count.sensor_id} at {count.interval.start}")
    people = 0.0 if count.unique_devices == 0 else r * count.unique_devices
    return CrowdEstimate(area_id or count.sensor_id, count.interval, people, method)


def hourly_ratio_series(ratios: Iterable[CalibrationRatio]) -> dict[tuple[str, int], float]:
    """Median of the interval ratios inside each (choke point, hour)."""
    cells: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in ratios:
        cells[(r.choke_point_id, r.interval.hour_start)].append(r.ratio)
    return {k: statistics.median(v) for k, v in sorted(cells.items())}


@dataclass
class ClusterCalibration:
    """Output of ``calibrate_cluster``."""

    ratios: list[CalibrationRatio] = field(default_factory=list)
    estimates: list[CrowdEstimate] = field(default_factory=list)
    adaptive: dict[int, float] = field(default_factory=dict)


def calibrate_cluster(
    deployment: Deployment,
    cluster_id: str,
    counts: Sequence[IntervalCount],
    ticks: Sequence[CameraTick],
    alpha: float = DEFAULT_ALPHA,
    profile: RatioProfile | None = None,
) -> ClusterCalibration:
    """Run ratio computation and crowd estimation for one cluster.

    Intervals are processed in time order. For each interval the choke point
    ratio (if the camera reported and Wi-Fi saw anyone) updates the adaptive
    ratio; every sniffer in the cluster then gets an estimate. The choke point
    sniffer itself uses the camera count directly while the camera is active.
    Intervals without a camera tick fall back to ``profile``. Only data for this
    cluster is read, so results do not depend on other clusters.
    """
    chokes = deployment.choke_points(cluster_id)
    cp = chokes[0]
    choke_sniffer = cp.sniffer_id
    cams = {cp.camera_id, cp.id}
    members = {n.id for n in deployment.members(cluster_id, NodeKind.WIFI_SNIFFER)}

    by_interval: dict[Interval, dict[str, IntervalCount]] = defaultdict(dict)
    for c in counts:
        if c.sensor_id in members:
            by_interval[c.interval][c.sensor_id] = c
    tick_at: dict[Interval, CameraTick] = {}
    for t in ticks:
        if t.camera_id in cams:
            tick_at[t.interval] = t

    out = ClusterCalibration()
    live: float | None = None
    for iv in sorted(set(by_interval) | set(tick_at)):
        cells = by_interval.get(iv, {})
        tick = tick_at.get(iv)
        if tick is not None:
            wifi = cells.get(choke_sniffer, IntervalCount(choke_sniffer, iv, 0))
            try:
                r = compute_ratio(tick, wifi, cp.id)
            except ZeroWifiCount:
                pass
            else:
                out.ratios.append(r)
                live = update_adaptive_ratio(live, r, alpha)
                out.adaptive[iv.start] = live
        for sensor in sorted(cells):
            c = cells[sensor]
            if tick is not None and sensor == choke_sniffer:
                out.estimates.append(CrowdEstimate(sensor, iv, float(tick.total), Method.CHOKE_POINT_DIRECT))
                continue
            try:
                if tick is not None and live is not None:
                    out.estimates.append(estimate_crowd(c, ratio=live))
                else:
                    out.estimates.append(estimate_crowd(c, profile=profile))
            except NoRatioAvailable:
                continue
    return out
