"""Multimodal timestamped event sequences: data model, JSONL round-trip, synthetic generator.

One user history holds exactly one event sequence per source id; events carry
pre-tokenized integer codes (tokenization itself happens upstream).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

log = logging.getLogger("alure.events")

NO_ACCOUNT = 0  # reserved account_id: event has no advertiser attached

# Monday 2020-09-14 00:00:00 UTC; day-aligned so weekday arithmetic is exact.
DEFAULT_START_TS = 1_600_041_600
SECONDS_PER_DAY = 86_400


class EventKind(str, Enum):
    IMPRESSION = "impression"
    CLICK = "click"
    CONVERSION = "conversion"
    CONTENT_VIEW = "content_view"
    COMMENT = "comment"


ENGAGEMENT_KINDS = frozenset({EventKind.CLICK, EventKind.CONVERSION})


class DataError(ValueError):
    """Malformed or contract-violating input data."""


@dataclass(frozen=True)
class Event:
    item_id: int
    account_id: int
    kind: EventKind
    token_codes: tuple[int, ...]
    timestamp: int

    def __post_init__(self):
        if self.timestamp <= 0:
            raise DataError(f"event timestamp must be > 0, got {self.timestamp}")
        if any(c < 0 for c in self.token_codes):
            raise DataError("token codes must be non-negative")


@dataclass(frozen=True)
class EventSequence:
    source_id: int
    events: tuple[Event, ...]

    def is_sorted(self) -> bool:
        ts = [e.timestamp for e in self.events]
        return all(a <= b for a, b in zip(ts, ts[1:]))


@dataclass(frozen=True)
class UserHistory:
    user_id: int
    region: str
    sequences: tuple[EventSequence, ...]  # exactly one per source_id in 0..K-1

    def __post_init__(self):
        ids = sorted(s.source_id for s in self.sequences)
        if ids != list(range(len(self.sequences))):
            raise DataError(
                f"user {self.user_id}: source ids must be exactly 0..K-1, got {ids}"
            )

    @property
    def n_sources(self) -> int:
        return len(self.sequences)

    def sequence(self, source_id: int) -> EventSequence:
        for s in self.sequences:
            if s.source_id == source_id:
                return s
        raise KeyError(source_id)


@dataclass(frozen=True)
class Engagement:
    ad_id: int
    account_id: int
    kind: EventKind
    timestamp: int


# user_id -> engagements sorted by timestamp
EngagementLog = dict[int, list[Engagement]]
# account_id -> ad ids (each ad under exactly one account)
AdsCatalog = dict[int, list[int]]


def validate_catalog(catalog: AdsCatalog) -> None:
    seen: dict[int, int] = {}
    for account, ads in catalog.items():
        for ad in ads:
            if ad in seen:
                raise DataError(f"ad {ad} listed under accounts {seen[ad]} and {account}")
            seen[ad] = account


def ad_to_account(catalog: AdsCatalog) -> dict[int, int]:
    return {ad: account for account, ads in catalog.items() for ad in ads}


# ---------------------------------------------------------------------------
# JSONL round-trip
# ---------------------------------------------------------------------------

def _event_to_obj(e: Event) -> dict:
    return {
        "item_id": e.item_id,
        "account_id": e.account_id,
        "kind": e.kind.value,
        "tokens": list(e.token_codes),
        "ts": e.timestamp,
    }


def _history_to_obj(h: UserHistory) -> dict:
    return {
        "user_id": h.user_id,
        "region": h.region,
        "sequences": [
            {"source_id": s.source_id, "events": [_event_to_obj(e) for e in s.events]}
            for s in sorted(h.sequences, key=lambda s: s.source_id)
        ],
    }


def write_histories(path: str | Path, histories: list[UserHistory]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for h in histories:
            f.write(json.dumps(_history_to_obj(h), separators=(",", ":")) + "\n")


@dataclass
class IngestResult:
    """Parsed histories plus the count of sequences that arrived unsorted."""

    histories: list[UserHistory]
    resorted_sequences: int = 0


def _parse_event(obj: dict, lineno: int) -> Event:
    try:
        kind = EventKind(obj["kind"])
        ts = int(obj["ts"])
        if ts <= 0:
            raise DataError(f"line {lineno}: non-positive timestamp {ts}")
        return Event(
            item_id=int(obj["item_id"]),
            account_id=int(obj.get("account_id", NO_ACCOUNT)),
            kind=kind,
            token_codes=tuple(int(t) for t in obj.get("tokens", [])),
            timestamp=ts,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"line {lineno}: malformed event: {exc}") from exc


def ingest_histories(path: str | Path, expected_sources: int | None = None) -> IngestResult:
    """Parse line-delimited user histories, sorting any unsorted sequences.

    Unsorted input is repaired rather than rejected; the repair count is
    returned so callers can alert on misordered upstream feeds.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    histories: list[UserHistory] = []
    resorted = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON: {exc}") from exc
            try:
                user_id = int(obj["user_id"])
                region = str(obj["region"])
                raw_seqs = obj["sequences"]
            except (KeyError, TypeError) as exc:
                raise DataError(f"line {lineno}: missing field: {exc}") from exc
            n_sources = expected_sources if expected_sources is not None else len(raw_seqs)
            sequences = []
            for raw in raw_seqs:
                source_id = int(raw["source_id"])
                if source_id >= n_sources:
                    raise DataError(
                        f"line {lineno}: source_id {source_id} >= source count {n_sources}"
                    )
                events = [_parse_event(e, lineno) for e in raw["events"]]
                seq = EventSequence(source_id=source_id, events=tuple(events))
                if not seq.is_sorted():
                    resorted += 1
                    seq = EventSequence(
                        source_id=source_id,
                        events=tuple(sorted(events, key=lambda e: e.timestamp)),
                    )
                sequences.append(seq)
            try:
                histories.append(
                    UserHistory(user_id=user_id, region=region, sequences=tuple(sequences))
                )
            except DataError as exc:
                raise DataError(f"line {lineno}: {exc}") from exc
    if resorted:
        log.warning("ingest: re-sorted %d unsorted sequences from %s", resorted, path)
    return IngestResult(histories=histories, resorted_sequences=resorted)


def write_engagements(path: str | Path, engagements: EngagementLog) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for user_id in sorted(engagements):
            obj = {
                "user_id": user_id,
                "events": [
                    {"ad": g.ad_id, "account": g.account_id, "kind": g.kind.value, "ts": g.timestamp}
                    for g in engagements[user_id]
                ],
            }
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_engagements(path: str | Path) -> EngagementLog:
    out: EngagementLog = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out[int(obj["user_id"])] = [
                    Engagement(int(e["ad"]), int(e["account"]), EventKind(e["kind"]), int(e["ts"]))
                    for e in obj["events"]
                ]
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"line {lineno}: malformed engagement record: {exc}") from exc
    return out


def write_catalog(path: str | Path, catalog: AdsCatalog) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for account in sorted(catalog):
            f.write(
                json.dumps({"account_id": account, "ads": catalog[account]}, separators=(",", ":"))
                + "\n"
            )


def read_catalog(path: str | Path) -> AdsCatalog:
    out: AdsCatalog = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out[int(obj["account_id"])] = [int(a) for a in obj["ads"]]
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"line {lineno}: malformed catalog record: {exc}") from exc
    validate_catalog(out)
    return out


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass
class SynthData:
    histories: list[UserHistory]
    engagements: EngagementLog
    catalog: AdsCatalog
    ground_truth: dict[int, int]  # user_id -> latent interest cluster


@dataclass(frozen=True)
class SynthProfile:
    """Shape knobs for the generator that are not part of its core signature."""

    events_per_user: int = 44
    own_cluster_mix: float = 0.9
    ads_per_account: int = 25
    ads_event_fraction: float = 0.7
    content_vocab: int = 64
    n_regions: int = 2
    diurnal_amplitude: float = 0.8
    start_ts: int = DEFAULT_START_TS


# Per-event kind draws on the ads source (impressions never enter the
# engagement log; conversions are kept rare so account expansion stays sparse).
_ADS_KINDS = (EventKind.IMPRESSION, EventKind.CLICK, EventKind.CONVERSION)
_ADS_KIND_P = (0.35, 0.50, 0.15)
_CONTENT_KINDS = (EventKind.CONTENT_VIEW, EventKind.COMMENT)
_CONTENT_KIND_P = (0.8, 0.2)


def _day_weights(horizon_days: int, weekend_mult: float, start_ts: int) -> np.ndarray:
    start_day = start_ts // SECONDS_PER_DAY
    days = np.arange(horizon_days)
    weekday = (start_day + days + 4) % 7  # epoch day 0 was a Thursday
    w = np.where(weekday >= 5, weekend_mult, 1.0)
    return w / w.sum()


def _sample_seconds_of_day(rng: np.random.Generator, n: int, phase: float, amp: float) -> np.ndarray:
    """Rejection-sample seconds-of-day under rate 1 + amp*sin(2*pi*hour/24 + phase)."""
    out = np.empty(n, dtype=np.int64)
    filled = 0
    peak = 1.0 + amp
    while filled < n:
        draw = max(16, 2 * (n - filled))
        secs = rng.integers(0, SECONDS_PER_DAY, size=draw)
        rate = 1.0 + amp * np.sin(2.0 * np.pi * secs / SECONDS_PER_DAY + phase)
        keep = secs[rng.random(draw) * peak < rate]
        take = min(len(keep), n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def synth_generate(
    seed: int,
    n_users: int,
    n_clusters: int,
    n_accounts: int,
    horizon_days: int,
    profile: SynthProfile = SynthProfile(),
) -> SynthData:
    """Generate clustered users with diurnal/weekly event timing.

    Each user belongs to a latent interest cluster; accounts are partitioned
    across clusters and users draw ~own_cluster_mix of their ads events from
    their own cluster's accounts. Within a cluster, a user's account taste is
    centred on a per-user position so that nearby users overlap smoothly
    (the similarity graph needs real sub-cluster locality, not point masses).
    """
    if min(seed, n_users, n_clusters, n_accounts, horizon_days) < 1:
        raise ValueError("all generator arguments must be >= 1")
    if n_clusters > n_users:
        raise ValueError(f"n_clusters {n_clusters} > n_users {n_users}")
    if n_clusters > n_accounts:
        raise ValueError(f"n_clusters {n_clusters} > n_accounts {n_accounts}")

    rng = np.random.default_rng(seed)
    p = profile

    # exactly balanced cluster labels, order shuffled by seed
    labels = np.tile(np.arange(n_clusters), n_users // n_clusters + 1)[:n_users]
    rng.shuffle(labels)

    # account/ads universe: account a owns a contiguous ad id block
    cluster_accounts: list[np.ndarray] = [
        np.arange(1, n_accounts + 1)[(np.arange(n_accounts)) % n_clusters == c]
        for c in range(n_clusters)
    ]
    catalog: AdsCatalog = {
        a: list(range((a - 1) * p.ads_per_account + 1, a * p.ads_per_account + 1))
        for a in range(1, n_accounts + 1)
    }

    content_block = max(1, p.content_vocab // n_clusters)

    histories: list[UserHistory] = []
    engagements: EngagementLog = {}
    ground_truth: dict[int, int] = {}

    for u in range(1, n_users + 1):
        c = int(labels[u - 1])
        ground_truth[u] = c
        region = f"r{rng.integers(0, p.n_regions)}"
        phase = 2.0 * np.pi * c / n_clusters + rng.normal(0.0, 0.35)
        weekend_mult = float(rng.choice([0.5, 2.0]))
        taste = rng.random()  # position on the cluster's account line

        own = cluster_accounts[c]
        ranks = np.arange(len(own)) / max(1, len(own) - 1)
        taste_w = np.exp(-np.abs(ranks - taste) / 0.2)
        taste_w /= taste_w.sum()

        n_events = int(rng.integers(max(2, p.events_per_user - 10), p.events_per_user + 11))
        days = rng.choice(horizon_days, size=n_events, p=_day_weights(horizon_days, weekend_mult, p.start_ts))
        secs = _sample_seconds_of_day(rng, n_events, phase, p.diurnal_amplitude)
        ts = np.sort(p.start_ts + days * SECONDS_PER_DAY + secs)

        is_ads = rng.random(n_events) < p.ads_event_fraction
        ads_events: list[Event] = []
        content_events: list[Event] = []
        user_engagements: list[Engagement] = []
        for i in range(n_events):
            t = int(ts[i])
            if is_ads[i]:
                if n_clusters > 1 and rng.random() >= p.own_cluster_mix:
                    other = int(rng.integers(0, n_clusters - 1))
                    other = other if other < c else other + 1
                    account = int(rng.choice(cluster_accounts[other]))
                else:
                    account = int(rng.choice(own, p=taste_w))
                ad = int(rng.choice(catalog[account]))
                kind = _ADS_KINDS[rng.choice(len(_ADS_KINDS), p=_ADS_KIND_P)]
                ads_events.append(
                    Event(item_id=ad, account_id=account, kind=kind, token_codes=(account,), timestamp=t)
                )
                if kind in ENGAGEMENT_KINDS:
                    user_engagements.append(Engagement(ad, account, kind, t))
            else:
                if rng.random() < p.own_cluster_mix:
                    code = c * content_block + int(rng.integers(0, content_block))
                else:
                    code = int(rng.integers(0, p.content_vocab))
                kind = _CONTENT_KINDS[rng.choice(len(_CONTENT_KINDS), p=_CONTENT_KIND_P)]
                content_events.append(
                    Event(item_id=1_000_000 + code, account_id=NO_ACCOUNT, kind=kind,
                          token_codes=(code,), timestamp=t)
                )

        histories.append(
            UserHistory(
                user_id=u,
                region=region,
                sequences=(
                    EventSequence(source_id=0, events=tuple(ads_events)),
                    EventSequence(source_id=1, events=tuple(content_events)),
                ),
            )
        )
        if user_engagements:
            engagements[u] = user_engagements

    return SynthData(histories=histories, engagements=engagements, catalog=catalog,
                     ground_truth=ground_truth)
