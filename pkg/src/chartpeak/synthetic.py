"""Synthetic chart tracks with a known peak-rank mechanism.

Each track gets a latent popularity made of an audio "appeal" term (banded,
non-linear functions of a few audio features) plus an exposure term the
audio cannot see.  Tracks are ranked by popularity and cut into the three
tiers at the requested proportions; peak ranks are spread inside each tier,
and the chart metadata is then generated from the peak rank the way a real
chart behaves: streams fall off as a power law of rank, previous rank is
always worse than the peak, and higher-peaking tracks stay longer.
"""

from __future__ import annotations

import numpy as np

from .charts import TrackRecord, label_rank_class
from .enrich import AudioFeatures

TIER_BOUNDS = ((1, 10), (11, 50), (51, 200))
DEFAULT_PROPORTIONS = (0.05, 0.20, 0.75)


def _tier_sizes(n: int, proportions) -> list[int]:
    sizes = [int(round(n * p)) for p in proportions]
    sizes[-1] = n - sum(sizes[:-1])
    return sizes


def _audio_table(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    energy = rng.beta(5, 3, n)
    instrumental_hi = rng.random(n) < 0.12
    speech_hi = rng.random(n) < 0.2
    return {
        "danceability": rng.beta(5, 3, n),
        "energy": energy,
        "valence": rng.beta(3, 3, n),
        "tempo": np.clip(rng.normal(120, 28, n), 55, 210),
        "acousticness": rng.beta(1.2, 4, n),
        "loudness": np.clip(-6.5 + 9.0 * (energy - 0.62) + rng.normal(0, 1.2, n), -40, 0),
        "instrumentalness": np.where(instrumental_hi, rng.beta(5, 2, n), rng.beta(0.4, 25, n)),
        "speechiness": np.where(speech_hi, rng.beta(3, 8, n), rng.beta(2, 30, n)),
        "liveness": rng.beta(2, 10, n),
        "key": rng.integers(0, 12, n),
        "mode": (rng.random(n) < 0.6).astype(np.int64),
        "duration_ms": np.maximum(rng.normal(200_000, 40_000, n), 60_000).astype(np.int64),
        "time_signature": rng.choice([3, 4, 5], size=n, p=[0.08, 0.9, 0.02]),
    }


def audio_appeal(a: dict[str, np.ndarray]) -> np.ndarray:
    return (
        1.3 * (a["valence"] > 0.5)
        + 1.1 * ((a["tempo"] > 100) & (a["tempo"] < 140))
        + 0.9 * (a["acousticness"] < 0.2)
        + 0.8 * (a["instrumentalness"] < 0.1)
        + 0.7 * ((a["danceability"] > 0.6) & (a["energy"] > 0.55))
    )


def make_tracks(n: int = 1500, proportions=DEFAULT_PROPORTIONS, seed: int = 42,
                audio_weight: float = 1.0, exposure_weight: float = 0.35,
                missing_features: int = 3):
    """Return ``(tracks, features)``: ``n`` TrackRecords and their AudioFeatures.

    ``missing_features`` tracks get no feature record, as when the API
    returns null.
    """
    rng = np.random.default_rng(seed)
    audio = _audio_table(rng, n)
    appeal = audio_appeal(audio)
    appeal = (appeal - appeal.mean()) / appeal.std()
    popularity = audio_weight * appeal + exposure_weight * rng.normal(size=n)

    order = np.argsort(-popularity, kind="stable")
    peak = np.empty(n, dtype=np.int64)
    start = 0
    for (lo, hi), size in zip(TIER_BOUNDS, _tier_sizes(n, proportions)):
        members = order[start:start + size]
        q = (np.arange(size) + 0.5) / size
        peak[members] = lo + np.floor(q * (hi - lo + 1)).astype(np.int64)
        start += size

    streams = (3.0e6 * peak ** -0.6 * np.exp(rng.normal(0, 0.1, n))).astype(np.int64)
    days = np.clip(np.ceil(np.exp(rng.normal(4.2 - 0.55 * np.log(peak), 0.7))), 1, 366).astype(np.int64)
    debut_at_peak = (rng.random(n) < 0.3) | (peak >= 200) | (days == 1)
    climb = 1 + np.floor(rng.exponential(0.5 * peak)).astype(np.int64)
    previous = np.minimum(peak + climb, 200)

    uris = [f"spotify:track:syn{i:05d}{int(v):06x}" for i, v in enumerate(rng.integers(0, 2**24, n))]
    tracks = [
        TrackRecord(
            track_uri=uris[i],
            track_name=f"Track {i}",
            artist_name=f"Artist {i % 97}",
            peak_rank=int(peak[i]),
            streams=int(streams[i]),
            previous_rank=None if debut_at_peak[i] else int(previous[i]),
            days_on_chart=int(days[i]),
            label=label_rank_class(int(peak[i])),
        )
        for i in range(n)
    ]
    dropped = set(rng.choice(n, size=min(missing_features, n), replace=False).tolist())
    features = [
        AudioFeatures(
            track_uri=uris[i],
            **{name: (int(col[i]) if col.dtype.kind in "iu" else float(col[i])) for name, col in audio.items()},
        )
        for i in range(n) if i not in dropped
    ]
    return tracks, features
