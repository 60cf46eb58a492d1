"""Batched, paced audio-feature client over an injectable transport.

The client never touches sockets itself: it hands :class:`Request` objects
to a transport and reads back :class:`TransportResponse` objects.  Timing
goes through an injectable clock, so pacing and backoff can be checked on a
simulated timeline.
"""

from __future__ import annotations

import base64
import csv
import json
import logging
import math
import os
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import (
    AuthFailedError,
    EmptyBatchError,
    EnrichError,
    HttpError,
    InvalidBatchSizeError,
    MalformedBodyError,
    MissingCredentialsError,
    RetriesExhaustedError,
)

log = logging.getLogger(__name__)

AUDIO_FEATURES = (
    "danceability", "energy", "valence", "tempo", "acousticness", "loudness",
    "instrumentalness", "speechiness", "liveness", "key", "mode", "duration_ms",
    "time_signature",
)
_UNIT_INTERVAL = (
    "danceability", "energy", "valence", "acousticness", "instrumentalness",
    "speechiness", "liveness",
)
_INTEGER_FEATURES = ("key", "mode", "duration_ms", "time_signature")

URI_PREFIXES = ("spotify:track:", "https://open.spotify.com/track/")


@dataclass(frozen=True)
class AudioFeatures:
    track_uri: str
    danceability: float
    energy: float
    valence: float
    tempo: float
    acousticness: float
    loudness: float
    instrumentalness: float
    speechiness: float
    liveness: float
    key: int
    mode: int
    duration_ms: int
    time_signature: int

    def __post_init__(self):
        for name in _UNIT_INTERVAL:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if not self.tempo > 0:
            raise ValueError(f"tempo={self.tempo} must be positive")
        if not self.duration_ms > 0:
            raise ValueError(f"duration_ms={self.duration_ms} must be positive")
        if self.mode not in (0, 1):
            raise ValueError(f"mode={self.mode} must be 0 or 1")
        if not -1 <= self.key <= 11:
            raise ValueError(f"key={self.key} outside -1..11")

    @classmethod
    def from_mapping(cls, track_uri: str, obj: Mapping) -> "AudioFeatures":
        missing = [name for name in AUDIO_FEATURES if obj.get(name) is None]
        if missing:
            raise MalformedBodyError(f"feature record for {track_uri} lacks {missing}")
        try:
            values = {
                name: int(obj[name]) if name in _INTEGER_FEATURES else float(obj[name])
                for name in AUDIO_FEATURES
            }
            return cls(track_uri=track_uri, **values)
        except (TypeError, ValueError) as exc:
            raise MalformedBodyError(f"feature record for {track_uri}: {exc}") from None

    def as_row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class ClientConfig:
    batch_size: int = 100
    min_request_interval: float = 0.5
    max_retries: int = 5
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    token_endpoint: str = "https://accounts.spotify.com/api/token"
    features_endpoint: str = "https://api.spotify.com/v1/audio-features"
    client_id: str | None = field(default=None, repr=False)
    client_secret: str | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 1 <= self.batch_size <= 100:
            raise InvalidBatchSizeError(f"batch_size must be in 1..100, got {self.batch_size}")
        if self.min_request_interval < 0:
            raise ValueError("min_request_interval must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None, **overrides) -> "ClientConfig":
        environ = os.environ if environ is None else environ
        overrides.setdefault("client_id", environ.get("CLIENT_ID"))
        overrides.setdefault("client_secret", environ.get("CLIENT_SECRET"))
        return cls(**overrides)

    def backoff_delay(self, retry: int) -> float:
        """Delay before the ``retry``-th retry (1-based)."""
        return self.backoff_base * self.backoff_factor ** (retry - 1)


@dataclass(frozen=True)
class Request:
    method: str
    url: str
    headers: Mapping[str, str] = field(default_factory=dict)
    body: bytes | None = None
    uris: tuple[str, ...] = ()

    def with_header(self, name: str, value: str) -> "Request":
        return Request(self.method, self.url, {**self.headers, name: value}, self.body, self.uris)

    @property
    def query(self) -> str:
        return urllib.parse.urlsplit(self.url).query


@dataclass(frozen=True)
class TransportResponse:
    status: int
    body: bytes = b""
    retry_after: float | None = None

    def __post_init__(self):
        if not 100 <= self.status <= 599:
            raise ValueError(f"status {self.status} outside 100..599")

    @property
    def ok(self) -> bool:
        return 200 <= self.status < 300


class Transport(Protocol):
    def send(self, request: Request) -> TransportResponse: ...


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class SystemClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class SimulatedClock:
    """Clock whose ``sleep`` just advances time; records every sleep."""

    def __init__(self, start: float = 0.0):
        self.t = start
        self.sleeps: list[float] = []

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        if seconds > 0:
            self.t += seconds


def bare_id(uri: str) -> str:
    for prefix in URI_PREFIXES:
        if uri.startswith(prefix):
            return uri[len(prefix):]
    return uri


def chunk_uris(uris: Sequence[str], batch_size: int) -> list[list[str]]:
    if batch_size < 1:
        raise InvalidBatchSizeError(f"batch_size must be >= 1, got {batch_size}")
    uris = list(uris)
    return [uris[i:i + batch_size] for i in range(0, len(uris), batch_size)]


def build_batch_request(batch: Sequence[str], endpoint: str) -> Request:
    if not batch:
        raise EmptyBatchError("cannot build a request for an empty batch")
    ids = ",".join(bare_id(u) for u in batch)
    query = "ids=" + urllib.parse.quote(ids, safe="")
    return Request("GET", f"{endpoint}?{query}", uris=tuple(batch))


class RateLimiter:
    """Spaces successive request starts at least ``interval`` seconds apart."""

    def __init__(self, interval: float):
        self.interval = interval
        self.last_start: float | None = None
        self.starts: list[float] = []
        self._lock = threading.Lock()

    def acquire(self, clock: Clock) -> float:
        with self._lock:
            if self.last_start is not None:
                wait = self.last_start + self.interval - clock.now()
                if wait > 0:
                    clock.sleep(wait)
            start = clock.now()
            self.last_start = start
            self.starts.append(start)
            return start


@dataclass
class EnrichResult:
    features: list[AudioFeatures]
    misses: list[str]


class EnrichmentClient:
    """Single-flight client: one request in flight, token and pacing shared.

    A lock serializes requests, so one instance may be shared across threads.
    """

    def __init__(self, transport: Transport, config: ClientConfig | None = None,
                 clock: Clock | None = None):
        self.transport = transport
        self.config = config or ClientConfig()
        self.clock = clock or SystemClock()
        self.limiter = RateLimiter(self.config.min_request_interval)
        self._token: str | None = None
        self._token_expires = -math.inf
        self._lock = threading.RLock()

    # -- token -------------------------------------------------------------

    def ensure_token(self) -> str:
        with self._lock:
            if self._token is not None and self.clock.now() < self._token_expires:
                return self._token
            cfg = self.config
            if not cfg.client_id or not cfg.client_secret:
                raise MissingCredentialsError("CLIENT_ID and CLIENT_SECRET must be set")
            basic = base64.b64encode(f"{cfg.client_id}:{cfg.client_secret}".encode()).decode()
            request = Request(
                "POST",
                cfg.token_endpoint,
                {"Authorization": f"Basic {basic}",
                 "Content-Type": "application/x-www-form-urlencoded"},
                b"grant_type=client_credentials",
            )
            issued = self.clock.now()
            response = self.transport.send(request)
            if not response.ok:
                raise AuthFailedError(response.status, response.body[:200].decode("utf-8", "replace"))
            try:
                payload = json.loads(response.body)
                token = payload["access_token"]
                lifetime = float(payload.get("expires_in", 3600))
            except (ValueError, KeyError, TypeError):
                raise AuthFailedError(response.status, "unreadable token response") from None
            self._token = token
            self._token_expires = issued + lifetime
            return token

    def invalidate_token(self) -> None:
        with self._lock:
            self._token = None
            self._token_expires = -math.inf

    # -- batches -----------------------------------------------------------

    def fetch_batch(self, request: Request) -> list[AudioFeatures]:
        """Send one batch request, retrying throttled attempts with backoff.

        Returns the features that came back non-null, in request order.
        """
        cfg = self.config
        retries = 0
        refreshed = False
        with self._lock:
            while True:
                token = self.ensure_token()
                self.limiter.acquire(self.clock)
                response = self.transport.send(request.with_header("Authorization", f"Bearer {token}"))
                if response.ok:
                    return _parse_features(response.body, request.uris)
                if response.status == 429:
                    if retries >= cfg.max_retries:
                        raise RetriesExhaustedError(429, retries + 1)
                    retries += 1
                    delay = cfg.backoff_delay(retries)
                    if response.retry_after is not None and response.retry_after > delay:
                        delay = response.retry_after
                    log.info("throttled; sleeping %.2fs before retry %d", delay, retries)
                    self.clock.sleep(delay)
                    continue
                if response.status == 401 and not refreshed:
                    refreshed = True
                    self.invalidate_token()
                    continue
                raise HttpError(response.status, response.body[:200].decode("utf-8", "replace"))

    def enrich_all(self, uris: Iterable[str]) -> EnrichResult:
        unique = list(dict.fromkeys(uris))
        features: list[AudioFeatures] = []
        for index, batch in enumerate(chunk_uris(unique, self.config.batch_size)):
            request = build_batch_request(batch, self.config.features_endpoint)
            try:
                features.extend(self.fetch_batch(request))
            except EnrichError as exc:
                exc.batch_index = index
                raise
        found = {f.track_uri for f in features}
        return EnrichResult(features, [u for u in unique if u not in found])


def _parse_features(body: bytes, uris: Sequence[str]) -> list[AudioFeatures]:
    try:
        payload = json.loads(body)
        records = payload["audio_features"]
    except (ValueError, KeyError, TypeError):
        raise MalformedBodyError("response is not an audio_features object") from None
    if not isinstance(records, list) or len(records) != len(uris):
        raise MalformedBodyError(
            f"expected {len(uris)} feature records, got {len(records) if isinstance(records, list) else 'none'}"
        )
    out = []
    for uri, obj in zip(uris, records):
        if obj is None:
            continue
        if not isinstance(obj, Mapping):
            raise MalformedBodyError(f"feature record for {uri} is not an object")
        if "id" in obj and obj["id"] != bare_id(uri):
            raise MalformedBodyError(f"record id {obj['id']!r} does not match {uri}")
        out.append(AudioFeatures.from_mapping(uri, obj))
    return out


# -- transports ----------------------------------------------------------------

class UrllibTransport:
    """Network adapter over :mod:`urllib.request`."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def send(self, request: Request) -> TransportResponse:
        req = urllib.request.Request(
            request.url, data=request.body, headers=dict(request.headers), method=request.method
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return TransportResponse(resp.status, resp.read())
        except urllib.error.HTTPError as err:
            retry_after = err.headers.get("Retry-After") if err.headers else None
            try:
                retry_after = float(retry_after) if retry_after is not None else None
            except ValueError:
                retry_after = None
            return TransportResponse(err.code, err.read() or b"", retry_after)


class FixtureTransport:
    """Offline transport answering from a ``{uri or id: features | null}`` mapping.

    Ids absent from the fixture come back as ``null``, like unknown ids on
    the real endpoint.
    """

    def __init__(self, fixture: Mapping[str, Mapping | None]):
        self.records = {bare_id(k): v for k, v in fixture.items()}
        self.requests: list[Request] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureTransport":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def send(self, request: Request) -> TransportResponse:
        self.requests.append(request)
        if request.method == "POST":
            body = {"access_token": "fixture-token", "token_type": "Bearer", "expires_in": 3600}
            return TransportResponse(200, json.dumps(body).encode())
        params = urllib.parse.parse_qs(request.query)
        ids = params.get("ids", [""])[0].split(",")
        out = []
        for i in ids:
            rec = self.records.get(i)
            out.append(None if rec is None else {**rec, "id": i})
        return TransportResponse(200, json.dumps({"audio_features": out}).encode())


# -- features.csv ------------------------------------------------------------

FEATURE_COLUMNS = ("uri",) + AUDIO_FEATURES


def write_features_csv(features: Iterable[AudioFeatures], path: str | Path, append: bool = False) -> None:
    path = Path(path)
    new_file = not append or not path.exists() or path.stat().st_size == 0
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new_file:
            writer.writerow(FEATURE_COLUMNS)
        for f in features:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in f.as_row()])


def read_features_csv(path: str | Path) -> list[AudioFeatures]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(AudioFeatures.from_mapping(row["uri"], row))
    return out
