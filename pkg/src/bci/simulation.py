"""Admission-control scenarios on a growing share ledger.

Each attempted transaction picks a provider (weighted by generosity), the
provider picks a consumer (weighted by the consumer's BCI rank), and the
download commits only if the consumer's current index is strictly above the
admission threshold. Indices are re-solved every ``recompute_every``
attempts; peers start at the neutral value so that sharing can begin.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field
from typing import Sequence, Union

from .errors import InvalidAlpha, InvalidConfig
from .ledger import ShareMatrix
from .solver import BciParams, InfNormTol, StoppingRule, check_alpha, neutral_bci, solve

AMOUNT_RANGE = (1.0, 100.0)


@dataclass(frozen=True)
class Cooperative:
    generosity: float = 1.0
    kind = "cooperative"


@dataclass(frozen=True)
class FreeRider:
    kind = "free_rider"


@dataclass(frozen=True)
class PureContributor:
    kind = "pure_contributor"


PeerProfile = Union[Cooperative, FreeRider, PureContributor]


def default_threshold(alpha: float) -> float:
    """Just above the free-rider floor and well below neutral."""
    return 1.0 - alpha + 0.05 * alpha


@dataclass
class SimConfig:
    n: int
    alpha: float
    peer_profiles: list
    duration: int
    recompute_every: int = 50
    threshold: float | None = None
    rng_seed: int = 0
    stopping: StoppingRule = field(default_factory=lambda: InfNormTol(1e-10))

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.n, int) or self.n < 2:
            raise InvalidConfig("n", f"need at least 2 peers, got {self.n!r}")
        try:
            self.alpha = check_alpha(self.alpha)
        except InvalidAlpha as exc:
            raise InvalidConfig("alpha", str(exc)) from None
        if self.threshold is None:
            self.threshold = default_threshold(self.alpha)
        if not 1.0 - self.alpha <= self.threshold <= 1.0:
            raise InvalidConfig("threshold", f"must lie in [1 - alpha, 1] = [{1 - self.alpha:g}, 1], got {self.threshold!r}")
        if not isinstance(self.duration, int) or self.duration < 1:
            raise InvalidConfig("duration", f"must be a positive integer, got {self.duration!r}")
        if not isinstance(self.recompute_every, int) or self.recompute_every < 1:
            raise InvalidConfig("recompute_every", f"must be a positive integer, got {self.recompute_every!r}")
        if len(self.peer_profiles) != self.n:
            raise InvalidConfig("peer_profiles", f"expected {self.n} profiles, got {len(self.peer_profiles)}")
        for k, p in enumerate(self.peer_profiles):
            if not isinstance(p, (Cooperative, FreeRider, PureContributor)):
                raise InvalidConfig(f"peer_profiles[{k}]", f"unknown profile {p!r}")
            if isinstance(p, Cooperative) and not 0.0 < p.generosity <= 1.0:
                raise InvalidConfig(f"peer_profiles[{k}]", f"generosity must lie in (0, 1], got {p.generosity!r}")
        if not any(isinstance(p, (Cooperative, PureContributor)) for p in self.peer_profiles):
            raise InvalidConfig("peer_profiles", "no peer ever uploads")
        if sum(not isinstance(p, PureContributor) for p in self.peer_profiles) < 1:
            raise InvalidConfig("peer_profiles", "no peer ever downloads")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        if not isinstance(doc, dict):
            raise InvalidConfig("<root>", "config must be a JSON object")
        for key in ("n", "alpha", "duration", "peer_profiles"):
            if key not in doc:
                raise InvalidConfig(key, "missing")
        profiles = []
        for k, p in enumerate(doc["peer_profiles"]):
            if isinstance(p, str):
                p = {"kind": p}
            kind = p.get("kind") if isinstance(p, dict) else None
            if kind == "cooperative":
                profiles.append(Cooperative(float(p.get("generosity", 1.0))))
            elif kind == "free_rider":
                profiles.append(FreeRider())
            elif kind == "pure_contributor":
                profiles.append(PureContributor())
            else:
                raise InvalidConfig(f"peer_profiles[{k}]", f"unknown profile {p!r}")
        stopping = InfNormTol(float(doc.get("eps", 1e-10)))
        return cls(n=doc["n"], alpha=doc["alpha"], peer_profiles=profiles,
                   duration=doc["duration"], recompute_every=doc.get("recompute_every", 50),
                   threshold=doc.get("threshold"), rng_seed=doc.get("rng_seed", 0),
                   stopping=stopping)

    def to_dict(self) -> dict:
        profiles = []
        for p in self.peer_profiles:
            d = {"kind": p.kind}
            if isinstance(p, Cooperative):
                d["generosity"] = p.generosity
            profiles.append(d)
        return {
            "n": self.n, "alpha": self.alpha, "threshold": self.threshold,
            "recompute_every": self.recompute_every, "duration": self.duration,
            "rng_seed": self.rng_seed, "eps": getattr(self.stopping, "eps", None),
            "peer_profiles": profiles,
        }


@dataclass(frozen=True)
class Attempt:
    step: int
    provider: int
    consumer: int
    amount: float
    consumer_bci: float
    committed: bool


@dataclass(frozen=True)
class Snapshot:
    """State right after a recompute at ``step`` (number of attempts so far)."""

    step: int
    bci: tuple[float, ...]
    uploaded: tuple[float, ...]
    downloaded: tuple[float, ...]
    denied: tuple[int, ...]


@dataclass
class SimMetrics:
    uploaded_total: list[float]
    downloaded_total: list[float]
    denied_downloads: list[int]
    committed_downloads: list[int]
    downloads_after_first_recompute: list[int]
    downloads_after_exposure: list[int]
    snapshots: list[Snapshot]
    attempts: list[Attempt]
    profiles: list
    ledger: ShareMatrix
    final_bci: tuple[float, ...]

    @property
    def imbalance(self) -> list[float]:
        return [abs(u - d) for u, d in zip(self.uploaded_total, self.downloaded_total)]

    @property
    def mean_imbalance(self) -> float:
        return math.fsum(self.imbalance) / len(self.imbalance)

    @property
    def free_rider_download_fraction(self) -> float:
        total = math.fsum(self.downloaded_total)
        if total == 0:
            return 0.0
        taken = math.fsum(d for d, p in zip(self.downloaded_total, self.profiles)
                          if isinstance(p, FreeRider))
        return taken / total

    @property
    def bci_trajectories(self) -> list[tuple[int, tuple[float, ...]]]:
        return [(s.step, s.bci) for s in self.snapshots]

    def free_riders(self) -> list[int]:
        return [i for i, p in enumerate(self.profiles) if isinstance(p, FreeRider)]

    def to_dict(self) -> dict:
        return {
            "peers": [
                {"peer": i, "profile": p.kind, "uploaded_total": self.uploaded_total[i],
                 "downloaded_total": self.downloaded_total[i], "imbalance": self.imbalance[i],
                 "denied_downloads": self.denied_downloads[i],
                 "committed_downloads": self.committed_downloads[i],
                 "downloads_after_first_recompute": self.downloads_after_first_recompute[i],
                 "final_bci": self.final_bci[i]}
                for i, p in enumerate(self.profiles)
            ],
            "mean_imbalance": self.mean_imbalance,
            "free_rider_download_fraction": self.free_rider_download_fraction,
            "bci_trajectories": [{"step": s, "bci": list(b)} for s, b in self.bci_trajectories],
        }

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "peer", "bci", "uploaded", "downloaded", "denied"])
        for s in self.snapshots:
            for i in range(len(s.bci)):
                w.writerow([s.step, i, format(s.bci[i], ".17g"), format(s.uploaded[i], ".17g"),
                            format(s.downloaded[i], ".17g"), s.denied[i]])
        return buf.getvalue()


def _rank_weights(values: Sequence[float]) -> list[float]:
    """1-based ranks, ties sharing their average rank."""
    order = sorted(range(len(values)), key=lambda k: values[k])
    ranks = [0.0] * len(values)
    k = 0
    while k < len(order):
        m = k
        while m + 1 < len(order) and values[order[m + 1]] == values[order[k]]:
            m += 1
        avg = (k + m) / 2 + 1
        for t in range(k, m + 1):
            ranks[order[t]] = avg
        k = m + 1
    return ranks


def run_simulation(config: SimConfig) -> SimMetrics:
    config.validate()
    rng = random.Random(config.rng_seed)
    n = config.n
    profiles = list(config.peer_profiles)
    params = BciParams(config.alpha, config.stopping)
    ledger = ShareMatrix(n)
    bci = (neutral_bci(config.alpha),) * n

    upload_weight = [p.generosity if isinstance(p, Cooperative) else
                     1.0 if isinstance(p, PureContributor) else 0.0 for p in profiles]
    providers = [i for i in range(n) if upload_weight[i] > 0]
    provider_weights = [upload_weight[i] for i in providers]
    downloaders = [i for i in range(n) if not isinstance(profiles[i], PureContributor)]

    uploaded = [0.0] * n
    downloaded = [0.0] * n
    denied = [0] * n
    committed = [0] * n
    after_first = [0] * n
    after_exposure = [0] * n
    exposed = [False] * n  # the ledger seen by the last recompute had a download by this peer
    recomputed = False
    snapshots = [Snapshot(0, bci, tuple(uploaded), tuple(downloaded), tuple(denied))]
    attempts: list[Attempt] = []

    for step in range(1, config.duration + 1):
        provider = rng.choices(providers, weights=provider_weights)[0]
        candidates = [c for c in downloaders if c != provider]
        if candidates:
            weights = _rank_weights([bci[c] for c in candidates])
            consumer = rng.choices(candidates, weights=weights)[0]
            amount = rng.uniform(*AMOUNT_RANGE)
            ok = bci[consumer] > config.threshold
            if ok:
                ledger.record(provider, consumer, amount)
                uploaded[provider] += amount
                downloaded[consumer] += amount
                committed[consumer] += 1
                if recomputed:
                    after_first[consumer] += 1
                if exposed[consumer]:
                    after_exposure[consumer] += 1
            else:
                denied[consumer] += 1
            attempts.append(Attempt(step, provider, consumer, amount, bci[consumer], ok))
        if step % config.recompute_every == 0:
            bci = solve(ledger, params).x
            recomputed = True
            for i in range(n):
                exposed[i] = exposed[i] or downloaded[i] > 0
            snapshots.append(Snapshot(step, bci, tuple(uploaded), tuple(downloaded), tuple(denied)))

    final = solve(ledger, params).x
    return SimMetrics(
        uploaded_total=uploaded, downloaded_total=downloaded, denied_downloads=denied,
        committed_downloads=committed, downloads_after_first_recompute=after_first,
        downloads_after_exposure=after_exposure, snapshots=snapshots, attempts=attempts,
        profiles=profiles, ledger=ledger, final_bci=final,
    )


def free_rider_scenario(seed: int = 0, n_cooperative: int = 9, alpha: float = 0.8,
                        threshold: float = 0.25, duration: int = 2000,
                        recompute_every: int = 100) -> SimConfig:
    profiles = [Cooperative(1.0) for _ in range(n_cooperative)] + [FreeRider()]
    return SimConfig(n=len(profiles), alpha=alpha, peer_profiles=profiles, duration=duration,
                     recompute_every=recompute_every, threshold=threshold, rng_seed=seed)


# -- fairness -------------------------------------------------------------

@dataclass(frozen=True)
class FairnessReport:
    mean_imbalance: float
    max_imbalance: float
    relative_max_imbalance: float
    bci: tuple[float, ...]
    bci_dispersion: float
    correlation: float | None
    correlation_direction: str
    lemma_consistent: bool | None  # None when the index is not uniform

    def to_dict(self) -> dict:
        return {
            "mean_imbalance": self.mean_imbalance,
            "max_imbalance": self.max_imbalance,
            "relative_max_imbalance": self.relative_max_imbalance,
            "bci": list(self.bci),
            "bci_dispersion": self.bci_dispersion,
            "correlation": self.correlation,
            "correlation_direction": self.correlation_direction,
            "lemma_consistent": self.lemma_consistent,
        }


def _pearson(a: Sequence[float], b: Sequence[float]) -> float | None:
    n = len(a)
    ma, mb = math.fsum(a) / n, math.fsum(b) / n
    da = [v - ma for v in a]
    db = [v - mb for v in b]
    sa = math.sqrt(math.fsum(v * v for v in da))
    sb = math.sqrt(math.fsum(v * v for v in db))
    if sa == 0 or sb == 0:
        return None
    return math.fsum(p * q for p, q in zip(da, db)) / (sa * sb)


def fairness_report(metrics: SimMetrics | None, ledger: ShareMatrix | None, alpha: float,
                    eps: float = 1e-12) -> FairnessReport:
    """Summarise imbalance against the final index vector of ``ledger``.

    Either argument may be None: a bare ledger can be treated as a finished
    run, and a run carries its own ledger.
    """
    if ledger is None:
        if metrics is None:
            raise ValueError("need a ledger or a completed run")
        ledger = metrics.ledger
    bci = solve(ledger, BciParams(alpha, InfNormTol(eps))).x
    up, down = ledger.upload_totals(), ledger.download_totals()
    imbalance = [abs(u - d) for u, d in zip(up, down)]
    total = ledger.total()
    max_imb = max(imbalance)
    rel = max_imb / total if total > 0 else 0.0
    dispersion = max(bci) - min(bci)
    net = [u - d for u, d in zip(up, down)]
    corr = _pearson(bci, net)
    if corr is None or abs(corr) < 1e-12:
        direction = "none"
    else:
        direction = "positive" if corr > 0 else "negative"
    consistent = (rel < 1e-4) if dispersion < 1e-6 else None
    return FairnessReport(
        mean_imbalance=math.fsum(imbalance) / len(imbalance), max_imbalance=max_imb,
        relative_max_imbalance=rel, bci=bci, bci_dispersion=dispersion,
        correlation=corr, correlation_direction=direction, lemma_consistent=consistent,
    )


def load_config(text: str) -> SimConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig("<root>", f"invalid JSON: {exc}") from None
    return SimConfig.from_dict(doc)
