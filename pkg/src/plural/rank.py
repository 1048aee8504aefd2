"""Attention allocation and feed construction.

A citizen's attention over a candidate pool follows the weighted coherence
scores of the citizen and of the communities they belong to:

    numerator(m) = lambda(p) * psi(m; p) + sum_c devotion(c; p) * lambda(c) * psi(m; c)

normalized over the pool. Feeds take the top-k of that distribution, keep a
small epsilon of attention for seeded random exploration slots, and label
every entry with its social provenance (where it bridges, where it divides,
and what balances it).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from ._rng import derive_rng
from .errors import InsufficientStanding
from .score import LABEL_BRIDGING, LABEL_DIVISIVE, ScoreSet, Scope


@dataclass
class RankingParams:
    feed_size: int = 10
    epsilon: float = 0.0               # exploration share of attention
    stake_scale: float = 10.0          # linear stake -> initial-psi conversion
    seed_rounds: int = 2               # rounds a seeding override stays live

    def __post_init__(self) -> None:
        if self.feed_size < 1:
            raise ValueError("feed_size must be >= 1")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError("epsilon must be in [0, 1)")
        if self.seed_rounds < 0 or self.stake_scale < 0:
            raise ValueError("seed_rounds and stake_scale must be >= 0")


@dataclass
class ProvenanceTag:
    """Why this content is in the feed, per scope it is notable in."""

    scope: Scope
    kind: str                                   # Bridging | Divisive
    balancing_peek: tuple[int, ...] = ()        # non-empty only for Divisive


@dataclass
class FeedEntry:
    content: int
    exposure_share: float
    provenance: list[ProvenanceTag] = field(default_factory=list)
    rank_position: int = 0


class PsiOverrides:
    """Staked initial-prominence overrides, keyed (content, community).

    While live, the override replaces the organic community-scope psi; it
    expires after `seed_rounds` rounds and organic scores take over.
    """

    def __init__(self) -> None:
        self._live: dict[tuple[int, int], tuple[float, int]] = {}

    def set(self, content: int, community: int, psi: float, expires_round: int) -> None:
        self._live[(content, community)] = (psi, expires_round)

    def get(self, content: int, community: int, current_round: int) -> Optional[float]:
        hit = self._live.get((content, community))
        if hit is None:
            return None
        psi, expires = hit
        return psi if current_round < expires else None


class EffectivePsi:
    """Score view merging organic cards with any live seeding overrides."""

    def __init__(self, scores: ScoreSet, overrides: PsiOverrides | None = None,
                 current_round: int = 0) -> None:
        self.scores = scores
        self.overrides = overrides
        self.current_round = current_round

    def psi(self, content: int, scope: Scope) -> float:
        if self.overrides is not None and scope[0] == "community":
            hit = self.overrides.get(content, scope[1], self.current_round)
            if hit is not None:
                return hit
        return self.scores.psi(content, scope)


def exposure_weights(citizen: int, fabric, psi_view, pool: Sequence[int]) -> dict[int, float]:
    """Attention share per pool content for one citizen.

    `psi_view` needs a .psi(content, scope) method (ScoreSet or EffectivePsi);
    missing scores count as zero. When every numerator is zero the budget is
    spread uniformly so a cold system still serves content.
    """
    if not pool:
        raise ValueError("candidate pool must be non-empty")
    p = fabric.citizens[citizen]
    devotions = fabric.devotions(citizen)
    terms = [(c, devotions[c] * fabric.communities[c].lambda_) for c in sorted(devotions)]
    numerators: dict[int, float] = {}
    for m in pool:
        acc = p.lambda_ * psi_view.psi(m, ("citizen", citizen))
        for c, weight in terms:
            acc += weight * psi_view.psi(m, ("community", c))
        numerators[m] = acc
    total = sum(numerators.values())
    if total <= 0.0:
        share = 1.0 / len(pool)
        return {m: share for m in pool}
    return {m: v / total for m, v in numerators.items()}


def _provenance_for(citizen: int, content: int, fabric, scores: ScoreSet) -> list[ProvenanceTag]:
    tags: list[ProvenanceTag] = []
    for c in fabric.member_communities(citizen):
        card = scores.get(content, ("community", c))
        if card is None or card.label not in (LABEL_BRIDGING, LABEL_DIVISIVE):
            continue
        peek = tuple(scores.balancing_for(content, ("community", c))) \
            if card.label == LABEL_DIVISIVE else ()
        tags.append(ProvenanceTag(("community", c), card.label, peek))
    own = scores.get(content, ("citizen", citizen))
    if own is not None and own.label in (LABEL_BRIDGING, LABEL_DIVISIVE):
        peek = tuple(scores.balancing_for(content, ("citizen", citizen))) \
            if own.label == LABEL_DIVISIVE else ()
        tags.append(ProvenanceTag(("citizen", citizen), own.label, peek))
    return tags


def build_feed(citizen: int, fabric, weights: Mapping[int, float], scores: ScoreSet,
               params: RankingParams, seed: int = 0, round_: int = 0) -> list[FeedEntry]:
    """Feed for one citizen: exploitation top-k plus seeded exploration slots.

    The top-k carry (1 - epsilon) of attention proportionally to their
    renormalized weights; epsilon is spread uniformly over up to k contents
    sampled from the rest of the pool. Shares always sum to 1. Entries are
    ordered by share descending, ties by content id.
    """
    ranked = sorted(weights, key=lambda m: (-weights[m], m))
    top = ranked[:params.feed_size]
    rest = ranked[params.feed_size:]
    top_total = sum(weights[m] for m in top)

    shares: dict[int, float] = {}
    epsilon = params.epsilon if rest else 0.0
    if top_total > 0:
        for m in top:
            shares[m] = (1.0 - epsilon) * weights[m] / top_total
    else:
        for m in top:
            shares[m] = (1.0 - epsilon) / len(top)
    if epsilon > 0.0:
        rng = derive_rng(seed, "explore", round_, citizen)
        n_slots = min(params.feed_size, len(rest))
        picks = sorted(rng.choice(len(rest), size=n_slots, replace=False).tolist())
        for idx in picks:
            shares[rest[idx]] = epsilon / n_slots

    entries = [FeedEntry(content=m, exposure_share=s,
                         provenance=_provenance_for(citizen, m, fabric, scores))
               for m, s in shares.items()]
    entries.sort(key=lambda e: (-e.exposure_share, e.content))
    for i, e in enumerate(entries):
        e.rank_position = i
    return entries


def feed_to_records(round_: int, citizen: int, feed: Sequence[FeedEntry]) -> list[dict]:
    """JSON-lines export shape: one record per (round, citizen, rank_position)."""
    return [{
        "round": round_,
        "citizen": citizen,
        "rank_position": e.rank_position,
        "content": e.content,
        "exposure_share": e.exposure_share,
        "provenance": [{
            "scope_kind": t.scope[0],
            "scope_id": t.scope[1],
            "kind": t.kind,
            "balancing_peek": list(t.balancing_peek),
        } for t in e.provenance],
    } for e in feed]


def seed_content(overrides: PsiOverrides, fabric, content, community: int,
                 creator: int, stake: float, params: RankingParams,
                 current_round: int, advertiser_allowances: dict[int, dict[int, float]] | None = None) -> float:
    """Spend standing (or purchased advertiser allowance) for initial prominence.

    Returns the psi override value (stake * stake_scale); a zero stake is a
    no-op. Citizens spend raw standing in the community; advertisers draw on
    the seeding allowance bought via the standing market.
    """
    if stake < 0:
        raise ValueError("stake must be >= 0")
    if stake == 0.0:
        return 0.0
    if content.creator_kind == "advertiser":
        allowances = advertiser_allowances if advertiser_allowances is not None else {}
        have = allowances.get(creator, {}).get(community, 0.0)
        if have < stake:
            raise InsufficientStanding(
                f"advertiser {creator} allowance {have:.6g} in community {community} < stake {stake:.6g}")
        allowances[creator][community] = have - stake
    else:
        citizen = fabric.citizens.get(creator)
        if citizen is None or community not in citizen.memberships:
            raise InsufficientStanding(
                f"creator {creator} is not a member of community {community}")
        fabric.update_standing(creator, community, -stake)
    psi = stake * params.stake_scale
    overrides.set(content.id, community, psi, current_round + params.seed_rounds)
    return psi
