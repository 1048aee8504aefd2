"""The sponsorship economy: pay-per-impression settlement over feeds.

Money flows from sponsors (communities paying for coherence, subscriber
citizens paying for integrity, advertisers paying for reach) to the platform
and to content creators. Every transfer is a double-entry ledger posting, so
per-round conservation is auditable, and no account may go negative: a
sponsor that cannot cover a charge has its algorithmic weight clamped to
zero for subsequent rounds instead.

Account owners are ("citizen", id), ("community", id), ("advertiser", id),
("platform", 0) or ("creator_pool", community_id).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InsufficientFunds, NoAcceptedDeal, NotFound, Unregistered

OwnerRef = tuple[str, int]

PLATFORM: OwnerRef = ("platform", 0)

REASONS = ("ImpressionSponsorship", "Subscription", "AdImpression",
           "CreatorReward", "PlatformFee", "StandingPurchase")

LEDGER_CSV_HEADER = ["round", "from_kind", "from_id", "to_kind", "to_id", "amount", "reason"]


def creator_pool(community: int) -> OwnerRef:
    return ("creator_pool", community)


@dataclass
class LedgerEntry:
    round: int
    from_owner: OwnerRef
    to_owner: OwnerRef
    amount: float
    reason: str


class Ledger:
    """Append-only account book. Amounts are positive; entries are two-sided."""

    def __init__(self) -> None:
        self.entries: list[LedgerEntry] = []
        self._balances: dict[OwnerRef, float] = {}
        self._initial: dict[OwnerRef, float] = {}

    def open_account(self, owner: OwnerRef, balance: float = 0.0) -> None:
        if owner in self._balances:
            raise ValueError(f"account {owner} already open")
        if balance < 0:
            raise ValueError("opening balance must be >= 0")
        self._balances[owner] = balance
        self._initial[owner] = balance

    def balance(self, owner: OwnerRef) -> float:
        return self._balances.get(owner, 0.0)

    def _ensure(self, owner: OwnerRef) -> None:
        if owner not in self._balances:
            self._balances[owner] = 0.0
            self._initial[owner] = 0.0

    def post(self, round_: int, from_owner: OwnerRef, to_owner: OwnerRef,
             amount: float, reason: str) -> None:
        if amount <= 0:
            raise ValueError("ledger amounts must be > 0")
        if from_owner == to_owner:
            raise ValueError("self-transfers are not allowed")
        if reason not in REASONS:
            raise ValueError(f"unknown reason {reason!r}")
        self._ensure(from_owner)
        self._ensure(to_owner)
        if self._balances[from_owner] + 1e-12 < amount:
            raise InsufficientFunds(
                f"{from_owner} balance {self._balances[from_owner]:.6g} < {amount:.6g}")
        self._balances[from_owner] -= amount
        self._balances[to_owner] += amount
        self.entries.append(LedgerEntry(round_, from_owner, to_owner, amount, reason))

    def round_totals(self, round_: int) -> tuple[float, float]:
        debits = sum(e.amount for e in self.entries if e.round == round_)
        credits = sum(e.amount for e in self.entries if e.round == round_)
        return debits, credits

    def audit(self, tol: float = 1e-9) -> None:
        """Recompute balances from entries; check conservation and positivity."""
        recomputed = dict(self._initial)
        for e in self.entries:
            recomputed[e.from_owner] = recomputed.get(e.from_owner, 0.0) - e.amount
            recomputed[e.to_owner] = recomputed.get(e.to_owner, 0.0) + e.amount
        for owner, bal in self._balances.items():
            assert abs(bal - recomputed.get(owner, 0.0)) <= tol, \
                f"balance drift on {owner}"
            assert bal >= -tol, f"negative balance on {owner}"
        for round_ in sorted({e.round for e in self.entries}):
            debits, credits = self.round_totals(round_)
            assert abs(debits - credits) <= tol, f"round {round_} not conserved"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_CSV_HEADER)
        for e in self.entries:
            w.writerow([e.round, e.from_owner[0], e.from_owner[1],
                        e.to_owner[0], e.to_owner[1], repr(e.amount), e.reason])
        return buf.getvalue()


@dataclass
class AdDeal:
    community: int
    price_per_impression: float
    accepted: bool = False


@dataclass
class Advertiser:
    id: int
    budget: float
    deals: list[AdDeal] = field(default_factory=list)
    personal_targeting: bool = False
    personal_price: float = 0.0
    seeding_allowance: dict[int, float] = field(default_factory=dict)

    def accepted_deal_with(self, community: int) -> Optional[AdDeal]:
        for d in self.deals:
            if d.community == community and d.accepted:
                return d
        return None


@dataclass
class LambdaPolicy:
    owner: OwnerRef
    lambda_: float = 0.0
    funding: str = "SelfPaid"              # SelfPaid | AdFunded
    price_per_lambda_impression: Optional[float] = None


@dataclass
class EconParams:
    platform_fee: float = 0.3
    creator_share: float = 0.7
    default_price_per_lambda_impression: float = 0.01
    standing_reward_rate: float = 0.05

    def __post_init__(self) -> None:
        for name in ("platform_fee", "creator_share"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.platform_fee + self.creator_share > 1.0 + 1e-12:
            raise ValueError("platform_fee + creator_share must not exceed 1")
        if self.default_price_per_lambda_impression < 0 or self.standing_reward_rate < 0:
            raise ValueError("prices and rates must be >= 0")


class PolicyBook:
    """Lambda policies plus the pending changes that apply at round boundaries."""

    def __init__(self, default_price: float = 0.01) -> None:
        self.policies: dict[OwnerRef, LambdaPolicy] = {}
        self.pending: dict[OwnerRef, LambdaPolicy] = {}
        self.default_price = default_price

    def price_for(self, owner: OwnerRef) -> float:
        pol = self.policies.get(owner)
        if pol is not None and pol.price_per_lambda_impression is not None:
            return pol.price_per_lambda_impression
        return self.default_price

    def set_lambda(self, owner: OwnerRef, new_lambda: float, funding: str,
                   advertisers: Mapping[int, Advertiser], fabric) -> None:
        """Queue a weight change; it takes effect at the next round boundary.

        AdFunded owners must have at least one live advertiser arrangement:
        an accepted community deal, or for citizens an advertiser doing
        personal targeting while the citizen opts in.
        """
        if new_lambda < 0:
            raise ValueError("lambda must be >= 0")
        if funding not in ("SelfPaid", "AdFunded"):
            raise ValueError(f"unknown funding {funding!r}")
        if funding == "AdFunded":
            kind, oid = owner
            if kind == "community":
                if not any(a.accepted_deal_with(oid) for a in advertisers.values()):
                    raise NoAcceptedDeal(f"community {oid} has no accepted advertiser deal")
            elif kind == "citizen":
                citizen = fabric.citizens.get(oid)
                opted = citizen is not None and citizen.accepts_personal_ads
                if not (opted and any(a.personal_targeting for a in advertisers.values())):
                    raise NoAcceptedDeal(f"citizen {oid} has no active personal-ad arrangement")
            else:
                raise ValueError(f"{kind} cannot hold a lambda policy")
        old = self.policies.get(owner)
        price = old.price_per_lambda_impression if old else None
        self.pending[owner] = LambdaPolicy(owner, new_lambda, funding, price)

    def apply_pending(self, fabric) -> None:
        """Round boundary: copy queued weights into the live policy and fabric."""
        for owner in sorted(self.pending):
            pol = self.pending[owner]
            self.policies[owner] = pol
            kind, oid = owner
            if kind == "citizen" and oid in fabric.citizens:
                fabric.citizens[oid].lambda_ = pol.lambda_
            elif kind == "community" and oid in fabric.communities:
                fabric.communities[oid].lambda_ = pol.lambda_
        self.pending.clear()

    def clamp(self, owner: OwnerRef, fabric) -> None:
        """Zero out a sponsor that failed to pay, effective immediately for
        future rounds."""
        pol = self.policies.get(owner) or LambdaPolicy(owner)
        pol.lambda_ = 0.0
        self.policies[owner] = pol
        kind, oid = owner
        if kind == "citizen" and oid in fabric.citizens:
            fabric.citizens[oid].lambda_ = 0.0
        elif kind == "community" and oid in fabric.communities:
            fabric.communities[oid].lambda_ = 0.0


def attribute_entry(citizen: int, content: int, fabric, psi_view) -> list[tuple[OwnerRef, float]]:
    """Sponsor attribution for one feed entry.

    Each numerator term's owner gets the fraction of the entry's attention
    its term contributed. Fractions sum to 1; an all-zero numerator (uniform
    fallback or exploration slot) has no sponsors.
    """
    p = fabric.citizens[citizen]
    devotions = fabric.devotions(citizen)
    terms: list[tuple[OwnerRef, float]] = []
    own = p.lambda_ * psi_view.psi(content, ("citizen", citizen))
    if own > 0:
        terms.append((("citizen", citizen), own))
    for c in sorted(devotions):
        t = devotions[c] * fabric.communities[c].lambda_ * psi_view.psi(content, ("community", c))
        if t > 0:
            terms.append((("community", c), t))
    total = sum(v for _, v in terms)
    if total <= 0:
        return []
    return [(owner, v / total) for owner, v in terms]


def settle_round(round_: int, feeds: Mapping[int, Sequence], fabric, catalog,
                 psi_view, policies: PolicyBook, advertisers: Mapping[int, Advertiser],
                 params: EconParams, ledger: Ledger) -> list[dict]:
    """Charge sponsors for the round's attention and pay creators.

    Citizen-and-community sponsored impressions split three ways straight
    from the sponsor: platform fee (PlatformFee; Subscription when the
    sponsor is a citizen), creator share (CreatorReward), and any remainder
    into the context community's creator pool (ImpressionSponsorship).
    Advertiser-created content settles only through deal payments
    (AdImpression): advertisers pay the targeted community, and opted-in
    citizens directly, per unit of attention.

    Returns the event log (lambda clamps, skipped ad payments).
    """
    events: list[dict] = []
    clamped: set[OwnerRef] = set()

    def clamp(owner: OwnerRef) -> None:
        if owner in clamped:
            return
        policies.clamp(owner, fabric)
        clamped.add(owner)
        events.append({"round": round_, "kind": "lambda_clamped", "owner": owner})

    # static numerator coefficients per citizen (owner, lambda/devotion weight)
    term_cache: dict[int, list[tuple[OwnerRef, float]]] = {}

    def static_terms(citizen: int) -> list[tuple[OwnerRef, float]]:
        if citizen not in term_cache:
            p = fabric.citizens[citizen]
            terms: list[tuple[OwnerRef, float]] = []
            if p.lambda_ > 0:
                terms.append((("citizen", citizen), p.lambda_))
            devotions = fabric.devotions(citizen)
            for c in sorted(devotions):
                w = devotions[c] * fabric.communities[c].lambda_
                if w > 0:
                    terms.append((("community", c), w))
            term_cache[citizen] = terms
        return term_cache[citizen]

    for citizen in sorted(feeds):
        for entry in sorted(feeds[citizen], key=lambda e: e.rank_position):
            content = catalog[entry.content]
            share = entry.exposure_share
            if share <= 0:
                continue

            if content.creator_kind == "advertiser":
                adv = advertisers.get(content.creator)
                if adv is None:
                    continue
                for deal in sorted(adv.deals, key=lambda d: d.community):
                    if not deal.accepted or deal.community not in content.target_communities:
                        continue
                    comm = fabric.communities.get(deal.community)
                    if comm is None or citizen not in comm.members:
                        continue
                    amount = deal.price_per_impression * share
                    if amount <= 0:
                        continue
                    if ledger.balance(("advertiser", adv.id)) + 1e-12 < amount:
                        events.append({"round": round_, "kind": "ad_skipped",
                                       "owner": ("advertiser", adv.id)})
                        continue
                    ledger.post(round_, ("advertiser", adv.id),
                                ("community", deal.community), amount, "AdImpression")
                p = fabric.citizens[citizen]
                if adv.personal_targeting and p.accepts_personal_ads and adv.personal_price > 0:
                    amount = adv.personal_price * share
                    if ledger.balance(("advertiser", adv.id)) + 1e-12 < amount:
                        events.append({"round": round_, "kind": "ad_skipped",
                                       "owner": ("advertiser", adv.id)})
                    else:
                        ledger.post(round_, ("advertiser", adv.id),
                                    ("citizen", citizen), amount, "AdImpression")
                continue

            contributions = [(owner, w * psi_view.psi(entry.content, owner))
                             for owner, w in static_terms(citizen)]
            total = sum(v for _, v in contributions)
            if total <= 0:
                continue
            for owner, value in contributions:
                frac = value / total
                if frac <= 0:
                    continue
                kind, oid = owner
                if owner in clamped:
                    continue
                if kind == "citizen" and not fabric.citizens[oid].subscriber:
                    continue  # ad-funded-only citizens are never charged
                charge = policies.price_for(owner) * share * frac
                if charge <= 0:
                    continue
                if ledger.balance(owner) + 1e-12 < charge:
                    clamp(owner)
                    continue
                fee = params.platform_fee * charge
                reward = params.creator_share * charge
                remainder = charge - fee - reward
                pool_community = oid if kind == "community" \
                    else min(content.target_communities)
                if fee > 1e-15:
                    ledger.post(round_, owner, PLATFORM, fee,
                                "Subscription" if kind == "citizen" else "PlatformFee")
                # creators sponsoring their own impressions keep the share
                if reward > 1e-15 and owner != ("citizen", content.creator):
                    ledger.post(round_, owner, ("citizen", content.creator), reward,
                                "CreatorReward")
                if remainder > 1e-15:
                    ledger.post(round_, owner, creator_pool(pool_community), remainder,
                                "ImpressionSponsorship")
    return events


def reward_standing(scores, fabric, reward_rate: float, catalog) -> None:
    """Raise creators' raw standing by reward_rate * psi in each scoring community.

    Only citizen creators who are members of the community are rewarded;
    standings renormalize implicitly.
    """
    if reward_rate < 0:
        raise ValueError("reward_rate must be >= 0")
    if reward_rate == 0:
        return
    for (content_id, scope) in sorted(scores.cards):
        if scope[0] != "community":
            continue
        card = scores.cards[(content_id, scope)]
        if card.psi <= 0:
            continue
        content = catalog.get(content_id)
        if content is None or content.creator_kind != "citizen":
            continue
        comm = fabric.communities.get(scope[1])
        if comm is None or content.creator not in comm.members:
            continue
        fabric.update_standing(content.creator, scope[1], reward_rate * card.psi)


def sell_standing(advertiser: Advertiser, community: int, amount: float,
                  price: float, ledger: Ledger, fabric, round_: int = 0) -> None:
    """Community representatives sell seeding allowance to an advertiser.

    Requires a registered administrator and sufficient advertiser funds; the
    payment lands in the community account, the allowance on the advertiser.
    """
    comm = fabric.communities.get(community)
    if comm is None:
        raise NotFound(f"unknown community {community}")
    if not comm.admin_registered:
        raise Unregistered(f"community {community} has no registered administrator")
    if amount <= 0 or price <= 0:
        raise ValueError("amount and price must be > 0")
    if ledger.balance(("advertiser", advertiser.id)) + 1e-12 < price:
        raise InsufficientFunds(
            f"advertiser {advertiser.id} balance cannot cover {price:.6g}")
    ledger.post(round_, ("advertiser", advertiser.id), ("community", community),
                price, "StandingPurchase")
    advertiser.seeding_allowance[community] = \
        advertiser.seeding_allowance.get(community, 0.0) + amount
