"""The social fabric: a hypergraph of citizens and intersecting communities.

Citizens are nodes, communities are hyperedges, and each membership edge
carries two raw positive weights: *standing* (the member's reputation inside
the community, normalized across the community's members) and *devotion*
(how much the citizen cares about the community, normalized across the
citizen's memberships). Raw weights are stored and normalization happens on
read, so any sequence of mutations keeps both simplexes exact.

The community set is closed under intersection; intersections are
materialized lazily and kept consistent as memberships grow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import AlreadyMember, InsufficientStanding, NotFound

# Raw standing may never drop below this, keeping every normalized standing
# strictly inside (0, 1).
STANDING_FLOOR = 1e-6

# Edge weights for members of a lazily materialized intersection community.
# Devotion sits at the floor so existing feed weighting is not perturbed.
_DERIVED_RAW_STANDING = 1.0
_DERIVED_RAW_DEVOTION = 1e-6


@dataclass
class MembershipEdge:
    """One citizen-community incidence, stored as raw weights."""

    raw_standing: float
    raw_devotion: float
    opted_in: bool = True


@dataclass
class Citizen:
    id: int
    memberships: dict[int, MembershipEdge] = field(default_factory=dict)
    lambda_: float = 0.0
    subscriber: bool = False
    accepts_personal_ads: bool = False


@dataclass
class Community:
    id: int
    members: set[int] = field(default_factory=set)
    lambda_: float = 0.0
    principal_subcommunities: list[set[int]] = field(default_factory=list)
    admin_registered: bool = False
    derived_from: Optional[tuple[int, int]] = None


class SocialFabric:
    """Mutable hypergraph with simplex-normalized standing and devotion.

    Single-writer: concurrent readers may share a fabric only while no
    mutation is in flight.
    """

    def __init__(self) -> None:
        self.citizens: dict[int, Citizen] = {}
        self.communities: dict[int, Community] = {}
        self.intersection_cache: dict[tuple[int, int], int] = {}

    # -- construction plumbing ------------------------------------------------

    def add_citizen(self, lambda_: float = 0.0, subscriber: bool = False,
                    accepts_personal_ads: bool = False, citizen_id: int | None = None) -> int:
        if lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        cid = len(self.citizens) if citizen_id is None else citizen_id
        if cid in self.citizens:
            raise ValueError(f"citizen id {cid} already exists")
        self.citizens[cid] = Citizen(id=cid, lambda_=lambda_, subscriber=subscriber,
                                     accepts_personal_ads=accepts_personal_ads)
        return cid

    def add_community(self, lambda_: float = 0.0, admin_registered: bool = False,
                      derived_from: Optional[tuple[int, int]] = None,
                      community_id: int | None = None) -> int:
        if lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        cid = len(self.communities) if community_id is None else community_id
        if cid in self.communities:
            raise ValueError(f"community id {cid} already exists")
        self.communities[cid] = Community(id=cid, lambda_=lambda_,
                                          admin_registered=admin_registered,
                                          derived_from=derived_from)
        return cid

    def _citizen(self, citizen: int) -> Citizen:
        try:
            return self.citizens[citizen]
        except KeyError:
            raise NotFound(f"unknown citizen {citizen}") from None

    def _community(self, community: int) -> Community:
        try:
            return self.communities[community]
        except KeyError:
            raise NotFound(f"unknown community {community}") from None

    # -- membership mutations -------------------------------------------------

    def add_membership(self, citizen: int, community: int,
                       raw_standing: float, raw_devotion: float,
                       opted_in: bool = True) -> None:
        """Create the edge; both simplexes renormalize implicitly on read.

        New members joining communities that participate in materialized
        intersections cascade into those intersections when they belong to
        both parents.
        """
        if raw_standing <= 0 or raw_devotion <= 0:
            raise ValueError("raw weights must be > 0")
        p = self._citizen(citizen)
        c = self._community(community)
        if community in p.memberships:
            raise AlreadyMember(f"citizen {citizen} already in community {community}")
        p.memberships[community] = MembershipEdge(raw_standing, raw_devotion, opted_in)
        c.members.add(citizen)
        self._cascade_intersections(citizen, community)

    def _cascade_intersections(self, citizen: int, community: int) -> None:
        # Keep derived member sets equal to the intersection of their parents.
        for (a, b), derived in sorted(self.intersection_cache.items()):
            if community not in (a, b) or derived not in self.communities:
                continue
            other = b if community == a else a
            if citizen in self.communities[other].members and citizen not in self.communities[derived].members:
                self.add_membership(citizen, derived, _DERIVED_RAW_STANDING,
                                    _DERIVED_RAW_DEVOTION, opted_in=False)

    def intersect_communities(self, a: int, b: int) -> Optional[int]:
        """Community whose members are exactly `a ∩ b`, or None when empty.

        Materialized lazily and cached; an existing parent with the same
        member set is reused, so the operation is idempotent. Derived
        communities start economically inert (lambda 0, no admin).
        """
        ca, cb = self._community(a), self._community(b)
        if a == b:
            return a
        key = (min(a, b), max(a, b))
        if key in self.intersection_cache:
            return self.intersection_cache[key]
        common = ca.members & cb.members
        if not common:
            return None
        if common == ca.members:
            self.intersection_cache[key] = a
            return a
        if common == cb.members:
            self.intersection_cache[key] = b
            return b
        derived = self.add_community(lambda_=0.0, admin_registered=False, derived_from=key)
        self.intersection_cache[key] = derived
        for p in sorted(common):
            self.add_membership(p, derived, _DERIVED_RAW_STANDING,
                                _DERIVED_RAW_DEVOTION, opted_in=False)
        return derived

    def update_devotion(self, citizen: int, community: int, new_raw: float) -> None:
        """Set the raw devotion on an existing edge; siblings keep their order."""
        if new_raw <= 0:
            raise ValueError("raw devotion must be > 0")
        p = self._citizen(citizen)
        if community not in p.memberships:
            raise NotFound(f"citizen {citizen} has no membership in {community}")
        p.memberships[community].raw_devotion = new_raw

    def update_standing(self, citizen: int, community: int, delta_raw: float) -> None:
        """Add `delta_raw` to raw standing; spends may not cross the floor."""
        p = self._citizen(citizen)
        if community not in p.memberships:
            raise NotFound(f"citizen {citizen} has no membership in {community}")
        edge = p.memberships[community]
        new_raw = edge.raw_standing + delta_raw
        if new_raw < STANDING_FLOOR:
            raise InsufficientStanding(
                f"citizen {citizen} raw standing {edge.raw_standing:.6g} in community "
                f"{community} cannot absorb {delta_raw:.6g}")
        edge.raw_standing = new_raw

    # -- normalized reads -----------------------------------------------------

    def devotions(self, citizen: int) -> dict[int, float]:
        """Normalized devotion over the citizen's memberships (sums to 1)."""
        p = self._citizen(citizen)
        total = sum(e.raw_devotion for e in p.memberships.values())
        return {c: e.raw_devotion / total for c, e in p.memberships.items()}

    def devotion(self, citizen: int, community: int) -> float:
        d = self.devotions(citizen)
        if community not in d:
            raise NotFound(f"citizen {citizen} has no membership in {community}")
        return d[community]

    def standings(self, community: int) -> dict[int, float]:
        """Normalized standing over the community's members (sums to 1)."""
        c = self._community(community)
        raws = {p: self.citizens[p].memberships[community].raw_standing for p in c.members}
        total = sum(raws.values())
        return {p: r / total for p, r in raws.items()}

    def standing(self, citizen: int, community: int) -> float:
        s = self.standings(community)
        if citizen not in s:
            raise NotFound(f"citizen {citizen} is not a member of {community}")
        return s[citizen]

    def raw_standing(self, citizen: int, community: int) -> float:
        p = self._citizen(citizen)
        if community not in p.memberships:
            raise NotFound(f"citizen {citizen} has no membership in {community}")
        return p.memberships[community].raw_standing

    def member_communities(self, citizen: int) -> list[int]:
        """Sorted community ids the citizen belongs to."""
        return sorted(self._citizen(citizen).memberships)

    # -- audit ----------------------------------------------------------------

    def audit(self, tol: float = 1e-9) -> None:
        """Full-fabric consistency check; raises AssertionError on violation."""
        for p in self.citizens.values():
            for c in p.memberships:
                assert c in self.communities, f"dangling community {c} on citizen {p.id}"
                assert p.id in self.communities[c].members, \
                    f"asymmetric membership: citizen {p.id} lists {c}"
            if p.memberships:
                total = sum(self.devotions(p.id).values())
                assert abs(total - 1.0) <= tol, f"devotion simplex broken for citizen {p.id}"
                for v in self.devotions(p.id).values():
                    assert 0.0 < v < 1.0 or len(p.memberships) == 1, \
                        f"devotion out of (0,1) for citizen {p.id}"
        for c in self.communities.values():
            for p in c.members:
                assert p in self.citizens, f"dangling citizen {p} in community {c.id}"
                assert c.id in self.citizens[p].memberships, \
                    f"asymmetric membership: community {c.id} lists {p}"
            if c.members:
                total = sum(self.standings(c.id).values())
                assert abs(total - 1.0) <= tol, f"standing simplex broken for community {c.id}"
            if c.principal_subcommunities:
                assert 2 <= len(c.principal_subcommunities) <= 7, \
                    f"community {c.id} has {len(c.principal_subcommunities)} principal subcommunities"
                for g in c.principal_subcommunities:
                    assert g and g <= c.members, f"bad principal subcommunity in {c.id}"
            if c.derived_from is not None:
                a, b = c.derived_from
                assert c.members == self.communities[a].members & self.communities[b].members, \
                    f"intersection community {c.id} out of sync with parents {a},{b}"

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "citizens": [
                {"id": p.id, "lambda": p.lambda_, "subscriber": p.subscriber,
                 "accepts_personal_ads": p.accepts_personal_ads}
                for p in sorted(self.citizens.values(), key=lambda x: x.id)
            ],
            "communities": [
                {"id": c.id, "lambda": c.lambda_, "admin_registered": c.admin_registered,
                 "derived_from": list(c.derived_from) if c.derived_from else None,
                 "principal_subcommunities": [sorted(g) for g in c.principal_subcommunities]}
                for c in sorted(self.communities.values(), key=lambda x: x.id)
            ],
            "memberships": [
                {"citizen": p.id, "community": c,
                 "raw_standing": e.raw_standing, "raw_devotion": e.raw_devotion,
                 "opted_in": e.opted_in}
                for p in sorted(self.citizens.values(), key=lambda x: x.id)
                for c, e in sorted(p.memberships.items())
            ],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, doc: dict) -> "SocialFabric":
        fab = cls()
        for rec in doc["citizens"]:
            fab.add_citizen(lambda_=rec.get("lambda", 0.0),
                               subscriber=rec.get("subscriber", False),
                               accepts_personal_ads=rec.get("accepts_personal_ads", False),
                               citizen_id=rec["id"])
        for rec in doc["communities"]:
            derived = tuple(rec["derived_from"]) if rec.get("derived_from") else None
            cid = fab.add_community(lambda_=rec.get("lambda", 0.0),
                                       admin_registered=rec.get("admin_registered", False),
                                       derived_from=derived,
                                       community_id=rec["id"])
            fab.communities[cid].principal_subcommunities = [
                set(g) for g in rec.get("principal_subcommunities", [])]
            if derived is not None:
                fab.intersection_cache[derived] = cid
        for rec in doc["memberships"]:
            p = fab._citizen(rec["citizen"])
            c = fab._community(rec["community"])
            p.memberships[rec["community"]] = MembershipEdge(
                rec["raw_standing"], rec["raw_devotion"], rec.get("opted_in", True))
            c.members.add(rec["citizen"])
        return fab

    @classmethod
    def from_json(cls, text: str) -> "SocialFabric":
        return cls.from_dict(json.loads(text))
