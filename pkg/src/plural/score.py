"""Per-community and per-citizen content scoring.

Each piece of content gets, per scope, an interest level (iota), a bridging
score (beta), a divisiveness score with the blocs it is characteristic of
(delta), and the combined score psi = iota * max(beta, delta). Bridging has
three interchangeable backends: a group-aware consensus product with uniform
or square-root ("penrose") bloc weighting, and a rater/item matrix
factorization that reads the partisanship-removed intercept as the score.

A scope is ("community", id) or ("citizen", id). For citizen scopes the
citizen's communities play the role the principal subcommunities play for a
community scope.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from ._rng import derive_rng, derive_seed
from .errors import FewerThanTwoBlocs, InsufficientData

Scope = tuple[str, int]

LABEL_BRIDGING = "Bridging"
LABEL_DIVISIVE = "Divisive"
LABEL_NEITHER = "Neither"

REACTIONS_CSV_HEADER = ["citizen_id", "content_id", "round", "exposed", "reaction"]
SCORECARD_CSV_HEADER = ["content_id", "scope_kind", "scope_id", "iota", "beta",
                        "delta", "psi", "label", "characteristic_blocs"]


@dataclass
class ContentItem:
    """A post, targeted at one or more communities.

    `latent_position` is simulation ground truth used only by the generative
    model; scoring and ranking never read it.
    """

    id: int
    creator: int
    topics: set[int] = field(default_factory=set)
    created_round: int = 0
    target_communities: set[int] = field(default_factory=set)
    latent_position: Optional[np.ndarray] = None
    creator_kind: str = "citizen"          # "citizen" | "advertiser"

    def __post_init__(self) -> None:
        if not self.target_communities:
            raise ValueError("content needs at least one target community")
        if self.creator_kind not in ("citizen", "advertiser"):
            raise ValueError(f"bad creator kind {self.creator_kind!r}")


@dataclass
class Interaction:
    exposed: bool
    reaction: int      # -1, 0, +1
    round: int


class ReactionMatrix:
    """Sparse (citizen, content) -> exposure/reaction record.

    A nonzero reaction implies exposure. Re-recording refreshes the round
    (latest interaction wins).
    """

    def __init__(self) -> None:
        self._cells: dict[tuple[int, int], Interaction] = {}
        self._by_content: dict[int, set[int]] = {}
        self._by_citizen: dict[int, dict[int, Interaction]] = {}

    def __len__(self) -> int:
        return len(self._cells)

    def record_exposure(self, citizen: int, content: int, round_: int) -> None:
        cell = self._cells.get((citizen, content))
        if cell is None:
            cell = Interaction(True, 0, round_)
            self._cells[(citizen, content)] = cell
            self._by_content.setdefault(content, set()).add(citizen)
            self._by_citizen.setdefault(citizen, {})[content] = cell
        else:
            cell.exposed = True
            cell.round = max(cell.round, round_)

    def record_reaction(self, citizen: int, content: int, reaction: int, round_: int) -> None:
        if reaction not in (-1, 0, 1):
            raise ValueError("reaction must be -1, 0 or +1")
        self.record_exposure(citizen, content, round_)
        cell = self._cells[(citizen, content)]
        if reaction != 0:
            cell.reaction = reaction
            cell.round = max(cell.round, round_)

    def get(self, citizen: int, content: int) -> Optional[Interaction]:
        return self._cells.get((citizen, content))

    def has_reacted(self, citizen: int, content: int) -> bool:
        cell = self._cells.get((citizen, content))
        return cell is not None and cell.reaction != 0

    def citizens_for(self, content: int) -> set[int]:
        return self._by_content.get(content, set())

    def for_citizen(self, citizen: int) -> dict[int, Interaction]:
        """Live view of the citizen's row; do not mutate."""
        return self._by_citizen.get(citizen, {})

    def by_content(self, content: int) -> Iterator[tuple[int, Interaction]]:
        for citizen in sorted(self._by_content.get(content, ())):
            yield citizen, self._cells[(citizen, content)]

    def contents(self) -> list[int]:
        return sorted(self._by_content)

    def items(self) -> Iterator[tuple[tuple[int, int], Interaction]]:
        yield from self._cells.items()

    # CSV interchange: citizen_id, content_id, round, exposed(0/1), reaction

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REACTIONS_CSV_HEADER)
        for (citizen, content) in sorted(self._cells):
            cell = self._cells[(citizen, content)]
            w.writerow([citizen, content, cell.round, int(cell.exposed), cell.reaction])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ReactionMatrix":
        rm = cls()
        reader = csv.DictReader(io.StringIO(text))
        for row in reader:
            citizen, content = int(row["citizen_id"]), int(row["content_id"])
            round_, exposed = int(row["round"]), bool(int(row["exposed"]))
            reaction = int(row["reaction"])
            if reaction != 0 and not exposed:
                raise ValueError(f"reaction without exposure at citizen {citizen}, content {content}")
            if exposed:
                rm.record_reaction(citizen, content, reaction, round_)
        return rm

    def to_attitudes(self, row_ids: Sequence[int] | None = None,
                     col_ids: Sequence[int] | None = None):
        """Dense signed-reaction matrix for the detection pathway."""
        from .detect import AttitudeMatrix
        rows = sorted({p for p, _ in self._cells}) if row_ids is None else list(row_ids)
        cols = self.contents() if col_ids is None else list(col_ids)
        values = np.zeros((len(rows), len(cols)))
        ri = {r: i for i, r in enumerate(rows)}
        ci = {c: j for j, c in enumerate(cols)}
        for (p, m), cell in self._cells.items():
            if p in ri and m in ci:
                values[ri[p], ci[m]] = float(cell.reaction)
        return AttitudeMatrix(rows, cols, values)


@dataclass
class ScoreCard:
    """Scores for one content in one scope."""

    content: int
    scope: Scope
    iota: float
    beta: float
    delta: float
    psi: float
    characteristic_blocs: frozenset[int] = frozenset()
    label: str = LABEL_NEITHER
    low_confidence: bool = False


@dataclass
class ScoringParams:
    """Knobs for a scoring pass; defaults follow the artifact conventions."""

    backend: str = "gac_penrose"           # gac_uniform | gac_penrose | mf
    alpha: float = 1.0                      # Laplace smoothing on bloc approval rates
    label_floor: float = 0.1                # below it, neither label applies
    half_life: float = 5.0                  # rounds; interest decay
    delta_tol: float = 0.2                  # balancing-set divisiveness tolerance
    topic_overlap_required: bool = False
    popularity_only: bool = False           # baseline toggle: psi = iota
    mf_reg: float = 0.05
    mf_epochs: int = 400
    mf_lr: float = 0.05

    BACKENDS = ("gac_uniform", "gac_penrose", "mf")

    def __post_init__(self) -> None:
        if self.backend not in self.BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; valid: {', '.join(self.BACKENDS)}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.half_life <= 0:
            raise ValueError("half_life must be > 0")


# -- the scoring primitives ---------------------------------------------------

def interest(reactions: ReactionMatrix, content: int, members: Iterable[int],
             current_round: int, half_life: float) -> float:
    """Time-decayed interaction weight per member of the scope.

    Each exposure contributes 2^(-age/half_life) * (1 + 0.5*|reaction|);
    the sum is divided by the scope size, so a scope where everyone just
    reacted scores 1.5.
    """
    if half_life <= 0:
        raise ValueError("half_life must be > 0")
    members = list(members)
    if not members:
        return 0.0
    total = 0.0
    for p in members:
        cell = reactions.get(p, content)
        if cell is None or not cell.exposed:
            continue
        age = max(0, current_round - cell.round)
        total += 2.0 ** (-age / half_life) * (1.0 + 0.5 * abs(cell.reaction))
    return total / len(members)


def bloc_rates(reactions: ReactionMatrix, content: int,
               blocs: Sequence[Iterable[int]], alpha: float = 1.0) -> np.ndarray:
    """Smoothed approval rate per bloc: (pos + a) / (pos + neg + 2a).

    Blocs with no votes sit at the 0.5 prior, also in the alpha=0 mode.
    """
    rates = np.empty(len(blocs))
    for g, bloc in enumerate(blocs):
        pos = neg = 0
        for p in bloc:
            cell = reactions.get(p, content)
            if cell is None:
                continue
            if cell.reaction > 0:
                pos += 1
            elif cell.reaction < 0:
                neg += 1
        denom = pos + neg + 2.0 * alpha
        rates[g] = (pos + alpha) / denom if denom > 0 else 0.5
    return rates


def _bloc_weights(sizes: Sequence[int], weighting: str) -> np.ndarray:
    if weighting == "uniform":
        w = np.ones(len(sizes))
    elif weighting == "penrose":
        w = np.sqrt(np.asarray(sizes, dtype=float))
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return w / w.sum()


def consensus_product(rates: np.ndarray, weights: np.ndarray) -> float:
    """Weighted geometric mean of bloc rates; exact under consensus."""
    if np.all(rates == rates[0]):
        return float(rates[0])
    if np.any(rates <= 0.0):
        return 0.0
    return float(np.exp(np.sum(weights * np.log(rates))))


def bridging_gac(reactions: ReactionMatrix, content: int,
                 blocs: Sequence[Iterable[int]], weighting: str = "penrose",
                 alpha: float = 1.0) -> float:
    """Group-aware consensus bridging score in [0, 1].

    The product form means dissent in any bloc suppresses the score; penrose
    weighting gives larger blocs more, but less-than-proportional, influence.
    """
    blocs = [list(b) for b in blocs]
    if len(blocs) < 2:
        raise FewerThanTwoBlocs("bridging needs at least two blocs")
    rates = bloc_rates(reactions, content, blocs, alpha=alpha)
    weights = _bloc_weights([len(b) for b in blocs], weighting)
    return consensus_product(rates, weights)


def divisiveness(reactions: ReactionMatrix, content: int,
                 blocs: Sequence[Iterable[int]],
                 alpha: float = 1.0) -> tuple[float, frozenset[int]]:
    """Bloc approval spread and the blocs the content is characteristic of.

    Content only counts as divisive when the characteristic blocs (approval
    rate >= 0.5) form a strict, non-empty subset of the blocs.
    """
    blocs = [list(b) for b in blocs]
    if len(blocs) < 2:
        raise FewerThanTwoBlocs("divisiveness needs at least two blocs")
    rates = bloc_rates(reactions, content, blocs, alpha=alpha)
    delta = float(rates.max() - rates.min())
    characteristic = frozenset(int(g) for g in np.nonzero(rates >= 0.5)[0])
    return delta, characteristic


def community_score(iota: float, beta: float, delta: float) -> float:
    """Combined score: interest times the stronger of bridging/balancing."""
    if not (math.isfinite(iota) and math.isfinite(beta) and math.isfinite(delta)):
        raise ValueError("scores must be finite")
    if iota < 0 or not (0 <= beta <= 1) or not (0 <= delta <= 1):
        raise ValueError("iota >= 0 and beta, delta in [0, 1] required")
    return iota * max(beta, delta)


def assign_label(beta: float, delta: float, characteristic: frozenset[int],
                 n_blocs: int, label_floor: float) -> str:
    """Bridging wins ties; Divisive additionally requires a strict non-empty
    characteristic subset."""
    if beta >= delta and beta >= label_floor:
        return LABEL_BRIDGING
    if delta > beta and delta >= label_floor and 0 < len(characteristic) < n_blocs:
        return LABEL_DIVISIVE
    return LABEL_NEITHER


# -- matrix-factorization bridging ---------------------------------------------

@dataclass
class MfFit:
    """Fitted rater/item model; beta_raw is the partisanship-removed intercept."""

    beta_raw: dict[int, float]
    mu: float
    rater_bias: dict[int, float]
    item_bias: dict[int, float]
    rater_factor: dict[int, np.ndarray]
    item_factor: dict[int, np.ndarray]


def bridging_mf(reactions: ReactionMatrix, raters: Iterable[int],
                latent_dim: int = 1, reg: float = 0.05, epochs: int = 400,
                lr: float = 0.05, seed: int = 0,
                contents: Iterable[int] | None = None) -> MfFit:
    """Fit r_ui = mu + b_u + b_i + f_u . f_i on explicit votes (+1 -> 1, -1 -> 0).

    Seeded SGD with L2 regularization on the biases and factors; exposures
    without a vote are excluded. beta_raw(item) = clamp(mu + b_item, 0, 1).
    """
    raters = set(raters)
    pool = None if contents is None else set(contents)
    obs: list[tuple[int, int, float]] = []
    items: set[int] = set()
    voters: set[int] = set()
    for (p, m), cell in sorted(reactions.items()):
        if p not in raters or cell.reaction == 0:
            continue
        if pool is not None and m not in pool:
            continue
        obs.append((p, m, 1.0 if cell.reaction > 0 else 0.0))
        items.add(m)
        voters.add(p)
    if len(voters) < 2 or len(items) < 2:
        raise InsufficientData(f"mf fit needs >= 2 raters and >= 2 voted items, "
                               f"got {len(voters)} raters, {len(items)} items")

    rng = derive_rng(seed, "mf")
    r_index = {p: i for i, p in enumerate(sorted(voters))}
    i_index = {m: j for j, m in enumerate(sorted(items))}
    mu = float(np.mean([y for _, _, y in obs]))
    b_u = np.zeros(len(r_index))
    b_i = np.zeros(len(i_index))
    f_u = rng.normal(0.0, 0.1, size=(len(r_index), latent_dim))
    f_i = rng.normal(0.0, 0.1, size=(len(i_index), latent_dim))

    order = np.arange(len(obs))
    for _ in range(epochs):
        rng.shuffle(order)
        for idx in order:
            p, m, y = obs[idx]
            u, i = r_index[p], i_index[m]
            pred = mu + b_u[u] + b_i[i] + float(f_u[u] @ f_i[i])
            err = y - pred
            mu += lr * err
            b_u[u] += lr * (err - reg * b_u[u])
            b_i[i] += lr * (err - reg * b_i[i])
            fu = f_u[u].copy()
            f_u[u] += lr * (err * f_i[i] - reg * f_u[u])
            f_i[i] += lr * (err * fu - reg * f_i[i])

    beta_raw = {m: float(np.clip(mu + b_i[i_index[m]], 0.0, 1.0)) for m in i_index}
    return MfFit(
        beta_raw=beta_raw,
        mu=mu,
        rater_bias={p: float(b_u[r_index[p]]) for p in r_index},
        item_bias={m: float(b_i[i_index[m]]) for m in i_index},
        rater_factor={p: f_u[r_index[p]].copy() for p in r_index},
        item_factor={m: f_i[i_index[m]].copy() for m in i_index},
    )


# -- card assembly --------------------------------------------------------------

class ScoreSet:
    """All cards for one scoring pass, with balancing sets per scope."""

    def __init__(self) -> None:
        self.cards: dict[tuple[int, Scope], ScoreCard] = {}
        self.balancing: dict[tuple[int, Scope], list[int]] = {}

    def add(self, card: ScoreCard) -> None:
        self.cards[(card.content, card.scope)] = card

    def get(self, content: int, scope: Scope) -> Optional[ScoreCard]:
        return self.cards.get((content, scope))

    def psi(self, content: int, scope: Scope) -> float:
        card = self.cards.get((content, scope))
        return card.psi if card is not None else 0.0

    def balancing_for(self, content: int, scope: Scope) -> list[int]:
        return self.balancing.get((content, scope), [])

    def community_cards(self, community: int) -> list[ScoreCard]:
        return [c for (m, s), c in sorted(self.cards.items())
                if s == ("community", community)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCORECARD_CSV_HEADER)
        for (content, scope) in sorted(self.cards):
            c = self.cards[(content, scope)]
            w.writerow([c.content, c.scope[0], c.scope[1],
                        repr(c.iota), repr(c.beta), repr(c.delta), repr(c.psi),
                        c.label, ";".join(str(g) for g in sorted(c.characteristic_blocs))])
        return buf.getvalue()


def _card_from_rates(content: int, scope: Scope, iota: float, rates: np.ndarray,
                     sizes: Sequence[int], params: ScoringParams,
                     beta_override: float | None = None) -> ScoreCard:
    """Assemble a card from per-bloc approval rates (the one labeling path)."""
    weighting = "uniform" if params.backend == "gac_uniform" else "penrose"
    if len(sizes) >= 2:
        beta = consensus_product(rates, _bloc_weights(sizes, weighting)) \
            if beta_override is None else beta_override
        delta = float(rates.max() - rates.min())
        characteristic = frozenset(int(g) for g in np.nonzero(rates >= 0.5)[0])
        low_confidence = False
    else:
        # Degenerate structure: raw smoothed approval over the single bloc.
        beta = float(rates[0]) if len(sizes) else 0.5
        delta, characteristic = 0.0, frozenset()
        low_confidence = True
    label = assign_label(beta, delta, characteristic, max(len(sizes), 1), params.label_floor)
    psi = iota if params.popularity_only else community_score(iota, beta, delta)
    return ScoreCard(content=content, scope=scope, iota=iota, beta=beta, delta=delta,
                     psi=psi, characteristic_blocs=characteristic, label=label,
                     low_confidence=low_confidence)


def _card_from_blocs(content: int, scope: Scope, iota: float,
                     reactions: ReactionMatrix, blocs: Sequence[set[int]],
                     params: ScoringParams,
                     beta_override: float | None = None) -> ScoreCard:
    rates = bloc_rates(reactions, content, blocs, params.alpha) if blocs \
        else np.empty(0)
    return _card_from_rates(content, scope, iota, rates, [len(b) for b in blocs],
                            params, beta_override)


def score_for_community(content: ContentItem, community, reactions: ReactionMatrix,
                        params: ScoringParams, current_round: int,
                        beta_override: float | None = None) -> ScoreCard:
    """Card for one content in one community scope.

    Blocs are the community's principal subcommunities; without at least two
    of them the card falls back to the raw approval rate and is flagged
    low-confidence.
    """
    members = sorted(community.members)
    iota = interest(reactions, content.id, members, current_round, params.half_life)
    blocs = [set(g) for g in community.principal_subcommunities]
    if len(blocs) < 2:
        blocs = [set(members)] if members else []
    return _card_from_blocs(content.id, ("community", community.id), iota,
                            reactions, blocs, params, beta_override)


def citizen_score(content: ContentItem, citizen: int, fabric, reactions: ReactionMatrix,
                  params: ScoringParams, current_round: int) -> ScoreCard:
    """Card for one content scoped to a citizen.

    The citizen's communities stand in for subcommunities: bridging across
    them means the content is coherent with every facet of the citizen's
    identity, divisive means it splits them. Interest uses the singleton
    scope. With fewer than two memberships the card falls back like a
    degenerate community.
    """
    iota = interest(reactions, content.id, [citizen], current_round, params.half_life)
    comms = fabric.member_communities(citizen)
    blocs = [set(fabric.communities[c].members) for c in comms]
    return _card_from_blocs(content.id, ("citizen", citizen), iota, reactions,
                            blocs, params)


def balancing_set(scope: Scope, content: int, scores: ScoreSet,
                  catalog: dict[int, ContentItem],
                  topic_overlap_required: bool = False,
                  delta_tol: float = 0.2) -> list[int]:
    """Counterpart contents of similar divisiveness characteristic of disjoint blocs.

    Only divisive-labeled counterparts qualify; an empty result is valid
    (counterparts exist only where the scope's content allows). Sorted by
    psi descending, then content id.
    """
    base = scores.get(content, scope)
    if base is None or base.label != LABEL_DIVISIVE:
        raise ValueError(f"content {content} is not Divisive in scope {scope}")
    out: list[tuple[float, int]] = []
    for (m, s), card in scores.cards.items():
        if s != scope or m == content or card.label != LABEL_DIVISIVE:
            continue
        if abs(card.delta - base.delta) > delta_tol:
            continue
        if card.characteristic_blocs & base.characteristic_blocs:
            continue
        if topic_overlap_required:
            if not (catalog[m].topics & catalog[content].topics):
                continue
        out.append((-card.psi, m))
    out.sort()
    return [m for _, m in out]


def score_round(fabric, catalog: dict[int, ContentItem], reactions: ReactionMatrix,
                params: ScoringParams, current_round: int,
                mf_seed: int = 0) -> ScoreSet:
    """Full scoring pass: community cards for every (content, target community),
    citizen cards for every content a citizen could be served, and balancing
    sets for everything labeled Divisive.

    The mf backend fits one factorization per community and falls back to the
    penrose consensus product where its data preconditions fail. Results are
    identical to calling score_for_community / citizen_score pairwise; this
    pass just shares the per-(content, community) vote counting.
    """
    scores = ScoreSet()
    mf_fits: dict[int, MfFit | None] = {}
    if params.backend == "mf":
        for cid in sorted(fabric.communities):
            comm = fabric.communities[cid]
            try:
                mf_fits[cid] = bridging_mf(reactions, comm.members,
                                           reg=params.mf_reg, epochs=params.mf_epochs,
                                           lr=params.mf_lr,
                                           seed=derive_seed(mf_seed, "mf-community", cid))
            except InsufficientData:
                mf_fits[cid] = None

    records: dict[int, list[tuple[int, Interaction]]] = {
        mid: list(reactions.by_content(mid)) for mid in catalog}

    def community_iota(mid: int, members: set[int]) -> float:
        if not members:
            return 0.0
        total = 0.0
        for p, cell in records[mid]:
            if cell.exposed and p in members:
                age = max(0, current_round - cell.round)
                total += 2.0 ** (-age / params.half_life) * (1.0 + 0.5 * abs(cell.reaction))
        return total / len(members)

    def counts_for(mid: int, members: set[int]) -> tuple[int, int]:
        pos = neg = 0
        for p, cell in records[mid]:
            if p in members:
                if cell.reaction > 0:
                    pos += 1
                elif cell.reaction < 0:
                    neg += 1
        return pos, neg

    def smoothed(pos: int, neg: int) -> float:
        denom = pos + neg + 2.0 * params.alpha
        return (pos + params.alpha) / denom if denom > 0 else 0.5

    whole_rate_cache: dict[tuple[int, int], float] = {}

    def whole_rate(mid: int, cid: int) -> float:
        key = (mid, cid)
        if key not in whole_rate_cache:
            whole_rate_cache[key] = smoothed(*counts_for(mid, fabric.communities[cid].members))
        return whole_rate_cache[key]

    for mid in sorted(catalog):
        content = catalog[mid]
        for cid in sorted(content.target_communities):
            comm = fabric.communities.get(cid)
            if comm is None:
                continue
            iota = community_iota(mid, comm.members)
            blocs = comm.principal_subcommunities
            if len(blocs) >= 2:
                rates = np.array([smoothed(*counts_for(mid, bloc)) for bloc in blocs])
                sizes = [len(b) for b in blocs]
                override = None
                if params.backend == "mf":
                    fit = mf_fits.get(cid)
                    if fit is not None and mid in fit.beta_raw:
                        override = fit.beta_raw[mid]
                card = _card_from_rates(mid, ("community", cid), iota, rates, sizes,
                                        params, beta_override=override)
            else:
                rates = np.array([whole_rate(mid, cid)]) if comm.members else np.empty(0)
                card = _card_from_rates(mid, ("community", cid), iota, rates,
                                        [len(comm.members)] if comm.members else [], params)
            scores.add(card)

    by_community: dict[int, list[int]] = {}
    for mid in sorted(catalog):
        for cid in catalog[mid].target_communities:
            by_community.setdefault(cid, []).append(mid)

    # Citizens with identical membership signatures share everything but
    # interest, so the bloc-rate part of their cards is computed once.
    signature_cache: dict[tuple[tuple[int, ...], int], ScoreCard] = {}
    pool_cache: dict[tuple[int, ...], list[int]] = {}
    for pid in sorted(fabric.citizens):
        comms = tuple(fabric.member_communities(pid))
        if comms not in pool_cache:
            seen: set[int] = set()
            for cid in comms:
                seen.update(by_community.get(cid, ()))
            pool_cache[comms] = sorted(seen)
        row = reactions.for_citizen(pid)
        for mid in pool_cache[comms]:
            cell = row.get(mid)
            iota = 0.0
            if cell is not None and cell.exposed:
                age = max(0, current_round - cell.round)
                iota = 2.0 ** (-age / params.half_life) * (1.0 + 0.5 * abs(cell.reaction))
            proto = signature_cache.get((comms, mid))
            if proto is None:
                rates = np.array([whole_rate(mid, c) for c in comms])
                sizes = [len(fabric.communities[c].members) for c in comms]
                proto = _card_from_rates(mid, ("citizen", -1), 0.0, rates, sizes, params)
                signature_cache[(comms, mid)] = proto
            psi = iota if params.popularity_only \
                else iota * max(proto.beta, proto.delta)
            scores.add(ScoreCard(content=mid, scope=("citizen", pid), iota=iota,
                                 beta=proto.beta, delta=proto.delta, psi=psi,
                                 characteristic_blocs=proto.characteristic_blocs,
                                 label=proto.label,
                                 low_confidence=proto.low_confidence))

    for (mid, scope), card in sorted(scores.cards.items()):
        if card.label == LABEL_DIVISIVE:
            scores.balancing[(mid, scope)] = balancing_set(
                scope, mid, scores, catalog,
                topic_overlap_required=params.topic_overlap_required,
                delta_tol=params.delta_tol)
    return scores
